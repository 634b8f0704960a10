use std::path::{Path, PathBuf};

use anyhow::Result;
use cmc_core::data::{
    generate_scenario, load_checkpoint, load_embeddings, save_checkpoint, EmbeddingSet,
    PairedDataset, Scenario, ScenarioSpec, SCENARIO_FILES, SCENARIO_META,
};
use cmc_core::eval::{
    mean_average_precision, rank1_identification, render_csv, render_text, run_ablation,
    run_comparison, ComparisonMatrix, Direction, IdentificationTask, MethodSpec, MetricKind,
};
use cmc_core::train::{train as train_pair, MethodKind, TrainOutcome, TrainPlan};
use cmc_core::Error;
use serde_json::json;

use crate::args::{AblateArgs, CompareArgs, EvalArgs, GenerateArgs, GlobalArgs, TrainArgs};
use crate::manifest::{write_text, Manifest};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

/// The plan in `path` (defaults when absent) and whether it set a head.
fn load_plan(path: Option<&Path>) -> Result<(TrainPlan, bool)> {
    let text = match path {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    Ok(TrainPlan::from_json(&text)?)
}

fn warn_ignored_head(method: MethodKind, explicit_head: bool) {
    if explicit_head && method != MethodKind::Unified {
        log::warn!(
            "{} optimizes the similarity loss only; the plan's head configuration is ignored",
            method.name()
        );
    }
}

/// `dir/model.cmck` -> `dir/model.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn generate(g: &GlobalArgs, a: &GenerateArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => ScenarioSpec::from_json(&read_text(p)?)?,
        None => ScenarioSpec::preset(a.preset.into()),
    };
    spec.validate()?;
    let seed = g.seed.unwrap_or(0);
    let scenario = generate_scenario(&spec, seed)?;
    let dir = a.out.clone().unwrap_or_else(|| g.out_dir.clone());
    scenario.save(&dir)?;
    let md = &scenario.metadata;
    println!(
        "{}: within-model rank-1 Q {:.4} G {:.4}, untransformed cross-model rank-1 {}",
        spec.name(),
        md.within_query_rank1,
        md.within_gallery_rank1,
        md.cross_rank1
            .map_or("n/a (dims differ)".to_string(), |v| format!("{v:.4}"))
    );

    let mut m = Manifest::new("generate", g, a)?;
    m.seed = Some(seed);
    m.config = serde_json::to_value(&spec)?;
    m.outputs = SCENARIO_FILES
        .iter()
        .chain(std::iter::once(&SCENARIO_META))
        .map(|f| dir.join(f))
        .collect();
    m.write(&dir.join("manifest.json"))
}

pub fn train(g: &GlobalArgs, a: &TrainArgs) -> Result<()> {
    let (mut plan, explicit_head) = load_plan(a.plan.as_deref())?;
    if let Some(method) = a.method {
        plan.method = method;
    }
    if let Some(seed) = g.seed {
        plan.seed = seed;
    }
    plan.validate()?;
    warn_ignored_head(plan.method, explicit_head);

    let data = PairedDataset::new(load_embeddings(&a.query)?, load_embeddings(&a.gallery)?)?;
    log::info!(
        "training {} on {} pairs ({} -> {} dims), {} epochs",
        plan.method.name(),
        data.n(),
        data.fq.dim(),
        data.fg.dim(),
        plan.total_epochs
    );
    let out = train_pair(&data, &plan)?;
    if let Some(last) = out.history.last() {
        println!(
            "{}: {} epochs, final loss {:.5} (sim {:.5}, cls {:.5}, kl {:.5}), unified dim {}",
            plan.method.name(),
            out.history.epochs.len(),
            last.total,
            last.sim,
            last.cls,
            last.kl,
            out.unified_dim()
        );
    }

    let ckpt = a
        .out
        .clone()
        .unwrap_or_else(|| g.out_dir.join("model.cmck"));
    if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    save_checkpoint(&out.to_checkpoint(), &ckpt)?;
    let history = sibling(&ckpt, "history.jsonl");
    out.history.write_jsonl(&history)?;
    log::info!("wrote {} and {}", ckpt.display(), history.display());

    let mut m = Manifest::new("train", g, a)?;
    m.seed = Some(plan.seed);
    m.config = serde_json::to_value(&out.plan)?;
    m.outputs = vec![ckpt.clone(), history];
    m.write(&sibling(&ckpt, "manifest.json"))
}

fn check_dim(what: &str, set: &EmbeddingSet, expected: usize, u: Option<usize>) -> Result<()> {
    if set.dim() == expected {
        return Ok(());
    }
    let msg = match u {
        Some(u) => format!(
            "{what} has dim {}, but the checkpoint expects {expected} (its unified dim U is {u})",
            set.dim()
        ),
        None => format!(
            "{what} has dim {}, but without a checkpoint it must match the probe dim {expected}",
            set.dim()
        ),
    };
    Err(Error::Config(msg).into())
}

pub fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let outcome = match &a.ckpt {
        Some(p) => Some(TrainOutcome::from_checkpoint(load_checkpoint(p)?)?),
        None => None,
    };
    let probe = load_embeddings(&a.probe)?;
    let gallery = load_embeddings(&a.gallery)?;
    let distractors = a.distractors.as_deref().map(load_embeddings).transpose()?;

    let (pq, pg, pd, method) = match &outcome {
        Some(o) => {
            let u = Some(o.unified_dim());
            check_dim("probe set", &probe, o.tq.in_dim(), u)?;
            check_dim("gallery set", &gallery, o.tg.in_dim(), u)?;
            if let Some(d) = &distractors {
                check_dim("distractor set", d, o.tg.in_dim(), u)?;
            }
            (
                o.transform_query(&probe)?,
                o.transform_gallery(&gallery)?,
                distractors
                    .as_ref()
                    .map(|d| o.transform_gallery(d))
                    .transpose()?,
                o.plan.method.name().to_string(),
            )
        }
        None => {
            check_dim("gallery set", &gallery, probe.dim(), None)?;
            if let Some(d) = &distractors {
                check_dim("distractor set", d, probe.dim(), None)?;
            }
            (
                probe.clone(),
                gallery.clone(),
                distractors.clone(),
                "identity".to_string(),
            )
        }
    };

    let report = match a.metric {
        MetricKind::Rank1 => rank1_identification(&IdentificationTask {
            probes: pq,
            gallery_true: pg,
            distractors: pd,
        })?,
        MetricKind::MeanAp => {
            let full = match &pd {
                Some(d) => pg.concat(d)?,
                None => pg,
            };
            mean_average_precision(&pq, &full)?
        }
    };
    let report = report.labeled(&method, &a.probe.display().to_string(), None);
    println!("{} {:.6}", report.metric.name(), report.value);

    let out = g.out_dir.join("eval.json");
    write_text(&out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let mut m = Manifest::new("eval", g, a)?;
    m.config = json!({ "method": method, "metric": a.metric });
    m.outputs = vec![out];
    m.write(&g.out_dir.join("eval.manifest.json"))
}

fn write_matrix(g: &GlobalArgs, name: &str, matrix: &ComparisonMatrix) -> Result<Vec<PathBuf>> {
    let text = render_text(matrix);
    println!("{text}");
    let paths = [
        g.out_dir.join(format!("{name}.json")),
        g.out_dir.join(format!("{name}.csv")),
        g.out_dir.join(format!("{name}.txt")),
    ];
    write_text(&paths[0], &(serde_json::to_string_pretty(matrix)? + "\n"))?;
    write_text(&paths[1], &render_csv(matrix))?;
    write_text(&paths[2], &text)?;
    Ok(paths.to_vec())
}

fn warn_seed_flag(g: &GlobalArgs) {
    if g.seed.is_some() {
        log::warn!("--seed is ignored here; training seeds come from --seeds");
    }
}

pub fn compare(g: &GlobalArgs, a: &CompareArgs) -> Result<()> {
    warn_seed_flag(g);
    let (base, explicit_head) = load_plan(a.plan.as_deref())?;
    let scenario = Scenario::load(&a.scenario)?;
    let specs: Vec<MethodSpec> = a
        .methods
        .iter()
        .map(|&k| {
            warn_ignored_head(k, explicit_head);
            MethodSpec::new(
                k.name(),
                TrainPlan {
                    method: k,
                    ..base.clone()
                },
            )
        })
        .collect();
    let matrix = run_comparison(&scenario, &specs, &a.seeds, &Direction::BOTH, a.map)?;
    let mut m = Manifest::new("compare", g, a)?;
    m.config = json!({ "scenario": scenario.metadata.spec, "methods": specs });
    m.outputs = write_matrix(g, "compare", &matrix)?;
    m.write(&g.out_dir.join("compare.manifest.json"))
}

pub fn ablate(g: &GlobalArgs, a: &AblateArgs) -> Result<()> {
    warn_seed_flag(g);
    let (base, _) = load_plan(a.plan.as_deref())?;
    let scenario = Scenario::load(&a.scenario)?;
    let matrix = run_ablation(&scenario, &base, &a.seeds)?;
    let mut m = Manifest::new("ablate", g, a)?;
    m.config = json!({
        "scenario": scenario.metadata.spec,
        "methods": cmc_core::eval::ablation_plans(&base),
    });
    m.outputs = write_matrix(g, "ablate", &matrix)?;
    m.write(&g.out_dir.join("ablate.manifest.json"))
}
