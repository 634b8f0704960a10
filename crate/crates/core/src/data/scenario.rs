//! Synthetic pairs of "embedding models" for desk-scale experiments.
//!
//! Each identity `c` has a latent `z_c ~ N(0, I_k)`. A sample of identity `y`
//! draws `u = [z_y + spread * e ; nuisance_scale * v]` with `e, v` standard
//! normal; the nuisance part is shared by both models but carries no identity
//! information. A model with projection `A` (seeded, entries `N(0, 1/dim(u))`)
//! and nonlinearity `nl` emits `normalize(nl(gain * A u)) + noise * n / sqrt(d)`
//! with `n ~ N(0, I_d)` drawn independently per model.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::emb_io::{load_embeddings, save_embeddings};
use super::embedding::{EmbeddingSet, PairedDataset};
use crate::error::{Error, Result};
use crate::eval::{rank1_between, Summary};
use crate::kernel::{Tensor2, NORM_FLOOR};

/// Within-model rank-1 below this marks the spec as degenerate.
pub const DEGENERATE_RANK1: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Tanh,
    Relu,
    None,
}

impl Nonlinearity {
    fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => v.tanh(),
            Nonlinearity::Relu => v.max(0.0),
            Nonlinearity::None => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftLevel {
    Similar,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Similar,
    Large,
    /// Large shift with a 96-d query model and a 64-d gallery model.
    Mixed,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Similar => "similar",
            Preset::Large => "large",
            Preset::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelGenerator {
    pub projection_seed: u64,
    pub nonlinearity: Nonlinearity,
    pub output_dim: usize,
    pub noise: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub preset: Preset,
    pub shift: ShiftLevel,
    pub latent_dim: usize,
    pub train_classes: usize,
    pub eval_classes: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub nuisance_dim: usize,
    pub nuisance_scale: f64,
    pub query: ModelGenerator,
    pub gallery: ModelGenerator,
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl ScenarioSpec {
    pub fn preset(p: Preset) -> Self {
        let model = |seed, nl, dim| ModelGenerator {
            projection_seed: seed,
            nonlinearity: nl,
            output_dim: dim,
            noise: 0.0,
            gain: 1.0,
        };
        let mut spec = Self {
            preset: p,
            shift: ShiftLevel::Large,
            latent_dim: 32,
            train_classes: 200,
            eval_classes: 100,
            samples_per_class: 20,
            spread: 0.0,
            nuisance_dim: 0,
            nuisance_scale: 0.0,
            query: model(11, Nonlinearity::Tanh, 64),
            gallery: model(23, Nonlinearity::Relu, 64),
        };
        calibrated_constants(&mut spec, p);
        match p {
            Preset::Similar => {
                spec.shift = ShiftLevel::Similar;
                spec.gallery.nonlinearity = Nonlinearity::Tanh;
            }
            Preset::Large => {}
            Preset::Mixed => spec.query.output_dim = 96,
        }
        spec
    }

    /// Parses a JSON spec, filling every missing field from the preset named
    /// by its `preset` key (default `large`).
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        if !user.is_object() {
            return Err(Error::Config("scenario spec must be a JSON object".into()));
        }
        let preset = match user.get("preset") {
            None => Preset::Large,
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Config(format!("preset: {e}")))?,
        };
        let mut base = serde_json::to_value(Self::preset(preset))?;
        merge(&mut base, &user);
        let spec: Self = serde_json::from_value(base)
            .map_err(|e| Error::Config(format!("scenario spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("{field}: {msg}")));
        if self.latent_dim == 0 {
            return bad("latent_dim", "must be at least 1");
        }
        if self.train_classes < 2 {
            return bad("train_classes", "must be at least 2");
        }
        if self.eval_classes < 2 {
            return bad("eval_classes", "must be at least 2");
        }
        if self.samples_per_class < 2 {
            return bad("samples_per_class", "must be at least 2");
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return bad("spread", "must be finite and nonnegative");
        }
        if !(self.nuisance_scale >= 0.0 && self.nuisance_scale.is_finite()) {
            return bad("nuisance_scale", "must be finite and nonnegative");
        }
        for (side, m) in [("query", &self.query), ("gallery", &self.gallery)] {
            if m.output_dim == 0 {
                return bad(&format!("{side}.output_dim"), "must be at least 1");
            }
            if !(m.noise >= 0.0 && m.noise.is_finite()) {
                return bad(&format!("{side}.noise"), "must be finite and nonnegative");
            }
            if !(m.gain > 0.0 && m.gain.is_finite()) {
                return bad(&format!("{side}.gain"), "must be finite and positive");
            }
        }
        let classes = self.train_classes + self.eval_classes;
        if u32::try_from(classes).is_err() {
            return bad("train_classes", "too many identities");
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        self.preset.name()
    }
}

/// Values fixed by the calibration run: similar regime within-model rank-1
/// at least 0.9 per side, large regime untransformed cross-model rank-1 at
/// most 0.2.
fn calibrated_constants(spec: &mut ScenarioSpec, p: Preset) {
    spec.nuisance_dim = 16;
    spec.query.gain = 1.0;
    spec.gallery.gain = 1.0;
    match p {
        Preset::Similar => {
            spec.spread = 0.35;
            spec.nuisance_scale = 0.5;
            spec.query.noise = 0.05;
            spec.gallery.noise = 0.1;
        }
        Preset::Large | Preset::Mixed => {
            spec.spread = 0.45;
            spec.nuisance_scale = 1.0;
            spec.query.noise = 0.1;
            spec.gallery.noise = 0.3;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetadata {
    pub spec: ScenarioSpec,
    pub seed: u64,
    pub within_query_rank1: f64,
    pub within_gallery_rank1: f64,
    /// Untransformed cross-model rank-1, when the dimensions agree.
    pub cross_rank1: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: PairedDataset,
    pub eval: PairedDataset,
    pub metadata: ScenarioMetadata,
}

fn projection(m: &ModelGenerator, in_dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(m.projection_seed);
    let std = (in_dim as f64).sqrt().recip();
    (0..m.output_dim * in_dim)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn embed(
    m: &ModelGenerator,
    a: &[f64],
    u: &[f64],
    noise_rng: &mut ChaCha8Rng,
    out: &mut Vec<f32>,
) -> Result<()> {
    let k = u.len();
    let h: Vec<f64> = (0..m.output_dim)
        .map(|r| {
            let row = &a[r * k..(r + 1) * k];
            m.nonlinearity
                .apply(m.gain * row.iter().zip(u).map(|(w, x)| w * x).sum::<f64>())
        })
        .collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > NORM_FLOOR) {
        return Err(Error::Numeric(format!(
            "generated a zero embedding (norm {norm:e}); change the projection seed"
        )));
    }
    let ns = m.noise / (m.output_dim as f64).sqrt();
    for v in h {
        let eta: f64 = noise_rng.sample(StandardNormal);
        out.push((v / norm + ns * eta) as f32);
    }
    Ok(())
}

/// Generates the train and evaluation pairs. A pure function of
/// `(spec, seed)`.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let k = spec.latent_dim;
    let in_dim = k + spec.nuisance_dim;
    let aq = projection(&spec.query, in_dim);
    let ag = projection(&spec.gallery, in_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_q = ChaCha8Rng::seed_from_u64(seed);
    noise_q.set_stream(1);
    let mut noise_g = ChaCha8Rng::seed_from_u64(seed);
    noise_g.set_stream(2);

    let classes = spec.train_classes + spec.eval_classes;
    let latents: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..k).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    let mut build = |range: std::ops::Range<usize>| -> Result<PairedDataset> {
        let n = range.len() * spec.samples_per_class;
        let mut q = Vec::with_capacity(n * spec.query.output_dim);
        let mut g = Vec::with_capacity(n * spec.gallery.output_dim);
        let mut labels = Vec::with_capacity(n);
        let mut u = vec![0.0; in_dim];
        for c in range {
            for _ in 0..spec.samples_per_class {
                for (j, slot) in u.iter_mut().enumerate() {
                    let e: f64 = rng.sample(StandardNormal);
                    *slot = if j < k {
                        latents[c][j] + spec.spread * e
                    } else {
                        spec.nuisance_scale * e
                    };
                }
                embed(&spec.query, &aq, &u, &mut noise_q, &mut q)?;
                embed(&spec.gallery, &ag, &u, &mut noise_g, &mut g)?;
                labels.push(c as u32);
            }
        }
        PairedDataset::new(
            EmbeddingSet::new(
                Tensor2::from_vec(n, spec.query.output_dim, q)?,
                labels.clone(),
                "query",
            )?,
            EmbeddingSet::new(
                Tensor2::from_vec(n, spec.gallery.output_dim, g)?,
                labels,
                "gallery",
            )?,
        )
    };
    let train = build(0..spec.train_classes)?;
    let eval = build(spec.train_classes..classes)?;

    let within_query_rank1 = rank1_between(&eval.fq, &eval.fq)?.value;
    let within_gallery_rank1 = rank1_between(&eval.fg, &eval.fg)?.value;
    let cross_rank1 = if eval.fq.dim() == eval.fg.dim() {
        Some(rank1_between(&eval.fq, &eval.fg)?.value)
    } else {
        None
    };
    let mut warnings = Vec::new();
    for (side, r) in [
        ("query", within_query_rank1),
        ("gallery", within_gallery_rank1),
    ] {
        if r < DEGENERATE_RANK1 {
            warnings.push(format!(
                "degenerate spec: within-model rank-1 of the {side} model is {r:.3} (< {DEGENERATE_RANK1})"
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Scenario {
        train,
        eval,
        metadata: ScenarioMetadata {
            spec: spec.clone(),
            seed,
            within_query_rank1,
            within_gallery_rank1,
            cross_rank1,
            warnings,
        },
    })
}

pub const SCENARIO_FILES: [&str; 4] = ["train_q.emb", "train_g.emb", "eval_q.emb", "eval_g.emb"];
pub const SCENARIO_META: &str = "scenario.json";

impl Scenario {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sets = [&self.train.fq, &self.train.fg, &self.eval.fq, &self.eval.fg];
        for (name, s) in SCENARIO_FILES.iter().zip(sets) {
            save_embeddings(s, dir.join(name))?;
        }
        let meta = dir.join(SCENARIO_META);
        fs::write(&meta, serde_json::to_vec_pretty(&self.metadata)?)
            .map_err(|e| Error::io(&meta, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let [tq, tg, eq, eg] = SCENARIO_FILES.map(|n| load_embeddings(dir.join(n)));
        let meta = dir.join(SCENARIO_META);
        let text = fs::read(&meta).map_err(|e| Error::io(&meta, e))?;
        Ok(Self {
            train: PairedDataset::new(tq?, tg?)?,
            eval: PairedDataset::new(eq?, eg?)?,
            metadata: serde_json::from_slice(&text)?,
        })
    }

    pub fn name(&self) -> &'static str {
        self.metadata.spec.name()
    }
}

/// Median within/cross rank-1 over several generator seeds, for calibration
/// reports.
pub fn calibration_summary(spec: &ScenarioSpec, seeds: &[u64]) -> Result<[Summary; 3]> {
    let mut wq = Vec::new();
    let mut wg = Vec::new();
    let mut cross = Vec::new();
    for &s in seeds {
        let m = generate_scenario(spec, s)?.metadata;
        wq.push(m.within_query_rank1);
        wg.push(m.within_gallery_rank1);
        cross.push(m.cross_rank1.unwrap_or(f64::NAN));
    }
    Ok([Summary::of(&wq), Summary::of(&wg), Summary::of(&cross)])
}
