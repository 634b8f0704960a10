//! Prints scenario references and per-method rank-1 for quick calibration.
//!
//! `cargo run --release -p cmc-core --example calibrate -- [preset] [max-seed] [spec-overrides.json] [plan-overrides.json]`

use std::time::Instant;

use cmc_core::data::{calibration_summary, generate_scenario, Preset, ScenarioSpec};
use cmc_core::eval::{render_text, run_comparison, Direction, MethodSpec};
use cmc_core::train::{MethodKind, TrainPlan};

fn main() -> cmc_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = match args.first().map(String::as_str) {
        Some("similar") => Preset::Similar,
        Some("mixed") => Preset::Mixed,
        _ => Preset::Large,
    };
    let seeds: Vec<u64> = (1..=args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3)).collect();
    let spec = match args.get(2) {
        Some(o) => {
            let mut v: serde_json::Value = serde_json::from_str(o)?;
            v["preset"] = serde_json::to_value(preset)?;
            ScenarioSpec::from_json(&v.to_string())?
        }
        None => ScenarioSpec::preset(preset),
    };
    let plan_over: serde_json::Value = args
        .get(3)
        .map(|s| serde_json::from_str(s))
        .transpose()?
        .unwrap_or_else(|| serde_json::json!({}));

    let [wq, wg, cross] = calibration_summary(&spec, &[0, 1, 2])?;
    println!(
        "{}: within Q {:.3} within G {:.3} cross {:.3}",
        preset.name(),
        wq.median,
        wg.median,
        cross.median
    );
    let scenario = generate_scenario(&spec, 0)?;
    let methods: Vec<MethodSpec> = MethodKind::ALL
        .iter()
        .map(|&k| {
            let mut v = plan_over.clone();
            v["method"] = serde_json::to_value(k).unwrap();
            MethodSpec::new(k.name(), TrainPlan::from_json(&v.to_string()).unwrap().0)
        })
        .collect();
    let t = Instant::now();
    let m = run_comparison(&scenario, &methods, &seeds, &Direction::BOTH, false)?;
    println!("{}", render_text(&m));
    for c in &m.cells {
        println!(
            "  {} {} seed {} rank1 {:.4} final loss {:.4}",
            c.method,
            c.direction.name(),
            c.seed,
            c.rank1,
            c.final_loss
        );
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
