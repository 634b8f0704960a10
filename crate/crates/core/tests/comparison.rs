use cmc_core::data::{generate_scenario, Preset, ScenarioSpec};
use cmc_core::eval::{run_comparison, Direction, MethodSpec};
use cmc_core::train::MethodKind;

#[test]
fn every_method_matches_the_within_model_reference_when_models_are_identical() {
    let mut spec = ScenarioSpec::preset(Preset::Similar);
    spec.gallery = spec.query.clone();
    spec.query.noise = 0.0;
    spec.gallery.noise = 0.0;
    let scenario = generate_scenario(&spec, 0).unwrap();
    let specs: Vec<MethodSpec> = MethodKind::ALL
        .iter()
        .map(|&k| MethodSpec::standard(k))
        .collect();
    let m = run_comparison(&scenario, &specs, &[1], &Direction::BOTH, false).unwrap();

    let within = m.references[0].rank1;
    assert_eq!(
        m.references[2].rank1, within,
        "untransformed cross-model rank-1"
    );
    for s in &specs {
        for d in Direction::BOTH {
            let r = m.median_rank1(&s.label, d);
            let ok = if s.plan.method == MethodKind::Unified {
                r >= within - 0.01
            } else {
                (r - within).abs() <= 0.01
            };
            assert!(
                ok,
                "{} {}: rank-1 {r:.4} vs within-model {within:.4}",
                s.label,
                d.name()
            );
        }
    }
}
