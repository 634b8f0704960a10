//! Every backward pass against central finite differences in 64-bit, over
//! 20 seeds each.

mod support;

use support::grad::{cases, Case};

fn run(prefix: &str) {
    let selected: Vec<Case> = cases()
        .into_iter()
        .filter(|c| c.name.starts_with(prefix))
        .collect();
    assert!(!selected.is_empty(), "no gradient case named {prefix:?}");
    for case in selected {
        let (err, seed) = case.worst();
        assert!(
            err < case.tol,
            "{} seed {seed}: max relative error {err:e} >= {:e}",
            case.name,
            case.tol
        );
    }
}

#[test]
fn linear_matches_finite_differences() {
    run("linear");
}

#[test]
fn batchnorm_train_mode_matches_finite_differences() {
    run("batchnorm train");
}

#[test]
fn batchnorm_eval_mode_matches_finite_differences() {
    run("batchnorm eval");
}

#[test]
fn relu_matches_finite_differences() {
    run("relu");
}

#[test]
fn l2_normalize_matches_finite_differences() {
    run("l2_normalize");
}

#[test]
fn split_and_concat_match_finite_differences() {
    run("split/concat");
}

#[test]
fn head_logits_match_finite_differences() {
    for p in [
        "softmax logits",
        "label_smoothing",
        "am_softmax logits",
        "arcface logits",
    ] {
        run(p);
    }
}

#[test]
fn sim_loss_matches_finite_differences() {
    run("sim_loss");
}

#[test]
fn dual_cls_loss_matches_finite_differences_for_every_head() {
    run("dual_cls");
}

#[test]
fn kl_loss_matches_finite_differences_for_every_head() {
    run("kl ");
}

#[test]
fn total_loss_matches_finite_differences() {
    run("total ");
}

#[test]
fn rbt_network_matches_finite_differences() {
    run("rbt network");
}

#[test]
fn mlp_network_matches_finite_differences() {
    run("mlp network");
}
