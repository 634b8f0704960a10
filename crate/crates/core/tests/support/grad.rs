//! Finite-difference checks of every backward pass, in 64-bit.

use cmc_core::heads::{build_head, total_loss, HeadConfig, HeadKind, LossWeights};
use cmc_core::kernel::gradcheck::DEFAULT_STEP;
use cmc_core::kernel::{
    batchnorm_bwd, batchnorm_fwd, concat_bwd, concat_cols, finite_diff_check, l2_normalize_bwd,
    l2_normalize_fwd, linear_bwd, linear_fwd, relu_bwd, relu_fwd, split_bwd, split_cols,
    BatchNormParams, LinearParams, Mode, Param, Tensor2,
};
use cmc_core::net::{build_transform, MlpConfig, RbtConfig, TransformConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: u64 = 20;

pub const HEADS: [HeadKind; 4] = [
    HeadKind::Softmax,
    HeadKind::LabelSmoothingSoftmax,
    HeadKind::AmSoftmax,
    HeadKind::Arcface,
];

const N: usize = 5;
const U: usize = 6;
const C: usize = 4;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor2<f64> {
    Tensor2::from_vec(rows, cols, v.to_vec()).unwrap()
}

/// `sum(R * y)`, whose gradient with respect to `y` is `R`.
fn probe(y: &Tensor2<f64>, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

pub fn linear_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = vec![
        rand_vec(&mut rng, 15),
        rand_vec(&mut rng, 10),
        rand_vec(&mut rng, 2),
    ];
    let r = rand_vec(&mut rng, 6);
    finite_diff_check(&inputs, DEFAULT_STEP, |v| {
        let x = t(3, 5, &v[0]);
        let mut p = LinearParams::from_parts(t(2, 5, &v[1]), t(1, 2, &v[2]))?;
        let y = linear_fwd(&x, &p)?;
        let dx = linear_bwd(&x, &t(3, 2, &r), &mut p)?;
        Ok((
            probe(&y, &r),
            vec![
                dx.into_vec(),
                p.weight.grad.into_vec(),
                p.bias.grad.into_vec(),
            ],
        ))
    })
    .unwrap()
    .max_rel_err
}

pub fn batchnorm_err(mode: Mode, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = vec![
        rand_vec(&mut rng, 48)
            .iter()
            .map(|v| 3.0 * v + 0.5)
            .collect(),
        rand_vec(&mut rng, 6).iter().map(|v| 1.0 + v).collect(),
        rand_vec(&mut rng, 6),
    ];
    let running_mean = rand_vec(&mut rng, 6);
    let running_var: Vec<f64> = rand_vec(&mut rng, 6).iter().map(|v| 1.5 + v).collect();
    let r = rand_vec(&mut rng, 48);
    finite_diff_check(&inputs, DEFAULT_STEP, |v| {
        let mut p = BatchNormParams::new(6);
        p.gamma = Param::new(t(1, 6, &v[1]));
        p.beta = Param::new(t(1, 6, &v[2]));
        p.running_mean = t(1, 6, &running_mean);
        p.running_var = t(1, 6, &running_var);
        let (y, cache) = batchnorm_fwd(&t(8, 6, &v[0]), &mut p, mode)?;
        let dx = batchnorm_bwd(&t(8, 6, &r), &cache, &mut p)?;
        Ok((
            probe(&y, &r),
            vec![
                dx.into_vec(),
                p.gamma.grad.into_vec(),
                p.beta.grad.into_vec(),
            ],
        ))
    })
    .unwrap()
    .max_rel_err
}

pub fn relu_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..20)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v.abs() >= 1e-3 {
                break v;
            }
        })
        .collect();
    let r = rand_vec(&mut rng, 20);
    finite_diff_check(&[x], DEFAULT_STEP, |v| {
        let x = t(4, 5, &v[0]);
        let y = relu_fwd(&x);
        let dx = relu_bwd(&x, &t(4, 5, &r))?;
        Ok((probe(&y, &r), vec![dx.into_vec()]))
    })
    .unwrap()
    .max_rel_err
}

pub fn l2_normalize_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_vec(&mut rng, 20);
    let r = rand_vec(&mut rng, 20);
    finite_diff_check(&[x], DEFAULT_STEP, |v| {
        let (y, norms) = l2_normalize_fwd(&t(4, 5, &v[0]))?;
        let dx = l2_normalize_bwd(&y, &norms, &t(4, 5, &r))?;
        Ok((probe(&y, &r), vec![dx.into_vec()]))
    })
    .unwrap()
    .max_rel_err
}

pub fn split_concat_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_vec(&mut rng, 24);
    let r = rand_vec(&mut rng, 24);
    finite_diff_check(&[x], DEFAULT_STEP, |v| {
        // scale each chunk differently so a mis-routed slice is visible
        let parts: Vec<Tensor2<f64>> = split_cols(&t(3, 8, &v[0]), 4)?
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.map(|a| a * (i as f64 + 1.0)))
            .collect();
        let y = concat_cols(&parts)?;
        let grads: Vec<Tensor2<f64>> = concat_bwd(&t(3, 8, &r), 4)?
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|a| a * (i as f64 + 1.0)))
            .collect();
        Ok((probe(&y, &r), vec![split_bwd(&grads)?.into_vec()]))
    })
    .unwrap()
    .max_rel_err
}

pub fn head_err(kind: HeadKind, seed: u64) -> f64 {
    let head = build_head::<f64>(&HeadConfig::new(kind, C, U)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = vec![
        rand_vec(&mut rng, N * U),
        rand_vec(&mut rng, C * U),
        rand_vec(&mut rng, C),
    ];
    let labels: Vec<usize> = (0..N).map(|i| (i + seed as usize) % C).collect();
    let r = rand_vec(&mut rng, N * C);
    finite_diff_check(&inputs, DEFAULT_STEP, |v| {
        let mut p = LinearParams::from_parts(t(C, U, &v[1]), t(1, C, &v[2]))?;
        let (logits, cache) = head.forward(&t(N, U, &v[0]), &labels, &p)?;
        let df = head.backward(&cache, &t(N, C, &r), &mut p)?;
        Ok((
            probe(&logits, &r),
            vec![
                df.into_vec(),
                p.weight.grad.into_vec(),
                p.bias.grad.into_vec(),
            ],
        ))
    })
    .unwrap()
    .max_rel_err
}

/// Checks `total_loss` with the given weights with respect to both branches
/// and, when a head is used, its parameters.
pub fn loss_err(kind: HeadKind, weights: LossWeights, seed: u64) -> f64 {
    let head = build_head::<f64>(&HeadConfig::new(kind, C, U)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = vec![
        rand_vec(&mut rng, N * U),
        rand_vec(&mut rng, N * U),
        rand_vec(&mut rng, C * U),
        rand_vec(&mut rng, C),
    ];
    let labels: Vec<usize> = (0..N).map(|i| (2 * i + seed as usize) % C).collect();
    let use_head = weights.needs_head();
    finite_diff_check(&inputs, DEFAULT_STEP, |v| {
        let mut p = LinearParams::from_parts(t(C, U, &v[2]), t(1, C, &v[3]))?;
        let h = use_head.then_some((head.as_ref(), &mut p));
        let l = total_loss(h, &t(N, U, &v[0]), &t(N, U, &v[1]), &labels, &weights)?;
        Ok((
            l.total,
            vec![
                l.grad_q.into_vec(),
                l.grad_g.into_vec(),
                p.weight.grad.into_vec(),
                p.bias.grad.into_vec(),
            ],
        ))
    })
    .unwrap()
    .max_rel_err
}

pub fn net_err(config: TransformConfig, rows: usize, seed: u64) -> f64 {
    let mut net = build_transform::<f64>(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let (din, dout) = (config.in_dim(), config.out_dim());
    let mut inputs = vec![rand_vec(&mut rng, rows * din)];
    // perturb the init so batchnorm gamma/beta are not all constant
    inputs.extend(net.param_values().into_iter().map(|b| {
        b.iter()
            .map(|v| v + 0.1 * rng.random_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    }));
    let r = rand_vec(&mut rng, rows * dout);
    finite_diff_check(&inputs, DEFAULT_STEP, |v| {
        net.set_param_values(&v[1..])?;
        net.zero_grad();
        let y = net.forward(&t(rows, din, &v[0]), Mode::Train)?;
        let dx = net.backward(&t(rows, dout, &r))?;
        let mut grads = vec![dx.into_vec()];
        grads.extend(net.param_grads());
        Ok((probe(&y, &r), grads))
    })
    .unwrap()
    .max_rel_err
}

pub fn rbt_config(extra_relu: bool) -> RbtConfig {
    RbtConfig {
        in_dim: if extra_relu { 8 } else { 6 },
        unified_dim: 8,
        num_blocks: if extra_relu { 1 } else { 2 },
        num_paths: 4,
        bottleneck: if extra_relu { 2 } else { 3 },
        stem_relu: extra_relu,
        post_add_relu: extra_relu,
        path_gamma_init: 1.0,
    }
}

pub fn mlp_config() -> MlpConfig {
    MlpConfig {
        in_dim: 5,
        out_dim: 4,
        hidden_layers: 2,
        hidden_width: 7,
    }
}

pub struct Case {
    pub name: String,
    pub tol: f64,
    pub check: Box<dyn Fn(u64) -> f64>,
}

impl Case {
    fn new(name: impl Into<String>, tol: f64, check: impl Fn(u64) -> f64 + 'static) -> Self {
        Self {
            name: name.into(),
            tol,
            check: Box::new(check),
        }
    }

    /// Largest relative error over all seeds and the seed it came from.
    pub fn worst(&self) -> (f64, u64) {
        (0..SEEDS)
            .map(|s| ((self.check)(s), s))
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

pub fn cases() -> Vec<Case> {
    let mut v = vec![
        Case::new("linear", 1e-6, linear_err),
        Case::new("batchnorm train", 1e-5, |s| batchnorm_err(Mode::Train, s)),
        Case::new("batchnorm eval", 1e-5, |s| batchnorm_err(Mode::Eval, s)),
        Case::new("relu", 1e-6, relu_err),
        Case::new("l2_normalize", 1e-5, l2_normalize_err),
        Case::new("split/concat", 1e-6, split_concat_err),
        Case::new("sim_loss", 1e-5, |s| {
            loss_err(HeadKind::Softmax, LossWeights::new(1.0, 0.0, 0.0), s)
        }),
    ];
    for kind in HEADS {
        v.push(Case::new(
            format!("{} logits", kind.name()),
            1e-5,
            move |s| head_err(kind, s),
        ));
        v.push(Case::new(
            format!("dual_cls {}", kind.name()),
            1e-5,
            move |s| loss_err(kind, LossWeights::new(0.0, 1.0, 0.0), s),
        ));
        v.push(Case::new(format!("kl {}", kind.name()), 1e-5, move |s| {
            loss_err(kind, LossWeights::new(0.0, 0.0, 1.0), s)
        }));
        v.push(Case::new(
            format!("total {}", kind.name()),
            1e-5,
            move |s| loss_err(kind, LossWeights::default(), s),
        ));
    }
    v.push(Case::new("rbt network", 1e-5, |s| {
        net_err(TransformConfig::Rbt(rbt_config(false)), 6, s)
    }));
    v.push(Case::new("rbt network + relu", 1e-5, |s| {
        net_err(TransformConfig::Rbt(rbt_config(true)), 6, s)
    }));
    v.push(Case::new("mlp network", 1e-5, |s| {
        net_err(TransformConfig::Mlp(mlp_config()), 4, s)
    }));
    v
}
