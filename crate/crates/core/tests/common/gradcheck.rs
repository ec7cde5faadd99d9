//! Central finite-difference gradient checks over the tensor engine.

use pucknet::tensor::{BatchNormMode, BatchStats, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: usize = 20;

/// Builds an op's output from parameter leaves.
pub type Build<'a> = &'a dyn Fn(&mut Graph, &[Var]) -> Var;

/// Scalar `Σ out ⊙ r` for a fixed random projection `r`.
fn project(g: &mut Graph, out: Var, r: &[f64]) -> Var {
    let shape = g.value(out).shape().to_vec();
    let rv = g.constant(Tensor::new(shape, r.to_vec()).unwrap());
    let prod = g.mul(out, rv).unwrap();
    g.sum(prod)
}

fn evaluate(build: Build, inputs: &[Tensor], r: &[f64]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    let loss = project(&mut g, out, r);
    g.value(loss).item().unwrap()
}

/// Worst relative error between analytic and numeric gradients over all inputs.
pub fn max_rel_error(build: Build, inputs: &[Tensor], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    let r: Vec<f64> = (0..g.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = project(&mut g, out, &r);
    g.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let mut numeric = vec![0.0; analytic.len()];
        for j in 0..analytic.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= STEP;
            numeric[j] = (evaluate(build, &plus, &r) - evaluate(build, &minus, &r)) / (2.0 * STEP);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = if scale < 1e-12 { diff } else { diff / scale };
        worst = worst.max(rel);
    }
    worst
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero so ReLU kinks stay outside the FD stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// One named op family and its worst error over [`INSTANCES`] random cases.
pub struct OpResult {
    pub name: &'static str,
    pub worst: f64,
    pub instances: usize,
}

pub fn check_all_ops(base_seed: u64) -> Vec<OpResult> {
    let mut results = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn(&mut ChaCha8Rng, u64) -> f64| {
        let mut worst: f64 = 0.0;
        for i in 0..INSTANCES {
            let seed = base_seed.wrapping_mul(1000).wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            worst = worst.max(f(&mut rng, seed));
        }
        results.push(OpResult {
            name,
            worst,
            instances: INSTANCES,
        });
    };

    run("conv2d", &|rng, seed| {
        let k = rng.gen_range(1..=3);
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..=1);
        let (n, cin, cout) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(k..=5), rng.gen_range(k..=5));
        let inputs = vec![
            random_tensor(rng, &[n, cin, h, w]),
            random_tensor(rng, &[cout, cin, k, k]),
            random_tensor(rng, &[cout]),
        ];
        max_rel_error(&move |g, v| g.conv2d(v[0], v[1], v[2], stride, pad).unwrap(), &inputs, seed)
    });

    run("conv_transpose2d", &|rng, seed| {
        let k = rng.gen_range(1..=3);
        let stride = rng.gen_range(1..=2);
        let pad = if k > 1 { rng.gen_range(0..=1) } else { 0 };
        let (n, cin, cout) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let inputs = vec![
            random_tensor(rng, &[n, cin, h, w]),
            random_tensor(rng, &[cin, cout, k, k]),
            random_tensor(rng, &[cout]),
        ];
        max_rel_error(
            &move |g, v| g.conv_transpose2d(v[0], v[1], v[2], stride, pad).unwrap(),
            &inputs,
            seed,
        )
    });

    run("batch_norm2d/train", &|rng, seed| {
        let (n, c) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(1..=3), rng.gen_range(2..=3));
        let inputs = vec![
            random_tensor(rng, &[n, c, h, w]),
            random_tensor(rng, &[c]),
            random_tensor(rng, &[c]),
        ];
        max_rel_error(
            &move |g, v| {
                let mut stats = BatchStats::new(c);
                g.batch_norm2d(
                    v[0],
                    v[1],
                    v[2],
                    1e-5,
                    BatchNormMode::Train {
                        running: &mut stats,
                        momentum: 0.1,
                    },
                )
                .unwrap()
            },
            &inputs,
            seed,
        )
    });

    run("batch_norm2d/eval", &|rng, seed| {
        let (n, c) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let inputs = vec![
            random_tensor(rng, &[n, c, 2, 3]),
            random_tensor(rng, &[c]),
            random_tensor(rng, &[c]),
        ];
        let stats = BatchStats {
            mean: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            var: (0..c).map(|_| rng.gen_range(0.5..2.0)).collect(),
        };
        max_rel_error(
            &move |g, v| {
                g.batch_norm2d(v[0], v[1], v[2], 1e-5, BatchNormMode::Eval { running: &stats })
                    .unwrap()
            },
            &inputs,
            seed,
        )
    });

    run("relu", &|rng, seed| {
        let inputs = vec![away_from_zero(rng, &[2, 3, 2, 2])];
        max_rel_error(&|g, v| g.relu(v[0]), &inputs, seed)
    });

    run("add", &|rng, seed| {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=4)];
        let inputs = vec![random_tensor(rng, &shape), random_tensor(rng, &shape)];
        max_rel_error(&|g, v| g.add(v[0], v[1]).unwrap(), &inputs, seed)
    });

    run("mul", &|rng, seed| {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=4)];
        let inputs = vec![random_tensor(rng, &shape), random_tensor(rng, &shape)];
        max_rel_error(&|g, v| g.mul(v[0], v[1]).unwrap(), &inputs, seed)
    });

    run("avg_pool2", &|rng, seed| {
        let shape = [rng.gen_range(1..=2), rng.gen_range(1..=2), 2 * rng.gen_range(1..=2), 4];
        let inputs = vec![random_tensor(rng, &shape)];
        max_rel_error(&|g, v| g.avg_pool2(v[0]).unwrap(), &inputs, seed)
    });

    run("global_avg_pool", &|rng, seed| {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3), 2];
        let inputs = vec![random_tensor(rng, &shape)];
        max_rel_error(&|g, v| g.global_avg_pool(v[0]).unwrap(), &inputs, seed)
    });

    run("linear", &|rng, seed| {
        let (n, f, o) = (rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=3));
        let inputs = vec![
            random_tensor(rng, &[n, f]),
            random_tensor(rng, &[f, o]),
            random_tensor(rng, &[o]),
        ];
        max_rel_error(&|g, v| g.linear(v[0], v[1], v[2]).unwrap(), &inputs, seed)
    });

    run("spatial_soft_argmax", &|rng, seed| {
        let shape = [rng.gen_range(1..=2), 1, rng.gen_range(1..=4), rng.gen_range(1..=4)];
        let inputs = vec![Tensor::from_fn(&shape, |_| rng.gen_range(-2.0..2.0))];
        max_rel_error(&|g, v| g.spatial_soft_argmax(v[0], 400.0, 300.0).unwrap(), &inputs, seed)
    });

    run("bce_with_logits", &|rng, seed| {
        let n = rng.gen_range(1..=6);
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let inputs = vec![Tensor::from_fn(&[n, 1], |_| rng.gen_range(-4.0..4.0))];
        max_rel_error(&move |g, v| g.bce_with_logits(v[0], &labels).unwrap(), &inputs, seed)
    });

    run("masked_smooth_l1", &|rng, seed| {
        let n = rng.gen_range(1..=5);
        let mask: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let target: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        // Residuals kept clear of the |d| = 1 breakpoint.
        let pred: Vec<f64> = target
            .iter()
            .map(|t| {
                let d = if rng.gen_bool(0.5) {
                    rng.gen_range(-0.9..0.9)
                } else {
                    rng.gen_range(1.1..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
                };
                t + d
            })
            .collect();
        let inputs = vec![Tensor::new(vec![n, 2], pred).unwrap()];
        max_rel_error(&move |g, v| g.masked_smooth_l1(v[0], &target, &mask).unwrap(), &inputs, seed)
    });

    results
}

/// Loss-to-input relative error of a default-architecture PuckNet on one
/// 3×16×16 image, labeled positive so both heads contribute.
pub fn pucknet_input_rel_error(seed: u64) -> f64 {
    use pucknet::loss::combined_masked_loss_var;
    use pucknet::model::{PuckNet, PuckNetConfig};

    let cfg = PuckNetConfig {
        input_width: 16,
        input_height: 16,
        ..PuckNetConfig::default()
    };
    let net = PuckNet::build(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = random_tensor(&mut rng, &[1, 3, 16, 16]);
    let target = [rng.gen_range(0.0..400.0), rng.gen_range(0.0..300.0)];
    let loss_of = |g: &mut Graph, x: Var| {
        let out = net.forward_eval(g, x, false).unwrap();
        combined_masked_loss_var(g, out.logits, out.coords, &[1.0], &target).unwrap().0
    };

    let mut g = Graph::new();
    let x = g.param(image.clone());
    let loss = loss_of(&mut g, x);
    g.backward(loss).unwrap();
    let analytic = g.grad(x).unwrap().to_vec();

    let eval = |t: Tensor| {
        let mut g = Graph::new();
        let x = g.constant(t);
        let loss = loss_of(&mut g, x);
        g.value(loss).item().unwrap()
    };
    let mut diff = 0.0;
    let mut scale_a = 0.0;
    let mut scale_n = 0.0;
    for (j, a) in analytic.iter().enumerate() {
        let mut plus = image.clone();
        plus.data_mut()[j] += STEP;
        let mut minus = image.clone();
        minus.data_mut()[j] -= STEP;
        let n = (eval(plus) - eval(minus)) / (2.0 * STEP);
        diff += (a - n).powi(2);
        scale_a += a * a;
        scale_n += n * n;
    }
    diff.sqrt() / (scale_a.sqrt() + scale_n.sqrt()).max(1e-12)
}
