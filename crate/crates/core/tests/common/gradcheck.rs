// SPDX-License-Identifier: MIT OR Apache-2.0

//! The gradient suite: analytic backward passes against f64 central
//! differences, each case run on a batch of random instances. Shared by
//! the unit-style test target and the acceptance summary.

use owml::diffcompute::ops;
use owml::diffcompute::{
    causal_attention, causal_attention_backward, grad_check, FnObjective, ParamStore, Tensor2D,
};
use owml::rng;
use owml::Result;
use rand::RngExt;

pub const INSTANCES: u64 = 20;
const EPS: f64 = 1e-4;

/// Outcome of one case over all of its instances.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: &'static str,
    pub instances: u64,
    pub worst: f64,
    pub tolerance: f64,
}

impl Case {
    fn new(name: &'static str, tolerance: f64) -> Case {
        Case {
            name,
            instances: 0,
            worst: 0.0,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.instances >= INSTANCES && self.worst < self.tolerance
    }

    fn check(
        &mut self,
        point: &ParamStore<f64>,
        loss: impl Fn(&ParamStore<f64>) -> Result<f64>,
        grad: impl Fn(&mut ParamStore<f64>) -> Result<f64>,
    ) {
        let report = grad_check(&FnObjective { loss, grad }, point, EPS, self.tolerance)
            .unwrap_or_else(|e| panic!("{}: {e}", self.name));
        self.worst = self.worst.max(report.max_rel_error());
        self.instances += 1;
    }
}

fn random(rows: usize, cols: usize, rng: &mut rng::LabRng) -> Tensor2D<f64> {
    Tensor2D::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Scalar readout `sum(out * weights)`; its gradient is `weights`.
fn readout(out: &Tensor2D<f64>, weights: &Tensor2D<f64>) -> f64 {
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

pub fn matmul() -> Case {
    let mut case = Case::new("matmul", 1e-4);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(seed);
        let mut p = ParamStore::new();
        p.insert("a", random(4, 4, &mut r)).unwrap();
        p.insert("b", random(4, 4, &mut r)).unwrap();
        let w = random(4, 4, &mut r);
        let loss = |p: &ParamStore<f64>| Ok(readout(&ops::matmul(p.value(0), p.value(1))?, &w));
        let grad = |p: &mut ParamStore<f64>| {
            let (a, b) = (p.value(0).clone(), p.value(1).clone());
            let da = ops::matmul_backward(&a, &b, &w, p.grad_mut(1))?;
            p.grad_mut(0).add_assign(&da)?;
            loss(p)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn linear() -> Case {
    let mut case = Case::new("linear", 1e-4);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(100 + seed);
        let mut p = ParamStore::new();
        p.insert("x", random(5, 3, &mut r)).unwrap();
        p.insert("w", random(3, 6, &mut r)).unwrap();
        p.insert("b", random(1, 6, &mut r)).unwrap();
        let w_out = random(5, 6, &mut r);
        let loss =
            |p: &ParamStore<f64>| Ok(readout(&ops::linear(p.value(0), p.value(1), p.value(2))?, &w_out));
        let grad = |p: &mut ParamStore<f64>| {
            let (x, w) = (p.value(0).clone(), p.value(1).clone());
            let mut dw = Tensor2D::zeros(3, 6);
            let mut db = Tensor2D::zeros(1, 6);
            let dx = ops::linear_backward(&x, &w, &w_out, &mut dw, &mut db)?;
            p.grad_mut(0).add_assign(&dx)?;
            p.grad_mut(1).add_assign(&dw)?;
            p.grad_mut(2).add_assign(&db)?;
            loss(p)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn embedding() -> Case {
    let mut case = Case::new("embedding", 1e-4);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(200 + seed);
        let mut p = ParamStore::new();
        p.insert("table", random(7, 4, &mut r)).unwrap();
        let ids: Vec<usize> = (0..9).map(|_| r.random_range(0..7)).collect();
        let w = random(9, 4, &mut r);
        let loss = |p: &ParamStore<f64>| Ok(readout(&ops::embedding_lookup(p.value(0), &ids)?, &w));
        let grad = |p: &mut ParamStore<f64>| {
            ops::embedding_backward(&ids, &w, p.grad_mut(0))?;
            loss(p)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn layer_norm() -> Case {
    let mut case = Case::new("layer_norm", 1e-3);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(300 + seed);
        let mut p = ParamStore::new();
        p.insert("x", random(4, 6, &mut r)).unwrap();
        p.insert("gamma", random(1, 6, &mut r)).unwrap();
        p.insert("beta", random(1, 6, &mut r)).unwrap();
        let w = random(4, 6, &mut r);
        let loss = |p: &ParamStore<f64>| {
            Ok(readout(
                &ops::layer_norm(p.value(0), p.value(1), p.value(2))?.0,
                &w,
            ))
        };
        let grad = |p: &mut ParamStore<f64>| {
            let (_, cache) = ops::layer_norm(p.value(0), p.value(1), p.value(2))?;
            let gamma = p.value(1).clone();
            let mut dg = Tensor2D::zeros(1, 6);
            let mut db = Tensor2D::zeros(1, 6);
            let dx = ops::layer_norm_backward(&cache, &gamma, &w, &mut dg, &mut db)?;
            p.grad_mut(0).add_assign(&dx)?;
            p.grad_mut(1).add_assign(&dg)?;
            p.grad_mut(2).add_assign(&db)?;
            loss(p)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn gelu() -> Case {
    let mut case = Case::new("gelu", 1e-3);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(400 + seed);
        let mut p = ParamStore::new();
        p.insert("x", random(3, 5, &mut r).map(|v| v * 3.0)).unwrap();
        let w = random(3, 5, &mut r);
        let loss = |p: &ParamStore<f64>| Ok(readout(&ops::gelu(p.value(0)), &w));
        let grad = |p: &mut ParamStore<f64>| {
            let dx = ops::gelu_backward(p.value(0), &w)?;
            p.grad_mut(0).add_assign(&dx)?;
            loss(p)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn softmax() -> Case {
    let mut case = Case::new("softmax", 1e-3);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(500 + seed);
        let mut p = ParamStore::new();
        p.insert("x", random(3, 6, &mut r).map(|v| v * 2.0)).unwrap();
        let w = random(3, 6, &mut r);
        let loss = |p: &ParamStore<f64>| Ok(readout(&ops::softmax_rows(p.value(0)), &w));
        let grad = |p: &mut ParamStore<f64>| {
            let y = ops::softmax_rows(p.value(0));
            let dx = ops::softmax_rows_backward(&y, &w)?;
            p.grad_mut(0).add_assign(&dx)?;
            loss(p)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn cross_entropy() -> Case {
    let mut case = Case::new("cross_entropy", 1e-3);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(600 + seed);
        let mut p = ParamStore::new();
        p.insert("logits", random(5, 66, &mut r).map(|v| v * 3.0))
            .unwrap();
        let targets: Vec<Option<usize>> = (0..5).map(|i| (i != 2).then(|| r.random_range(0..66))).collect();
        let loss = |p: &ParamStore<f64>| Ok(ops::cross_entropy(p.value(0), &targets)?.0);
        let grad = |p: &mut ParamStore<f64>| {
            let (l, cache) = ops::cross_entropy(p.value(0), &targets)?;
            let d = ops::cross_entropy_backward(&cache, 1.0);
            p.grad_mut(0).add_assign(&d)?;
            Ok(l)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn attention() -> Case {
    let mut case = Case::new("causal_attention", 1e-3);
    for seed in 0..INSTANCES {
        let mut r = rng::seeded(700 + seed);
        // One head and one sequence, or two of each.
        let (batch, heads) = if seed % 2 == 0 { (1, 1) } else { (2, 2) };
        let rows = batch * 5;
        let mut p = ParamStore::new();
        p.insert("q", random(rows, 8, &mut r)).unwrap();
        p.insert("k", random(rows, 8, &mut r)).unwrap();
        p.insert("v", random(rows, 8, &mut r)).unwrap();
        let w = random(rows, 8, &mut r);
        let loss = |p: &ParamStore<f64>| {
            let (out, _) = causal_attention(p.value(0), p.value(1), p.value(2), 5, heads)?;
            Ok(readout(&out, &w))
        };
        let grad = |p: &mut ParamStore<f64>| {
            let (q, k, v) = (p.value(0).clone(), p.value(1).clone(), p.value(2).clone());
            let (_, cache) = causal_attention(&q, &k, &v, 5, heads)?;
            let (dq, dk, dv) = causal_attention_backward(&q, &k, &v, &cache, &w)?;
            p.grad_mut(0).add_assign(&dq)?;
            p.grad_mut(1).add_assign(&dk)?;
            p.grad_mut(2).add_assign(&dv)?;
            loss(p)
        };
        case.check(&p, loss, grad);
    }
    case
}

pub fn gpt() -> Case {
    use owml::dataset::{TokenSequence, PAD};
    use owml::gpt::{init_params, Batch, Gpt, GptConfig};

    let cfg = GptConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 16,
        ..GptConfig::desk()
    };
    let a = TokenSequence::new(vec![19, 18, 17, 9, 65]).unwrap();
    let b = TokenSequence::new(vec![37, 43, 65, PAD, PAD]).unwrap();
    let batch = Batch::next_token(&[&a, &b], 4).unwrap();
    assert_eq!(batch.targets.iter().filter(|t| t.is_none()).count(), 2);

    let mut case = Case::new("gpt_2layer", 1e-3);
    for seed in 0..INSTANCES {
        // Larger-than-init weights so every gradient sits well above round-off.
        let mut p: ParamStore<f64> = init_params(&cfg, seed).unwrap();
        let mut r = rng::seeded(seed + 100);
        for param in p.iter_mut() {
            for v in param.value.data_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
        let loss = |p: &ParamStore<f64>| Gpt::from_params(cfg, p.clone())?.loss(&batch);
        let grad = |p: &mut ParamStore<f64>| {
            let mut m = Gpt::from_params(cfg, p.clone())?;
            let l = m.loss_and_grad(&batch)?;
            *p = m.into_params();
            Ok(l)
        };
        case.check(&p, loss, grad);
    }
    case
}

/// Smallest |pre-activation| of the encoder. Instances too close to the
/// relu kink make central differences meaningless, so they are redrawn.
fn kink_margin(p: &ParamStore<f64>, x: &Tensor2D<f64>) -> f64 {
    let (w_enc, b_enc, b_dec) = (p.value(0), p.value(1), p.value(3));
    let mut margin = f64::INFINITY;
    for r in 0..x.rows() {
        for j in 0..w_enc.cols() {
            let mut pre = b_enc.get(0, j);
            for i in 0..x.cols() {
                pre += (x.get(r, i) - b_dec.get(0, i)) * w_enc.get(i, j);
            }
            margin = margin.min(pre.abs());
        }
    }
    margin
}

pub fn sae() -> Case {
    use owml::sae::{sae_loss, sae_loss_and_grad, sae_params};

    let mut case = Case::new("sae_loss", 1e-3);
    let mut r = rng::seeded(31);
    while case.instances < INSTANCES {
        let (d_in, d_latent, rows) = (3, 5, 4);
        let p = sae_params(
            random(d_in, d_latent, &mut r),
            random(1, d_latent, &mut r),
            random(d_latent, d_in, &mut r),
            random(1, d_in, &mut r),
        )
        .unwrap();
        let x = random(rows, d_in, &mut r);
        if kink_margin(&p, &x) < 1e-2 {
            continue;
        }
        let lambda = r.random_range(0.0..1.0);
        case.check(
            &p,
            |p| sae_loss(p, &x, lambda),
            |p| sae_loss_and_grad(p, &x, lambda),
        );
    }
    case
}

pub fn probes() -> Vec<Case> {
    use owml::probes::{probe_loss_and_grad, probe_loss_batch, ProbeStructure};

    let mut r = rng::seeded(32);
    let mut out = Vec::new();
    for (structure, name) in [
        (ProbeStructure::PerTileIndependent, "probe_per_tile"),
        (ProbeStructure::MulticlassLocation, "probe_multiclass"),
    ] {
        let mut case = Case::new(name, 1e-4);
        for _ in 0..INSTANCES {
            let (d, rows) = (4, 3);
            let mut p = ParamStore::new();
            p.insert("W", random(d, 64, &mut r)).unwrap();
            let x = random(rows, d, &mut r);
            // Random non-empty masks.
            let labels: Vec<u64> = (0..rows)
                .map(|_| r.random::<u64>() | 1 << r.random_range(0..64))
                .collect();
            case.check(
                &p,
                |p| probe_loss_batch(p.value(0), &x, &labels, structure),
                |p| {
                    let (w, dw) = p.value_and_grad_mut(0);
                    probe_loss_and_grad(w, &x, &labels, structure, dw)
                },
            );
        }
        out.push(case);
    }
    out
}

/// Every case in the suite, in a fixed order.
pub fn all() -> Vec<Case> {
    let mut cases = vec![
        matmul(),
        linear(),
        embedding(),
        layer_norm(),
        gelu(),
        softmax(),
        cross_entropy(),
        attention(),
        gpt(),
        sae(),
    ];
    cases.extend(probes());
    cases
}
