//! Finite-difference checks for every differentiable op and loss.
//!
//! Shared by the core integration tests and the acceptance runner.

use maefuse_core::classify::cross_entropy;
use maefuse_core::funet::{dice_loss, focal_loss, hybrid_loss, one_hot, pixel_ce, HybridLossConfig};
use maefuse_core::mae::{random_mask, weighted_recon_loss, LossNormalization, MaskPlan};
use maefuse_core::nnkit::{grad_check, MultiHeadAttention, TransformerBlock};
use maefuse_core::{Result, Rng, Tape, Tensor, Var};

pub const REL_TOL: f64 = 1e-4;

type Scalar<'t> = Result<Var<'t, f64>>;
type Fun = Box<dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Scalar<'t>>;

pub struct Case {
    pub name: &'static str,
    build: fn(&mut Rng) -> (Vec<Tensor<f64>>, Fun),
}

#[derive(Debug)]
pub struct CaseOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub worst_rel_error: f64,
    pub passed: bool,
}

fn normal(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.normal())
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.uniform_range(lo, hi))
}

/// Values at least `gap` away from `at`, for ops with a kink there.
fn away_from(shape: &[usize], at: f64, gap: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.uniform_range(gap, 1.5);
        if rng.bernoulli(0.5) {
            at + m
        } else {
            at - m
        }
    })
}

/// Distinct values spaced well apart, randomly permuted, for max pooling.
fn distinct(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    Tensor::from_fn(shape.to_vec(), |i| idx[i] as f64 * 0.1)
}

fn labels(n: usize, c: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.below(c)).collect()
}

/// Reduces any output to a scalar through fixed random weights so that every
/// output element contributes to the checked gradient.
fn project<'t>(v: Var<'t, f64>) -> Scalar<'t> {
    let mut r = Rng::new(0x5eed);
    let w = normal(&v.shape(), &mut r);
    v.mul(v.tape().constant(w))?.sum_all()
}

fn unary(rng: &mut Rng, x: Tensor<f64>, f: fn(Var<'_, f64>) -> Result<Var<'_, f64>>) -> (Vec<Tensor<f64>>, Fun) {
    let _ = rng;
    (vec![x], Box::new(move |_, v| project(f(v[0])?)))
}

fn random_dims(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn plans_with_masked(n: usize, t: usize, rng: &mut Rng) -> Vec<MaskPlan> {
    (0..n).map(|_| random_mask(t, 0.5, rng).unwrap()).collect()
}

pub fn cases() -> Vec<Case> {
    vec![
        Case { name: "add", build: |r| {
            let s = [random_dims(r, 1, 3), random_dims(r, 2, 4)];
            (vec![normal(&s, r), normal(&s, r)], Box::new(|_, v| project(v[0].add(v[1])?)))
        }},
        Case { name: "sub", build: |r| {
            let s = [random_dims(r, 1, 3), random_dims(r, 2, 4)];
            (vec![normal(&s, r), normal(&s, r)], Box::new(|_, v| project(v[0].sub(v[1])?)))
        }},
        Case { name: "mul", build: |r| {
            let s = [random_dims(r, 1, 3), random_dims(r, 2, 4)];
            (vec![normal(&s, r), normal(&s, r)], Box::new(|_, v| project(v[0].mul(v[1])?)))
        }},
        Case { name: "div", build: |r| {
            let s = [random_dims(r, 1, 3), random_dims(r, 2, 4)];
            (vec![normal(&s, r), away_from(&s, 0.0, 0.5, r)], Box::new(|_, v| project(v[0].div(v[1])?)))
        }},
        Case { name: "add_broadcast", build: |r| {
            let d = random_dims(r, 2, 4);
            (vec![normal(&[2, 3, d], r), normal(&[d], r)], Box::new(|_, v| project(v[0].add_broadcast(v[1])?)))
        }},
        Case { name: "scale", build: |r| { let x = normal(&[3, 4], r); unary(r, x, |v| v.scale(-1.7)) }},
        Case { name: "add_scalar", build: |r| { let x = normal(&[3, 4], r); unary(r, x, |v| v.add_scalar(0.3)) }},
        Case { name: "neg", build: |r| { let x = normal(&[3, 4], r); unary(r, x, |v| v.neg()) }},
        Case { name: "exp", build: |r| { let x = normal(&[3, 4], r); unary(r, x, |v| v.exp()) }},
        Case { name: "ln", build: |r| { let x = uniform(&[3, 4], 0.2, 3.0, r); unary(r, x, |v| v.ln()) }},
        Case { name: "square", build: |r| { let x = normal(&[3, 4], r); unary(r, x, |v| v.square()) }},
        Case { name: "sqrt", build: |r| { let x = uniform(&[3, 4], 0.2, 3.0, r); unary(r, x, |v| v.sqrt()) }},
        Case { name: "powf", build: |r| {
            let p = r.uniform_range(0.5, 3.0);
            let x = uniform(&[3, 4], 0.2, 2.0, r);
            (vec![x], Box::new(move |_, v| project(v[0].powf(p)?)))
        }},
        Case { name: "clamp_min", build: |r| { let x = away_from(&[3, 4], 0.1, 0.01, r); unary(r, x, |v| v.clamp_min(0.1)) }},
        Case { name: "relu", build: |r| { let x = away_from(&[3, 4], 0.0, 0.01, r); unary(r, x, |v| v.relu()) }},
        Case { name: "gelu", build: |r| { let x = normal(&[3, 4], r); unary(r, x, |v| v.gelu()) }},
        Case { name: "sum_all", build: |r| { let x = normal(&[3, 4], r); (vec![x], Box::new(|_, v| v[0].sum_all()?.square())) }},
        Case { name: "mean_all", build: |r| { let x = normal(&[3, 4], r); (vec![x], Box::new(|_, v| v[0].mean_all()?.square())) }},
        Case { name: "sum_last", build: |r| { let x = normal(&[2, 3, 4], r); unary(r, x, |v| v.sum_last()) }},
        Case { name: "mean_last", build: |r| { let x = normal(&[2, 3, 4], r); unary(r, x, |v| v.mean_last()) }},
        Case { name: "matmul", build: |r| {
            let (m, k, n) = (random_dims(r, 1, 4), random_dims(r, 1, 4), random_dims(r, 1, 4));
            (vec![normal(&[2, m, k], r), normal(&[k, n], r)], Box::new(|_, v| project(v[0].matmul(v[1], false)?)))
        }},
        Case { name: "matmul_trans_b", build: |r| {
            let (m, k, n) = (random_dims(r, 1, 4), random_dims(r, 1, 4), random_dims(r, 1, 4));
            (vec![normal(&[m, k], r), normal(&[n, k], r)], Box::new(|_, v| project(v[0].matmul(v[1], true)?)))
        }},
        Case { name: "bmm", build: |r| {
            let (m, k, n) = (random_dims(r, 1, 4), random_dims(r, 1, 4), random_dims(r, 1, 4));
            (vec![normal(&[2, m, k], r), normal(&[2, k, n], r)], Box::new(|_, v| project(v[0].bmm(v[1], false)?)))
        }},
        Case { name: "bmm_trans_b", build: |r| {
            let (m, k, n) = (random_dims(r, 1, 4), random_dims(r, 1, 4), random_dims(r, 1, 4));
            (vec![normal(&[2, m, k], r), normal(&[2, n, k], r)], Box::new(|_, v| project(v[0].bmm(v[1], true)?)))
        }},
        Case { name: "linear", build: |r| {
            let (i, o) = (random_dims(r, 1, 5), random_dims(r, 1, 5));
            (vec![normal(&[3, i], r), normal(&[o, i], r), normal(&[o], r)],
             Box::new(|_, v| project(v[0].linear(v[1], Some(v[2]))?)))
        }},
        Case { name: "layer_norm", build: |r| {
            let d = random_dims(r, 2, 6);
            (vec![normal(&[3, d], r), normal(&[d], r), normal(&[d], r)],
             Box::new(|_, v| project(v[0].layer_norm(v[1], v[2], 1e-5)?)))
        }},
        Case { name: "group_norm", build: |r| {
            let g = random_dims(r, 1, 2);
            let c = 2 * g;
            (vec![normal(&[2, c, 3, 2], r), normal(&[c], r), normal(&[c], r)],
             Box::new(move |_, v| project(v[0].group_norm(g, v[1], v[2], 1e-5)?)))
        }},
        Case { name: "max_pool2x2", build: |r| { let x = distinct(&[1, 2, 4, 4], r); unary(r, x, |v| v.max_pool2x2()) }},
        Case { name: "resize_bilinear", build: |r| {
            let (oh, ow) = (random_dims(r, 2, 7), random_dims(r, 2, 7));
            (vec![normal(&[1, 2, 3, 4], r)], Box::new(move |_, v| project(v[0].resize_bilinear(oh, ow)?)))
        }},
        Case { name: "upsample_bilinear2x", build: |r| { let x = normal(&[1, 2, 3, 3], r); unary(r, x, |v| v.upsample_bilinear2x()) }},
        Case { name: "upsample_nearest2x", build: |r| { let x = normal(&[1, 2, 3, 3], r); unary(r, x, |v| v.upsample_nearest2x()) }},
        Case { name: "reshape", build: |r| { let x = normal(&[2, 6], r); unary(r, x, |v| v.reshape(vec![3, 4])) }},
        Case { name: "permute", build: |r| { let x = normal(&[2, 3, 4], r); unary(r, x, |v| v.permute(&[2, 0, 1])) }},
        Case { name: "transpose_last", build: |r| { let x = normal(&[2, 3, 4], r); unary(r, x, |v| v.transpose_last()) }},
        Case { name: "narrow", build: |r| { let x = normal(&[2, 5, 3], r); unary(r, x, |v| v.narrow(1, 1, 3)) }},
        Case { name: "repeat_leading", build: |r| { let x = normal(&[2, 3], r); unary(r, x, |v| v.repeat_leading(3)) }},
        Case { name: "concat", build: |r| {
            (vec![normal(&[2, 1, 3], r), normal(&[2, 2, 3], r)], Box::new(|_, v| project(Var::concat(&[v[0], v[1]], 1)?)))
        }},
        Case { name: "gather_rows", build: |r| {
            let index: Vec<Vec<usize>> = (0..2).map(|_| (0..4).map(|_| r.below(5)).collect()).collect();
            (vec![normal(&[2, 5, 3], r)], Box::new(move |_, v| project(v[0].gather_rows(&index)?)))
        }},
        Case { name: "pick", build: |r| {
            let l = labels(2 * 4, 3, r);
            (vec![normal(&[2, 3, 4], r)], Box::new(move |_, v| project(v[0].pick(1, &l)?)))
        }},
        Case { name: "softmax", build: |r| { let x = normal(&[2, 3, 4], r); unary(r, x, |v| v.softmax(1)) }},
        Case { name: "log_softmax", build: |r| { let x = normal(&[3, 5], r); unary(r, x, |v| v.log_softmax(1)) }},
        Case { name: "conv2d_3x3_pad1", build: |r| {
            let (c, k) = (random_dims(r, 1, 3), random_dims(r, 1, 3));
            (vec![normal(&[2, c, 5, 4], r), normal(&[k, c, 3, 3], r), normal(&[k], r)],
             Box::new(|_, v| project(v[0].conv2d(v[1], Some(v[2]), 1, 1)?)))
        }},
        Case { name: "conv2d_stride2", build: |r| {
            (vec![normal(&[1, 2, 6, 5], r), normal(&[3, 2, 3, 3], r)],
             Box::new(|_, v| project(v[0].conv2d(v[1], None, 2, 1)?)))
        }},
        Case { name: "conv2d_1x1", build: |r| {
            (vec![normal(&[2, 3, 3, 3], r), normal(&[2, 3, 1, 1], r), normal(&[2], r)],
             Box::new(|_, v| project(v[0].conv2d(v[1], Some(v[2]), 1, 0)?)))
        }},
        Case { name: "multi_head_attention", build: |r| {
            let (tq, tk) = (random_dims(r, 1, 4), random_dims(r, 1, 4));
            (vec![normal(&[2, tq, 4], r), normal(&[2, tk, 6], r)], Box::new(|tape, v| {
                let mha = MultiHeadAttention::<f64>::cross("mha", 4, 6, 4, 4, 2, &mut Rng::new(11))?;
                project(mha.forward(tape, v[0], v[1])?)
            }))
        }},
        Case { name: "transformer_block", build: |r| {
            (vec![normal(&[1, 3, 4], r)], Box::new(|tape, v| {
                let block = TransformerBlock::<f64>::new("blk", 4, 2, 2.0, &mut Rng::new(12))?;
                project(block.forward(tape, v[0])?)
            }))
        }},
        Case { name: "loss_weighted_recon", build: |r| {
            let (n, t, d) = (random_dims(r, 1, 3), 4, random_dims(r, 1, 3));
            let plans = plans_with_masked(n, t, r);
            let target = normal(&[n, t, d], r);
            let w: Vec<f64> = (0..n).map(|_| r.uniform_range(0.05, 1.0)).collect();
            (vec![normal(&[n, t, d], r)], Box::new(move |_, v| {
                weighted_recon_loss(v[0], &target, &plans, &w, LossNormalization::BatchSize)
            }))
        }},
        Case { name: "loss_cross_entropy", build: |r| {
            let c = random_dims(r, 2, 7);
            let l = labels(4, c, r);
            (vec![normal(&[4, c], r)], Box::new(move |_, v| cross_entropy(v[0], &l)))
        }},
        Case { name: "loss_dice", build: |r| {
            let c = random_dims(r, 2, 3);
            let l = labels(2 * 9, c, r);
            let g = one_hot::<f64>(&l, 2, c, 3, 3).unwrap();
            (vec![uniform(&[2, c, 3, 3], 0.05, 1.0, r)], Box::new(move |_, v| dice_loss(v[0], &g, 1e-5)))
        }},
        Case { name: "loss_focal", build: |r| {
            let c = random_dims(r, 2, 3);
            let l = labels(2 * 9, c, r);
            (vec![uniform(&[2, c, 3, 3], 0.05, 0.95, r)], Box::new(move |_, v| focal_loss(v[0], &l, 2.0, 0.25)))
        }},
        Case { name: "loss_pixel_ce", build: |r| {
            let c = random_dims(r, 2, 3);
            let l = labels(2 * 9, c, r);
            (vec![uniform(&[2, c, 3, 3], 0.05, 0.95, r)], Box::new(move |_, v| pixel_ce(v[0], &l)))
        }},
        Case { name: "loss_dice_logits", build: |r| {
            let l = labels(16, 2, r);
            let g = one_hot::<f64>(&l, 1, 2, 4, 4).unwrap();
            (vec![normal(&[1, 2, 4, 4], r)], Box::new(move |_, v| dice_loss(v[0].softmax(1)?, &g, 1e-5)))
        }},
        Case { name: "loss_focal_logits", build: |r| {
            let l = labels(16, 2, r);
            (vec![normal(&[1, 2, 4, 4], r)], Box::new(move |_, v| focal_loss(v[0].softmax(1)?, &l, 2.0, 0.25)))
        }},
        Case { name: "loss_pixel_ce_logits", build: |r| {
            let l = labels(16, 2, r);
            (vec![normal(&[1, 2, 4, 4], r)], Box::new(move |_, v| pixel_ce(v[0].softmax(1)?, &l)))
        }},
        Case { name: "loss_hybrid", build: |r| {
            let c = random_dims(r, 2, 3);
            let l = labels(2 * 9, c, r);
            (vec![normal(&[2, c, 3, 3], r)], Box::new(move |_, v| {
                Ok(hybrid_loss(v[0], &l, &HybridLossConfig::default())?.total)
            }))
        }},
    ]
}

/// Runs every case on `instances` random inputs drawn from `seed`.
pub fn run(instances: usize, seed: u64) -> Vec<CaseOutcome> {
    cases()
        .into_iter()
        .map(|case| {
            let mut rng = Rng::substream(seed, case.name);
            let mut worst = 0.0f64;
            for _ in 0..instances {
                let (inputs, f) = (case.build)(&mut rng);
                let report = grad_check(f, &inputs, REL_TOL)
                    .unwrap_or_else(|e| panic!("{}: {e}", case.name));
                worst = worst.max(report.max_rel_error);
            }
            CaseOutcome {
                name: case.name,
                instances,
                worst_rel_error: worst,
                passed: worst < REL_TOL,
            }
        })
        .collect()
}
