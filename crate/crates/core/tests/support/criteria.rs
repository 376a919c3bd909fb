//! Self-contained acceptance checks for the core library. Each returns a
//! short pass detail or a failure message.

use std::collections::BTreeSet;

use maefuse_core::classify::{cross_entropy, cross_entropy_value, LinearHead};
use maefuse_core::dataio::{extract_slices, parse_nifti1, stride_indices, write_nifti1, Volume};
use maefuse_core::funet::{dice_loss, focal_loss, hybrid_loss, one_hot, pixel_ce, FusionBlock, FusionStrategy, HybridLossConfig};
use maefuse_core::mae::{weighted_recon_loss, LossNormalization, MaskPlan};
use maefuse_core::metrics::{dice_score, iou_score, stability_summary};
use maefuse_core::nnkit::Module;
use maefuse_core::{NiftiError, Rng, Tape, Tensor};

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn recon_loss(pred: &Tensor<f64>, target: &Tensor<f64>, plans: &[MaskPlan], w: &[f64]) -> Result<f64, String> {
    let tape = Tape::new();
    let l = weighted_recon_loss(tape.constant(pred.clone()), target, plans, w, LossNormalization::BatchSize).map_err(e2s)?;
    Ok(l.item())
}

/// Weighted reconstruction loss: unit weights, hand case, visible targets.
pub fn recon_loss_exactness() -> Check {
    let mut rng = Rng::new(1);
    let (n, t, d) = (4, 9, 5);
    let plans: Vec<MaskPlan> = (0..n)
        .map(|_| maefuse_core::mae::random_mask(t, 0.6, &mut rng).unwrap())
        .collect();
    let pred = Tensor::from_fn(vec![n, t, d], |_| rng.normal());
    let target = Tensor::from_fn(vec![n, t, d], |_| rng.normal());

    let mut oracle = 0.0;
    for (i, p) in plans.iter().enumerate() {
        let mut s = 0.0;
        for &j in &p.masked {
            let mut px = 0.0;
            for k in 0..d {
                let o = (i * t + j) * d + k;
                px += (pred.data()[o] - target.data()[o]).powi(2);
            }
            s += px / d as f64;
        }
        oracle += s / p.masked.len() as f64;
    }
    oracle /= n as f64;
    let got = recon_loss(&pred, &target, &plans, &vec![1.0; n])?;
    ensure((got - oracle).abs() <= 1e-12, || format!("unit weights: {got} vs unweighted mean {oracle}"))?;

    // per-sample masked losses 0.5 and 7.0, weights (1, 0)
    let plans2 = vec![
        MaskPlan { visible: vec![0], masked: vec![1] },
        MaskPlan { visible: vec![0], masked: vec![1] },
    ];
    let zero = Tensor::zeros(vec![2, 2, 4]);
    let mut p2 = Tensor::zeros(vec![2, 2, 4]);
    p2.data_mut()[4..8].copy_from_slice(&[1.0, 1.0, 0.0, 0.0]);
    p2.data_mut()[12..16].copy_from_slice(&[5.0, 1.0, 1.0, 1.0]);
    let hand = recon_loss(&p2, &zero, &plans2, &[1.0, 0.0])?;
    ensure(hand == 0.25, || format!("hand case gave {hand}, expected 0.25"))?;

    let mut perturbed = target.clone();
    for (i, p) in plans.iter().enumerate() {
        for &j in &p.visible {
            for k in 0..d {
                perturbed.data_mut()[(i * t + j) * d + k] += 3.5;
            }
        }
    }
    let w: Vec<f64> = (0..n).map(|i| 0.2 + 0.2 * i as f64).collect();
    let (a, b) = (recon_loss(&pred, &target, &plans, &w)?, recon_loss(&pred, &perturbed, &plans, &w)?);
    ensure(a == b, || format!("visible-target perturbation changed the loss: {a} vs {b}"))?;
    Ok(format!("unit-weight |Δ| = {:.1e}, hand case = {hand}, visible perturbation Δ = 0", (got - oracle).abs()))
}

fn mask_bits(m: u32) -> Vec<u16> {
    (0..9).map(|i| ((m >> i) & 1) as u16).collect()
}

/// Dice/IoU versus set enumeration over every pair of 3×3 masks, plus the
/// stride-sweep summary.
pub fn metric_oracle() -> Check {
    let sets: Vec<BTreeSet<(usize, usize)>> = (0..512u32)
        .map(|m| (0..9).filter(|i| (m >> i) & 1 == 1).map(|i| (i / 3, i % 3)).collect())
        .collect();
    let masks: Vec<Vec<u16>> = (0..512).map(mask_bits).collect();
    let mut pairs = 0usize;
    for (a, pa) in sets.iter().enumerate() {
        for (b, gb) in sets.iter().enumerate() {
            let inter = pa.intersection(gb).count();
            let union = pa.union(gb).count();
            let (dice_ref, iou_ref) = if union == 0 {
                (1.0, 1.0)
            } else {
                (2.0 * inter as f64 / (pa.len() + gb.len()) as f64, inter as f64 / union as f64)
            };
            let dice = dice_score(&masks[a], &masks[b]).map_err(e2s)?;
            let iou = iou_score(&masks[a], &masks[b]).map_err(e2s)?;
            ensure(dice == dice_ref && iou == iou_ref, || {
                format!("masks {a:#011b}/{b:#011b}: dice {dice} vs {dice_ref}, iou {iou} vs {iou_ref}")
            })?;
            let rel = dice / (2.0 - dice);
            ensure((iou - rel).abs() <= 1e-15, || format!("IoU = Dice/(2-Dice) broken on {a}/{b}: {iou} vs {rel}"))?;
            pairs += 1;
        }
    }
    let values = [95.16, 95.24, 95.23, 95.25, 95.18, 95.16, 95.12];
    let points: Vec<(String, f64)> = values.iter().enumerate().map(|(i, &v)| ((i + 4).to_string(), v)).collect();
    let s = stability_summary("stride", &points).map_err(e2s)?;
    ensure(format!("{:.2}", s.mean) == "95.19", || format!("stride mean {} does not print as 95.19", s.mean))?;
    ensure(format!("{:.3}", s.std) == "0.045", || format!("stride std {} does not print as 0.045", s.std))?;
    Ok(format!("{pairs} mask pairs exact; stride summary mean {:.2}, std {:.3}", s.mean, s.std))
}

/// Linear head size `C·D + C`.
pub fn head_param_count() -> Check {
    let mut rng = Rng::new(0);
    for (c, d) in [(2, 1), (3, 16), (7, 64), (8, 768)] {
        let names = (0..c).map(|i| format!("c{i}")).collect();
        let head = LinearHead::<f32>::new(d, names, &mut rng).map_err(e2s)?;
        ensure(head.num_trainable() == c * d + c, || {
            format!("C={c}, D={d}: {} trainable parameters", head.num_trainable())
        })?;
    }
    let names = (0..8).map(|i| format!("c{i}")).collect();
    let full = LinearHead::<f32>::new(768, names, &mut rng).map_err(e2s)?.num_trainable();
    ensure(full == 6152, || format!("D=768, C=8 gives {full}"))?;
    Ok(format!("D=768, C=8 -> {full}"))
}

/// Closed-form values of the classification and segmentation losses.
pub fn closed_form_losses() -> Check {
    for c in 2..=8 {
        let v = cross_entropy_value(&vec![0.0; c], c - 1).map_err(e2s)?;
        let tape = Tape::<f64>::new();
        let logits = tape.constant(Tensor::zeros(vec![3, c]));
        let t = cross_entropy(logits, &[0, 1, c - 1]).map_err(e2s)?.item();
        let ln = (c as f64).ln();
        ensure((v - ln).abs() <= 1e-6 && (t - ln).abs() <= 1e-6, || format!("uniform CE over {c} classes: {v}, {t} vs ln C = {ln}"))?;
    }

    let tape = Tape::<f64>::new();
    let half = tape.constant(Tensor::full(vec![1, 2, 1, 1], 0.5));
    let focal = focal_loss(half, &[0], 2.0, 0.25).map_err(e2s)?.item();
    ensure((focal - 0.043322).abs() <= 1e-6, || format!("focal at p_t = 0.5: {focal}"))?;

    let p = tape.constant(Tensor::full(vec![1, 1, 1, 2], 0.5));
    let g = Tensor::new(vec![1, 1, 1, 2], vec![1.0, 0.0]).map_err(e2s)?;
    let dice = dice_loss(p, &g, 1e-5).map_err(e2s)?.item();
    ensure((dice - 0.333331).abs() <= 1e-4, || format!("soft Dice: {dice}"))?;

    let mut rng = Rng::new(6);
    let logits = tape.constant(Tensor::from_fn(vec![2, 3, 4, 4], |_| rng.normal()));
    let labels: Vec<usize> = (0..32).map(|_| rng.below(3)).collect();
    let h = hybrid_loss(logits, &labels, &HybridLossConfig::default()).map_err(e2s)?;
    let probs = logits.softmax(1).map_err(e2s)?;
    let onehot = one_hot::<f64>(&labels, 2, 3, 4, 4).map_err(e2s)?;
    let parts = dice_loss(probs, &onehot, 1e-5).map_err(e2s)?.item()
        + focal_loss(probs, &labels, 2.0, 0.25).map_err(e2s)?.item()
        + pixel_ce(probs, &labels).map_err(e2s)?.item();
    let total = h.total.item();
    ensure((total - parts).abs() <= 1e-12, || format!("hybrid {total} vs component sum {parts}"))?;
    Ok(format!("focal {focal:.6}, soft Dice {dice:.6}, hybrid |Δ| = {:.1e}", (total - parts).abs()))
}

fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, pad: usize) -> Vec<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (k, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (oh, ow) = (h + 2 * pad + 1 - kh, wd + 2 * pad + 1 - kw);
    let mut out = vec![0.0; n * k * oh * ow];
    for s in 0..n {
        for o in 0..k {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b.data()[o];
                    for ci in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let (iy, ix) = ((y + dy) as isize - pad as isize, (xo + dx) as isize - pad as isize);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((s * c + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((o * c + ci) * kh + dy) * kw + dx];
                            }
                        }
                    }
                    out[((s * k + o) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    out
}

/// Add, concat and attention fusion contracts.
pub fn fusion_contracts() -> Check {
    let mut rng = Rng::new(21);
    let (n, c, h, w, d, g) = (2, 3, 4, 4, 5, 4);
    let cnn = Tensor::<f64>::from_fn(vec![n, c, h, w], |_| rng.normal());
    let grid = Tensor::<f64>::from_fn(vec![n, d, g, g], |_| rng.normal());
    let run = |block: &FusionBlock<f64>, grid: &Tensor<f64>| -> Result<Tensor<f64>, String> {
        let tape = Tape::new();
        let out = block.forward(&tape, tape.constant(cnn.clone()), tape.constant(grid.clone())).map_err(e2s)?;
        Ok((*out.value()).clone())
    };

    let mut add = FusionBlock::<f64>::new("f", FusionStrategy::Add, d, c, &mut rng).map_err(e2s)?;
    add.visit_mut(&mut |p| p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0));
    let out = run(&add, &grid)?;
    ensure(out.data() == cnn.data(), || "add fusion with a zero projection is not the identity".into())?;

    let mut concat = FusionBlock::<f64>::new("f", FusionStrategy::Concat, d, c, &mut rng).map_err(e2s)?;
    concat.visit_mut(&mut |p| p.tensor = Tensor::from_fn(p.tensor.shape().to_vec(), |_| rng.uniform_range(-0.5, 0.5)));
    let proj = concat.proj.as_ref().unwrap();
    let post = concat.post.as_ref().unwrap();
    let projected = conv_oracle(&grid, &proj.weight.tensor, &proj.bias.tensor, 0);
    let mut merged = Vec::with_capacity(n * 2 * c * h * w);
    for s in 0..n {
        merged.extend_from_slice(&cnn.data()[s * c * h * w..(s + 1) * c * h * w]);
        merged.extend_from_slice(&projected[s * c * h * w..(s + 1) * c * h * w]);
    }
    let merged = Tensor::new(vec![n, 2 * c, h, w], merged).map_err(e2s)?;
    let expected = conv_oracle(&merged, &post.weight.tensor, &post.bias.tensor, 1);
    let out = run(&concat, &grid)?;
    let err = out.data().iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-6, || format!("concat fusion differs from the plain-conv oracle by {err:e}"))?;

    let attn = FusionBlock::<f64>::new("f", FusionStrategy::Attention, d, c, &mut rng).map_err(e2s)?;
    let base = run(&attn, &grid)?;
    let mut perm: Vec<usize> = (0..g * g).collect();
    rng.shuffle(&mut perm);
    let mut shuffled = grid.clone();
    for s in 0..n {
        for ch in 0..d {
            let off = (s * d + ch) * g * g;
            for (dst, &src) in perm.iter().enumerate() {
                shuffled.data_mut()[off + dst] = grid.data()[off + src];
            }
        }
    }
    let moved = run(&attn, &shuffled)?;
    let perr = base.max_abs_diff(&moved);
    ensure(perr <= 1e-6, || format!("attention fusion changed by {perr:e} under key/value permutation"))?;

    let coarse = Tensor::<f64>::from_fn(vec![n, d, 2, 2], |_| rng.normal());
    for block in [&add, &concat, &attn] {
        for gr in [&grid, &coarse] {
            let s = run(block, gr)?;
            ensure(s.shape() == cnn.shape(), || format!("{:?} fusion produced shape {:?}", block.strategy, s.shape()))?;
        }
    }
    Ok(format!("add identity bitwise, concat |Δ| = {err:.1e}, attention permutation |Δ| = {perr:.1e}"))
}

/// Slice counts from the stride sampler.
pub fn stride_sampler() -> Check {
    for dim in 1..=100 {
        for k in 1..=20 {
            let got = stride_indices(dim, k).map_err(e2s)?.len();
            ensure(got == dim.div_ceil(k), || format!("dim {dim}, stride {k}: {got} slices"))?;
        }
    }
    let v = Volume::new([70, 70, 70], [1.0; 3], vec![0.0; 70 * 70 * 70]).map_err(e2s)?;
    let s5 = extract_slices(&v, &[0, 1, 2], 5).map_err(e2s)?.len();
    let s10 = extract_slices(&v, &[0, 1, 2], 10).map_err(e2s)?.len();
    ensure(s5 == 2 * s10, || format!("stride 5 gave {s5} slices, stride 10 gave {s10}"))?;
    Ok(format!("ceil(dim/k) for 2000 pairs; dim-70 volume: {s5} vs {s10} slices"))
}

/// NIfTI-1 write/parse round trip and malformed-file errors.
pub fn nifti_roundtrip() -> Check {
    let mut rng = Rng::new(3);
    for dims in [[1, 1, 1], [4, 3, 2], [7, 5, 6]] {
        let data: Vec<f32> = (0..dims.iter().product::<usize>()).map(|_| rng.normal() as f32 * 100.0).collect();
        let v = Volume::new(dims, [1.0, 0.5, 2.5], data).map_err(e2s)?;
        let back = parse_nifti1(&write_nifti1(&v)).map_err(e2s)?;
        let same = back.dims == v.dims
            && back.voxel_size == v.voxel_size
            && back.data.iter().zip(&v.data).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("round trip changed a {dims:?} volume"))?;
    }
    let v = Volume::new([3, 3, 3], [1.0; 3], vec![1.0; 27]).map_err(e2s)?;
    let good = write_nifti1(&v);

    let mut bad_magic = good.clone();
    bad_magic[344..348].copy_from_slice(b"xyz\0");
    let mut bad_type = good.clone();
    bad_type[70..72].copy_from_slice(&512i16.to_le_bytes());
    let truncated = &good[..good.len() - 8];
    let r = (parse_nifti1(&bad_magic), parse_nifti1(&bad_type), parse_nifti1(truncated));
    match r {
        (Err(NiftiError::NotNifti(_)), Err(NiftiError::UnsupportedDatatype(512)), Err(NiftiError::Truncated { .. })) => {
            Ok("bit-identical round trips; magic, datatype and truncation errors distinct".into())
        }
        other => Err(format!("unexpected malformed-file results: {other:?}")),
    }
}
