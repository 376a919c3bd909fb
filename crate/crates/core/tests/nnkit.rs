use maefuse_core::nnkit::{AdamW, AdamWConfig, Linear, Init, Module, MultiHeadAttention, TransformerBlock};
use maefuse_core::{Error, Rng, Tape, Tensor};
use proptest::prelude::*;

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[test]
fn conv_identity_kernel_returns_input() {
    let tape = Tape::new();
    let x = tape.constant(t(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()));
    let w = tape.constant(t(&[1, 1, 1, 1], vec![1.0]));
    let b = tape.constant(t(&[1], vec![0.0]));
    let y = x.conv2d(w, Some(b), 1, 0).unwrap();
    assert_eq!(y.value().data(), x.value().data());
}

#[test]
fn conv_sums_channels() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::<f64>::ones(vec![1, 2, 2, 2]));
    let w = tape.constant(Tensor::ones(vec![1, 2, 1, 1]));
    let y = x.conv2d(w, None, 1, 0).unwrap();
    assert_eq!(y.shape(), vec![1, 1, 2, 2]);
    assert!(y.value().data().iter().all(|&v| v == 2.0));
}

#[test]
fn conv_output_shapes() {
    let tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::zeros(vec![1, 1, 224, 224]));
    let w = tape.constant(Tensor::zeros(vec![64, 1, 3, 3]));
    assert_eq!(x.conv2d(w, None, 1, 1).unwrap().shape(), vec![1, 64, 224, 224]);
    let x = tape.constant(Tensor::zeros(vec![2, 3, 9, 7]));
    let w = tape.constant(Tensor::zeros(vec![4, 3, 3, 2]));
    assert_eq!(x.conv2d(w, None, 2, 1).unwrap().shape(), vec![2, 4, 5, 4]);
}

#[test]
fn conv_channel_mismatch_names_dimension() {
    let tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::zeros(vec![1, 3, 4, 4]));
    let w = tape.constant(Tensor::zeros(vec![2, 2, 3, 3]));
    match x.conv2d(w, None, 1, 1) {
        Err(Error::Shape { detail, .. }) => assert!(detail.contains("channel"), "{detail}"),
        other => panic!("expected a shape error, got {other:?}"),
    }
}

fn attention_out(mha: &MultiHeadAttention<f64>, q: &Tensor<f64>, kv: &Tensor<f64>) -> Tensor<f64> {
    let tape = Tape::new();
    let y = mha.forward(&tape, tape.constant(q.clone()), tape.constant(kv.clone())).unwrap();
    (*y.value()).clone()
}

fn normal(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.normal())
}

#[test]
fn single_key_attention_is_projected_value() {
    let mut rng = Rng::new(4);
    let mha = MultiHeadAttention::<f64>::new("a", 8, 2, &mut rng).unwrap();
    let q = normal(&[2, 3, 8], &mut rng);
    let kv = normal(&[2, 1, 8], &mut rng);
    let y = attention_out(&mha, &q, &kv);

    let tape = Tape::new();
    let v = mha.v.forward(&tape, tape.constant(kv.clone())).unwrap();
    let o = mha.out.forward(&tape, v).unwrap();
    for s in 0..2 {
        for i in 0..3 {
            for d in 0..8 {
                let a = y.data()[(s * 3 + i) * 8 + d];
                let b = o.value().data()[s * 8 + d];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn duplicated_and_permuted_keys_leave_attention_unchanged() {
    let mut rng = Rng::new(5);
    let mha = MultiHeadAttention::<f64>::new("a", 8, 4, &mut rng).unwrap();
    let q = normal(&[1, 5, 8], &mut rng);
    let kv = normal(&[1, 6, 8], &mut rng);
    let base = attention_out(&mha, &q, &kv);

    let mut dup = kv.data().to_vec();
    dup.extend_from_slice(kv.data());
    let dup = t(&[1, 12, 8], dup);
    assert!(base.max_abs_diff(&attention_out(&mha, &q, &dup)) < 1e-6);

    let order = [3, 0, 5, 1, 4, 2];
    let perm: Vec<f64> = order.iter().flat_map(|&i| kv.data()[i * 8..(i + 1) * 8].to_vec()).collect();
    assert!(base.max_abs_diff(&attention_out(&mha, &q, &t(&[1, 6, 8], perm))) < 1e-6);
}

#[test]
fn heads_must_divide_width() {
    let r = MultiHeadAttention::<f32>::new("a", 10, 3, &mut Rng::new(0));
    assert!(matches!(r, Err(Error::Config(_))));
}

fn tiny_model(seed: u64) -> (TransformerBlock<f64>, Linear<f64>) {
    let mut rng = Rng::substream(seed, "init");
    (
        TransformerBlock::new("blk", 8, 2, 2.0, &mut rng).unwrap(),
        Linear::new("head", 8, 1, Init::TruncNormal(0.02), &mut rng),
    )
}

fn trajectory(seed: u64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut block, mut head) = tiny_model(seed);
    let mut data = Rng::substream(seed, "data");
    let x = normal(&[4, 3, 8], &mut data);
    let mut ob = AdamW::new(AdamWConfig { lr: 1e-2, ..Default::default() });
    let mut oh = AdamW::new(AdamWConfig { lr: 1e-2, ..Default::default() });
    let mut losses = Vec::new();
    for _ in 0..steps {
        let tape = Tape::new();
        let h = block.forward(&tape, tape.constant(x.clone())).unwrap();
        let loss = head.forward(&tape, h).unwrap().square().unwrap().mean_all().unwrap();
        losses.push(loss.item());
        let g = tape.backward(loss).unwrap();
        ob.step(&mut block, &g).unwrap();
        oh.step(&mut head, &g).unwrap();
    }
    let init: Vec<f64> = tiny_model(seed).0.parameters().iter().flat_map(|p| p.tensor.data().to_vec()).collect();
    (init, losses)
}

#[test]
fn same_seed_same_init_and_trajectory() {
    let (ia, la) = trajectory(9, 10);
    let (ib, lb) = trajectory(9, 10);
    assert_eq!(ia.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), ib.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(la.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), lb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(la[9] < la[0]);
    let (ic, _) = trajectory(10, 0);
    assert_ne!(ia, ic);
}

#[test]
fn frozen_parameters_survive_training() {
    let (mut block, _) = tiny_model(3);
    block.attn.freeze();
    let before: Vec<_> = block.attn.parameters().into_iter().cloned().collect();
    let x = normal(&[2, 3, 8], &mut Rng::new(1));
    let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() });
    for _ in 0..5 {
        let tape = Tape::new();
        let loss = block.forward(&tape, tape.constant(x.clone())).unwrap().square().unwrap().mean_all().unwrap();
        let g = tape.backward(loss).unwrap();
        opt.step(&mut block, &g).unwrap();
    }
    let after: Vec<_> = block.attn.parameters().into_iter().cloned().collect();
    assert_eq!(before, after);
    assert!(opt.moments().keys().all(|k| !k.starts_with("blk.attn")));
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-30.0f64..30.0, 12), axis in 0usize..3) {
        let tape = Tape::new();
        let x = tape.constant(t(&[2, 3, 2], values));
        let y = x.softmax(axis).unwrap();
        let y = y.value();
        let shape = [2usize, 3, 2];
        let strides = [6usize, 2, 1];
        for base in 0..12 {
            let coord = (base / strides[axis]) % shape[axis];
            if coord != 0 { continue; }
            let s: f64 = (0..shape[axis]).map(|k| y.data()[base + k * strides[axis]]).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_standardises_rows(values in prop::collection::vec(-50.0f64..50.0, 24), spread in 0.5f64..10.0) {
        let tape = Tape::new();
        let data: Vec<f64> = values.iter().enumerate().map(|(i, v)| v + spread * i as f64).collect();
        let x = tape.constant(t(&[3, 8], data));
        let y = x.layer_norm(tape.constant(Tensor::ones(vec![8])), tape.constant(Tensor::zeros(vec![8])), 1e-6).unwrap();
        for row in y.value().data().chunks(8) {
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            prop_assert!(mean.abs() < 1e-5);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn conv_matches_direct_sum(seed in 0u64..1000, stride in 1usize..3, pad in 0usize..3) {
        let mut rng = Rng::new(seed);
        let (c, k, h, w) = (1 + rng.below(3), 1 + rng.below(3), 3 + rng.below(4), 3 + rng.below(4));
        let x = normal(&[2, c, h, w], &mut rng);
        let wt = normal(&[k, c, 3, 3], &mut rng);
        let tape = Tape::new();
        let y = tape.constant(x.clone()).conv2d(tape.constant(wt.clone()), None, stride, pad).unwrap();
        let (oh, ow) = ((h + 2 * pad - 3) / stride + 1, (w + 2 * pad - 3) / stride + 1);
        prop_assert_eq!(y.shape(), vec![2, k, oh, ow]);
        for n in 0..2 { for o in 0..k { for yy in 0..oh { for xx in 0..ow {
            let mut acc = 0.0;
            for ci in 0..c { for dy in 0..3 { for dx in 0..3 {
                let iy = (yy * stride + dy) as isize - pad as isize;
                let ix = (xx * stride + dx) as isize - pad as isize;
                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                    acc += x.data()[((n * c + ci) * h + iy as usize) * w + ix as usize] * wt.data()[((o * c + ci) * 3 + dy) * 3 + dx];
                }
            }}}
            let got = y.value().data()[((n * k + o) * oh + yy) * ow + xx];
            prop_assert!((got - acc).abs() < 1e-12);
        }}}}
    }
}
