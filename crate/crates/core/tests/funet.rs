mod support;

use maefuse_core::funet::{
    focal_loss, hybrid_loss, mae_grids, pixel_ce, predict_labels, prepare_seg_batch, seg_train_step, FunetModel,
    FusionStrategy, HybridLossConfig, MaeDirectHead, Segmenter,
};
use maefuse_core::mae::MaeModel;
use maefuse_core::nnkit::{AdamW, AdamWConfig, Module};
use maefuse_core::{Rng, Tape, Tensor};
use proptest::prelude::*;
use support::models::{shape_records, tiny_funet, tiny_mae};

fn frozen_mae() -> MaeModel<f32> {
    let mut m = MaeModel::new(tiny_mae(), &mut Rng::new(7)).unwrap();
    m.freeze();
    m
}

#[test]
fn strategies_share_stage_shapes() {
    let mae = frozen_mae();
    let records = shape_records(2, 16, 0);
    let mut shapes = Vec::new();
    for s in FusionStrategy::ALL {
        let model = FunetModel::<f32>::new(tiny_funet(s), 2, 16, 4, &mut Rng::new(1)).unwrap();
        let batch = prepare_seg_batch(&records, &mae, &model.grid_layers(), 2).unwrap();
        let tape = Tape::new();
        let grids: Vec<_> = batch.grids.iter().map(|g| tape.constant(g.clone())).collect();
        let (stages, logits) = model.forward_stages(&tape, tape.constant(batch.images.clone()), &grids).unwrap();
        let mut st: Vec<Vec<usize>> = stages.iter().map(|v| v.shape()).collect();
        st.push(logits.shape());
        shapes.push(st);
    }
    assert_eq!(shapes[0], shapes[1]);
    assert_eq!(shapes[1], shapes[2]);
    assert_eq!(shapes[0].last().unwrap(), &vec![2, 2, 16, 16]);
    assert_eq!(shapes[0][0], vec![2, 16, 4, 4]);
}

#[test]
fn segmentation_training_keeps_mae_frozen() {
    let mae = frozen_mae();
    let before = mae.clone();
    let records = shape_records(4, 16, 3);
    let mut model = FunetModel::<f32>::new(tiny_funet(FusionStrategy::Concat), 2, 16, 4, &mut Rng::new(2)).unwrap();
    let batch = prepare_seg_batch(&records, &mae, &model.grid_layers(), 2).unwrap();
    let mut opt = AdamW::new(AdamWConfig { lr: 1e-2, ..Default::default() });
    let losses: Vec<f64> = (0..15)
        .map(|_| seg_train_step(&mut model, &mut opt, &batch, &HybridLossConfig::default()).unwrap().total)
        .collect();
    assert!(losses[14] < losses[0], "{losses:?}");
    assert_eq!(mae.parameters(), before.parameters());
    let pred = predict_labels(&model, &batch).unwrap();
    assert_eq!(pred.len(), 4 * 16 * 16);
}

#[test]
fn unfrozen_mae_grids_rejected() {
    let mae = MaeModel::<f32>::new(tiny_mae(), &mut Rng::new(7)).unwrap();
    assert!(mae_grids(&mae, &shape_records(1, 16, 0), &[1]).is_err());
}

#[test]
fn mae_direct_outputs_image_sized_logits() {
    let mae = frozen_mae();
    let head = MaeDirectHead::<f32>::new(2, 16, 4, 3, 16, &mut Rng::new(0)).unwrap();
    let mut records = shape_records(2, 16, 0);
    for r in &mut records {
        r.seg_mask.as_mut().unwrap().data.iter_mut().for_each(|v| *v = (*v).min(2));
    }
    let batch = prepare_seg_batch(&records, &mae, &head.grid_layers(), 3).unwrap();
    assert_eq!(predict_labels(&head, &batch).unwrap().len(), 2 * 256);
}

#[test]
fn focal_without_modulation_is_cross_entropy() {
    let mut rng = Rng::new(11);
    for _ in 0..100 {
        let logits = Tensor::<f64>::from_fn(vec![2, 3, 4, 4], |_| rng.normal() * 2.0);
        let labels: Vec<usize> = (0..32).map(|_| rng.below(3)).collect();
        let tape = Tape::new();
        let p = tape.constant(logits).softmax(1).unwrap();
        let f = focal_loss(p, &labels, 0.0, 1.0).unwrap().item();
        let c = pixel_ce(p, &labels).unwrap().item();
        assert!((f - c).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn hybrid_is_linear_in_lambdas(seed in 0u64..500, ld in 0.0f64..3.0, lf in 0.0f64..3.0, lc in 0.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let logits = Tensor::<f64>::from_fn(vec![1, 2, 4, 4], |_| rng.normal());
        let labels: Vec<usize> = (0..16).map(|_| rng.below(2)).collect();
        let tape = Tape::new();
        let cfg = HybridLossConfig { lambda_dice: ld, lambda_focal: lf, lambda_ce: lc, ..Default::default() };
        let h = hybrid_loss(tape.constant(logits), &labels, &cfg).unwrap();
        let expect = ld * h.dice + lf * h.focal + lc * h.ce;
        prop_assert!((h.total.item() - expect).abs() < 1e-12);
    }
}
