use maefuse_core::metrics::{dice_score, iou_score, multiclass_report, region_preset, stability_summary};
use proptest::prelude::*;

fn masks(n: usize) -> impl Strategy<Value = (Vec<u16>, Vec<u16>)> {
    (prop::collection::vec(0u16..2, n), prop::collection::vec(0u16..2, n))
}

proptest! {
    #[test]
    fn scores_are_symmetric((p, g) in masks(30)) {
        prop_assert_eq!(dice_score(&p, &g).unwrap(), dice_score(&g, &p).unwrap());
        prop_assert_eq!(iou_score(&p, &g).unwrap(), iou_score(&g, &p).unwrap());
    }

    #[test]
    fn correct_pixel_never_hurts((p, g) in masks(30), at in 0usize..30) {
        let (d0, i0) = (dice_score(&p, &g).unwrap(), iou_score(&p, &g).unwrap());
        prop_assume!(p[at] == 0 && g[at] == 0);
        let (mut p2, mut g2) = (p.clone(), g.clone());
        p2[at] = 1;
        g2[at] = 1;
        prop_assert!(dice_score(&p2, &g2).unwrap() >= d0);
        prop_assert!(iou_score(&p2, &g2).unwrap() >= i0);
    }

    #[test]
    fn iou_never_exceeds_dice((p, g) in masks(25)) {
        let (d, i) = (dice_score(&p, &g).unwrap(), iou_score(&p, &g).unwrap());
        prop_assert!(i <= d && (0.0..=1.0).contains(&i) && (0.0..=1.0).contains(&d));
    }

    #[test]
    fn stability_mean_within_range(values in prop::collection::vec(0.0f64..100.0, 2..12)) {
        let pts: Vec<(String, f64)> = values.iter().map(|v| (String::new(), *v)).collect();
        let s = stability_summary("k", &pts).unwrap();
        let lo = values.iter().cloned().fold(f64::MAX, f64::min);
        let hi = values.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(s.std >= 0.0 && s.mean >= lo - 1e-9 && s.mean <= hi + 1e-9);
    }
}

#[test]
fn two_point_summary() {
    let s = stability_summary("n", &[("10".into(), 80.0), ("20".into(), 86.0)]).unwrap();
    assert_eq!((s.mean, s.std), (83.0, 3.0));
}

#[test]
fn mean_row_excludes_background() {
    let names = vec!["a".to_string(), "b".to_string()];
    // class a has one false positive, class b is missed entirely
    let gt = [0, 1, 2, 2];
    let pred = [1, 1, 0, 0];
    let r = multiclass_report(&pred, &gt, &names).unwrap();
    assert_eq!(r.regions[0].dice, 2.0 / 3.0);
    assert_eq!(r.regions[1].dice, 0.0);
    assert_eq!(r.mean_dice, (2.0 / 3.0) / 2.0);
    assert_eq!(r.regions[1].support, 2);
}

#[test]
fn presets_have_table_sizes() {
    assert_eq!(region_preset("nacc").unwrap().len(), 13);
    assert_eq!(region_preset("mrbrains").unwrap().len(), 8);
    assert!(region_preset("unknown").is_err());
}
