use ctfn::eval::{correspond, default_thresholds, evaluate, match_boundaries, nms_thin, ods_ois, pr_curve, DEFAULT_TOLERANCE};
use ctfn::{BinaryMap, EdgeMap};

fn from_rows(rows: &[&str]) -> BinaryMap {
    let h = rows.len();
    let w = rows[0].len();
    let data = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
    BinaryMap::new(h, w, data).unwrap()
}

#[test]
fn shifted_prediction_depends_on_radius() {
    let gt = from_rows(&["..#..", "..#..", "..#.."]);
    let pred = from_rows(&["...#.", "...#.", "...#."]);
    let c = match_boundaries(&pred, &gt, 1.5).unwrap();
    assert_eq!((c.tp_pred, c.tp_gt), (3, 3));
    let c = match_boundaries(&pred, &gt, 0.5).unwrap();
    assert_eq!((c.tp_pred, c.tp_gt), (0, 0));
}

#[test]
fn each_pixel_matches_at_most_once() {
    // two predictions competing for one ground-truth pixel
    let gt = from_rows(&["..#.."]);
    let pred = from_rows(&[".#.#."]);
    let c = correspond(&pred, &gt, 1.0).unwrap();
    assert_eq!(c.counts().tp_pred, 1);
    assert_eq!(c.pred_matched.iter().filter(|m| **m).count(), 1);
}

#[test]
fn thick_prediction_is_thinned_before_matching() {
    let mut gt = BinaryMap::empty(24, 24);
    let mut pred = EdgeMap::<f64>::zeros(24, 24);
    for y in 0..24 {
        gt.set(y, 12, true);
        pred.set(y, 11, 0.5);
        pred.set(y, 12, 0.9);
        pred.set(y, 13, 0.5);
    }
    let thresholds = default_thresholds();
    let raw = pr_curve(&pred, std::slice::from_ref(&gt), DEFAULT_TOLERANCE, &thresholds).unwrap();
    let thin = pr_curve(&nms_thin(&pred), &[gt], DEFAULT_TOLERANCE, &thresholds).unwrap();
    let best = |pts: &[ctfn::eval::PrPoint]| pts.iter().map(|p| p.f_measure()).fold(0.0, f64::max);
    assert!(best(&raw) < 1.0 || raw[0].precision() < 1.0);
    assert_eq!(best(&thin), 1.0);
    // below 0.5 the unthinned map has three columns for one ground-truth column
    assert!((raw[10].precision() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn empty_predictions_have_zero_recall_everywhere() {
    let gt = from_rows(&["#....", ".#...", "..#.."]);
    let preds = vec![EdgeMap::<f32>::zeros(3, 5); 3];
    let gts = vec![vec![gt]; 3];
    let r = evaluate(&preds, &gts, DEFAULT_TOLERANCE, &default_thresholds(), true).unwrap();
    assert!(r.aggregate.iter().all(|p| p.recall() == 0.0 && p.n_pred == 0));
    assert_eq!((r.ods_f, r.ois_f), (0.0, 0.0));
}

#[test]
fn threshold_grids_must_agree() {
    let gt = from_rows(&["#."]);
    let pred = gt.to_edge_map::<f64>();
    let a = pr_curve(&pred, std::slice::from_ref(&gt), 0.5, &[0.5]).unwrap();
    let b = pr_curve(&pred, &[gt], 0.5, &[0.4, 0.6]).unwrap();
    assert!(ods_ois(vec![a, b]).is_err());
    assert!(ods_ois(vec![]).is_err());
}

#[test]
fn nms_keeps_ridge_centre() {
    let mut m = EdgeMap::<f64>::zeros(15, 15);
    for y in 0..15 {
        m.set(y, 6, 0.5);
        m.set(y, 7, 1.0);
        m.set(y, 8, 0.5);
    }
    let t = nms_thin(&m);
    for y in 0..15 {
        assert_eq!((t.get(y, 6), t.get(y, 7), t.get(y, 8)), (0.0, 1.0, 0.0), "row {y}");
    }
}
