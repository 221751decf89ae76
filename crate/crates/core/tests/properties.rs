mod common;

use common::{brute_force_matching, max_diff, random_tensor, randomize, sem_oracle, Planes};
use ctfn::data::consensus_gt;
use ctfn::eval::{f_measure, match_boundaries, nms_thin, pr_curve, uniform_thresholds};
use ctfn::loss::{dynamic_weight, focal_weight, loss_value, Label, LabelMap, LossConfig};
use ctfn::{BinaryMap, Ctfn, EdgeMap, ModelConfig, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use proptest::prelude::*;

fn label_strategy() -> impl Strategy<Value = Label> {
    prop_oneof![3 => Just(Label::NonEdge), 1 => Just(Label::Edge), 1 => Just(Label::Ignore)]
}

prop_compose! {
    fn prob_and_labels(max: usize)(n in 1..max)(
        p in prop::collection::vec(0.001f64..0.999, n),
        l in prop::collection::vec(label_strategy(), n),
    ) -> (EdgeMap<f64>, LabelMap) {
        let n = p.len();
        (EdgeMap::new(1, n, p).unwrap(), LabelMap::from_labels(1, n, l))
    }
}

prop_compose! {
    fn sparse_map(h: usize, w: usize, max_points: usize)(
        pts in prop::collection::vec((0..h, 0..w), 0..=max_points)
    ) -> BinaryMap {
        let mut m = BinaryMap::empty(h, w);
        for (y, x) in pts {
            m.set(y, x, true);
        }
        m
    }
}

proptest! {
    #[test]
    fn dynamic_at_epoch_zero_equals_wce((p, l) in prob_and_labels(64), gamma in 0.0f64..4.0, mu in 0.01f64..5.0) {
        let d = loss_value(&p, &l, &LossConfig::dynamic_focal(1.1, gamma, mu), 0).unwrap();
        let w = loss_value(&p, &l, &LossConfig::wce(1.1), 0).unwrap();
        prop_assert!((d - w).abs() <= 1e-12 * w.abs().max(1.0));
    }

    #[test]
    fn zero_gamma_equals_wce((p, l) in prob_and_labels(64), mu in 0.01f64..5.0, epoch in 0usize..50) {
        let d = loss_value(&p, &l, &LossConfig::dynamic_focal(1.1, 0.0, mu), epoch).unwrap();
        let w = loss_value(&p, &l, &LossConfig::wce(1.1), epoch).unwrap();
        prop_assert!((d - w).abs() <= 1e-12 * w.abs().max(1.0));
    }

    #[test]
    fn tiny_mu_approaches_focal((p, l) in prob_and_labels(64), gamma in 0.0f64..4.0, epoch in 1usize..50) {
        let d = loss_value(&p, &l, &LossConfig::dynamic_focal(1.1, gamma, 1e-9), epoch).unwrap();
        let f = loss_value(&p, &l, &LossConfig::focal(1.1, gamma), epoch).unwrap();
        prop_assert!((d - f).abs() <= 1e-7 * f.abs().max(1.0), "{} vs {}", d, f);
    }

    #[test]
    fn dynamic_weight_lies_between_focal_and_one(
        p in 0.0f64..=1.0, edge: bool, gamma in 0.0f64..5.0, mu in 0.01f64..5.0, epoch in 0usize..100
    ) {
        let w = focal_weight(p, edge, gamma);
        let d = dynamic_weight(p, edge, gamma, mu, epoch as f64);
        prop_assert!(d >= w.min(1.0) - 1e-15 && d <= w.max(1.0) + 1e-15);
    }

    #[test]
    fn consensus_is_a_fraction(maps in prop::collection::vec(prop::collection::vec(any::<bool>(), 12), 1..6)) {
        let edge: Vec<EdgeMap<f64>> = maps
            .iter()
            .map(|m| EdgeMap::new(3, 4, m.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect()).unwrap())
            .collect();
        let c = consensus_gt(&edge).unwrap();
        for (i, v) in c.data().iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(v));
            let votes = maps.iter().filter(|m| m[i]).count();
            prop_assert!((v * maps.len() as f64 - votes as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_equals_exhaustive_search(
        pred in sparse_map(12, 12, 8), gt in sparse_map(12, 12, 8), max_dist in 0.0f64..4.0
    ) {
        let c = match_boundaries(&pred, &gt, max_dist).unwrap();
        prop_assert_eq!(c.tp_pred, c.tp_gt);
        prop_assert_eq!(c.tp_pred, brute_force_matching(&pred, &gt, max_dist));
    }

    #[test]
    fn matching_count_is_symmetric(
        a in sparse_map(16, 16, 20), b in sparse_map(16, 16, 20), max_dist in 0.0f64..3.0
    ) {
        let ab = match_boundaries(&a, &b, max_dist).unwrap();
        let ba = match_boundaries(&b, &a, max_dist).unwrap();
        prop_assert_eq!(ab.tp_pred, ba.tp_gt);
        prop_assert_eq!(ab.tp_gt, ba.tp_pred);
    }

    #[test]
    fn counts_are_monotone_in_threshold(
        values in prop::collection::vec(0.0f64..1.0, 100), gt in sparse_map(10, 10, 15)
    ) {
        let pred = EdgeMap::new(10, 10, values).unwrap();
        let pts = pr_curve(&nms_thin(&pred), &[gt], 0.1, &uniform_thresholds(19)).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].n_pred <= w[0].n_pred);
        }
        for p in &pts {
            prop_assert!(p.tp_pred <= p.n_pred && p.tp_gt <= p.n_gt);
        }
    }

    #[test]
    fn f_is_harmonic_mean(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let f = f_measure(p, r);
        if p + r > 0.0 {
            prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-15);
            prop_assert!(f <= p.max(r) + 1e-15 && f >= p.min(r) - 1e-15);
        } else {
            prop_assert_eq!(f, 0.0);
        }
        prop_assert!((f_measure(p, p) - p).abs() < 1e-15);
    }

    #[test]
    fn nms_only_removes(values in prop::collection::vec(0.0f64..1.0, 64)) {
        let m = EdgeMap::new(8, 8, values).unwrap();
        let t = nms_thin(&m);
        for (a, b) in m.data().iter().zip(t.data()) {
            prop_assert!(*b == 0.0 || b == a);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sem_fuse_matches_transcription(h in 16usize..=48, w in 16usize..=48, seed in any::<u64>()) {
        let mut model = Ctfn::<f64>::new(ModelConfig::tiny(), seed).unwrap();
        randomize(&mut model, seed ^ 0x5eed, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = random_tensor(&mut rng, &[1, 3, h, w], 0.0, 1.0);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let x = tape.constant(image);
        let fs = model.extract_features(&mut tape, &bound, x).unwrap();
        let fused = model.sem_fuse(&mut tape, &bound, &fs).unwrap();
        let feats: Vec<Planes> = fs.features.iter().map(|v| Planes::from_tensor(tape.value(*v))).collect();
        for (v, o) in fused.features.iter().zip(sem_oracle(&model, &feats)) {
            prop_assert!(max_diff(tape.value(*v).data(), &o.v) < 1e-6);
        }
    }
}
