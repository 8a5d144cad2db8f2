mod support;

use std::collections::HashSet;

use gtseg_core::metrics::{auc, confusion, report};
use gtseg_core::Mask;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use support::{pairwise_auc, rng};

fn random_case(seed: u64, n: usize, quantize: bool) -> (Vec<f64>, Vec<u8>) {
    let mut r = rng(seed);
    loop {
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
        let probs: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let p: f64 = (r.random_range(0.0..1.0) + 0.3 * f64::from(l)).min(1.0);
                if quantize {
                    (p * 10.0).round() / 10.0
                } else {
                    p
                }
            })
            .collect();
        if labels.contains(&0) && labels.contains(&1) {
            return (probs, labels);
        }
    }
}

#[test]
fn auc_matches_pairwise_oracle() {
    for seed in 0..100 {
        for quantize in [false, true] {
            let (p, l) = random_case(seed, 50, quantize);
            assert!((auc(&p, &l).unwrap() - pairwise_auc(&p, &l)).abs() < 1e-12);
        }
    }
}

#[test]
fn auc_complement() {
    for seed in 0..20 {
        let (p, l) = random_case(seed, 50, false);
        let flipped: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        assert!((auc(&flipped, &l).unwrap() - (1.0 - auc(&p, &l).unwrap())).abs() < 1e-12);
    }
}

#[test]
fn dice_and_jaccard_match_set_overlap() {
    let mut r = rng(3);
    for _ in 0..100 {
        let (h, w) = (r.random_range(1..12), r.random_range(1..12));
        let a = Mask::from_fn(h, w, |_, _| u8::from(r.random_bool(0.5)));
        let b = Mask::from_fn(h, w, |_, _| u8::from(r.random_bool(0.5)));
        let set = |m: &Mask| -> HashSet<usize> { m.data().iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i).collect() };
        let (sa, sb) = (set(&a), set(&b));
        let inter = sa.intersection(&sb).count() as f64;
        let union = sa.union(&sb).count() as f64;
        let rep = report(confusion(&a, &b).unwrap(), None).unwrap();
        if union > 0.0 {
            assert!((rep.js - inter / union).abs() < 1e-12);
            assert!((rep.dice - 2.0 * inter / (sa.len() + sb.len()) as f64).abs() < 1e-12);
        }
        assert!((rep.dice - 2.0 * rep.js / (1.0 + rep.js)).abs() < 1e-12);
        assert!(rep.dice >= rep.js);
        let c = rep.counts;
        assert_eq!(c.total(), (h * w) as u64);
    }
}

proptest! {
    #[test]
    fn report_ignores_pixel_order(bits in prop::collection::vec((0u8..2, 0u8..2, 0.0f64..1.0), 2..60), seed in any::<u64>()) {
        let n = bits.len();
        let make = |order: &[usize]| {
            let p = Mask::from_vec(1, n, order.iter().map(|&i| bits[i].0).collect()).unwrap();
            let t = Mask::from_vec(1, n, order.iter().map(|&i| bits[i].1).collect()).unwrap();
            let probs: Vec<f64> = order.iter().map(|&i| bits[i].2).collect();
            report(confusion(&p, &t).unwrap(), Some((&probs, &t))).unwrap()
        };
        let id: Vec<usize> = (0..n).collect();
        let mut shuffled = id.clone();
        shuffled.shuffle(&mut rng(seed));
        let (a, b) = (make(&id), make(&shuffled));
        prop_assert_eq!(a.counts, b.counts);
        prop_assert_eq!(a.acc, b.acc);
        prop_assert_eq!(a.dice, b.dice);
        match (a.auc, b.auc) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
        for v in [a.acc, a.se, a.sp, a.js, a.dice, a.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
