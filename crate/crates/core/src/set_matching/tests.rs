use proptest::prelude::*;

use super::*;
use crate::numerics::{grad_check, ParamStore, RngStream};

const LN2: f64 = std::f64::consts::LN_2;

fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
    BoundingBox::new(a, b, c, d).unwrap()
}

fn pred(i: usize, b: BoundingBox, h: f64, logits: Vec<f64>) -> Prediction {
    Prediction {
        proposal_index: i,
        bbox: b,
        person_score: h,
        scores: logits.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect(),
        logits,
    }
}

fn entry(b: BoundingBox, actions: Vec<f64>) -> Option<GtEntry> {
    Some(GtEntry { bbox: b, actions })
}

#[test]
fn focal_reduces_to_half_bce() {
    let cfg = LossConfig {
        focal_alpha: 0.5,
        focal_gamma: 0.0,
        ..LossConfig::default()
    };
    for x in [-6.0, -1.3, 0.0, 0.7, 4.0] {
        let p: f64 = 1.0 / (1.0 + (-x as f64).exp());
        assert!((focal_loss(x, 1.0, &cfg) - 0.5 * -p.ln()).abs() < 1e-12);
        assert!((focal_loss(x, 0.0, &cfg) - 0.5 * -(1.0 - p).ln()).abs() < 1e-12);
    }
}

#[test]
fn focal_limits_and_reference_value() {
    let cfg = LossConfig::default();
    assert!(focal_loss(60.0, 1.0, &cfg) < 1e-20);
    assert!(focal_loss(-60.0, 0.0, &cfg) < 1e-20);
    assert!((focal_loss(0.0, 1.0, &cfg) - 0.25 * 0.25 * LN2).abs() < 1e-15);
    assert!((focal_loss(0.0, 1.0, &cfg) - 0.04332).abs() < 1e-5);
    // stable far out: −α·ln σ(−1000) = 250
    assert!((focal_loss(-1000.0, 1.0, &cfg) - 250.0).abs() < 1e-9);
    assert!((focal_loss(1000.0, 0.0, &cfg) - 750.0).abs() < 1e-9);
}

#[test]
fn pair_cost_cases() {
    let cfg = LossConfig::default();
    let p = pred(0, bx(0.0, 0.0, 0.5, 1.0), 0.5, vec![0.0; 3]);
    assert_eq!(pair_cost(None, &p, &cfg), 0.0);
    let g = entry(bx(0.0, 0.0, 1.0, 1.0), vec![1.0, 0.0, 0.0]);
    let want = 0.25 * 0.25 * LN2 + 5.0 * 0.5 + 2.0 * 0.5;
    assert!((pair_cost(g.as_ref(), &p, &cfg) - want).abs() < 1e-12);
    assert!((pair_cost(g.as_ref(), &p, &cfg) - 3.5433).abs() < 1e-4);
    let perfect = pred(0, bx(0.0, 0.0, 1.0, 1.0), 1.0, vec![0.0; 3]);
    assert!(pair_cost(g.as_ref(), &perfect, &cfg) < 1e-12);
}

#[test]
fn cost_modes_switch_terms() {
    let g = entry(bx(0.1, 0.1, 0.4, 0.4), vec![1.0, 0.0]);
    let p = pred(0, bx(0.1, 0.1, 0.4, 0.4), 0.5, vec![0.3, -0.2]);
    let mk = |m| LossConfig {
        cost_mode: m,
        ..LossConfig::default()
    };
    let cfg = mk(CostMode::Person);
    let person = focal_loss(0.0, 1.0, &cfg);
    let action = focal_loss(0.3, 1.0, &cfg) + focal_loss(-0.2, 0.0, &cfg);
    assert!((pair_cost(g.as_ref(), &p, &mk(CostMode::Person)) - person).abs() < 1e-12);
    assert!((pair_cost(g.as_ref(), &p, &mk(CostMode::Action)) - action).abs() < 1e-12);
    assert!((pair_cost(g.as_ref(), &p, &mk(CostMode::Both)) - person - action).abs() < 1e-12);
}

#[test]
fn padding_and_clipping() {
    let a = |x: f64, w: f64, c: Vec<usize>| GtActor {
        bbox: bx(x, 0.1, x + w, 0.1 + w),
        actions: c,
    };
    let actors = vec![a(0.0, 0.1, vec![0]), a(0.2, 0.3, vec![1, 2]), a(0.6, 0.2, vec![2])];
    let g = GroundTruthSet::from_actors(&actors, 5, 3).unwrap();
    assert_eq!((g.len(), g.real_count()), (5, 3));
    assert_eq!(g.entries[1].as_ref().unwrap().actions, vec![0.0, 1.0, 1.0]);
    assert!(g.entries[3].is_none() && g.entries[4].is_none());
    let clipped = GroundTruthSet::from_actors(&actors, 2, 3).unwrap();
    assert_eq!(clipped.real_count(), 2);
    // smallest box (the first actor) is dropped
    assert_eq!(clipped.entries[0].as_ref().unwrap().bbox, actors[1].bbox);
    assert!(GroundTruthSet::from_actors(&[a(0.0, 0.1, vec![7])], 2, 3).is_err());
}

fn random_preds(k: usize, seed: u64) -> PredictionSet {
    let rng = RngStream::new(seed, 3);
    PredictionSet {
        entries: (0..k)
            .map(|i| {
                let v = rng.split(i as u64).uniform_tensor(&[7], 0.0, 1.0).into_data();
                let b = BoundingBox::centered(0.2 + 0.6 * v[0], 0.2 + 0.6 * v[1], 0.05 + 0.3 * v[2], 0.05 + 0.3 * v[3]);
                pred(i, b, v[4], vec![4.0 * v[5] - 2.0, 4.0 * v[6] - 2.0])
            })
            .collect(),
    }
}

#[test]
fn no_real_targets_costs_nothing() {
    let g = GroundTruthSet::from_actors(&[], 4, 2).unwrap();
    let m = match_targets(&g, &random_preds(4, 0), &LossConfig::default()).unwrap();
    assert_eq!(m.total_cost, 0.0);
}

#[test]
fn disjoint_overlaps_recover_the_bijection() {
    let cfg = LossConfig::default();
    // each gt sits on exactly one pred; the preds are shuffled
    let centers = [(0.15, 0.15), (0.5, 0.15), (0.85, 0.15), (0.15, 0.7), (0.5, 0.7), (0.85, 0.7)];
    let shuffle = [3usize, 0, 5, 1, 4, 2];
    let gts = GroundTruthSet {
        entries: centers
            .iter()
            .map(|&(x, y)| entry(BoundingBox::centered(x, y, 0.2, 0.2), vec![0.0]))
            .collect(),
        num_classes: 1,
    };
    let preds = PredictionSet {
        entries: shuffle
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let (x, y) = centers[s];
                pred(i, BoundingBox::centered(x + 0.01, y, 0.2, 0.2), 0.9, vec![0.0])
            })
            .collect(),
    };
    let m = match_targets(&gts, &preds, &cfg).unwrap();
    for (i, &j) in m.sigma.iter().enumerate() {
        assert_eq!(shuffle[j], i);
    }
}

#[test]
fn single_target_goes_to_row_argmin() {
    let cfg = LossConfig::default();
    for seed in 0..50 {
        let preds = random_preds(4, seed);
        let mut gts = GroundTruthSet {
            entries: vec![None; 4],
            num_classes: 2,
        };
        gts.entries[0] = entry(bx(0.3, 0.3, 0.6, 0.7), vec![1.0, 0.0]);
        let m = match_targets(&gts, &preds, &cfg).unwrap();
        let costs: Vec<f64> = preds.entries.iter().map(|p| pair_cost(gts.entries[0].as_ref(), p, &cfg)).collect();
        let best = (0..4).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap();
        assert_eq!(m.sigma[0], best);
        assert!((m.total_cost - costs[best]).abs() < 1e-12);
    }
}

#[test]
fn size_mismatch_is_contract_error() {
    let g = GroundTruthSet::from_actors(&[], 3, 2).unwrap();
    assert!(matches!(
        match_targets(&g, &random_preds(4, 0), &LossConfig::default()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn set_loss_vanishes_for_confident_negatives() {
    let g = GroundTruthSet::from_actors(&[], 3, 4).unwrap();
    let l = set_loss_value(&g, &Tensor::full(&[3, 4], -60.0), &[0, 1, 2], &LossConfig::default()).unwrap();
    assert!(l < 1e-30);
}

#[test]
fn set_loss_hand_case() {
    let cfg = LossConfig::default();
    let gts = GroundTruthSet {
        entries: vec![entry(bx(0.1, 0.1, 0.3, 0.3), vec![0.0, 1.0]), None],
        num_classes: 2,
    };
    let logits = Tensor::from_rows(&[vec![0.4, -1.2], vec![2.0, 0.1]]).unwrap();
    let sigma = [1, 0];
    let want = focal_loss(2.0, 0.0, &cfg)
        + focal_loss(0.1, 1.0, &cfg)
        + focal_loss(0.4, 0.0, &cfg)
        + focal_loss(-1.2, 0.0, &cfg);
    assert!((set_loss_value(&gts, &logits, &sigma, &cfg).unwrap() - want).abs() < 1e-14);
    assert!(matches!(set_loss_value(&gts, &logits, &[0, 0], &cfg), Err(Error::Contract(_))));
}

#[test]
fn set_loss_gradients_match_finite_differences() {
    let gts = GroundTruthSet {
        entries: vec![entry(bx(0.1, 0.1, 0.3, 0.3), vec![0.0, 1.0, 1.0]), None, entry(bx(0.5, 0.5, 0.9, 0.9), vec![1.0, 0.0, 0.0])],
        num_classes: 3,
    };
    let mut store = ParamStore::new();
    let id = store.register("logits", RngStream::new(1, 1).uniform_tensor(&[3, 3], -3.0, 3.0)).unwrap();
    let report = grad_check(&mut store, 1e-5, 1e-6, |tape, s| {
        let l = tape.param(s, id);
        set_loss(tape, &gts, l, &[2, 0, 1], &LossConfig::default())
    })
    .unwrap();
    assert!(report.all_passed(), "{:?}", report.failures());
}

proptest! {
    #[test]
    fn pair_cost_is_non_negative(seed in 0u64..5000, k in 1usize..5) {
        let preds = random_preds(k, seed);
        let g = entry(bx(0.2, 0.1, 0.5, 0.9), vec![1.0, 0.0]);
        for mode in [CostMode::Person, CostMode::Action, CostMode::Both] {
            let cfg = LossConfig { cost_mode: mode, ..LossConfig::default() };
            for p in &preds.entries {
                prop_assert!(pair_cost(g.as_ref(), p, &cfg) >= 0.0);
            }
        }
    }

    #[test]
    fn matching_ignores_action_logits(seed in 0u64..5000, shift in -5.0..5.0f64) {
        let cfg = LossConfig::default();
        let preds = random_preds(4, seed);
        let gts = GroundTruthSet {
            entries: vec![entry(bx(0.1, 0.1, 0.4, 0.5), vec![1.0, 0.0]), entry(bx(0.5, 0.4, 0.9, 0.8), vec![0.0, 1.0]), None, None],
            num_classes: 2,
        };
        let mut other = preds.clone();
        for p in &mut other.entries {
            p.logits = p.logits.iter().map(|l| l * 3.0 + shift).collect();
        }
        prop_assert_eq!(match_targets(&gts, &preds, &cfg).unwrap(), match_targets(&gts, &other, &cfg).unwrap());
    }

    #[test]
    fn set_loss_is_invariant_to_relabelling(seed in 0u64..5000, rot in 0usize..4) {
        let cfg = LossConfig::default();
        let gts = GroundTruthSet {
            entries: vec![entry(bx(0.1, 0.1, 0.4, 0.5), vec![1.0, 0.0, 1.0]), entry(bx(0.5, 0.4, 0.9, 0.8), vec![0.0, 1.0, 0.0]), None, None],
            num_classes: 3,
        };
        let logits = RngStream::new(seed, 9).uniform_tensor(&[4, 3], -4.0, 4.0);
        let sigma = [2usize, 0, 3, 1];
        // prediction j moves to row perm[j]
        let perm: Vec<usize> = (0..4).map(|j| (j + rot) % 4).collect();
        let mut moved = Tensor::zeros(&[4, 3]);
        for j in 0..4 {
            moved.data_mut()[perm[j] * 3..perm[j] * 3 + 3].copy_from_slice(logits.row(j));
        }
        let composed: Vec<usize> = sigma.iter().map(|&j| perm[j]).collect();
        let a = set_loss_value(&gts, &logits, &sigma, &cfg).unwrap();
        let b = set_loss_value(&gts, &moved, &composed, &cfg).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}
