use super::*;
use crate::error::Error;
use crate::numerics::Tensor;
use crate::relation_model::ModelConfig;
use crate::synthdata::{generate_dataset, Dataset, ScenarioConfig};

fn dataset(train: usize) -> Dataset {
    let sc = ScenarioConfig {
        train_clips: train,
        eval_clips: 4,
        num_classes: 6,
        actor_feature_dim: 12,
        scene_feature_dim: 12,
        grid_height: 4,
        grid_width: 4,
        grid_frames: 2,
        num_proposals: 5,
        ..ScenarioConfig::default()
    };
    generate_dataset(&sc).unwrap()
}

fn config(epochs: usize) -> TrainingConfig {
    TrainingConfig {
        model: ModelConfig {
            embed_dim: 16,
            layers: 1,
            heads: 2,
            ffn_dim: 32,
            num_classes: 6,
            ..ModelConfig::desk()
        },
        optimizer: OptimizerConfig {
            epochs,
            batch_size: 3,
            ..OptimizerConfig::default()
        },
        aggregation: OptimizerConfig {
            epochs: 3,
            ..OptimizerConfig::aggregation()
        },
        seed: 11,
        ..TrainingConfig::default()
    }
}

fn run(cfg: TrainingConfig, ds: &Dataset) -> TrainState {
    let mut st = TrainState::for_dataset(cfg, ds).unwrap();
    train_short_term(&mut st, ds, |_, _| Ok(())).unwrap();
    st
}

fn losses(st: &TrainState) -> Vec<f64> {
    st.log.iter().filter(|r| r.map.is_none()).map(|r| r.loss).collect()
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let ds = dataset(7);
    let mut cfg = config(1);
    cfg.optimizer.lr = 0.0;
    let init = TrainState::for_dataset(cfg.clone(), &ds).unwrap().params.store.content_hash();
    let st = run(cfg, &ds);
    assert_eq!(st.step, 3);
    assert_eq!(st.params.store.content_hash(), init);
}

#[test]
fn same_seed_gives_identical_runs() {
    let ds = dataset(7);
    let a = run(config(2), &ds);
    let b = run(config(2), &ds);
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(a.to_checkpoint().unwrap().to_bytes().unwrap(), b.to_checkpoint().unwrap().to_bytes().unwrap());
    let mut other = config(2);
    other.seed = 12;
    assert_ne!(losses(&run(other, &ds)), losses(&a));
}

#[test]
fn resume_from_mid_epoch_checkpoint_is_bit_exact() {
    let ds = dataset(7);
    let full = run(config(2), &ds);

    let mut st = TrainState::for_dataset(config(2), &ds).unwrap();
    for _ in 0..4 {
        st.train_step(&ds).unwrap();
    }
    assert_eq!((st.epoch, st.batch_in_epoch), (1, 1));
    let bytes = st.to_checkpoint().unwrap().to_bytes().unwrap();
    let mut resumed = TrainState::from_checkpoint(&crate::checkpoint::Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(resumed.to_checkpoint().unwrap().to_bytes().unwrap(), bytes);
    train_short_term(&mut resumed, &ds, |_, _| Ok(())).unwrap();

    let mut stitched = losses(&st);
    stitched.extend(losses(&resumed));
    assert_eq!(stitched, losses(&full));
    assert_eq!(
        resumed.to_checkpoint().unwrap().to_bytes().unwrap(),
        full.to_checkpoint().unwrap().to_bytes().unwrap()
    );
}

#[test]
fn loss_on_a_fixed_batch_decreases() {
    let ds = dataset(4);
    let mut cfg = config(10);
    cfg.optimizer.batch_size = 4;
    let frames = ds.config.grid_frames;
    let mut st = TrainState::for_dataset(cfg, &ds).unwrap();
    let mut prev = st.loss_on(&ds.train, frames).unwrap();
    for step in 0..10 {
        st.train_step(&ds).unwrap();
        let l = st.loss_on(&ds.train, frames).unwrap();
        assert!(l < prev, "step {step}: {l} >= {prev}");
        prev = l;
    }
}

#[test]
fn non_finite_loss_aborts_with_batch_seed() {
    let ds = dataset(3);
    let mut st = TrainState::for_dataset(config(1), &ds).unwrap();
    let name = "head.fc2.bias";
    let n = st.params.store.by_name(name).unwrap().value.numel();
    st.params.set(name, Tensor::vector(vec![f64::NAN; n]).unwrap()).unwrap();
    match st.train_step(&ds) {
        Err(Error::NonFiniteLoss { epoch: 0, step: 0, .. }) => {}
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn long_term_needs_a_trained_model_and_keeps_it_fixed() {
    let ds = dataset(6);
    let mut fresh = TrainState::for_dataset(config(1), &ds).unwrap();
    assert!(matches!(train_long_term(&mut fresh, &ds), Err(Error::Config(_))));

    let mut st = run(config(1), &ds);
    let hash = st.params.store.content_hash();
    let out = train_long_term(&mut st, &ds).unwrap();
    assert_eq!(st.params.store.content_hash(), hash);
    assert_eq!(out.epoch_losses.len(), 3);
    let a = st.aggregation.as_ref().unwrap();
    assert_eq!(a.weights.shape(), &[13, 6]);

    let c = st.to_checkpoint().unwrap();
    assert_eq!(c.section_names(), vec!["model", "optimizer.m", "optimizer.v", "aggregation"]);
    let back = TrainState::from_checkpoint(&c).unwrap();
    assert_eq!(back.aggregation.as_ref(), Some(a));
}

#[test]
fn single_window_long_term_equals_short_term() {
    let ds = dataset(6);
    let mut cfg = config(1);
    cfg.windowing = crate::longterm::WindowingConfig::single();
    let mut st = run(cfg, &ds);
    let short = st.evaluate(&ds.eval, ds.config.grid_frames).unwrap();
    let out = train_long_term(&mut st, &ds).unwrap();
    assert_eq!(out.before.mean_ap, short.mean_ap);
    assert!((out.after.mean_ap - short.mean_ap).abs() <= 1e-9);
}

#[test]
fn class_count_mismatch_is_a_config_error() {
    let ds = dataset(3);
    let mut cfg = config(1);
    cfg.model.num_classes = 9;
    assert!(matches!(TrainState::for_dataset(cfg, &ds), Err(Error::Config(_))));
}
