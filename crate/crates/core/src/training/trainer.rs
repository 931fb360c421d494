use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{clip_grad_norm, AdamW, OptimizerConfig};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_clips, ClassCatalog, EvalReport};
use crate::longterm::{train_aggregation, window_cache, AggregationWeights, Strategy, WindowCache, WindowingConfig};
use crate::numerics::{RngStream, Tape, Tensor};
use crate::relation_model::{forward, forward_actors_only, ForwardOptions, Init, ModelConfig, ModelParams, PredictionSet};
use crate::set_matching::{match_targets, set_loss, set_loss_value, GroundTruthSet, LossConfig};
use crate::synthdata::{temporal_augment, ClipSample, Dataset, ScenarioConfig};

const MODEL_STREAM: u64 = 0x4d4f44454c;
const TRAIN_STREAM: u64 = 0x545241494e;
const AGGREGATION_STREAM: u64 = 0x41474752;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    /// Settings for fitting the aggregation weights.
    pub aggregation: OptimizerConfig,
    pub windowing: WindowingConfig,
    pub seed: u64,
    /// Drop scene tokens entirely (ablation).
    pub actor_only: bool,
    /// Half-width in seconds of the temporal augmentation offset.
    pub augment_range: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            model: ModelConfig::desk(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            aggregation: OptimizerConfig::aggregation(),
            windowing: WindowingConfig::default(),
            seed: 0,
            actor_only: false,
            augment_range: 1.5,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.aggregation.validate()?;
        self.windowing.validate()?;
        if !(self.augment_range >= 0.0) {
            return Err(Error::Config("augment_range must be non-negative".into()));
        }
        Ok(())
    }

    /// Checks that the model and the scenario agree on shapes.
    pub fn check_scenario(&self, sc: &ScenarioConfig) -> Result<()> {
        if self.model.num_classes != sc.num_classes {
            return Err(Error::Config(format!(
                "model predicts {} classes but the dataset has {}",
                self.model.num_classes, sc.num_classes
            )));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub phase: String,
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub map: Option<f64>,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        let map = self.map.map_or("-".to_string(), |m| format!("{m:.6}"));
        format!(
            "phase={} epoch={} step={} loss={:.9} lr={:e} map={map}",
            self.phase, self.epoch, self.step, self.loss, self.lr
        )
    }
}

/// Summary emitted after each epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub report: EvalReport,
    pub improved: bool,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainingConfig,
    pub params: ModelParams,
    pub optimizer: AdamW,
    pub aggregation: Option<AggregationWeights>,
    /// Epochs completed.
    pub epoch: usize,
    /// Batches completed within the current epoch.
    pub batch_in_epoch: usize,
    pub step: u64,
    pub epoch_loss_sum: f64,
    pub best_map: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Records produced since construction or the last load.
    pub log: Vec<LogRecord>,
}

impl TrainState {
    pub fn new(config: TrainingConfig, actor_dim: usize, scene_dim: usize) -> Result<Self> {
        config.validate()?;
        let rng = RngStream::new(config.seed, MODEL_STREAM);
        let params = ModelParams::init(&config.model, actor_dim, scene_dim, Init::Xavier, &rng)?;
        let optimizer = AdamW::new(&params.store);
        Ok(TrainState {
            config,
            params,
            optimizer,
            aggregation: None,
            epoch: 0,
            batch_in_epoch: 0,
            step: 0,
            epoch_loss_sum: 0.0,
            best_map: None,
            best_epoch: None,
            log: Vec::new(),
        })
    }

    pub fn for_dataset(config: TrainingConfig, dataset: &Dataset) -> Result<Self> {
        config.check_scenario(&dataset.config)?;
        TrainState::new(config, dataset.config.actor_feature_dim, dataset.config.scene_feature_dim)
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.optimizer.epochs
    }

    fn batches_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.config.optimizer.batch_size)
    }

    /// Clip order for `epoch`, fixed by the seed.
    fn permutation(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut RngStream::new(self.config.seed, TRAIN_STREAM).derive(&[epoch as u64]).generator());
        order
    }

    /// Runs one optimiser step; evaluates when it completes an epoch.
    pub fn train_step(&mut self, dataset: &Dataset) -> Result<(f64, Option<EpochSummary>)> {
        let train = &dataset.train;
        if train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let cfg = &self.config;
        let bs = cfg.optimizer.batch_size;
        let order = self.permutation(train.len(), self.epoch);
        let start = self.batch_in_epoch * bs;
        let batch = &order[start..(start + bs).min(train.len())];
        let lr = cfg.optimizer.lr_at(self.epoch);
        let frames = dataset.config.grid_frames;
        let ncls = cfg.model.num_classes;

        let targets = batch
            .iter()
            .map(|&i| GroundTruthSet::from_actors(&train[i].ground_truth, train[i].proposals.len(), ncls))
            .collect::<Result<Vec<_>>>()?;
        let norm = targets.iter().map(|t| t.real_count()).sum::<usize>().max(1) as f64;
        let step_rng = RngStream::new(cfg.seed, TRAIN_STREAM).derive(&[self.epoch as u64, self.step]);

        self.params.store.zero_grad();
        let mut loss = 0.0;
        for (&i, gts) in batch.iter().zip(&targets) {
            let clip = &train[i];
            let rng = step_rng.split(i as u64);
            let mut tape = Tape::new();
            let out = if cfg.actor_only {
                forward_actors_only(&mut tape, &self.params, &clip.proposals, &rng.split(2), ForwardOptions::train())?
            } else {
                let w = &cfg.windowing;
                let aug = temporal_augment(clip, cfg.augment_range, w.short_past, w.short_future, &rng.split(1))?;
                let grid = aug.scene(w.short_past, w.short_future, frames);
                forward(&mut tape, &self.params, &clip.proposals, &grid, &rng.split(2), ForwardOptions::train())?
            };
            let preds = PredictionSet::from_logits(&clip.proposals, tape.value(out.logits))?;
            let sigma = match_targets(gts, &preds, &cfg.loss)?.sigma;
            let l = set_loss(&mut tape, gts, out.logits, &sigma, &cfg.loss)?;
            let l = tape.scale(l, 1.0 / norm);
            let v = tape.value(l).item()?;
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    step: self.step as usize,
                    batch_seed: step_rng.stream(),
                });
            }
            tape.backward(l, &mut self.params.store)?;
            loss += v;
        }
        if let Some(max) = cfg.optimizer.grad_clip {
            clip_grad_norm(&mut self.params.store, max)?;
        }
        self.optimizer.update(&mut self.params.store, &cfg.optimizer, lr)?;

        self.step += 1;
        self.batch_in_epoch += 1;
        self.epoch_loss_sum += loss;
        self.log.push(LogRecord {
            phase: "short".into(),
            epoch: self.epoch,
            step: self.step,
            loss,
            lr,
            map: None,
        });
        if self.batch_in_epoch < self.batches_per_epoch(train.len()) {
            return Ok((loss, None));
        }

        let report = self.evaluate(&dataset.eval, frames)?;
        let mean_loss = self.epoch_loss_sum / self.batch_in_epoch as f64;
        let improved = self.best_map.is_none_or(|b| report.mean_ap > b);
        if improved {
            self.best_map = Some(report.mean_ap);
            self.best_epoch = Some(self.epoch);
        }
        let summary = EpochSummary {
            epoch: self.epoch,
            mean_loss,
            lr,
            report,
            improved,
        };
        self.log.push(LogRecord {
            phase: "short".into(),
            epoch: self.epoch,
            step: self.step,
            loss: mean_loss,
            lr,
            map: Some(summary.report.mean_ap),
        });
        self.epoch += 1;
        self.batch_in_epoch = 0;
        self.epoch_loss_sum = 0.0;
        Ok((loss, Some(summary)))
    }

    /// Short-term predictions on `clips` with dropout off.
    pub fn predict(&self, clips: &[ClipSample], frames: usize) -> Result<Vec<PredictionSet>> {
        use rayon::prelude::*;
        let w = &self.config.windowing;
        clips
            .par_iter()
            .map(|clip| {
                let mut tape = Tape::new();
                let rng = RngStream::new(0, 0);
                let out = if self.config.actor_only {
                    forward_actors_only(&mut tape, &self.params, &clip.proposals, &rng, ForwardOptions::eval())?
                } else {
                    let (grid, _) = clip.timeline.short_clip(0.0, w.short_past, w.short_future, frames);
                    forward(&mut tape, &self.params, &clip.proposals, &grid, &rng, ForwardOptions::eval())?
                };
                PredictionSet::from_logits(&clip.proposals, tape.value(out.logits))
            })
            .collect()
    }

    /// Normalised set loss on `clips` with dropout and augmentation off.
    pub fn loss_on(&self, clips: &[ClipSample], frames: usize) -> Result<f64> {
        let preds = self.predict(clips, frames)?;
        let ncls = self.config.model.num_classes;
        let mut total = 0.0;
        let mut matched = 0;
        for (clip, p) in clips.iter().zip(&preds) {
            let gts = GroundTruthSet::from_actors(&clip.ground_truth, clip.proposals.len(), ncls)?;
            let sigma = match_targets(&gts, p, &self.config.loss)?.sigma;
            let logits = Tensor::from_rows(&p.entries.iter().map(|e| e.logits.clone()).collect::<Vec<_>>())?;
            total += set_loss_value(&gts, &logits, &sigma, &self.config.loss)?;
            matched += gts.real_count();
        }
        Ok(total / matched.max(1) as f64)
    }

    /// Frame-mAP of short-term predictions.
    pub fn evaluate(&self, clips: &[ClipSample], frames: usize) -> Result<EvalReport> {
        let preds = self.predict(clips, frames)?;
        evaluate_clips(clips, &preds, &ClassCatalog::synthetic(self.config.model.num_classes)?)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = json!({
            "actor_dim": self.params.actor_dim,
            "scene_dim": self.params.scene_dim,
            "epoch": self.epoch,
            "batch_in_epoch": self.batch_in_epoch,
            "step": self.step,
            "optimizer_step": self.optimizer.step,
            "epoch_loss_sum": self.epoch_loss_sum,
            "best_map": self.best_map,
            "best_epoch": self.best_epoch,
        });
        let mut c = Checkpoint::new(serde_json::to_value(&self.config)?, meta);
        c.add_store("model", &self.params.store)?;
        let names = self.params.store.params().iter().map(|p| p.name.clone());
        c.add_section("optimizer.m", names.clone().zip(self.optimizer.m.iter().cloned()).collect())?;
        c.add_section("optimizer.v", names.zip(self.optimizer.v.iter().cloned()).collect())?;
        if let Some(a) = &self.aggregation {
            c.add_section("aggregation", vec![(AggregationWeights::PARAM_NAME.to_string(), a.weights.clone())])?;
        }
        Ok(c)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let config: TrainingConfig = serde_json::from_value(c.config.clone())?;
        let meta = &c.meta;
        let field = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Checkpoint(format!("missing meta field `{k}`")))
        };
        let uint = |k: &str| -> Result<u64> {
            field(k)?
                .as_u64()
                .ok_or_else(|| Error::Checkpoint(format!("meta field `{k}` is not an integer")))
        };
        let mut state = TrainState::new(config, uint("actor_dim")? as usize, uint("scene_dim")? as usize)?;
        c.load_store("model", &mut state.params.store)?;
        state.optimizer.m = moments(c, "optimizer.m", &state.params)?;
        state.optimizer.v = moments(c, "optimizer.v", &state.params)?;
        state.optimizer.step = uint("optimizer_step")?;
        state.epoch = uint("epoch")? as usize;
        state.batch_in_epoch = uint("batch_in_epoch")? as usize;
        state.step = uint("step")?;
        state.epoch_loss_sum = field("epoch_loss_sum")?
            .as_f64()
            .ok_or_else(|| Error::Checkpoint("meta field `epoch_loss_sum` is not a number".into()))?;
        state.best_map = field("best_map")?.as_f64();
        state.best_epoch = field("best_epoch")?.as_u64().map(|e| e as usize);
        if c.has_section("aggregation") {
            let t = c.section("aggregation")?;
            let w = t
                .first()
                .ok_or_else(|| Error::Checkpoint("empty aggregation section".into()))?
                .1
                .clone();
            state.aggregation = Some(AggregationWeights::from_tensor(w, &state.config.windowing)?);
        }
        Ok(state)
    }
}

fn moments(c: &Checkpoint, section: &str, params: &ModelParams) -> Result<Vec<Tensor>> {
    let t = c.section(section)?;
    let store = params.store.params();
    if t.len() != store.len() || t.iter().zip(store).any(|((n, v), p)| *n != p.name || v.shape() != p.value.shape()) {
        return Err(Error::Checkpoint(format!("section `{section}` does not fit the model")));
    }
    Ok(t.iter().map(|(_, v)| v.clone()).collect())
}

/// Trains until the configured epoch count, calling `on_epoch` after each
/// evaluation.
pub fn train_short_term(
    state: &mut TrainState,
    dataset: &Dataset,
    mut on_epoch: impl FnMut(&TrainState, &EpochSummary) -> Result<()>,
) -> Result<()> {
    state.config.check_scenario(&dataset.config)?;
    while !state.is_finished() {
        if let (_, Some(summary)) = state.train_step(dataset)? {
            log::info!(
                "epoch {} loss {:.6} lr {:e} mAP {:.4}",
                summary.epoch,
                summary.mean_loss,
                summary.lr,
                summary.report.mean_ap
            );
            on_epoch(state, &summary)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LongTermOutcome {
    pub before: EvalReport,
    pub after: EvalReport,
    pub epoch_losses: Vec<f64>,
    pub eval_cache: WindowCache,
}

/// Fits the aggregation weights with the phase-1 model frozen and stores them
/// in `state`. Model parameters are left bit-identical.
pub fn train_long_term(state: &mut TrainState, dataset: &Dataset) -> Result<LongTermOutcome> {
    if state.step == 0 {
        return Err(Error::Config("long-term training needs a trained phase-1 model".into()));
    }
    if state.config.actor_only {
        return Err(Error::Config("long-term aggregation needs scene context".into()));
    }
    state.config.check_scenario(&dataset.config)?;
    let cfg = state.config.clone();
    let frames = dataset.config.grid_frames;
    let ncls = cfg.model.num_classes;
    let mut frozen = state.params.clone();
    frozen.store.freeze();
    let hash = frozen.store.content_hash();

    let train_cache = window_cache(&frozen, &dataset.train, &cfg.windowing, frames, &cfg.loss)?;
    let eval_cache = window_cache(&frozen, &dataset.eval, &cfg.windowing, frames, &cfg.loss)?;
    let catalog = ClassCatalog::synthetic(ncls)?;
    let init = AggregationWeights::one_hot(&cfg.windowing, ncls);
    let before = eval_cache.evaluate(&dataset.eval, &init, Strategy::WeightedSum, &catalog)?;
    let report = train_aggregation(
        &frozen,
        &train_cache,
        init,
        &cfg.loss,
        &cfg.aggregation,
        &RngStream::new(cfg.seed, AGGREGATION_STREAM),
    )?;
    let after = eval_cache.evaluate(&dataset.eval, &report.weights, Strategy::WeightedSum, &catalog)?;
    if frozen.store.content_hash() != hash || state.params.store.content_hash() != hash {
        return Err(Error::Contract("model parameters changed during aggregation training".into()));
    }
    for (e, l) in report.epoch_losses.iter().enumerate() {
        state.log.push(LogRecord {
            phase: "long".into(),
            epoch: e,
            step: state.step,
            loss: *l,
            lr: cfg.aggregation.lr_at(e),
            map: (e + 1 == report.epoch_losses.len()).then_some(after.mean_ap),
        });
    }
    log::info!("long-term mAP {:.4} -> {:.4}", before.mean_ap, after.mean_ap);
    state.aggregation = Some(report.weights);
    Ok(LongTermOutcome {
        before,
        after,
        epoch_losses: report.epoch_losses,
        eval_cache,
    })
}
