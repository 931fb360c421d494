use rayon::prelude::*;
use rand::seq::SliceRandom;

use super::{aggregate_predictions, run_windowed, AggregationWeights, Strategy, WindowedPredictions, WindowingConfig};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_clips, ClassCatalog, EvalReport};
use crate::numerics::{ParamId, ParamStore, RngStream, Tape, Tensor, Var};
use crate::relation_model::ModelParams;
use crate::set_matching::{match_targets, target_matrix, GroundTruthSet, LossConfig, PERSON_SCORE_EPS};
use crate::synthdata::ClipSample;
use crate::training::{clip_grad_norm, AdamW, OptimizerConfig};

/// Frozen-model outputs per clip: window scores, padded targets and the
/// assignment found on the keyframe window.
#[derive(Clone, Debug)]
pub struct CachedClip {
    pub windowed: WindowedPredictions,
    pub scores: Vec<Tensor>,
    pub targets: GroundTruthSet,
    pub sigma: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct WindowCache {
    pub clips: Vec<CachedClip>,
}

impl WindowCache {
    pub fn windowed(&self) -> Vec<WindowedPredictions> {
        self.clips.iter().map(|c| c.windowed.clone()).collect()
    }

    /// Long-term evaluation of cached clips under `strategy`.
    pub fn evaluate(
        &self,
        clips: &[ClipSample],
        a: &AggregationWeights,
        strategy: Strategy,
        catalog: &ClassCatalog,
    ) -> Result<EvalReport> {
        let preds = self
            .clips
            .iter()
            .map(|c| aggregate_predictions(&c.windowed, a, strategy))
            .collect::<Result<Vec<_>>>()?;
        evaluate_clips(clips, &preds, catalog)
    }

    /// Normalised aggregation loss of `a` over every cached clip.
    pub fn loss(&self, a: &AggregationWeights, cfg: &LossConfig) -> Result<f64> {
        let store = a.to_store()?;
        let id = store.ids().next().expect("one tensor");
        let mut tape = Tape::new();
        let all: Vec<usize> = (0..self.clips.len()).collect();
        let l = batch_loss(&mut tape, &store, id, &self.clips, &all, cfg)?;
        tape.value(l).item()
    }

    /// Gradient of [`WindowCache::loss`] with respect to `A`.
    pub fn gradient(&self, a: &AggregationWeights, cfg: &LossConfig) -> Result<Tensor> {
        let mut store = a.to_store()?;
        let id = store.ids().next().expect("one tensor");
        let mut tape = Tape::new();
        let all: Vec<usize> = (0..self.clips.len()).collect();
        let l = batch_loss(&mut tape, &store, id, &self.clips, &all, cfg)?;
        tape.backward(l, &mut store)?;
        Ok(store.params()[0].grad.clone())
    }
}

/// Runs every window of every clip once and matches targets on the
/// keyframe window.
pub fn window_cache(
    params: &ModelParams,
    clips: &[ClipSample],
    cfg: &WindowingConfig,
    frames: usize,
    loss: &LossConfig,
) -> Result<WindowCache> {
    let ncls = params.config.num_classes;
    let clips = clips
        .par_iter()
        .map(|clip| {
            let windowed = run_windowed(params, clip, cfg, frames)?;
            let key = windowed.keyframe().expect("offset 0 is always present");
            let targets = GroundTruthSet::from_actors(&clip.ground_truth, clip.proposals.len(), ncls)?;
            let sigma = match_targets(&targets, key, loss)?.sigma;
            let scores = windowed.score_matrices();
            Ok(CachedClip {
                windowed,
                scores,
                targets,
                sigma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowCache { clips })
}

fn batch_loss(
    tape: &mut Tape,
    store: &ParamStore,
    id: ParamId,
    clips: &[CachedClip],
    batch: &[usize],
    cfg: &LossConfig,
) -> Result<Var> {
    let a = tape.param(store, id);
    let mut total: Option<Var> = None;
    let mut matched = 0usize;
    for &b in batch {
        let c = &clips[b];
        let mut long: Option<Var> = None;
        for (n, s) in c.scores.iter().enumerate() {
            let s = tape.constant(s.clone());
            let row = tape.slice_rows(a, n, 1)?;
            let term = tape.mul_row(s, row)?;
            long = Some(match long {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        let long = long.ok_or_else(|| Error::Contract("cached clip without windows".into()))?;
        let rows = c
            .sigma
            .iter()
            .map(|&j| tape.slice_rows(long, j, 1))
            .collect::<Result<Vec<_>>>()?;
        let gathered = tape.concat_rows(&rows)?;
        let l = tape.focal_prob_sum(gathered, target_matrix(&c.targets), cfg.focal_alpha, cfg.focal_gamma, PERSON_SCORE_EPS)?;
        matched += c.targets.real_count();
        total = Some(match total {
            Some(t) => tape.add(t, l)?,
            None => l,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("empty aggregation batch".into()))?;
    Ok(tape.scale(total, 1.0 / matched.max(1) as f64))
}

#[derive(Clone, Debug)]
pub struct AggregationReport {
    pub weights: AggregationWeights,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Fits `A` on cached window scores with the model held fixed. The model
/// store must be frozen.
pub fn train_aggregation(
    params: &ModelParams,
    cache: &WindowCache,
    init: AggregationWeights,
    loss: &LossConfig,
    opt: &OptimizerConfig,
    rng: &RngStream,
) -> Result<AggregationReport> {
    if !params.store.is_frozen() {
        return Err(Error::Contract("aggregation training needs a frozen model".into()));
    }
    opt.validate()?;
    if cache.clips.is_empty() {
        return Err(Error::Config("aggregation training needs at least one clip".into()));
    }
    let mut store = init.to_store()?;
    let id = store.ids().next().expect("one tensor");
    let mut adam = AdamW::new(&store);
    let mut epoch_losses = Vec::with_capacity(opt.epochs);
    for epoch in 0..opt.epochs {
        let mut order: Vec<usize> = (0..cache.clips.len()).collect();
        order.shuffle(&mut rng.derive(&[epoch as u64]).generator());
        let lr = opt.lr_at(epoch);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for (step, batch) in order.chunks(opt.batch_size).enumerate() {
            store.zero_grad();
            let mut tape = Tape::new();
            let l = batch_loss(&mut tape, &store, id, &cache.clips, batch, loss)?;
            let v = tape.value(l).item()?;
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    batch_seed: rng.derive(&[epoch as u64, step as u64]).stream(),
                });
            }
            tape.backward(l, &mut store)?;
            if let Some(max) = opt.grad_clip {
                clip_grad_norm(&mut store, max)?;
            }
            adam.update(&mut store, opt, lr)?;
            sum += v;
            batches += 1;
        }
        epoch_losses.push(sum / batches as f64);
        log::debug!("aggregation epoch {epoch}: loss {:.6}", sum / batches as f64);
    }
    let weights = store.params()[0].value.clone();
    Ok(AggregationReport {
        weights: AggregationWeights {
            weights,
            offsets: init.offsets,
        },
        epoch_losses,
    })
}
