//! Sliding-window inference and learned per-class, per-offset score
//! aggregation.

mod train;

pub use train::{train_aggregation, window_cache, AggregationReport, WindowCache};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::relation_model::{predict, ModelParams, PredictionSet};
use crate::synthdata::ClipSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowingConfig {
    /// Seconds of short clip before the window centre.
    pub short_past: f64,
    pub short_future: f64,
    /// Seconds of long-term support before the keyframe, measured to the
    /// furthest window centre.
    pub long_past: f64,
    pub long_future: f64,
    /// Seconds between consecutive window centres.
    pub stride: f64,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        WindowingConfig {
            short_past: 1.05,
            short_future: 1.05,
            long_past: 6.0,
            long_future: 6.0,
            stride: 1.0,
        }
    }
}

impl WindowingConfig {
    /// Short-term only: one window at the keyframe.
    pub fn single() -> Self {
        WindowingConfig {
            long_past: 0.0,
            long_future: 0.0,
            ..WindowingConfig::default()
        }
    }

    /// Symmetric long span with `support` seconds in total. A support no
    /// longer than one short clip gives a single window.
    pub fn with_support(support: f64) -> Self {
        let d = WindowingConfig::default();
        let short = d.short_past + d.short_future;
        let half = if support <= short + 1e-9 { 0.0 } else { support / 2.0 };
        WindowingConfig {
            long_past: half,
            long_future: half,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.short_past, self.short_future, self.long_past, self.long_future, self.stride];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("windowing spans must be finite and non-negative".into()));
        }
        if !(self.stride > 0.0) {
            return Err(Error::Config(format!("window stride must be positive, got {}", self.stride)));
        }
        Ok(())
    }

    pub fn min_offset(&self) -> i64 {
        -((self.long_past / self.stride).floor() as i64)
    }

    pub fn max_offset(&self) -> i64 {
        (self.long_future / self.stride).floor() as i64
    }

    /// Window offsets `n` in ascending order.
    pub fn offsets(&self) -> Vec<i64> {
        (self.min_offset()..=self.max_offset()).collect()
    }

    pub fn num_windows(&self) -> usize {
        (self.max_offset() - self.min_offset() + 1) as usize
    }

    /// Row of offset 0 in the window list.
    pub fn keyframe_index(&self) -> usize {
        (-self.min_offset()) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub offset: i64,
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn center(&self, cfg: &WindowingConfig) -> f64 {
        self.start + cfg.short_past
    }
}

/// Clip intervals `[t + Wn - T_p, t + Wn + T_f]` for every offset `n`.
pub fn windows(cfg: &WindowingConfig, keyframe_time: f64) -> Result<Vec<Window>> {
    cfg.validate()?;
    Ok(cfg
        .offsets()
        .into_iter()
        .map(|n| {
            let c = keyframe_time + cfg.stride * n as f64;
            Window {
                offset: n,
                start: c - cfg.short_past,
                end: c + cfg.short_future,
            }
        })
        .collect())
}

/// Per-window predictions for one keyframe, all over the same proposals.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedPredictions {
    pub offsets: Vec<i64>,
    pub sets: Vec<PredictionSet>,
}

impl WindowedPredictions {
    pub fn keyframe(&self) -> Option<&PredictionSet> {
        self.offsets.iter().position(|&n| n == 0).map(|i| &self.sets[i])
    }

    /// `ĉ_n` as `[K × N_cls]` matrices in window order.
    pub fn score_matrices(&self) -> Vec<Tensor> {
        self.sets
            .iter()
            .map(|s| {
                let k = s.len();
                let n = s.entries.first().map_or(0, |e| e.scores.len());
                let data = s.entries.iter().flat_map(|e| e.scores.iter().copied()).collect();
                Tensor::matrix_unchecked(k, n, data)
            })
            .collect()
    }
}

/// Runs the model once per window, reusing the keyframe proposals. Windows
/// reaching past the clip's timeline are clamped to its ends.
pub fn run_windowed(
    params: &ModelParams,
    clip: &ClipSample,
    cfg: &WindowingConfig,
    frames: usize,
) -> Result<WindowedPredictions> {
    let ws = windows(cfg, 0.0)?;
    let sets = ws
        .par_iter()
        .map(|w| {
            let (grid, clamped) =
                clip.timeline
                    .short_clip(w.center(cfg), cfg.short_past, cfg.short_future, frames);
            if clamped {
                log::info!("{}: window {} clamped to the available timeline", clip.id, w.offset);
            }
            predict(params, &clip.proposals, &grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowedPredictions {
        offsets: ws.iter().map(|w| w.offset).collect(),
        sets,
    })
}

/// Learned weights `A`, one row per window offset and one column per class.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationWeights {
    pub weights: Tensor,
    pub offsets: Vec<i64>,
}

impl AggregationWeights {
    pub const PARAM_NAME: &'static str = "aggregation.weights";

    /// All mass on offset 0, reproducing short-term scores.
    pub fn one_hot(cfg: &WindowingConfig, num_classes: usize) -> Self {
        let nw = cfg.num_windows();
        let mut w = Tensor::zeros(&[nw, num_classes]);
        let row = cfg.keyframe_index();
        w.data_mut()[row * num_classes..(row + 1) * num_classes].fill(1.0);
        AggregationWeights {
            weights: w,
            offsets: cfg.offsets(),
        }
    }

    pub fn uniform(cfg: &WindowingConfig, num_classes: usize) -> Self {
        let nw = cfg.num_windows();
        AggregationWeights {
            weights: Tensor::full(&[nw, num_classes], 1.0 / nw as f64),
            offsets: cfg.offsets(),
        }
    }

    pub fn zeros(cfg: &WindowingConfig, num_classes: usize) -> Self {
        AggregationWeights {
            weights: Tensor::zeros(&[cfg.num_windows(), num_classes]),
            offsets: cfg.offsets(),
        }
    }

    pub fn num_windows(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }

    /// Offset holding the most column mass for class `k`; ties go to the
    /// offset nearest zero.
    pub fn peak_offset(&self, k: usize) -> i64 {
        let mut best = (f64::NEG_INFINITY, i64::MAX);
        for (i, &n) in self.offsets.iter().enumerate() {
            let v = self.weights.data()[i * self.num_classes() + k];
            if v > best.0 || (v == best.0 && n.abs() < best.1.abs()) {
                best = (v, n);
            }
        }
        best.1
    }

    /// Wraps the weights as a one-tensor store for optimisation or
    /// checkpointing.
    pub fn to_store(&self) -> Result<ParamStore> {
        let mut s = ParamStore::new();
        s.register(Self::PARAM_NAME, self.weights.clone())?;
        Ok(s)
    }

    pub fn from_tensor(weights: Tensor, cfg: &WindowingConfig) -> Result<Self> {
        if weights.rank() != 2 || weights.rows() != cfg.num_windows() {
            return Err(Error::Config(format!(
                "aggregation weights {:?} do not fit {} windows",
                weights.shape(),
                cfg.num_windows()
            )));
        }
        Ok(AggregationWeights {
            weights,
            offsets: cfg.offsets(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    WeightedSum,
    Max,
    Avg,
    TopK(usize),
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::WeightedSum => "weighted".into(),
            Strategy::Max => "max".into(),
            Strategy::Avg => "avg".into(),
            Strategy::TopK(k) => format!("top{k}"),
        }
    }
}

/// Combines per-window `[K × N_cls]` scores into long-term scores. The
/// weighted sum is left unclamped.
pub fn aggregate(scores: &[Tensor], a: &AggregationWeights, strategy: Strategy) -> Result<Tensor> {
    let Some(first) = scores.first() else {
        return Err(Error::Contract("aggregate needs at least one window".into()));
    };
    let shape = first.shape().to_vec();
    if scores.iter().any(|s| s.shape() != shape.as_slice()) || shape.len() != 2 {
        return Err(Error::Contract("window score matrices differ in shape".into()));
    }
    let nw = scores.len();
    let (k, ncls) = (shape[0], shape[1]);
    let mut out = Tensor::zeros(&[k, ncls]);
    let mut column = vec![0.0; nw];
    match strategy {
        Strategy::WeightedSum => {
            if a.weights.shape() != [nw, ncls] {
                return Err(Error::Contract(format!(
                    "aggregation weights {:?} do not fit {nw} windows × {ncls} classes",
                    a.weights.shape()
                )));
            }
        }
        Strategy::TopK(t) if t == 0 || t > nw => {
            return Err(Error::Config(format!("top-k aggregation needs 1 <= k <= {nw}, got {t}")));
        }
        _ => {}
    }
    for i in 0..k {
        for c in 0..ncls {
            for (n, s) in scores.iter().enumerate() {
                column[n] = s.data()[i * ncls + c];
            }
            let v = match strategy {
                Strategy::WeightedSum => weighted(&column, |n| a.weights.data()[n * ncls + c]),
                Strategy::Max => column.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Strategy::Avg => weighted(&column, |_| 1.0 / nw as f64),
                Strategy::TopK(t) => top_mean(&column, t),
            };
            out.data_mut()[i * ncls + c] = v;
        }
    }
    Ok(out)
}

fn weighted(column: &[f64], w: impl Fn(usize) -> f64) -> f64 {
    let mut acc = w(0) * column[0];
    for (n, v) in column.iter().enumerate().skip(1) {
        acc += w(n) * v;
    }
    acc
}

/// Mean of the `t` largest entries, summed in window order.
fn top_mean(column: &[f64], t: usize) -> f64 {
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| column[b].total_cmp(&column[a]).then(a.cmp(&b)));
    let mut keep = vec![false; column.len()];
    for &i in &order[..t] {
        keep[i] = true;
    }
    let w = 1.0 / t as f64;
    let mut acc: Option<f64> = None;
    for (n, v) in column.iter().enumerate() {
        if keep[n] {
            acc = Some(acc.map_or(w * v, |a| a + w * v));
        }
    }
    acc.unwrap_or(0.0)
}

/// Long-term prediction set: keyframe boxes and person scores with
/// aggregated action scores. Logits are carried over from the keyframe
/// window.
pub fn aggregate_predictions(
    windowed: &WindowedPredictions,
    a: &AggregationWeights,
    strategy: Strategy,
) -> Result<PredictionSet> {
    let base = windowed
        .keyframe()
        .ok_or_else(|| Error::Contract("windowed predictions lack the keyframe window".into()))?;
    let long = aggregate(&windowed.score_matrices(), a, strategy)?;
    let mut out = base.clone();
    for (i, e) in out.entries.iter_mut().enumerate() {
        e.scores = long.row(i).to_vec();
    }
    Ok(out)
}
