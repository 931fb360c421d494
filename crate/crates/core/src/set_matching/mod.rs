//! Padding ground truth to `K` targets, bipartite matching against the `K`
//! predictions, and the sigmoid focal set loss.

mod hungarian;

pub use hungarian::{hungarian, MatchResult};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_l1, giou, BoundingBox};
use crate::numerics::{focal_logit_terms, Tape, Tensor, Var};
use crate::relation_model::{Prediction, PredictionSet};
use crate::synthdata::GtActor;

/// Probability clamp applied to `ĥ` before it enters the matching cost.
pub const PERSON_SCORE_EPS: f64 = 1e-6;

/// Which classification terms enter the matching cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// Person-confidence focal term only.
    #[default]
    Person,
    /// Action focal terms only, summed over classes.
    Action,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub lambda_l1: f64,
    pub lambda_giou: f64,
    pub cost_mode: CostMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            lambda_l1: 5.0,
            lambda_giou: 2.0,
            cost_mode: CostMode::Person,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_alpha > 0.0 && self.focal_alpha < 1.0) {
            return Err(Error::Config(format!("focal_alpha must lie in (0, 1), got {}", self.focal_alpha)));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::Config(format!("focal_gamma must be non-negative, got {}", self.focal_gamma)));
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_giou >= 0.0) {
            return Err(Error::Config("matching weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Sigmoid focal loss of one logit against a binary target.
pub fn focal_loss(logit: f64, target: f64, cfg: &LossConfig) -> f64 {
    focal_logit_terms(logit, target, cfg.focal_alpha, cfg.focal_gamma).0
}

/// Log-odds of a probability clamped into `[eps, 1 - eps]`.
pub fn probability_logit(p: f64) -> f64 {
    let p = p.clamp(PERSON_SCORE_EPS, 1.0 - PERSON_SCORE_EPS);
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtEntry {
    pub bbox: BoundingBox,
    /// Binary action vector of length `N_cls`.
    pub actions: Vec<f64>,
}

/// Ground truth padded with `∅` entries to the number of predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthSet {
    /// Real entries first, then `None` padding.
    pub entries: Vec<Option<GtEntry>>,
    pub num_classes: usize,
}

impl GroundTruthSet {
    /// Pads to `k` entries. With more actors than `k`, keeps the `k` largest
    /// boxes (ties keep the earlier actor) and logs a warning.
    pub fn from_actors(actors: &[GtActor], k: usize, num_classes: usize) -> Result<Self> {
        let mut order: Vec<usize> = (0..actors.len()).collect();
        if actors.len() > k {
            warn!("{} ground-truth actors exceed {k} proposals; keeping the largest", actors.len());
            order.sort_by(|&a, &b| actors[b].bbox.area().total_cmp(&actors[a].bbox.area()).then(a.cmp(&b)));
            order.truncate(k);
            order.sort_unstable();
        }
        let mut entries = Vec::with_capacity(k);
        for i in order {
            let mut actions = vec![0.0; num_classes];
            for &c in &actors[i].actions {
                if c >= num_classes {
                    return Err(Error::Validation(format!("action class {c} out of range for {num_classes} classes")));
                }
                actions[c] = 1.0;
            }
            entries.push(Some(GtEntry {
                bbox: actors[i].bbox,
                actions,
            }));
        }
        entries.resize(k, None);
        Ok(GroundTruthSet { entries, num_classes })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `K^gt`.
    pub fn real_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// Matching cost between one target and one prediction. `ĥ` enters the
/// focal term as the logit of the clamped detector probability.
pub fn pair_cost(gt: Option<&GtEntry>, pred: &Prediction, cfg: &LossConfig) -> f64 {
    let Some(gt) = gt else { return 0.0 };
    let person = || focal_loss(probability_logit(pred.person_score), 1.0, cfg);
    let action = || {
        pred.logits
            .iter()
            .zip(&gt.actions)
            .map(|(&l, &t)| focal_loss(l, t, cfg))
            .sum::<f64>()
    };
    let cls = match cfg.cost_mode {
        CostMode::Person => person(),
        CostMode::Action => action(),
        CostMode::Both => person() + action(),
    };
    cls + cfg.lambda_l1 * box_l1(&gt.bbox, &pred.bbox) + cfg.lambda_giou * (1.0 - giou(&gt.bbox, &pred.bbox))
}

/// `[K × K]` costs, targets by row and predictions by column.
pub fn cost_matrix(gts: &GroundTruthSet, preds: &PredictionSet, cfg: &LossConfig) -> Result<Tensor> {
    if gts.len() != preds.len() {
        return Err(Error::Contract(format!(
            "{} targets cannot be matched to {} predictions",
            gts.len(),
            preds.len()
        )));
    }
    let k = gts.len();
    let mut data = Vec::with_capacity(k * k);
    for g in &gts.entries {
        for p in &preds.entries {
            data.push(pair_cost(g.as_ref(), p, cfg));
        }
    }
    Tensor::matrix(k, k, data)
}

/// Optimal bipartite matching; `sigma[i]` is the prediction for target `i`.
pub fn match_targets(gts: &GroundTruthSet, preds: &PredictionSet, cfg: &LossConfig) -> Result<MatchResult> {
    hungarian(&cost_matrix(gts, preds, cfg)?)
}

fn check_permutation(sigma: &[usize], k: usize) -> Result<()> {
    if sigma.len() != k {
        return Err(Error::Contract(format!("permutation of length {} for {k} targets", sigma.len())));
    }
    let mut seen = vec![false; k];
    for &j in sigma {
        if j >= k || std::mem::replace(&mut seen[j], true) {
            return Err(Error::Contract("sigma is not a permutation".into()));
        }
    }
    Ok(())
}

/// Target labels in target order, `∅` entries as all-zero rows.
pub fn target_matrix(gts: &GroundTruthSet) -> Vec<f64> {
    let n = gts.num_classes;
    let mut t = vec![0.0; gts.len() * n];
    for (i, g) in gts.entries.iter().enumerate() {
        if let Some(g) = g {
            t[i * n..(i + 1) * n].copy_from_slice(&g.actions);
        }
    }
    t
}

/// Differentiable `Σ_i Σ_k focal(logit[σ(i), k], g_i[k])` over `[K × N_cls]`
/// logits. Summation runs in target order, so relabelling the predictions
/// together with `σ` gives a bit-identical result.
pub fn set_loss(tape: &mut Tape, gts: &GroundTruthSet, logits: Var, sigma: &[usize], cfg: &LossConfig) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    if shape != [gts.len(), gts.num_classes] {
        return Err(Error::dim("set_loss logits", &shape, &[gts.len(), gts.num_classes]));
    }
    check_permutation(sigma, gts.len())?;
    let rows = sigma
        .iter()
        .map(|&j| tape.slice_rows(logits, j, 1))
        .collect::<Result<Vec<_>>>()?;
    let gathered = tape.concat_rows(&rows)?;
    tape.focal_loss_sum(gathered, target_matrix(gts), cfg.focal_alpha, cfg.focal_gamma)
}

/// Value of [`set_loss`] without recording gradients.
pub fn set_loss_value(gts: &GroundTruthSet, logits: &Tensor, sigma: &[usize], cfg: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let v = set_loss(&mut tape, gts, l, sigma, cfg)?;
    tape.value(v).item()
}

#[cfg(test)]
mod tests;
