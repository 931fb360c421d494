use rayon::prelude::*;

use super::forward::{forward, ForwardOptions};
use super::ModelParams;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::numerics::ops::sigmoid_scalar;
use crate::numerics::{RngStream, Tape, Tensor};
use crate::synthdata::{ActorProposal, SceneContextGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Position of this entry among the model's `K` proposals.
    pub proposal_index: usize,
    pub bbox: BoundingBox,
    pub person_score: f64,
    pub logits: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Prediction {
    /// `ĥ · max_k ĉ_k`.
    pub fn confidence(&self) -> f64 {
        self.person_score * self.scores.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionSet {
    pub entries: Vec<Prediction>,
}

impl PredictionSet {
    /// Pairs proposals with a `[K × N_cls]` logit matrix.
    pub fn from_logits(proposals: &[ActorProposal], logits: &Tensor) -> Result<Self> {
        if logits.rank() != 2 || logits.rows() != proposals.len() {
            return Err(Error::dim("prediction logits", logits.shape(), &[proposals.len()]));
        }
        let entries = proposals
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let row = logits.row(i).to_vec();
                Prediction {
                    proposal_index: i,
                    bbox: p.bbox,
                    person_score: p.person_score,
                    scores: row.iter().map(|&x| sigmoid_scalar(x)).collect(),
                    logits: row,
                }
            })
            .collect();
        Ok(PredictionSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Inference on one clip (dropout off).
pub fn predict(params: &ModelParams, proposals: &[ActorProposal], grid: &SceneContextGrid) -> Result<PredictionSet> {
    let mut tape = Tape::new();
    let out = forward(&mut tape, params, proposals, grid, &RngStream::new(0, 0), ForwardOptions::eval())?;
    PredictionSet::from_logits(proposals, tape.value(out.logits))
}

/// Inference over many clips in parallel; the output order follows the input.
pub fn predict_many(
    params: &ModelParams,
    inputs: &[(&[ActorProposal], &SceneContextGrid)],
) -> Result<Vec<PredictionSet>> {
    inputs.par_iter().map(|(p, g)| predict(params, p, g)).collect()
}

/// Keeps the `k_prime` most confident entries, ties going to the lower
/// proposal index; the survivors keep their original relative order.
pub fn select_final(pred: &PredictionSet, k_prime: usize) -> Result<PredictionSet> {
    if k_prime == 0 {
        return Err(Error::Config("k_prime must be positive".into()));
    }
    if k_prime > pred.len() {
        return Err(Error::Config(format!(
            "k_prime {k_prime} exceeds the number of predictions {}",
            pred.len()
        )));
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| {
        pred.entries[b]
            .confidence()
            .total_cmp(&pred.entries[a].confidence())
            .then(a.cmp(&b))
    });
    let mut keep = order[..k_prime].to_vec();
    keep.sort_unstable();
    Ok(PredictionSet {
        entries: keep.into_iter().map(|i| pred.entries[i].clone()).collect(),
    })
}
