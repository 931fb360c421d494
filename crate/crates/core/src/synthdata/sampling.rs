use serde::{Deserialize, Serialize};

use super::ActorProposal;
use crate::error::{Error, Result};

/// How detector outputs become the fixed-size proposal set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSampling {
    /// Keep detections with confidence at or above the threshold.
    Threshold(f64),
    /// Keep the `K` most confident detections, no threshold.
    TopK,
}

/// Selects exactly `k` proposals, most confident first, padding with dummies.
pub fn sample_proposals(
    detections: &[ActorProposal],
    mode: ProposalSampling,
    k: usize,
    feature_dim: usize,
) -> Result<Vec<ActorProposal>> {
    if k == 0 {
        return Err(Error::Config("proposal count K must be positive".into()));
    }
    if detections.is_empty() {
        log::info!("no detections; emitting {k} dummy proposals");
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].person_score.total_cmp(&detections[a].person_score));
    let threshold = match mode {
        ProposalSampling::Threshold(t) => t,
        ProposalSampling::TopK => f64::NEG_INFINITY,
    };
    let mut out: Vec<ActorProposal> = order
        .into_iter()
        .map(|i| &detections[i])
        .filter(|d| d.person_score >= threshold)
        .take(k)
        .cloned()
        .collect();
    out.resize_with(k, || ActorProposal::dummy(feature_dim));
    Ok(out)
}
