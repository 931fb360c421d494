use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

/// One scored box for one class.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub clip_id: String,
    pub timestamp: f64,
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub score: f64,
}

/// One ground-truth box for one class.
#[derive(Clone, Debug, PartialEq)]
pub struct GtInstance {
    pub clip_id: String,
    pub timestamp: f64,
    pub bbox: BoundingBox,
    pub class_id: usize,
}

fn frame_key(clip: &str, t: f64) -> (String, u64) {
    (clip.to_string(), t.to_bits())
}

/// True/false-positive flags for detections visited in descending score
/// order (ties keep input order), plus that order.
pub(crate) fn greedy_flags(dets: &[Detection], gts: &[GtInstance], iou_thresh: f64) -> (Vec<usize>, Vec<bool>) {
    let mut by_frame: HashMap<(String, u64), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_frame.entry(frame_key(&g.clip_id, g.timestamp)).or_default().push(i);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let flags = order
        .iter()
        .map(|&d| {
            let det = &dets[d];
            let Some(cands) = by_frame.get(&frame_key(&det.clip_id, det.timestamp)) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in cands {
                if taken[g] {
                    continue;
                }
                let o = iou(&det.bbox, &gts[g].bbox);
                // strict comparison keeps the lower index on ties
                if o >= iou_thresh && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (order, flags)
}

/// All-point interpolated average precision for a single class. Detections
/// sharing a score form a single operating point.
///
/// Returns `None` when there is no ground truth, so the class can be left
/// out of the mean.
pub fn average_precision(dets: &[Detection], gts: &[GtInstance], iou_thresh: f64) -> Result<Option<f64>> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::Config(format!("IoU threshold must lie in (0, 1), got {iou_thresh}")));
    }
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::Validation(format!("non-finite score for clip {}", d.clip_id)));
    }
    if gts.is_empty() {
        return Ok(None);
    }
    let (order, flags) = greedy_flags(dets, gts, iou_thresh);
    let n_gt = gts.len() as f64;
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    for (i, &hit) in flags.iter().enumerate() {
        tp += hit as usize;
        let block_ends = order.get(i + 1).is_none_or(|&n| dets[n].score != dets[order[i]].score);
        if block_ends {
            precision.push(tp as f64 / (i + 1) as f64);
            recall.push(tp as f64 / n_gt);
        }
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev) * p;
        prev = *r;
    }
    Ok(Some(ap))
}
