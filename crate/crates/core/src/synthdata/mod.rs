//! Synthetic actor world standing in for a person detector and a video
//! backbone.
//!
//! Each clip places a few actors on the unit square. Scene tokens at an
//! actor's cells echo that actor's appearance, and active actions add a
//! class-specific signature on top; person-person interactions show up at
//! the midpoint between the two actors instead. Actor features carry
//! appearance only, so action labels can only be recovered by relating an
//! actor to the scene.

mod annotations;
mod config;
mod dataset;
mod generator;
mod sampling;

pub use annotations::{group_boxes, read_annotations, write_annotations, write_predictions, AnnotatedBox, AnnotationRecord};
pub use config::{DetectorNoise, ScenarioConfig, TemporalProfile};
pub use dataset::{config_hash, generate_dataset, regenerate_clip, Dataset, DatasetManifest, ManifestClip, Split};
pub use generator::{generate_clip, temporal_augment, AugmentedClip, ClipWorld};
pub use sampling::{sample_proposals, ProposalSampling};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geometry_vector, BoundingBox, GeometryVector};
use crate::numerics::Tensor;

/// A detector output: box, person confidence `ĥ`, RoI feature and geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorProposal {
    pub bbox: BoundingBox,
    pub person_score: f64,
    pub feature: Vec<f64>,
    pub geometry: GeometryVector,
}

impl ActorProposal {
    pub fn new(bbox: BoundingBox, person_score: f64, feature: Vec<f64>) -> Self {
        ActorProposal {
            geometry: geometry_vector(&bbox),
            bbox,
            person_score,
            feature,
        }
    }

    /// Padding entry: zero feature, zero confidence, tiny centred box.
    pub fn dummy(feature_dim: usize) -> Self {
        let side = 1e-2;
        let bbox = BoundingBox::clamped(0.5 - side / 2.0, 0.5 - side / 2.0, 0.5 + side / 2.0, 0.5 + side / 2.0);
        ActorProposal::new(bbox, 0.0, vec![0.0; feature_dim])
    }

    pub fn is_dummy(&self) -> bool {
        self.person_score == 0.0 && self.feature.iter().all(|&v| v == 0.0)
    }
}

/// Flattened `H × W × T` scene tokens, stored as `[N × C′]`.
///
/// Token order is frame-major, then row, then column:
/// `index = t·H·W + row·W + col`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneContextGrid {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub features: Tensor,
}

impl SceneContextGrid {
    pub fn new(height: usize, width: usize, frames: usize, features: Tensor) -> Result<Self> {
        let n = height * width * frames;
        if features.rank() != 2 || features.rows() != n {
            return Err(Error::dim("scene grid", &[frames, height, width], features.shape()));
        }
        Ok(SceneContextGrid {
            height,
            width,
            frames,
            features,
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.height * self.width * self.frames
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn token_index(&self, frame: usize, row: usize, col: usize) -> usize {
        frame * self.height * self.width + row * self.width + col
    }

    /// Grid cell `(row, col)` containing a normalised point.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let col = ((x * self.width as f64) as usize).min(self.width - 1);
        let row = ((y * self.height as f64) as usize).min(self.height - 1);
        (row, col)
    }
}

/// Ground-truth actor at the keyframe with its active action classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtActor {
    pub bbox: BoundingBox,
    pub actions: Vec<usize>,
}

/// Per-second scene slices around the keyframe.
///
/// Slice `i` holds the `[H·W × C′]` tokens observed at
/// `first_second + i` seconds relative to the keyframe.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneTimeline {
    pub first_second: i64,
    pub height: usize,
    pub width: usize,
    pub slices: Vec<Tensor>,
}

impl SceneTimeline {
    pub fn last_second(&self) -> i64 {
        self.first_second + self.slices.len() as i64 - 1
    }

    /// Samples `frames` evenly spaced instants over
    /// `[center - past, center + future]` (seconds relative to the keyframe)
    /// and gathers the nearest per-second slice for each. Instants outside the
    /// timeline are clamped to its ends; the flag reports whether that happened.
    pub fn short_clip(&self, center: f64, past: f64, future: f64, frames: usize) -> (SceneContextGrid, bool) {
        let span = past + future;
        let cells = self.height * self.width;
        let dim = self.slices[0].cols();
        let mut data = Vec::with_capacity(frames * cells * dim);
        let mut clamped = false;
        for f in 0..frames {
            let instant = center - past + (f as f64 + 0.5) * span / frames as f64;
            let second = instant.round() as i64;
            let idx = second.clamp(self.first_second, self.last_second());
            clamped |= idx != second;
            data.extend_from_slice(self.slices[(idx - self.first_second) as usize].data());
        }
        let features = Tensor::matrix_unchecked(frames * cells, dim, data);
        let grid = SceneContextGrid {
            height: self.height,
            width: self.width,
            frames,
            features,
        };
        (grid, clamped)
    }
}

/// A person-person interaction planted in a clip, kept for inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub actors: (usize, usize),
    pub class_id: usize,
    /// Midpoint cell `(row, col)`; the signature covers the `pair_radius`
    /// patch around it.
    pub cell: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    pub id: String,
    /// Keyframe time in seconds from the start of the source video.
    pub keyframe_time: f64,
    /// Every detector output before sampling.
    pub detections: Vec<ActorProposal>,
    /// Exactly `K` proposals fed to the model.
    pub proposals: Vec<ActorProposal>,
    pub timeline: SceneTimeline,
    pub ground_truth: Vec<GtActor>,
    pub pairs: Vec<PlantedPair>,
    /// Detection index of each ground-truth actor, `None` when missed.
    pub detection_of_actor: Vec<Option<usize>>,
}

impl ClipSample {
    /// Re-derives the proposals under a different sampling strategy.
    pub fn with_sampling(&self, mode: ProposalSampling, k: usize) -> Result<ClipSample> {
        let mut c = self.clone();
        c.proposals = sample_proposals(&self.detections, mode, k, self.feature_dim())?;
        Ok(c)
    }

    pub fn feature_dim(&self) -> usize {
        self.detections
            .first()
            .or(self.proposals.first())
            .map_or(0, |p| p.feature.len())
    }

    /// Ground-truth annotation rows (one per box and class).
    pub fn annotation_records(&self) -> Vec<AnnotationRecord> {
        self.ground_truth
            .iter()
            .flat_map(|g| {
                g.actions.iter().map(|&c| AnnotationRecord {
                    clip_id: self.id.clone(),
                    timestamp: self.keyframe_time,
                    bbox: g.bbox,
                    class_id: c,
                    score: None,
                })
            })
            .collect()
    }
}
