use serde::{Deserialize, Serialize};

use super::ProposalSampling;
use crate::error::{Error, Result};

/// Detector simulation: how proposals deviate from the ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoise {
    /// Std-dev of the Gaussian jitter added to each box corner.
    pub box_jitter: f64,
    /// Probability that each free proposal slot holds a spurious detection.
    pub false_positive_rate: f64,
    /// Probability that a real actor is not detected at all.
    pub false_negative_rate: f64,
    /// Person confidence range for true detections.
    pub true_score_range: (f64, f64),
    /// Person confidence range for spurious detections.
    pub false_score_range: (f64, f64),
}

impl Default for DetectorNoise {
    fn default() -> Self {
        DetectorNoise {
            box_jitter: 0.01,
            false_positive_rate: 0.5,
            false_negative_rate: 0.0,
            true_score_range: (0.3, 1.0),
            false_score_range: (0.0, 0.6),
        }
    }
}

/// When actions are observable relative to the keyframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalProfile {
    /// Probability that an action instance is sustained, per category
    /// (pose, person-person, person-object).
    pub sustained_probability: [f64; 3],
    /// Momentary actions are active within this many seconds of the keyframe.
    pub momentary_half_span: f64,
    /// Sustained actions extend a uniform draw from this range (seconds) to
    /// each side of the keyframe.
    pub sustained_extent: (f64, f64),
    /// Per-second probability that an active signature is visible.
    pub visibility: f64,
    /// Per-actor probability of a decoy action that is active only away from
    /// the keyframe (and therefore not a keyframe label).
    pub distractor_probability: f64,
    /// Decoy actions start at least this far (seconds) from the keyframe.
    pub distractor_min_offset: f64,
}

impl Default for TemporalProfile {
    fn default() -> Self {
        TemporalProfile {
            sustained_probability: [1.0, 0.5, 0.0],
            momentary_half_span: 1.0,
            sustained_extent: (3.0, 9.0),
            visibility: 0.9,
            distractor_probability: 0.0,
            distractor_min_offset: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub train_clips: usize,
    pub eval_clips: usize,
    /// Inclusive range for the number of real actors per clip.
    pub num_actors: (usize, usize),
    /// Proposals per clip (`K`).
    pub num_proposals: usize,
    pub proposal_sampling: ProposalSampling,
    /// Must be a multiple of three: pose, person-person, person-object
    /// classes in equal thirds.
    pub num_classes: usize,
    pub actor_feature_dim: usize,
    pub scene_feature_dim: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub grid_frames: usize,
    /// Seconds of scene timeline kept before and after the keyframe.
    pub timeline_past: f64,
    pub timeline_future: f64,
    pub box_side: (f64, f64),
    /// Minimum centre distance between two actors.
    pub min_separation: f64,
    /// Actors closer than this may interact with each other.
    pub pair_proximity: f64,
    pub pair_probability: f64,
    /// Chebyshev radius, in cells, of the patch around the midpoint cell
    /// that carries a pair signature.
    pub pair_radius: usize,
    pub object_probability: f64,
    pub signature_magnitude: f64,
    pub appearance_magnitude: f64,
    /// Number of distinct actor appearances shared across clips; actors in
    /// one clip never share one. Zero draws a fresh appearance per actor.
    pub appearance_pool: usize,
    pub scene_noise: f64,
    pub actor_noise: f64,
    pub detector: DetectorNoise,
    pub temporal: TemporalProfile,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            train_clips: 200,
            eval_clips: 50,
            num_actors: (1, 4),
            num_proposals: 10,
            proposal_sampling: ProposalSampling::TopK,
            num_classes: 12,
            actor_feature_dim: 32,
            scene_feature_dim: 32,
            grid_height: 8,
            grid_width: 8,
            grid_frames: 4,
            timeline_past: 10.0,
            timeline_future: 10.0,
            box_side: (0.15, 0.3),
            min_separation: 0.3,
            pair_proximity: 0.5,
            pair_probability: 0.8,
            pair_radius: 1,
            object_probability: 0.5,
            signature_magnitude: 4.0,
            appearance_magnitude: 6.0,
            appearance_pool: 16,
            scene_noise: 0.1,
            actor_noise: 0.05,
            detector: DetectorNoise::default(),
            temporal: TemporalProfile::default(),
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn range(name: &str, r: (f64, f64)) -> Result<()> {
    if !(r.0 <= r.1) {
        return Err(Error::Config(format!("{name} range is empty: {r:?}")));
    }
    Ok(())
}

impl ScenarioConfig {
    /// Long-clip scenario: intermittent visibility, sustained poses and
    /// interactions, momentary object interactions, and an off-keyframe decoy
    /// on every actor.
    pub fn sustained() -> Self {
        ScenarioConfig {
            temporal: TemporalProfile {
                sustained_probability: [1.0, 1.0, 0.0],
                visibility: 0.5,
                distractor_probability: 1.0,
                ..TemporalProfile::default()
            },
            ..ScenarioConfig::default()
        }
    }

    pub fn classes_per_category(&self) -> usize {
        self.num_classes / 3
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_proposals", self.num_proposals),
            ("num_classes", self.num_classes),
            ("actor_feature_dim", self.actor_feature_dim),
            ("scene_feature_dim", self.scene_feature_dim),
            ("grid_height", self.grid_height),
            ("grid_width", self.grid_width),
            ("grid_frames", self.grid_frames),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.num_classes % 3 != 0 {
            return Err(Error::Config(format!(
                "num_classes must split evenly into three categories, got {}",
                self.num_classes
            )));
        }
        if self.num_classes > self.scene_feature_dim {
            return Err(Error::Config(
                "orthonormal class signatures need scene_feature_dim >= num_classes".into(),
            ));
        }
        if self.appearance_pool != 0 && self.appearance_pool < self.num_actors.1 {
            return Err(Error::Config(format!(
                "appearance_pool {} is smaller than the largest actor count {}",
                self.appearance_pool, self.num_actors.1
            )));
        }
        if self.num_actors.0 > self.num_actors.1 {
            return Err(Error::Config(format!("num_actors range is empty: {:?}", self.num_actors)));
        }
        for (name, v) in [
            ("pair_probability", self.pair_probability),
            ("object_probability", self.object_probability),
            ("detector.false_positive_rate", self.detector.false_positive_rate),
            ("detector.false_negative_rate", self.detector.false_negative_rate),
            ("temporal.visibility", self.temporal.visibility),
            ("temporal.distractor_probability", self.temporal.distractor_probability),
        ] {
            unit(name, v)?;
        }
        for (i, p) in self.temporal.sustained_probability.iter().enumerate() {
            unit(&format!("temporal.sustained_probability[{i}]"), *p)?;
        }
        for (name, r) in [
            ("detector.true_score_range", self.detector.true_score_range),
            ("detector.false_score_range", self.detector.false_score_range),
        ] {
            range(name, r)?;
            unit(name, r.0)?;
            unit(name, r.1)?;
        }
        range("box_side", self.box_side)?;
        range("temporal.sustained_extent", self.temporal.sustained_extent)?;
        if self.box_side.0 <= 0.0 || self.box_side.1 > 1.0 {
            return Err(Error::Config(format!("box_side must lie in (0, 1], got {:?}", self.box_side)));
        }
        for (name, v) in [
            ("box_jitter", self.detector.box_jitter),
            ("scene_noise", self.scene_noise),
            ("actor_noise", self.actor_noise),
            ("signature_magnitude", self.signature_magnitude),
            ("appearance_magnitude", self.appearance_magnitude),
            ("timeline_past", self.timeline_past),
            ("timeline_future", self.timeline_future),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}
