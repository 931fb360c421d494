use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generator::generate_with_world;
use super::{write_annotations, ClipSample, ClipWorld, ScenarioConfig};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    fn label(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Eval => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestClip {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub stream: u64,
    pub keyframe_time: f64,
    pub num_actors: usize,
    pub num_detections: usize,
}

/// Everything needed to regenerate a dataset, plus a per-clip listing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub clips: Vec<ManifestClip>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Validation(format!(
                "unsupported manifest version {}",
                m.format_version
            )));
        }
        if m.config_hash != config_hash(&m.config)? {
            return Err(Error::Validation("manifest config hash does not match its config".into()));
        }
        Ok(m)
    }
}

/// SHA-256 of the canonical JSON encoding of a scenario.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let text = serde_json::to_string(cfg)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub train: Vec<ClipSample>,
    pub eval: Vec<ClipSample>,
}

fn clip_stream(cfg: &ScenarioConfig, split: Split, index: usize) -> RngStream {
    RngStream::new(cfg.seed, 0).derive(&[split.label(), index as u64])
}

fn clip_id(split: Split, index: usize) -> String {
    format!("{}-{index:04}", split.name())
}

fn keyframe_time(cfg: &ScenarioConfig, index: usize) -> f64 {
    // each clip comes from its own stretch of "video"
    (cfg.timeline_past.ceil() + 1.0) + index as f64 * (cfg.timeline_past + cfg.timeline_future + 1.0).ceil()
}

fn generate_split(cfg: &ScenarioConfig, world: &ClipWorld, split: Split, count: usize) -> Result<Vec<ClipSample>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            generate_with_world(
                cfg,
                world,
                &clip_stream(cfg, split, i),
                clip_id(split, i),
                keyframe_time(cfg, i),
            )
        })
        .collect()
}

/// Generates the train and eval splits. Each clip draws from its own stream,
/// so the result does not depend on the thread count.
pub fn generate_dataset(cfg: &ScenarioConfig) -> Result<Dataset> {
    let world = ClipWorld::new(cfg)?;
    Ok(Dataset {
        config: cfg.clone(),
        train: generate_split(cfg, &world, Split::Train, cfg.train_clips)?,
        eval: generate_split(cfg, &world, Split::Eval, cfg.eval_clips)?,
    })
}

/// Regenerates one clip listed in a manifest.
pub fn regenerate_clip(manifest: &DatasetManifest, clip: &ManifestClip) -> Result<ClipSample> {
    let world = ClipWorld::new(&manifest.config)?;
    generate_with_world(
        &manifest.config,
        &world,
        &RngStream::new(clip.seed, clip.stream),
        clip.id.clone(),
        clip.keyframe_time,
    )
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[ClipSample] {
        match split {
            Split::Train => &self.train,
            Split::Eval => &self.eval,
        }
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        let mut clips = Vec::with_capacity(self.train.len() + self.eval.len());
        for split in [Split::Train, Split::Eval] {
            for (i, c) in self.split(split).iter().enumerate() {
                let s = clip_stream(&self.config, split, i);
                clips.push(ManifestClip {
                    id: c.id.clone(),
                    split,
                    seed: s.seed(),
                    stream: s.stream(),
                    keyframe_time: c.keyframe_time,
                    num_actors: c.ground_truth.len(),
                    num_detections: c.detections.len(),
                });
            }
        }
        Ok(DatasetManifest {
            format_version: MANIFEST_VERSION,
            config_hash: config_hash(&self.config)?,
            config: self.config.clone(),
            clips,
        })
    }

    /// Writes `manifest.json`, `train_gt.csv` and `eval_gt.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join("manifest.json");
        std::fs::write(&manifest, self.manifest()?.to_json()?).map_err(|e| Error::io(&manifest, e))?;
        for split in [Split::Train, Split::Eval] {
            let rows: Vec<_> = self.split(split).iter().flat_map(|c| c.annotation_records()).collect();
            write_annotations(&dir.join(format!("{}_gt.csv", split.name())), &rows)?;
        }
        Ok(())
    }

    /// Reads `manifest.json` from `dir` and regenerates every clip.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Dataset::from_manifest(&DatasetManifest::from_json(&text)?)
    }

    /// Rebuilds a dataset from a manifest written by [`Dataset::write`].
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Dataset> {
        let world = ClipWorld::new(&manifest.config)?;
        let mut ds = Dataset {
            config: manifest.config.clone(),
            train: Vec::new(),
            eval: Vec::new(),
        };
        let clips: Vec<ClipSample> = manifest
            .clips
            .par_iter()
            .map(|c| {
                generate_with_world(
                    &manifest.config,
                    &world,
                    &RngStream::new(c.seed, c.stream),
                    c.id.clone(),
                    c.keyframe_time,
                )
            })
            .collect::<Result<_>>()?;
        for (meta, clip) in manifest.clips.iter().zip(clips) {
            match meta.split {
                Split::Train => ds.train.push(clip),
                Split::Eval => ds.eval.push(clip),
            }
        }
        Ok(ds)
    }
}
