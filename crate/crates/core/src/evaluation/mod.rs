//! Frame-level mean average precision at an IoU threshold, with per-class
//! and per-category breakdowns.
//!
//! AP uses all-point interpolation: the area under the precision-recall
//! curve after making precision non-increasing from the right.

mod ap;

pub use ap::{average_precision, Detection, GtInstance};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation_model::PredictionSet;
use crate::synthdata::{AnnotationRecord, ClipSample};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Pose,
    PersonPerson,
    PersonObject,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Pose, Category::PersonPerson, Category::PersonObject];

    pub fn name(self) -> &'static str {
        match self {
            Category::Pose => "pose",
            Category::PersonPerson => "person_person",
            Category::PersonObject => "person_object",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: usize,
    pub name: String,
    pub category: Category,
}

/// Class ids, names and categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub classes: Vec<ClassInfo>,
}

impl ClassCatalog {
    /// Equal thirds: pose, person-person, person-object.
    pub fn synthetic(num_classes: usize) -> Result<Self> {
        if num_classes == 0 || num_classes % 3 != 0 {
            return Err(Error::Config(format!(
                "class count must be a positive multiple of three, got {num_classes}"
            )));
        }
        let per = num_classes / 3;
        let classes = (0..num_classes)
            .map(|id| {
                let category = Category::ALL[id / per];
                ClassInfo {
                    id,
                    name: format!("{}_{}", category.name(), id % per),
                    category,
                }
            })
            .collect();
        Ok(ClassCatalog { classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    fn check(&self, class_id: usize) -> Result<()> {
        if class_id >= self.classes.len() || self.classes[class_id].id != class_id {
            return Err(Error::Validation(format!("unknown class id {class_id}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class_id: usize,
    pub name: String,
    pub category: Category,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_det: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub per_class: Vec<ClassResult>,
    /// Mean over classes with at least one ground-truth instance.
    pub mean_ap: f64,
    /// Same mean restricted to each category, `None` if it has no scored class.
    pub category_means: Vec<(Category, Option<f64>)>,
    pub num_gt: usize,
    pub num_det: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl EvalReport {
    pub fn category_mean(&self, c: Category) -> Option<f64> {
        self.category_means.iter().find(|(k, _)| *k == c).and_then(|(_, m)| *m)
    }

    /// `class_id,class_name,category,ap,num_gt,num_det`; AP is empty for
    /// classes without ground truth.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class_id,class_name,category,ap,num_gt,num_det\n");
        for c in &self.per_class {
            let ap = c.ap.map_or(String::new(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "{},{},{},{ap},{},{}", c.class_id, c.name, c.category.name(), c.num_gt, c.num_det);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "frame-mAP@{}: {:.4}\nground truth: {}  detections: {}\n",
            self.iou_threshold, self.mean_ap, self.num_gt, self.num_det
        );
        for (c, m) in &self.category_means {
            let v = m.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "mAP_{}: {v}", c.name());
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let txt = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, self.summary()).map_err(|e| Error::io(&txt, e))
    }
}

/// Per-class AP over in-memory detections and ground truth.
pub fn evaluate(dets: &[Detection], gts: &[GtInstance], catalog: &ClassCatalog, iou_threshold: f64) -> Result<EvalReport> {
    for d in dets {
        catalog.check(d.class_id)?;
    }
    for g in gts {
        catalog.check(g.class_id)?;
    }
    let per_class = catalog
        .classes
        .par_iter()
        .map(|info| {
            let d: Vec<Detection> = dets.iter().filter(|d| d.class_id == info.id).cloned().collect();
            let g: Vec<GtInstance> = gts.iter().filter(|g| g.class_id == info.id).cloned().collect();
            Ok(ClassResult {
                class_id: info.id,
                name: info.name.clone(),
                category: info.category,
                ap: average_precision(&d, &g, iou_threshold)?,
                num_gt: g.len(),
                num_det: d.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_ap = mean(per_class.iter().filter_map(|c| c.ap)).unwrap_or(0.0);
    let category_means = Category::ALL
        .iter()
        .map(|&cat| (cat, mean(per_class.iter().filter(|c| c.category == cat).filter_map(|c| c.ap))))
        .collect();
    Ok(EvalReport {
        iou_threshold,
        per_class,
        mean_ap,
        category_means,
        num_gt: gts.len(),
        num_det: dets.len(),
    })
}

/// Same as [`evaluate`] over CSV-style records (predictions must carry a
/// score).
pub fn evaluate_records(
    preds: &[AnnotationRecord],
    gts: &[AnnotationRecord],
    catalog: &ClassCatalog,
    iou_threshold: f64,
) -> Result<EvalReport> {
    let dets = preds
        .iter()
        .map(|r| {
            let score = r
                .score
                .ok_or_else(|| Error::Validation(format!("prediction for clip {} has no score", r.clip_id)))?;
            Ok(Detection {
                clip_id: r.clip_id.clone(),
                timestamp: r.timestamp,
                bbox: r.bbox,
                class_id: r.class_id,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gts: Vec<GtInstance> = gts
        .iter()
        .map(|r| GtInstance {
            clip_id: r.clip_id.clone(),
            timestamp: r.timestamp,
            bbox: r.bbox,
            class_id: r.class_id,
        })
        .collect();
    evaluate(&dets, &gts, catalog, iou_threshold)
}

/// One detection per (proposal, class), scored by the action score.
pub fn detections_from(clip: &ClipSample, pred: &PredictionSet) -> Vec<Detection> {
    pred.entries
        .iter()
        .flat_map(|p| {
            p.scores.iter().enumerate().map(|(k, &s)| Detection {
                clip_id: clip.id.clone(),
                timestamp: clip.keyframe_time,
                bbox: p.bbox,
                class_id: k,
                score: s,
            })
        })
        .collect()
}

/// One ground-truth instance per (actor, action).
pub fn ground_truth_of(clip: &ClipSample) -> Vec<GtInstance> {
    clip.ground_truth
        .iter()
        .flat_map(|g| {
            g.actions.iter().map(|&c| GtInstance {
                clip_id: clip.id.clone(),
                timestamp: clip.keyframe_time,
                bbox: g.bbox,
                class_id: c,
            })
        })
        .collect()
}

/// Scores a model's predictions on a set of clips.
pub fn evaluate_clips(clips: &[ClipSample], preds: &[PredictionSet], catalog: &ClassCatalog) -> Result<EvalReport> {
    if clips.len() != preds.len() {
        return Err(Error::Contract(format!("{} clips but {} prediction sets", clips.len(), preds.len())));
    }
    let dets: Vec<Detection> = clips.iter().zip(preds).flat_map(|(c, p)| detections_from(c, p)).collect();
    let gts: Vec<GtInstance> = clips.iter().flat_map(ground_truth_of).collect();
    evaluate(&dets, &gts, catalog, DEFAULT_IOU_THRESHOLD)
}
