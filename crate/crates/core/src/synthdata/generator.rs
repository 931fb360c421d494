use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    sample_proposals, ActorProposal, ClipSample, GtActor, PlantedPair, ScenarioConfig, SceneContextGrid,
    SceneTimeline,
};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::numerics::{RngStream, Tensor};

const WORLD_STREAM: u64 = 0x574f_524c_44;

/// Scenario-wide constants: class signatures, the appearance projection
/// used to echo actor appearance into scene tokens, and the identity pool.
#[derive(Clone, Debug)]
pub struct ClipWorld {
    /// `[num_classes × C′]`, orthonormal rows.
    pub signatures: Tensor,
    /// `[C′ × C]`, Gaussian with variance `1/C`, then projected onto the
    /// orthogonal complement of the signatures.
    pub projection: Tensor,
    /// `[pool × C]` unit appearances; orthonormal while `pool ≤ C`.
    pub identities: Tensor,
}

fn gaussian(g: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(g)
}

/// Gram-Schmidt over Gaussian draws; rows past `dim` are plain unit vectors.
fn unit_rows(g: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(g)).collect();
        if rows.len() < dim {
            for r in &rows {
                let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(r) {
                    *x -= d * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    rows
}

impl ClipWorld {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mut g = RngStream::new(cfg.seed, WORLD_STREAM).generator();
        let dim = cfg.scene_feature_dim;
        let signatures = Tensor::from_rows(&unit_rows(&mut g, cfg.num_classes, dim))?;
        let c = cfg.actor_feature_dim;
        let scale = 1.0 / (c as f64).sqrt();
        let mut projection = Tensor::from_fn(dim, c, |_, _| gaussian(&mut g) * scale);
        for j in 0..c {
            for k in 0..cfg.num_classes.min(dim) {
                let sig = signatures.row(k);
                let d: f64 = (0..dim).map(|r| sig[r] * projection.data()[r * c + j]).sum();
                for (r, s) in sig.iter().enumerate() {
                    projection.data_mut()[r * c + j] -= d * s;
                }
            }
        }
        let identities = if cfg.appearance_pool == 0 {
            Tensor::zeros(&[0, c])
        } else {
            Tensor::from_rows(&unit_rows(&mut g, cfg.appearance_pool, c))?
        };
        Ok(ClipWorld {
            signatures,
            projection,
            identities,
        })
    }

    pub fn signature(&self, class: usize) -> &[f64] {
        self.signatures.row(class)
    }

    fn echo(&self, appearance: &[f64]) -> Vec<f64> {
        (0..self.projection.rows())
            .map(|r| self.projection.row(r).iter().zip(appearance).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn quantize(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn quantized_box(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
    let b = BoundingBox::clamped(x0, y0, x1, y1);
    let [a, b2, c, d] = b.coords().map(quantize);
    BoundingBox::new(a, b2, c, d).unwrap_or(b)
}

/// Active interval (seconds relative to the keyframe) of one action instance.
#[derive(Clone, Copy, Debug)]
struct Interval(f64, f64);

impl Interval {
    fn contains(&self, s: f64) -> bool {
        self.0 <= s && s <= self.1
    }
}

struct Instance {
    class: usize,
    interval: Interval,
    /// Cells carrying the signature.
    cells: Vec<(usize, usize)>,
    /// Appearance echoed together with the signature (pair interactions).
    echo: Option<Vec<f64>>,
}

struct Actor {
    bbox: BoundingBox,
    appearance: Vec<f64>,
    cells: Vec<(usize, usize)>,
    labels: Vec<usize>,
}

fn cells_of(b: &BoundingBox, h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let (cx, cy) = ((c as f64 + 0.5) / w as f64, (r as f64 + 0.5) / h as f64);
            if cx >= b.x_lt() && cx <= b.x_rb() && cy >= b.y_lt() && cy <= b.y_rb() {
                cells.push((r, c));
            }
        }
    }
    if cells.is_empty() {
        let (cx, cy) = b.center();
        cells.push((
            ((cy * h as f64) as usize).min(h - 1),
            ((cx * w as f64) as usize).min(w - 1),
        ));
    }
    cells
}

fn random_box(g: &mut ChaCha8Rng, side: (f64, f64)) -> BoundingBox {
    let w = g.random_range(side.0..=side.1);
    let h = g.random_range(side.0..=side.1);
    let x = g.random_range(0.0..=1.0 - w);
    let y = g.random_range(0.0..=1.0 - h);
    quantized_box(x, y, x + w, y + h)
}

fn unit_gaussian(g: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gaussian(g)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

fn sample_interval(g: &mut ChaCha8Rng, cfg: &ScenarioConfig, category: usize) -> Interval {
    let t = &cfg.temporal;
    if g.random_bool(t.sustained_probability[category]) {
        let (lo, hi) = t.sustained_extent;
        Interval(-g.random_range(lo..=hi), g.random_range(lo..=hi))
    } else {
        Interval(-t.momentary_half_span, t.momentary_half_span)
    }
}

/// Generates one clip. The same `(cfg, rng)` always yields the same clip.
pub fn generate_clip(cfg: &ScenarioConfig, rng: &RngStream) -> Result<ClipSample> {
    let world = ClipWorld::new(cfg)?;
    generate_with_world(cfg, &world, rng, format!("clip-{:016x}", rng.stream()), cfg.timeline_past)
}

pub(crate) fn generate_with_world(
    cfg: &ScenarioConfig,
    world: &ClipWorld,
    rng: &RngStream,
    id: String,
    keyframe_time: f64,
) -> Result<ClipSample> {
    let (h, w) = (cfg.grid_height, cfg.grid_width);
    let per_cat = cfg.classes_per_category();
    let c_dim = cfg.actor_feature_dim;
    let feat_scale = (c_dim as f64).sqrt();

    // layout
    let mut g = rng.split(1).generator();
    let n_actors = g.random_range(cfg.num_actors.0..=cfg.num_actors.1);
    let mut pool: Vec<usize> = (0..cfg.appearance_pool).collect();
    pool.shuffle(&mut g);
    let mut pool = pool.into_iter();
    let mut appearance = |g: &mut ChaCha8Rng| match pool.next() {
        Some(i) => world.identities.row(i).to_vec(),
        None => unit_gaussian(g, c_dim),
    };
    let mut actors: Vec<Actor> = Vec::new();
    for _ in 0..n_actors {
        let mut placed = None;
        for _ in 0..200 {
            let b = random_box(&mut g, cfg.box_side);
            let (cx, cy) = b.center();
            let ok = actors.iter().all(|a| {
                let (ax, ay) = a.bbox.center();
                ((ax - cx).powi(2) + (ay - cy).powi(2)).sqrt() >= cfg.min_separation && iou(&a.bbox, &b) == 0.0
            });
            if ok {
                placed = Some(b);
                break;
            }
        }
        let Some(bbox) = placed else { break };
        actors.push(Actor {
            cells: cells_of(&bbox, h, w),
            appearance: appearance(&mut g),
            bbox,
            labels: Vec::new(),
        });
    }

    // actions
    let mut instances: Vec<Instance> = Vec::new();
    let mut pairs: Vec<PlantedPair> = Vec::new();
    let mut g = rng.split(2).generator();
    for a in actors.iter_mut() {
        let pose = g.random_range(0..per_cat);
        instances.push(Instance {
            class: pose,
            interval: sample_interval(&mut g, cfg, 0),
            cells: a.cells.clone(),
            echo: None,
        });
        a.labels.push(pose);
        if g.random_bool(cfg.object_probability) {
            let class = 2 * per_cat + g.random_range(0..per_cat);
            instances.push(Instance {
                class,
                interval: sample_interval(&mut g, cfg, 2),
                cells: a.cells.clone(),
                echo: None,
            });
            a.labels.push(class);
        }
    }
    let mut paired = vec![false; actors.len()];
    for i in 0..actors.len() {
        for j in i + 1..actors.len() {
            if paired[i] || paired[j] {
                continue;
            }
            let (ax, ay) = actors[i].bbox.center();
            let (bx, by) = actors[j].bbox.center();
            let dist = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            if dist >= cfg.pair_proximity || !g.random_bool(cfg.pair_probability) {
                continue;
            }
            let class = per_cat + g.random_range(0..per_cat);
            let (mx, my) = (0.5 * (ax + bx), 0.5 * (ay + by));
            let cell = (
                ((my * h as f64) as usize).min(h - 1),
                ((mx * w as f64) as usize).min(w - 1),
            );
            let echo: Vec<f64> = actors[i]
                .appearance
                .iter()
                .zip(&actors[j].appearance)
                .map(|(p, q)| p + q)
                .collect();
            let r = cfg.pair_radius;
            let mut patch = Vec::new();
            for row in cell.0.saturating_sub(r)..=(cell.0 + r).min(h - 1) {
                for col in cell.1.saturating_sub(r)..=(cell.1 + r).min(w - 1) {
                    patch.push((row, col));
                }
            }
            instances.push(Instance {
                class,
                interval: sample_interval(&mut g, cfg, 1),
                cells: patch,
                echo: Some(world.echo(&echo)),
            });
            actors[i].labels.push(class);
            actors[j].labels.push(class);
            paired[i] = true;
            paired[j] = true;
            pairs.push(PlantedPair {
                actors: (i, j),
                class_id: class,
                cell,
            });
        }
    }
    let t = &cfg.temporal;
    for a in &actors {
        if !g.random_bool(t.distractor_probability) {
            continue;
        }
        let category = if g.random_bool(0.5) { 0 } else { 2 };
        let choices: Vec<usize> = (category * per_cat..(category + 1) * per_cat)
            .filter(|c| !a.labels.contains(c))
            .collect();
        let Some(&class) = choices.choose(&mut g) else { continue };
        let horizon = if g.random_bool(0.5) { cfg.timeline_future } else { -cfg.timeline_past };
        if horizon.abs() <= t.distractor_min_offset {
            continue;
        }
        let start = g.random_range(t.distractor_min_offset..horizon.abs());
        let len = g.random_range(1.0..=3.0);
        let interval = if horizon > 0.0 {
            Interval(start, start + len)
        } else {
            Interval(-start - len, -start)
        };
        instances.push(Instance {
            class,
            interval,
            cells: a.cells.clone(),
            echo: None,
        });
    }

    // scene timeline
    let first = -(cfg.timeline_past.floor() as i64);
    let last = cfg.timeline_future.floor() as i64;
    let dim = cfg.scene_feature_dim;
    let echoes: Vec<Vec<f64>> = actors.iter().map(|a| world.echo(&a.appearance)).collect();
    let mut g_noise = rng.split(3).generator();
    let mut g_vis = rng.split(4).generator();
    let mut slices = Vec::new();
    for s in first..=last {
        let mut data: Vec<f64> = (0..h * w * dim).map(|_| cfg.scene_noise * gaussian(&mut g_noise)).collect();
        let mut add = |cell: (usize, usize), v: &[f64], scale: f64| {
            let base = (cell.0 * w + cell.1) * dim;
            for (d, x) in data[base..base + dim].iter_mut().zip(v) {
                *d += scale * x;
            }
        };
        for (a, e) in actors.iter().zip(&echoes) {
            for &cell in &a.cells {
                add(cell, e, cfg.appearance_magnitude);
            }
        }
        for inst in &instances {
            let visible = g_vis.random_bool(t.visibility);
            if !inst.interval.contains(s as f64) || !visible {
                continue;
            }
            for &cell in &inst.cells {
                add(cell, world.signature(inst.class), cfg.signature_magnitude);
                if let Some(e) = &inst.echo {
                    add(cell, e, cfg.appearance_magnitude);
                }
            }
        }
        slices.push(Tensor::matrix(h * w, dim, data)?);
    }
    let timeline = SceneTimeline {
        first_second: first,
        height: h,
        width: w,
        slices,
    };

    // detector
    let det = &cfg.detector;
    let mut g = rng.split(5).generator();
    let mut detections = Vec::new();
    let mut detection_of_actor = Vec::with_capacity(actors.len());
    let noisy_feature = |g: &mut ChaCha8Rng, app: &[f64]| -> Vec<f64> {
        app.iter()
            .map(|x| feat_scale * x + cfg.actor_noise * gaussian(g))
            .collect()
    };
    for a in &actors {
        if g.random_bool(det.false_negative_rate) {
            detection_of_actor.push(None);
            continue;
        }
        let [x0, y0, x1, y1] = a.bbox.coords();
        let mut j = || det.box_jitter * gaussian(&mut g);
        let (jx0, jy0, jx1, jy1) = (j(), j(), j(), j());
        let bbox = quantized_box(x0 + jx0, y0 + jy0, x1 + jx1, y1 + jy1);
        let score = quantize(g.random_range(det.true_score_range.0..=det.true_score_range.1));
        let feature = noisy_feature(&mut g, &a.appearance);
        detection_of_actor.push(Some(detections.len()));
        detections.push(ActorProposal::new(bbox, score, feature));
    }
    let free = cfg.num_proposals.saturating_sub(detections.len());
    for _ in 0..free {
        if !g.random_bool(det.false_positive_rate) {
            continue;
        }
        let mut bbox = random_box(&mut g, cfg.box_side);
        for _ in 0..50 {
            if actors.iter().all(|a| iou(&a.bbox, &bbox) < 0.3) {
                break;
            }
            bbox = random_box(&mut g, cfg.box_side);
        }
        let score = quantize(g.random_range(det.false_score_range.0..=det.false_score_range.1));
        let app = appearance(&mut g);
        let feature = noisy_feature(&mut g, &app);
        detections.push(ActorProposal::new(bbox, score, feature));
    }
    let proposals = sample_proposals(&detections, cfg.proposal_sampling, cfg.num_proposals, c_dim)?;

    let ground_truth = actors
        .iter()
        .map(|a| {
            let mut actions = a.labels.clone();
            actions.sort_unstable();
            GtActor {
                bbox: a.bbox,
                actions,
            }
        })
        .collect();
    Ok(ClipSample {
        id,
        keyframe_time,
        detections,
        proposals,
        timeline,
        ground_truth,
        pairs,
        detection_of_actor,
    })
}

/// A clip whose short window is displaced by `offset` seconds.
#[derive(Clone, Copy, Debug)]
pub struct AugmentedClip<'a> {
    pub sample: &'a ClipSample,
    pub offset: f64,
}

impl AugmentedClip<'_> {
    pub fn scene(&self, past: f64, future: f64, frames: usize) -> SceneContextGrid {
        self.sample.timeline.short_clip(self.offset, past, future, frames).0
    }
}

/// Draws `Δ ~ U[-range, range]` and shifts the short clip by it. Proposals
/// and ground truth stay tied to the keyframe.
pub fn temporal_augment<'a>(
    sample: &'a ClipSample,
    range: f64,
    past: f64,
    future: f64,
    rng: &RngStream,
) -> Result<AugmentedClip<'a>> {
    if range < 0.0 {
        return Err(Error::Config(format!("augmentation range must be non-negative, got {range}")));
    }
    // rounding to the nearest slice buys half a second of slack
    let slack_past = -sample.timeline.first_second as f64 + 0.5 - past;
    let slack_future = sample.timeline.last_second() as f64 + 0.5 - future;
    if range > slack_past.min(slack_future) {
        return Err(Error::Config(format!(
            "augmentation range {range}s exceeds timeline slack {:.2}s",
            slack_past.min(slack_future)
        )));
    }
    if range == 0.0 {
        return Ok(AugmentedClip { sample, offset: 0.0 });
    }
    let offset = rng.generator().random_range(-range..=range);
    Ok(AugmentedClip { sample, offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::DetectorNoise;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn noiseless_detector_reproduces_gt_boxes() {
        let mut c = cfg();
        c.detector = DetectorNoise {
            box_jitter: 0.0,
            false_positive_rate: 0.0,
            false_negative_rate: 0.0,
            ..DetectorNoise::default()
        };
        for s in 0..20 {
            let clip = generate_clip(&c, &RngStream::new(1, s)).unwrap();
            assert_eq!(clip.detections.len(), clip.ground_truth.len());
            for (gt, d) in clip.ground_truth.iter().zip(&clip.detections) {
                assert_eq!(gt.bbox, d.bbox);
            }
        }
    }

    #[test]
    fn same_seed_same_clip() {
        let a = generate_clip(&cfg(), &RngStream::new(3, 9)).unwrap();
        let b = generate_clip(&cfg(), &RngStream::new(3, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate_clip(&cfg(), &RngStream::new(3, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn structural_invariants() {
        let c = cfg();
        for s in 0..30 {
            let clip = generate_clip(&c, &RngStream::new(5, s)).unwrap();
            assert_eq!(clip.proposals.len(), c.num_proposals);
            assert!(!clip.ground_truth.is_empty() && clip.ground_truth.len() <= 4);
            for gt in &clip.ground_truth {
                // exactly one pose label per actor
                assert_eq!(gt.actions.iter().filter(|&&a| a < 4).count(), 1);
            }
            for p in &clip.proposals {
                assert_eq!(p.feature.len(), c.actor_feature_dim);
                assert_eq!(p.geometry, crate::geometry::geometry_vector(&p.bbox));
            }
            let grid = clip.timeline.short_clip(0.0, 1.05, 1.05, c.grid_frames).0;
            assert_eq!(grid.num_tokens(), 8 * 8 * 4);
            assert_eq!(grid.feature_dim(), c.scene_feature_dim);
        }
    }

    #[test]
    fn signatures_are_orthonormal() {
        let w = ClipWorld::new(&cfg()).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let d: f64 = w.signature(i).iter().zip(w.signature(j)).map(|(a, b)| a * b).sum();
                assert!((d - (i == j) as u8 as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn augmentation_draws() {
        let clip = generate_clip(&cfg(), &RngStream::new(2, 2)).unwrap();
        let same = temporal_augment(&clip, 0.0, 1.05, 1.05, &RngStream::new(0, 0)).unwrap();
        assert_eq!(same.offset, 0.0);
        assert_eq!(
            same.scene(1.05, 1.05, 4),
            clip.timeline.short_clip(0.0, 1.05, 1.05, 4).0
        );
        assert!(matches!(
            temporal_augment(&clip, 12.0, 1.05, 1.05, &RngStream::new(0, 0)),
            Err(Error::Config(_))
        ));
        let base = RngStream::new(77, 0);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|i| temporal_augment(&clip, 1.5, 1.05, 1.05, &base.split(i)).unwrap().offset)
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() <= 0.05, "{mean}");
    }

    #[test]
    fn shifted_window_still_sees_sustained_signature() {
        // one actor, fully visible sustained pose, no noise
        let mut c = cfg();
        c.num_actors = (1, 1);
        c.scene_noise = 0.0;
        c.appearance_magnitude = 0.0;
        c.object_probability = 0.0;
        c.temporal.visibility = 1.0;
        c.temporal.sustained_probability = [1.0, 1.0, 1.0];
        let world = ClipWorld::new(&c).unwrap();
        let clip = generate_clip(&c, &RngStream::new(4, 4)).unwrap();
        let pose = clip.ground_truth[0].actions[0];
        let aug = AugmentedClip { sample: &clip, offset: 1.0 };
        let grid = aug.scene(1.05, 1.05, 4);
        let sig = world.signature(pose);
        let best = (0..grid.num_tokens())
            .map(|t| grid.features.row(t).iter().zip(sig).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::MIN, f64::max);
        assert!((best - c.signature_magnitude).abs() < 1e-12, "{best}");
    }

    #[test]
    fn echoes_are_invisible_to_signatures() {
        let c = ScenarioConfig::default();
        let w = ClipWorld::new(&c).unwrap();
        let mut g = RngStream::new(9, 9).generator();
        for _ in 0..20 {
            let u: Vec<f64> = (0..c.actor_feature_dim).map(|_| gaussian(&mut g)).collect();
            let e = w.echo(&u);
            for k in 0..c.num_classes {
                let d: f64 = e.iter().zip(w.signature(k)).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-12, "class {k}: {d}");
            }
        }
    }

    /// Nearest-signature readout at the ground-truth cells: each matched
    /// proposal scores class `k` by the largest token response to signature
    /// `k` over its own box cells (pose, object) or its pair patch (pair).
    #[test]
    fn signature_oracle_solves_the_default_scenario() {
        use crate::evaluation::{evaluate_clips, ClassCatalog};
        use crate::relation_model::{Prediction, PredictionSet};

        let c = ScenarioConfig::default();
        let w = ClipWorld::new(&c).unwrap();
        let ds = crate::synthdata::generate_dataset(&c).unwrap();
        let per_cat = c.classes_per_category();
        let clips: Vec<ClipSample> = ds.train.iter().chain(&ds.eval).cloned().collect();
        let mut preds = Vec::new();
        for clip in &clips {
            let (grid, _) = clip.timeline.short_clip(0.0, 1.05, 1.05, c.grid_frames);
            let response = |cells: &[(usize, usize)], k: usize| {
                let mut best = 0.0f64;
                for f in 0..grid.frames {
                    for &(r, col) in cells {
                        let tok = grid.features.row(grid.token_index(f, r, col));
                        best = best.max(tok.iter().zip(w.signature(k)).map(|(a, b)| a * b).sum());
                    }
                }
                best
            };
            let mut entries = Vec::new();
            for (i, p) in clip.proposals.iter().enumerate() {
                let actor = clip
                    .detection_of_actor
                    .iter()
                    .position(|d| d.is_some_and(|d| clip.detections[d].bbox == p.bbox));
                let mut scores = vec![0.0; c.num_classes];
                if let Some(a) = actor {
                    let own = cells_of(&clip.ground_truth[a].bbox, c.grid_height, c.grid_width);
                    let mut patch = Vec::new();
                    for pair in clip.pairs.iter().filter(|q| q.actors.0 == a || q.actors.1 == a) {
                        let r = c.pair_radius;
                        for row in pair.cell.0.saturating_sub(r)..=(pair.cell.0 + r).min(c.grid_height - 1) {
                            for col in pair.cell.1.saturating_sub(r)..=(pair.cell.1 + r).min(c.grid_width - 1) {
                                patch.push((row, col));
                            }
                        }
                    }
                    for (k, s) in scores.iter_mut().enumerate() {
                        let cells = if k / per_cat == 1 { &patch } else { &own };
                        *s = response(cells, k) * p.person_score;
                    }
                }
                entries.push(Prediction {
                    proposal_index: i,
                    bbox: p.bbox,
                    person_score: p.person_score,
                    logits: scores.clone(),
                    scores,
                });
            }
            preds.push(PredictionSet { entries });
        }
        let report = evaluate_clips(&clips, &preds, &ClassCatalog::synthetic(c.num_classes).unwrap()).unwrap();
        assert!(report.mean_ap >= 0.95, "{}", report.summary());
    }
}
