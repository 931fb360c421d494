use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use actorscene::checkpoint::Checkpoint;
use actorscene::evaluation::{evaluate_clips, Category, ClassCatalog, EvalReport};
use actorscene::longterm::{aggregate_predictions, run_windowed, AggregationWeights, Strategy, WindowingConfig};
use actorscene::numerics::{RngStream, Tape};
use actorscene::relation_model::{forward, forward_actors_only, ForwardOptions, Variant};
use actorscene::synthdata::{generate_dataset, ClipSample, Dataset, ProposalSampling};
use actorscene::training::{train_long_term, train_short_term, TrainState};
use actorscene::{Error, Result};
use rayon::prelude::*;

use crate::config::RunConfig;

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    io(path, fs::write(path, contents))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    io(dir, fs::create_dir_all(dir))
}

fn resolve(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("no {what} directory given (flag or [paths] entry)")))
}

pub fn generate(config: &Path, out: Option<PathBuf>, force: bool) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let out = resolve(out, &cfg.paths.out, "output")?;
    if out.exists() && !force {
        let mut entries = io(&out, fs::read_dir(&out))?;
        if entries.next().is_some() {
            return Err(Error::Config(format!(
                "{} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    }
    let dataset = generate_dataset(&cfg.scenario)?;
    dataset.write(&out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml()?)?;
    println!(
        "wrote {} train and {} eval clips to {}",
        dataset.train.len(),
        dataset.eval.len(),
        out.display()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Short,
    Long,
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub phase: Phase,
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
}

fn append_log(path: &Path, state: &TrainState, from: usize) -> Result<usize> {
    let mut text = String::new();
    for r in &state.log[from..] {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    let mut f = io(
        path,
        fs::OpenOptions::new().create(true).append(true).open(path),
    )?;
    io(path, std::io::Write::write_all(&mut f, text.as_bytes()))?;
    Ok(state.log.len())
}

fn nan_diagnostic(out: &Path, e: &Error, state: Option<&TrainState>) {
    let mut text = format!("{e}\n");
    if let Some(s) = state {
        let _ = writeln!(text, "epoch={} step={} seed={}", s.epoch, s.step, s.config.seed);
        if let Some(last) = s.log.last() {
            let _ = writeln!(text, "last log: {}", last.to_line());
        }
    }
    let path = out.join("nan_diagnostic.txt");
    if let Err(err) = fs::write(&path, text) {
        log::error!("{}: {err}", path.display());
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let data = resolve(args.data, &cfg.paths.data, "dataset")?;
    let out = resolve(args.out, &cfg.paths.out, "output")?;
    let dataset = Dataset::load(&data)?;
    ensure_dir(&out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml()?)?;
    let log_path = out.join("train.log");
    let result = match args.phase {
        Phase::Short => train_short(&cfg, &dataset, &out, &log_path, args.resume),
        Phase::Long => {
            let ckpt = args.checkpoint.unwrap_or_else(|| out.join("short.ckpt"));
            train_long(&cfg, &dataset, &out, &log_path, &ckpt)
        }
    };
    if let Err((e, state)) = result {
        if matches!(e, Error::NonFiniteLoss { .. }) {
            nan_diagnostic(&out, &e, state.as_ref());
        }
        return Err(e);
    }
    Ok(())
}

type TrainResult = std::result::Result<(), (Error, Option<TrainState>)>;

fn train_short(cfg: &RunConfig, dataset: &Dataset, out: &Path, log_path: &Path, resume: bool) -> TrainResult {
    let fail = |e: Error| (e, None);
    let last = out.join("last.ckpt");
    let mut state = if resume && last.exists() {
        let s = TrainState::from_checkpoint(&Checkpoint::read(&last).map_err(fail)?).map_err(fail)?;
        if s.config != cfg.training_config() {
            return Err(fail(Error::Config(format!(
                "{} was trained with a different config",
                last.display()
            ))));
        }
        log::info!("resuming at epoch {} step {}", s.epoch, s.step);
        s
    } else {
        if log_path.exists() {
            io(log_path, fs::remove_file(log_path)).map_err(fail)?;
        }
        TrainState::for_dataset(cfg.training_config(), dataset).map_err(fail)?
    };
    let mut logged = state.log.len();
    let outcome = train_short_term(&mut state, dataset, |s, summary| {
        logged = append_log(log_path, s, logged)?;
        let ckpt = s.to_checkpoint()?;
        ckpt.write(&last)?;
        if summary.improved {
            ckpt.write(&out.join("best.ckpt"))?;
        }
        println!(
            "epoch {} loss {:.6} mAP {:.4}",
            summary.epoch, summary.mean_loss, summary.report.mean_ap
        );
        Ok(())
    });
    if let Err(e) = outcome {
        return Err((e, Some(state)));
    }
    let finish = || -> Result<()> {
        state.to_checkpoint()?.write(&out.join("short.ckpt"))?;
        let report = state.evaluate(&dataset.eval, dataset.config.grid_frames)?;
        report.write(out, "short_report")?;
        print!("{}", report.summary());
        Ok(())
    };
    finish().map_err(fail)
}

fn train_long(cfg: &RunConfig, dataset: &Dataset, out: &Path, log_path: &Path, ckpt: &Path) -> TrainResult {
    let fail = |e: Error| (e, None);
    if !ckpt.exists() {
        return Err(fail(Error::Config(format!(
            "phase-1 checkpoint {} not found; run --phase short first",
            ckpt.display()
        ))));
    }
    let mut state = TrainState::from_checkpoint(&Checkpoint::read(ckpt).map_err(fail)?).map_err(fail)?;
    state.config.windowing = cfg.windowing.clone();
    state.config.aggregation = cfg.aggregation.clone();
    state.config.seed = cfg.seed;
    state.aggregation = None;
    let logged = state.log.len();
    let outcome = match train_long_term(&mut state, dataset) {
        Ok(o) => o,
        Err(e) => return Err((e, Some(state))),
    };
    let finish = || -> Result<()> {
        append_log(log_path, &state, logged)?;
        state.to_checkpoint()?.write(&out.join("long.ckpt"))?;
        outcome.before.write(out, "long_before")?;
        outcome.after.write(out, "long_report")?;
        println!(
            "short-term mAP {:.4} -> long-term mAP {:.4}",
            outcome.before.mean_ap, outcome.after.mean_ap
        );
        Ok(())
    };
    finish().map_err(fail)
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub strategies: Vec<Strategy>,
    pub supports: Vec<f64>,
    pub samplings: Vec<ProposalSampling>,
    pub variant: Option<Variant>,
}

pub fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    match s {
        "weighted" | "weighted_sum" => Ok(Strategy::WeightedSum),
        "max" => Ok(Strategy::Max),
        "avg" => Ok(Strategy::Avg),
        _ => s
            .strip_prefix("top")
            .and_then(|k| k.parse().ok())
            .map(Strategy::TopK)
            .ok_or_else(|| format!("unknown strategy `{s}` (weighted, max, avg, top<k>)")),
    }
}

pub fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    match s {
        "unified" => Ok(Variant::Unified),
        "decoder_only" => Ok(Variant::DecoderOnly),
        "encoder_decoder" => Ok(Variant::EncoderDecoder),
        _ => Err(format!("unknown variant `{s}` (unified, decoder_only, encoder_decoder)")),
    }
}

fn sampling_name(s: ProposalSampling) -> String {
    match s {
        ProposalSampling::Threshold(t) => format!("tau{t}"),
        ProposalSampling::TopK => "topk".into(),
    }
}

fn windowing_for(base: &WindowingConfig, support: Option<f64>) -> WindowingConfig {
    match support {
        None => base.clone(),
        Some(s) => {
            let span = WindowingConfig::with_support(s);
            WindowingConfig {
                long_past: span.long_past,
                long_future: span.long_future,
                ..base.clone()
            }
        }
    }
}

fn category_cell(r: &EvalReport, c: Category) -> String {
    r.category_mean(c).map_or(String::new(), |v| format!("{v:.6}"))
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let state = TrainState::from_checkpoint(&Checkpoint::read(&args.checkpoint)?)?;
    if let Some(v) = args.variant {
        if v != state.config.model.variant {
            return Err(Error::Config(format!(
                "checkpoint holds a {:?} model, not {v:?}",
                state.config.model.variant
            )));
        }
    }
    let dataset = Dataset::load(&args.data)?;
    state.config.check_scenario(&dataset.config)?;
    let frames = dataset.config.grid_frames;
    let k = dataset.config.num_proposals;
    let catalog = ClassCatalog::synthetic(state.config.model.num_classes)?;
    let samplings = if args.samplings.is_empty() {
        vec![dataset.config.proposal_sampling]
    } else {
        args.samplings
    };
    let supports: Vec<Option<f64>> = if args.supports.is_empty() {
        vec![None]
    } else {
        args.supports.iter().map(|&s| Some(s)).collect()
    };
    let strategies = if args.strategies.is_empty() {
        vec![Strategy::WeightedSum]
    } else {
        args.strategies
    };
    ensure_dir(&args.out)?;
    let mut sweep = String::from("sampling,support,windows,strategy,map");
    for c in Category::ALL {
        let _ = write!(sweep, ",map_{}", c.name());
    }
    sweep.push('\n');
    for &sampling in &samplings {
        let clips: Vec<ClipSample> = dataset
            .eval
            .iter()
            .map(|c| c.with_sampling(sampling, k))
            .collect::<Result<_>>()?;
        for &support in &supports {
            let w = windowing_for(&state.config.windowing, support);
            w.validate()?;
            let nw = w.num_windows();
            let windowed = if nw == 1 {
                None
            } else {
                if state.config.actor_only {
                    return Err(Error::Config("actor-only checkpoints support a single window only".into()));
                }
                Some(
                    clips
                        .par_iter()
                        .map(|c| run_windowed(&state.params, c, &w, frames))
                        .collect::<Result<Vec<_>>>()?,
                )
            };
            let short = match windowed {
                None => Some(state.predict(&clips, frames)?),
                Some(_) => None,
            };
            for &strategy in &strategies {
                let report = match (&windowed, &short) {
                    (None, Some(preds)) => evaluate_clips(&clips, preds, &catalog)?,
                    (Some(win), _) => {
                        let a = match strategy {
                            Strategy::WeightedSum => {
                                let a = state.aggregation.as_ref().ok_or_else(|| {
                                    Error::Config(
                                        "weighted aggregation over several windows needs a long-phase checkpoint"
                                            .into(),
                                    )
                                })?;
                                if a.offsets != w.offsets() {
                                    return Err(Error::Config(format!(
                                        "checkpoint weights cover offsets {:?}..{:?}, support needs {}..{}",
                                        a.offsets.first(),
                                        a.offsets.last(),
                                        w.min_offset(),
                                        w.max_offset()
                                    )));
                                }
                                a.clone()
                            }
                            _ => AggregationWeights::uniform(&w, catalog.len()),
                        };
                        let preds = win
                            .iter()
                            .map(|p| aggregate_predictions(p, &a, strategy))
                            .collect::<Result<Vec<_>>>()?;
                        evaluate_clips(&clips, &preds, &catalog)?
                    }
                    _ => unreachable!("either windowed or short predictions exist"),
                };
                let support_s = support.map_or("ckpt".to_string(), |s| format!("{s}"));
                let stem = format!("eval_{}_s{}_{}", sampling_name(sampling), support_s, strategy.name());
                report.write(&args.out, &stem)?;
                let _ = write!(
                    sweep,
                    "{},{},{nw},{},{:.6}",
                    sampling_name(sampling),
                    support_s,
                    strategy.name(),
                    report.mean_ap
                );
                for c in Category::ALL {
                    let _ = write!(sweep, ",{}", category_cell(&report, c));
                }
                sweep.push('\n');
                println!("{stem}: mAP {:.4}", report.mean_ap);
            }
        }
    }
    write_file(&args.out.join("sweep.csv"), &sweep)
}

pub struct InspectArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub clip: String,
    pub attention: PathBuf,
    pub actor: Option<usize>,
}

/// Proposal index of the first paired actor, when it was detected and kept.
fn paired_proposal(clip: &ClipSample) -> Option<usize> {
    let pair = clip.pairs.first()?;
    let det = clip.detection_of_actor[pair.actors.0]?;
    let bbox = clip.detections[det].bbox;
    clip.proposals.iter().position(|p| p.bbox == bbox)
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let state = TrainState::from_checkpoint(&Checkpoint::read(&args.checkpoint)?)?;
    let dataset = Dataset::load(&args.data)?;
    let clip = dataset
        .train
        .iter()
        .chain(&dataset.eval)
        .find(|c| c.id == args.clip)
        .ok_or_else(|| Error::Config(format!("clip `{}` is not in the dataset", args.clip)))?;
    let k = clip.proposals.len();
    let actor = args.actor.or_else(|| paired_proposal(clip)).unwrap_or(0);
    if actor >= k {
        return Err(Error::Config(format!("actor {actor} out of range (K = {k})")));
    }
    let w = &state.config.windowing;
    let frames = dataset.config.grid_frames;
    let (grid, _) = clip.timeline.short_clip(0.0, w.short_past, w.short_future, frames);
    let opts = ForwardOptions {
        training: false,
        record_attention: true,
    };
    let mut tape = Tape::new();
    let rng = RngStream::new(0, 0);
    let outcome = if state.config.actor_only {
        forward_actors_only(&mut tape, &state.params, &clip.proposals, &rng, opts)?
    } else {
        forward(&mut tape, &state.params, &clip.proposals, &grid, &rng, opts)?
    };
    // Unified maps span all tokens; decoder variants only scene keys.
    let scene_offset = match state.config.model.variant {
        Variant::Unified => k,
        _ => 0,
    };
    let mut csv = String::from("layer,head,query,key,weight\n");
    let mut last_argmax = None;
    for (layer, map) in outcome.attention.iter().enumerate() {
        let shape = map.shape();
        let (heads, keys) = (shape[0], shape[2]);
        let mut mean = vec![0.0; keys];
        for h in 0..heads {
            let base = (h * shape[1] + actor) * keys;
            for (key, &p) in map.data()[base..base + keys].iter().enumerate() {
                let _ = writeln!(csv, "{layer},{h},{actor},{key},{p:.17e}");
                mean[key] += p / heads as f64;
            }
        }
        let best = (scene_offset..keys).max_by(|&a, &b| mean[a].total_cmp(&mean[b]));
        last_argmax = best.map(|b| b - scene_offset);
    }
    write_file(&args.attention, &csv)?;
    println!("exported attention of actor token {actor} ({} layers)", outcome.attention.len());
    if let Some(n) = last_argmax {
        let cells = grid.height * grid.width;
        let (f, r, c) = (n / cells, (n % cells) / grid.width, n % grid.width);
        println!("last-layer strongest scene key: token {n} (frame {f}, row {r}, col {c})");
    }
    for p in &clip.pairs {
        println!(
            "planted pair class {} at cell (row {}, col {})",
            p.class_id, p.cell.0, p.cell.1
        );
    }
    Ok(())
}
