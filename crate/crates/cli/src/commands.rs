//! Subcommands.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::json;

use thumbsel::check::{all_passed, run_suites, Suite};
use thumbsel::checkpoint::{Checkpoint, CheckpointMeta};
use thumbsel::config::Settings;
use thumbsel::corpus::{
    assemble_videos, labeled_examples, read_features, read_ground_truth, read_manifest, video_feature_rows,
    write_features, write_manifest, LabeledExample,
};
use thumbsel::frames::{extract_candidates, read_pnm, thumbnail_feature, QualityScores, VideoFrame};
use thumbsel::model::TensorId;
use thumbsel::rng::{child_seed, offsets};
use thumbsel::selector::{evaluate, evaluate_random, mean_std, select_all, write_score_report, TopicScorer, VideoRecord};
use thumbsel::synthgen::{files, generate_corpus, SynthSpec};
use thumbsel::trainer::{grid_search, split_validation, train, GridReport, GridSearchData, TrainData};
use thumbsel::wordspace::{load_topic_list, load_word_vectors, TopicList, WordSpace};
use thumbsel::Error;

use crate::manifest::ManifestBuilder;
use crate::output::{write_atomic, write_bytes, write_staged};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Core(Error::NonFinite { .. }) => 3,
            Failure::Usage(_) | Failure::Core(_) => 2,
        }
    }
}

type CmdResult = Result<(), Failure>;

pub struct Ctx {
    pub settings: Settings,
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus with planted ground truth.
    Gen(GenArgs),
    /// Extract candidate frames from directories of PGM/PPM frames.
    Frames(FramesArgs),
    /// Train a model and write a checkpoint and training log.
    Train(TrainArgs),
    /// Cross-validated grid search over the `grid.*` settings.
    Grid(GridArgs),
    /// Score candidates and pick one thumbnail per video.
    Select(SelectArgs),
    /// Accuracy of checkpoints, or of the random selector, against ground truth.
    Eval(EvalArgs),
    /// Run the gradient, MMD and popularity verification suites.
    Check(CheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Frames(_) => "frames",
            Command::Train(_) => "train",
            Command::Grid(_) => "grid",
            Command::Select(_) => "select",
            Command::Eval(_) => "eval",
            Command::Check(_) => "check",
        }
    }

    pub fn args_json(&self) -> serde_json::Value {
        let v = match self {
            Command::Gen(a) => serde_json::to_value(a),
            Command::Frames(a) => serde_json::to_value(a),
            Command::Train(a) => serde_json::to_value(a),
            Command::Grid(a) => serde_json::to_value(a),
            Command::Select(a) => serde_json::to_value(a),
            Command::Eval(a) => serde_json::to_value(a),
            Command::Check(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialize")
    }

    /// Command-line values that take precedence over the config file.
    pub fn apply_overrides(&self, s: &mut Settings) {
        match self {
            Command::Train(a) => a.overrides.apply(s),
            Command::Grid(a) => a.overrides.apply(s),
            Command::Select(a) => set_opt(&mut s.train.lambda, a.lambda),
            Command::Eval(a) => set_opt(&mut s.train.lambda, a.lambda),
            Command::Frames(a) => set_opt(&mut s.tau, a.tau),
            Command::Gen(_) | Command::Check(_) => {}
        }
    }

    pub fn run(&self, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
        match self {
            Command::Gen(a) => gen(a, ctx, m),
            Command::Frames(a) => frames(a, ctx, m),
            Command::Train(a) => cmd_train(a, ctx, m),
            Command::Grid(a) => cmd_grid(a, ctx, m),
            Command::Select(a) => select(a, ctx, m),
            Command::Eval(a) => eval(a, ctx, m),
            Command::Check(a) => check(a, ctx, m),
        }
    }
}

fn set_opt<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Input file locations. Each file defaults to its standard name inside
/// `--data`.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct DataArgs {
    /// Directory holding files under the names written by `gen`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Word-vector text file.
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// Topic list TSV (`word<TAB>count`).
    #[arg(long)]
    pub topics: Option<PathBuf>,
    /// Labeled source feature CSV.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Candidate feature CSV of the target videos.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Candidate manifest CSV.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Ground-truth CSV (`video_id,frame_id`).
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
}

impl DataArgs {
    fn resolve(&self, explicit: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf, Failure> {
        explicit
            .clone()
            .or_else(|| self.data.as_ref().map(|d| d.join(name)))
            .ok_or_else(|| Failure::Usage(format!("--{flag} or --data is required")))
    }

    fn words(&self) -> Result<PathBuf, Failure> {
        self.resolve(&self.words, files::WORDS, "words")
    }
    fn topics(&self) -> Result<PathBuf, Failure> {
        self.resolve(&self.topics, files::TOPICS, "topics")
    }
    fn source(&self) -> Result<PathBuf, Failure> {
        self.resolve(&self.source, files::SOURCE, "source")
    }
    fn target(&self) -> Result<PathBuf, Failure> {
        self.resolve(&self.target, files::TARGET, "target")
    }
    fn candidates(&self) -> Result<PathBuf, Failure> {
        self.resolve(&self.candidates, files::CANDIDATES, "candidates")
    }
    fn ground_truth(&self) -> Result<PathBuf, Failure> {
        self.resolve(&self.ground_truth, files::GROUND_TRUTH, "ground-truth")
    }
}

/// Resolved paths, digested into the manifest before anything is parsed.
struct Inputs {
    words: PathBuf,
    topics: PathBuf,
    target: PathBuf,
    candidates: PathBuf,
    source: Option<PathBuf>,
    ground_truth: Option<PathBuf>,
}

impl Inputs {
    fn resolve(d: &DataArgs, source: bool, ground_truth: bool, m: &mut ManifestBuilder) -> Result<Self, Failure> {
        let inputs = Self {
            words: d.words()?,
            topics: d.topics()?,
            target: d.target()?,
            candidates: d.candidates()?,
            source: if source { Some(d.source()?) } else { None },
            ground_truth: if ground_truth { Some(d.ground_truth()?) } else { None },
        };
        for p in [&inputs.words, &inputs.topics]
            .into_iter()
            .chain(inputs.source.as_ref())
            .chain([&inputs.target, &inputs.candidates])
            .chain(inputs.ground_truth.as_ref())
        {
            m.input(p);
        }
        Ok(inputs)
    }

    fn semantics(&self) -> Result<(WordSpace, TopicList), Failure> {
        let words = load_word_vectors(&self.words)?;
        let topics = load_topic_list(&self.topics)?.restrict_to(&words)?;
        Ok((words, topics))
    }

    fn videos(&self) -> Result<Vec<VideoRecord>, Failure> {
        let gt: Option<HashMap<String, usize>> = self.ground_truth.as_deref().map(read_ground_truth).transpose()?;
        let videos = assemble_videos(read_features(&self.target)?, &read_manifest(&self.candidates)?, gt.as_ref())?;
        if videos.is_empty() {
            return Err(Failure::Usage(format!("{} holds no candidate frames", self.target.display())));
        }
        if gt.is_some() {
            if let Some(v) = videos.iter().find(|v| v.ground_truth.is_none()) {
                return Err(Error::MissingGroundTruth(v.video_id.clone()).into());
            }
        }
        Ok(videos)
    }

    fn source_examples(&self) -> Result<Vec<LabeledExample>, Failure> {
        let path = self.source.as_ref().expect("source requested");
        Ok(labeled_examples(read_features(path)?)?)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 200)]
    pub videos: usize,
    #[arg(long, default_value_t = 7)]
    pub frames_min: usize,
    #[arg(long, default_value_t = 12)]
    pub frames_max: usize,
    #[arg(long, default_value_t = 40)]
    pub labels: usize,
    #[arg(long, default_value_t = 10)]
    pub topics: usize,
    /// Fraction of topic words that never occur as source labels.
    #[arg(long, default_value_t = 0.3)]
    pub zero_shot: f64,
    #[arg(long, default_value_t = 2000)]
    pub source_examples: usize,
    #[arg(long, default_value_t = 64)]
    pub d_raw: usize,
    #[arg(long, default_value_t = 32)]
    pub d_sem: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.3)]
    pub hard_fraction: f64,
}

fn gen(a: &GenArgs, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
    let spec = SynthSpec {
        n_videos: a.videos,
        frames_min: a.frames_min,
        frames_max: a.frames_max,
        n_labels: a.labels,
        n_topics: a.topics,
        zero_shot_fraction: a.zero_shot,
        n_source: a.source_examples,
        d_raw: a.d_raw,
        d_sem: a.d_sem,
        noise_sigma: a.noise,
        hard_fraction: a.hard_fraction,
        seed: ctx.settings.train.seed,
        ..SynthSpec::default()
    };
    let corpus = generate_corpus(&spec)?;
    for p in write_staged(&ctx.out, |stage| corpus.write(stage))? {
        m.output(&p);
    }
    let counts: Vec<usize> = corpus.videos.iter().map(|v| v.candidates.len()).collect();
    m.summary(json!({
        "videos": corpus.videos.len(),
        "source_examples": corpus.source.len(),
        "candidates_min": counts.iter().min(),
        "candidates_max": counts.iter().max(),
        "zero_shot_words": corpus.zero_shot_words,
    }));
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct FramesArgs {
    /// Directory with one subdirectory of PGM/PPM frames per video.
    #[arg(long)]
    pub input: PathBuf,
    /// Side of the block-average feature grid.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    /// Cosine-distance threshold for near-duplicate clustering.
    #[arg(long)]
    pub tau: Option<f64>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

fn is_frame_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("pgm" | "ppm" | "pnm")
    )
}

fn frames(a: &FramesArgs, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
    if a.grid == 0 {
        return Err(Failure::Usage("--grid must be positive".into()));
    }
    m.input(&a.input);
    let mut videos = Vec::new();
    let mut quality_rows = Vec::new();
    let mut n_frames = 0usize;
    for dir in sorted_entries(&a.input)?.into_iter().filter(|p| p.is_dir()) {
        let video_id = dir.file_name().expect("directory name").to_string_lossy().into_owned();
        let mut frames = Vec::new();
        for (frame_id, path) in sorted_entries(&dir)?.into_iter().filter(|p| is_frame_file(p)).enumerate() {
            let frame = read_pnm(&path)?;
            let q = QualityScores::of(&frame)?;
            quality_rows.push((video_id.clone(), frame_id, q, q.passes(&ctx.settings.quality)));
            let feature = thumbnail_feature(&frame, a.grid);
            frames.push(VideoFrame {
                frame_id,
                frame,
                feature,
            });
        }
        if frames.is_empty() {
            continue;
        }
        n_frames += frames.len();
        let candidates = extract_candidates(&video_id, &frames, &ctx.settings.quality, ctx.settings.tau)?;
        videos.push(VideoRecord {
            video_id,
            candidates,
            ground_truth: None,
        });
    }
    if videos.is_empty() {
        return Err(Failure::Usage(format!("no frame files found under {}", a.input.display())));
    }
    let candidates = ctx.out.join(files::CANDIDATES);
    write_atomic(&candidates, |tmp| write_manifest(tmp, &videos))?;
    let target = ctx.out.join(files::TARGET);
    write_atomic(&target, |tmp| write_features(tmp, &video_feature_rows(&videos)))?;
    let quality = ctx.out.join("quality.csv");
    let mut text = String::from("video_id,frame_id,luma_mean,laplacian_variance,entropy,kept\n");
    for (vid, fid, q, kept) in &quality_rows {
        text.push_str(&format!(
            "{vid},{fid},{},{},{},{}\n",
            q.luma_mean, q.laplacian_variance, q.entropy, kept
        ));
    }
    write_bytes(&quality, text.as_bytes())?;
    for p in [&candidates, &target, &quality] {
        m.output(p);
    }
    let counts: Vec<usize> = videos.iter().map(|v| v.candidates.len()).collect();
    m.summary(json!({
        "videos": videos.len(),
        "frames": n_frames,
        "dropped_low_quality": quality_rows.iter().filter(|r| !r.3).count(),
        "candidates_min": counts.iter().min(),
        "candidates_max": counts.iter().max(),
    }));
    Ok(())
}

/// Training settings settable from the command line.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct TrainOverrides {
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// MMD penalty weight.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Representativeness weight used for validation.
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl TrainOverrides {
    fn apply(&self, s: &mut Settings) {
        let t = &mut s.train;
        set_opt(&mut t.max_epochs, self.max_epochs);
        set_opt(&mut t.batch_size, self.batch_size);
        set_opt(&mut t.learning_rate, self.learning_rate);
        set_opt(&mut t.hyper.alpha, self.alpha);
        set_opt(&mut t.hyper.mu, self.mu);
        set_opt(&mut t.lambda, self.lambda);
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Fraction of labeled target videos held out for epoch selection.
    #[arg(long, default_value_t = 0.2)]
    pub valid_fraction: f64,
}

fn cmd_train(a: &TrainArgs, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
    let inputs = Inputs::resolve(&a.data, true, true, m)?;
    let (words, topics) = inputs.semantics()?;
    let source = inputs.source_examples()?;
    let videos = inputs.videos()?;
    let cfg = ctx.settings.train;
    let (fit, valid) = split_validation(&videos, a.valid_fraction, cfg.seed)?;
    let target: Vec<Vec<f64>> = videos
        .iter()
        .flat_map(|v| v.candidates.iter().map(|c| c.feature.clone()))
        .collect();
    let outcome = train(
        &cfg,
        &TrainData {
            words: &words,
            topics: &topics,
            source: &source,
            target: &target,
            valid: &valid,
        },
    )?;
    let checkpoint = Checkpoint {
        meta: CheckpointMeta {
            seed: cfg.seed,
            alpha: cfg.hyper.alpha,
            eta: cfg.hyper.eta,
            gamma: cfg.hyper.gamma,
            mu: cfg.hyper.mu,
            lambda: cfg.lambda,
        },
        params: outcome.params,
    };
    let ckpt_path = ctx.out.join("checkpoint.bin");
    write_bytes(&ckpt_path, &checkpoint.to_bytes())?;
    let log_path = ctx.out.join("train_log.csv");
    let mut log = Vec::new();
    outcome.history.write_csv(&mut log).expect("in-memory write");
    write_bytes(&log_path, &log)?;
    m.output(&ckpt_path);
    m.output(&log_path);
    let best_val = outcome
        .best_epoch
        .map(|e| outcome.history.epochs[e - 1].val_acc);
    m.summary(json!({
        "best_epoch": outcome.best_epoch,
        "best_val_acc": best_val,
        "fit_videos": fit.len(),
        "valid_video_ids": valid.iter().map(|v| v.video_id.as_str()).collect::<Vec<_>>(),
    }));
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

fn cmd_grid(a: &GridArgs, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
    let inputs = Inputs::resolve(&a.data, true, true, m)?;
    let (words, topics) = inputs.semantics()?;
    let source = inputs.source_examples()?;
    let videos = inputs.videos()?;
    let report: GridReport = grid_search(
        &ctx.settings.grid,
        &ctx.settings.train,
        &GridSearchData {
            words: &words,
            topics: &topics,
            source: &source,
            videos: &videos,
        },
    )?;
    let table = ctx.out.join("grid.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf).expect("in-memory write");
    write_bytes(&table, &buf)?;
    let best = Settings {
        train: *report.best_config(),
        ..ctx.settings.clone()
    };
    let best_path = ctx.out.join("best.cfg");
    write_bytes(&best_path, best.to_text().as_bytes())?;
    m.output(&table);
    m.output(&best_path);
    let cell = &report.cells[report.best];
    m.summary(json!({
        "cells": report.cells.len(),
        "best_mean_acc": cell.mean,
        "best_std_acc": cell.std,
    }));
    Ok(())
}

fn load_checkpoint(path: &Path, m: &mut ManifestBuilder) -> Result<Checkpoint, Failure> {
    m.input(path);
    Ok(Checkpoint::load(path)?)
}

#[derive(Args, Debug, Serialize)]
pub struct SelectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
}

fn select(a: &SelectArgs, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
    let inputs = Inputs::resolve(&a.data, false, false, m)?;
    let ckpt = load_checkpoint(&a.checkpoint, m)?;
    let (words, topics) = inputs.semantics()?;
    let videos = inputs.videos()?;
    let scorer = TopicScorer::new(&ckpt.params, &words, &topics, ctx.settings.train.weighting)?;
    let (picks, rows) = select_all(&scorer, &videos, ctx.settings.train.lambda)?;
    let report = ctx.out.join("scores.csv");
    let mut buf = Vec::new();
    write_score_report(&mut buf, &rows).expect("in-memory write");
    write_bytes(&report, &buf)?;
    let picks_path = ctx.out.join("thumbnails.csv");
    let mut text = String::from("video_id,frame_id\n");
    for (v, p) in videos.iter().zip(&picks) {
        text.push_str(&format!("{},{}\n", v.video_id, p));
    }
    write_bytes(&picks_path, text.as_bytes())?;
    m.output(&report);
    m.output(&picks_path);
    m.summary(json!({ "videos": videos.len(), "lambda": ctx.settings.train.lambda }));
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; repeat to aggregate several training seeds.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Evaluate the uniform random selector instead of a model.
    #[arg(long)]
    pub random: bool,
    /// Number of random-selector seeds, starting at the run seed.
    #[arg(long, default_value_t = 5)]
    pub random_runs: u64,
}

#[derive(Serialize)]
struct EvalSummary {
    accuracy_mean: f64,
    accuracy_std: f64,
    seeds: Vec<u64>,
    lambda: f64,
}

fn eval(a: &EvalArgs, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
    if a.random == !a.checkpoint.is_empty() {
        return Err(Failure::Usage("give either --random or at least one --checkpoint".into()));
    }
    let inputs = Inputs::resolve(&a.data, false, true, m)?;
    let lambda = ctx.settings.train.lambda;
    let (seeds, accs) = if a.random {
        if a.random_runs == 0 {
            return Err(Failure::Usage("--random-runs must be positive".into()));
        }
        let videos = inputs.videos()?;
        let seeds: Vec<u64> = (0..a.random_runs).map(|i| ctx.settings.train.seed + i).collect();
        let accs = seeds
            .iter()
            .map(|&s| evaluate_random(&videos, child_seed(s, offsets::RANDOM_SELECTOR)))
            .collect::<thumbsel::Result<Vec<f64>>>()?;
        (seeds, accs)
    } else {
        let ckpts = a
            .checkpoint
            .iter()
            .map(|p| load_checkpoint(p, m))
            .collect::<Result<Vec<_>, _>>()?;
        let (words, topics) = inputs.semantics()?;
        let videos = inputs.videos()?;
        let mut seeds = Vec::new();
        let mut accs = Vec::new();
        for ckpt in &ckpts {
            let scorer = TopicScorer::new(&ckpt.params, &words, &topics, ctx.settings.train.weighting)?;
            accs.push(evaluate(&scorer, &videos, lambda)?.accuracy);
            seeds.push(ckpt.meta.seed);
        }
        (seeds, accs)
    };
    let (accuracy_mean, accuracy_std) = mean_std(&accs);
    let summary = EvalSummary {
        accuracy_mean,
        accuracy_std,
        seeds,
        lambda,
    };
    let line = serde_json::to_string(&summary).expect("summary serializes");
    println!("{line}");
    let path = ctx.out.join("eval.json");
    write_bytes(&path, format!("{line}\n").as_bytes())?;
    m.output(&path);
    m.summary(json!({ "accuracies": accs, "random": a.random }));
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct CheckArgs {
    /// Finite-difference gradient check.
    #[arg(long)]
    pub grads: bool,
    /// MK-MMD against the double-sum oracle.
    #[arg(long)]
    pub mmd: bool,
    /// Popularity against the naive oracle.
    #[arg(long)]
    pub popularity: bool,
    /// Every suite (the default when none is named).
    #[arg(long)]
    pub all: bool,
    /// Negate one tensor's analytic gradient before comparing.
    #[arg(long, hide = true)]
    pub sabotage: Option<String>,
}

fn check(a: &CheckArgs, ctx: &Ctx, m: &mut ManifestBuilder) -> CmdResult {
    let none = !(a.grads || a.mmd || a.popularity);
    let mut suites = Vec::new();
    if a.all || none || a.grads {
        suites.push(Suite::Gradients);
    }
    if a.all || none || a.mmd {
        suites.push(Suite::Mmd);
    }
    if a.all || none || a.popularity {
        suites.push(Suite::Popularity);
    }
    let sabotage = a
        .sabotage
        .as_deref()
        .map(|n| TensorId::from_name(n).ok_or_else(|| Failure::Usage(format!("unknown tensor '{n}'"))))
        .transpose()?;
    let rows = run_suites(&suites, sabotage)?;
    let mut report = String::new();
    for r in &rows {
        report.push_str(&format!("{r}\n"));
    }
    print!("{report}");
    std::io::stdout().flush().ok();
    let path = ctx.out.join("check_report.txt");
    write_bytes(&path, report.as_bytes())?;
    m.output(&path);
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}/{}", r.suite.name(), r.name))
        .collect();
    m.summary(json!({ "rows": rows.len(), "failing": failing }));
    if all_passed(&rows) {
        Ok(())
    } else {
        Err(Failure::Verification(failing.join(", ")))
    }
}
