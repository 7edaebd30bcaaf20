use thumbsel::checkpoint::{Checkpoint, CheckpointMeta};
use thumbsel::model::{ModelDims, ModelParams};
use thumbsel::rng::{child_seed, offsets};
use thumbsel::selector::{evaluate, evaluate_random, select_all, TopicScorer, TopicWeighting};
use thumbsel::synthgen::{generate_corpus, SynthCorpus, SynthSpec};
use thumbsel::trainer::{grid_search, split_validation, train, Grid, GridSearchData, TrainConfig, TrainData};

fn corpus() -> SynthCorpus {
    generate_corpus(&SynthSpec { n_videos: 60, n_source: 600, ..SynthSpec::default() }).unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig { max_epochs: epochs, d_hidden: 64, wall_clock: false, ..TrainConfig::default() }
}

fn run(corpus: &SynthCorpus, cfg: &TrainConfig) -> thumbsel::trainer::TrainOutcome {
    let pool = corpus.target_pool();
    train(cfg, &TrainData {
        words: &corpus.words,
        topics: &corpus.topics,
        source: &corpus.source,
        target: &pool,
        valid: &corpus.videos,
    })
    .unwrap()
}

fn accuracy(corpus: &SynthCorpus, params: &ModelParams, lambda: f64) -> f64 {
    let scorer = TopicScorer::new(params, &corpus.words, &corpus.topics, TopicWeighting::Normalized).unwrap();
    evaluate(&scorer, &corpus.videos, lambda).unwrap().accuracy
}

#[test]
fn zero_epochs_return_init_params() {
    let c = corpus();
    let out = run(&c, &config(0));
    let dims = ModelDims { d_raw: 64, d_hidden: 64, d_feat: 64, d_sem: 32 };
    assert_eq!(out.params, ModelParams::init(dims, child_seed(7, offsets::INIT)).unwrap());
    assert!(out.best_epoch.is_none());
    assert!(out.history.epochs.is_empty());
}

#[test]
fn training_is_deterministic() {
    let c = corpus();
    let a = run(&c, &config(2));
    let b = run(&c, &config(2));
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
}

#[test]
fn trained_model_beats_random() {
    let c = corpus();
    let out = run(&c, &config(8));
    let random: f64 = (0..5).map(|s| evaluate_random(&c.videos, s).unwrap()).sum::<f64>() / 5.0;
    let acc = accuracy(&c, &out.params, 0.2);
    assert!(acc > 2.0 * random, "trained {acc} vs random {random}");
    let last = out.history.epochs.last().unwrap();
    assert!(last.loss.total < out.history.epochs[0].loss.total);
}

#[test]
fn loss_falls_over_first_steps() {
    let c = corpus();
    let cfg = TrainConfig { batch_size: 32, max_epochs: 3, log_steps: true, ..config(3) };
    let out = run(&c, &TrainConfig { hyper: thumbsel::objective::Hyper { mu: 0.0, ..cfg.hyper }, ..cfg });
    let steps = &out.history.step_losses[..50];
    let head: f64 = steps[..5].iter().sum::<f64>() / 5.0;
    let tail: f64 = steps[45..].iter().sum::<f64>() / 5.0;
    assert!(tail < head, "head {head} tail {tail}");
}

#[test]
fn zero_learning_rate_keeps_init() {
    let c = corpus();
    let out = run(&c, &TrainConfig { learning_rate: 0.0, ..config(1) });
    assert_eq!(out.params, run(&c, &config(0)).params);
}

#[test]
fn large_lambda_picks_most_representative() {
    let c = corpus();
    let out = run(&c, &config(3));
    for lambda in [0.0, 0.2, 1.0] {
        let acc = accuracy(&c, &out.params, lambda);
        assert!((0.0..=1.0).contains(&acc));
    }
    let scorer = TopicScorer::new(&out.params, &c.words, &c.topics, TopicWeighting::Normalized).unwrap();
    let (picks, _) = select_all(&scorer, &c.videos, 1e6).unwrap();
    for (pick, v) in picks.iter().zip(&c.videos) {
        let best = v.candidates.iter().map(|c| c.representativeness).fold(f64::MIN, f64::max);
        let chosen = v.candidates.iter().find(|c| c.frame_id == *pick).unwrap();
        assert_eq!(chosen.representativeness, best);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let c = corpus();
    let out = run(&c, &config(1));
    let ck = Checkpoint {
        meta: CheckpointMeta { seed: 7, alpha: 0.5, eta: 1e-4, gamma: 1e-4, mu: 0.25, lambda: 0.2 },
        params: out.params,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
}

#[test]
fn validation_split_is_seeded_partition() {
    let c = corpus();
    let (fit, valid) = split_validation(&c.videos, 0.2, 7).unwrap();
    assert_eq!(valid.len(), 12);
    assert_eq!(fit.len() + valid.len(), c.videos.len());
    assert_eq!(split_validation(&c.videos, 0.2, 7).unwrap().1, valid);
    assert!(valid.iter().all(|v| !fit.iter().any(|f| f.video_id == v.video_id)));
}

#[test]
fn single_cell_grid() {
    let c = corpus();
    let cfg = config(1);
    let grid = Grid { folds: 2, ..Grid::single(&cfg) };
    let report = grid_search(&grid, &cfg, &GridSearchData {
        words: &c.words,
        topics: &c.topics,
        source: &c.source,
        videos: &c.videos,
    })
    .unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.cells[0].fold_accuracies.len(), 2);
    assert!((0.0..=1.0).contains(&report.cells[0].mean));
}
