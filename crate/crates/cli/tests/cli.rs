use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thumbsel::checkpoint::Checkpoint;
use thumbsel::model::{ModelDims, ModelParams};
use thumbsel::rng::{child_seed, offsets};

fn thumbsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thumbsel")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--seed", "7", "--videos", "40", "--source-examples", "300", "--no-wall-clock", "--out", s(out)];
    args.extend_from_slice(extra);
    thumbsel(&args)
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(tree(&p));
        } else {
            out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(gen_small(&a, &[]).status.code(), Some(0));
    assert_eq!(gen_small(&b, &[]).status.code(), Some(0));
    assert_eq!(tree(&a), tree(&b));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("gen.manifest.json")).unwrap()).unwrap();
    assert!(manifest["summary"]["candidates_min"].as_u64().unwrap() >= 7);
    assert!(manifest["summary"]["candidates_max"].as_u64().unwrap() <= 12);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = thumbsel(&["gen", "--videos", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("gen.manifest.json").exists());
    let manifest = fs::read_to_string(dir.path().join("gen.manifest.json")).unwrap();
    assert!(manifest.contains("\"exit_code\": 2"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "learning_rate = fast\n").unwrap();
    let o = thumbsel(&["train", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.cfg"));
}

#[test]
fn train_select_eval_flow() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(gen_small(&data, &[]).status.code(), Some(0));

    // Missing topic file names the path.
    let missing = dir.path().join("nope.tsv");
    let o = thumbsel(&["train", "--data", s(&data), "--topics", s(&missing), "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.tsv"));

    // Zero epochs store the initial parameters.
    let init = dir.path().join("init");
    let o = thumbsel(&["train", "--data", s(&data), "--max-epochs", "0", "--out", s(&init)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ck = Checkpoint::load(&init.join("checkpoint.bin")).unwrap();
    let dims = ModelDims { d_raw: 64, d_hidden: 256, d_feat: 64, d_sem: 32 };
    assert_eq!(ck.params, ModelParams::init(dims, child_seed(7, offsets::INIT)).unwrap());

    let trained = dir.path().join("trained");
    let o = thumbsel(&["train", "--data", s(&data), "--max-epochs", "2", "--out", s(&trained)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ckpt = trained.join("checkpoint.bin");
    let log = fs::read_to_string(trained.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);

    // λ only moves the fused and selected columns.
    let (l0, l2) = (dir.path().join("l0"), dir.path().join("l2"));
    for (out, lambda) in [(&l0, "0"), (&l2, "0.2")] {
        let o = thumbsel(&["select", "--checkpoint", s(&ckpt), "--data", s(&data), "--lambda", lambda, "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = fs::read_to_string(l0.join("scores.csv")).unwrap();
    let b = fs::read_to_string(l2.join("scores.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
    for (x, y) in a.lines().zip(b.lines()) {
        let (x, y): (Vec<&str>, Vec<&str>) = (x.split(',').collect(), y.split(',').collect());
        assert_eq!(x[..4], y[..4]);
    }

    // Random baseline over the planted corpus.
    let rnd = dir.path().join("rnd");
    let o = thumbsel(&["eval", "--random", "--data", s(&data), "--out", s(&rnd)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(rnd.join("eval.json")).unwrap()).unwrap();
    assert_eq!(v["seeds"].as_array().unwrap().len(), 5);

    // No ground truth.
    let empty_gt = dir.path().join("gt.csv");
    fs::write(&empty_gt, "video_id,frame_id\n").unwrap();
    let o = thumbsel(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--ground-truth", s(&empty_gt), "--out", s(&rnd)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    // Checkpoint trained on 64-dim features against 32-dim candidates.
    let narrow = dir.path().join("narrow");
    assert_eq!(gen_small(&narrow, &["--d-raw", "32"]).status.code(), Some(0));
    let o = thumbsel(&["select", "--checkpoint", s(&ckpt), "--data", s(&narrow), "--out", s(&rnd)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn random_baseline_on_default_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = thumbsel(&["gen", "--seed", "7", "--source-examples", "100", "--out", s(&data)]);
    assert_eq!(o.status.code(), Some(0));
    let o = thumbsel(&["eval", "--random", "--seed", "7", "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("eval.json")).unwrap()).unwrap();
    let acc = v["accuracy_mean"].as_f64().unwrap();
    assert!((0.08..=0.15).contains(&acc), "random accuracy {acc}");
}

#[test]
fn numeric_abort_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(gen_small(&data, &[]).status.code(), Some(0));
    let o = thumbsel(&["train", "--data", s(&data), "--max-epochs", "1", "--learning-rate", "1e308", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn check_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = thumbsel(&["check", "--all", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = thumbsel(&["check", "--grads", "--sabotage", "vis_w", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("vis_w"));

    let o = thumbsel(&["check", "--mmd", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().filter(|l| !l.trim().is_empty()).all(|l| l.contains(" mmd ")), "{stdout}");
}
