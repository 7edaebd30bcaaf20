use std::collections::HashSet;

use thumbsel::corpus::{labeled_examples, read_features, read_ground_truth, read_manifest};
use thumbsel::synthgen::oracle::nearest_prototype_accuracy;
use thumbsel::synthgen::{files, generate_corpus, SynthSpec};
use thumbsel::wordspace::{load_topic_list, load_word_vectors};

fn small() -> SynthSpec {
    SynthSpec { n_videos: 60, n_source: 400, ..SynthSpec::default() }
}

#[test]
fn generation_is_deterministic() {
    let a = generate_corpus(&small()).unwrap();
    let b = generate_corpus(&small()).unwrap();
    assert_eq!(a.videos, b.videos);
    assert_eq!(a.source, b.source);
    assert_eq!(a.topics, b.topics);
    let c = generate_corpus(&SynthSpec { seed: 8, ..small() }).unwrap();
    assert_ne!(a.videos, c.videos);
}

#[test]
fn noiseless_frames_are_lifted_and_shifted_prototypes() {
    let corpus = generate_corpus(&SynthSpec { noise_sigma: 0.0, ..small() }).unwrap();
    for (video, plants) in corpus.videos.iter().zip(&corpus.planted) {
        for (cand, plant) in video.candidates.iter().zip(plants) {
            let expected = corpus.shift.apply(&corpus.lift.matvec(&plant.semantic));
            assert_eq!(cand.feature, expected);
        }
    }
}

#[test]
fn source_labels_are_recoverable() {
    let corpus = generate_corpus(&SynthSpec { max_labels_per_example: 1, ..small() }).unwrap();
    let lifted: Vec<(String, Vec<f64>)> = corpus
        .labels
        .iter()
        .map(|l| (l.clone(), corpus.lift.matvec(corpus.words.prototype(l).unwrap())))
        .collect();
    let examples: Vec<(Vec<String>, Vec<f64>)> =
        corpus.source.iter().map(|e| (e.labels.clone(), e.feature.clone())).collect();
    assert!(nearest_prototype_accuracy(&lifted, &examples) >= 0.99);
}

#[test]
fn planted_ground_truth_is_separable() {
    let corpus = generate_corpus(&SynthSpec::default()).unwrap();
    let separable = corpus
        .videos
        .iter()
        .zip(&corpus.planted)
        .filter(|(video, plants)| {
            let gt = video.ground_truth.unwrap();
            plants.iter().enumerate().all(|(i, p)| i == gt || p.topic_mass < plants[gt].topic_mass)
        })
        .count();
    assert!(separable as f64 >= 0.95 * corpus.videos.len() as f64);
}

#[test]
fn zero_shot_words_never_label_source() {
    let corpus = generate_corpus(&SynthSpec::default()).unwrap();
    assert_eq!(corpus.zero_shot_words.len(), 3);
    let used: HashSet<&str> = corpus.source.iter().flat_map(|e| e.labels.iter().map(String::as_str)).collect();
    for w in &corpus.zero_shot_words {
        assert!(corpus.words.contains(w));
        assert!(!used.contains(w.as_str()));
        assert!(corpus.topics.items().iter().any(|t| &t.word == w));
    }
}

#[test]
fn candidate_counts_within_bounds() {
    let corpus = generate_corpus(&SynthSpec::default()).unwrap();
    assert!(corpus.videos.iter().all(|v| (7..=12).contains(&v.candidates.len())));
    let total: f64 = corpus.videos[0].candidates.iter().map(|c| c.representativeness).sum();
    assert!((total - 1.0).abs() <= 1e-12);
}

#[test]
fn written_files_read_back() {
    let corpus = generate_corpus(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write(dir.path()).unwrap();
    let words = load_word_vectors(&dir.path().join(files::WORDS)).unwrap();
    assert_eq!(words.len(), corpus.words.len());
    assert_eq!(load_topic_list(&dir.path().join(files::TOPICS)).unwrap(), corpus.topics);
    let source = labeled_examples(read_features(&dir.path().join(files::SOURCE)).unwrap()).unwrap();
    assert_eq!(source.len(), corpus.source.len());
    assert_eq!(source[0].labels, corpus.source[0].labels);
    let target = read_features(&dir.path().join(files::TARGET)).unwrap();
    assert_eq!(target.len(), corpus.target_pool().len());
    let manifest = read_manifest(&dir.path().join(files::CANDIDATES)).unwrap();
    assert!(!format!("{manifest:?}").is_empty());
    let gt = read_ground_truth(&dir.path().join(files::GROUND_TRUTH)).unwrap();
    assert_eq!(gt.len(), corpus.videos.len());
    assert_eq!(gt["v0000"], corpus.videos[0].ground_truth.unwrap());
}
