//! Word-vector table (the semantic embedding space) and the popular-topic list.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Token → unit-normalized semantic vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSpace {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl WordSpace {
    /// Builds a word space from raw vectors, normalizing each to unit length.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::invalid("word space dimension must be positive"));
        }
        let mut ws = WordSpace {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        };
        for (word, vector) in entries {
            ws.insert(word.into(), vector)?;
        }
        Ok(ws)
    }

    fn insert(&mut self, word: String, mut vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(format!("vector for '{word}'"), self.dim, vector.len()));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite component in vector for '{word}'")));
        }
        let n = norm(&vector);
        if n == 0.0 {
            return Err(Error::invalid(format!("zero vector for '{word}' cannot be normalized")));
        }
        if self.index.contains_key(&word) {
            return Err(Error::invalid(format!("duplicate token '{word}'")));
        }
        vector.iter_mut().for_each(|x| *x /= n);
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// The unit prototype of `word`, or `None` when the token is unknown.
    pub fn prototype(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Words in file order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (word, vector) in self.words.iter().zip(&self.vectors) {
            out.extend_from_slice(word.as_bytes());
            for x in vector {
                write!(out, " {x}").expect("write to Vec");
            }
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Loads a whitespace-separated text word-vector file (`token v1 ... vd`).
///
/// The dimension is taken from the first line; every vector is L2-normalized.
pub fn load_word_vectors(path: &Path) -> Result<WordSpace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut ws: Option<WordSpace> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a token");
        let mut vector = Vec::new();
        for part in parts {
            let x: f64 = part
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad number '{part}'")))?;
            if !x.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value '{part}'")));
            }
            vector.push(x);
        }
        if vector.is_empty() {
            return Err(parse_err(lineno, format!("token '{token}' has no components")));
        }
        let space = ws.get_or_insert_with(|| WordSpace {
            dim: vector.len(),
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        });
        if vector.len() != space.dim {
            return Err(parse_err(
                lineno,
                format!("expected {} components, found {}", space.dim, vector.len()),
            ));
        }
        space
            .insert(token.to_string(), vector)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
    }
    ws.ok_or_else(|| parse_err(0, "empty word-vector file".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicItem {
    pub word: String,
    pub count: u64,
    pub weight: f64,
}

/// Popular-topic words with raw frequencies and normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicList {
    items: Vec<TopicItem>,
}

impl TopicList {
    /// Weights are `count / Σ counts`; order is preserved.
    pub fn from_counts<I, S>(counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut items = Vec::new();
        for (word, count) in counts {
            let word = word.into();
            if !seen.insert(word.clone()) {
                return Err(Error::invalid(format!("duplicate topic word '{word}'")));
            }
            items.push(TopicItem {
                word,
                count,
                weight: 0.0,
            });
        }
        let total: u64 = items.iter().map(|t| t.count).sum();
        if total == 0 {
            return Err(Error::invalid("topic list has no positive count"));
        }
        for item in &mut items {
            item.weight = item.count as f64 / total as f64;
        }
        Ok(TopicList { items })
    }

    pub fn items(&self) -> &[TopicItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Drops words without a prototype (with a warning) and renormalizes.
    pub fn restrict_to(&self, ws: &WordSpace) -> Result<TopicList> {
        let kept: Vec<_> = self
            .items
            .iter()
            .filter(|t| {
                let known = ws.contains(&t.word);
                if !known {
                    log::warn!("topic word '{}' has no word vector; skipped", t.word);
                }
                known
            })
            .map(|t| (t.word.clone(), t.count))
            .collect();
        if kept.is_empty() {
            return Err(Error::invalid("no topic word has a word vector"));
        }
        TopicList::from_counts(kept)
    }

    /// Keeps only the topics accepted by `keep`, renormalizing weights.
    pub fn filtered(&self, mut keep: impl FnMut(&str) -> bool) -> Result<TopicList> {
        TopicList::from_counts(
            self.items
                .iter()
                .filter(|t| keep(&t.word))
                .map(|t| (t.word.clone(), t.count)),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&format!("{}\t{}\n", item.word, item.count));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Loads a `word<TAB>count` list without header.
pub fn load_topic_list(path: &Path) -> Result<TopicList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut counts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (word, count) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(lineno, "expected 'word<TAB>count'".into()))?;
        let word = word.trim();
        let count: i64 = count
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad count '{}'", count.trim())))?;
        if count < 0 {
            return Err(parse_err(lineno, format!("negative count {count}")));
        }
        if !seen.insert(word.to_string()) {
            return Err(parse_err(lineno, format!("duplicate topic word '{word}'")));
        }
        counts.push((word.to_string(), count as u64));
    }
    if counts.is_empty() {
        return Err(parse_err(0, "empty topic list".into()));
    }
    TopicList::from_counts(counts).map_err(|e| parse_err(0, e.to_string()))
}
