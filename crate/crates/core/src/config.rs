//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; a trailing `# ...`
//! after a value is a comment. Keys are dotted paths such as `adam.beta1`.
//! Every field of [`Settings`] is addressable, and [`Settings::entries`]
//! renders a snapshot that parses back to the same settings.

use std::path::Path;

use crate::error::{Error, Result};
use crate::frames::{QualityThresholds, DEFAULT_TAU};
use crate::trainer::{Grid, TrainConfig};

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str, origin: &Path) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "empty key or value".into(),
            });
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value '{value}' for '{key}'")))
}

pub(crate) fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect()
}

pub(crate) fn format_list<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Everything a config file can set.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub grid: Grid,
    pub quality: QualityThresholds,
    pub tau: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            grid: Grid::default(),
            quality: QualityThresholds::default(),
            tau: DEFAULT_TAU,
        }
    }
}

impl Settings {
    /// Applies one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(rest) = key.strip_prefix("grid.") {
            return self.grid.set(rest, value);
        }
        match key {
            "frames.dark" => self.quality.dark = parse_value(key, value)?,
            "frames.blur" => self.quality.blur = parse_value(key, value)?,
            "frames.entropy" => self.quality.entropy = parse_value(key, value)?,
            "frames.tau" => self.tau = parse_value(key, value)?,
            _ => {
                if !self.train.set(key, value)? {
                    return Err(Error::invalid(format!("unknown config key '{key}'")));
                }
            }
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for e in parse_entries(text, origin)? {
            self.set(&e.key, &e.value).map_err(|err| Error::Parse {
                path: origin.to_path_buf(),
                line: e.line,
                message: err.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::default();
        s.apply_text(&text, path)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.grid.validate()?;
        if !(self.tau > 0.0 && self.tau < 2.0) {
            return Err(Error::invalid(format!("frames.tau must lie in (0, 2), got {}", self.tau)));
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = self.train.entries();
        out.extend(self.grid.entries().into_iter().map(|(k, v)| (format!("grid.{k}"), v)));
        out.push(("frames.dark".into(), self.quality.dark.to_string()));
        out.push(("frames.blur".into(), self.quality.blur.to_string()));
        out.push(("frames.entropy".into(), self.quality.entropy.to_string()));
        out.push(("frames.tau".into(), self.tau.to_string()));
        out
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\nbatch_size = 256  # trailing\n  learning_rate=0.005\n";
        let entries = parse_entries(text, Path::new("c.cfg")).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].key, "batch_size");
        assert_eq!(entries[0].value, "256");
        assert_eq!(entries[1].line, 4);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = parse_entries("a = 1\nnot a pair\n", Path::new("c.cfg")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut s = Settings::default();
        let err = s.apply_text("no.such.key = 1\n", Path::new("c.cfg")).unwrap_err();
        assert!(err.to_string().contains("no.such.key"));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut s = Settings::default();
        s.apply_text(
            "alpha = 0.7\nmu = 0\nadam.beta2 = 0.99\nloss.attend_negatives = false\n\
             popularity.raw_counts = true\nd_feat = 48\ngrid.lambda = 0,0.2,1\nframes.tau = 0.25\n",
            Path::new("c.cfg"),
        )
        .unwrap();
        let mut back = Settings::default();
        back.apply_text(&s.to_text(), Path::new("snapshot")).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.train.hyper.alpha, 0.7);
        assert!(!back.train.hyper.attend_negatives);
        assert_eq!(back.grid.lambdas, vec![0.0, 0.2, 1.0]);
    }
}
