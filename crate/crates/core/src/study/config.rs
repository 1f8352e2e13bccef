//! Study configuration, read from a TOML key-value file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Window sizes `⌈10^e⌉` for `count` exponents evenly spaced on `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSpacing {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

/// Event counts `⌈10^{a + (b − a) k / (n − 1)}⌉`, `k = 0..n`. Powers that land
/// within rounding error of an integer are taken as that integer.
pub fn log_spaced_counts(spacing: LogSpacing) -> Result<Vec<usize>> {
    let LogSpacing { from, to, count } = spacing;
    if count == 0 || !(from.is_finite() && to.is_finite()) || from < 0.0 || (count > 1 && to <= from) {
        return Err(Error::Config(format!("invalid log spacing {spacing:?}")));
    }
    let counts: Vec<usize> = (0..count)
        .map(|k| {
            let e = if count == 1 {
                from
            } else {
                from + (to - from) * k as f64 / (count - 1) as f64
            };
            let v = 10f64.powf(e);
            let r = v.round();
            if (v - r).abs() <= 1e-9 * v {
                r as usize
            } else {
                v.ceil() as usize
            }
        })
        .collect();
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "log spacing {spacing:?} produces repeated counts"
        )));
    }
    Ok(counts)
}

fn default_workers() -> usize {
    1
}

fn default_jitter() -> f64 {
    0.2
}

/// Study over the exponential-kernel family with uniform discrete marks:
/// the ground process has intensity `background + Σ excitation e^{−decay (t − t_l)}`
/// and each event's label is uniform on `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// S, the number of simulated realizations.
    pub realizations: usize,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_spaced: Option<LogSpacing>,
    pub k_values: Vec<usize>,
    pub background: f64,
    pub excitation: f64,
    pub decay: f64,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Multiplicative jitter applied to the truth for the first start.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Write measured fit times into `rows.csv` (makes the file
    /// run-dependent); zeros are written otherwise.
    #[serde(default)]
    pub record_runtime: bool,
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `output_dir` is resolved against the
    /// file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output_dir = parent.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k_values must be non-empty and positive".into());
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("k_values must be strictly increasing".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.background > 0.0 && self.excitation >= 0.0 && self.decay > 0.0) {
            return bad("background and decay must be positive, excitation non-negative".into());
        }
        if self.excitation / self.decay >= 1.0 {
            return bad(format!(
                "branching ratio {} is not below 1",
                self.excitation / self.decay
            ));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad("jitter must be non-negative".into());
        }
        let counts = self.counts()?;
        if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("target counts must be positive and strictly increasing".into());
        }
        Ok(())
    }

    /// Window sizes, either listed or log-spaced.
    pub fn counts(&self) -> Result<Vec<usize>> {
        match (&self.target_counts, &self.log_spaced) {
            (Some(c), None) => Ok(c.clone()),
            (None, Some(s)) => log_spaced_counts(*s),
            _ => Err(Error::Config(
                "give exactly one of target_counts and log_spaced".into(),
            )),
        }
    }

    /// SHA-256 of the settings that determine the results (everything except
    /// `workers` and `output_dir`).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.workers = 1;
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
realizations = 4
horizon = 300.0
log_spaced = { from = 2.0, to = 4.0, count = 20 }
k_values = [1, 2]
background = 1.0
excitation = 1.0
decay = 2.0
seed = 7
workers = 2
output_dir = "out"
"#;

    #[test]
    fn parses_and_hashes() {
        let cfg = StudyConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.counts().unwrap().len(), 20);
        let mut other = cfg.clone();
        other.workers = 8;
        other.output_dir = "elsewhere".into();
        assert_eq!(cfg.hash(), other.hash());
        other.seed = 8;
        assert_ne!(cfg.hash(), other.hash());
        let round = StudyConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn log_spaced_schedule() {
        let c = log_spaced_counts(LogSpacing { from: 2.0, to: 4.0, count: 20 }).unwrap();
        assert_eq!(c[0], 100);
        assert_eq!(c[19], 10_000);
        for (k, n) in c.iter().enumerate() {
            let e = 2.0 + 2.0 * k as f64 / 19.0;
            let v = 10f64.powf(e);
            assert!(*n as f64 >= v - 1e-6 && (*n as f64) < v + 1.0, "{k}: {n} vs {v}");
        }
        let c = log_spaced_counts(LogSpacing { from: 2.0, to: 3.5, count: 8 }).unwrap();
        assert_eq!(c, vec![100, 164, 269, 440, 720, 1179, 1931, 3163]);
    }

    #[test]
    fn rejects_bad_configs() {
        let swap = |from: &str, to: &str| StudyConfig::from_toml_str(&SAMPLE.replace(from, to));
        assert!(swap("realizations = 4", "realizations = 0").is_err());
        assert!(swap("excitation = 1.0", "excitation = 2.5").is_err());
        assert!(swap("k_values = [1, 2]", "k_values = []").is_err());
        assert!(swap("seed = 7", "seed = 7\nunknown = 1").is_err());
        assert!(swap(
            "log_spaced = { from = 2.0, to = 4.0, count = 20 }",
            "target_counts = [20, 10]"
        )
        .is_err());
    }
}
