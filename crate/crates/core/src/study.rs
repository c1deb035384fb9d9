//! Study vocabulary, term roles and protocol parameters.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Role of a term in a study. Each term carries exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermRole {
    Key,
    Positive,
    Negative,
    Neutral,
    Control,
}

impl TermRole {
    /// Positive, negative, neutral and control terms are all tracked against key terms.
    pub fn is_classifier(self) -> bool {
        !matches!(self, TermRole::Key)
    }

    /// Roles whose distance to the key terms is expected to stay flat.
    pub fn is_control(self) -> bool {
        matches!(self, TermRole::Control | TermRole::Neutral)
    }
}

impl fmt::Display for TermRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TermRole::Key => "key",
            TermRole::Positive => "positive",
            TermRole::Negative => "negative",
            TermRole::Neutral => "neutral",
            TermRole::Control => "control",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub text: String,
    pub role: TermRole,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub language_tag: String,
}

impl TermSpec {
    pub fn new(text: impl Into<String>, role: TermRole) -> Self {
        TermSpec {
            text: text.into(),
            role,
            language_tag: String::new(),
        }
    }

    pub fn with_language(mut self, tag: impl Into<String>) -> Self {
        self.language_tag = tag.into();
        self
    }
}

/// One calendar year of the index: `[year-01-01, year-12-31]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearWindow {
    pub year: i32,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

pub fn year_window(year: i32) -> YearWindow {
    YearWindow {
        year,
        start: NaiveDate::from_ymd_opt(year, 1, 1).expect("year out of calendar range"),
        end: NaiveDate::from_ymd_opt(year, 12, 31).expect("year out of calendar range"),
    }
}

fn default_normalization_ref() -> String {
    "the".to_string()
}
fn default_normalization_factor() -> f64 {
    100.0
}
fn default_repetitions_single() -> u32 {
    5
}
fn default_repetitions_joint() -> u32 {
    3
}
fn default_cutoff_year() -> i32 {
    2001
}
fn default_slope_threshold() -> f64 {
    0.005
}
fn default_rel_error_max() -> f64 {
    1.0 / 3.0
}
fn default_artifact_min_run() -> u32 {
    3
}
fn default_artifact_count_floor() -> f64 {
    100.0
}
fn default_incl_excl_tolerance() -> f64 {
    0.05
}

/// The measured vocabulary together with every protocol and analysis threshold.
///
/// On disk this is a JSON document with exactly these fields; anything else is
/// rejected so that a misspelt threshold cannot silently fall back to its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub terms: Vec<TermSpec>,
    pub year_range: (i32, i32),
    #[serde(default = "default_normalization_ref")]
    pub normalization_ref: String,
    #[serde(default = "default_normalization_factor")]
    pub normalization_factor: f64,
    #[serde(default = "default_repetitions_single")]
    pub repetitions_single: u32,
    #[serde(default = "default_repetitions_joint")]
    pub repetitions_joint: u32,
    #[serde(default = "default_cutoff_year")]
    pub cutoff_year: i32,
    #[serde(default = "default_slope_threshold")]
    pub slope_threshold: f64,
    #[serde(default = "default_rel_error_max")]
    pub rel_error_max: f64,
    #[serde(default = "default_artifact_min_run")]
    pub artifact_min_run: u32,
    #[serde(default = "default_artifact_count_floor")]
    pub artifact_count_floor: f64,
    #[serde(default = "default_incl_excl_tolerance")]
    pub incl_excl_tolerance: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing study config: {0}")]
    Parse(#[from] serde_json::Error),
}

impl StudyConfig {
    /// A config with every threshold at its default.
    pub fn new(terms: Vec<TermSpec>, year_range: (i32, i32)) -> Self {
        StudyConfig {
            terms,
            year_range,
            normalization_ref: default_normalization_ref(),
            normalization_factor: default_normalization_factor(),
            repetitions_single: default_repetitions_single(),
            repetitions_joint: default_repetitions_joint(),
            cutoff_year: default_cutoff_year(),
            slope_threshold: default_slope_threshold(),
            rel_error_max: default_rel_error_max(),
            artifact_min_run: default_artifact_min_run(),
            artifact_count_floor: default_artifact_count_floor(),
            incl_excl_tolerance: default_incl_excl_tolerance(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        let (first, last) = self.year_range;
        first..=last
    }

    pub fn key_terms(&self) -> impl Iterator<Item = &TermSpec> {
        self.terms.iter().filter(|t| t.role == TermRole::Key)
    }

    pub fn classifier_terms(&self) -> impl Iterator<Item = &TermSpec> {
        self.terms.iter().filter(|t| t.role.is_classifier())
    }

    pub fn control_terms(&self) -> impl Iterator<Item = &TermSpec> {
        self.terms.iter().filter(|t| t.role.is_control())
    }

    pub fn term(&self, text: &str) -> Option<&TermSpec> {
        self.terms.iter().find(|t| t.text == text)
    }

    /// Every pair whose joint count the protocol measures, in a fixed order:
    /// each key against each classifier, then each unordered pair of keys.
    /// The first element of a pair is always a key term.
    pub fn measured_pairs(&self) -> Vec<(&TermSpec, &TermSpec)> {
        let keys: Vec<&TermSpec> = self.key_terms().collect();
        let mut pairs = Vec::new();
        for key in &keys {
            for other in self.classifier_terms() {
                pairs.push((*key, other));
            }
        }
        for (i, a) in keys.iter().enumerate() {
            for b in &keys[i + 1..] {
                pairs.push((*a, *b));
            }
        }
        pairs
    }
}

/// Returns every invariant violation in `config`; an empty list means valid.
pub fn validate_config(config: &StudyConfig) -> Vec<String> {
    let mut out = Vec::new();

    let mut seen = BTreeSet::new();
    for term in &config.terms {
        if term.text.trim().is_empty() {
            out.push(format!("term {:?} has empty text", term.text));
        }
        if term.text.contains('"') {
            out.push(format!(
                "term {:?} contains a double-quote character",
                term.text
            ));
        }
        if !seen.insert(term.text.as_str()) {
            out.push(format!("term {:?} is listed more than once", term.text));
        }
    }

    let (first, last) = config.year_range;
    if first > last {
        out.push("first_year > last_year".to_string());
    } else if config.cutoff_year < first - 1 || config.cutoff_year > last + 1 {
        out.push(format!(
            "cutoff_year {} is outside year_range ({first}, {last})",
            config.cutoff_year
        ));
    }

    if config.term(&config.normalization_ref).is_none() {
        out.push(format!(
            "normalization_ref {:?} is not among the terms, so its counts would never be fetched",
            config.normalization_ref
        ));
    }

    let positive = |name: &str, v: f64, out: &mut Vec<String>| {
        if !(v.is_finite() && v > 0.0) {
            out.push(format!("{name} must be a positive number, got {v}"));
        }
    };
    positive("normalization_factor", config.normalization_factor, &mut out);
    positive("slope_threshold", config.slope_threshold, &mut out);
    positive("rel_error_max", config.rel_error_max, &mut out);
    positive("incl_excl_tolerance", config.incl_excl_tolerance, &mut out);
    if config.repetitions_single == 0 {
        out.push("repetitions_single must be at least 1".to_string());
    }
    if config.repetitions_joint == 0 {
        out.push("repetitions_joint must be at least 1".to_string());
    }
    if config.artifact_min_run < 2 {
        out.push(format!(
            "artifact_min_run must be at least 2, got {}",
            config.artifact_min_run
        ));
    }
    if !(config.artifact_count_floor.is_finite() && config.artifact_count_floor >= 0.0) {
        out.push(format!(
            "artifact_count_floor must be non-negative, got {}",
            config.artifact_count_floor
        ));
    }
    out
}
