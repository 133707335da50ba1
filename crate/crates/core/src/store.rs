//! Append-only persistence of pipeline evaluations.
//!
//! An experience bundles the evaluated configuration, its recorded metrics
//! (or the failure that prevented them), the meta-features of the task it ran
//! on, and the hardware profile of the machine. Records are newline-delimited
//! self-describing JSON, one per line, so the store is diff-friendly and
//! readable from any language.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::MetaFeatureVector;
use crate::space::Configuration;

/// Wire schema version stamped on every record.
pub const SCHEMA_VERSION: u32 = 1;

/// Name of the mandatory wall-clock metric.
pub const EVALUATION_TIME: &str = "evaluation_time";

/// Minimal hardware profile recorded with every experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub cpu_cores: u32,
    pub cpu_freq_mhz: f64,
    pub ram_total_mb: u64,
    pub gpu_vram_mb: u64,
}

impl SystemProfile {
    /// Profile as a numeric block for concatenated distance spaces.
    pub fn as_features(&self) -> Vec<f64> {
        vec![
            self.cpu_cores as f64,
            self.cpu_freq_mhz,
            self.ram_total_mb as f64,
            self.gpu_vram_mb as f64,
        ]
    }
}

/// Optimization direction of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// One named objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    #[serde(with = "f64_repr")]
    pub value: f64,
    pub direction: Direction,
}

/// JSON has no NaN/Infinity literals; encode non-finite values as strings so
/// invalid metrics survive a round trip bit-for-bit in meaning.
mod f64_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(s)
        } else if v.is_nan() {
            "NaN".serialize(s)
        } else if *v > 0.0 {
            "Infinity".serialize(s)
        } else {
            "-Infinity".serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!(
                    "invalid float literal `{other}`"
                ))),
            },
        }
    }
}

/// Recorded objectives of one successful evaluation. Always carries an
/// `evaluation_time` metric (seconds, minimized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Metric>", into = "Vec<Metric>")]
pub struct FitnessVector {
    metrics: Vec<Metric>,
}

impl TryFrom<Vec<Metric>> for FitnessVector {
    type Error = Error;
    fn try_from(metrics: Vec<Metric>) -> Result<Self> {
        FitnessVector::from_metrics(metrics)
    }
}

impl From<FitnessVector> for Vec<Metric> {
    fn from(f: FitnessVector) -> Vec<Metric> {
        f.metrics
    }
}

impl FitnessVector {
    /// Quality metrics plus the mandatory evaluation time.
    pub fn new(quality: Vec<Metric>, evaluation_time_secs: f64) -> FitnessVector {
        let mut metrics = quality;
        metrics.push(Metric {
            name: EVALUATION_TIME.into(),
            value: evaluation_time_secs,
            direction: Direction::Minimize,
        });
        FitnessVector { metrics }
    }

    /// Build from an explicit metric list; `evaluation_time` must be present
    /// (minimized) and names must be unique.
    pub fn from_metrics(metrics: Vec<Metric>) -> Result<FitnessVector> {
        let mut seen = BTreeSet::new();
        for m in &metrics {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate metric `{}`", m.name)));
            }
        }
        match metrics.iter().find(|m| m.name == EVALUATION_TIME) {
            Some(et) if et.direction == Direction::Minimize => Ok(FitnessVector { metrics }),
            Some(_) => Err(Error::Invalid("evaluation_time must be minimized".into())),
            None => Err(Error::Invalid(
                "fitness vector lacks evaluation_time".into(),
            )),
        }
    }

    pub fn metrics(&self) -> &[Metric] {
        &self.metrics
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.value)
    }

    pub fn evaluation_time(&self) -> f64 {
        self.get(EVALUATION_TIME)
            .expect("constructor guarantees evaluation_time")
    }

    /// First maximized metric; the quality axis of 2-D Pareto views.
    pub fn primary_quality(&self) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.direction == Direction::Maximize)
            .map(|m| m.value)
    }

    /// All metric values finite and evaluation time positive.
    pub fn is_valid(&self) -> bool {
        self.metrics.iter().all(|m| m.value.is_finite()) && self.evaluation_time() > 0.0
    }
}

/// Why an evaluation produced no metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    OutOfMemory,
    Timeout,
    RuntimeError,
}

/// Result of one evaluation: metrics or a failure, never both.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success(FitnessVector),
    Failure(FailureKind),
}

/// Positive/negative labeling of an experience.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

/// One recorded evaluation with its full context.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub id: u64,
    pub task_id: String,
    pub family: String,
    pub config: Configuration,
    pub outcome: Outcome,
    pub task_features: MetaFeatureVector,
    pub system: SystemProfile,
    /// ISO-8601 timestamp assigned at append time.
    pub timestamp: String,
}

/// Experience fields supplied by the caller; id and timestamp are assigned
/// by the store on append.
#[derive(Debug, Clone)]
pub struct ExperienceDraft {
    pub task_id: String,
    pub family: String,
    pub config: Configuration,
    pub outcome: Outcome,
    pub task_features: MetaFeatureVector,
    pub system: SystemProfile,
}

/// An experience is positive iff all fitness metrics are valid; failures and
/// non-finite metrics are negative.
pub fn label(e: &Experience) -> Label {
    match &e.outcome {
        Outcome::Success(m) if m.is_valid() => Label::Positive,
        _ => Label::Negative,
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireRecord {
    schema_version: u32,
    id: u64,
    task_id: String,
    family: String,
    timestamp: String,
    config: Configuration,
    metrics: Option<FitnessVector>,
    failure: Option<FailureKind>,
    task_features: MetaFeatureVector,
    system: SystemProfile,
}

impl WireRecord {
    fn from_experience(e: &Experience) -> WireRecord {
        let (metrics, failure) = match &e.outcome {
            Outcome::Success(m) => (Some(m.clone()), None),
            Outcome::Failure(f) => (None, Some(*f)),
        };
        WireRecord {
            schema_version: SCHEMA_VERSION,
            id: e.id,
            task_id: e.task_id.clone(),
            family: e.family.clone(),
            timestamp: e.timestamp.clone(),
            config: e.config.clone(),
            metrics,
            failure,
            task_features: e.task_features.clone(),
            system: e.system.clone(),
        }
    }

    fn into_experience(self) -> Result<Experience> {
        let outcome = match (self.metrics, self.failure) {
            (Some(m), None) => Outcome::Success(m),
            (None, Some(f)) => Outcome::Failure(f),
            (Some(_), Some(_)) => {
                return Err(Error::Invalid(
                    "record sets both metrics and failure".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Invalid(
                    "record sets neither metrics nor failure".into(),
                ))
            }
        };
        Ok(Experience {
            id: self.id,
            task_id: self.task_id,
            family: self.family,
            config: self.config,
            outcome,
            task_features: self.task_features,
            system: self.system,
            timestamp: self.timestamp,
        })
    }
}

/// Parse one wire line into an experience, enforcing record invariants.
pub fn parse_record(line: &str) -> Result<Experience> {
    let wire: WireRecord = serde_json::from_str(line)?;
    wire.into_experience()
}

/// Serialize an experience to its wire line (no trailing newline).
pub fn format_record(e: &Experience) -> Result<String> {
    Ok(serde_json::to_string(&WireRecord::from_experience(e))?)
}

// ---------------------------------------------------------------------------
// File-backed store
// ---------------------------------------------------------------------------

/// Append-only file of experience records. Single writer, any number of
/// readers; readers see a prefix-consistent file.
#[derive(Debug)]
pub struct ExperienceStore {
    path: PathBuf,
    next_id: u64,
}

impl ExperienceStore {
    /// Open (or create) a store file.
    pub fn open<P: AsRef<Path>>(path: P) -> Result<ExperienceStore> {
        let path = path.as_ref().to_path_buf();
        let next_id = if path.exists() {
            let file = BufReader::new(File::open(&path)?);
            let mut max_id = None;
            for line in file.lines() {
                let e = parse_record(&line?)?;
                max_id = Some(max_id.map_or(e.id, |m: u64| m.max(e.id)));
            }
            max_id.map_or(0, |m| m + 1)
        } else {
            File::create(&path)?;
            0
        };
        Ok(ExperienceStore { path, next_id })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably append one record; returns the assigned id.
    pub fn append(&mut self, draft: ExperienceDraft, timestamp: &str) -> Result<u64> {
        if let Outcome::Success(m) = &draft.outcome {
            if m.metrics().is_empty() {
                return Err(Error::Invalid("success outcome without metrics".into()));
            }
        }
        let id = self.next_id;
        let e = Experience {
            id,
            task_id: draft.task_id,
            family: draft.family,
            config: draft.config,
            outcome: draft.outcome,
            task_features: draft.task_features,
            system: draft.system,
            timestamp: timestamp.to_string(),
        };
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        file.write_all(format_record(&e)?.as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        self.next_id += 1;
        Ok(id)
    }

    /// All records in insertion order.
    pub fn all(&self) -> Result<Vec<Experience>> {
        let file = BufReader::new(File::open(&self.path)?);
        file.lines().map(|l| parse_record(&l?)).collect()
    }

    /// Records of one family in insertion order, optionally excluding a task.
    pub fn query(&self, family: &str, exclude_task: Option<&str>) -> Result<Vec<Experience>> {
        Ok(self
            .all()?
            .into_iter()
            .filter(|e| e.family == family && exclude_task.is_none_or(|t| e.task_id != t))
            .collect())
    }
}
