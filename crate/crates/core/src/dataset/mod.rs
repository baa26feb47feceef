//! Benchmark dataset ingestion, validation and normalization.
//!
//! A dataset is a collection of timed kernel executions, one per
//! (device, input, parameter configuration) triple. After ingestion the
//! dataset is immutable and carries per-environment oracle (best) and worst
//! runtime caches, from which slowdown matrices are derived.

mod clblast;
mod csv;
mod matrix;
mod synthetic;

pub use clblast::{ingest_clblast_db, ingest_clblast_db_with, ClblastOptions, ClblastStats};
pub use csv::{ingest_csv, CsvSchema};
pub use matrix::{build_slowdown_matrix, PenaltyPolicy, SlowdownMatrix};
pub use synthetic::{generate_synthetic, PlantedDataset, SyntheticSpec};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A GPU device identity with optional metadata.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_units: Option<u32>,
}

impl DeviceId {
    pub fn named(name: impl Into<String>) -> Self {
        DeviceId {
            name: name.into(),
            vendor: None,
            compute_units: None,
        }
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// GEMM problem dimensions. The kernel multiplies an M*N by an N*K matrix.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct KernelInput {
    pub m: u32,
    pub n: u32,
    pub k: u32,
}

impl KernelInput {
    pub fn new(m: u32, n: u32, k: u32) -> Result<Self> {
        if m < 1 || n < 1 || k < 1 {
            return Err(Error::InvalidGenerator(format!(
                "kernel input dimensions must be >= 1, got {m}x{n}x{k}"
            )));
        }
        Ok(KernelInput { m, n, k })
    }

    /// Parses the "MxNxK" form used in fleet specs and CLI filters.
    pub fn parse_key(s: &str) -> Option<Self> {
        let mut it = s.split('x');
        let m = it.next()?.trim().parse().ok()?;
        let n = it.next()?.trim().parse().ok()?;
        let k = it.next()?.trim().parse().ok()?;
        if it.next().is_some() || m < 1 || n < 1 || k < 1 {
            return None;
        }
        Some(KernelInput { m, n, k })
    }
}

impl fmt::Display for KernelInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.n, self.k)
    }
}

/// A parameter configuration: the identity of one kernel variant.
///
/// Equality is element-wise; ordering is lexicographic, which is the
/// tie-break order used throughout selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamConfig(pub Vec<u32>);

impl ParamConfig {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Semicolon-joined form used in the CSV params field.
    pub fn to_field(&self) -> String {
        self.0
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for ParamConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// An execution environment: the (device, input) pair a variant runs on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Environment {
    pub device: DeviceId,
    pub input: KernelInput,
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.device.name, self.input)
    }
}

/// One timed kernel execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub env: Environment,
    pub config: ParamConfig,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_ms: Option<f64>,
}

/// Which sample statistic the recorded runtimes are.
///
/// Crowdsourced tuning databases store the sample minimum while locally
/// collected data usually stores the sample mean; the label is carried
/// through so reports can say which one they aggregate, but all values are
/// treated identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingStatistic {
    SampleMean,
    SampleMinimum,
    Unspecified,
}

impl fmt::Display for TimingStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimingStatistic::SampleMean => f.write_str("sample_mean"),
            TimingStatistic::SampleMinimum => f.write_str("sample_minimum"),
            TimingStatistic::Unspecified => f.write_str("unspecified"),
        }
    }
}

/// A validated, immutable collection of tuning records.
///
/// Construction applies the duplicate policy (minimum runtime per
/// (environment, configuration) pair), sorts records into canonical order
/// and populates the oracle/worst caches.
#[derive(Debug, Clone)]
pub struct PerformanceDataset {
    records: Vec<TuningRecord>,
    param_arity: usize,
    timing: TimingStatistic,
    oracle: HashMap<Environment, (f64, ParamConfig)>,
    worst: HashMap<Environment, f64>,
}

impl PartialEq for PerformanceDataset {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.param_arity == other.param_arity
            && self.timing == other.timing
    }
}

impl PerformanceDataset {
    /// Validates and normalizes raw records into a dataset.
    pub fn new(records: Vec<TuningRecord>, timing: TimingStatistic) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let param_arity = records[0].config.len();
        let mut devices: HashMap<String, DeviceId> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.config.len() != param_arity {
                return Err(Error::InconsistentArity {
                    line: i as u64 + 1,
                    expected: param_arity,
                    found: r.config.len(),
                });
            }
            if !(r.runtime_ms.is_finite() && r.runtime_ms > 0.0) {
                return Err(Error::BadRuntime {
                    line: i as u64 + 1,
                    value: r.runtime_ms,
                });
            }
            match devices.get(&r.env.device.name) {
                Some(seen) if *seen != r.env.device => {
                    return Err(Error::ConflictingDevice {
                        name: r.env.device.name.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    devices.insert(r.env.device.name.clone(), r.env.device.clone());
                }
            }
        }

        // Duplicate (env, config) pairs collapse to the minimum runtime.
        let mut dedup: HashMap<(Environment, ParamConfig), TuningRecord> = HashMap::new();
        for r in records {
            let key = (r.env.clone(), r.config.clone());
            match dedup.get_mut(&key) {
                Some(kept) => {
                    if r.runtime_ms < kept.runtime_ms {
                        *kept = r;
                    }
                }
                None => {
                    dedup.insert(key, r);
                }
            }
        }
        let mut records: Vec<TuningRecord> = dedup.into_values().collect();
        records.sort_by(|a, b| (&a.env, &a.config).cmp(&(&b.env, &b.config)));

        let mut oracle: HashMap<Environment, (f64, ParamConfig)> = HashMap::new();
        let mut worst: HashMap<Environment, f64> = HashMap::new();
        for r in &records {
            match oracle.get_mut(&r.env) {
                Some(best) => {
                    // Records are sorted by config, so on runtime ties the
                    // lexicographically smallest config is kept.
                    if r.runtime_ms < best.0 {
                        *best = (r.runtime_ms, r.config.clone());
                    }
                }
                None => {
                    oracle.insert(r.env.clone(), (r.runtime_ms, r.config.clone()));
                }
            }
            let w = worst.entry(r.env.clone()).or_insert(r.runtime_ms);
            if r.runtime_ms > *w {
                *w = r.runtime_ms;
            }
        }

        Ok(PerformanceDataset {
            records,
            param_arity,
            timing,
            oracle,
            worst,
        })
    }

    pub fn records(&self) -> &[TuningRecord] {
        &self.records
    }

    pub fn param_arity(&self) -> usize {
        self.param_arity
    }

    pub fn timing(&self) -> TimingStatistic {
        self.timing
    }

    /// Best runtime and its configuration for an environment.
    pub fn oracle(&self, env: &Environment) -> Option<(f64, &ParamConfig)> {
        self.oracle.get(env).map(|(t, c)| (*t, c))
    }

    /// Worst runtime for an environment.
    pub fn worst(&self, env: &Environment) -> Option<f64> {
        self.worst.get(env).copied()
    }

    /// Distinct environments in canonical (device, input) order.
    pub fn environments(&self) -> Vec<Environment> {
        let mut envs: Vec<Environment> = self.oracle.keys().cloned().collect();
        envs.sort();
        envs
    }

    /// Distinct variants in lexicographic order.
    pub fn variants(&self) -> Vec<ParamConfig> {
        let set: BTreeSet<&ParamConfig> = self.records.iter().map(|r| &r.config).collect();
        set.into_iter().cloned().collect()
    }

    /// Distinct device identities sorted by name.
    pub fn devices(&self) -> Vec<DeviceId> {
        let set: BTreeSet<&DeviceId> = self.records.iter().map(|r| &r.env.device).collect();
        set.into_iter().cloned().collect()
    }

    /// Restricts the dataset to the devices whose names pass `keep`.
    pub fn filter_devices(&self, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let records: Vec<TuningRecord> = self
            .records
            .iter()
            .filter(|r| keep(&r.env.device.name))
            .cloned()
            .collect();
        PerformanceDataset::new(records, self.timing)
    }

    /// Writes the canonical self-describing JSON document.
    pub fn write_canonical(&self, mut out: impl Write) -> Result<()> {
        let doc = CanonicalDataset {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            param_arity: self.param_arity,
            timing_statistic: self.timing,
            devices: self.devices(),
            records: self
                .records
                .iter()
                .map(|r| CanonicalRecord {
                    device: r.env.device.name.clone(),
                    m: r.env.input.m,
                    n: r.env.input.n,
                    k: r.env.input.k,
                    params: r.config.clone(),
                    runtime_ms: r.runtime_ms,
                    compile_ms: r.compile_ms,
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&doc)?;
        out.write_all(text.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_canonical_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf)?;
        Ok(String::from_utf8(buf).expect("canonical json is utf-8"))
    }

    /// Reads a canonical JSON document back into a validated dataset.
    pub fn read_canonical(mut input: impl Read) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let doc: CanonicalDataset = serde_json::from_str(&text)?;
        let device_index: HashMap<&str, &DeviceId> = doc
            .devices
            .iter()
            .map(|d| (d.name.as_str(), d))
            .collect();
        let records = doc
            .records
            .into_iter()
            .map(|r| {
                let device = device_index
                    .get(r.device.as_str())
                    .map(|d| (*d).clone())
                    .unwrap_or_else(|| DeviceId::named(r.device.clone()));
                Ok(TuningRecord {
                    env: Environment {
                        device,
                        input: KernelInput::new(r.m, r.n, r.k)?,
                    },
                    config: r.params,
                    runtime_ms: r.runtime_ms,
                    compile_ms: r.compile_ms,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = PerformanceDataset::new(records, doc.timing_statistic)?;
        if ds.param_arity != doc.param_arity {
            return Err(Error::InconsistentArity {
                line: 0,
                expected: doc.param_arity,
                found: ds.param_arity,
            });
        }
        Ok(ds)
    }
}

const FORMAT_TAG: &str = "portune-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CanonicalDataset {
    format: String,
    version: u32,
    param_arity: usize,
    timing_statistic: TimingStatistic,
    devices: Vec<DeviceId>,
    records: Vec<CanonicalRecord>,
}

#[derive(Serialize, Deserialize)]
struct CanonicalRecord {
    device: String,
    m: u32,
    n: u32,
    k: u32,
    params: ParamConfig,
    runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compile_ms: Option<f64>,
}
