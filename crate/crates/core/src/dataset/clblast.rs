//! Adapter for the CLBlast crowdsourced tuning database.
//!
//! The database is a JSON document with a top-level `sections` array; each
//! section describes one (device, kernel, precision) combination executed
//! for a single input matrix and lists `results` of
//! `{"time": ms, "parameters": "NAME=value NAME=value ..."}` entries.
//!
//! Sections that carry no device-driver information come from old library
//! versions and are pruned. Each device contributes exactly one input
//! environment; if filtered sections disagree on the input, the smallest
//! (m, n, k) is kept and the rest are dropped with a warning count.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde_json::Value;

use crate::error::{Error, Result};

use super::{
    DeviceId, Environment, KernelInput, ParamConfig, PerformanceDataset, TimingStatistic,
    TuningRecord,
};

/// Section filters. A section passes a filter when the field is absent or
/// matches case-insensitively.
#[derive(Debug, Clone)]
pub struct ClblastOptions {
    pub kernel_family: Option<String>,
    pub precision: Option<String>,
}

impl Default for ClblastOptions {
    fn default() -> Self {
        ClblastOptions {
            kernel_family: Some("xgemm".into()),
            precision: Some("32".into()),
        }
    }
}

/// Counters for entries dropped during ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClblastStats {
    pub sections_total: usize,
    pub sections_kept: usize,
    pub pruned_missing_driver: usize,
    pub pruned_filtered: usize,
    pub dropped_results: usize,
    pub dropped_extra_inputs: usize,
}

impl ClblastStats {
    pub fn warnings(&self) -> usize {
        self.pruned_missing_driver + self.dropped_results + self.dropped_extra_inputs
    }
}

/// Ingests with the default Xgemm single-precision filters.
pub fn ingest_clblast_db(source: impl Read) -> Result<(PerformanceDataset, ClblastStats)> {
    ingest_clblast_db_with(source, &ClblastOptions::default())
}

const DRIVER_KEYS: &[&str] = &[
    "device_driver",
    "clblast_device_driver",
    "driver_version",
    "device_driver_version",
];

pub fn ingest_clblast_db_with(
    mut source: impl Read,
    options: &ClblastOptions,
) -> Result<(PerformanceDataset, ClblastStats)> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let doc: Value = serde_json::from_str(&text)?;
    let sections = doc
        .get("sections")
        .and_then(Value::as_array)
        .ok_or(Error::NoDevices)?;

    let mut stats = ClblastStats {
        sections_total: sections.len(),
        ..Default::default()
    };

    struct Kept {
        device: DeviceId,
        input: KernelInput,
        // One (name -> value) map per timed result.
        results: Vec<(BTreeMap<String, u32>, f64)>,
    }

    let mut kept: Vec<Kept> = Vec::new();
    for section in sections {
        if !passes(section, "kernel_family", options.kernel_family.as_deref())
            || !passes(section, "precision", options.precision.as_deref())
        {
            stats.pruned_filtered += 1;
            continue;
        }
        if !DRIVER_KEYS.iter().any(|k| section.get(*k).is_some()) {
            stats.pruned_missing_driver += 1;
            continue;
        }
        let name = string_field(section, &["clblast_device_name", "device"]);
        let Some(name) = name else {
            stats.dropped_results += 1;
            continue;
        };
        let (Some(m), Some(n), Some(k)) = (
            uint_field(section, "arg_m"),
            uint_field(section, "arg_n"),
            uint_field(section, "arg_k"),
        ) else {
            stats.dropped_results += 1;
            continue;
        };
        let Ok(input) = KernelInput::new(m, n, k) else {
            stats.dropped_results += 1;
            continue;
        };
        let device = DeviceId {
            name,
            vendor: string_field(section, &["clblast_device_vendor", "device_vendor"]),
            compute_units: section
                .get("clblast_device_compute_units")
                .or_else(|| section.get("device_compute_units"))
                .and_then(coerce_u32),
        };

        let mut results = Vec::new();
        for entry in section
            .get("results")
            .and_then(Value::as_array)
            .map(|a| a.as_slice())
            .unwrap_or(&[])
        {
            let time = entry.get("time").and_then(Value::as_f64);
            let params = entry
                .get("parameters")
                .and_then(Value::as_str)
                .map(parse_parameter_string);
            match (time, params) {
                (Some(t), Some(Some(p))) if t.is_finite() && t > 0.0 => results.push((p, t)),
                _ => stats.dropped_results += 1,
            }
        }
        if results.is_empty() {
            stats.dropped_results += 1;
            continue;
        }
        kept.push(Kept {
            device,
            input,
            results,
        });
    }

    // One input per device: keep the smallest (m, n, k) seen for it.
    let mut input_of: BTreeMap<String, KernelInput> = BTreeMap::new();
    for s in &kept {
        let e = input_of
            .entry(s.device.name.clone())
            .or_insert(s.input);
        if s.input < *e {
            *e = s.input;
        }
    }
    kept.retain(|s| {
        let keep = input_of[&s.device.name] == s.input;
        if !keep {
            stats.dropped_extra_inputs += 1;
        }
        keep
    });
    stats.sections_kept = kept.len();
    if kept.is_empty() {
        return Err(Error::NoDevices);
    }

    // Fixed arity across devices: the sorted union of parameter names.
    // Entries predating a parameter's introduction default it to zero.
    let names: BTreeSet<String> = kept
        .iter()
        .flat_map(|s| s.results.iter())
        .flat_map(|(p, _)| p.keys().cloned())
        .collect();
    let names: Vec<String> = names.into_iter().collect();

    let mut records = Vec::new();
    for s in &kept {
        for (params, time) in &s.results {
            let values: Vec<u32> = names
                .iter()
                .map(|n| params.get(n).copied().unwrap_or(0))
                .collect();
            records.push(TuningRecord {
                env: Environment {
                    device: s.device.clone(),
                    input: s.input,
                },
                config: ParamConfig(values),
                runtime_ms: *time,
                compile_ms: None,
            });
        }
    }

    let ds = PerformanceDataset::new(records, TimingStatistic::SampleMinimum)?;
    Ok((ds, stats))
}

fn passes(section: &Value, key: &str, want: Option<&str>) -> bool {
    match (want, section.get(key).and_then(Value::as_str)) {
        (None, _) | (_, None) => true,
        (Some(w), Some(have)) => have.eq_ignore_ascii_case(w),
    }
}

fn string_field(section: &Value, keys: &[&str]) -> Option<String> {
    keys.iter()
        .find_map(|k| section.get(*k).and_then(Value::as_str))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

fn uint_field(section: &Value, key: &str) -> Option<u32> {
    section.get(key).and_then(coerce_u32)
}

/// The database stores some numbers as strings.
fn coerce_u32(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|x| u32::try_from(x).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn parse_parameter_string(s: &str) -> Option<BTreeMap<String, u32>> {
    let mut out = BTreeMap::new();
    for pair in s.split_whitespace() {
        let (name, value) = pair.split_once('=')?;
        out.insert(name.to_string(), value.parse().ok()?);
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}
