//! CSV ingestion.
//!
//! Expected layout (header required), one timed execution per row:
//!
//! ```text
//! device,m,n,k,params,runtime_ms,compile_ms
//! Vega,512,1024,256,0;1;32;2;8;16;128;16;8;64;0;0;1;0;8;1,2.030,
//! ```
//!
//! The params field is delimiter-separated inside a single CSV column so the
//! file stays CSV-safe; column names and the intra-field delimiter are
//! remappable through [`CsvSchema`].

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{
    DeviceId, Environment, KernelInput, ParamConfig, PerformanceDataset, TimingStatistic,
    TuningRecord,
};

/// Maps CSV columns to record fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub device: String,
    pub m: String,
    pub n: String,
    pub k: String,
    pub params: String,
    pub runtime_ms: String,
    /// Optional column; ignored when the header lacks it.
    pub compile_ms: Option<String>,
    /// Delimiter between parameter values inside the params column.
    pub param_delimiter: char,
    /// Statistic label attached to the resulting dataset.
    pub timing: TimingStatistic,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            device: "device".into(),
            m: "m".into(),
            n: "n".into(),
            k: "k".into(),
            params: "params".into(),
            runtime_ms: "runtime_ms".into(),
            compile_ms: Some("compile_ms".into()),
            param_delimiter: ';',
            timing: TimingStatistic::SampleMean,
        }
    }
}

/// Reads a CSV byte stream into a validated dataset.
pub fn ingest_csv(source: impl Read, schema: &CsvSchema) -> Result<PerformanceDataset> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);
    let col = |name: &str| {
        index_of(name).ok_or_else(|| Error::MalformedRow {
            line: 1,
            msg: format!("missing column {name:?} in header"),
        })
    };

    let device_col = col(&schema.device)?;
    let m_col = col(&schema.m)?;
    let n_col = col(&schema.n)?;
    let k_col = col(&schema.k)?;
    let params_col = col(&schema.params)?;
    let runtime_col = col(&schema.runtime_ms)?;
    let compile_col = schema.compile_ms.as_deref().and_then(index_of);

    let mut records = Vec::new();
    let mut arity: Option<usize> = None;
    let mut devices: HashMap<String, DeviceId> = HashMap::new();

    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e
                .position()
                .map(|p| p.line())
                .unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize| {
            row.get(idx).ok_or_else(|| Error::MalformedRow {
                line,
                msg: format!("missing field at column {idx}"),
            })
        };
        let parse_u32 = |idx: usize, what: &str| -> Result<u32> {
            field(idx)?.parse().map_err(|_| Error::MalformedRow {
                line,
                msg: format!("{what} is not a positive integer: {:?}", row.get(idx)),
            })
        };

        let device_name = field(device_col)?;
        if device_name.is_empty() {
            return Err(Error::MalformedRow {
                line,
                msg: "empty device name".into(),
            });
        }
        let m = parse_u32(m_col, "m")?;
        let n = parse_u32(n_col, "n")?;
        let k = parse_u32(k_col, "k")?;
        let input = KernelInput::new(m, n, k).map_err(|_| Error::MalformedRow {
            line,
            msg: format!("kernel input dimensions must be >= 1, got {m}x{n}x{k}"),
        })?;

        let params_field = field(params_col)?;
        let values: Vec<u32> = params_field
            .split(schema.param_delimiter)
            .map(|p| {
                p.trim().parse().map_err(|_| Error::MalformedRow {
                    line,
                    msg: format!("bad parameter value {p:?}"),
                })
            })
            .collect::<Result<_>>()?;
        match arity {
            None => arity = Some(values.len()),
            Some(expected) if expected != values.len() => {
                return Err(Error::InconsistentArity {
                    line,
                    expected,
                    found: values.len(),
                })
            }
            Some(_) => {}
        }

        let runtime_ms: f64 = field(runtime_col)?.parse().map_err(|_| Error::MalformedRow {
            line,
            msg: format!("bad runtime {:?}", row.get(runtime_col)),
        })?;
        if !(runtime_ms.is_finite() && runtime_ms > 0.0) {
            return Err(Error::BadRuntime {
                line,
                value: runtime_ms,
            });
        }

        let compile_ms = match compile_col {
            Some(idx) => {
                let raw = row.get(idx).unwrap_or("");
                if raw.is_empty() {
                    None
                } else {
                    let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                        line,
                        msg: format!("bad compile time {raw:?}"),
                    })?;
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::BadRuntime { line, value: v });
                    }
                    Some(v)
                }
            }
            None => None,
        };

        let device = devices
            .entry(device_name.to_string())
            .or_insert_with(|| DeviceId::named(device_name))
            .clone();
        records.push(TuningRecord {
            env: Environment { device, input },
            config: ParamConfig(values),
            runtime_ms,
            compile_ms,
        });
    }

    PerformanceDataset::new(records, schema.timing)
}
