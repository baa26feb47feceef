//! Environments-by-variants slowdown matrix.
//!
//! Cell (e, v) holds runtime(e, v) / oracle(e), the slowdown over oracle of
//! variant v on environment e. Cells without a measurement are invalid and
//! carry a penalty slowdown so that objectives stay finite on sparse data.
//!
//! Row reads are counted, which lets holdout experiments assert that
//! selection never touched evaluation-device rows.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::{Environment, KernelInput, ParamConfig, PerformanceDataset};

/// How unmeasured (environment, variant) cells are penalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyPolicy {
    /// Penalty is the largest valid slowdown anywhere in the dataset.
    DatasetMax,
    /// A fixed slowdown value (must be >= 1.0).
    Explicit(f64),
}

pub struct SlowdownMatrix {
    environments: Vec<Environment>,
    variants: Vec<ParamConfig>,
    /// Row-major |environments| x |variants| slowdowns.
    values: Vec<f64>,
    valid: Vec<bool>,
    penalty: f64,
    /// Oracle (best) runtime in milliseconds per environment row.
    oracle_ms: Vec<f64>,
    env_pos: HashMap<Environment, usize>,
    row_reads: Vec<AtomicU64>,
}

impl std::fmt::Debug for SlowdownMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlowdownMatrix")
            .field("environments", &self.environments.len())
            .field("variants", &self.variants.len())
            .field("penalty", &self.penalty)
            .finish()
    }
}

impl Clone for SlowdownMatrix {
    fn clone(&self) -> Self {
        SlowdownMatrix {
            environments: self.environments.clone(),
            variants: self.variants.clone(),
            values: self.values.clone(),
            valid: self.valid.clone(),
            penalty: self.penalty,
            oracle_ms: self.oracle_ms.clone(),
            env_pos: self.env_pos.clone(),
            row_reads: (0..self.environments.len())
                .map(|_| AtomicU64::new(0))
                .collect(),
        }
    }
}

/// Builds the slowdown matrix over the union of all variants in `ds`.
pub fn build_slowdown_matrix(
    ds: &PerformanceDataset,
    policy: PenaltyPolicy,
) -> Result<SlowdownMatrix> {
    let environments = ds.environments();
    let variants = ds.variants();
    let n_envs = environments.len();
    let n_vars = variants.len();

    let env_pos: HashMap<Environment, usize> = environments
        .iter()
        .enumerate()
        .map(|(i, e)| (e.clone(), i))
        .collect();
    let var_pos: HashMap<&ParamConfig, usize> = variants
        .iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();

    let mut values = vec![f64::NAN; n_envs * n_vars];
    let mut valid = vec![false; n_envs * n_vars];
    let mut max_valid: f64 = 1.0;
    let mut oracle_ms = vec![0.0; n_envs];
    for (env, row) in environments.iter().zip(oracle_ms.iter_mut()) {
        *row = ds.oracle(env).expect("every environment has records").0;
    }

    for r in ds.records() {
        let e = env_pos[&r.env];
        let v = var_pos[&r.config];
        let slowdown = r.runtime_ms / oracle_ms[e];
        let cell = e * n_vars + v;
        values[cell] = slowdown;
        valid[cell] = true;
        if slowdown > max_valid {
            max_valid = slowdown;
        }
    }

    let penalty = match policy {
        PenaltyPolicy::DatasetMax => max_valid,
        PenaltyPolicy::Explicit(p) => {
            if !(p.is_finite() && p >= 1.0) {
                return Err(Error::InvalidJob(format!(
                    "explicit penalty must be a finite slowdown >= 1.0, got {p}"
                )));
            }
            p
        }
    };
    for (cell, ok) in valid.iter().enumerate() {
        if !ok {
            values[cell] = penalty;
        }
    }

    Ok(SlowdownMatrix {
        row_reads: (0..n_envs).map(|_| AtomicU64::new(0)).collect(),
        environments,
        variants,
        values,
        valid,
        penalty,
        oracle_ms,
        env_pos,
    })
}

impl SlowdownMatrix {
    pub fn n_environments(&self) -> usize {
        self.environments.len()
    }

    pub fn n_variants(&self) -> usize {
        self.variants.len()
    }

    pub fn environments(&self) -> &[Environment] {
        &self.environments
    }

    pub fn variants(&self) -> &[ParamConfig] {
        &self.variants
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    #[inline]
    fn touch(&self, row: usize) {
        self.row_reads[row].fetch_add(1, Ordering::Relaxed);
    }

    /// Slowdown row for environment `row`. Invalid cells hold the penalty.
    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        self.touch(row);
        let w = self.variants.len();
        &self.values[row * w..(row + 1) * w]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.touch(row);
        self.values[row * self.variants.len() + col]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.touch(row);
        self.valid[row * self.variants.len() + col]
    }

    /// Oracle runtime backing the given row.
    pub fn oracle_ms(&self, row: usize) -> f64 {
        self.touch(row);
        self.oracle_ms[row]
    }

    pub fn env_index(&self, env: &Environment) -> Option<usize> {
        self.env_pos.get(env).copied()
    }

    pub fn valid_cells(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// All row indices in canonical order.
    pub fn scope_all(&self) -> Vec<usize> {
        (0..self.environments.len()).collect()
    }

    pub fn scope_where(&self, pred: impl Fn(&Environment) -> bool) -> Vec<usize> {
        self.environments
            .iter()
            .enumerate()
            .filter(|(_, e)| pred(e))
            .map(|(i, _)| i)
            .collect()
    }

    /// Device / input allowlist filter; `None` means no restriction.
    pub fn scope_filter(
        &self,
        devices: Option<&std::collections::BTreeSet<String>>,
        inputs: Option<&std::collections::BTreeSet<KernelInput>>,
    ) -> Vec<usize> {
        self.scope_where(|e| {
            devices.map_or(true, |d| d.contains(&e.device.name))
                && inputs.map_or(true, |i| i.contains(&e.input))
        })
    }

    /// Variant columns with at least one valid measurement in `scope`.
    pub fn variants_with_valid_in(&self, scope: &[usize]) -> Vec<usize> {
        let w = self.variants.len();
        (0..w)
            .filter(|&v| scope.iter().any(|&e| {
                self.touch(e);
                self.valid[e * w + v]
            }))
            .collect()
    }

    /// Number of `row()`/`value()` reads of this row since the last reset.
    pub fn row_reads(&self, row: usize) -> u64 {
        self.row_reads[row].load(Ordering::Relaxed)
    }

    pub fn reset_access_counts(&self) {
        for c in &self.row_reads {
            c.store(0, Ordering::Relaxed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{DeviceId, TimingStatistic, TuningRecord};
    use super::*;

    fn rec(device: &str, input: (u32, u32, u32), params: &[u32], runtime: f64) -> TuningRecord {
        TuningRecord {
            env: Environment {
                device: DeviceId::named(device),
                input: KernelInput {
                    m: input.0,
                    n: input.1,
                    k: input.2,
                },
            },
            config: ParamConfig(params.to_vec()),
            runtime_ms: runtime,
            compile_ms: None,
        }
    }

    #[test]
    fn single_environment_row() {
        let ds = PerformanceDataset::new(
            vec![rec("A", (1, 1, 1), &[0], 2.0), rec("A", (1, 1, 1), &[1], 4.0)],
            TimingStatistic::Unspecified,
        )
        .unwrap();
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        assert_eq!(sm.row(0), &[1.0, 2.0]);
        assert!(sm.is_valid(0, 0) && sm.is_valid(0, 1));
    }

    #[test]
    fn slowdown_matches_published_sample() {
        // The 2.030 ms Vega measurement is 1.24x its environment oracle.
        let oracle_runtime = 2.030 / 1.24;
        let ds = PerformanceDataset::new(
            vec![
                rec("Vega", (512, 1024, 256), &[0, 1, 32], 2.030),
                rec("Vega", (512, 1024, 256), &[9, 9, 9], oracle_runtime),
            ],
            TimingStatistic::SampleMean,
        )
        .unwrap();
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        let v = sm
            .variants()
            .iter()
            .position(|c| c.0 == vec![0, 1, 32])
            .unwrap();
        assert!((sm.value(0, v) - 1.24).abs() < 1e-12);
    }

    #[test]
    fn missing_cells_take_dataset_max_penalty() {
        let ds = PerformanceDataset::new(
            vec![
                rec("A", (1, 1, 1), &[0], 1.0),
                rec("A", (1, 1, 1), &[1], 5.0),
                rec("B", (1, 1, 1), &[0], 2.0),
            ],
            TimingStatistic::Unspecified,
        )
        .unwrap();
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        let b = sm
            .env_index(&Environment {
                device: DeviceId::named("B"),
                input: KernelInput { m: 1, n: 1, k: 1 },
            })
            .unwrap();
        assert!(!sm.is_valid(b, 1));
        assert_eq!(sm.value(b, 1), 5.0);
        assert_eq!(sm.penalty(), 5.0);
    }

    #[test]
    fn explicit_penalty_below_one_is_rejected() {
        let ds = PerformanceDataset::new(
            vec![rec("A", (1, 1, 1), &[0], 1.0)],
            TimingStatistic::Unspecified,
        )
        .unwrap();
        assert!(build_slowdown_matrix(&ds, PenaltyPolicy::Explicit(0.5)).is_err());
    }

    #[test]
    fn row_reads_are_counted_and_resettable() {
        let ds = PerformanceDataset::new(
            vec![rec("A", (1, 1, 1), &[0], 2.0), rec("B", (1, 1, 1), &[0], 3.0)],
            TimingStatistic::Unspecified,
        )
        .unwrap();
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        sm.row(0);
        sm.value(0, 0);
        assert_eq!(sm.row_reads(0), 2);
        assert_eq!(sm.row_reads(1), 0);
        sm.reset_access_counts();
        assert_eq!(sm.row_reads(0), 0);
    }
}
