//! Synthetic benchmark datasets with a planted optimum.
//!
//! The generator plants `g` specialist variants, each the unique fastest
//! variant on one block of environments, with every other variant at least
//! `gap` times slower. The planted set is therefore the unique minimizer of
//! the library objective at a budget of `g` variants, which makes these
//! datasets exact test oracles for the selectors.

use std::collections::HashSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{
    DeviceId, Environment, KernelInput, ParamConfig, PerformanceDataset, TimingStatistic,
    TuningRecord,
};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub devices: usize,
    pub inputs: Vec<KernelInput>,
    pub variants: usize,
    /// Number of planted specialist variants (g).
    pub specialists: usize,
    /// Minimum slowdown of any non-specialist measurement (gamma > 1).
    pub gap: f64,
    /// Non-specialist slowdowns are uniform in [gap, gap * (1 + gap_spread)].
    pub gap_spread: f64,
    pub param_arity: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            devices: 2,
            inputs: SyntheticSpec::default_grid(),
            variants: 10,
            specialists: 2,
            gap: 2.0,
            gap_spread: 0.0,
            param_arity: 16,
        }
    }
}

impl SyntheticSpec {
    /// The standard evaluation grid: every M, N, K in {256, 512, 1024, 4096}.
    pub fn default_grid() -> Vec<KernelInput> {
        let dims = [256u32, 512, 1024, 4096];
        let mut grid = Vec::with_capacity(64);
        for &m in &dims {
            for &n in &dims {
                for &k in &dims {
                    grid.push(KernelInput { m, n, k });
                }
            }
        }
        grid
    }

    /// Generates the dataset together with the plant metadata.
    pub fn generate(&self, seed: u64) -> Result<PlantedDataset> {
        if !(self.gap.is_finite() && self.gap > 1.0) {
            return Err(Error::InvalidGenerator(format!(
                "gap must be > 1, got {}",
                self.gap
            )));
        }
        if self.gap_spread < 0.0 || !self.gap_spread.is_finite() {
            return Err(Error::InvalidGenerator("gap_spread must be >= 0".into()));
        }
        if self.specialists == 0 {
            return Err(Error::InvalidGenerator("need at least one specialist".into()));
        }
        if self.variants < self.specialists {
            return Err(Error::InvalidGenerator(format!(
                "variant count {} is below the specialist count {}",
                self.variants, self.specialists
            )));
        }
        if self.devices == 0 || self.inputs.is_empty() {
            return Err(Error::InvalidGenerator("empty environment space".into()));
        }
        if self.param_arity == 0 {
            return Err(Error::InvalidGenerator("param_arity must be >= 1".into()));
        }
        let n_envs = self.devices * self.inputs.len();
        if n_envs < self.specialists {
            return Err(Error::InvalidGenerator(format!(
                "{n_envs} environments cannot host {} specialist blocks",
                self.specialists
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut seen = HashSet::new();
        let mut configs = Vec::with_capacity(self.variants);
        while configs.len() < self.variants {
            let cfg = ParamConfig(
                (0..self.param_arity)
                    .map(|_| rng.random_range(0..=64u32))
                    .collect(),
            );
            if seen.insert(cfg.clone()) {
                configs.push(cfg);
            }
        }
        let specialists: Vec<ParamConfig> = configs[..self.specialists].to_vec();

        // Environments in canonical order, split into g contiguous blocks.
        let mut environments = Vec::with_capacity(n_envs);
        for d in 0..self.devices {
            let device = DeviceId::named(format!("dev{d:03}"));
            for input in &self.inputs {
                environments.push(Environment {
                    device: device.clone(),
                    input: *input,
                });
            }
        }
        environments.sort();
        let g = self.specialists;
        let base = n_envs / g;
        let extra = n_envs % g;
        let mut blocks: Vec<Vec<Environment>> = Vec::with_capacity(g);
        let mut cursor = 0;
        for b in 0..g {
            let len = base + usize::from(b < extra);
            blocks.push(environments[cursor..cursor + len].to_vec());
            cursor += len;
        }

        let mut records = Vec::with_capacity(n_envs * self.variants);
        for (b, block) in blocks.iter().enumerate() {
            for env in block {
                let oracle_ms = rng.random_range(0.5..20.0);
                for (v, cfg) in configs.iter().enumerate() {
                    let slowdown = if v == b {
                        1.0
                    } else if self.gap_spread == 0.0 {
                        self.gap
                    } else {
                        rng.random_range(self.gap..self.gap * (1.0 + self.gap_spread))
                    };
                    records.push(TuningRecord {
                        env: env.clone(),
                        config: cfg.clone(),
                        runtime_ms: oracle_ms * slowdown,
                        compile_ms: None,
                    });
                }
            }
        }

        let dataset = PerformanceDataset::new(records, TimingStatistic::Unspecified)?;
        Ok(PlantedDataset {
            dataset,
            specialists,
            blocks,
        })
    }
}

/// A generated dataset plus the ground truth planted into it.
#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub dataset: PerformanceDataset,
    /// The g specialist configurations, in block order.
    pub specialists: Vec<ParamConfig>,
    /// Environment blocks, in canonical environment order.
    pub blocks: Vec<Vec<Environment>>,
}

/// Generates just the dataset; deterministic for a fixed (spec, seed).
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<PerformanceDataset> {
    Ok(spec.generate(seed)?.dataset)
}
