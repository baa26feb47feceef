//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles here deliberately avoid the library's computation paths:
//! the geomean oracle uses a running product and an n-th root instead of
//! log-space sums, and the fleet oracle is an event-level simulation over
//! raw dataset records instead of the closed-form rate.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use portune::dataset::{
    build_slowdown_matrix, DeviceId, Environment, KernelInput, ParamConfig, PenaltyPolicy,
    PerformanceDataset, SlowdownMatrix, TimingStatistic, TuningRecord,
};

pub fn rec(device: &str, input: (u32, u32, u32), params: &[u32], runtime: f64) -> TuningRecord {
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

pub fn dataset(records: Vec<TuningRecord>) -> PerformanceDataset {
    PerformanceDataset::new(records, TimingStatistic::Unspecified).expect("valid records")
}

pub fn matrix(records: Vec<TuningRecord>) -> SlowdownMatrix {
    build_slowdown_matrix(&dataset(records), PenaltyPolicy::DatasetMax).expect("valid dataset")
}

/// The worked 3-environments x 4-variants instance with one missing cell.
///
/// Runtimes (variant columns sorted as [0] < [1] < [2] < [3]):
///
/// ```text
///            v0    v1    v2    v3      oracle
///   A        2.0   4.0   8.0   1.0     1.0
///   B        3.0   1.5   --    6.0     1.5
///   C        5.0  10.0   2.5   5.0     2.5
/// ```
///
/// Hand-computed slowdowns: A = (2, 4, 8, 1), B = (2, 1, penalty, 4),
/// C = (2, 4, 1, 2); the dataset-max penalty is 8 at cell (B, v2).
/// The best pair under the library objective is {v1, v3} with cost
/// (1 * 1 * 2)^(1/3) = 2^(1/3).
pub fn hand_records() -> Vec<TuningRecord> {
    vec![
        rec("A", (1, 1, 1), &[0], 2.0),
        rec("A", (1, 1, 1), &[1], 4.0),
        rec("A", (1, 1, 1), &[2], 8.0),
        rec("A", (1, 1, 1), &[3], 1.0),
        rec("B", (1, 1, 1), &[0], 3.0),
        rec("B", (1, 1, 1), &[1], 1.5),
        rec("B", (1, 1, 1), &[3], 6.0),
        rec("C", (1, 1, 1), &[0], 5.0),
        rec("C", (1, 1, 1), &[1], 10.0),
        rec("C", (1, 1, 1), &[2], 2.5),
        rec("C", (1, 1, 1), &[3], 5.0),
    ]
}

pub const HAND_SLOWDOWNS: [[f64; 4]; 3] = [
    [2.0, 4.0, 8.0, 1.0],
    [2.0, 1.0, 8.0, 4.0],
    [2.0, 4.0, 1.0, 2.0],
];
pub const HAND_PENALTY: f64 = 8.0;
pub const HAND_BEST_PAIR: [usize; 2] = [1, 3];

/// Random dataset with every environment measured at least once. Device
/// count, input count and variant count are honored exactly; each other
/// (environment, variant) cell is present with probability `1 - missing`.
pub fn random_dataset(
    seed: u64,
    n_devices: usize,
    n_inputs: usize,
    n_variants: usize,
    missing: f64,
) -> PerformanceDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [64u32, 128, 256, 512, 1024, 2048, 4096, 8192];
    let mut inputs = Vec::new();
    while inputs.len() < n_inputs {
        let input = KernelInput {
            m: dims[rng.random_range(0..dims.len())],
            n: dims[rng.random_range(0..dims.len())],
            k: dims[rng.random_range(0..dims.len())],
        };
        if !inputs.contains(&input) {
            inputs.push(input);
        }
    }
    let variants: Vec<ParamConfig> = (0..n_variants)
        .map(|i| {
            ParamConfig(vec![
                i as u32,
                rng.random_range(0..=64),
                rng.random_range(0..=64),
            ])
        })
        .collect();

    let mut records = Vec::new();
    for d in 0..n_devices {
        let device = format!("d{d:02}");
        for input in &inputs {
            let mut any = false;
            for (v, cfg) in variants.iter().enumerate() {
                let keep = v == 0 || rng.random::<f64>() >= missing;
                let runtime = 10f64.powf(rng.random_range(-1.0..2.0));
                if keep {
                    records.push(rec(
                        &device,
                        (input.m, input.n, input.k),
                        &cfg.0,
                        runtime,
                    ));
                    any = true;
                }
            }
            assert!(any);
        }
    }
    dataset(records)
}

/// Independent library-objective oracle: explicit per-environment minimum
/// and a product-based geometric mean.
pub fn brute_force_library_cost(sm: &SlowdownMatrix, chosen: &[usize], scope: &[usize]) -> f64 {
    let mut product = 1.0f64;
    for &e in scope {
        let mut best = f64::INFINITY;
        for &v in chosen {
            let x = sm.value(e, v);
            if x < best {
                best = x;
            }
        }
        product *= best;
    }
    product.powf(1.0 / scope.len() as f64)
}

/// Event-level fleet-rate oracle.
///
/// Every device instance executes tasks back to back; a task dispatches
/// each of the device's measured inputs `quantity(input)` times to the best
/// chosen variant (by raw dataset runtime, penalty slowdown x oracle when
/// unmeasured). Completions are replayed through an event loop up to the
/// horizon, the in-flight task counts fractionally, and the rate is
/// completed tasks divided by elapsed model time.
pub fn simulate_fleet_rate(
    ds: &PerformanceDataset,
    chosen: &[ParamConfig],
    device_instances: &BTreeMap<String, u32>,
    input_quantity: &BTreeMap<KernelInput, f64>,
    penalty_slowdown: f64,
) -> f64 {
    let mut task_time: BTreeMap<String, f64> = BTreeMap::new();
    for env in ds.environments() {
        let mut best: Option<f64> = None;
        for cfg in chosen {
            let measured = ds
                .records()
                .iter()
                .find(|r| r.env == env && r.config == *cfg)
                .map(|r| r.runtime_ms);
            if let Some(t) = measured {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
        let oracle = ds.oracle(&env).expect("measured environment").0;
        let runtime = best.unwrap_or(penalty_slowdown * oracle);
        let q = input_quantity[&env.input];
        *task_time.entry(env.device.name.clone()).or_insert(0.0) += runtime * q;
    }

    struct Instance {
        task_time: f64,
        next_done: f64,
    }
    let mut instances: Vec<Instance> = Vec::new();
    for (device, tau) in &task_time {
        for _ in 0..device_instances[device] {
            instances.push(Instance {
                task_time: *tau,
                next_done: *tau,
            });
        }
    }
    let horizon = 10.0
        * task_time
            .values()
            .fold(0.0f64, |acc, t| acc.max(*t));

    let mut completed = 0.0f64;
    loop {
        let next = instances
            .iter_mut()
            .filter(|i| i.next_done <= horizon)
            .min_by(|a, b| a.next_done.total_cmp(&b.next_done));
        match next {
            Some(instance) => {
                completed += 1.0;
                instance.next_done += instance.task_time;
            }
            None => break,
        }
    }
    for i in &instances {
        let started = i.next_done - i.task_time;
        completed += (horizon - started) / i.task_time;
    }
    completed / horizon
}
