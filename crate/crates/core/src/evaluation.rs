//! Figures of merit and experiment protocols: per-environment slowdown
//! reports with CDFs, divergence sweeps over the variant budget, fleet-rate
//! comparisons and held-out-device generalization.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_slowdown_matrix, Environment, PenaltyPolicy, PerformanceDataset, SlowdownMatrix,
};
use crate::error::{Error, Result};
use crate::objectives::{fleet_rate, library_cost, CandidateSet, FleetSpec, Objective};
use crate::selectors::{
    run_selection, Method, SelectionJob, SelectionResult, DEFAULT_BUDGET_MS, DEFAULT_ENUM_CAP,
};

/// Reusable job settings; the scope is supplied per experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobTemplate {
    pub method: Method,
    pub objective: Objective,
    pub kappa: usize,
    pub budget_ms: u64,
    pub seed: u64,
    pub enum_cap: u64,
}

impl JobTemplate {
    pub fn new(method: Method, kappa: usize, seed: u64) -> Self {
        JobTemplate {
            method,
            objective: Objective::LibraryGeomean,
            kappa,
            budget_ms: DEFAULT_BUDGET_MS,
            seed,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }

    pub fn to_job(&self, scope: Vec<usize>) -> SelectionJob {
        SelectionJob {
            scope,
            objective: self.objective.clone(),
            kappa: self.kappa,
            budget_ms: self.budget_ms,
            seed: self.seed,
            method: self.method,
            enum_cap: self.enum_cap,
        }
    }
}

/// Achieved slowdown of one environment under a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSlowdown {
    pub device: String,
    pub m: u32,
    pub n: u32,
    pub k: u32,
    pub slowdown: f64,
}

/// One point of the slowdown CDF: the fraction of environments at or below
/// the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub kappa: usize,
    pub method: Method,
    /// Repetitions aggregated into this report.
    pub runs: usize,
    pub per_env: Vec<EnvSlowdown>,
    /// Geometric mean of `per_env` slowdowns (the library objective,
    /// recomputed, never cached).
    pub geomean: f64,
    pub median: f64,
    pub cdf: Vec<CdfPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleet_rate: Option<f64>,
    /// Mean of per-run geomeans, when aggregating several runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geomean_mean_of_runs: Option<f64>,
    /// 95% confidence interval (normal approximation) for the run geomeans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci95: Option<(f64, f64)>,
}

impl EvaluationReport {
    pub fn slowdown_for(&self, env: &Environment) -> Option<f64> {
        self.per_env
            .iter()
            .find(|e| {
                e.device == env.device.name
                    && e.m == env.input.m
                    && e.n == env.input.n
                    && e.k == env.input.k
            })
            .map(|e| e.slowdown)
    }
}

/// Evaluates an existing selection over `scope`, which may differ from the
/// scope it was selected on.
pub fn evaluate(
    result: &SelectionResult,
    sm: &SlowdownMatrix,
    scope: &[usize],
    fleet: Option<&FleetSpec>,
) -> Result<EvaluationReport> {
    if scope.is_empty() {
        return Err(Error::EmptyScope);
    }
    let geomean = library_cost(sm, &result.chosen, scope)?;

    let mut per_env = Vec::with_capacity(scope.len());
    let mut achieved = Vec::with_capacity(scope.len());
    for &e in scope {
        let row = sm.row(e);
        let best = result
            .chosen
            .indices()
            .iter()
            .map(|&v| row[v])
            .fold(f64::INFINITY, f64::min);
        achieved.push(best);
        let env = &sm.environments()[e];
        per_env.push(EnvSlowdown {
            device: env.device.name.clone(),
            m: env.input.m,
            n: env.input.n,
            k: env.input.k,
            slowdown: best,
        });
    }
    per_env.sort_by(|a, b| (&a.device, a.m, a.n, a.k).cmp(&(&b.device, b.m, b.n, b.k)));

    let rate = match fleet {
        Some(f) => Some(fleet_rate(sm, scope, &result.chosen, f)?),
        None => None,
    };

    achieved.sort_by(|a, b| a.partial_cmp(b).expect("finite slowdowns"));
    Ok(EvaluationReport {
        kappa: result.kappa,
        method: result.method,
        runs: 1,
        geomean,
        median: median_sorted(&achieved),
        cdf: cdf_of_sorted(&achieved),
        per_env,
        fleet_rate: rate,
        geomean_mean_of_runs: None,
        ci95: None,
    })
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn cdf_of_sorted(sorted: &[f64]) -> Vec<CdfPoint> {
    let n = sorted.len() as f64;
    let mut cdf: Vec<CdfPoint> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match cdf.last_mut() {
            Some(last) if last.threshold == x => last.fraction = fraction,
            _ => cdf.push(CdfPoint {
                threshold: x,
                fraction,
            }),
        }
    }
    cdf
}

/// Mean and normal-approximation 95% interval over run statistics.
fn normal_ci95(values: &[f64]) -> (f64, Option<(f64, f64)>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * (var / n).sqrt();
    (mean, Some((mean - half, mean + half)))
}

/// Index of the median-performing run by geomean (ties to the earlier run).
fn median_run(geomeans: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..geomeans.len()).collect();
    order.sort_by(|&a, &b| {
        geomeans[a]
            .partial_cmp(&geomeans[b])
            .expect("finite geomeans")
            .then(a.cmp(&b))
    });
    order[(order.len() - 1) / 2]
}

/// Maps `0..count` through `f`, fanning out over up to `workers` threads.
/// Results land in index order, so the output is independent of the worker
/// count; with one worker everything runs in call order on this thread.
fn map_indexed_parallel<T: Send>(
    count: usize,
    workers: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let workers = workers.max(1).min(count.max(1));
    if workers <= 1 {
        return (0..count).map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(workers);
    std::thread::scope(|scope| {
        let mut pending = slots.chunks_mut(chunk);
        let mut handles = Vec::new();
        for w in 0..workers {
            let Some(slice) = pending.next() else { break };
            let start = w * chunk;
            let f = &f;
            handles.push(scope.spawn(move || {
                for (offset, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f(start + offset));
                }
            }));
        }
        for h in handles {
            h.join().expect("worker panicked");
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every index computed"))
        .collect()
}

/// Runs the template once per seed for each kappa and aggregates: the
/// reported per-environment map is the median run's, the run geomeans feed
/// the mean-of-runs and its confidence interval. Runs are independent and
/// fan out over `workers` threads; the aggregate is worker-count invariant.
pub fn divergence_sweep_seeded(
    sm: &SlowdownMatrix,
    template: &JobTemplate,
    scope: &[usize],
    kappas: &[usize],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<EvaluationReport>> {
    if kappas.is_empty() {
        return Err(Error::InvalidJob("kappa list is empty".into()));
    }
    if kappas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidJob("kappa list must be ascending".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidJob("need at least one run".into()));
    }

    let mut out = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let mut reports = map_indexed_parallel(seeds.len(), workers, |run| {
            let mut t = template.clone();
            t.kappa = kappa;
            t.seed = seeds[run];
            let outcome = run_selection(&t.to_job(scope.to_vec()), sm)?;
            evaluate(&outcome.result, sm, scope, None)
        })?;
        let geomeans: Vec<f64> = reports.iter().map(|r| r.geomean).collect();
        let (mean, ci95) = normal_ci95(&geomeans);
        let mut report = reports.swap_remove(median_run(&geomeans));
        report.runs = seeds.len();
        report.geomean_mean_of_runs = Some(mean);
        report.ci95 = ci95;
        out.push(report);
    }
    Ok(out)
}

/// As [`divergence_sweep_seeded`] with run seeds derived from the template
/// seed (seed, seed + 1, ...).
pub fn divergence_sweep(
    sm: &SlowdownMatrix,
    template: &JobTemplate,
    scope: &[usize],
    kappas: &[usize],
    runs: usize,
    workers: usize,
) -> Result<Vec<EvaluationReport>> {
    let seeds: Vec<u64> = (0..runs as u64).map(|r| template.seed.wrapping_add(r)).collect();
    divergence_sweep_seeded(sm, template, scope, kappas, &seeds, workers)
}

/// Held-out-device protocol description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoldoutPlan {
    pub train_devices: BTreeSet<String>,
    pub eval_environments: Vec<Environment>,
    pub repetitions: usize,
    /// When set, the train and eval device sets must be disjoint.
    pub unseen: bool,
}

impl HoldoutPlan {
    pub fn unseen_devices(
        train_devices: BTreeSet<String>,
        eval_environments: Vec<Environment>,
    ) -> Self {
        HoldoutPlan {
            train_devices,
            eval_environments,
            repetitions: 30,
            unseen: true,
        }
    }
}

/// Per-environment confidence interval across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvCi {
    pub device: String,
    pub m: u32,
    pub n: u32,
    pub k: u32,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoldoutOutcome {
    /// Selection on train devices, evaluated on the eval environments
    /// (their own oracles).
    pub unseen: EvaluationReport,
    /// Selection directly on the eval environments, same seeds.
    pub baseline: EvaluationReport,
    /// Per-environment 95% interval of the unseen-selection slowdowns.
    pub unseen_per_env_ci: Vec<EnvCi>,
    /// Reads of eval-environment matrix rows recorded while selecting on
    /// train scope; scoping hygiene requires this to be zero.
    pub eval_row_reads_during_selection: u64,
}

/// Selects on train-device environments only and measures generalization on
/// the (disjoint, for unseen plans) eval environments.
///
/// Repetitions run serially: the access-counting hygiene check resets and
/// snapshots the matrix row counters around each selection, which requires
/// exclusive stepping.
pub fn holdout_generalization(
    full: &PerformanceDataset,
    plan: &HoldoutPlan,
    template: &JobTemplate,
) -> Result<HoldoutOutcome> {
    if plan.repetitions == 0 {
        return Err(Error::InvalidPlan("repetitions must be >= 1".into()));
    }
    if plan.train_devices.is_empty() || plan.eval_environments.is_empty() {
        return Err(Error::InvalidPlan(
            "train devices and eval environments must be non-empty".into(),
        ));
    }
    let eval_devices: BTreeSet<&str> = plan
        .eval_environments
        .iter()
        .map(|e| e.device.name.as_str())
        .collect();
    if plan.unseen {
        if let Some(shared) = eval_devices
            .iter()
            .find(|d| plan.train_devices.contains(**d))
        {
            return Err(Error::InvalidPlan(format!(
                "unseen plan but device {shared:?} is in both the train and eval sets"
            )));
        }
    }

    let sm = build_slowdown_matrix(full, PenaltyPolicy::DatasetMax)?;
    let train_scope = sm.scope_where(|e| plan.train_devices.contains(&e.device.name));
    if train_scope.is_empty() {
        return Err(Error::InvalidPlan(
            "no train-device environments in the dataset".into(),
        ));
    }
    let eval_scope: Vec<usize> = plan
        .eval_environments
        .iter()
        .map(|e| {
            sm.env_index(e).ok_or_else(|| Error::UnmeasuredEnvironment {
                env: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let mut eval_reads = 0u64;
    let mut unseen_reports = Vec::with_capacity(plan.repetitions);
    let mut baseline_reports = Vec::with_capacity(plan.repetitions);
    for rep in 0..plan.repetitions {
        let mut t = template.clone();
        t.seed = template.seed.wrapping_add(rep as u64);

        sm.reset_access_counts();
        let unseen_outcome = run_selection(&t.to_job(train_scope.clone()), &sm)?;
        eval_reads += eval_scope.iter().map(|&e| sm.row_reads(e)).sum::<u64>();
        unseen_reports.push(evaluate(&unseen_outcome.result, &sm, &eval_scope, None)?);

        let baseline_outcome = run_selection(&t.to_job(eval_scope.clone()), &sm)?;
        baseline_reports.push(evaluate(&baseline_outcome.result, &sm, &eval_scope, None)?);
    }

    let unseen_per_env_ci = per_env_ci(&unseen_reports);
    Ok(HoldoutOutcome {
        unseen: aggregate_runs(unseen_reports),
        baseline: aggregate_runs(baseline_reports),
        unseen_per_env_ci,
        eval_row_reads_during_selection: eval_reads,
    })
}

fn aggregate_runs(mut reports: Vec<EvaluationReport>) -> EvaluationReport {
    let geomeans: Vec<f64> = reports.iter().map(|r| r.geomean).collect();
    let (mean, ci95) = normal_ci95(&geomeans);
    let runs = reports.len();
    let mut report = reports.swap_remove(median_run(&geomeans));
    report.runs = runs;
    report.geomean_mean_of_runs = Some(mean);
    report.ci95 = ci95;
    report
}

fn per_env_ci(reports: &[EvaluationReport]) -> Vec<EnvCi> {
    let first = &reports[0];
    first
        .per_env
        .iter()
        .enumerate()
        .map(|(i, env)| {
            let values: Vec<f64> = reports.iter().map(|r| r.per_env[i].slowdown).collect();
            let (mean, ci) = normal_ci95(&values);
            let (low, high) = ci.unwrap_or((mean, mean));
            EnvCi {
                device: env.device.clone(),
                m: env.m,
                n: env.n,
                k: env.k,
                low,
                high,
            }
        })
        .collect()
}

/// One labelled row of a fleet experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetEntry {
    pub label: String,
    pub median_rate: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetExperimentReport {
    pub kappa: usize,
    pub runs: usize,
    pub entries: Vec<FleetEntry>,
}

impl FleetExperimentReport {
    pub fn entry(&self, label: &str) -> Option<&FleetEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

/// Label of the pooled per-device-tuned baseline row.
pub const PER_DEVICE_POOLED: &str = "per-device-pooled";

/// Median-of-runs fleet rate per method, plus a baseline that pools each
/// device's best single variant and shares the pool across the fleet.
/// Repetitions fan out over `workers` threads.
pub fn fleet_experiment(
    sm: &SlowdownMatrix,
    scope: &[usize],
    fleet: &FleetSpec,
    methods: &[Method],
    kappa: usize,
    runs: usize,
    base_seed: u64,
    budget_ms: u64,
    workers: usize,
) -> Result<FleetExperimentReport> {
    if runs == 0 {
        return Err(Error::InvalidJob("need at least one run".into()));
    }
    let mut entries = Vec::with_capacity(methods.len() + 1);
    for &method in methods {
        let rates = map_indexed_parallel(runs, workers, |r| {
            let mut job = SelectionJob::new(method, scope.to_vec(), kappa, base_seed + r as u64);
            job.objective = Objective::FleetRate {
                fleet: fleet.clone(),
            };
            job.budget_ms = budget_ms;
            let outcome = run_selection(&job, sm)?;
            fleet_rate(sm, scope, &outcome.result.chosen, fleet)
        })?;
        let mut sorted = rates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
        entries.push(FleetEntry {
            label: method.to_string(),
            median_rate: median_sorted(&sorted),
            rates,
        });
    }

    // Baseline: each device's singleton library optimum, pooled.
    let mut device_names: Vec<&str> = scope
        .iter()
        .map(|&e| sm.environments()[e].device.name.as_str())
        .collect();
    device_names.sort_unstable();
    device_names.dedup();
    let mut pooled: Vec<usize> = Vec::new();
    for name in device_names {
        let device_scope: Vec<usize> = scope
            .iter()
            .copied()
            .filter(|&e| sm.environments()[e].device.name == name)
            .collect();
        let job = SelectionJob::new(Method::Exhaustive, device_scope, 1, base_seed);
        let outcome = run_selection(&job, sm)?;
        pooled.extend_from_slice(outcome.result.chosen.indices());
    }
    pooled.sort_unstable();
    pooled.dedup();
    let pooled_set = CandidateSet::new(pooled, sm.n_variants())?;
    let rate = fleet_rate(sm, scope, &pooled_set, fleet)?;
    entries.push(FleetEntry {
        label: PER_DEVICE_POOLED.to_string(),
        median_rate: rate,
        rates: vec![rate; runs],
    });

    Ok(FleetExperimentReport {
        kappa,
        runs,
        entries,
    })
}

/// Plot-ready CSV: the slowdown CDF of one report.
pub fn write_cdf_csv(report: &EvaluationReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "threshold,fraction")?;
    for p in &report.cdf {
        writeln!(out, "{},{}", p.threshold, p.fraction)?;
    }
    Ok(())
}

/// Plot-ready CSV: geomean versus kappa for a divergence sweep.
pub fn write_sweep_csv(reports: &[EvaluationReport], mut out: impl Write) -> Result<()> {
    writeln!(out, "kappa,method,runs,geomean,geomean_mean,ci_low,ci_high")?;
    for r in reports {
        let mean = r.geomean_mean_of_runs.unwrap_or(r.geomean);
        let (lo, hi) = r.ci95.unwrap_or((mean, mean));
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.kappa, r.method, r.runs, r.geomean, mean, lo, hi
        )?;
    }
    Ok(())
}

/// Plot-ready CSV: one bar per fleet-experiment entry.
pub fn write_fleet_csv(report: &FleetExperimentReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "label,kappa,runs,median_rate")?;
    for e in &report.entries {
        writeln!(
            out,
            "{},{},{},{}",
            e.label, report.kappa, report.runs, e.median_rate
        )?;
    }
    Ok(())
}
