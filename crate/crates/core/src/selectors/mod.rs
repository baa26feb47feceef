//! Variant-set selection: choose a budgeted set of variant columns
//! minimizing an objective over an environment scope.
//!
//! Four methods are provided: exhaustive enumeration, seeded stochastic
//! local search, k-means clustering over environment slowdown rows, and a
//! leaf-budgeted multi-output regression tree. All methods are
//! deterministic for a fixed seed in single-threaded mode, and every
//! returned cost is re-evaluated through [`crate::objectives::cost`] on the
//! final set, never cached from the search.

mod exhaustive;
mod kmeans;
mod stochastic;
mod tree;

pub use exhaustive::select_exhaustive;
pub use kmeans::{lloyd, select_kmeans, KMeansFit};
pub use stochastic::select_stochastic;
pub use tree::{fit_tree, select_tree, select_tree_with_features, EnvFeatures, SplitRecord, TreeFit};

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{Environment, ParamConfig, SlowdownMatrix};
use crate::error::{Error, Result};
use crate::objectives::{cost, CandidateSet, Objective};

pub const DEFAULT_BUDGET_MS: u64 = 30_000;
pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    Stochastic,
    #[serde(rename = "kmeans")]
    KMeans,
    #[serde(rename = "tree")]
    DecisionTree,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Exhaustive => f.write_str("exhaustive"),
            Method::Stochastic => f.write_str("stochastic"),
            Method::KMeans => f.write_str("kmeans"),
            Method::DecisionTree => f.write_str("tree"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exhaustive" => Ok(Method::Exhaustive),
            "stochastic" => Ok(Method::Stochastic),
            "kmeans" => Ok(Method::KMeans),
            "tree" | "decision_tree" | "decision-tree" => Ok(Method::DecisionTree),
            other => Err(Error::InvalidJob(format!("unknown method {other:?}"))),
        }
    }
}

/// One selection task over a prebuilt slowdown matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionJob {
    /// Row indices into the matrix; the environments being tuned for.
    pub scope: Vec<usize>,
    pub objective: Objective,
    /// Variant budget |kappa| (the code divergence).
    pub kappa: usize,
    #[serde(default = "default_budget")]
    pub budget_ms: u64,
    pub seed: u64,
    pub method: Method,
    /// Largest combination count select_exhaustive will enumerate.
    #[serde(default = "default_enum_cap")]
    pub enum_cap: u64,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET_MS
}

fn default_enum_cap() -> u64 {
    DEFAULT_ENUM_CAP
}

impl SelectionJob {
    pub fn new(method: Method, scope: Vec<usize>, kappa: usize, seed: u64) -> Self {
        SelectionJob {
            scope,
            objective: Objective::LibraryGeomean,
            kappa,
            budget_ms: DEFAULT_BUDGET_MS,
            seed,
            method,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }

    pub fn validate(&self, sm: &SlowdownMatrix) -> Result<()> {
        if self.scope.is_empty() {
            return Err(Error::EmptyScope);
        }
        if let Some(&bad) = self.scope.iter().find(|&&e| e >= sm.n_environments()) {
            return Err(Error::InvalidJob(format!(
                "scope row {bad} out of range for {} environments",
                sm.n_environments()
            )));
        }
        if self.kappa == 0 {
            return Err(Error::InvalidJob("kappa must be >= 1".into()));
        }
        if self.kappa > sm.n_variants() {
            return Err(Error::InvalidJob(format!(
                "kappa {} exceeds the {} available variants",
                self.kappa,
                sm.n_variants()
            )));
        }
        if self.budget_ms == 0 {
            return Err(Error::InvalidJob("budget_ms must be > 0".into()));
        }
        Ok(())
    }
}

/// The environment-to-variant mapping for one scope environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Winner {
    pub device: String,
    pub m: u32,
    pub n: u32,
    pub k: u32,
    /// Matrix column of the best chosen variant (ties to the lowest index).
    pub variant: usize,
}

/// Outcome of a selection job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    pub seed: u64,
    pub kappa: usize,
    pub chosen: CandidateSet,
    pub chosen_configs: Vec<ParamConfig>,
    /// Minimization-oriented cost, re-evaluated on `chosen`.
    pub cost: f64,
    /// Sorted by (device, input); covers exactly the job scope.
    pub winners: Vec<Winner>,
    pub evaluations: u64,
    /// Wall-clock time; omitted from JSON when timing fields are stripped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl SelectionResult {
    /// Removes wall-clock fields so output files are byte-reproducible.
    pub fn strip_timing(&mut self) {
        self.elapsed_ms = None;
    }

    pub fn winner_for(&self, env: &Environment) -> Option<usize> {
        self.winners
            .iter()
            .find(|w| {
                w.device == env.device.name
                    && w.m == env.input.m
                    && w.n == env.input.n
                    && w.k == env.input.k
            })
            .map(|w| w.variant)
    }
}

/// Exact-match lookup for environments seen during selection. Unseen
/// environments are an explicit error, never a guess.
pub fn dispatch(result: &SelectionResult, env: &Environment) -> Result<usize> {
    result
        .winner_for(env)
        .ok_or_else(|| Error::NoMapping {
            env: env.to_string(),
        })
}

/// One point of a convergence log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationPoint {
    pub timestamp_ms: f64,
    pub evaluations: u64,
    pub best_cost: f64,
}

/// Best-so-far trace of a selection run, streamable as CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub points: Vec<IterationPoint>,
}

impl IterationLog {
    fn push(&mut self, timestamp_ms: f64, evaluations: u64, best_cost: f64) {
        self.points.push(IterationPoint {
            timestamp_ms,
            evaluations,
            best_cost,
        });
    }

    /// Writes `timestamp_ms,evaluations,best_cost` rows. With timestamps
    /// suppressed the column is left empty and the file is reproducible.
    pub fn write_csv(&self, mut out: impl Write, timestamps: bool) -> Result<()> {
        writeln!(out, "timestamp_ms,evaluations,best_cost")?;
        for p in &self.points {
            if timestamps {
                writeln!(out, "{},{},{}", p.timestamp_ms, p.evaluations, p.best_cost)?;
            } else {
                writeln!(out, ",{},{}", p.evaluations, p.best_cost)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub result: SelectionResult,
    pub log: IterationLog,
}

/// Runs the job with its configured method. Decision-tree jobs use the
/// default environment features (m, n, k, device one-hot).
pub fn run_selection(job: &SelectionJob, sm: &SlowdownMatrix) -> Result<SelectionOutcome> {
    match job.method {
        Method::Exhaustive => select_exhaustive(job, sm),
        Method::Stochastic => select_stochastic(job, sm),
        Method::KMeans => select_kmeans(job, sm),
        Method::DecisionTree => select_tree(job, sm),
    }
}

/// Search-internal context shared by the method implementations.
pub(crate) struct SearchCtx<'a> {
    pub sm: &'a SlowdownMatrix,
    pub job: &'a SelectionJob,
    /// Candidate variant columns. Variants without a single valid
    /// measurement in scope are excluded whenever at least kappa measured
    /// variants exist, so selections never pick unmeasured variants
    /// needlessly.
    pub pool: Vec<usize>,
    pub started: Instant,
    pub evaluations: u64,
    pub log: IterationLog,
}

impl<'a> SearchCtx<'a> {
    pub fn new(job: &'a SelectionJob, sm: &'a SlowdownMatrix) -> Result<Self> {
        job.validate(sm)?;
        let measured = sm.variants_with_valid_in(&job.scope);
        let pool = if measured.len() >= job.kappa {
            measured
        } else {
            (0..sm.n_variants()).collect()
        };
        Ok(SearchCtx {
            sm,
            job,
            pool,
            started: Instant::now(),
            evaluations: 0,
            log: IterationLog::default(),
        })
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    pub fn out_of_budget(&self) -> bool {
        self.started.elapsed().as_millis() as u64 >= self.job.budget_ms
    }

    pub fn eval(&mut self, indices: &[usize]) -> Result<f64> {
        self.evaluations += 1;
        let set = CandidateSet::new(indices.to_vec(), self.sm.n_variants())?;
        cost(&self.job.objective, self.sm, &set, &self.job.scope)
    }

    pub fn record_best(&mut self, best_cost: f64) {
        let t = self.elapsed_ms();
        let e = self.evaluations;
        self.log.push(t, e, best_cost);
    }

    /// Recomputes cost and winners on the final set and assembles the result.
    pub fn finish(mut self, chosen_indices: Vec<usize>) -> Result<SelectionOutcome> {
        let chosen = CandidateSet::new(chosen_indices, self.sm.n_variants())?;
        let final_cost = cost(&self.job.objective, self.sm, &chosen, &self.job.scope)?;
        self.evaluations += 1;

        let mut scope_rows = self.job.scope.clone();
        scope_rows.sort_unstable();
        scope_rows.dedup();
        let mut winners = Vec::with_capacity(scope_rows.len());
        for &e in &scope_rows {
            let row = self.sm.row(e);
            let mut best_v = chosen.indices()[0];
            for &v in chosen.indices() {
                if row[v] < row[best_v] {
                    best_v = v;
                }
            }
            let env = &self.sm.environments()[e];
            winners.push(Winner {
                device: env.device.name.clone(),
                m: env.input.m,
                n: env.input.n,
                k: env.input.k,
                variant: best_v,
            });
        }
        winners.sort_by(|a, b| {
            (&a.device, a.m, a.n, a.k).cmp(&(&b.device, b.m, b.n, b.k))
        });

        let chosen_configs = chosen
            .indices()
            .iter()
            .map(|&v| self.sm.variants()[v].clone())
            .collect();
        Ok(SelectionOutcome {
            result: SelectionResult {
                method: self.job.method,
                seed: self.job.seed,
                kappa: self.job.kappa,
                chosen,
                chosen_configs,
                cost: final_cost,
                winners,
                evaluations: self.evaluations,
                elapsed_ms: Some(self.elapsed_ms()),
            },
            log: self.log,
        })
    }
}
