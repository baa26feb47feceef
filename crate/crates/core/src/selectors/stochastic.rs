//! Seeded stochastic search: greedy marginal-gain construction followed by
//! swap-neighborhood local search with random restarts.
//!
//! The first start is the greedy set; later starts are random
//! kappa-subsets. A move swaps one chosen variant for one unchosen variant
//! and is taken only on strict improvement, so the best-so-far cost is
//! non-increasing. The search stops after a fixed number of restarts
//! without improvement, or when the wall-clock budget runs out, whichever
//! comes first. With a fixed seed the trajectory is deterministic; the
//! budget can only truncate it, which on practical instances happens long
//! after convergence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::SlowdownMatrix;
use crate::error::{Error, Result};
use crate::objectives::Objective;

use super::{SearchCtx, SelectionJob, SelectionOutcome};

/// Restarts without improvement before the search concludes.
const RESTART_PATIENCE: usize = 12;
/// Candidate evaluations between wall-clock checks.
const BUDGET_CHECK_MASK: u64 = 0xff;

pub fn select_stochastic(job: &SelectionJob, sm: &SlowdownMatrix) -> Result<SelectionOutcome> {
    let mut ctx = SearchCtx::new(job, sm)?;
    let pool = ctx.pool.clone();
    let kappa = job.kappa.min(pool.len());
    if kappa == pool.len() {
        return ctx.finish(pool);
    }

    let weights = ObjectiveWeights::build(job, sm)?;
    let mut search = Search {
        ctx: &mut ctx,
        weights,
        pool: &pool,
        kappa,
    };

    let greedy = search.greedy_set();
    let (mut best, mut best_cost) = search.local_search(greedy);
    search.ctx.record_best(best_cost);

    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let mut stale_restarts = 0;
    while stale_restarts < RESTART_PATIENCE && !search.ctx.out_of_budget() {
        let sample = rand::seq::index::sample(&mut rng, pool.len(), kappa);
        let mut start: Vec<usize> = sample.iter().map(|p| pool[p]).collect();
        start.sort_unstable();
        let (set, cost) = search.local_search(start);
        if cost < best_cost {
            best = set;
            best_cost = cost;
            search.ctx.record_best(best_cost);
            stale_restarts = 0;
        } else {
            stale_restarts += 1;
        }
    }

    ctx.finish(best)
}

/// Scope-aligned weights turning per-environment best slowdowns into the
/// job's minimization cost. Mirrors `objectives::cost` arithmetic.
enum ObjectiveWeights {
    Library,
    Fleet {
        /// Per scope position: input quantity and oracle runtime.
        q_input: Vec<f64>,
        oracle_ms: Vec<f64>,
        /// Per scope position: device group (groups sorted by device name).
        group_of: Vec<usize>,
        q_device: Vec<f64>,
    },
}

impl ObjectiveWeights {
    fn build(job: &SelectionJob, sm: &SlowdownMatrix) -> Result<Self> {
        match &job.objective {
            Objective::LibraryGeomean => Ok(ObjectiveWeights::Library),
            Objective::FleetRate { fleet } => {
                let mut names: Vec<&str> = job
                    .scope
                    .iter()
                    .map(|&e| sm.environments()[e].device.name.as_str())
                    .collect();
                names.sort_unstable();
                names.dedup();
                let mut q_input = Vec::with_capacity(job.scope.len());
                let mut oracle_ms = Vec::with_capacity(job.scope.len());
                let mut group_of = Vec::with_capacity(job.scope.len());
                for &e in &job.scope {
                    let env = &sm.environments()[e];
                    q_input.push(fleet.input_quantity(&env.input).ok_or_else(|| {
                        Error::FleetQuantityMissing {
                            what: format!("input {}", env.input),
                        }
                    })?);
                    oracle_ms.push(sm.oracle_ms(e));
                    group_of.push(
                        names
                            .binary_search(&env.device.name.as_str())
                            .expect("collected above"),
                    );
                }
                let q_device = names
                    .iter()
                    .map(|n| {
                        fleet.device_quantity(n).ok_or_else(|| {
                            Error::FleetQuantityMissing {
                                what: format!("device {n:?}"),
                            }
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(ObjectiveWeights::Fleet {
                    q_input,
                    oracle_ms,
                    group_of,
                    q_device,
                })
            }
        }
    }

    /// Cost from per-scope-position best slowdowns.
    fn combine(&self, best: &[f64]) -> f64 {
        match self {
            ObjectiveWeights::Library => {
                let log_sum: f64 = best.iter().map(|b| b.ln()).sum();
                (log_sum / best.len() as f64).exp()
            }
            ObjectiveWeights::Fleet {
                q_input,
                oracle_ms,
                group_of,
                q_device,
            } => {
                let mut denom = vec![0.0; q_device.len()];
                for (i, b) in best.iter().enumerate() {
                    denom[group_of[i]] += b * oracle_ms[i] * q_input[i];
                }
                let rate: f64 = q_device
                    .iter()
                    .zip(&denom)
                    .map(|(q, d)| q / d)
                    .sum();
                1.0 / rate
            }
        }
    }
}

struct Search<'a, 'b> {
    ctx: &'a mut SearchCtx<'b>,
    weights: ObjectiveWeights,
    pool: &'a [usize],
    kappa: usize,
}

impl Search<'_, '_> {
    /// Greedy marginal-gain construction, ties to the lowest variant index.
    fn greedy_set(&mut self) -> Vec<usize> {
        let scope = &self.ctx.job.scope;
        let mut chosen: Vec<usize> = Vec::with_capacity(self.kappa);
        let mut best_vals = vec![f64::INFINITY; scope.len()];
        let mut scratch = vec![0.0; scope.len()];
        while chosen.len() < self.kappa {
            let mut pick: Option<(usize, f64)> = None;
            for &u in self.pool {
                if chosen.contains(&u) {
                    continue;
                }
                for (i, &e) in scope.iter().enumerate() {
                    scratch[i] = best_vals[i].min(self.ctx.sm.value(e, u));
                }
                let c = self.weights.combine(&scratch);
                self.ctx.evaluations += 1;
                if pick.map_or(true, |(_, pc)| c < pc) {
                    pick = Some((u, c));
                }
                if self.ctx.evaluations & BUDGET_CHECK_MASK == 0 && self.ctx.out_of_budget() {
                    break;
                }
            }
            match pick {
                Some((u, _)) => {
                    for (i, &e) in scope.iter().enumerate() {
                        best_vals[i] = best_vals[i].min(self.ctx.sm.value(e, u));
                    }
                    chosen.push(u);
                }
                None => break,
            }
            if self.ctx.out_of_budget() {
                break;
            }
        }
        // A preempted construction still returns a full set.
        for &u in self.pool {
            if chosen.len() >= self.kappa {
                break;
            }
            if !chosen.contains(&u) {
                chosen.push(u);
            }
        }
        chosen.sort_unstable();
        chosen
    }

    /// First-improvement swap descent to a local optimum.
    fn local_search(&mut self, mut chosen: Vec<usize>) -> (Vec<usize>, f64) {
        let scope = self.ctx.job.scope.clone();
        let mut state = State::compute(self.ctx.sm, &scope, &chosen);
        let mut cur = self.weights.combine(&state.best1_val);
        self.ctx.evaluations += 1;
        let mut scratch = vec![0.0; scope.len()];

        'sweeps: loop {
            let snapshot = chosen.clone();
            for &c in &snapshot {
                for &u in self.pool {
                    if chosen.contains(&u) {
                        continue;
                    }
                    for (i, &e) in scope.iter().enumerate() {
                        let without_c = if state.best1_col[i] == c {
                            state.best2_val[i]
                        } else {
                            state.best1_val[i]
                        };
                        scratch[i] = without_c.min(self.ctx.sm.value(e, u));
                    }
                    let cost = self.weights.combine(&scratch);
                    self.ctx.evaluations += 1;
                    if cost < cur {
                        let slot = chosen.iter().position(|&x| x == c).expect("member");
                        chosen[slot] = u;
                        chosen.sort_unstable();
                        state = State::compute(self.ctx.sm, &scope, &chosen);
                        cur = self.weights.combine(&state.best1_val);
                        self.ctx.evaluations += 1;
                        continue 'sweeps;
                    }
                    if self.ctx.evaluations & BUDGET_CHECK_MASK == 0
                        && self.ctx.out_of_budget()
                    {
                        break 'sweeps;
                    }
                }
            }
            break; // full sweep without improvement: local optimum
        }
        (chosen, cur)
    }
}

/// Per-scope-position best and second-best slowdowns over a chosen set.
struct State {
    best1_col: Vec<usize>,
    best1_val: Vec<f64>,
    best2_val: Vec<f64>,
}

impl State {
    fn compute(sm: &SlowdownMatrix, scope: &[usize], chosen: &[usize]) -> State {
        let mut best1_col = vec![usize::MAX; scope.len()];
        let mut best1_val = vec![f64::INFINITY; scope.len()];
        let mut best2_val = vec![f64::INFINITY; scope.len()];
        for (i, &e) in scope.iter().enumerate() {
            let row = sm.row(e);
            for &v in chosen {
                let x = row[v];
                if x < best1_val[i] {
                    best2_val[i] = best1_val[i];
                    best1_val[i] = x;
                    best1_col[i] = v;
                } else if x < best2_val[i] {
                    best2_val[i] = x;
                }
            }
        }
        State {
            best1_col,
            best1_val,
            best2_val,
        }
    }
}
