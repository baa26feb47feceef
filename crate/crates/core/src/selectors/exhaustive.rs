//! Exhaustive enumeration over variant combinations.
//!
//! The search space is the set of kappa-subsets of the candidate pool,
//! which grows as O(|K|^kappa); the enumeration cap turns hopeless jobs
//! into an explicit error signalling that a heuristic method should be used
//! instead.

use crate::dataset::SlowdownMatrix;
use crate::error::{Error, Result};

use super::{SearchCtx, SelectionJob, SelectionOutcome};

/// Globally optimal selection; ties break toward the lexicographically
/// first combination in index order.
pub fn select_exhaustive(job: &SelectionJob, sm: &SlowdownMatrix) -> Result<SelectionOutcome> {
    let mut ctx = SearchCtx::new(job, sm)?;
    let n = ctx.pool.len();
    let kappa = job.kappa.min(n);

    let combinations = binomial(n as u128, kappa as u128);
    if combinations > job.enum_cap as u128 {
        return Err(Error::EnumerationCap {
            combinations,
            cap: job.enum_cap,
        });
    }

    // Positions into the pool, advanced in lexicographic order.
    let mut positions: Vec<usize> = (0..kappa).collect();
    let mut indices: Vec<usize> = positions.iter().map(|&p| ctx.pool[p]).collect();
    let mut best_cost = ctx.eval(&indices)?;
    let mut best = indices.clone();
    ctx.record_best(best_cost);

    while next_combination(&mut positions, n) {
        for (slot, &p) in positions.iter().enumerate() {
            indices[slot] = ctx.pool[p];
        }
        let c = ctx.eval(&indices)?;
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&indices);
            ctx.record_best(best_cost);
        }
    }

    ctx.finish(best)
}

/// Advances `positions` to the next kappa-combination of 0..n; false once
/// exhausted.
fn next_combination(positions: &mut [usize], n: usize) -> bool {
    let k = positions.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if positions[i] < n - (k - i) {
            positions[i] += 1;
            for j in i + 1..k {
                positions[j] = positions[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}
