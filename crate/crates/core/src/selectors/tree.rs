//! Regression-tree-based selection.
//!
//! A multi-output regression tree predicts an environment's slowdown row
//! from its features (by default m, n, k and a device one-hot). Growth is
//! best-first on axis-aligned threshold splits maximizing total
//! squared-error reduction and stops at kappa leaves; each leaf then
//! contributes the variant with the lowest leaf-mean slowdown, duplicates
//! collapsed.

use crate::dataset::SlowdownMatrix;
use crate::error::{Error, Result};

use super::{SearchCtx, SelectionJob, SelectionOutcome};

/// Numeric features for each scope environment, aligned with scope order.
#[derive(Debug, Clone)]
pub struct EnvFeatures {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl EnvFeatures {
    /// Default features: m, n, k and a one-hot over the scope's devices.
    pub fn default_for(sm: &SlowdownMatrix, scope: &[usize]) -> EnvFeatures {
        let mut devices: Vec<&str> = scope
            .iter()
            .map(|&e| sm.environments()[e].device.name.as_str())
            .collect();
        devices.sort_unstable();
        devices.dedup();

        let mut names = vec!["m".to_string(), "n".to_string(), "k".to_string()];
        names.extend(devices.iter().map(|d| format!("device={d}")));

        let rows = scope
            .iter()
            .map(|&e| {
                let env = &sm.environments()[e];
                let mut row = vec![
                    env.input.m as f64,
                    env.input.n as f64,
                    env.input.k as f64,
                ];
                for d in &devices {
                    row.push(if *d == env.device.name { 1.0 } else { 0.0 });
                }
                row
            })
            .collect();
        EnvFeatures { names, rows }
    }
}

pub fn select_tree(job: &SelectionJob, sm: &SlowdownMatrix) -> Result<SelectionOutcome> {
    let features = EnvFeatures::default_for(sm, &job.scope);
    select_tree_with_features(job, sm, &features)
}

pub fn select_tree_with_features(
    job: &SelectionJob,
    sm: &SlowdownMatrix,
    features: &EnvFeatures,
) -> Result<SelectionOutcome> {
    let mut ctx = SearchCtx::new(job, sm)?;
    if features.rows.len() != job.scope.len() {
        return Err(Error::InvalidJob(format!(
            "feature rows ({}) do not cover the scope ({})",
            features.rows.len(),
            job.scope.len()
        )));
    }
    let width = features.rows.first().map_or(0, Vec::len);
    if width == 0 || features.rows.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidJob(
            "feature rows must be non-empty and equally sized".into(),
        ));
    }

    let targets: Vec<&[f64]> = job.scope.iter().map(|&e| sm.row(e)).collect();
    let fit = fit_tree(&features.rows, &targets, job.kappa);

    let mut chosen = Vec::with_capacity(fit.leaf_means.len());
    for mean in &fit.leaf_means {
        let mut best = ctx.pool[0];
        for &v in &ctx.pool {
            if mean[v] < mean[best] {
                best = v;
            }
        }
        chosen.push(best);
    }
    chosen.sort_unstable();
    chosen.dedup();

    let cost = ctx.eval(&chosen)?;
    ctx.record_best(cost);
    ctx.finish(chosen)
}

/// One accepted split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRecord {
    pub feature: usize,
    pub threshold: f64,
    pub sse_before: f64,
    pub sse_after: f64,
}

/// A grown tree, reduced to its leaf partition.
#[derive(Debug, Clone)]
pub struct TreeFit {
    /// Sample positions per leaf, in leaf creation order.
    pub leaves: Vec<Vec<usize>>,
    /// Mean target vector per leaf.
    pub leaf_means: Vec<Vec<f64>>,
    pub splits: Vec<SplitRecord>,
    /// Total within-leaf SSE after 0, 1, 2, ... splits.
    pub sse_history: Vec<f64>,
}

struct Node {
    members: Vec<usize>,
    sse: f64,
    best: Option<Candidate>,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    reduction: f64,
}

/// Grows a best-first multi-output regression tree to at most `max_leaves`
/// leaves. Fully deterministic: ties prefer the lower feature index, then
/// the lower threshold, then the earlier leaf.
pub fn fit_tree(features: &[Vec<f64>], targets: &[&[f64]], max_leaves: usize) -> TreeFit {
    let all: Vec<usize> = (0..features.len()).collect();
    let root_sse = node_sse(&all, targets);
    let mut nodes = vec![Node {
        best: best_split(&all, features, targets, root_sse),
        members: all,
        sse: root_sse,
    }];
    let mut splits = Vec::new();
    let mut sse_history = vec![root_sse];

    while nodes.len() < max_leaves {
        let Some(pick) = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.best.map(|b| (i, b)))
            .filter(|(_, b)| b.reduction > 0.0)
            .max_by(|(ia, a), (ib, b)| {
                a.reduction
                    .partial_cmp(&b.reduction)
                    .expect("finite reductions")
                    .then(ib.cmp(ia)) // earlier leaf wins ties
            })
        else {
            break;
        };
        let (node_idx, cand) = pick;
        let node = &nodes[node_idx];
        let (left, right): (Vec<usize>, Vec<usize>) = node
            .members
            .iter()
            .partition(|&&s| features[s][cand.feature] < cand.threshold);
        debug_assert!(!left.is_empty() && !right.is_empty());

        let sse_before: f64 = nodes.iter().map(|n| n.sse).sum();
        let left_sse = node_sse(&left, targets);
        let right_sse = node_sse(&right, targets);
        let make = |members: Vec<usize>, sse: f64| Node {
            best: best_split(&members, features, targets, sse),
            members,
            sse,
        };
        nodes[node_idx] = make(left, left_sse);
        nodes.push(make(right, right_sse));

        let sse_after: f64 = nodes.iter().map(|n| n.sse).sum();
        splits.push(SplitRecord {
            feature: cand.feature,
            threshold: cand.threshold,
            sse_before,
            sse_after,
        });
        sse_history.push(sse_after);
    }

    let leaf_means = nodes
        .iter()
        .map(|n| mean_target(&n.members, targets))
        .collect();
    TreeFit {
        leaves: nodes.into_iter().map(|n| n.members).collect(),
        leaf_means,
        splits,
        sse_history,
    }
}

/// Best axis-aligned split of a node, if any boundary with a positive
/// squared-error reduction exists.
fn best_split(
    members: &[usize],
    features: &[Vec<f64>],
    targets: &[&[f64]],
    sse: f64,
) -> Option<Candidate> {
    if members.len() < 2 {
        return None;
    }
    let n_features = features[0].len();
    let n_outputs = targets[0].len();
    let mut best: Option<Candidate> = None;

    let mut order: Vec<usize> = members.to_vec();
    let mut sum = vec![0.0f64; n_outputs];
    let mut sumsq = vec![0.0f64; n_outputs];
    let (mut total_sum, mut total_sumsq) = (vec![0.0; n_outputs], vec![0.0; n_outputs]);
    for &s in members {
        for (j, &y) in targets[s].iter().enumerate() {
            total_sum[j] += y;
            total_sumsq[j] += y * y;
        }
    }

    for f in 0..n_features {
        order.sort_by(|&a, &b| {
            features[a][f]
                .partial_cmp(&features[b][f])
                .expect("finite features")
                .then(a.cmp(&b))
        });
        sum.iter_mut().for_each(|x| *x = 0.0);
        sumsq.iter_mut().for_each(|x| *x = 0.0);

        for (count, pair) in order.windows(2).enumerate() {
            let s = pair[0];
            for (j, &y) in targets[s].iter().enumerate() {
                sum[j] += y;
                sumsq[j] += y * y;
            }
            let left_n = (count + 1) as f64;
            let right_n = (members.len() - count - 1) as f64;
            let (lo, hi) = (features[pair[0]][f], features[pair[1]][f]);
            if lo == hi {
                continue; // not a boundary between distinct values
            }
            let mut split_sse = 0.0;
            for j in 0..n_outputs {
                let left = (sumsq[j] - sum[j] * sum[j] / left_n).max(0.0);
                let rs = total_sum[j] - sum[j];
                let right = (total_sumsq[j] - sumsq[j] - rs * rs / right_n).max(0.0);
                split_sse += left + right;
            }
            let reduction = sse - split_sse;
            let threshold = lo + (hi - lo) / 2.0;
            // Scanning in (feature, threshold) order with a strict > means
            // ties keep the earliest candidate.
            let better = best.map_or(true, |b| reduction > b.reduction);
            if better && reduction > 0.0 {
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    reduction,
                });
            }
        }
    }
    best
}

fn node_sse(members: &[usize], targets: &[&[f64]]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let n_outputs = targets[0].len();
    let mut sum = vec![0.0f64; n_outputs];
    let mut sumsq = vec![0.0f64; n_outputs];
    for &s in members {
        for (j, &y) in targets[s].iter().enumerate() {
            sum[j] += y;
            sumsq[j] += y * y;
        }
    }
    let n = members.len() as f64;
    (0..n_outputs)
        .map(|j| (sumsq[j] - sum[j] * sum[j] / n).max(0.0))
        .sum()
}

fn mean_target(members: &[usize], targets: &[&[f64]]) -> Vec<f64> {
    let n_outputs = targets[0].len();
    let mut mean = vec![0.0f64; n_outputs];
    for &s in members {
        for (j, &y) in targets[s].iter().enumerate() {
            mean[j] += y;
        }
    }
    let n = members.len() as f64;
    mean.iter_mut().for_each(|x| *x /= n);
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_the_separating_feature() {
        // Feature 0 separates the two target regimes; feature 1 is noise.
        let features = vec![
            vec![256.0, 7.0],
            vec![512.0, 3.0],
            vec![1024.0, 9.0],
            vec![4096.0, 1.0],
        ];
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0, 5.0],
            vec![1.1, 5.2],
            vec![5.0, 1.0],
            vec![5.1, 1.2],
        ];
        let targets: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let fit = fit_tree(&features, &targets, 2);
        assert_eq!(fit.leaves.len(), 2);
        assert_eq!(fit.splits.len(), 1);
        assert_eq!(fit.splits[0].feature, 0);
        assert!(fit.splits[0].threshold > 512.0 && fit.splits[0].threshold <= 1024.0);
    }

    #[test]
    fn every_split_strictly_reduces_sse() {
        let features: Vec<Vec<f64>> = (0..16)
            .map(|i| vec![i as f64, (i % 4) as f64])
            .collect();
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.7).cos()])
            .collect();
        let targets: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let fit = fit_tree(&features, &targets, 6);
        for pair in fit.sse_history.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    #[test]
    fn identical_features_stop_growth_early() {
        let features = vec![vec![1.0, 2.0]; 5];
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let targets: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let fit = fit_tree(&features, &targets, 3);
        assert_eq!(fit.leaves.len(), 1);
        assert!(fit.splits.is_empty());
    }
}
