//! Clustering-based selection.
//!
//! Each scope environment is a point in |variants|-dimensional space: its
//! slowdown row. Lloyd's algorithm with seeded k-means++ initialization
//! groups environments with similar performance behaviour; each cluster
//! then contributes the variant with the lowest centroid slowdown. This
//! prunes the search from |K|^kappa combinations down to |K| x kappa reads.
//!
//! Duplicate picks across clusters are collapsed rather than backfilled, so
//! the returned set may be smaller than kappa.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::SlowdownMatrix;
use crate::error::{Error, Result};

use super::{SearchCtx, SelectionJob, SelectionOutcome};

const MAX_LLOYD_ITERATIONS: usize = 200;

pub fn select_kmeans(job: &SelectionJob, sm: &SlowdownMatrix) -> Result<SelectionOutcome> {
    let mut ctx = SearchCtx::new(job, sm)?;
    if job.scope.len() < job.kappa {
        return Err(Error::InvalidJob(format!(
            "kmeans needs at least kappa={} scope environments, got {}",
            job.kappa,
            job.scope.len()
        )));
    }

    let points: Vec<&[f64]> = job.scope.iter().map(|&e| sm.row(e)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let fit = lloyd(&points, job.kappa, &mut rng, MAX_LLOYD_ITERATIONS);

    let mut chosen = Vec::with_capacity(job.kappa);
    for centroid in &fit.centroids {
        let mut best = ctx.pool[0];
        for &v in &ctx.pool {
            if centroid[v] < centroid[best] {
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

/// A converged clustering, with the within-cluster sum of squares recorded
/// after each assignment step.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's iterations over the given points, deterministic for a fixed rng
/// state. Empty clusters are repaired by re-seeding from the point farthest
/// from its assigned centroid.
pub fn lloyd(
    points: &[&[f64]],
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iterations: usize,
) -> KMeansFit {
    assert!(!points.is_empty() && k >= 1 && k <= points.len());
    let dim = points[0].len();

    let mut centroids = plus_plus_init(points, k, rng);
    let mut assignment = vec![0usize; points.len()];
    let mut wcss_history = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let mut changed = assign(points, &centroids, &mut assignment);

        // Re-seed any empty cluster from the worst-covered point. Bounded:
        // with duplicate points a cluster can stay empty, which is fine.
        let mut repairs = 0;
        loop {
            let mut counts = vec![0usize; k];
            for &a in &assignment {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            repairs += 1;
            if repairs > k {
                break;
            }
            let farthest = (0..points.len())
                .max_by(|&a, &b| {
                    let da = dist_sq(points[a], &centroids[assignment[a]]);
                    let db = dist_sq(points[b], &centroids[assignment[b]]);
                    da.partial_cmp(&db).expect("finite distances")
                })
                .expect("non-empty points");
            centroids[empty] = points[farthest].to_vec();
            changed |= assign(points, &centroids, &mut assignment);
        }

        let wcss: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &a)| dist_sq(p, &centroids[a]))
            .sum();
        wcss_history.push(wcss);

        if !changed && iterations > 1 {
            break;
        }
        if iterations >= max_iterations {
            break;
        }

        for c in centroids.iter_mut() {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (acc, x) in centroids[a].iter_mut().zip(p.iter()) {
                *acc += x;
            }
        }
        for (c, &n) in centroids.iter_mut().zip(&counts) {
            if n > 0 {
                c.iter_mut().for_each(|x| *x /= n as f64);
            }
        }
        debug_assert_eq!(centroids[0].len(), dim);
    }

    KMeansFit {
        centroids,
        assignment,
        wcss_history,
        iterations,
    }
}

/// k-means++ seeding: the first centroid is uniform, later centroids are
/// drawn proportionally to squared distance from the nearest chosen one.
fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| dist_sq(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].to_vec());
        for (d, p) in d2.iter_mut().zip(points.iter()) {
            let nd = dist_sq(p, centroids.last().expect("just pushed"));
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Nearest-centroid assignment (ties to the lowest centroid index);
/// reports whether anything moved.
fn assign(points: &[&[f64]], centroids: &[Vec<f64>], assignment: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, p) in points.iter().enumerate() {
        let mut best = 0;
        let mut best_d = dist_sq(p, &centroids[0]);
        for (c, centroid) in centroids.iter().enumerate().skip(1) {
            let d = dist_sq(p, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if assignment[i] != best {
            assignment[i] = best;
            changed = true;
        }
    }
    changed
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_obvious_clusters_are_found() {
        let raw: Vec<Vec<f64>> = vec![
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![0.05, 0.05],
            vec![10.0, 10.1],
            vec![10.1, 10.0],
        ];
        let points: Vec<&[f64]> = raw.iter().map(|p| p.as_slice()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fit = lloyd(&points, 2, &mut rng, 100);
        assert_eq!(fit.assignment[0], fit.assignment[1]);
        assert_eq!(fit.assignment[0], fit.assignment[2]);
        assert_eq!(fit.assignment[3], fit.assignment[4]);
        assert_ne!(fit.assignment[0], fit.assignment[3]);
    }

    #[test]
    fn wcss_is_non_increasing() {
        let raw: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let x = (i as f64 * 0.7919).sin() * 5.0;
                let y = (i as f64 * 0.3141).cos() * 5.0;
                vec![x, y, x * y]
            })
            .collect();
        let points: Vec<&[f64]> = raw.iter().map(|p| p.as_slice()).collect();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fit = lloyd(&points, 4, &mut rng, 100);
            for pair in fit.wcss_history.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-9,
                    "wcss increased: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn k_equal_to_point_count_is_exact() {
        let raw: Vec<Vec<f64>> = vec![vec![0.0], vec![5.0], vec![9.0]];
        let points: Vec<&[f64]> = raw.iter().map(|p| p.as_slice()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fit = lloyd(&points, 3, &mut rng, 100);
        let wcss = fit.wcss_history.last().unwrap();
        assert!(*wcss < 1e-12);
    }
}
