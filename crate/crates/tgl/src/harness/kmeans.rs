//! Lloyd's k-means with deterministic seeding and farthest-point reseeding
//! of emptied clusters.

use crate::{Error, Matrix, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const MAX_ITERATIONS: usize = 300;

/// Cluster rows of `points` into `k` groups. Returns the per-row
/// assignments and the final within-cluster sum of squares.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<(Vec<usize>, f64)> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {n} available points"
        )));
    }
    let d = points.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroid_rows = rand::seq::index::sample(&mut rng, n, k).into_vec();
    centroid_rows.sort_unstable();
    let mut centroids: Vec<Vec<f64>> = centroid_rows
        .iter()
        .map(|&i| points.row(i).to_vec())
        .collect();

    let dist2 = |row: &[f64], c: &[f64]| -> f64 {
        row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    };

    let mut assignments = vec![0usize; n];
    for _ in 0..MAX_ITERATIONS {
        // assignment step
        let mut changed = false;
        for i in 0..n {
            let row = points.row(i);
            let best = (0..k)
                .min_by(|&a, &b| {
                    dist2(row, &centroids[a])
                        .partial_cmp(&dist2(row, &centroids[b]))
                        .unwrap()
                })
                .unwrap();
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        // update step
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster from the point farthest from its
                // current centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(points.row(a), &centroids[assignments[a]])
                            .partial_cmp(&dist2(points.row(b), &centroids[assignments[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centroids[c] = points.row(far).to_vec();
                assignments[far] = c;
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centroids[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia: f64 = (0..n)
        .map(|i| dist2(points.row(i), &centroids[assignments[i]]))
        .sum();
    Ok((assignments, inertia))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_clusters_when_k_equals_n() {
        let pts = Matrix::from_rows(&[vec![0.0], vec![5.0], vec![10.0]]).unwrap();
        let (assign, inertia) = kmeans(&pts, 3, 1).unwrap();
        let mut seen = assign.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 3);
        assert!(inertia < 1e-12);
    }

    #[test]
    fn separated_blobs_split_perfectly() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![0.0 + 0.01 * i as f64, 0.0]);
        }
        for i in 0..10 {
            rows.push(vec![10.0 + 0.01 * i as f64, 10.0]);
        }
        let pts = Matrix::from_rows(&rows).unwrap();
        let (assign, _) = kmeans(&pts, 2, 7).unwrap();
        let first = assign[0];
        assert!(assign[..10].iter().all(|&a| a == first));
        assert!(assign[10..].iter().all(|&a| a != first));
    }

    #[test]
    fn objective_never_increases_across_runs_of_lloyd() {
        // re-run with the output as the seed state: a fixpoint of Lloyd
        // cannot get worse
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let pts = Matrix::from_rows(&rows).unwrap();
        let (_, inertia1) = kmeans(&pts, 4, 3).unwrap();
        let (_, inertia2) = kmeans(&pts, 4, 3).unwrap();
        assert_eq!(inertia1, inertia2); // determinism
        // one extra cluster can only help the objective
        let (_, inertia_more) = kmeans(&pts, 5, 3).unwrap();
        assert!(inertia_more <= inertia1 + 1e-9);
    }

    #[test]
    fn k_zero_and_k_too_large_rejected() {
        let pts = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(kmeans(&pts, 0, 0).is_err());
        assert!(kmeans(&pts, 3, 0).is_err());
    }
}
