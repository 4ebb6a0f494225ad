//! Lloyd's algorithm with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::scalar::{sq_dist, Scalar};

/// K cluster centers of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids<F> {
    pub vectors: Vec<Vec<F>>,
}

impl<F: Scalar> Centroids<F> {
    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Index of the nearest centroid; ties go to the lower index.
    pub fn nearest(&self, x: &[F]) -> usize {
        let mut best = 0;
        let mut best_d = F::infinity();
        for (k, c) in self.vectors.iter().enumerate() {
            let d = sq_dist(x, c);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<F> {
    pub centroids: Centroids<F>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-8,
        }
    }
}

fn plus_plus_seed<F: Scalar>(points: &[Vec<F>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0]).as_f64()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c).as_f64());
        }
        centers.push(c);
    }
    centers
}

pub fn kmeans_fit<F: Scalar>(points: &[Vec<F>], k: usize, seed: u64, params: KMeansParams) -> Result<KMeansFit<F>> {
    if k == 0 {
        return Err(OodError::invalid("K must be at least 1"));
    }
    if points.len() < k {
        return Err(OodError::invalid(format!(
            "k-means needs at least K = {k} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(OodError::Dimension {
            expected: dim,
            got: p.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Centroids {
        vectors: plus_plus_seed(points, k, &mut rng),
    };
    let mut assignments = vec![0; points.len()];
    let tol = F::lit(params.tol);
    let mut iterations = 0;
    for _ in 0..params.max_iters.max(1) {
        iterations += 1;
        for (a, p) in assignments.iter_mut().zip(points) {
            *a = centroids.nearest(p);
        }
        repair_empty(points, &centroids, &mut assignments, k);
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift = F::zero();
        for ((c, s), &n) in centroids.vectors.iter_mut().zip(sums).zip(&counts) {
            let new: Vec<F> = s.into_iter().map(|v| v / F::from_count(n)).collect();
            shift = shift.max(sq_dist(c, &new).sqrt());
            *c = new;
        }
        if shift < tol {
            break;
        }
    }
    for (a, p) in assignments.iter_mut().zip(points) {
        *a = centroids.nearest(p);
    }
    repair_empty(points, &centroids, &mut assignments, k);
    Ok(KMeansFit {
        centroids,
        assignments,
        iterations,
    })
}

/// Moves the point farthest from its own centroid into each empty cluster.
fn repair_empty<F: Scalar>(points: &[Vec<F>], centroids: &Centroids<F>, assignments: &mut [usize], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let far = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&i, &j| {
                let di = sq_dist(&points[i], &centroids.vectors[assignments[i]]);
                let dj = sq_dist(&points[j], &centroids.vectors[assignments[j]]);
                di.partial_cmp(&dj).unwrap_or(std::cmp::Ordering::Equal).then(j.cmp(&i))
            });
        if let Some(i) = far {
            counts[assignments[i]] -= 1;
            assignments[i] = empty;
            counts[empty] = 1;
        }
    }
}

/// Cluster centers only.
pub fn kmeans<F: Scalar>(points: &[Vec<F>], k: usize, seed: u64, params: KMeansParams) -> Result<Centroids<F>> {
    kmeans_fit(points, k, seed, params).map(|f| f.centroids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_1d(c: &Centroids<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = c.vectors.iter().map(|x| x[0]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn exact_fit() {
        let pts = vec![vec![0.0], vec![10.0]];
        let c = kmeans(&pts, 2, 0, KMeansParams::default()).unwrap();
        assert_eq!(sorted_1d(&c), vec![0.0, 10.0]);
    }

    #[test]
    fn hand_means_for_all_seeds() {
        let pts = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        for seed in 0..50 {
            let c = kmeans(&pts, 2, seed, KMeansParams::default()).unwrap();
            assert_eq!(sorted_1d(&c), vec![0.5, 10.5], "seed {seed}");
        }
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans(&[vec![1.0f64]], 2, 0, KMeansParams::default()).is_err());
    }

    #[test]
    fn no_empty_clusters_with_duplicates() {
        let mut pts = vec![vec![0.0f64, 0.0]; 10];
        pts.push(vec![5.0, 5.0]);
        pts.push(vec![6.0, 5.0]);
        let fit = kmeans_fit(&pts, 3, 3, KMeansParams::default()).unwrap();
        assert_eq!(fit.centroids.k(), 3);
        assert!(fit.centroids.vectors.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn seeded_determinism() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 1.7).sin(), (i as f64 * 0.3).cos()]).collect();
        let a = kmeans(&pts, 4, 5, KMeansParams::default()).unwrap();
        let b = kmeans(&pts, 4, 5, KMeansParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
