//! Two-dimensional PCA export for plotting learned representations.

use crate::error::{OodError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection<F> {
    /// One `[pc1, pc2]` pair per input point, in input order.
    pub coords: Vec<[F; 2]>,
    /// All covariance eigenvalues, nonincreasing.
    pub eigenvalues: Vec<F>,
    /// The two principal directions (unit length, first nonzero entry > 0).
    pub components: [Vec<F>; 2],
}

impl<F: Scalar> Projection<F> {
    pub fn explained_variance_ratio(&self) -> [F; 2] {
        let total: F = self.eigenvalues.iter().copied().sum();
        if total <= F::zero() {
            return [F::zero(); 2];
        }
        [self.eigenvalues[0] / total, self.eigenvalues[1] / total]
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
fn jacobi_eigen<F: Scalar>(mut a: Vec<Vec<F>>) -> (Vec<F>, Vec<Vec<F>>) {
    let n = a.len();
    let mut v: Vec<Vec<F>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { F::one() } else { F::zero() }).collect())
        .collect();
    let eps = F::epsilon();
    for _sweep in 0..100 {
        let mut off = F::zero();
        let mut diag = F::zero();
        for i in 0..n {
            diag += a[i][i] * a[i][i];
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off <= eps * eps * diag || off == F::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == F::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (F::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Mean-centers `points` and projects them on the top two principal
/// directions.
pub fn pca2d_project<F: Scalar>(points: &[Vec<F>]) -> Result<Projection<F>> {
    if points.len() < 3 {
        return Err(OodError::invalid("PCA projection needs at least 3 points"));
    }
    let d = points[0].len();
    if d < 2 {
        return Err(OodError::invalid("PCA projection needs dimension >= 2"));
    }
    if let Some(bad) = points.iter().find(|p| p.len() != d) {
        return Err(OodError::Dimension {
            expected: d,
            got: bad.len(),
        });
    }
    let n = F::from_count(points.len());
    let mut mean = vec![F::zero(); d];
    for p in points {
        for (m, &x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centered: Vec<Vec<F>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(&x, &m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![F::zero(); d]; d];
    for c in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].as_f64().total_cmp(&values[a].as_f64()).then(a.cmp(&b)));
    let direction = |col: usize| -> Vec<F> {
        let mut u: Vec<F> = vectors.iter().map(|row| row[col]).collect();
        let tiny = F::epsilon().sqrt();
        if let Some(first) = u.iter().find(|x| x.abs() > tiny) {
            if *first < F::zero() {
                u.iter_mut().for_each(|x| *x = -*x);
            }
        }
        u
    };
    let components = [direction(order[0]), direction(order[1])];
    let coords = centered
        .iter()
        .map(|c| {
            [
                crate::scalar::dot(c, &components[0]),
                crate::scalar::dot(c, &components[1]),
            ]
        })
        .collect();
    Ok(Projection {
        coords,
        eigenvalues: order.iter().map(|&i| values[i].max(F::zero())).collect(),
        components,
    })
}

/// `id,pc1,pc2,is_ood` table for plotting.
pub fn projection_csv<F: Scalar>(ids: &[&str], is_ood: &[Option<bool>], proj: &Projection<F>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "pc1", "pc2", "is_ood"]).expect("in-memory csv");
    for ((id, flag), c) in ids.iter().zip(is_ood).zip(&proj.coords) {
        let flag = flag.map(|b| b.to_string()).unwrap_or_default();
        w.write_record([id.to_string(), c[0].to_string(), c[1].to_string(), flag])
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    #[test]
    fn two_dimensional_input_is_rotated_rigidly() {
        let pts: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![3.0, 1.0],
            vec![-1.0, 2.0],
            vec![4.0, -2.5],
            vec![0.5, 0.25],
        ];
        let proj = pca2d_project(&pts).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let orig = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                assert!((orig - dist(proj.coords[i], proj.coords[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn collinear_points_have_no_second_component() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| {
            let t = i as f64;
            vec![t, 2.0 * t, -t]
        }).collect();
        let proj = pca2d_project(&pts).unwrap();
        assert!(proj.eigenvalues[1].abs() < 1e-10);
        for c in &proj.coords {
            assert!(c[1].abs() < 1e-9);
        }
    }

    #[test]
    fn eigenvalues_nonincreasing_and_sign_fixed() {
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.7).sin() * 3.0, t * 0.1, (t * 1.3).cos(), t.sqrt()]
            })
            .collect();
        let proj = pca2d_project(&pts).unwrap();
        assert!(proj.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for comp in &proj.components {
            let first = comp.iter().find(|x| x.abs() > 1e-8).unwrap();
            assert!(*first > 0.0);
        }
        let r = proj.explained_variance_ratio();
        assert!(r[0] >= r[1]);
    }

    #[test]
    fn too_few_points() {
        assert!(pca2d_project(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
    }
}
