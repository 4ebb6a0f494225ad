//! Diagonal-covariance Gaussian mixture fitted by EM, used as the density
//! estimator over (adapted) ID embeddings. OOD score = −log-density.

use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::kmeans::{kmeans_fit, KMeansParams};
use crate::scalar::{log_sum_exp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub components: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the per-point log-likelihood improves by less than this.
    pub tol: f64,
    /// Variance floor.
    pub eps: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            components: 1,
            seed: 0,
            max_iters: 200,
            tol: 1e-6,
            eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel<F> {
    pub weights: Vec<F>,
    pub means: Vec<Vec<F>>,
    pub variances: Vec<Vec<F>>,
    pub var_floor: F,
    /// Total data log-likelihood after initialization and after each EM step.
    pub fit_log: Vec<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub is_ood: bool,
    pub ood_score: f64,
}

impl<F: Scalar> GmmModel<F> {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn component_log_pdf(&self, c: usize, x: &[F]) -> F {
        let two_pi = F::lit(2.0 * std::f64::consts::PI);
        let half = F::lit(0.5);
        let mut acc = F::zero();
        for ((&xi, &m), &v) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
            let d = xi - m;
            acc += (two_pi * v).ln() + d * d / v;
        }
        -half * acc
    }

    fn joint_log(&self, x: &[F], out: &mut [F]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.weights[c].ln() + self.component_log_pdf(c, x);
        }
    }

    /// `ln Σ_c π_c N(x; μ_c, diag σ²_c)`.
    pub fn log_density(&self, x: &[F]) -> Result<F> {
        if x.len() != self.dim() {
            return Err(OodError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut buf = vec![F::zero(); self.n_components()];
        self.joint_log(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }

    pub fn ood_score(&self, x: &[F]) -> Result<F> {
        self.log_density(x).map(|v| -v)
    }

    /// Flags `x` as OOD when its score strictly exceeds `threshold`.
    pub fn decide(&self, x: &[F], threshold: f64) -> Result<Decision> {
        let ood_score = self.ood_score(x)?.as_f64();
        Ok(Decision {
            is_ood: ood_score > threshold,
            ood_score,
        })
    }

    fn total_log_likelihood(&self, points: &[Vec<F>]) -> F {
        let mut buf = vec![F::zero(); self.n_components()];
        points.iter().fold(F::zero(), |acc, p| {
            self.joint_log(p, &mut buf);
            acc + log_sum_exp(&buf)
        })
    }
}

/// Weighted means and floored diagonal variances from responsibilities.
fn m_step<F: Scalar>(points: &[Vec<F>], resp: &[Vec<F>], floor: F) -> (Vec<F>, Vec<Vec<F>>, Vec<Vec<F>>) {
    let c_count = resp[0].len();
    let dim = points[0].len();
    let n = F::from_count(points.len());
    let mut nk = vec![F::zero(); c_count];
    let mut means = vec![vec![F::zero(); dim]; c_count];
    for (p, r) in points.iter().zip(resp) {
        for c in 0..c_count {
            nk[c] += r[c];
            for (m, &x) in means[c].iter_mut().zip(p) {
                *m += r[c] * x;
            }
        }
    }
    for c in 0..c_count {
        if nk[c] > F::zero() {
            means[c].iter_mut().for_each(|m| *m /= nk[c]);
        }
    }
    let mut vars = vec![vec![F::zero(); dim]; c_count];
    for (p, r) in points.iter().zip(resp) {
        for c in 0..c_count {
            for ((v, &x), &m) in vars[c].iter_mut().zip(p).zip(&means[c]) {
                let d = x - m;
                *v += r[c] * d * d;
            }
        }
    }
    for c in 0..c_count {
        for v in vars[c].iter_mut() {
            *v = if nk[c] > F::zero() { *v / nk[c] } else { F::zero() };
            *v = v.max(floor);
        }
    }
    // Components that lose every point keep a tiny positive weight so the
    // log-weights stay finite.
    let tiny = F::lit(1e-300).max(F::min_positive_value());
    let mut weights: Vec<F> = nk.iter().map(|&w| (w / n).max(tiny)).collect();
    let s: F = weights.iter().copied().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    (weights, means, vars)
}

pub fn fit_gmm<F: Scalar>(points: &[Vec<F>], params: &GmmParams) -> Result<GmmModel<F>> {
    let c_count = params.components;
    if c_count == 0 {
        return Err(OodError::invalid("GMM needs at least one component"));
    }
    if points.len() < c_count {
        return Err(OodError::invalid(format!(
            "GMM with {c_count} components needs at least {c_count} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(OodError::invalid("GMM needs dimension >= 1"));
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(OodError::Dimension {
            expected: dim,
            got: p.len(),
        });
    }
    if !(params.eps > 0.0) {
        return Err(OodError::invalid("variance floor must be positive"));
    }
    if c_count > 1 && points.iter().all(|p| p == &points[0]) {
        log::warn!("all {} points identical; GMM components are degenerate", points.len());
    }
    let floor = F::lit(params.eps);
    let fit = kmeans_fit(points, c_count, params.seed, KMeansParams::default())?;
    let mut resp: Vec<Vec<F>> = fit
        .assignments
        .iter()
        .map(|&a| (0..c_count).map(|c| if c == a { F::one() } else { F::zero() }).collect())
        .collect();
    let (weights, means, variances) = m_step(points, &resp, floor);
    let mut model = GmmModel {
        weights,
        means,
        variances,
        var_floor: floor,
        fit_log: Vec::new(),
    };
    let n = F::from_count(points.len());
    let tol = F::lit(params.tol);
    let mut ll = model.total_log_likelihood(points);
    model.fit_log.push(ll);
    let mut buf = vec![F::zero(); c_count];
    for _ in 0..params.max_iters {
        for (p, r) in points.iter().zip(resp.iter_mut()) {
            model.joint_log(p, &mut buf);
            let lse = log_sum_exp(&buf);
            for (rc, &b) in r.iter_mut().zip(&buf) {
                *rc = (b - lse).exp();
            }
        }
        let (weights, means, variances) = m_step(points, &resp, floor);
        model.weights = weights;
        model.means = means;
        model.variances = variances;
        let new_ll = model.total_log_likelihood(points);
        if !new_ll.is_finite() {
            return Err(OodError::Numeric("GMM log-likelihood became non-finite".into()));
        }
        model.fit_log.push(new_ll);
        let gain = (new_ll - ll) / n;
        ll = new_ll;
        if gain < tol {
            break;
        }
    }
    Ok(model)
}
