//! Clustering (KL to a sharpened target) and NT-Xent contrastive losses,
//! each with its analytic gradient.

use crate::error::{OodError, Result};
use crate::scalar::{log_sum_exp, sq_dist, Scalar};

const PROB_FLOOR: f64 = 1e-12;

fn log_kernel<F: Scalar>(sq: F, alpha: F) -> F {
    -(alpha + F::one()) / F::lit(2.0) * (F::one() + sq / alpha).ln()
}

/// Student-t soft assignment of `e` to each centroid.
pub fn soft_assign<F: Scalar>(e: &[F], centroids: &[Vec<F>], alpha: F) -> Result<Vec<F>> {
    if !(alpha > F::zero()) {
        return Err(OodError::invalid("alpha must be positive"));
    }
    if centroids.is_empty() {
        return Err(OodError::invalid("soft assignment needs at least one centroid"));
    }
    let logs = centroids
        .iter()
        .map(|c| {
            if c.len() != e.len() {
                Err(OodError::Dimension {
                    expected: c.len(),
                    got: e.len(),
                })
            } else {
                Ok(log_kernel(sq_dist(e, c), alpha))
            }
        })
        .collect::<Result<Vec<F>>>()?;
    let lse = log_sum_exp(&logs);
    Ok(logs.iter().map(|&l| (l - lse).exp()).collect())
}

/// Sharpened targets `p_ik ∝ q_ik² / f_k` with `f_k = Σ_i q_ik` over the
/// batch. Cluster frequencies of exactly zero are floored at 1e-12.
pub fn target_distribution<F: Scalar>(q: &[Vec<F>]) -> Result<Vec<Vec<F>>> {
    let k = q
        .first()
        .map(Vec::len)
        .ok_or_else(|| OodError::invalid("target distribution of an empty batch"))?;
    if q.iter().any(|row| row.len() != k) {
        return Err(OodError::invalid("ragged soft-assignment matrix"));
    }
    if q.len() == 1 {
        // q²/q = q, returned without rounding.
        return Ok(q.to_vec());
    }
    let floor = F::lit(PROB_FLOOR);
    let mut freq = vec![F::zero(); k];
    for row in q {
        for (f, &v) in freq.iter_mut().zip(row) {
            *f += v;
        }
    }
    freq.iter_mut().for_each(|f| {
        if *f <= F::zero() {
            *f = floor;
        }
    });
    Ok(q.iter()
        .map(|row| {
            let raw: Vec<F> = row.iter().zip(&freq).map(|(&v, &f)| v * v / f).collect();
            let s: F = raw.iter().copied().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterLoss<F> {
    pub value: F,
    /// True if some `q` was clamped because it vanished where `p > 0`.
    pub clamped: bool,
}

/// Mean over rows of KL(p_i ‖ q_i), with 0·ln 0 = 0.
pub fn cluster_loss<F: Scalar>(p: &[Vec<F>], q: &[Vec<F>]) -> Result<ClusterLoss<F>> {
    if p.len() != q.len() || p.is_empty() {
        return Err(OodError::invalid("P and Q must be nonempty with equal rows"));
    }
    let floor = F::lit(PROB_FLOOR);
    let mut clamped = false;
    let mut total = F::zero();
    for (pr, qr) in p.iter().zip(q) {
        if pr.len() != qr.len() {
            return Err(OodError::invalid("P and Q rows differ in length"));
        }
        for (&pv, &qv) in pr.iter().zip(qr) {
            if pv > F::zero() {
                let qv = if qv <= F::zero() {
                    clamped = true;
                    floor
                } else {
                    qv
                };
                total += pv * (pv / qv).ln();
            }
        }
    }
    Ok(ClusterLoss {
        value: total / F::from_count(p.len()),
        clamped,
    })
}

/// Gradients of the clustering loss w.r.t. the embeddings and centroids,
/// holding `P` fixed.
pub fn cluster_loss_grad<F: Scalar>(
    embeddings: &[Vec<F>],
    centroids: &[Vec<F>],
    p: &[Vec<F>],
    q: &[Vec<F>],
    alpha: F,
) -> (Vec<Vec<F>>, Vec<Vec<F>>) {
    let m = F::from_count(embeddings.len());
    let coef = (alpha + F::one()) / alpha;
    let dim = centroids.first().map_or(0, Vec::len);
    let mut d_emb = vec![vec![F::zero(); dim]; embeddings.len()];
    let mut d_cent = vec![vec![F::zero(); dim]; centroids.len()];
    for (i, e) in embeddings.iter().enumerate() {
        for (k, c) in centroids.iter().enumerate() {
            let w = coef * (p[i][k] - q[i][k]) / (F::one() + sq_dist(e, c) / alpha) / m;
            for j in 0..dim {
                let g = w * (e[j] - c[j]);
                d_emb[i][j] += g;
                d_cent[k][j] -= g;
            }
        }
    }
    (d_emb, d_cent)
}

fn normalized_rows<F: Scalar>(z: &[Vec<F>]) -> Result<(Vec<Vec<F>>, Vec<F>)> {
    let mut unit = Vec::with_capacity(z.len());
    let mut norms = Vec::with_capacity(z.len());
    for (i, row) in z.iter().enumerate() {
        let n = crate::scalar::dot(row, row).sqrt();
        if !(n > F::zero()) || !n.is_finite() {
            return Err(OodError::invalid(format!("contrastive row {i} has zero or invalid norm")));
        }
        unit.push(row.iter().map(|&v| v / n).collect());
        norms.push(n);
    }
    Ok((unit, norms))
}

/// NT-Xent over `2M` rows where rows `2i` and `2i+1` are positives. Returns
/// the loss averaged over all anchors and its gradient w.r.t. each row.
pub fn contrastive_loss_grad<F: Scalar>(z: &[Vec<F>], tau: F) -> Result<(F, Vec<Vec<F>>)> {
    if z.len() < 2 || z.len() % 2 != 0 {
        return Err(OodError::invalid("contrastive batch needs an even number (>= 2) of rows"));
    }
    if !(tau > F::zero()) {
        return Err(OodError::invalid("temperature must be positive"));
    }
    let n = z.len();
    let (unit, norms) = normalized_rows(z)?;
    let mut sim = vec![vec![F::zero(); n]; n];
    for a in 0..n {
        for b in 0..n {
            sim[a][b] = crate::scalar::dot(&unit[a], &unit[b]) / tau;
        }
    }
    let nf = F::from_count(n);
    let mut loss = F::zero();
    // coef[a][b] = ∂L/∂sim[a][b]
    let mut coef = vec![vec![F::zero(); n]; n];
    let mut logits = Vec::with_capacity(n - 1);
    for a in 0..n {
        let pos = a ^ 1;
        logits.clear();
        logits.extend((0..n).filter(|&b| b != a).map(|b| sim[a][b]));
        let lse = log_sum_exp(&logits);
        loss += lse - sim[a][pos];
        for b in (0..n).filter(|&b| b != a) {
            let soft = (sim[a][b] - lse).exp();
            let target = if b == pos { F::one() } else { F::zero() };
            coef[a][b] = (soft - target) / nf;
        }
    }
    let dim = z[0].len();
    let mut grad = vec![vec![F::zero(); dim]; n];
    for a in 0..n {
        let mut g_unit = vec![F::zero(); dim];
        for b in 0..n {
            let c = (coef[a][b] + coef[b][a]) / tau;
            if c != F::zero() {
                for (g, &u) in g_unit.iter_mut().zip(&unit[b]) {
                    *g += c * u;
                }
            }
        }
        let radial = crate::scalar::dot(&g_unit, &unit[a]);
        for j in 0..dim {
            grad[a][j] = (g_unit[j] - radial * unit[a][j]) / norms[a];
        }
    }
    Ok((loss / nf, grad))
}

pub fn contrastive_loss<F: Scalar>(z: &[Vec<F>], tau: F) -> Result<F> {
    contrastive_loss_grad(z, tau).map(|(l, _)| l)
}
