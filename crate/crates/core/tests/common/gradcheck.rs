//! Finite-difference oracle for the training objective. The forward pass
//! here is written independently of the library: plain loops, the Student-t
//! kernel in the probability domain and NT-Xent straight from its
//! definition. `P` is computed once at the unperturbed parameters and held
//! fixed, as the analytic gradient assumes.

use oodkit::replearn::{
    joint_loss, Activation, BatchMasks, DropoutMask, EncoderHead, EncoderParams, LossSettings, ProjectionHead,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub params: EncoderParams<f64>,
    pub batch: Vec<Vec<f64>>,
    pub masks: BatchMasks,
    pub settings: LossSettings,
}

/// A random instance with a batch of 2 to 8 items.
pub fn random_instance(rng: &mut ChaCha8Rng, cluster: bool, cl: bool) -> Instance {
    let base = rng.random_range(2..=16);
    let hidden = rng.random_range(2..=16);
    let out = rng.random_range(2..=16);
    let proj_hidden = rng.random_range(2..=16);
    let proj = rng.random_range(2..=16);
    let m = rng.random_range(2..=8);
    let k = rng.random_range(2..=4);
    let dropout = rng.random_range(0.0..0.5);
    let mut init_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut head = EncoderHead::init(base, hidden, out, Activation::Tanh, dropout, &mut init_rng);
    let mut projection = ProjectionHead::init(out, proj_hidden, proj, Activation::Tanh, &mut init_rng);
    for b in head
        .hidden
        .bias
        .iter_mut()
        .chain(&mut head.output.bias)
        .chain(&mut projection.first.bias)
        .chain(&mut projection.second.bias)
    {
        *b = rng.random_range(-0.5..0.5);
    }
    let centroids = (0..k)
        .map(|_| (0..out).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let batch = (0..m)
        .map(|_| (0..base).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let masks = BatchMasks {
        view0: (0..m).map(|_| DropoutMask::sample(hidden, dropout, rng)).collect(),
        view1: (0..m).map(|_| DropoutMask::sample(hidden, dropout, rng)).collect(),
    };
    let settings = LossSettings {
        gamma: if cluster && cl { rng.random_range(0.1..4.0) } else { 1.0 },
        tau: rng.random_range(0.2..1.0),
        alpha: rng.random_range(0.5..2.0),
        cluster_loss: cluster,
        cl_loss: cl,
        deterministic_q: false,
    };
    Instance {
        params: EncoderParams { head, projection, centroids },
        batch,
        masks,
        settings,
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, &bo)| bo + (0..x.len()).map(|i| w[o * x.len() + i] * x[i]).sum::<f64>())
        .collect()
}

fn head_forward(p: &EncoderParams<f64>, x: &[f64], mask: &DropoutMask) -> Vec<f64> {
    let h = &p.head;
    let keep = 1.0 / (1.0 - h.dropout);
    let act: Vec<f64> = affine(&h.hidden.weight, &h.hidden.bias, x)
        .iter()
        .zip(&mask.0)
        .map(|(&v, &m)| if m { v.tanh() * keep } else { 0.0 })
        .collect();
    affine(&h.output.weight, &h.output.bias, &act)
}

fn project(p: &EncoderParams<f64>, e: &[f64]) -> Vec<f64> {
    let g = &p.projection;
    let act: Vec<f64> = affine(&g.first.weight, &g.first.bias, e).iter().map(|v| v.tanh()).collect();
    affine(&g.second.weight, &g.second.bias, &act)
}

fn soft_assign(e: &[f64], centroids: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = centroids
        .iter()
        .map(|c| {
            let d2: f64 = e.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            (1.0 + d2 / alpha).powf(-(alpha + 1.0) / 2.0)
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn q_matrix(inst: &Instance, p: &EncoderParams<f64>) -> Vec<Vec<f64>> {
    inst.batch
        .iter()
        .zip(&inst.masks.view0)
        .map(|(x, m)| soft_assign(&head_forward(p, x, m), &p.centroids, inst.settings.alpha))
        .collect()
}

pub fn target(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = q[0].len();
    let f: Vec<f64> = (0..k).map(|j| q.iter().map(|r| r[j]).sum()).collect();
    q.iter()
        .map(|r| {
            let raw: Vec<f64> = (0..k).map(|j| r[j] * r[j] / f[j]).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn nt_xent(z: &[Vec<f64>], tau: f64) -> f64 {
    let n = z.len();
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut total = 0.0;
    for a in 0..n {
        let den: f64 = (0..n).filter(|&b| b != a).map(|b| (cos(&z[a], &z[b]) / tau).exp()).sum();
        total += -((cos(&z[a], &z[a ^ 1]) / tau).exp() / den).ln();
    }
    total / n as f64
}

fn oracle_loss(inst: &Instance, p: &EncoderParams<f64>, p_fixed: &[Vec<f64>]) -> f64 {
    let s = &inst.settings;
    let mut total = 0.0;
    if s.cluster_loss {
        let q = q_matrix(inst, p);
        let kl: f64 = p_fixed
            .iter()
            .zip(&q)
            .map(|(pr, qr)| pr.iter().zip(qr).map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 }).sum::<f64>())
            .sum();
        total += kl / q.len() as f64;
    }
    if s.cl_loss {
        let z: Vec<Vec<f64>> = inst
            .batch
            .iter()
            .enumerate()
            .flat_map(|(i, x)| {
                [
                    project(p, &head_forward(p, x, &inst.masks.view0[i])),
                    project(p, &head_forward(p, x, &inst.masks.view1[i])),
                ]
            })
            .collect();
        total += s.gamma * nt_xent(&z, s.tau);
    }
    total
}

/// Returns (oracle loss, analytic loss, analytic gradient, central
/// differences) for one instance.
pub fn compare(inst: &Instance, h: f64) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let batch: Vec<&[f64]> = inst.batch.iter().map(Vec::as_slice).collect();
    let analytic = joint_loss(&inst.params, &batch, &inst.masks, &inst.settings).expect("loss");
    let p_fixed = target(&q_matrix(inst, &inst.params));
    let theta = inst.params.flat();
    let mut probe = inst.params.clone();
    let numeric = (0..theta.len())
        .map(|i| {
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            probe.set_flat(&t);
            let up = oracle_loss(inst, &probe, &p_fixed);
            t[i] = theta[i] - h;
            probe.set_flat(&t);
            let down = oracle_loss(inst, &probe, &p_fixed);
            (up - down) / (2.0 * h)
        })
        .collect();
    (
        oracle_loss(inst, &inst.params, &p_fixed),
        analytic.value,
        analytic.grads.flat(),
        numeric,
    )
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, 1e-8)`. The floor covers instances whose
/// gradient vanishes identically (a single-row batch has `P = Q`).
pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(n).map(|(x, y)| x - y));
    diff / norm(&mut a.iter().copied()).max(norm(&mut n.iter().copied())).max(1e-8)
}

/// Worst relative error over `count` random instances, plus the worst
/// mismatch between oracle and library loss values.
pub fn worst_case(cluster: bool, cl: bool, count: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut value_gap: f64 = 0.0;
    for _ in 0..count {
        let inst = random_instance(&mut rng, cluster, cl);
        let (oracle, value, a, n) = compare(&inst, 1e-4);
        value_gap = value_gap.max((oracle - value).abs() / oracle.abs().max(1.0));
        worst = worst.max(relative_error(&a, &n));
    }
    (worst, value_gap)
}
