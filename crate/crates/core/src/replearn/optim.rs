use serde::{Deserialize, Serialize};

use super::objective::EncoderParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8) or plain SGD over all tensors.
#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    kind: OptimizerKind,
    lr: F,
    step: i32,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind, lr: f64, params: &EncoderParams<F>) -> Self {
        let zeros: Vec<Vec<F>> = params.tensors().iter().map(|t| vec![F::zero(); t.len()]).collect();
        Self {
            kind,
            lr: F::lit(lr),
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams<F>, grads: &EncoderParams<F>) {
        self.step += 1;
        let (b1, b2, eps) = (F::lit(0.9), F::lit(0.999), F::lit(1e-8));
        let c1 = F::one() - b1.powi(self.step);
        let c2 = F::one() - b2.powi(self.step);
        let grads = grads.tensors();
        for (t, tensor) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[t];
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, &gi) in tensor.iter_mut().zip(g) {
                        *p -= self.lr * gi;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.first[t], &mut self.second[t]);
                    for i in 0..tensor.len() {
                        m[i] = b1 * m[i] + (F::one() - b1) * g[i];
                        v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        tensor[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
