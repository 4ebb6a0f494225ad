//! Small fully connected heads with hand-written backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(F::zero()),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative<F: Scalar>(self, x: F, y: F) -> F {
        match self {
            Activation::Tanh => F::one() - y * y,
            Activation::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }
}

/// Affine map `y = W x + b` with `W` stored row-major (`n_out × n_in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<F> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> Dense<F> {
    /// Weights uniform in ±1/√fan_in, zero biases.
    pub fn init(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let weight = (0..n_in * n_out)
            .map(|_| F::lit(rng.random_range(-bound..bound)))
            .collect();
        Self {
            n_in,
            n_out,
            weight,
            bias: vec![F::zero(); n_out],
        }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight: vec![F::zero(); n_in * n_out],
            bias: vec![F::zero(); n_out],
        }
    }

    pub fn forward(&self, x: &[F]) -> Vec<F> {
        self.weight
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, &b)| crate::scalar::dot(row, x) + b)
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[F], dy: &[F], grad: &mut Dense<F>) -> Vec<F> {
        let mut dx = vec![F::zero(); self.n_in];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.weight[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

/// Keep-flags for the hidden units of one forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask(pub Vec<bool>);

impl DropoutMask {
    pub fn keep_all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn sample(n: usize, rate: f64, rng: &mut impl Rng) -> Self {
        Self((0..n).map(|_| rng.random::<f64>() >= rate).collect())
    }
}

/// How a forward pass treats dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Inference: dropout in expectation (identity under inverted scaling).
    Deterministic,
    /// Training: a mask drawn from a generator seeded with the given value.
    Stochastic { seed: u64 },
}

/// `base → hidden → out` with a nonlinearity and dropout on the hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderHead<F> {
    pub hidden: Dense<F>,
    pub output: Dense<F>,
    pub activation: Activation,
    pub dropout: f64,
}

/// Intermediate values of one head forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct HeadPass<F> {
    pub input: Vec<F>,
    pub pre: Vec<F>,
    pub act: Vec<F>,
    /// Hidden activations after masking and 1/(1−ρ) scaling.
    pub dropped: Vec<F>,
    /// Per-unit multiplier applied by dropout (0 or 1/(1−ρ)).
    pub scale: Vec<F>,
    pub output: Vec<F>,
}

impl<F: Scalar> EncoderHead<F> {
    pub fn init(base_dim: usize, hidden_dim: usize, out_dim: usize, activation: Activation, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            hidden: Dense::init(base_dim, hidden_dim, rng),
            output: Dense::init(hidden_dim, out_dim, rng),
            activation,
            dropout,
        }
    }

    pub fn base_dim(&self) -> usize {
        self.hidden.n_in
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.n_out
    }

    pub fn out_dim(&self) -> usize {
        self.output.n_out
    }

    fn check_input(&self, x: &[F]) -> Result<()> {
        if x.len() != self.base_dim() {
            return Err(OodError::Dimension {
                expected: self.base_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass with an explicit mask; `None` means deterministic.
    pub fn pass(&self, x: &[F], mask: Option<&DropoutMask>) -> Result<HeadPass<F>> {
        self.check_input(x)?;
        let pre = self.hidden.forward(x);
        let act: Vec<F> = pre.iter().map(|&v| self.activation.apply(v)).collect();
        let keep_scale = F::lit(1.0 / (1.0 - self.dropout));
        let scale: Vec<F> = match mask {
            None => vec![F::one(); act.len()],
            Some(m) => {
                if m.0.len() != act.len() {
                    return Err(OodError::Dimension {
                        expected: act.len(),
                        got: m.0.len(),
                    });
                }
                m.0.iter()
                    .map(|&k| if k { keep_scale } else { F::zero() })
                    .collect()
            }
        };
        let dropped: Vec<F> = act.iter().zip(&scale).map(|(&a, &s)| a * s).collect();
        let output = self.output.forward(&dropped);
        Ok(HeadPass {
            input: x.to_vec(),
            pre,
            act,
            dropped,
            scale,
            output,
        })
    }

    pub fn forward(&self, x: &[F], mode: ForwardMode) -> Result<Vec<F>> {
        let mask = match mode {
            ForwardMode::Deterministic => None,
            ForwardMode::Stochastic { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Some(DropoutMask::sample(self.hidden_dim(), self.dropout, &mut rng))
            }
        };
        Ok(self.pass(x, mask.as_ref())?.output)
    }

    pub fn backward(&self, pass: &HeadPass<F>, d_out: &[F], grad: &mut EncoderHead<F>) {
        let d_dropped = self.output.backward(&pass.dropped, d_out, &mut grad.output);
        let d_pre: Vec<F> = d_dropped
            .iter()
            .zip(&pass.scale)
            .zip(pass.pre.iter().zip(&pass.act))
            .map(|((&g, &s), (&x, &y))| g * s * self.activation.derivative(x, y))
            .collect();
        self.hidden.backward(&pass.input, &d_pre, &mut grad.hidden);
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: Dense::zeros(self.hidden.n_in, self.hidden.n_out),
            output: Dense::zeros(self.output.n_in, self.output.n_out),
            activation: self.activation,
            dropout: self.dropout,
        }
    }
}

/// Two-layer projection `out → proj_hidden → proj_dim` feeding the
/// contrastive loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead<F> {
    pub first: Dense<F>,
    pub second: Dense<F>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ProjectionPass<F> {
    pub input: Vec<F>,
    pub pre: Vec<F>,
    pub act: Vec<F>,
    pub output: Vec<F>,
}

impl<F: Scalar> ProjectionHead<F> {
    pub fn init(in_dim: usize, hidden: usize, out: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        Self {
            first: Dense::init(in_dim, hidden, rng),
            second: Dense::init(hidden, out, rng),
            activation,
        }
    }

    pub fn pass(&self, e: &[F]) -> ProjectionPass<F> {
        let pre = self.first.forward(e);
        let act: Vec<F> = pre.iter().map(|&v| self.activation.apply(v)).collect();
        let output = self.second.forward(&act);
        ProjectionPass {
            input: e.to_vec(),
            pre,
            act,
            output,
        }
    }

    /// Accumulates gradients and returns `dL/de`.
    pub fn backward(&self, pass: &ProjectionPass<F>, d_out: &[F], grad: &mut ProjectionHead<F>) -> Vec<F> {
        let d_act = self.second.backward(&pass.act, d_out, &mut grad.second);
        let d_pre: Vec<F> = d_act
            .iter()
            .zip(pass.pre.iter().zip(&pass.act))
            .map(|(&g, (&x, &y))| g * self.activation.derivative(x, y))
            .collect();
        self.first.backward(&pass.input, &d_pre, &mut grad.first)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            first: Dense::zeros(self.first.n_in, self.first.n_out),
            second: Dense::zeros(self.second.n_in, self.second.n_out),
            activation: self.activation,
        }
    }
}
