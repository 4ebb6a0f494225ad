//! Representation learning over frozen base embeddings: a trainable head is
//! fitted by jointly minimizing a clustering KL loss (Student-t soft
//! assignments against a sharpened target) and an NT-Xent contrastive loss
//! whose positive pairs are two dropout views of the same input.

mod losses;
mod network;
mod objective;
mod optim;

pub use losses::{
    cluster_loss, cluster_loss_grad, contrastive_loss, contrastive_loss_grad, soft_assign, target_distribution,
    ClusterLoss,
};
pub use network::{Activation, Dense, DropoutMask, EncoderHead, ForwardMode, HeadPass, ProjectionHead, ProjectionPass};
pub use objective::{joint_loss, BatchMasks, EncoderParams, JointLoss, LossSettings};
pub use optim::{Optimizer, OptimizerKind};

pub use crate::kmeans::{kmeans, kmeans_fit, Centroids, KMeansFit, KMeansParams};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{EmbeddingRow, EmbeddingSet};
use crate::error::{OodError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of clusters.
    pub k: usize,
    /// Weight of the contrastive term.
    pub gamma: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Student-t degrees of freedom.
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub cluster_loss: bool,
    pub cl_loss: bool,
    pub deterministic_q: bool,
    pub dropout: f64,
    pub activation: Activation,
    /// Defaults to the base dimension.
    pub hidden_dim: Option<usize>,
    /// Defaults to the base dimension.
    pub out_dim: Option<usize>,
    /// Defaults to the output dimension.
    pub proj_hidden: Option<usize>,
    /// Defaults to the output dimension.
    pub proj_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 4,
            gamma: 1.0,
            tau: 0.5,
            alpha: 1.0,
            batch_size: 64,
            epochs: 15,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            cluster_loss: true,
            cl_loss: true,
            deterministic_q: false,
            dropout: 0.1,
            activation: Activation::Tanh,
            hidden_dim: None,
            out_dim: None,
            proj_hidden: None,
            proj_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            gamma: self.gamma,
            tau: self.tau,
            alpha: self.alpha,
            cluster_loss: self.cluster_loss,
            cl_loss: self.cl_loss,
            deterministic_q: self.deterministic_q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OodError::invalid(m.to_string()));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.k < 1 || (self.cluster_loss && self.k < 2) {
            return bad("K must be >= 2 when the clustering loss is on");
        }
        if self.batch_size < 1 || (self.cl_loss && self.batch_size < 2) {
            return bad("batch size must be >= 2 when the contrastive loss is on");
        }
        if self.out_dim.is_some_and(|d| d < 2) || self.proj_dim.is_some_and(|d| d < 2) {
            return bad("output and projection dimensions must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub joint: f64,
    pub cluster: f64,
    pub contrastive: f64,
}

/// A trained (or freshly initialized) encoder with its training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState<F> {
    pub params: EncoderParams<F>,
    pub config: TrainConfig,
    pub trace: Vec<EpochLoss>,
}

impl<F: Scalar> EncoderState<F> {
    pub fn head(&self) -> &EncoderHead<F> {
        &self.params.head
    }

    pub fn centroids(&self) -> Centroids<F> {
        Centroids {
            vectors: self.params.centroids.clone(),
        }
    }

    pub fn embed(&self, x: &[F]) -> Result<Vec<F>> {
        self.params.head.forward(x, ForwardMode::Deterministic)
    }

    /// Converts to another scalar type (e.g. for persistence as `f64`).
    pub fn cast<G: Scalar>(&self) -> EncoderState<G> {
        let dense = |d: &Dense<F>| Dense {
            n_in: d.n_in,
            n_out: d.n_out,
            weight: d.weight.iter().map(|&v| G::lit(v.as_f64())).collect(),
            bias: d.bias.iter().map(|&v| G::lit(v.as_f64())).collect(),
        };
        let p = &self.params;
        EncoderState {
            params: EncoderParams {
                head: EncoderHead {
                    hidden: dense(&p.head.hidden),
                    output: dense(&p.head.output),
                    activation: p.head.activation,
                    dropout: p.head.dropout,
                },
                projection: ProjectionHead {
                    first: dense(&p.projection.first),
                    second: dense(&p.projection.second),
                    activation: p.projection.activation,
                },
                centroids: p
                    .centroids
                    .iter()
                    .map(|c| c.iter().map(|&v| G::lit(v.as_f64())).collect())
                    .collect(),
            },
            config: self.config.clone(),
            trace: self.trace.clone(),
        }
    }
}

/// Seeded initialization: head and projection weights, then K-means
/// centroids on the deterministic embeddings of `train`.
pub fn initialize<F: Scalar>(train: &[Vec<F>], cfg: &TrainConfig) -> Result<EncoderParams<F>> {
    cfg.validate()?;
    let base_dim = train
        .first()
        .map(Vec::len)
        .ok_or_else(|| OodError::invalid("no training embeddings"))?;
    if let Some(v) = train.iter().find(|v| v.len() != base_dim) {
        return Err(OodError::Dimension {
            expected: base_dim,
            got: v.len(),
        });
    }
    let hidden = cfg.hidden_dim.unwrap_or(base_dim);
    let out = cfg.out_dim.unwrap_or(base_dim).max(2);
    let proj_hidden = cfg.proj_hidden.unwrap_or(out);
    let proj_dim = cfg.proj_dim.unwrap_or(out).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let head = EncoderHead::init(base_dim, hidden, out, cfg.activation, cfg.dropout, &mut rng);
    let projection = ProjectionHead::init(out, proj_hidden, proj_dim, cfg.activation, &mut rng);
    let embedded: Vec<Vec<F>> = train
        .iter()
        .map(|x| head.forward(x, ForwardMode::Deterministic))
        .collect::<Result<_>>()?;
    let centroids = kmeans(&embedded, cfg.k, cfg.seed, KMeansParams::default())?;
    Ok(EncoderParams {
        head,
        projection,
        centroids: centroids.vectors,
    })
}

fn sample_masks(n: usize, hidden: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<DropoutMask> {
    (0..n).map(|_| DropoutMask::sample(hidden, rate, rng)).collect()
}

/// Trains the head on ID training embeddings. Labels are never consulted.
pub fn train<F: Scalar>(train: &[Vec<F>], cfg: &TrainConfig) -> Result<EncoderState<F>> {
    cfg.validate()?;
    let needed = cfg.k.max(cfg.batch_size);
    if train.len() < needed {
        return Err(OodError::invalid(format!(
            "training needs at least max(K, batch size) = {needed} points, got {}",
            train.len()
        )));
    }
    let mut params = initialize(train, cfg)?;
    let settings = cfg.loss_settings();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params);
    // Separate stream from the one used for initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_d20b);
    let hidden = params.head.hidden_dim();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut joint, mut cluster, mut contrastive, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[F]> = chunk.iter().map(|&i| train[i].as_slice()).collect();
            let masks = BatchMasks {
                view0: sample_masks(batch.len(), hidden, cfg.dropout, &mut rng),
                view1: sample_masks(batch.len(), hidden, cfg.dropout, &mut rng),
            };
            let out = joint_loss(&params, &batch, &masks, &settings).map_err(|e| match e {
                OodError::Numeric(m) => OodError::Numeric(format!(
                    "epoch {epoch}, batch {batches}: {m}; loss trace so far: {trace:?}"
                )),
                other => other,
            })?;
            optimizer.step(&mut params, &out.grads);
            if !params.is_finite() {
                return Err(OodError::Numeric(format!(
                    "parameters diverged at epoch {epoch}; loss trace so far: {trace:?}"
                )));
            }
            joint += out.value.as_f64();
            cluster += out.cluster.as_f64();
            contrastive += out.contrastive.as_f64();
            batches += 1;
        }
        let b = batches.max(1) as f64;
        let row = EpochLoss {
            epoch,
            joint: joint / b,
            cluster: cluster / b,
            contrastive: contrastive / b,
        };
        log::debug!("epoch {epoch}: {row:?}");
        trace.push(row);
    }
    Ok(EncoderState {
        params,
        config: cfg.clone(),
        trace,
    })
}

/// Deterministic embeddings of every row.
pub fn embed_corpus<F: Scalar>(state: &EncoderState<F>, base: &EmbeddingSet<F>) -> Result<EmbeddingSet<F>> {
    let head = state.head();
    if base.dim != head.base_dim() {
        return Err(OodError::Dimension {
            expected: head.base_dim(),
            got: base.dim,
        });
    }
    let rows = base
        .rows
        .iter()
        .map(|r| {
            Ok(EmbeddingRow {
                id: r.id.clone(),
                vector: state.embed(&r.vector)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingSet {
        dim: head.out_dim(),
        rows,
    })
}

/// Full-set clustering objective with deterministic embeddings, for
/// monitoring: `P` is built from `Q` over all points at once.
pub fn full_cluster_loss<F: Scalar>(params: &EncoderParams<F>, data: &[Vec<F>], alpha: f64) -> Result<F> {
    let q: Vec<Vec<F>> = data
        .iter()
        .map(|x| {
            let e = params.head.forward(x, ForwardMode::Deterministic)?;
            soft_assign(&e, &params.centroids, F::lit(alpha))
        })
        .collect::<Result<_>>()?;
    let p = target_distribution(&q)?;
    Ok(cluster_loss(&p, &q)?.value)
}
