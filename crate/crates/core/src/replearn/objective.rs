//! Joint objective `L = L_cluster + γ·L_CL` over one mini-batch, with
//! gradients for every trainable parameter.

use serde::{Deserialize, Serialize};

use super::losses::{cluster_loss, cluster_loss_grad, contrastive_loss_grad, soft_assign, target_distribution};
use super::network::{DropoutMask, EncoderHead, HeadPass, ProjectionHead};
use crate::error::{OodError, Result};
use crate::scalar::Scalar;

/// Every trainable tensor: encoder head, projection head and centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<F> {
    pub head: EncoderHead<F>,
    pub projection: ProjectionHead<F>,
    pub centroids: Vec<Vec<F>>,
}

impl<F: Scalar> EncoderParams<F> {
    pub fn zeros_like(&self) -> Self {
        Self {
            head: self.head.zeros_like(),
            projection: self.projection.zeros_like(),
            centroids: self.centroids.iter().map(|c| vec![F::zero(); c.len()]).collect(),
        }
    }

    /// Parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut v: Vec<&[F]> = vec![
            &self.head.hidden.weight,
            &self.head.hidden.bias,
            &self.head.output.weight,
            &self.head.output.bias,
            &self.projection.first.weight,
            &self.projection.first.bias,
            &self.projection.second.weight,
            &self.projection.second.bias,
        ];
        v.extend(self.centroids.iter().map(Vec::as_slice));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut v: Vec<&mut [F]> = vec![
            &mut self.head.hidden.weight,
            &mut self.head.hidden.bias,
            &mut self.head.output.weight,
            &mut self.head.output.bias,
            &mut self.projection.first.weight,
            &mut self.projection.first.bias,
            &mut self.projection.second.weight,
            &mut self.projection.second.bias,
        ];
        v.extend(self.centroids.iter_mut().map(Vec::as_mut_slice));
        v
    }

    pub fn flat(&self) -> Vec<F> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, values: &[F]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub cluster_loss: bool,
    pub cl_loss: bool,
    /// Compute `Q` from a dropout-free pass instead of view 0.
    pub deterministic_q: bool,
}

/// Dropout masks for one batch: one per item and view.
#[derive(Debug, Clone)]
pub struct BatchMasks {
    pub view0: Vec<DropoutMask>,
    pub view1: Vec<DropoutMask>,
}

#[derive(Debug, Clone)]
pub struct JointLoss<F> {
    pub value: F,
    pub cluster: F,
    pub contrastive: F,
    pub grads: EncoderParams<F>,
}

/// Loss and gradients for one batch. `P` is treated as a constant and the
/// centroids receive gradient only through `Q`.
pub fn joint_loss<F: Scalar>(
    params: &EncoderParams<F>,
    batch: &[&[F]],
    masks: &BatchMasks,
    settings: &LossSettings,
) -> Result<JointLoss<F>> {
    if batch.is_empty() {
        return Err(OodError::invalid("empty batch"));
    }
    if masks.view0.len() != batch.len() || (settings.cl_loss && masks.view1.len() != batch.len()) {
        return Err(OodError::invalid("one dropout mask per item and view is required"));
    }
    let mut grads = params.zeros_like();
    let head = &params.head;

    let view0: Vec<HeadPass<F>> = batch
        .iter()
        .zip(&masks.view0)
        .map(|(x, m)| head.pass(x, Some(m)))
        .collect::<Result<_>>()?;
    let mut d_view0: Vec<Vec<F>> = vec![vec![F::zero(); head.out_dim()]; batch.len()];

    let mut cluster = F::zero();
    if settings.cluster_loss {
        let det_passes: Option<Vec<HeadPass<F>>> = if settings.deterministic_q {
            Some(batch.iter().map(|x| head.pass(x, None)).collect::<Result<_>>()?)
        } else {
            None
        };
        let q_source = det_passes.as_ref().unwrap_or(&view0);
        let emb: Vec<Vec<F>> = q_source.iter().map(|p| p.output.clone()).collect();
        let alpha = F::lit(settings.alpha);
        let q: Vec<Vec<F>> = emb
            .iter()
            .map(|e| soft_assign(e, &params.centroids, alpha))
            .collect::<Result<_>>()?;
        let p = target_distribution(&q)?;
        cluster = cluster_loss(&p, &q)?.value;
        let (d_emb, d_cent) = cluster_loss_grad(&emb, &params.centroids, &p, &q, alpha);
        for (g, d) in grads.centroids.iter_mut().zip(d_cent) {
            g.copy_from_slice(&d);
        }
        match &det_passes {
            Some(passes) => {
                for (pass, d) in passes.iter().zip(&d_emb) {
                    head.backward(pass, d, &mut grads.head);
                }
            }
            None => {
                for (acc, d) in d_view0.iter_mut().zip(d_emb) {
                    *acc = d;
                }
            }
        }
    }

    let mut contrastive = F::zero();
    if settings.cl_loss {
        let view1: Vec<HeadPass<F>> = batch
            .iter()
            .zip(&masks.view1)
            .map(|(x, m)| head.pass(x, Some(m)))
            .collect::<Result<_>>()?;
        let proj: Vec<_> = view0
            .iter()
            .zip(&view1)
            .flat_map(|(a, b)| [params.projection.pass(&a.output), params.projection.pass(&b.output)])
            .collect();
        let z: Vec<Vec<F>> = proj.iter().map(|p| p.output.clone()).collect();
        if let Some(i) = z.iter().position(|row| row.iter().any(|v| !v.is_finite())) {
            return Err(OodError::Numeric(format!("projection output is not finite (row {i})")));
        }
        if let Some(i) = z.iter().position(|row| row.iter().all(|v| *v == F::zero())) {
            return Err(OodError::Numeric(format!(
                "projection output collapsed to the zero vector (row {i})"
            )));
        }
        let (value, dz) = contrastive_loss_grad(&z, F::lit(settings.tau))?;
        contrastive = value;
        let gamma = F::lit(settings.gamma);
        for (i, v1) in view1.iter().enumerate() {
            for view in 0..2 {
                let row = 2 * i + view;
                let scaled: Vec<F> = dz[row].iter().map(|&g| g * gamma).collect();
                let de = params.projection.backward(&proj[row], &scaled, &mut grads.projection);
                if view == 0 {
                    for (acc, g) in d_view0[i].iter_mut().zip(de) {
                        *acc += g;
                    }
                } else {
                    head.backward(v1, &de, &mut grads.head);
                }
            }
        }
    }

    for (pass, d) in view0.iter().zip(&d_view0) {
        if d.iter().any(|v| *v != F::zero()) {
            head.backward(pass, d, &mut grads.head);
        }
    }

    let value = cluster + F::lit(settings.gamma) * contrastive;
    if !value.is_finite() {
        return Err(OodError::Numeric("joint loss is not finite".into()));
    }
    Ok(JointLoss {
        value,
        cluster,
        contrastive,
        grads,
    })
}
