//! The two-step procedure end to end: adapt representations on ID training
//! embeddings, fit the density, calibrate a threshold on ID validation
//! scores, then score and evaluate.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, EmbeddingSet, ModelBundle, ScoringMethod, Split};
use crate::density::{fit_gmm, Decision, GmmModel, GmmParams};
use crate::error::{OodError, Result};
use crate::eval::{calibrate_threshold, ConfigSnapshot, EvalReport, ScoredSet};
use crate::likelihood::{score_ln, OodScore};
use crate::replearn::{train, EncoderState, TrainConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// `None` skips representation learning (raw embeddings + GMM).
    pub train: Option<TrainConfig>,
    pub gmm: GmmParams,
    pub fpr_budget: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: Some(TrainConfig::default()),
            gmm: GmmParams::default(),
            fpr_budget: 0.05,
        }
    }
}

impl PipelineConfig {
    pub fn snapshot(&self) -> ConfigSnapshot {
        let mut out = ConfigSnapshot::new();
        out.insert("train".into(), serde_json::to_value(&self.train).expect("serializable"));
        out.insert("gmm".into(), serde_json::to_value(self.gmm).expect("serializable"));
        out.insert("fpr_budget".into(), self.fpr_budget.into());
        out
    }
}

/// A fitted detector: optional encoder, density and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector<F> {
    pub encoder: Option<EncoderState<F>>,
    pub gmm: GmmModel<F>,
    pub threshold: f64,
}

impl<F: Scalar> Detector<F> {
    pub fn ood_score(&self, base: &[F]) -> Result<F> {
        match &self.encoder {
            Some(state) => self.gmm.ood_score(&state.embed(base)?),
            None => self.gmm.ood_score(base),
        }
    }

    /// Scores every embedding row in the given split.
    pub fn score_split(&self, dataset: &Dataset, base: &EmbeddingSet<F>, split: Split) -> Result<Vec<OodScore>> {
        dataset
            .in_split(split)
            .map(|r| {
                let v = base.get(&r.id).ok_or_else(|| missing(&r.id))?;
                Ok(OodScore {
                    id: r.id.clone(),
                    score: self.ood_score(v)?.as_f64(),
                    length: Some(r.token_len()),
                })
            })
            .collect()
    }

    pub fn to_bundle(&self, seed: u64, config: ConfigSnapshot) -> ModelBundle {
        let mut bundle = ModelBundle::new(seed);
        bundle.method = ScoringMethod::Density;
        bundle.encoder_state = self.encoder.as_ref().map(EncoderState::cast);
        bundle.gmm = Some(cast_gmm(&self.gmm));
        bundle.threshold = Some(self.threshold);
        bundle.config = config;
        bundle
    }
}

pub fn cast_gmm<F: Scalar, G: Scalar>(g: &GmmModel<F>) -> GmmModel<G> {
    let c = |v: &F| G::lit(v.as_f64());
    GmmModel {
        weights: g.weights.iter().map(c).collect(),
        means: g.means.iter().map(|m| m.iter().map(c).collect()).collect(),
        variances: g.variances.iter().map(|m| m.iter().map(c).collect()).collect(),
        var_floor: c(&g.var_floor),
        fit_log: g.fit_log.iter().map(c).collect(),
    }
}

fn missing(id: &str) -> OodError {
    OodError::invalid(format!("no embedding for record `{id}`"))
}

/// Base vectors of the label-free training view.
pub fn training_vectors<F: Scalar>(dataset: &Dataset, base: &EmbeddingSet<F>) -> Result<Vec<Vec<F>>> {
    dataset
        .training_view()
        .ids
        .iter()
        .map(|id| base.get(id).map(<[F]>::to_vec).ok_or_else(|| missing(id)))
        .collect()
}

/// Trains (optionally), fits the density and calibrates the threshold on ID
/// validation scores.
pub fn fit_detector<F: Scalar>(dataset: &Dataset, base: &EmbeddingSet<F>, cfg: &PipelineConfig) -> Result<Detector<F>> {
    let train_vecs = training_vectors(dataset, base)?;
    if train_vecs.is_empty() {
        return Err(OodError::invalid("training split has no ID records"));
    }
    let encoder = cfg.train.as_ref().map(|tc| train(&train_vecs, tc)).transpose()?;
    fit_density_stage(dataset, base, encoder, &cfg.gmm, cfg.fpr_budget)
}

/// Fits the density on (optionally adapted) training embeddings and
/// calibrates the threshold on ID validation scores. Falls back to training
/// scores when the validation split has no ID records.
pub fn fit_density_stage<F: Scalar>(
    dataset: &Dataset,
    base: &EmbeddingSet<F>,
    encoder: Option<EncoderState<F>>,
    gmm: &GmmParams,
    fpr_budget: f64,
) -> Result<Detector<F>> {
    let train_vecs = training_vectors(dataset, base)?;
    if train_vecs.is_empty() {
        return Err(OodError::invalid("training split has no ID records"));
    }
    let adapted = match &encoder {
        Some(state) => train_vecs.iter().map(|v| state.embed(v)).collect::<Result<Vec<_>>>()?,
        None => train_vecs,
    };
    let gmm = fit_gmm(&adapted, gmm)?;
    let mut detector = Detector {
        encoder,
        gmm,
        threshold: f64::INFINITY,
    };
    let valid_id: Vec<f64> = detector
        .score_split(dataset, base, Split::Valid)?
        .into_iter()
        .zip(dataset.in_split(Split::Valid))
        .filter(|(_, r)| r.is_ood != Some(true))
        .map(|(s, _)| s.score)
        .collect();
    let calib = if valid_id.is_empty() {
        log::warn!("no ID validation records; calibrating the threshold on training scores");
        adapted
            .iter()
            .map(|v| detector.gmm.ood_score(v).map(F::as_f64))
            .collect::<Result<Vec<_>>>()?
    } else {
        valid_id
    };
    detector.threshold = calibrate_threshold(&calib, fpr_budget)?;
    Ok(detector)
}

/// Pairs scores with the `is_ood` flags of their records; unflagged records
/// are skipped.
pub fn scored_set(dataset: &Dataset, scores: &[OodScore]) -> Result<ScoredSet<f64>> {
    let index = dataset.id_index();
    let mut pairs = Vec::with_capacity(scores.len());
    for s in scores {
        let r = index
            .get(s.id.as_str())
            .ok_or_else(|| OodError::invalid(format!("score for unknown record `{}`", s.id)))?;
        if let Some(flag) = r.is_ood {
            pairs.push((s.score, flag));
        }
    }
    Ok(ScoredSet::from_labeled(pairs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome<F> {
    pub detector: Detector<F>,
    pub scores: Vec<OodScore>,
    pub report: EvalReport,
}

/// Full run: fit on train/valid, then score and evaluate `eval_split`.
pub fn run_pipeline<F: Scalar>(
    dataset: &Dataset,
    base: &EmbeddingSet<F>,
    cfg: &PipelineConfig,
    eval_split: Split,
) -> Result<PipelineOutcome<F>> {
    let detector = fit_detector(dataset, base, cfg)?;
    let scores = detector.score_split(dataset, base, eval_split)?;
    let report = EvalReport::evaluate(&scored_set(dataset, &scores)?, cfg.snapshot())?;
    Ok(PipelineOutcome {
        detector,
        scores,
        report,
    })
}

/// Immutable scoring snapshot of a bundle, shared by the `score` command and
/// the HTTP service.
#[derive(Debug, Clone, PartialEq)]
pub struct ServingModel {
    pub method: ScoringMethod,
    pub detector: Option<Detector<f64>>,
    pub threshold: f64,
}

impl ServingModel {
    pub fn from_bundle(bundle: &ModelBundle) -> Result<Self> {
        let threshold = bundle.require_serving()?;
        let detector = match (bundle.method, &bundle.gmm) {
            (ScoringMethod::Density, Some(gmm)) => Some(Detector {
                encoder: bundle.encoder_state.clone(),
                gmm: gmm.clone(),
                threshold,
            }),
            _ => None,
        };
        Ok(Self {
            method: bundle.method,
            detector,
            threshold,
        })
    }

    /// Dimension of the base embeddings the model accepts, if it scores embeddings.
    pub fn input_dim(&self) -> Option<usize> {
        self.detector.as_ref().map(|d| match &d.encoder {
            Some(state) => state.head().base_dim(),
            None => d.gmm.dim(),
        })
    }

    pub fn decide_embedding(&self, x: &[f64]) -> Result<Decision> {
        let detector = self
            .detector
            .as_ref()
            .ok_or_else(|| OodError::invalid("this model scores log-probabilities, not embeddings"))?;
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(OodError::invalid(format!("non-finite embedding component {bad}")));
        }
        match &detector.encoder {
            Some(state) => detector.gmm.decide(&state.embed(x)?, self.threshold),
            None => detector.gmm.decide(x, self.threshold),
        }
    }

    pub fn decide_logprobs(&self, logprobs: &[f64]) -> Result<Decision> {
        if self.method != ScoringMethod::Ln {
            return Err(OodError::invalid("this model scores embeddings, not log-probabilities"));
        }
        let ood_score = -score_ln(logprobs)?;
        Ok(Decision {
            is_ood: ood_score > self.threshold,
            ood_score,
        })
    }
}
