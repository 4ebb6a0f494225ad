use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::scalar::Scalar;

/// Per-record likelihood statistics, all in the natural-log domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodScore {
    pub id: String,
    pub log_ln: f64,
    pub log_lr: Option<f64>,
    pub log_nlr: Option<f64>,
    pub length: usize,
}

/// An OOD score; higher means more likely out-of-domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodScore {
    pub id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
}

fn check_stream<F: Scalar>(logprobs: &[F]) -> Result<()> {
    if logprobs.is_empty() {
        return Err(OodError::invalid("empty log-probability sequence"));
    }
    if let Some(bad) = logprobs.iter().find(|v| !v.is_finite() || **v > F::zero()) {
        return Err(OodError::invalid(format!("invalid log-probability {bad}")));
    }
    Ok(())
}

fn check_pair<F: Scalar>(id: &[F], bg: &[F]) -> Result<()> {
    check_stream(id)?;
    check_stream(bg)?;
    if id.len() != bg.len() {
        return Err(OodError::invalid(format!(
            "in-domain stream has {} tokens, background {}",
            id.len(),
            bg.len()
        )));
    }
    Ok(())
}

fn sum<F: Scalar>(v: &[F]) -> F {
    v.iter().copied().sum()
}

fn mean<F: Scalar>(v: &[F]) -> F {
    sum(v) / F::from_count(v.len())
}

/// Log of the length-normalized likelihood: the mean token log-probability.
pub fn score_ln<F: Scalar>(logprobs: &[F]) -> Result<F> {
    check_stream(logprobs)?;
    Ok(mean(logprobs))
}

/// Log likelihood ratio between the in-domain and background streams.
pub fn score_lr<F: Scalar>(logprobs_id: &[F], logprobs_bg: &[F]) -> Result<F> {
    check_pair(logprobs_id, logprobs_bg)?;
    Ok(sum(logprobs_id) - sum(logprobs_bg))
}

/// Log ratio of the length-normalized likelihoods.
pub fn score_nlr<F: Scalar>(logprobs_id: &[F], logprobs_bg: &[F]) -> Result<F> {
    check_pair(logprobs_id, logprobs_bg)?;
    Ok(mean(logprobs_id) - mean(logprobs_bg))
}

/// All statistics for one record; ratio fields are present when a
/// background stream is supplied.
pub fn likelihood_score(id: &str, logprobs_id: &[f64], logprobs_bg: Option<&[f64]>) -> Result<LikelihoodScore> {
    let log_ln = score_ln(logprobs_id)?;
    let (log_lr, log_nlr) = match logprobs_bg {
        Some(bg) => (Some(score_lr(logprobs_id, bg)?), Some(score_nlr(logprobs_id, bg)?)),
        None => (None, None),
    };
    Ok(LikelihoodScore {
        id: id.to_string(),
        log_ln,
        log_lr,
        log_nlr,
        length: logprobs_id.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodMethod {
    Ln,
    Lr,
    Nlr,
    LrWs,
}

impl LikelihoodScore {
    /// Negated statistic, so that higher means more OOD.
    pub fn ood_score(&self, method: LikelihoodMethod) -> Result<OodScore> {
        let value = match method {
            LikelihoodMethod::Ln => Some(self.log_ln),
            LikelihoodMethod::Lr | LikelihoodMethod::LrWs => self.log_lr,
            LikelihoodMethod::Nlr => self.log_nlr,
        }
        .ok_or_else(|| OodError::invalid(format!("{method:?} needs a background stream")))?;
        Ok(OodScore {
            id: self.id.clone(),
            score: -value,
            length: Some(self.length),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_constant_sequence() {
        let half = 0.5f64.ln();
        assert!((score_ln(&[half; 3]).unwrap() - half).abs() < 1e-15);
        assert!((half - (-0.693147)).abs() < 1e-6);
    }

    #[test]
    fn ln_mixed_sequence() {
        let v = score_ln(&[0.5f64.ln(), 0.25f64.ln()]).unwrap();
        // (ln 0.5 + ln 0.25) / 2 = 1.5 · ln 0.5; geometric mean √0.125.
        assert!((v - 1.5 * 0.5f64.ln()).abs() < 1e-15);
        assert!((v - (-1.039721)).abs() < 1e-6);
        assert!((v.exp() - 0.125f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ln_rejects_bad_streams() {
        assert!(score_ln::<f64>(&[]).is_err());
        assert!(score_ln(&[0.1f64]).is_err());
        assert!(score_ln(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn lr_examples() {
        let s = [-1.0f64, -0.5, -2.0];
        assert_eq!(score_lr(&s, &s).unwrap(), 0.0);
        assert_eq!(score_lr(&[-1.0f64, -2.0], &[-2.0, -3.0]).unwrap(), 2.0);
        assert!(score_lr(&[-1.0f64; 4], &[-1.0; 5]).is_err());
    }

    #[test]
    fn nlr_examples() {
        let s = [-1.0f64, -0.5, -2.0];
        assert_eq!(score_nlr(&s, &s).unwrap(), 0.0);
        assert_eq!(score_nlr(&[-1.0f64, -1.0], &[-2.0, -2.0]).unwrap(), 1.0);
        assert!(score_nlr::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn orientation_is_negated() {
        let s = likelihood_score("a", &[-1.0, -3.0], Some(&[-2.0, -2.0])).unwrap();
        assert_eq!(s.ood_score(LikelihoodMethod::Ln).unwrap().score, 2.0);
        assert_eq!(s.ood_score(LikelihoodMethod::Lr).unwrap().score, 0.0);
        let no_bg = likelihood_score("b", &[-1.0], None).unwrap();
        assert!(no_bg.ood_score(LikelihoodMethod::Nlr).is_err());
    }
}
