//! Threshold-free detection metrics. OOD is the positive class and higher
//! scores mean "more likely OOD"; a sample is flagged when `score >= θ`.

use std::cmp::Ordering;

use crate::error::{OodError, Result};
use crate::scalar::Scalar;

/// Scores split by ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet<F> {
    pub ood_scores: Vec<F>,
    pub id_scores: Vec<F>,
}

impl<F: Scalar> ScoredSet<F> {
    pub fn new(ood_scores: Vec<F>, id_scores: Vec<F>) -> Self {
        Self {
            ood_scores,
            id_scores,
        }
    }

    /// Builds a set from `(score, is_ood)` pairs.
    pub fn from_labeled(pairs: impl IntoIterator<Item = (F, bool)>) -> Self {
        let mut s = Self::new(Vec::new(), Vec::new());
        for (v, ood) in pairs {
            if ood {
                s.ood_scores.push(v);
            } else {
                s.id_scores.push(v);
            }
        }
        s
    }

    fn check(&self) -> Result<()> {
        if self.ood_scores.is_empty() || self.id_scores.is_empty() {
            return Err(OodError::invalid(format!(
                "metrics need both classes (ood = {}, id = {})",
                self.ood_scores.len(),
                self.id_scores.len()
            )));
        }
        let finite = |v: &[F]| v.iter().all(|x| x.is_finite());
        if !finite(&self.ood_scores) || !finite(&self.id_scores) {
            return Err(OodError::invalid("scores must be finite"));
        }
        Ok(())
    }

    /// All scores tagged with their class, sorted descending.
    fn sorted_desc(&self) -> Vec<(F, bool)> {
        let mut all: Vec<(F, bool)> = self
            .ood_scores
            .iter()
            .map(|&s| (s, true))
            .chain(self.id_scores.iter().map(|&s| (s, false)))
            .collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        all
    }
}

/// Groups of equal score in descending order: `(n_ood, n_id)` per group.
fn tie_groups<F: Scalar>(sorted: &[(F, bool)]) -> Vec<(usize, usize)> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0, 0);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        groups.push((pos, neg));
        i = j;
    }
    groups
}

/// Probability that a random OOD score exceeds a random ID score, ties
/// counting one half. Computed from tie groups in O(n log n).
pub fn auroc<F: Scalar>(s: &ScoredSet<F>) -> Result<F> {
    s.check()?;
    let n_pos = s.ood_scores.len();
    let n_neg = s.id_scores.len();
    // Walk groups from the highest score down; every ID score in a group
    // loses to all OOD scores seen in earlier groups and ties with the
    // OOD scores of its own group. Counts stay integral (in halves).
    let mut pos_above: u128 = 0;
    let mut twice_wins: u128 = 0;
    for (pos, neg) in tie_groups(&s.sorted_desc()) {
        twice_wins += neg as u128 * (2 * pos_above + pos as u128);
        pos_above += pos as u128;
    }
    let denom = 2 * n_pos as u128 * n_neg as u128;
    Ok(F::lit(twice_wins as f64) / F::lit(denom as f64))
}

/// Average precision with OOD as the positive class; tied scores form one
/// threshold step.
pub fn aupr_ood<F: Scalar>(s: &ScoredSet<F>) -> Result<F> {
    s.check()?;
    let total_pos = F::from_count(s.ood_scores.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = F::zero();
    for (pos, neg) in tie_groups(&s.sorted_desc()) {
        tp += pos;
        fp += neg;
        if pos > 0 {
            let precision = F::from_count(tp) / F::from_count(tp + fp);
            ap += F::from_count(pos) / total_pos * precision;
        }
    }
    Ok(ap)
}

/// FPR at the largest threshold whose TPR reaches `level`.
///
/// With `level == 0` every threshold qualifies and the maximum observed
/// score is used.
pub fn fpr_at_tpr<F: Scalar>(s: &ScoredSet<F>, level: F) -> Result<F> {
    s.check()?;
    if !(level >= F::zero() && level <= F::one()) {
        return Err(OodError::invalid("TPR level must lie in [0, 1]"));
    }
    let mut ood = s.ood_scores.clone();
    ood.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let n_pos = ood.len();
    let needed = (0..=n_pos)
        .find(|&c| F::from_count(c) / F::from_count(n_pos) >= level)
        .unwrap_or(n_pos);
    let theta = if needed == 0 {
        s.ood_scores
            .iter()
            .chain(&s.id_scores)
            .copied()
            .fold(F::neg_infinity(), F::max)
    } else {
        ood[needed - 1]
    };
    let flagged = s.id_scores.iter().filter(|&&v| v >= theta).count();
    Ok(F::from_count(flagged) / F::from_count(s.id_scores.len()))
}

/// Threshold η such that at most `id_fpr_budget` of the ID validation scores
/// exceed it: the nearest-rank (1 − budget) quantile.
pub fn calibrate_threshold<F: Scalar>(id_valid_scores: &[F], id_fpr_budget: F) -> Result<F> {
    if id_valid_scores.is_empty() {
        return Err(OodError::invalid("cannot calibrate a threshold on no scores"));
    }
    if !(id_fpr_budget >= F::zero() && id_fpr_budget < F::one()) {
        return Err(OodError::invalid("FPR budget must lie in [0, 1)"));
    }
    let mut sorted = id_valid_scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = sorted.len();
    let q = (F::one() - id_fpr_budget).as_f64();
    // Nearest rank; the small slack absorbs representation error in q·n.
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}
