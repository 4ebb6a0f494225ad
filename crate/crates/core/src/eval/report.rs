use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{aupr_ood, auroc, fpr_at_tpr, ScoredSet};
use crate::error::{OodError, Result};
use crate::scalar::Scalar;

pub type ConfigSnapshot = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub auroc: f64,
    pub aupr_ood: f64,
    pub fpr_at_95tpr: f64,
}

impl MetricSet {
    pub fn compute<F: Scalar>(s: &ScoredSet<F>) -> Result<Self> {
        Ok(Self {
            auroc: auroc(s)?.as_f64(),
            aupr_ood: aupr_ood(s)?.as_f64(),
            fpr_at_95tpr: fpr_at_tpr(s, F::lit(0.95))?.as_f64(),
        })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.auroc, self.aupr_ood, self.fpr_at_95tpr]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self {
            auroc: a[0],
            aupr_ood: a[1],
            fpr_at_95tpr: a[2],
        }
    }
}

/// Metrics for one evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricSet,
    pub n_id: usize,
    pub n_ood: usize,
    #[serde(default)]
    pub config: ConfigSnapshot,
}

impl EvalReport {
    pub fn evaluate<F: Scalar>(s: &ScoredSet<F>, config: ConfigSnapshot) -> Result<Self> {
        Ok(Self {
            metrics: MetricSet::compute(s)?,
            n_id: s.id_scores.len(),
            n_ood: s.ood_scores.len(),
            config,
        })
    }
}

/// Mean and population standard deviation across splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub per_split: Vec<EvalReport>,
    pub mean: MetricSet,
    pub std: MetricSet,
}

pub fn aggregate_splits(reports: &[EvalReport]) -> Result<SummaryReport> {
    let first = reports
        .first()
        .ok_or_else(|| OodError::invalid("no reports to aggregate"))?;
    let shape: Vec<&String> = first.config.keys().collect();
    for r in &reports[1..] {
        if r.config.keys().collect::<Vec<_>>() != shape {
            return Err(OodError::invalid(
                "reports were produced with differently shaped configurations",
            ));
        }
    }
    let n = reports.len() as f64;
    let mut mean = [0.0; 3];
    for r in reports {
        for (m, v) in mean.iter_mut().zip(r.metrics.as_array()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for r in reports {
        for ((s, v), m) in var.iter_mut().zip(r.metrics.as_array()).zip(mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.map(|s| (s / n).sqrt());
    Ok(SummaryReport {
        per_split: reports.to_vec(),
        mean: MetricSet::from_array(mean),
        std: MetricSet::from_array(std),
    })
}

impl SummaryReport {
    /// Flat table: one row per split followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["split", "auroc", "aupr_ood", "fpr_at_95tpr", "n_id", "n_ood"])
            .expect("in-memory csv");
        for (i, r) in self.per_split.iter().enumerate() {
            let m = r.metrics;
            w.write_record([
                i.to_string(),
                m.auroc.to_string(),
                m.aupr_ood.to_string(),
                m.fpr_at_95tpr.to_string(),
                r.n_id.to_string(),
                r.n_ood.to_string(),
            ])
            .expect("in-memory csv");
        }
        for (name, m) in [("mean", self.mean), ("std", self.std)] {
            w.write_record([
                name.to_string(),
                m.auroc.to_string(),
                m.aupr_ood.to_string(),
                m.fpr_at_95tpr.to_string(),
                String::new(),
                String::new(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(auroc: f64) -> EvalReport {
        EvalReport {
            metrics: MetricSet {
                auroc,
                aupr_ood: auroc,
                fpr_at_95tpr: 1.0 - auroc,
            },
            n_id: 10,
            n_ood: 5,
            config: ConfigSnapshot::from([("k".to_string(), serde_json::json!(4))]),
        }
    }

    #[test]
    fn single_report_has_zero_std() {
        let s = aggregate_splits(&[report(0.9)]).unwrap();
        assert_eq!(s.mean.auroc, 0.9);
        assert_eq!(s.std.auroc, 0.0);
    }

    #[test]
    fn mean_and_population_std() {
        let s = aggregate_splits(&[report(0.9), report(0.7)]).unwrap();
        assert!((s.mean.auroc - 0.8).abs() < 1e-12);
        assert!((s.std.auroc - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mismatched_configs_rejected() {
        let mut other = report(0.7);
        other.config.insert("gamma".into(), serde_json::json!(1.0));
        assert!(aggregate_splits(&[report(0.9), other]).is_err());
        assert!(aggregate_splits(&[]).is_err());
    }

    #[test]
    fn csv_has_split_and_summary_rows() {
        let csv = aggregate_splits(&[report(0.9), report(0.7)]).unwrap().to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(3).unwrap().starts_with("mean,"));
    }
}
