//! Grid search over cluster count and contrastive weight, selected on
//! validation AUPR_OOD.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::metrics::ScoredSet;
use super::report::MetricSet;
use crate::error::{OodError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub gamma: f64,
}

/// Cartesian product of the two axes, K-major.
pub fn grid(ks: &[usize], gammas: &[f64]) -> Vec<GridPoint> {
    ks.iter()
        .flat_map(|&k| gammas.iter().map(move |&gamma| GridPoint { k, gamma }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: GridPoint,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub best: SweepRow,
    pub table: Vec<SweepRow>,
}

/// Orders rows so that the preferred one compares greatest: higher
/// AUPR_OOD, then higher AUROC, then smaller K.
fn preference(a: &SweepRow, b: &SweepRow) -> Ordering {
    a.metrics
        .aupr_ood
        .total_cmp(&b.metrics.aupr_ood)
        .then(a.metrics.auroc.total_cmp(&b.metrics.auroc))
        .then(b.point.k.cmp(&a.point.k))
}

/// Picks the best row; on a complete tie the earliest grid point wins.
pub fn select_best(table: &[SweepRow]) -> Option<&SweepRow> {
    table.iter().fold(None, |best: Option<&SweepRow>, row| match best {
        Some(b) if preference(row, b) != Ordering::Greater => Some(b),
        _ => Some(row),
    })
}

/// Runs `evaluate` for each grid point on `threads` worker threads and
/// selects the best configuration. Results are collected in grid order, so
/// the outcome does not depend on the thread count.
pub fn sweep<F, E>(points: &[GridPoint], threads: usize, evaluate: E) -> Result<SweepOutcome>
where
    F: Scalar,
    E: Fn(&GridPoint) -> Result<ScoredSet<F>> + Sync,
{
    if points.is_empty() {
        return Err(OodError::invalid("sweep grid is empty"));
    }
    let run = |p: &GridPoint| -> Result<SweepRow> {
        let scored = evaluate(p).map_err(|e| with_coords(p, e))?;
        let metrics = MetricSet::compute(&scored).map_err(|e| with_coords(p, e))?;
        Ok(SweepRow { point: *p, metrics })
    };
    let threads = threads.clamp(1, points.len());
    let results: Vec<Result<SweepRow>> = if threads == 1 {
        points.iter().map(run).collect()
    } else {
        let chunk = points.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = points
                .chunks(chunk)
                .map(|c| scope.spawn(move || c.iter().map(run).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    };
    let table = results.into_iter().collect::<Result<Vec<_>>>()?;
    let best = select_best(&table).expect("non-empty table").clone();
    Ok(SweepOutcome { best, table })
}

fn with_coords(p: &GridPoint, e: OodError) -> OodError {
    let msg = format!("grid point K={} gamma={}: {e}", p.k, p.gamma);
    match e.class() {
        crate::error::ErrorClass::Numeric => OodError::Numeric(msg),
        crate::error::ErrorClass::Data => OodError::InvalidInput(msg),
    }
}
