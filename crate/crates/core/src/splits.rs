//! ID/OOD class partitions built from labeled datasets.
//!
//! Two protocols are supported. The coverage protocol shuffles the class
//! list and keeps the shortest prefix whose training points reach a share
//! `coverage`; the fixed protocol draws a given number of OOD classes
//! uniformly. In both cases OOD training records are dropped and
//! validation/test records are flagged with `is_ood`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, Record, Split};
use crate::error::{OodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "protocol")]
pub enum Protocol {
    Coverage { coverage: f64 },
    Fixed { n_ood_classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub protocol: Protocol,
    pub id_classes: BTreeSet<String>,
    pub ood_classes: BTreeSet<String>,
    /// Share of (labeled) training points that belong to `id_classes`.
    pub coverage: f64,
}

const MAX_SHUFFLES: usize = 10_000;

fn train_counts(dataset: &Dataset) -> Result<BTreeMap<String, usize>> {
    let mut counts = BTreeMap::new();
    for r in dataset.in_split(Split::Train) {
        let label = r
            .label
            .as_ref()
            .ok_or_else(|| OodError::invalid(format!("train record `{}` has no label", r.id)))?;
        *counts.entry(label.clone()).or_insert(0) += 1;
    }
    Ok(counts)
}

fn all_labels(dataset: &Dataset) -> BTreeSet<String> {
    dataset
        .records
        .iter()
        .filter_map(|r| r.label.clone())
        .collect()
}

fn share(count: usize, total: usize) -> f64 {
    count as f64 / total as f64
}

/// Length of the shortest prefix of `ordered_counts` whose cumulative share
/// reaches `coverage`.
pub fn coverage_prefix(ordered_counts: &[usize], coverage: f64) -> usize {
    let total: usize = ordered_counts.iter().sum();
    let mut cum = 0;
    for (i, c) in ordered_counts.iter().enumerate() {
        cum += c;
        if share(cum, total) >= coverage {
            return i + 1;
        }
    }
    ordered_counts.len()
}

fn check_classes(dataset: &Dataset) -> Result<(BTreeMap<String, usize>, Vec<String>)> {
    let counts = train_counts(dataset)?;
    let mut labels = all_labels(dataset);
    labels.extend(counts.keys().cloned());
    if labels.len() < 2 {
        return Err(OodError::invalid(format!(
            "need at least 2 distinct labels, found {}",
            labels.len()
        )));
    }
    Ok((counts, labels.into_iter().collect()))
}

fn spec_from(
    seed: u64,
    protocol: Protocol,
    id: &[String],
    ood: &[String],
    counts: &BTreeMap<String, usize>,
    coverage: Option<f64>,
) -> SplitSpec {
    let id_classes: BTreeSet<String> = id.iter().cloned().collect();
    let total: usize = counts.values().sum();
    let covered: usize = id_classes.iter().filter_map(|c| counts.get(c)).sum();
    SplitSpec {
        seed,
        protocol,
        id_classes,
        ood_classes: ood.iter().cloned().collect(),
        coverage: coverage.unwrap_or_else(|| if total == 0 { 0.0 } else { share(covered, total) }),
    }
}

/// Chooses the class partition only; see [`make_coverage_split`].
pub fn coverage_spec(dataset: &Dataset, coverage: f64, seed: u64) -> Result<SplitSpec> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(OodError::invalid(format!("coverage {coverage} outside (0, 1]")));
    }
    let (counts, labels) = check_classes(dataset)?;
    let total: usize = counts.values().sum();
    // A permutation leaves an OOD class iff the classes before its last
    // element already reach the coverage.
    let feasible = labels
        .iter()
        .any(|l| share(total - counts.get(l).copied().unwrap_or(0), total) >= coverage);
    if !feasible {
        return Err(OodError::invalid(format!(
            "no class permutation reaches coverage {coverage} while leaving an OOD class"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = labels;
    for _ in 0..MAX_SHUFFLES {
        order.shuffle(&mut rng);
        let ordered: Vec<usize> = order.iter().map(|l| counts.get(l).copied().unwrap_or(0)).collect();
        let cut = coverage_prefix(&ordered, coverage);
        if cut < order.len() {
            let (id, ood) = order.split_at(cut);
            return Ok(spec_from(seed, Protocol::Coverage { coverage }, id, ood, &counts, Some(coverage)));
        }
    }
    Err(OodError::invalid("exhausted class permutations without leaving an OOD class"))
}

/// Chooses the class partition only; see [`make_fixed_ood_split`].
pub fn fixed_ood_spec(dataset: &Dataset, n_ood_classes: usize, seed: u64) -> Result<SplitSpec> {
    let (counts, labels) = check_classes(dataset)?;
    if n_ood_classes < 1 || n_ood_classes >= labels.len() {
        return Err(OodError::invalid(format!(
            "n_ood_classes = {n_ood_classes} must lie in [1, {})",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = labels;
    order.shuffle(&mut rng);
    let (ood, id) = order.split_at(n_ood_classes);
    Ok(spec_from(seed, Protocol::Fixed { n_ood_classes }, id, ood, &counts, None))
}

/// Drops OOD training records and flags validation/test records.
pub fn apply_split(dataset: &Dataset, spec: &SplitSpec) -> Dataset {
    let records = dataset
        .records
        .iter()
        .filter_map(|r| {
            let is_ood = r
                .label
                .as_ref()
                .is_some_and(|l| spec.ood_classes.contains(l));
            match r.split {
                Split::Train if is_ood => None,
                Split::Train => Some(Record {
                    is_ood: Some(false),
                    ..r.clone()
                }),
                _ => Some(Record {
                    is_ood: Some(is_ood),
                    ..r.clone()
                }),
            }
        })
        .collect();
    Dataset { records }
}

pub fn make_coverage_split(dataset: &Dataset, coverage: f64, seed: u64) -> Result<(SplitSpec, Dataset)> {
    let spec = coverage_spec(dataset, coverage, seed)?;
    let out = apply_split(dataset, &spec);
    Ok((spec, out))
}

pub fn make_fixed_ood_split(dataset: &Dataset, n_ood_classes: usize, seed: u64) -> Result<(SplitSpec, Dataset)> {
    let spec = fixed_ood_spec(dataset, n_ood_classes, seed)?;
    let out = apply_split(dataset, &spec);
    Ok((spec, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitFamily {
    pub splits: Vec<SplitSpec>,
    /// Set when fewer distinct partitions exist than were requested.
    pub warning: Option<String>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `n_splits` distinct partitions. Candidate seeds are `base_seed`,
/// `base_seed + 1`, ...; seeds that repeat an earlier partition are skipped.
pub fn make_split_family(
    dataset: &Dataset,
    protocol: Protocol,
    n_splits: usize,
    base_seed: u64,
) -> Result<SplitFamily> {
    if n_splits < 1 {
        return Err(OodError::invalid("n_splits must be at least 1"));
    }
    let make = |seed| match protocol {
        Protocol::Coverage { coverage } => coverage_spec(dataset, coverage, seed),
        Protocol::Fixed { n_ood_classes } => fixed_ood_spec(dataset, n_ood_classes, seed),
    };
    let ceiling = match protocol {
        Protocol::Fixed { n_ood_classes } => {
            let n = all_labels(dataset).len().max(train_counts(dataset)?.len());
            Some(if n_ood_classes < n { binomial(n, n_ood_classes) } else { 0 })
        }
        Protocol::Coverage { .. } => None,
    };
    let max_attempts = n_splits.saturating_mul(200).max(1000);
    let mut splits: Vec<SplitSpec> = Vec::new();
    let mut seen = BTreeSet::new();
    for i in 0..max_attempts as u64 {
        if splits.len() == n_splits || ceiling.is_some_and(|c| splits.len() as u128 >= c) {
            break;
        }
        let spec = make(base_seed.wrapping_add(i))?;
        if seen.insert(spec.ood_classes.clone()) {
            splits.push(spec);
        }
    }
    let warning = (splits.len() < n_splits).then(|| {
        let msg = format!(
            "requested {n_splits} splits but only {} distinct partitions exist",
            splits.len()
        );
        log::warn!("{msg}");
        msg
    });
    Ok(SplitFamily { splits, warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(classes: &[(&str, usize)]) -> Dataset {
        let mut records = Vec::new();
        for (label, n) in classes {
            for i in 0..*n {
                records.push(Record {
                    id: format!("{label}-tr-{i}"),
                    text: format!("{label} text {i}"),
                    label: Some(label.to_string()),
                    split: Split::Train,
                    is_ood: None,
                });
            }
            for (split, tag) in [(Split::Valid, "va"), (Split::Test, "te")] {
                records.push(Record {
                    id: format!("{label}-{tag}"),
                    text: format!("{label} eval"),
                    label: Some(label.to_string()),
                    split,
                    is_ood: None,
                });
            }
        }
        Dataset::new(records).unwrap()
    }

    #[test]
    fn prefix_rule_hand_example() {
        // A:50 B:30 C:10 D:10 in that order, coverage 0.75 → {A, B}.
        assert_eq!(coverage_prefix(&[50, 30, 10, 10], 0.75), 2);
        assert_eq!(coverage_prefix(&[50, 50], 0.5), 1);
    }

    #[test]
    fn prefix_rule_matches_enumeration() {
        // Every permutation of the 4-class example: the enumerated minimal
        // prefix (smallest m with cumulative share ≥ 0.75) equals the rule.
        let counts = [50usize, 30, 10, 10];
        let mut perms = vec![];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c, d];
                        let set: BTreeSet<_> = p.iter().collect();
                        if set.len() == 4 {
                            perms.push(p);
                        }
                    }
                }
            }
        }
        assert_eq!(perms.len(), 24);
        for p in perms {
            let ordered: Vec<usize> = p.iter().map(|&i| counts[i]).collect();
            let brute = (1..=4)
                .find(|&m| 4 * ordered[..m].iter().sum::<usize>() >= 3 * 100)
                .unwrap();
            assert_eq!(coverage_prefix(&ordered, 0.75), brute);
        }
    }

    #[test]
    fn coverage_split_respects_invariants() {
        let ds = dataset(&[("A", 50), ("B", 30), ("C", 10), ("D", 10)]);
        for seed in 0..20 {
            let (spec, out) = make_coverage_split(&ds, 0.75, seed).unwrap();
            assert!(!spec.ood_classes.is_empty());
            assert!(spec.id_classes.is_disjoint(&spec.ood_classes));
            assert_eq!(spec.id_classes.len() + spec.ood_classes.len(), 4);
            let covered: usize = out.in_split(Split::Train).count();
            assert!(covered as f64 / 100.0 >= 0.75);
            assert!(out.in_split(Split::Train).all(|r| r.is_ood == Some(false)));
            for r in out.records.iter().filter(|r| r.split != Split::Train) {
                let ood = spec.ood_classes.contains(r.label.as_ref().unwrap());
                assert_eq!(r.is_ood, Some(ood));
            }
        }
    }

    #[test]
    fn two_equal_classes_half_coverage() {
        let ds = dataset(&[("A", 10), ("B", 10)]);
        let (spec, _) = make_coverage_split(&ds, 0.5, 7).unwrap();
        assert_eq!(spec.id_classes.len(), 1);
        assert_eq!(spec.ood_classes.len(), 1);
    }

    #[test]
    fn single_label_rejected() {
        let ds = dataset(&[("A", 10)]);
        assert!(make_coverage_split(&ds, 0.75, 0).is_err());
        assert!(make_fixed_ood_split(&ds, 1, 0).is_err());
    }

    #[test]
    fn infeasible_coverage_rejected() {
        let ds = dataset(&[("A", 10), ("B", 10)]);
        assert!(make_coverage_split(&ds, 1.0, 0).is_err());
        assert!(make_coverage_split(&ds, 0.0, 0).is_err());
        assert!(make_coverage_split(&ds, 1.5, 0).is_err());
    }

    #[test]
    fn fixed_two_of_eight() {
        let names = ["a", "b", "c", "d", "e", "f", "g", "h"];
        let ds = dataset(&names.map(|n| (n, 5)));
        let (spec, out) = make_fixed_ood_split(&ds, 2, 11).unwrap();
        assert_eq!(spec.ood_classes.len(), 2);
        assert_eq!(spec.id_classes.len(), 6);
        assert_eq!(out.in_split(Split::Train).count(), 30);
        assert!(make_fixed_ood_split(&ds, 8, 11).is_err());
        assert!(make_fixed_ood_split(&ds, 0, 11).is_err());
    }

    #[test]
    fn fixed_split_is_seed_deterministic() {
        let ds = dataset(&[("x", 3), ("y", 3), ("z", 3)]);
        let a = make_fixed_ood_split(&ds, 1, 42).unwrap();
        let b = make_fixed_ood_split(&ds, 1, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn family_returns_requested_count() {
        let ds = dataset(&[("a", 30), ("b", 25), ("c", 20), ("d", 15), ("e", 10)]);
        let fam = make_split_family(&ds, Protocol::Coverage { coverage: 0.75 }, 5, 100).unwrap();
        assert_eq!(fam.splits.len(), 5);
        assert!(fam.warning.is_none());
        let distinct: BTreeSet<_> = fam.splits.iter().map(|s| s.ood_classes.clone()).collect();
        assert_eq!(distinct.len(), 5);
        let one = make_split_family(&ds, Protocol::Fixed { n_ood_classes: 2 }, 1, 3).unwrap();
        assert_eq!(one.splits.len(), 1);
        assert_eq!(one.splits[0].seed, 3);
    }

    #[test]
    fn family_caps_at_distinct_partitions() {
        // Two classes with one OOD class: only {a} and {b} are possible.
        let ds = dataset(&[("a", 4), ("b", 4)]);
        let fam = make_split_family(&ds, Protocol::Fixed { n_ood_classes: 1 }, 5, 0).unwrap();
        assert_eq!(fam.splits.len(), 2);
        assert!(fam.warning.is_some());
    }
}
