//! Pairwise-accuracy meta-evaluation of metrics against gold scores.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-segment scores: seg_id → system → (gold, metric). Higher is better for both.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetaEvalInput {
    pub segments: BTreeMap<String, BTreeMap<String, (f64, f64)>>,
}

/// system → seg_id → score
pub type ScoreTable = BTreeMap<String, BTreeMap<String, f64>>;

impl MetaEvalInput {
    /// Joins gold and metric tables; every (system, segment) cell must be
    /// present in both.
    pub fn from_tables(gold: &ScoreTable, metric: &ScoreTable) -> Result<Self> {
        let mut input = MetaEvalInput::default();
        for (system, segs) in gold {
            let m = metric
                .get(system)
                .ok_or_else(|| Error::SegmentMismatch(format!("system `{system}` has no metric scores")))?;
            for (seg_id, &g) in segs {
                let &ms = m.get(seg_id).ok_or_else(|| {
                    Error::SegmentMismatch(format!("system `{system}`, segment `{seg_id}`: no metric score"))
                })?;
                input.segments.entry(seg_id.clone()).or_default().insert(system.clone(), (g, ms));
            }
            if let Some(extra) = m.keys().find(|k| !segs.contains_key(*k)) {
                return Err(Error::SegmentMismatch(format!(
                    "system `{system}`, segment `{extra}`: no gold score"
                )));
            }
        }
        if let Some(extra) = metric.keys().find(|k| !gold.contains_key(*k)) {
            return Err(Error::SegmentMismatch(format!("system `{extra}` has no gold scores")));
        }
        Ok(input)
    }
}

fn classify(a: f64, b: f64, eps: f64) -> Ordering {
    if (a - b).abs() <= eps {
        Ordering::Equal
    } else if a < b {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// Percentage of system pairs the metric orders like gold. Gold ties are
/// skipped; a metric tie on an untied gold pair counts as wrong.
pub fn system_pairwise_accuracy(gold: &BTreeMap<String, f64>, metric: &BTreeMap<String, f64>) -> Result<f64> {
    if gold.len() < 2 {
        return Err(Error::Config("system pairwise accuracy needs at least two systems".into()));
    }
    if gold.keys().ne(metric.keys()) {
        return Err(Error::SegmentMismatch("gold and metric systems differ".into()));
    }
    let names: Vec<&String> = gold.keys().collect();
    let (mut correct, mut total) = (0usize, 0usize);
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let g = gold[names[i]].total_cmp(&gold[names[j]]);
            if g == Ordering::Equal {
                continue;
            }
            total += 1;
            if metric[names[i]].total_cmp(&metric[names[j]]) == g {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Empty("every gold system pair is tied".into()));
    }
    Ok(100.0 * correct as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedAccuracy {
    pub accuracy: f64,
    pub segments: usize,
    pub pairs: usize,
    /// Segments with fewer than two systems.
    pub excluded: Vec<String>,
}

/// Group-by-item accuracy: per segment, the share of system pairs where the
/// three-way ordering (<, =, >) of metric matches gold; averaged over segments.
///
/// Gold ties are exact; metric scores within `tie_eps` count as tied.
pub fn segment_pairwise_accuracy_grouped(input: &MetaEvalInput, tie_eps: f64) -> Result<GroupedAccuracy> {
    if !(tie_eps >= 0.0) {
        return Err(Error::Config(format!("tie_eps {tie_eps} must be >= 0")));
    }
    let mut excluded = Vec::new();
    let mut per_segment = Vec::new();
    let mut pairs = 0;
    for (seg_id, systems) in &input.segments {
        if systems.len() < 2 {
            log::warn!("segment `{seg_id}` has fewer than two systems; excluded");
            excluded.push(seg_id.clone());
            continue;
        }
        let cells: Vec<(f64, f64)> = systems.values().copied().collect();
        let (mut correct, mut total) = (0usize, 0usize);
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                total += 1;
                if classify(cells[i].0, cells[j].0, 0.0) == classify(cells[i].1, cells[j].1, tie_eps) {
                    correct += 1;
                }
            }
        }
        pairs += total;
        per_segment.push(correct as f64 / total as f64);
    }
    if per_segment.is_empty() {
        return Err(Error::Empty("no segment has two or more systems".into()));
    }
    Ok(GroupedAccuracy {
        accuracy: 100.0 * per_segment.iter().sum::<f64>() / per_segment.len() as f64,
        segments: per_segment.len(),
        pairs,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(v: &[(&str, f64)]) -> BTreeMap<String, f64> {
        v.iter().map(|(k, s)| (k.to_string(), *s)).collect()
    }

    #[test]
    fn system_level() {
        let gold = scores(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]);
        assert_eq!(system_pairwise_accuracy(&gold, &gold).unwrap(), 100.0);
        let neg: BTreeMap<_, _> = gold.iter().map(|(k, v)| (k.clone(), -v)).collect();
        assert_eq!(system_pairwise_accuracy(&gold, &neg).unwrap(), 0.0);
        let one_swap = scores(&[("a", 1.0), ("b", 2.0), ("c", 4.0), ("d", 3.0)]);
        let acc = system_pairwise_accuracy(&gold, &one_swap).unwrap();
        assert!((acc - 83.333333).abs() < 1e-3);
        let tie = scores(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 3.0)]);
        assert!((system_pairwise_accuracy(&gold, &tie).unwrap() - 83.333333).abs() < 1e-3);
        assert!(system_pairwise_accuracy(&scores(&[("a", 1.0)]), &scores(&[("a", 1.0)])).is_err());
    }

    fn grouped(cells: &[(&str, &str, f64, f64)]) -> MetaEvalInput {
        let mut input = MetaEvalInput::default();
        for &(seg, sys, g, m) in cells {
            input.segments.entry(seg.into()).or_default().insert(sys.into(), (g, m));
        }
        input
    }

    #[test]
    fn grouped_extremes() {
        let same = grouped(&[("1", "a", 1.0, 1.0), ("1", "b", 2.0, 2.0), ("2", "a", 3.0, 3.0), ("2", "b", 0.0, 0.0)]);
        assert_eq!(segment_pairwise_accuracy_grouped(&same, 0.0).unwrap().accuracy, 100.0);
        let constant = grouped(&[("1", "a", 1.0, 5.0), ("1", "b", 2.0, 5.0), ("1", "c", 3.0, 5.0)]);
        assert_eq!(segment_pairwise_accuracy_grouped(&constant, 0.0).unwrap().accuracy, 0.0);
    }

    #[test]
    fn tie_eps_and_exclusions() {
        let input = grouped(&[("1", "a", 1.0, 0.50), ("1", "b", 1.0, 0.51), ("2", "a", 1.0, 1.0)]);
        assert_eq!(segment_pairwise_accuracy_grouped(&input, 0.0).unwrap().accuracy, 0.0);
        let r = segment_pairwise_accuracy_grouped(&input, 0.02).unwrap();
        assert_eq!(r.accuracy, 100.0);
        assert_eq!(r.excluded, vec!["2".to_string()]);
    }

    #[test]
    fn tables_must_align() {
        let mut gold = ScoreTable::new();
        gold.entry("A".into()).or_default().insert("1".into(), 1.0);
        let mut metric = gold.clone();
        assert!(MetaEvalInput::from_tables(&gold, &metric).is_ok());
        metric.get_mut("A").unwrap().insert("2".into(), 1.0);
        assert!(MetaEvalInput::from_tables(&gold, &metric).is_err());
    }

    proptest! {
        #[test]
        fn system_accuracy_is_invariant_under_increasing_maps(
            vals in prop::collection::vec((-50i32..50, -50i32..50), 2..8),
        ) {
            let gold: BTreeMap<_, _> = vals.iter().enumerate().map(|(i, v)| (format!("s{i}"), v.0 as f64)).collect();
            let metric: BTreeMap<_, _> = vals.iter().enumerate().map(|(i, v)| (format!("s{i}"), v.1 as f64)).collect();
            if let Ok(acc) = system_pairwise_accuracy(&gold, &metric) {
                let warped: BTreeMap<_, _> = metric.iter().map(|(k, v)| (k.clone(), (v / 10.0).exp() * 3.0 + 1.0)).collect();
                prop_assert_eq!(system_pairwise_accuracy(&gold, &warped).unwrap(), acc);
                prop_assert!((0.0..=100.0).contains(&acc));
            }
        }
    }
}
