//! MQM aggregation. Weights are kept in integer tenths so sums are exact.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::read_jsonl;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Major,
    Minor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqmError {
    pub category: String,
    pub severity: Severity,
    #[serde(default)]
    pub punctuation: bool,
}

impl MqmError {
    pub fn new(category: &str, severity: Severity, punctuation: bool) -> Self {
        MqmError {
            category: category.to_string(),
            severity,
            punctuation,
        }
    }

    /// Major 5, minor 1, minor punctuation 0.1; in tenths.
    pub fn weight_tenths(&self) -> u64 {
        match (self.severity, self.punctuation) {
            (Severity::Major, _) => 50,
            (Severity::Minor, false) => 10,
            (Severity::Minor, true) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqmAnnotation {
    pub seg_id: String,
    pub system: String,
    pub annotator: String,
    #[serde(default)]
    pub errors: Vec<MqmError>,
}

impl MqmAnnotation {
    fn tenths(&self) -> u64 {
        self.errors.iter().map(MqmError::weight_tenths).sum()
    }

    /// This annotator's weighted error total.
    pub fn score(&self) -> f64 {
        self.tenths() as f64 / 10.0
    }
}

/// Mean over annotators of the weighted error totals; lower is better.
pub fn mqm_segment_score(annotations: &[MqmAnnotation]) -> Result<f64> {
    if annotations.is_empty() {
        return Err(Error::Empty("MQM segment score needs at least one annotator".into()));
    }
    let total: u64 = annotations.iter().map(MqmAnnotation::tenths).sum();
    Ok(total as f64 / (10 * annotations.len()) as f64)
}

/// Unweighted mean of segment scores.
pub fn mqm_system_score(segment_scores: &[f64]) -> Result<f64> {
    if segment_scores.is_empty() {
        return Err(Error::Empty("MQM system score needs at least one segment".into()));
    }
    Ok(segment_scores.iter().sum::<f64>() / segment_scores.len() as f64)
}

/// Segment and system MQM scores for every system in an annotation file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MqmTable {
    /// system → seg_id → segment score
    pub segments: BTreeMap<String, BTreeMap<String, f64>>,
    pub systems: BTreeMap<String, f64>,
}

pub fn mqm_scores(annotations: &[MqmAnnotation]) -> Result<MqmTable> {
    let mut seen = HashSet::new();
    let mut grouped: BTreeMap<(&str, &str), Vec<MqmAnnotation>> = BTreeMap::new();
    for a in annotations {
        if !seen.insert((&a.seg_id, &a.system, &a.annotator)) {
            return Err(Error::InvalidRecord(format!(
                "duplicate annotation for segment `{}`, system `{}`, annotator `{}`",
                a.seg_id, a.system, a.annotator
            )));
        }
        grouped.entry((&a.system, &a.seg_id)).or_default().push(a.clone());
    }
    let mut table = MqmTable::default();
    for ((system, seg_id), anns) in grouped {
        table
            .segments
            .entry(system.to_string())
            .or_default()
            .insert(seg_id.to_string(), mqm_segment_score(&anns)?);
    }
    for (system, segs) in &table.segments {
        let scores: Vec<f64> = segs.values().copied().collect();
        table.systems.insert(system.clone(), mqm_system_score(&scores)?);
    }
    Ok(table)
}

pub fn read_mqm_annotations<R: BufRead>(reader: R) -> Result<Vec<MqmAnnotation>> {
    Ok(read_jsonl(reader)?.into_iter().map(|(_, a)| a).collect())
}
