//! Metric tables for system outputs and score histograms for selections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{corpus_bleu, instantiate, registry_resolve, BleuConfig, SystemOutputs, UtilityQuery};
use crate::types::{SelectionResult, UtilityKind};

/// Pseudo-metric name for corpus-level BLEU against the references.
pub const CORPUS_BLEU: &str = "corpus_bleu";
pub const MQM_COLUMN: &str = "mqm";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system: String,
    pub scores: BTreeMap<String, f64>,
    /// Difference to the first row, per metric.
    pub delta: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Metrics that could not be computed, with the reason.
    pub failures: BTreeMap<String, String>,
}

/// Inputs of [`score_report`]; maps are keyed by seg_id.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReportInput<'a> {
    pub systems: &'a [SystemOutputs],
    pub references: Option<&'a BTreeMap<String, String>>,
    pub sources: Option<&'a BTreeMap<String, String>>,
    /// system → MQM score
    pub mqm: Option<&'a BTreeMap<String, f64>>,
}

fn metric_column(name: &str, input: &ReportInput<'_>) -> Result<BTreeMap<String, f64>> {
    let mut column = BTreeMap::new();
    if name == CORPUS_BLEU {
        let refs = input
            .references
            .ok_or_else(|| Error::Config("corpus_bleu needs references".into()))?;
        for sys in input.systems {
            let pairs = sys
                .outputs
                .iter()
                .map(|(seg, h)| {
                    refs.get(seg)
                        .map(|r| (h.as_str(), r.as_str()))
                        .ok_or_else(|| Error::MissingCandidates(format!("{seg} (reference)")))
                })
                .collect::<Result<Vec<_>>>()?;
            column.insert(sys.name.clone(), corpus_bleu(&pairs, &BleuConfig::corpus())?);
        }
        return Ok(column);
    }
    let desc = registry_resolve(name)?;
    let utility = instantiate(&desc)?;
    for sys in input.systems {
        if sys.outputs.is_empty() {
            return Err(Error::Empty(format!("system `{}` has no outputs", sys.name)));
        }
        let mut queries = Vec::with_capacity(sys.outputs.len());
        for (seg, h) in &sys.outputs {
            let source = match input.sources.and_then(|s| s.get(seg)) {
                Some(s) => s.as_str(),
                None if desc.kind == UtilityKind::ReferenceFree => {
                    return Err(Error::Config(format!("{name} needs the source of segment `{seg}`")))
                }
                None => "",
            };
            let reference = input.references.and_then(|r| r.get(seg)).map(String::as_str);
            if reference.is_none() && desc.kind == UtilityKind::ReferenceBased {
                return Err(Error::Config(format!("{name} needs the reference of segment `{seg}`")));
            }
            queries.push(UtilityQuery {
                source,
                hypothesis: h,
                reference,
            });
        }
        let scores = utility.score_batch(&queries)?;
        column.insert(sys.name.clone(), scores.iter().sum::<f64>() / scores.len() as f64);
    }
    Ok(column)
}

/// Scores every system with every metric (mean segment utility, or corpus
/// BLEU for `corpus_bleu`) plus an optional MQM column. A metric that fails is
/// listed in `failures` and left out of the table.
pub fn score_report(input: &ReportInput<'_>, metrics: &[String]) -> ScoreReport {
    let mut columns = Vec::new();
    let mut failures = BTreeMap::new();
    let mut cells: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for m in metrics {
        match metric_column(m, input) {
            Ok(col) => {
                for (sys, v) in col {
                    cells.entry(sys).or_default().insert(m.clone(), v);
                }
                columns.push(m.clone());
            }
            Err(e) => {
                log::warn!("metric {m}: {e}");
                failures.insert(m.clone(), e.to_string());
            }
        }
    }
    let mut order: Vec<String> = input.systems.iter().map(|s| s.name.clone()).collect();
    if let Some(mqm) = input.mqm {
        for (sys, &v) in mqm {
            cells.entry(sys.clone()).or_default().insert(MQM_COLUMN.into(), v);
            if !order.contains(sys) {
                order.push(sys.clone());
            }
        }
        columns.push(MQM_COLUMN.into());
    }
    let base = order.first().and_then(|s| cells.get(s)).cloned().unwrap_or_default();
    let rows = order
        .into_iter()
        .map(|system| {
            let scores = cells.remove(&system).unwrap_or_default();
            let delta = scores
                .iter()
                .filter_map(|(k, v)| base.get(k).map(|b| (k.clone(), v - b)))
                .collect();
            ReportRow { system, scores, delta }
        })
        .collect();
    ScoreReport { columns, rows, failures }
}

impl ScoreReport {
    /// Aligned plain-text table, one row per system.
    pub fn to_table(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.system.len()).chain([6]).max().unwrap_or(6);
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(10)).collect();
        let mut out = format!("{:<name_w$}", "system");
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<name_w$}", row.system);
            for (c, w) in self.columns.iter().zip(&widths) {
                match row.scores.get(c) {
                    Some(v) => {
                        let _ = write!(out, "  {v:>w$.4}");
                    }
                    None => {
                        let _ = write!(out, "  {:>w$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    /// Scores of all candidates in the bin.
    pub all: usize,
    /// Scores of chosen candidates in the bin.
    pub top1: usize,
}

/// Equal-width histogram of candidate scores from selection rankings; the
/// last bin is closed on the right.
pub fn score_histogram(selections: &[SelectionResult], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let all: Vec<f64> = selections.iter().flat_map(|s| s.ranking.iter().map(|r| r.1)).collect();
    if all.is_empty() {
        return Err(Error::Empty("no scores to bin".into()));
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let slot = |v: f64| (((v - lo) / width) as usize).min(bins - 1);
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: lo + i as f64 * width,
            hi: if i + 1 == bins && hi > lo { hi } else { lo + (i + 1) as f64 * width },
            all: 0,
            top1: 0,
        })
        .collect();
    for v in &all {
        out[slot(*v)].all += 1;
    }
    for s in selections {
        out[slot(s.chosen_score())].top1 += 1;
    }
    Ok(out)
}

pub fn write_histogram_csv<W: Write>(mut writer: W, bins: &[HistogramBin]) -> Result<()> {
    writeln!(writer, "bin_lo,bin_hi,all,top1")?;
    for b in bins {
        writeln!(writer, "{:.6},{:.6},{},{}", b.lo, b.hi, b.all, b.top1)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{chrf, sentence_bleu, ChrfConfig};
    use crate::types::SelectionMethod;

    fn outputs(name: &str, texts: &[&str]) -> SystemOutputs {
        SystemOutputs {
            name: name.into(),
            outputs: texts.iter().enumerate().map(|(i, t)| (i.to_string(), t.to_string())).collect(),
        }
    }

    fn refs() -> BTreeMap<String, String> {
        [(0, "the cat sat on the mat"), (1, "a dog barked")]
            .iter()
            .map(|(i, t)| (i.to_string(), t.to_string()))
            .collect()
    }

    #[test]
    fn identical_system_scores_100() {
        let r = refs();
        let sys = vec![outputs("copy", &["the cat sat on the mat", "a dog barked"])];
        let input = ReportInput { systems: &sys, references: Some(&r), ..Default::default() };
        let report = score_report(&input, &["chrf".to_string()]);
        assert_eq!(report.columns, vec!["chrf"]);
        assert_eq!(report.rows.len(), 1);
        assert!((report.rows[0].scores["chrf"] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn cells_match_direct_calls() {
        let r = refs();
        let sys = vec![
            outputs("a", &["the cat sat", "a dog"]),
            outputs("b", &["cat on mat", "dogs barked"]),
        ];
        let input = ReportInput { systems: &sys, references: Some(&r), ..Default::default() };
        let report = score_report(&input, &["chrf".to_string(), "sentence_bleu".to_string()]);
        for (row, s) in report.rows.iter().zip(&sys) {
            let pairs: Vec<_> = s.outputs.iter().map(|(k, h)| (h.as_str(), r[k].as_str())).collect();
            let c: f64 = pairs.iter().map(|(h, x)| chrf(h, x, &ChrfConfig::default())).sum::<f64>() / 2.0;
            let b: f64 = pairs.iter().map(|(h, x)| sentence_bleu(h, x, &BleuConfig::sentence())).sum::<f64>() / 2.0;
            assert!((row.scores["chrf"] - c).abs() < 1e-12);
            assert!((row.scores["sentence_bleu"] - b).abs() < 1e-12);
        }
        assert_eq!(report.rows[0].delta["chrf"], 0.0);
        let table = report.to_table();
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn failing_metric_is_listed_not_fatal() {
        let r = refs();
        let sys = vec![outputs("a", &["x", "y"])];
        let input = ReportInput { systems: &sys, references: Some(&r), ..Default::default() };
        let report = score_report(&input, &["chrf".into(), "blue_typo".into(), "chrf_src".into()]);
        assert_eq!(report.columns, vec!["chrf"]);
        assert!(report.failures.contains_key("blue_typo"));
        assert!(report.failures.contains_key("chrf_src"));
    }

    #[test]
    fn mqm_only_report() {
        let mqm: BTreeMap<String, f64> = [("sys".to_string(), 1.25)].into();
        let input = ReportInput { mqm: Some(&mqm), ..Default::default() };
        let report = score_report(&input, &[]);
        assert_eq!(report.columns, vec![MQM_COLUMN]);
        assert_eq!(report.rows[0].scores[MQM_COLUMN], 1.25);
    }

    #[test]
    fn histogram_counts() {
        let sel = |scores: &[f64]| SelectionResult {
            seg_id: "s".into(),
            method: SelectionMethod::Qe,
            ranking: scores.iter().copied().enumerate().collect(),
            chosen: 0,
            utility_calls: scores.len() as u64,
        };
        let bins = score_histogram(&[sel(&[1.0, 0.5, 0.0]), sel(&[0.9, 0.2])], 2).unwrap();
        assert_eq!(bins.iter().map(|b| b.all).sum::<usize>(), 5);
        assert_eq!((bins[0].all, bins[1].all), (2, 3));
        assert_eq!((bins[0].top1, bins[1].top1), (0, 2));
        let mut csv = Vec::new();
        write_histogram_csv(&mut csv, &bins).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("bin_lo,bin_hi,all,top1\n0.000000,0.500000,2,0\n"));
    }
}
