//! Minimum Bayes risk selection over a sampled candidate set.
//!
//! Every candidate doubles as a pseudo-reference; a candidate's score is the
//! mean utility of it against the included pseudo-references, and the
//! highest-scoring candidate wins.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jsonl::{self, ser_opt_fixed6_vec};
use crate::metrics::{Utility, UtilityQuery};
use crate::types::{CandidateSet, SelectionMethod, SelectionResult, UtilityKind};

pub const DEFAULT_MBR_BATCH_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct MbrOptions {
    /// Score each candidate against itself as well (the literal expectation).
    pub include_self: bool,
    /// Pairs per utility request.
    pub batch_size: usize,
}

impl Default for MbrOptions {
    fn default() -> Self {
        MbrOptions {
            include_self: true,
            batch_size: DEFAULT_MBR_BATCH_SIZE,
        }
    }
}

/// `values[i * n + j]` = u(candidate i, candidate j as pseudo-reference).
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityMatrix {
    pub seg_id: String,
    pub n: usize,
    /// When false the diagonal was never computed and holds 0.
    pub include_self: bool,
    pub values: Vec<f64>,
}

impl UtilityMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (self.include_self || i != j).then(|| self.values[i * self.n + j])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Number of utility evaluations this matrix represents.
    pub fn evaluations(&self) -> u64 {
        let n = self.n as u64;
        if self.include_self {
            n * n
        } else {
            n * n.saturating_sub(1)
        }
    }
}

fn check_scores(expected: usize, scores: &[f64]) -> Result<()> {
    if scores.len() != expected {
        return Err(Error::Protocol {
            message: format!("utility returned {} scores for {expected} queries", scores.len()),
            raw: String::new(),
        });
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Protocol {
            message: "utility returned a non-finite score".into(),
            raw: bad.to_string(),
        });
    }
    Ok(())
}

/// Computes all (off-diagonal, unless `include_self`) pairwise utilities.
///
/// Pairs are cut row-major into batches of `opts.batch_size`; batches run on
/// the current rayon pool and are reassembled in order, so the result does
/// not depend on the number of workers.
pub fn utility_matrix(cs: &CandidateSet, utility: &dyn Utility, opts: &MbrOptions) -> Result<UtilityMatrix> {
    utility.descriptor().require_kind(UtilityKind::ReferenceBased)?;
    if cs.is_empty() {
        return Err(Error::Empty(format!("segment `{}` has no candidates", cs.segment.seg_id)));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let n = cs.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| opts.include_self || i != j)
        .collect();
    let source = cs.segment.source.as_str();
    let batches: Vec<Vec<f64>> = pairs
        .par_chunks(opts.batch_size)
        .map(|chunk| {
            let queries: Vec<UtilityQuery<'_>> = chunk
                .iter()
                .map(|&(i, j)| UtilityQuery {
                    source,
                    hypothesis: &cs.candidates[i].text,
                    reference: Some(&cs.candidates[j].text),
                })
                .collect();
            utility
                .score_batch(&queries)
                .and_then(|s| check_scores(chunk.len(), &s).map(|_| s))
                .map_err(|e| Error::Scoring {
                    seg_id: cs.segment.seg_id.clone(),
                    batch: format!(
                        "pairs {:?}..={:?}",
                        chunk[0],
                        chunk[chunk.len() - 1]
                    ),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(batches.into_iter().flatten()) {
        values[i * n + j] = v;
    }
    Ok(UtilityMatrix {
        seg_id: cs.segment.seg_id.clone(),
        n,
        include_self: opts.include_self,
        values,
    })
}

/// Row means over the included columns.
///
/// A singleton set with the diagonal excluded has no columns; its score is
/// defined as 0.
pub fn mbr_expected_utilities(matrix: &UtilityMatrix) -> Vec<f64> {
    let n = matrix.n;
    let cols = if matrix.include_self { n } else { n.saturating_sub(1) };
    if cols == 0 {
        log::warn!(
            "segment `{}`: no pseudo-references left after excluding self; scores set to 0",
            matrix.seg_id
        );
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let mut sum = 0.0;
            for j in 0..n {
                if let Some(v) = matrix.get(i, j) {
                    sum += v;
                }
            }
            sum / cols as f64
        })
        .collect()
}

/// Sorts `(sample_index, score)` by descending score, ties to the lower index.
pub fn rank_by_score(mut scored: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

/// MBR selection; also returns the utility matrix it was computed from.
pub fn mbr_select_with_matrix(
    cs: &CandidateSet,
    utility: &dyn Utility,
    opts: &MbrOptions,
) -> Result<(SelectionResult, UtilityMatrix)> {
    let matrix = utility_matrix(cs, utility, opts)?;
    let scores = mbr_expected_utilities(&matrix);
    let ranking = rank_by_score(
        cs.candidates
            .iter()
            .zip(scores)
            .map(|(c, s)| (c.sample_index, s))
            .collect(),
    );
    let result = SelectionResult {
        seg_id: cs.segment.seg_id.clone(),
        method: SelectionMethod::Mbr,
        chosen: ranking[0].0,
        utility_calls: matrix.evaluations(),
        ranking,
    };
    Ok((result, matrix))
}

pub fn mbr_select(cs: &CandidateSet, utility: &dyn Utility, opts: &MbrOptions) -> Result<SelectionResult> {
    mbr_select_with_matrix(cs, utility, opts).map(|(r, _)| r)
}

#[derive(Serialize)]
struct MatrixDumpWire<'a> {
    seg_id: &'a str,
    n: usize,
    include_self: bool,
    #[serde(serialize_with = "ser_opt_fixed6_vec")]
    values: Vec<Option<f64>>,
}

/// Writes one JSONL line per matrix; excluded diagonal cells are `null`.
pub fn write_matrix_dump<W: Write>(writer: W, matrices: &[UtilityMatrix]) -> Result<usize> {
    jsonl::write_jsonl(
        writer,
        matrices.iter().map(|m| MatrixDumpWire {
            seg_id: &m.seg_id,
            n: m.n,
            include_self: m.include_self,
            values: (0..m.n * m.n).map(|k| m.get(k / m.n, k % m.n)).collect(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{instantiate, registry_resolve_with, CountingUtility, FnUtility};
    use crate::types::Segment;

    fn exact_match() -> FnUtility<impl Fn(&UtilityQuery<'_>) -> f64 + Send + Sync> {
        FnUtility::new("exact", UtilityKind::ReferenceBased, |q: &UtilityQuery<'_>| {
            (Some(q.hypothesis) == q.reference) as u8 as f64
        })
    }

    fn set(texts: &[&str]) -> CandidateSet {
        CandidateSet::from_texts(Segment::new("s", "src"), texts.iter().copied())
    }

    #[test]
    fn singleton_sets() {
        let u = exact_match();
        let r = mbr_select(&set(&["a"]), &u, &MbrOptions::default()).unwrap();
        assert_eq!((r.chosen, r.ranking[0].1, r.utility_calls), (0, 1.0, 1));
        let excl = MbrOptions { include_self: false, ..Default::default() };
        let r = mbr_select(&set(&["a"]), &u, &excl).unwrap();
        assert_eq!((r.chosen, r.ranking[0].1, r.utility_calls), (0, 0.0, 0));
    }

    #[test]
    fn exact_match_picks_the_mode() {
        let r = mbr_select(&set(&["a", "a", "b"]), &exact_match(), &MbrOptions::default()).unwrap();
        assert_eq!(r.chosen, 0);
        assert_eq!(r.ranking, vec![(0, 2.0 / 3.0), (1, 2.0 / 3.0), (2, 1.0 / 3.0)]);
    }

    #[test]
    fn call_counts() {
        let u = CountingUtility::new(exact_match());
        let excl = MbrOptions { include_self: false, ..Default::default() };
        let m = utility_matrix(&set(&["a", "b", "c"]), &u, &excl).unwrap();
        assert_eq!(u.calls(), 6);
        assert_eq!(m.get(1, 1), None);
        assert_eq!(m.evaluations(), 6);
    }

    #[test]
    fn chrf_matrix_matches_pointwise_calls() {
        let chrf = instantiate(&registry_resolve_with("chrf", None).unwrap()).unwrap();
        let texts = ["e zord kells", "e zord kellz", "a bird calls", "e zurd"];
        let m = utility_matrix(&set(&texts), &chrf, &MbrOptions { batch_size: 3, ..Default::default() }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let direct = crate::metrics::chrf(texts[i], texts[j], &Default::default());
                assert_eq!(m.get(i, j), Some(direct));
            }
        }
    }

    #[test]
    fn expected_utilities_are_row_means() {
        let m = UtilityMatrix {
            seg_id: "x".into(),
            n: 3,
            include_self: true,
            values: vec![0.2, 0.5, 0.9, 0.1, 0.1, 0.4, 1.0, 0.0, 0.5],
        };
        let e = mbr_expected_utilities(&m);
        let hand = [(0.2 + 0.5 + 0.9) / 3.0, (0.1 + 0.1 + 0.4) / 3.0, (1.0 + 0.0 + 0.5) / 3.0];
        for (a, b) in e.iter().zip(hand) {
            assert!((a - b).abs() < 1e-15);
        }
        let constant = UtilityMatrix { values: vec![0.7; 9], ..m.clone() };
        assert!(mbr_expected_utilities(&constant).iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let identity = UtilityMatrix {
            values: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ..m
        };
        assert_eq!(mbr_expected_utilities(&identity), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn reference_free_utilities_are_rejected() {
        let u = FnUtility::new("qe", UtilityKind::ReferenceFree, |_: &UtilityQuery<'_>| 0.0);
        assert!(matches!(
            mbr_select(&set(&["a"]), &u, &MbrOptions::default()),
            Err(Error::UtilityKindMismatch { .. })
        ));
    }

    #[test]
    fn failing_batches_name_segment_and_pairs() {
        let u = FnUtility::new("nan", UtilityKind::ReferenceBased, |_: &UtilityQuery<'_>| f64::NAN);
        let err = mbr_select(&set(&["a", "b"]), &u, &MbrOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`s`") && msg.contains("(0, 0)"), "{msg}");
    }

    #[test]
    fn matrix_dump_layout() {
        let m = UtilityMatrix { seg_id: "a".into(), n: 2, include_self: false, values: vec![0.0, 0.25, 0.5, 0.0] };
        let mut buf = Vec::new();
        write_matrix_dump(&mut buf, &[m]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"seg_id\":\"a\",\"n\":2,\"include_self\":false,\"values\":[null,0.250000,0.500000,null]}\n"
        );
    }
}
