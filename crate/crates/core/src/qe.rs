//! Quality-estimation reranking: one reference-free score per candidate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mbr::rank_by_score;
use crate::metrics::{Utility, UtilityQuery};
use crate::types::{CandidateSet, SelectionMethod, SelectionResult, UtilityKind};

pub const DEFAULT_QE_BATCH_SIZE: usize = 256;

/// Scores every candidate against the segment source.
///
/// Only the source and the hypothesis reach the utility; the segment's
/// reference is never read.
pub fn qe_scores(cs: &CandidateSet, utility: &dyn Utility, batch_size: usize) -> Result<Vec<f64>> {
    utility.descriptor().require_kind(UtilityKind::ReferenceFree)?;
    if cs.is_empty() {
        return Err(Error::Empty(format!("segment `{}` has no candidates", cs.segment.seg_id)));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let source = cs.segment.source.as_str();
    let indices: Vec<usize> = (0..cs.len()).collect();
    let batches: Vec<Vec<f64>> = indices
        .par_chunks(batch_size)
        .map(|chunk| {
            let queries: Vec<UtilityQuery<'_>> = chunk
                .iter()
                .map(|&i| UtilityQuery {
                    source,
                    hypothesis: &cs.candidates[i].text,
                    reference: None,
                })
                .collect();
            let scores = utility.score_batch(&queries).and_then(|s| {
                if s.len() != chunk.len() || s.iter().any(|v| !v.is_finite()) {
                    Err(Error::Protocol {
                        message: format!("utility returned {} (finite?) scores for {} queries", s.len(), chunk.len()),
                        raw: format!("{s:?}"),
                    })
                } else {
                    Ok(s)
                }
            });
            scores.map_err(|e| Error::Scoring {
                seg_id: cs.segment.seg_id.clone(),
                batch: format!(
                    "candidates {:?}",
                    chunk.iter().map(|&i| cs.candidates[i].sample_index).collect::<Vec<_>>()
                ),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

pub fn qe_select_batched(cs: &CandidateSet, utility: &dyn Utility, batch_size: usize) -> Result<SelectionResult> {
    let scores = qe_scores(cs, utility, batch_size)?;
    let ranking = rank_by_score(
        cs.candidates
            .iter()
            .zip(scores)
            .map(|(c, s)| (c.sample_index, s))
            .collect(),
    );
    Ok(SelectionResult {
        seg_id: cs.segment.seg_id.clone(),
        method: SelectionMethod::Qe,
        chosen: ranking[0].0,
        utility_calls: cs.len() as u64,
        ranking,
    })
}

/// Picks the candidate with the highest reference-free score; ties go to the
/// lowest sample index.
pub fn qe_select(cs: &CandidateSet, utility: &dyn Utility) -> Result<SelectionResult> {
    qe_select_batched(cs, utility, DEFAULT_QE_BATCH_SIZE)
}

/// QE ranking of the first `k` candidates only.
pub fn qe_rerank_topk(cs: &CandidateSet, utility: &dyn Utility, k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > cs.len() {
        return Err(Error::Config(format!("k={k} outside 1..={}", cs.len())));
    }
    qe_select(&cs.prefix(k), utility).map(|r| r.ranking)
}
