//! Line-delimited JSON encoding of pipeline records.
//!
//! Every real number is written with exactly six fractional digits so that
//! golden files are stable; in-memory values keep full precision.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::types::{
    Candidate, CandidateSet, DecodeMethod, DistillExample, Segment, SelectionMethod,
    SelectionResult,
};

/// Formats a real the way every mbrkit output file does.
pub fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

/// Rounds to the precision that survives a write/read cycle.
pub fn round6(v: f64) -> f64 {
    fixed6(v).parse().expect("fixed6 output parses")
}

pub(crate) fn ser_fixed6<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if !v.is_finite() {
        return Err(S::Error::custom(format!("cannot serialize non-finite value {v}")));
    }
    RawValue::from_string(fixed6(*v))
        .map_err(S::Error::custom)?
        .serialize(s)
}

pub(crate) fn ser_opt_fixed6<S: Serializer>(
    v: &Option<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => ser_fixed6(x, s),
        None => s.serialize_none(),
    }
}

pub(crate) fn ser_opt_fixed6_vec<S: Serializer>(
    v: &[Option<f64>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        match x {
            Some(x) => {
                if !x.is_finite() {
                    return Err(S::Error::custom(format!("cannot serialize non-finite value {x}")));
                }
                seq.serialize_element(&RawValue::from_string(fixed6(*x)).map_err(S::Error::custom)?)?;
            }
            None => seq.serialize_element(&Option::<f64>::None)?,
        }
    }
    seq.end()
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Parses every non-blank line of `reader` as a `T`, keeping 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

/// Serializes one record per line and returns the number of lines written.
///
/// IO failures report the byte offset at which the failing write started.
pub fn write_jsonl<T: Serialize, W: Write>(
    writer: W,
    records: impl IntoIterator<Item = T>,
) -> Result<usize> {
    let mut w = OffsetWriter { inner: writer, offset: 0 };
    let mut count = 0;
    for rec in records {
        let mut line = serde_json::to_vec(&rec)
            .map_err(|e| Error::InvalidRecord(e.to_string()))?;
        line.push(b'\n');
        w.write_all_tracked(&line)?;
        count += 1;
    }
    w.flush_tracked()?;
    Ok(count)
}

struct OffsetWriter<W> {
    inner: W,
    offset: u64,
}

impl<W: Write> OffsetWriter<W> {
    fn write_all_tracked(&mut self, buf: &[u8]) -> Result<()> {
        self.inner.write_all(buf).map_err(|source| Error::Write {
            offset: self.offset,
            source,
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn flush_tracked(&mut self) -> Result<()> {
        self.inner.flush().map_err(|source| Error::Write {
            offset: self.offset,
            source,
        })
    }
}

// ---------------------------------------------------------------------------
// Segments

#[derive(Serialize, Deserialize)]
struct SegmentWire {
    seg_id: String,
    source: String,
    #[serde(default)]
    reference: Option<String>,
    #[serde(default)]
    domain: Option<String>,
}

impl From<&Segment> for SegmentWire {
    fn from(s: &Segment) -> Self {
        SegmentWire {
            seg_id: s.seg_id.clone(),
            source: s.source.clone(),
            reference: s.reference.clone(),
            domain: s.domain.clone(),
        }
    }
}

impl From<SegmentWire> for Segment {
    fn from(w: SegmentWire) -> Self {
        Segment {
            seg_id: w.seg_id,
            source: w.source,
            reference: w.reference,
            domain: w.domain,
        }
    }
}

/// Reads JSONL segments, rejecting duplicate or empty keys.
pub fn read_segments<R: BufRead>(reader: R) -> Result<Vec<Segment>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, wire) in read_jsonl::<SegmentWire, _>(reader)? {
        let seg = Segment::from(wire);
        seg.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(seg.seg_id.clone()) {
            return Err(Error::DuplicateSegment(seg.seg_id));
        }
        out.push(seg);
    }
    Ok(out)
}

/// Reads one source per line; the 1-based line number becomes the seg_id.
pub fn read_plain_sources<R: BufRead>(reader: R) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Segment::new((i + 1).to_string(), line));
    }
    Ok(out)
}

pub fn write_segments<W: Write>(writer: W, segments: &[Segment]) -> Result<usize> {
    write_jsonl(writer, segments.iter().map(SegmentWire::from))
}

// ---------------------------------------------------------------------------
// Candidate files

#[derive(Serialize, Deserialize)]
struct CandidateWire {
    text: String,
    #[serde(default, serialize_with = "ser_opt_fixed6")]
    logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_index: Option<usize>,
    #[serde(default, skip_serializing_if = "is_false")]
    truncated: bool,
}

#[derive(Serialize, Deserialize)]
struct CandidateSetWire {
    seg_id: String,
    source: String,
    #[serde(default)]
    reference: Option<String>,
    #[serde(default)]
    domain: Option<String>,
    candidates: Vec<CandidateWire>,
}

impl From<&CandidateSet> for CandidateSetWire {
    fn from(cs: &CandidateSet) -> Self {
        let seg = &cs.segment;
        CandidateSetWire {
            seg_id: seg.seg_id.clone(),
            source: seg.source.clone(),
            reference: seg.reference.clone(),
            domain: seg.domain.clone(),
            candidates: cs
                .candidates
                .iter()
                .enumerate()
                .map(|(pos, c)| CandidateWire {
                    text: c.text.clone(),
                    logprob: c.logprob,
                    // sample_index is positional unless it differs from the position
                    sample_index: (c.sample_index != pos).then_some(c.sample_index),
                    truncated: c.truncated,
                })
                .collect(),
        }
    }
}

impl From<CandidateSetWire> for CandidateSet {
    fn from(w: CandidateSetWire) -> Self {
        CandidateSet {
            segment: Segment {
                seg_id: w.seg_id,
                source: w.source,
                reference: w.reference,
                domain: w.domain,
            },
            candidates: w
                .candidates
                .into_iter()
                .enumerate()
                .map(|(pos, c)| Candidate {
                    text: c.text,
                    logprob: c.logprob,
                    sample_index: c.sample_index.unwrap_or(pos),
                    truncated: c.truncated,
                })
                .collect(),
        }
    }
}

/// Reads a candidate file. Order is preserved; any invariant violation is an error.
pub fn read_candidates<R: BufRead>(reader: R) -> Result<Vec<CandidateSet>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, wire) in read_jsonl::<CandidateSetWire, _>(reader)? {
        let cs = CandidateSet::from(wire);
        match cs.validate() {
            Ok(()) => {}
            Err(e @ Error::DuplicateSampleIndex { .. }) => return Err(e),
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: e.to_string(),
                })
            }
        }
        if !seen.insert(cs.segment.seg_id.clone()) {
            return Err(Error::DuplicateSegment(cs.segment.seg_id));
        }
        out.push(cs);
    }
    Ok(out)
}

pub fn write_candidates<W: Write>(writer: W, sets: &[CandidateSet]) -> Result<usize> {
    write_jsonl(writer, sets.iter().map(CandidateSetWire::from))
}

// ---------------------------------------------------------------------------
// Distillation datasets

#[derive(Serialize, Deserialize)]
struct DistillWire {
    seg_id: String,
    source: String,
    target: String,
    method: DecodeMethod,
    #[serde(default, serialize_with = "ser_opt_fixed6")]
    score: Option<f64>,
    teacher_id: String,
}

impl From<&DistillExample> for DistillWire {
    fn from(e: &DistillExample) -> Self {
        DistillWire {
            seg_id: e.seg_id.clone(),
            source: e.source.clone(),
            target: e.target.clone(),
            method: e.method,
            score: e.score,
            teacher_id: e.teacher_id.clone(),
        }
    }
}

/// Writes one record per line and returns the count written.
pub fn write_distill_dataset<W: Write>(writer: W, examples: &[DistillExample]) -> Result<usize> {
    write_jsonl(writer, examples.iter().map(DistillWire::from))
}

/// The exact bytes [`write_distill_dataset`] produces.
pub fn encode_distill_dataset(examples: &[DistillExample]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_distill_dataset(&mut buf, examples)?;
    Ok(buf)
}

pub fn read_distill_dataset<R: BufRead>(reader: R) -> Result<Vec<DistillExample>> {
    read_jsonl::<DistillWire, _>(reader)?
        .into_iter()
        .map(|(line, w)| {
            let ex = DistillExample {
                seg_id: w.seg_id,
                source: w.source,
                target: w.target,
                method: w.method,
                score: w.score,
                teacher_id: w.teacher_id,
            };
            ex.validate().map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            Ok(ex)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Selections

#[derive(Serialize, Deserialize)]
struct RankEntryWire {
    index: usize,
    #[serde(serialize_with = "ser_fixed6")]
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct SelectionWire {
    seg_id: String,
    method: SelectionMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    chosen: usize,
    utility_calls: u64,
    ranking: Vec<RankEntryWire>,
}

fn selection_wire(s: &SelectionResult, k: Option<usize>) -> SelectionWire {
    SelectionWire {
        seg_id: s.seg_id.clone(),
        method: s.method,
        k,
        chosen: s.chosen,
        utility_calls: s.utility_calls,
        ranking: s
            .ranking
            .iter()
            .map(|&(index, score)| RankEntryWire { index, score })
            .collect(),
    }
}

pub fn write_selections<W: Write>(writer: W, selections: &[SelectionResult]) -> Result<usize> {
    write_jsonl(writer, selections.iter().map(|s| selection_wire(s, None)))
}

/// Writes selections tagged with the candidate-prefix size they were computed on.
pub fn write_prefix_selections<W: Write>(
    writer: W,
    selections: &[(usize, SelectionResult)],
) -> Result<usize> {
    write_jsonl(writer, selections.iter().map(|(k, s)| selection_wire(s, Some(*k))))
}

/// Reads selections; the optional prefix size is returned alongside each record.
pub fn read_selections<R: BufRead>(reader: R) -> Result<Vec<(Option<usize>, SelectionResult)>> {
    read_jsonl::<SelectionWire, _>(reader)?
        .into_iter()
        .map(|(line, w)| {
            let sel = SelectionResult {
                seg_id: w.seg_id,
                method: w.method,
                ranking: w.ranking.into_iter().map(|r| (r.index, r.score)).collect(),
                chosen: w.chosen,
                utility_calls: w.utility_calls,
            };
            sel.validate().map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            Ok((w.k, sel))
        })
        .collect()
}

/// Reads a candidate file from a path.
pub fn read_candidates_path(path: impl AsRef<std::path::Path>) -> Result<Vec<CandidateSet>> {
    let f = std::fs::File::open(path)?;
    read_candidates(io::BufReader::new(f))
}
