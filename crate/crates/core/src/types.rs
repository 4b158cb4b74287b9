//! Domain records shared by every pipeline stage.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A source segment, optionally paired with a human reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub seg_id: String,
    pub source: String,
    pub reference: Option<String>,
    pub domain: Option<String>,
}

impl Segment {
    pub fn new(seg_id: impl Into<String>, source: impl Into<String>) -> Self {
        Segment {
            seg_id: seg_id.into(),
            source: source.into(),
            reference: None,
            domain: None,
        }
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seg_id.is_empty() {
            return Err(Error::InvalidRecord("seg_id must be non-empty".into()));
        }
        if self.source.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "segment `{}`: source must be non-empty",
                self.seg_id
            )));
        }
        Ok(())
    }
}

/// One sampled or decoded hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub text: String,
    /// Sequence log-probability (natural log).
    pub logprob: Option<f64>,
    pub sample_index: usize,
    /// Set when decoding hit the length limit before emitting end-of-sequence.
    pub truncated: bool,
}

impl Candidate {
    pub fn new(sample_index: usize, text: impl Into<String>) -> Self {
        Candidate {
            text: text.into(),
            logprob: None,
            sample_index,
            truncated: false,
        }
    }
}

/// A segment together with its hypothesis list, in sampling order.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub segment: Segment,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    /// Builds a set from plain strings, assigning positional sample indices.
    pub fn from_texts<S: Into<String>>(segment: Segment, texts: impl IntoIterator<Item = S>) -> Self {
        let candidates = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Candidate::new(i, t))
            .collect();
        CandidateSet { segment, candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The first `k` candidates as a new set.
    pub fn prefix(&self, k: usize) -> CandidateSet {
        CandidateSet {
            segment: self.segment.clone(),
            candidates: self.candidates[..k.min(self.candidates.len())].to_vec(),
        }
    }

    pub fn by_sample_index(&self, index: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.sample_index == index)
    }

    pub fn validate(&self) -> Result<()> {
        self.segment.validate()?;
        if self.candidates.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "segment `{}`: candidate list is empty",
                self.segment.seg_id
            )));
        }
        let mut seen = HashSet::with_capacity(self.candidates.len());
        for c in &self.candidates {
            if !seen.insert(c.sample_index) {
                return Err(Error::DuplicateSampleIndex {
                    seg_id: self.segment.seg_id.clone(),
                    index: c.sample_index,
                });
            }
            if let Some(lp) = c.logprob {
                if !(lp <= 0.0) {
                    return Err(Error::InvalidRecord(format!(
                        "segment `{}`: candidate {} has logprob {lp} > 0",
                        self.segment.seg_id, c.sample_index
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// u(h, r): scored against a reference or pseudo-reference.
    ReferenceBased,
    /// u(h, s): scored against the source.
    ReferenceFree,
}

impl UtilityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UtilityKind::ReferenceBased => "reference_based",
            UtilityKind::ReferenceFree => "reference_free",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityBackend {
    BuiltinChrf,
    BuiltinSentenceBleu,
    External,
}

/// Where an external scorer lives.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// Shell command speaking the line protocol on stdin/stdout.
    Command(String),
    /// `host:port` of a service exposing `/v1/score` and `/v1/health`.
    Http(String),
}

/// Descriptor of a utility function; see [`crate::metrics::registry_resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityFunction {
    pub name: String,
    pub kind: UtilityKind,
    pub backend: UtilityBackend,
    pub endpoint: Option<Endpoint>,
}

impl UtilityFunction {
    pub fn validate(&self) -> Result<()> {
        if self.backend == UtilityBackend::External && self.endpoint.is_none() {
            return Err(Error::Config(format!(
                "external utility `{}` requires an endpoint",
                self.name
            )));
        }
        Ok(())
    }

    pub fn require_kind(&self, required: UtilityKind) -> Result<()> {
        if self.kind != required {
            return Err(Error::UtilityKindMismatch {
                utility: self.name.clone(),
                actual: self.kind.as_str(),
                required: required.as_str(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Mbr,
    Qe,
}

impl SelectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Mbr => "mbr",
            SelectionMethod::Qe => "qe",
        }
    }
}

/// Ranked candidates of one segment; `ranking[0]` is the winner.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub seg_id: String,
    pub method: SelectionMethod,
    /// `(sample_index, score)` sorted by descending score, ties to the lower index.
    pub ranking: Vec<(usize, f64)>,
    pub chosen: usize,
    pub utility_calls: u64,
}

impl SelectionResult {
    pub fn chosen_score(&self) -> f64 {
        self.ranking[0].1
    }

    pub fn validate(&self) -> Result<()> {
        match self.ranking.first() {
            Some(&(idx, _)) if idx == self.chosen => Ok(()),
            Some(&(idx, _)) => Err(Error::InvalidRecord(format!(
                "selection `{}`: chosen {} differs from top of ranking {idx}",
                self.seg_id, self.chosen
            ))),
            None => Err(Error::InvalidRecord(format!(
                "selection `{}`: empty ranking",
                self.seg_id
            ))),
        }
    }
}

/// How a distillation target was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMethod {
    Mbr,
    Qe,
    Beam,
    Greedy,
    Sample,
    Reference,
}

impl DecodeMethod {
    pub const ALL: [DecodeMethod; 6] = [
        DecodeMethod::Mbr,
        DecodeMethod::Qe,
        DecodeMethod::Beam,
        DecodeMethod::Greedy,
        DecodeMethod::Sample,
        DecodeMethod::Reference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecodeMethod::Mbr => "mbr",
            DecodeMethod::Qe => "qe",
            DecodeMethod::Beam => "beam",
            DecodeMethod::Greedy => "greedy",
            DecodeMethod::Sample => "sample",
            DecodeMethod::Reference => "reference",
        }
    }
}

impl fmt::Display for DecodeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecodeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecodeMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// One finetuning record.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillExample {
    pub seg_id: String,
    pub source: String,
    pub target: String,
    pub method: DecodeMethod,
    pub score: Option<f64>,
    pub teacher_id: String,
}

impl DistillExample {
    pub fn validate(&self) -> Result<()> {
        if self.seg_id.is_empty() {
            return Err(Error::InvalidRecord("seg_id must be non-empty".into()));
        }
        if self.target.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "record `{}`: target must be non-empty",
                self.seg_id
            )));
        }
        if self.method == DecodeMethod::Reference && self.score.is_some() {
            return Err(Error::InvalidRecord(format!(
                "record `{}`: reference records carry no score",
                self.seg_id
            )));
        }
        if let Some(s) = self.score {
            if !s.is_finite() {
                return Err(Error::InvalidRecord(format!(
                    "record `{}`: non-finite score",
                    self.seg_id
                )));
            }
        }
        Ok(())
    }
}
