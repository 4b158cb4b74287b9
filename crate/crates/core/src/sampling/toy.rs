//! Character-bigram "translation" model used for desk-scale runs.
//!
//! The next-character weight is the product of two add-one smoothed counts:
//! the target-side bigram count `(previous char -> next)` and the count of
//! `next` appearing opposite the source character at the same position.
//! Positions past the end of the source use the `<end>` row, which is where
//! end-of-sequence was observed in training.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenDistributionProvider;
use crate::error::{Error, Result};

/// Checked-in tab-separated parallel corpus the builtin model is trained on.
pub const TOY_PARALLEL_CORPUS: &str = include_str!("../../data/toy_parallel.tsv");

pub const START_OF_SEQUENCE: &str = "<s>";
pub const END_OF_SOURCE: &str = "<end>";
const EOS: &str = "</s>";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToyModelFile {
    vocabulary: Vec<String>,
    eos: String,
    max_len: usize,
    bigram_counts: BTreeMap<String, Vec<u64>>,
    source_counts: BTreeMap<String, Vec<u64>>,
}

#[derive(Clone, Debug)]
pub struct ToyBigramModel {
    vocabulary: Vec<String>,
    eos: usize,
    max_len: usize,
    bigram_counts: BTreeMap<String, Vec<u64>>,
    source_counts: BTreeMap<String, Vec<u64>>,
}

impl ToyBigramModel {
    /// Counts bigrams and position-aligned source/target characters.
    pub fn train<S: AsRef<str>>(pairs: &[(S, S)], max_len: usize) -> Self {
        let mut chars: Vec<String> = pairs
            .iter()
            .flat_map(|(_, t)| t.as_ref().chars().map(String::from))
            .collect();
        chars.sort();
        chars.dedup();
        let mut vocabulary = vec![EOS.to_string()];
        vocabulary.extend(chars);
        let index: HashMap<&str, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        let v = vocabulary.len();

        let mut bigram_counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        let mut source_counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for (src, tgt) in pairs {
            let src: Vec<String> = src.as_ref().chars().map(String::from).collect();
            let mut prev = START_OF_SEQUENCE.to_string();
            let tokens = tgt.as_ref().chars().map(String::from).chain([EOS.to_string()]);
            for (pos, tok) in tokens.enumerate() {
                let id = index[tok.as_str()];
                bigram_counts.entry(prev.clone()).or_insert_with(|| vec![0; v])[id] += 1;
                let aligned = src.get(pos).cloned().unwrap_or_else(|| END_OF_SOURCE.to_string());
                source_counts.entry(aligned).or_insert_with(|| vec![0; v])[id] += 1;
                prev = tok;
            }
        }
        ToyBigramModel {
            vocabulary,
            eos: 0,
            max_len,
            bigram_counts,
            source_counts,
        }
    }

    /// Parses `source<TAB>target` lines.
    pub fn train_tsv(tsv: &str, max_len: usize) -> Result<Self> {
        let pairs = tsv
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.split_once('\t')
                    .map(|(s, t)| (s.to_string(), t.to_string()))
                    .ok_or_else(|| Error::Parse {
                        line: i + 1,
                        message: "expected source<TAB>target".into(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::train(&pairs, max_len))
    }

    /// The model trained on [`TOY_PARALLEL_CORPUS`], max length 64.
    pub fn builtin() -> Self {
        Self::train_tsv(TOY_PARALLEL_CORPUS, 64).expect("checked-in corpus is well formed")
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: ToyModelFile =
            serde_json::from_str(json).map_err(|e| Error::InvalidRecord(format!("toy model: {e}")))?;
        let eos = file
            .vocabulary
            .iter()
            .position(|v| *v == file.eos)
            .ok_or_else(|| Error::InvalidRecord("toy model: eos not in vocabulary".into()))?;
        let v = file.vocabulary.len();
        for (k, row) in file.bigram_counts.iter().chain(&file.source_counts) {
            if row.len() != v {
                return Err(Error::InvalidRecord(format!(
                    "toy model: row `{k}` has {} counts for {v} tokens",
                    row.len()
                )));
            }
        }
        if file.max_len == 0 {
            return Err(Error::InvalidRecord("toy model: max_len must be >= 1".into()));
        }
        Ok(ToyBigramModel {
            vocabulary: file.vocabulary,
            eos,
            max_len: file.max_len,
            bigram_counts: file.bigram_counts,
            source_counts: file.source_counts,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let file = ToyModelFile {
            vocabulary: self.vocabulary.clone(),
            eos: self.vocabulary[self.eos].clone(),
            max_len: self.max_len,
            bigram_counts: self.bigram_counts.clone(),
            source_counts: self.source_counts.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }
}

impl TokenDistributionProvider for ToyBigramModel {
    fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    fn eos(&self) -> usize {
        self.eos
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn distribution(&self, prefix: &[usize], source: &str) -> Vec<f64> {
        let prev = prefix
            .last()
            .map(|&t| self.vocabulary[t].as_str())
            .unwrap_or(START_OF_SEQUENCE);
        let aligned = source
            .chars()
            .nth(prefix.len())
            .map(String::from)
            .unwrap_or_else(|| END_OF_SOURCE.to_string());
        let bigram = self.bigram_counts.get(prev);
        let src = self.source_counts.get(&aligned);
        let weights: Vec<f64> = (0..self.vocabulary.len())
            .map(|i| {
                let b = bigram.map_or(0, |r| r[i]) + 1;
                let s = src.map_or(0, |r| r[i]) + 1;
                (b * s) as f64
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }
}
