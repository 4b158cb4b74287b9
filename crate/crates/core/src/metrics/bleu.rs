use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerator used for zero-match orders under floor smoothing.
pub const FLOOR_SMOOTHING_VALUE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    Floor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenization {
    Whitespace,
    /// Characters with whitespace removed.
    Char,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_ngram_order: usize,
    pub smoothing: Smoothing,
    pub tokenization: Tokenization,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self::sentence()
    }
}

impl BleuConfig {
    /// Sentence-level defaults: BLEU-4, floor smoothing, whitespace tokens.
    pub fn sentence() -> Self {
        BleuConfig {
            max_ngram_order: 4,
            smoothing: Smoothing::Floor,
            tokenization: Tokenization::Whitespace,
        }
    }

    /// Corpus-level defaults: BLEU-4, no smoothing, whitespace tokens.
    pub fn corpus() -> Self {
        BleuConfig {
            smoothing: Smoothing::None,
            ..Self::sentence()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_ngram_order == 0 {
            return Err(Error::Config("BLEU order must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sufficient statistics; summing them across sentences gives corpus BLEU.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn add(&mut self, other: &BleuStats) {
        if self.matches.len() < other.matches.len() {
            self.matches.resize(other.matches.len(), 0);
            self.totals.resize(other.totals.len(), 0);
        }
        for (i, (m, t)) in other.matches.iter().zip(&other.totals).enumerate() {
            self.matches[i] += m;
            self.totals[i] += t;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }
}

fn tokenize(text: &str, tok: Tokenization) -> Vec<String> {
    match tok {
        Tokenization::Whitespace => text.split_whitespace().map(str::to_string).collect(),
        Tokenization::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

pub fn bleu_stats(hypothesis: &str, reference: &str, cfg: &BleuConfig) -> BleuStats {
    let h = tokenize(hypothesis, cfg.tokenization);
    let r = tokenize(reference, cfg.tokenization);
    let mut stats = BleuStats {
        matches: Vec::with_capacity(cfg.max_ngram_order),
        totals: Vec::with_capacity(cfg.max_ngram_order),
        hyp_len: h.len() as u64,
        ref_len: r.len() as u64,
    };
    for n in 1..=cfg.max_ngram_order {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        let matched = hc
            .iter()
            .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        stats.matches.push(matched);
        stats.totals.push(h.len().saturating_sub(n - 1) as u64);
    }
    stats
}

/// BLEU in `[0, 100]` from (possibly summed) statistics.
///
/// Orders with no hypothesis n-grams are left out of the geometric mean, so a
/// hypothesis shorter than the maximum order is scored over the orders it has.
pub fn bleu_from_stats(stats: &BleuStats, smoothing: Smoothing) -> f64 {
    if stats.hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for (&m, &t) in stats.matches.iter().zip(&stats.totals) {
        if t == 0 {
            continue;
        }
        orders += 1;
        let p = if m > 0 {
            m as f64 / t as f64
        } else {
            match smoothing {
                Smoothing::None => return 0.0,
                Smoothing::Floor => FLOOR_SMOOTHING_VALUE / t as f64,
            }
        };
        log_sum += p.ln();
    }
    if orders == 0 {
        return 0.0;
    }
    let bp = (1.0 - stats.ref_len as f64 / stats.hyp_len as f64).min(0.0).exp();
    100.0 * bp * (log_sum / orders as f64).exp()
}

pub fn sentence_bleu(hypothesis: &str, reference: &str, cfg: &BleuConfig) -> f64 {
    bleu_from_stats(&bleu_stats(hypothesis, reference, cfg), cfg.smoothing)
}

/// Corpus BLEU: statistics are summed over pairs before scoring.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(pairs: &[(H, R)], cfg: &BleuConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("corpus_bleu needs at least one pair".into()));
    }
    let mut total = BleuStats::default();
    for (h, r) in pairs {
        total.add(&bleu_stats(h.as_ref(), r.as_ref(), cfg));
    }
    Ok(bleu_from_stats(&total, cfg.smoothing))
}

/// Outputs of one system keyed by seg_id.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemOutputs {
    pub name: String,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossBleu {
    pub systems: Vec<String>,
    /// `matrix[i][j]`: corpus BLEU of system `i` scored against system `j`.
    pub matrix: Vec<Vec<f64>>,
}

/// Pairwise corpus BLEU between systems covering the same seg_ids.
pub fn cross_bleu_matrix(systems: &[SystemOutputs], cfg: &BleuConfig) -> Result<CrossBleu> {
    if let Some(first) = systems.first() {
        let keys: BTreeSet<&String> = first.outputs.keys().collect();
        for other in &systems[1..] {
            let other_keys: BTreeSet<&String> = other.outputs.keys().collect();
            if keys != other_keys {
                let only_first: Vec<_> = keys.difference(&other_keys).map(|s| s.as_str()).collect();
                let only_other: Vec<_> = other_keys.difference(&keys).map(|s| s.as_str()).collect();
                return Err(Error::SegmentMismatch(format!(
                    "only in `{}`: [{}]; only in `{}`: [{}]",
                    first.name,
                    only_first.join(", "),
                    other.name,
                    only_other.join(", ")
                )));
            }
        }
    }
    let n = systems.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            matrix[i][j] = if i == j {
                100.0
            } else {
                let pairs: Vec<(&str, &str)> = systems[i]
                    .outputs
                    .iter()
                    .map(|(k, h)| (h.as_str(), systems[j].outputs[k].as_str()))
                    .collect();
                corpus_bleu(&pairs, cfg)?
            };
        }
    }
    Ok(CrossBleu {
        systems: systems.iter().map(|s| s.name.clone()).collect(),
        matrix,
    })
}
