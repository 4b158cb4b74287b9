use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChrfConfig {
    pub max_ngram_order: usize,
    pub beta: f64,
    pub remove_whitespace: bool,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig {
            max_ngram_order: 6,
            beta: 2.0,
            remove_whitespace: true,
        }
    }
}

impl ChrfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_ngram_order == 0 {
            return Err(Error::Config("chrF order must be >= 1".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("chrF beta {} must be > 0", self.beta)));
        }
        Ok(())
    }
}

/// Character n-gram counts of one string, orders `1..=max_order`.
#[derive(Clone, Debug)]
pub struct ChrfStats {
    orders: Vec<HashMap<String, u32>>,
    totals: Vec<u32>,
}

impl ChrfStats {
    pub fn new(text: &str, cfg: &ChrfConfig) -> Self {
        let chars: Vec<char> = if cfg.remove_whitespace {
            text.chars().filter(|c| !c.is_whitespace()).collect()
        } else {
            text.chars().collect()
        };
        let mut orders = Vec::with_capacity(cfg.max_ngram_order);
        let mut totals = Vec::with_capacity(cfg.max_ngram_order);
        for n in 1..=cfg.max_ngram_order {
            let mut counts = HashMap::new();
            let mut total = 0;
            for w in chars.windows(n) {
                *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
                total += 1;
            }
            orders.push(counts);
            totals.push(total);
        }
        ChrfStats { orders, totals }
    }
}

/// chrF from precomputed statistics; both must come from the same config.
///
/// Precision and recall are averaged over the orders for which the reference
/// has at least one n-gram. An order where only the hypothesis is empty
/// contributes zero to both averages.
pub fn chrf_from_stats(hyp: &ChrfStats, reference: &ChrfStats, beta: f64) -> f64 {
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut effective = 0usize;
    for ((h, &h_total), (r, &r_total)) in hyp
        .orders
        .iter()
        .zip(&hyp.totals)
        .zip(reference.orders.iter().zip(&reference.totals))
    {
        if r_total == 0 {
            continue;
        }
        effective += 1;
        let matches: u32 = h
            .iter()
            .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
            .sum();
        if h_total > 0 {
            precision += matches as f64 / h_total as f64;
        }
        recall += matches as f64 / r_total as f64;
    }
    if effective == 0 {
        return 0.0;
    }
    let p = precision / effective as f64;
    let r = recall / effective as f64;
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + b2) * p * r / denom
}

/// Character n-gram F-score in `[0, 100]`.
pub fn chrf(hypothesis: &str, reference: &str, cfg: &ChrfConfig) -> f64 {
    chrf_from_stats(
        &ChrfStats::new(hypothesis, cfg),
        &ChrfStats::new(reference, cfg),
        cfg.beta,
    )
}
