//! Random toy providers and exhaustive oracles for the decoders and MBR.
#![allow(dead_code)]

use std::collections::HashMap;

use mbrkit::sampling::{length_penalty, TokenDistributionProvider};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Provider whose step distribution is a fixed random function of the prefix.
/// Token 0 is end-of-sequence; all probabilities are strictly positive.
pub struct TableProvider {
    vocab: Vec<String>,
    max_len: usize,
    table: HashMap<Vec<usize>, Vec<f64>>,
}

impl TableProvider {
    pub fn random(seed: u64, vocab_size: usize, max_len: usize) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut table = HashMap::new();
        let mut frontier = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for prefix in frontier {
                let raw: Vec<f64> = (0..vocab_size).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let dist: Vec<f64> = raw.iter().map(|x| x / total).collect();
                for t in 1..vocab_size {
                    let mut p: Vec<usize> = prefix.clone();
                    p.push(t);
                    next.push(p);
                }
                table.insert(prefix, dist);
            }
            frontier = next;
        }
        let vocab = (0..vocab_size)
            .map(|i| if i == 0 { "</s>".to_string() } else { ((b'a' + i as u8 - 1) as char).to_string() })
            .collect();
        TableProvider { vocab, max_len, table }
    }
}

impl TokenDistributionProvider for TableProvider {
    fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    fn eos(&self) -> usize {
        0
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn distribution(&self, prefix: &[usize], _source: &str) -> Vec<f64> {
        self.table[prefix].clone()
    }
}

/// Best finished sequence by `logprob / lp(len)` over every sequence of at
/// most `max_len` tokens; ties go to the smaller token sequence.
pub fn exhaustive_best(p: &TableProvider, alpha: f64) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stack = vec![(Vec::new(), 0.0f64)];
    while let Some((prefix, lp)) = stack.pop() {
        if prefix.len() == p.max_len {
            continue;
        }
        let dist = p.distribution(&prefix, "");
        for (t, &prob) in dist.iter().enumerate() {
            let mut seq = prefix.clone();
            seq.push(t);
            let logprob = lp + prob.ln();
            if t == 0 {
                let score = logprob / length_penalty(seq.len(), alpha);
                let better = match &best {
                    None => true,
                    Some((bs, bscore)) => score > *bscore || (score == *bscore && seq < *bs),
                };
                if better {
                    best = Some((seq, score));
                }
            } else {
                stack.push((seq, logprob));
            }
        }
    }
    best.expect("end-of-sequence always has positive probability")
}

/// Double-loop MBR: returns (winning position, expected utility per candidate).
pub fn mbr_brute(cands: &[String], include_self: bool, u: impl Fn(&str, &str) -> f64) -> (usize, Vec<f64>) {
    let n = cands.len();
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in 0..n {
            if i == j && !include_self {
                continue;
            }
            sum += u(&cands[i], &cands[j]);
            count += 1;
        }
        scores.push(if count == 0 { 0.0 } else { sum / count as f64 });
    }
    let mut best = 0;
    for i in 1..n {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    (best, scores)
}

/// Random strings over `alphabet` with lengths in `1..=max_len`.
pub fn random_strings(rng: &mut StdRng, count: usize, alphabet: &[char], max_len: usize) -> Vec<String> {
    (0..count)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        })
        .collect()
}
