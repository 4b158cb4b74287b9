//! Candidate generation and cheap decoding over a pluggable token distribution.

mod epsilon;
mod rng;
mod search;
mod toy;

pub use epsilon::{epsilon_truncate, truncate, Truncation, INPUT_MASS_TOLERANCE};
pub use rng::SampleRng;
pub use search::{beam_decode, greedy_decode, length_penalty, BeamConfig, BeamOutput};
pub use toy::{ToyBigramModel, END_OF_SOURCE, START_OF_SEQUENCE, TOY_PARALLEL_CORPUS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Candidate, CandidateSet, Segment};

/// Mass tolerance for distributions returned by providers.
pub const PROVIDER_MASS_TOLERANCE: f64 = 1e-9;

/// Next-token distribution of a (toy or real) translation model.
///
/// Implementations must be deterministic and read-only: the same prefix and
/// source always produce the same vector, and concurrent calls are allowed.
pub trait TokenDistributionProvider: Send + Sync {
    /// Token strings; index `eos()` is the end-of-sequence symbol.
    fn vocabulary(&self) -> &[String];

    fn eos(&self) -> usize;

    /// Default decoding length limit.
    fn max_len(&self) -> usize;

    /// Probability of each vocabulary entry following `prefix`.
    fn distribution(&self, prefix: &[usize], source: &str) -> Vec<f64>;

    /// Joins token strings, skipping end-of-sequence.
    fn detokenize(&self, tokens: &[usize]) -> String {
        let vocab = self.vocabulary();
        tokens
            .iter()
            .filter(|&&t| t != self.eos())
            .map(|&t| vocab[t].as_str())
            .collect()
    }
}

/// Fetches a step distribution and checks the provider contract.
pub(crate) fn step_distribution(
    provider: &dyn TokenDistributionProvider,
    prefix: &[usize],
    source: &str,
) -> Result<Vec<f64>> {
    let dist = provider.distribution(prefix, source);
    if dist.len() != provider.vocabulary().len() {
        return Err(Error::InvalidDistribution(format!(
            "provider returned {} probabilities for a vocabulary of {}",
            dist.len(),
            provider.vocabulary().len()
        )));
    }
    epsilon::check_distribution(&dist, PROVIDER_MASS_TOLERANCE)?;
    Ok(dist)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub epsilon: f64,
    pub num_samples: usize,
    pub seed: u64,
    /// Length limit in tokens; `None` uses the provider's limit.
    pub max_len: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            epsilon: 0.02,
            num_samples: 256,
            seed: 0,
            max_len: None,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1)", self.epsilon)));
        }
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if self.max_len == Some(0) {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// A sampled token sequence with per-step bookkeeping.
#[derive(Clone, Debug)]
pub struct SampledSequence {
    pub tokens: Vec<usize>,
    /// Pre-truncation probability of each emitted token.
    pub original_probs: Vec<f64>,
    /// Whether each step fell back to argmax-only truncation.
    pub fallback_steps: Vec<bool>,
    pub logprob: f64,
    pub finished: bool,
}

/// Draws one sequence by ancestral epsilon sampling.
pub fn sample_sequence(
    provider: &dyn TokenDistributionProvider,
    source: &str,
    epsilon: f64,
    max_len: usize,
    rng: &mut SampleRng,
) -> Result<SampledSequence> {
    let eos = provider.eos();
    let mut seq = SampledSequence {
        tokens: Vec::new(),
        original_probs: Vec::new(),
        fallback_steps: Vec::new(),
        logprob: 0.0,
        finished: false,
    };
    while seq.tokens.len() < max_len {
        let dist = step_distribution(provider, &seq.tokens, source)?;
        let t = truncate(&dist, epsilon)?;
        let token = draw(&t.probs, rng.next_unit());
        seq.logprob += t.probs[token].ln();
        seq.original_probs.push(dist[token]);
        seq.fallback_steps.push(t.fallback);
        seq.tokens.push(token);
        if token == eos {
            seq.finished = true;
            break;
        }
    }
    Ok(seq)
}

/// Inverse-CDF draw restricted to the support of `probs`.
fn draw(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

/// Draws `cfg.num_samples` candidates for one segment.
///
/// Sample `i` uses its own stream derived from `(seed, seg_id, i)`, so the
/// result does not depend on how segments are distributed over workers.
pub fn sample_candidates(
    provider: &dyn TokenDistributionProvider,
    segment: &Segment,
    cfg: &SamplingConfig,
) -> Result<CandidateSet> {
    cfg.validate()?;
    let max_len = cfg.max_len.unwrap_or_else(|| provider.max_len());
    let candidates = (0..cfg.num_samples)
        .map(|i| {
            let mut rng = SampleRng::derive(cfg.seed, &segment.seg_id, i);
            let seq = sample_sequence(provider, &segment.source, cfg.epsilon, max_len, &mut rng)?;
            Ok(Candidate {
                text: provider.detokenize(&seq.tokens),
                logprob: Some(seq.logprob),
                sample_index: i,
                truncated: !seq.finished,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet {
        segment: segment.clone(),
        candidates,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = available parallelism).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Samples every segment in parallel; output order follows `segments`.
pub fn sample_corpus(
    provider: &dyn TokenDistributionProvider,
    segments: &[Segment],
    cfg: &SamplingConfig,
    workers: usize,
) -> Result<Vec<CandidateSet>> {
    with_workers(workers, || {
        segments
            .par_iter()
            .map(|s| sample_candidates(provider, s, cfg))
            .collect::<Result<Vec<_>>>()
    })?
}

#[cfg(test)]
pub(crate) mod test_providers {
    use super::*;

    /// Returns the same distribution at every step.
    pub struct Fixed {
        pub vocab: Vec<String>,
        pub dist: Vec<f64>,
        pub max_len: usize,
    }

    impl Fixed {
        pub fn new(dist: Vec<f64>, max_len: usize) -> Self {
            let vocab = (0..dist.len())
                .map(|i| if i == 0 { "</s>".to_string() } else { ((b'a' + i as u8 - 1) as char).to_string() })
                .collect();
            Fixed { vocab, dist, max_len }
        }
    }

    impl TokenDistributionProvider for Fixed {
        fn vocabulary(&self) -> &[String] {
            &self.vocab
        }
        fn eos(&self) -> usize {
            0
        }
        fn max_len(&self) -> usize {
            self.max_len
        }
        fn distribution(&self, _prefix: &[usize], _source: &str) -> Vec<f64> {
            self.dist.clone()
        }
    }

    /// Spells a fixed word with probability one, then ends.
    pub struct Forced {
        pub vocab: Vec<String>,
        pub word: Vec<usize>,
    }

    impl Forced {
        pub fn new(word: &str) -> Self {
            let mut vocab = vec!["</s>".to_string()];
            let mut ids = Vec::new();
            for ch in word.chars() {
                let s = ch.to_string();
                let id = match vocab.iter().position(|v| *v == s) {
                    Some(id) => id,
                    None => {
                        vocab.push(s);
                        vocab.len() - 1
                    }
                };
                ids.push(id);
            }
            Forced { vocab, word: ids }
        }
    }

    impl TokenDistributionProvider for Forced {
        fn vocabulary(&self) -> &[String] {
            &self.vocab
        }
        fn eos(&self) -> usize {
            0
        }
        fn max_len(&self) -> usize {
            self.word.len() + 4
        }
        fn distribution(&self, prefix: &[usize], _source: &str) -> Vec<f64> {
            let mut d = vec![0.0; self.vocab.len()];
            d[*self.word.get(prefix.len()).unwrap_or(&0)] = 1.0;
            d
        }
    }
}
