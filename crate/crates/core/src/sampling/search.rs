use serde::{Deserialize, Serialize};

use super::{epsilon::argmax, step_distribution, TokenDistributionProvider};
use crate::error::{Error, Result};
use crate::types::{Candidate, Segment};

/// Length normalizer `((5 + length) / 6)^alpha` (GNMT form).
pub fn length_penalty(length: usize, alpha: f64) -> f64 {
    ((5.0 + length as f64) / 6.0).powf(alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub alpha: f64,
    /// Length limit in tokens (end-of-sequence included); `None` uses the provider's limit.
    pub max_len: Option<usize>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 4,
            alpha: 0.5,
            max_len: None,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha {} must be >= 0", self.alpha)));
        }
        if self.max_len == Some(0) {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Best beam hypothesis: raw log-probability lives in the candidate, the
/// length-normalized score alongside it.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    pub candidate: Candidate,
    pub score: f64,
}

#[derive(Clone, Debug)]
struct Hyp {
    tokens: Vec<usize>,
    logprob: f64,
}

/// Higher score first; equal scores fall back to token order.
fn rank(a: (f64, &[usize]), b: (f64, &[usize])) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Argmax decoding until end-of-sequence or `max_len` tokens.
pub fn greedy_decode(
    provider: &dyn TokenDistributionProvider,
    segment: &Segment,
    max_len: Option<usize>,
) -> Result<Candidate> {
    let max_len = max_len.unwrap_or_else(|| provider.max_len());
    let eos = provider.eos();
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    let mut finished = false;
    while tokens.len() < max_len {
        let dist = step_distribution(provider, &tokens, &segment.source)?;
        let t = argmax(&dist);
        logprob += dist[t].ln();
        tokens.push(t);
        if t == eos {
            finished = true;
            break;
        }
    }
    Ok(Candidate {
        text: provider.detokenize(&tokens),
        logprob: Some(logprob),
        sample_index: 0,
        truncated: !finished,
    })
}

/// Beam search; finished hypotheses are ranked by
/// `logprob / length_penalty(len, alpha)` where `len` counts end-of-sequence.
///
/// If nothing finishes within `max_len`, the best unfinished hypothesis is
/// returned with `truncated` set.
pub fn beam_decode(
    provider: &dyn TokenDistributionProvider,
    segment: &Segment,
    cfg: &BeamConfig,
) -> Result<BeamOutput> {
    cfg.validate()?;
    let max_len = cfg.max_len.unwrap_or_else(|| provider.max_len());
    let eos = provider.eos();
    let penalized = |h: &Hyp| h.logprob / length_penalty(h.tokens.len(), cfg.alpha);

    let mut live = vec![Hyp { tokens: Vec::new(), logprob: 0.0 }];
    let mut finished: Vec<(f64, Hyp)> = Vec::new();

    for _ in 0..max_len {
        let mut expansions = Vec::new();
        for h in &live {
            let dist = step_distribution(provider, &h.tokens, &segment.source)?;
            for (t, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    let mut tokens = h.tokens.clone();
                    tokens.push(t);
                    expansions.push(Hyp { tokens, logprob: h.logprob + p.ln() });
                }
            }
        }
        expansions.sort_by(|a, b| rank((a.logprob, &a.tokens), (b.logprob, &b.tokens)));
        expansions.truncate(cfg.beam_size);

        live.clear();
        for h in expansions {
            if h.tokens.last() == Some(&eos) {
                finished.push((penalized(&h), h));
            } else {
                live.push(h);
            }
        }
        finished.sort_by(|a, b| rank((a.0, &a.1.tokens), (b.0, &b.1.tokens)));
        finished.truncate(cfg.beam_size);

        if live.is_empty() {
            break;
        }
        if finished.len() >= cfg.beam_size {
            // no continuation can beat logprob / lp(max_len): logprob only falls, lp only grows
            let bound = live[0].logprob / length_penalty(max_len, cfg.alpha);
            let worst = finished.last().map(|f| f.0).unwrap_or(f64::NEG_INFINITY);
            if bound < worst {
                break;
            }
        }
    }

    let (score, best, done) = match finished.into_iter().next() {
        Some((score, h)) => (score, h, true),
        None => {
            let h = live
                .into_iter()
                .min_by(|a, b| rank((penalized(a), &a.tokens), (penalized(b), &b.tokens)))
                .ok_or_else(|| Error::InvalidDistribution("beam search produced no hypothesis".into()))?;
            (penalized(&h), h, false)
        }
    };
    Ok(BeamOutput {
        candidate: Candidate {
            text: provider.detokenize(&best.tokens),
            logprob: Some(best.logprob),
            sample_index: 0,
            truncated: !done,
        },
        score,
    })
}
