use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::bleu::{bleu_from_stats, bleu_stats, BleuConfig};
use super::chrf::{chrf_from_stats, ChrfConfig, ChrfStats};
use super::scorer::{self, ScoreMode, ScoreRequest, ScorerClient};
use crate::error::{Error, Result};
use crate::types::{UtilityBackend, UtilityFunction, UtilityKind};

/// One utility evaluation: a hypothesis conditioned on a reference (u(h, r))
/// or on the source (u(h, s)).
#[derive(Clone, Copy, Debug)]
pub struct UtilityQuery<'a> {
    pub source: &'a str,
    pub hypothesis: &'a str,
    pub reference: Option<&'a str>,
}

pub trait Utility: Send + Sync {
    fn descriptor(&self) -> &UtilityFunction;

    /// Scores a batch; the i-th output belongs to the i-th query.
    fn score_batch(&self, queries: &[UtilityQuery<'_>]) -> Result<Vec<f64>>;

    fn kind(&self) -> UtilityKind {
        self.descriptor().kind
    }
}

impl<U: Utility + ?Sized> Utility for Box<U> {
    fn descriptor(&self) -> &UtilityFunction {
        (**self).descriptor()
    }
    fn score_batch(&self, queries: &[UtilityQuery<'_>]) -> Result<Vec<f64>> {
        (**self).score_batch(queries)
    }
}

impl<U: Utility + ?Sized> Utility for &U {
    fn descriptor(&self) -> &UtilityFunction {
        (**self).descriptor()
    }
    fn score_batch(&self, queries: &[UtilityQuery<'_>]) -> Result<Vec<f64>> {
        (**self).score_batch(queries)
    }
}

fn conditioning<'a>(desc: &UtilityFunction, q: &UtilityQuery<'a>) -> Result<&'a str> {
    match desc.kind {
        UtilityKind::ReferenceFree => Ok(q.source),
        UtilityKind::ReferenceBased => q.reference.ok_or_else(|| {
            Error::Config(format!("utility `{}` needs a reference", desc.name))
        }),
    }
}

/// chrF or sentence BLEU computed in-process.
pub struct BuiltinUtility {
    desc: UtilityFunction,
    chrf: ChrfConfig,
    bleu: BleuConfig,
}

impl BuiltinUtility {
    pub fn new(desc: UtilityFunction) -> Result<Self> {
        if desc.backend == UtilityBackend::External {
            return Err(Error::Config(format!("`{}` is not a builtin utility", desc.name)));
        }
        Ok(BuiltinUtility {
            desc,
            chrf: ChrfConfig::default(),
            bleu: BleuConfig::sentence(),
        })
    }
}

impl Utility for BuiltinUtility {
    fn descriptor(&self) -> &UtilityFunction {
        &self.desc
    }

    fn score_batch(&self, queries: &[UtilityQuery<'_>]) -> Result<Vec<f64>> {
        match self.desc.backend {
            UtilityBackend::BuiltinChrf => {
                // n-gram statistics are shared between queries naming the same text
                let mut cache: HashMap<&str, ChrfStats> = HashMap::new();
                let mut out = Vec::with_capacity(queries.len());
                for q in queries {
                    let other = conditioning(&self.desc, q)?;
                    for t in [q.hypothesis, other] {
                        if !cache.contains_key(t) {
                            cache.insert(t, ChrfStats::new(t, &self.chrf));
                        }
                    }
                    out.push(chrf_from_stats(&cache[q.hypothesis], &cache[other], self.chrf.beta));
                }
                Ok(out)
            }
            UtilityBackend::BuiltinSentenceBleu => queries
                .iter()
                .map(|q| {
                    let other = conditioning(&self.desc, q)?;
                    Ok(bleu_from_stats(&bleu_stats(q.hypothesis, other, &self.bleu), self.bleu.smoothing))
                })
                .collect(),
            UtilityBackend::External => unreachable!("rejected in constructor"),
        }
    }
}

/// Utility backed by a scorer process or service.
///
/// Clients are pooled: each concurrent caller takes its own connection and
/// returns it afterwards, so no connection is used by two workers at once.
pub struct ExternalUtility {
    desc: UtilityFunction,
    pool: Mutex<Vec<Box<dyn ScorerClient>>>,
}

impl ExternalUtility {
    pub fn new(desc: UtilityFunction) -> Result<Self> {
        desc.validate()?;
        Ok(ExternalUtility { desc, pool: Mutex::new(Vec::new()) })
    }

    fn mode(&self) -> ScoreMode {
        match self.desc.kind {
            UtilityKind::ReferenceFree => ScoreMode::Qe,
            UtilityKind::ReferenceBased => ScoreMode::Ref,
        }
    }

    fn checkout(&self) -> Result<Box<dyn ScorerClient>> {
        if let Some(c) = self.pool.lock().expect("pool lock").pop() {
            return Ok(c);
        }
        let endpoint = self.desc.endpoint.as_ref().expect("validated");
        let (client, health) = scorer::connect(endpoint)?;
        if health.mode != self.mode() {
            return Err(Error::Config(format!(
                "scorer `{}` serves mode {:?} but utility `{}` needs {:?}",
                health.metric,
                health.mode,
                self.desc.name,
                self.mode()
            )));
        }
        Ok(client)
    }
}

impl Utility for ExternalUtility {
    fn descriptor(&self) -> &UtilityFunction {
        &self.desc
    }

    fn score_batch(&self, queries: &[UtilityQuery<'_>]) -> Result<Vec<f64>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let mode = self.mode();
        let requests = queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let reference = match mode {
                    ScoreMode::Ref => Some(conditioning(&self.desc, q)?.to_string()),
                    ScoreMode::Qe => None,
                };
                Ok(ScoreRequest {
                    id: i.to_string(),
                    mode,
                    source: q.source.to_string(),
                    hypothesis: q.hypothesis.to_string(),
                    reference,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut client = self.checkout()?;
        let responses = scorer::score_batch(client.as_mut(), &requests)?;
        self.pool.lock().expect("pool lock").push(client);
        Ok(responses.into_iter().map(|r| r.score).collect())
    }
}

/// Counts every evaluation passed through to the wrapped utility.
pub struct CountingUtility<U> {
    inner: U,
    calls: AtomicU64,
}

impl<U: Utility> CountingUtility<U> {
    pub fn new(inner: U) -> Self {
        CountingUtility { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn into_inner(self) -> U {
        self.inner
    }
}

impl<U: Utility> Utility for CountingUtility<U> {
    fn descriptor(&self) -> &UtilityFunction {
        self.inner.descriptor()
    }

    fn score_batch(&self, queries: &[UtilityQuery<'_>]) -> Result<Vec<f64>> {
        self.calls.fetch_add(queries.len() as u64, Ordering::SeqCst);
        self.inner.score_batch(queries)
    }
}

/// Wraps a scoring closure as a utility; handy for custom metrics.
pub struct FnUtility<F> {
    desc: UtilityFunction,
    f: F,
}

impl<F> FnUtility<F>
where
    F: Fn(&UtilityQuery<'_>) -> f64 + Send + Sync,
{
    pub fn new(name: &str, kind: UtilityKind, f: F) -> Self {
        FnUtility {
            desc: UtilityFunction {
                name: name.to_string(),
                kind,
                backend: UtilityBackend::External,
                endpoint: None,
            },
            f,
        }
    }
}

impl<F> Utility for FnUtility<F>
where
    F: Fn(&UtilityQuery<'_>) -> f64 + Send + Sync,
{
    fn descriptor(&self) -> &UtilityFunction {
        &self.desc
    }

    fn score_batch(&self, queries: &[UtilityQuery<'_>]) -> Result<Vec<f64>> {
        Ok(queries.iter().map(|q| (self.f)(q)).collect())
    }
}

/// Builds a scorer for a resolved descriptor.
pub fn instantiate(desc: &UtilityFunction) -> Result<Box<dyn Utility>> {
    desc.validate()?;
    Ok(match desc.backend {
        UtilityBackend::External => Box::new(ExternalUtility::new(desc.clone())?),
        _ => Box::new(BuiltinUtility::new(desc.clone())?),
    })
}
