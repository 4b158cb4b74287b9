use crate::error::{Error, Result};

/// Tolerance on the mass of distributions accepted from callers.
pub const INPUT_MASS_TOLERANCE: f64 = 1e-6;

/// Result of truncating one step distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Truncation {
    pub probs: Vec<f64>,
    /// No entry reached epsilon, so only the argmax was kept.
    pub fallback: bool,
}

pub(crate) fn check_distribution(dist: &[f64], tolerance: f64) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    let mut total = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > tolerance {
        return Err(Error::InvalidDistribution(format!("mass {total} is not 1")));
    }
    Ok(())
}

pub(crate) fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Zeroes every entry below `epsilon` and renormalizes the rest.
///
/// When nothing reaches `epsilon` the argmax (lowest index on ties) is kept
/// with probability 1.
pub fn truncate(dist: &[f64], epsilon: f64) -> Result<Truncation> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1)")));
    }
    check_distribution(dist, INPUT_MASS_TOLERANCE)?;
    let kept: f64 = dist.iter().filter(|&&p| p >= epsilon && p > 0.0).sum();
    if kept == 0.0 {
        let mut probs = vec![0.0; dist.len()];
        probs[argmax(dist)] = 1.0;
        return Ok(Truncation { probs, fallback: true });
    }
    let probs = dist
        .iter()
        .map(|&p| if p >= epsilon && p > 0.0 { p / kept } else { 0.0 })
        .collect();
    Ok(Truncation { probs, fallback: false })
}

/// Epsilon truncation of a single step distribution.
pub fn epsilon_truncate(dist: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    truncate(dist, epsilon).map(|t| t.probs)
}
