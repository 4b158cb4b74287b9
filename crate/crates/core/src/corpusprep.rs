//! Length, ratio and duplicate filters for parallel and monolingual corpora.
//!
//! A token is a whitespace-delimited unit.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RULE_SOURCE_LENGTH: &str = "source_too_long";
pub const RULE_LENGTH_RATIO: &str = "length_ratio";
pub const RULE_DUPLICATE: &str = "duplicate";
pub const RULE_EXTERNAL: &str = "external_hook";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dedup {
    None,
    ExactPair,
    ExactSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub max_source_tokens: usize,
    pub max_length_ratio: f64,
    pub dedup: Dedup,
    /// Apply the ratio as source/target only instead of max/min.
    pub strict_direction: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_source_tokens: 250,
            max_length_ratio: 1.5,
            dedup: Dedup::ExactPair,
            strict_direction: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_source_tokens == 0 {
            return Err(Error::Config("max_source_tokens must be >= 1".into()));
        }
        if !(self.max_length_ratio > 0.0) {
            return Err(Error::Config("max_length_ratio must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub dropped_by_rule: BTreeMap<String, usize>,
}

impl FilterReport {
    fn drop(&mut self, rule: &str) {
        *self.dropped_by_rule.entry(rule.to_string()).or_insert(0) += 1;
    }

    pub fn dropped(&self) -> usize {
        self.dropped_by_rule.values().sum()
    }
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn ratio_violated(src_tokens: usize, tgt_tokens: usize, cfg: &FilterConfig) -> bool {
    let (num, den) = if cfg.strict_direction {
        (src_tokens, tgt_tokens)
    } else {
        (src_tokens.max(tgt_tokens), src_tokens.min(tgt_tokens))
    };
    match (num, den) {
        (0, 0) => false,
        (_, 0) => true,
        _ => num as f64 / den as f64 > cfg.max_length_ratio,
    }
}

/// Keep/drop decision supplied from outside (e.g. a language-id classifier).
pub trait PairHook {
    /// One verdict per pair; `true` keeps the pair.
    fn keep(&mut self, pairs: &[(String, String)]) -> Result<Vec<bool>>;
}

/// Runs a command that reads `source\ttarget` lines on stdin and answers one
/// `1` (keep) or `0` (drop) line per input line.
pub struct CommandHook {
    pub command: String,
}

impl PairHook for CommandHook {
    fn keep(&mut self, pairs: &[(String, String)]) -> Result<Vec<bool>> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start `{}`: {e}", self.command)))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let payload: String = pairs.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(payload.as_bytes()));
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut verdicts = Vec::with_capacity(pairs.len());
        for line in stdout.lines() {
            let line = line?;
            match line.trim() {
                "1" => verdicts.push(true),
                "0" => verdicts.push(false),
                other => {
                    return Err(Error::Protocol {
                        message: "hook must answer 0 or 1".into(),
                        raw: other.to_string(),
                    })
                }
            }
        }
        writer
            .join()
            .map_err(|_| Error::Transport("hook writer panicked".into()))??;
        let status = child.wait()?;
        if !status.success() || verdicts.len() != pairs.len() {
            return Err(Error::Transport(format!(
                "hook `{}` answered {} of {} lines (status {status})",
                self.command,
                verdicts.len(),
                pairs.len()
            )));
        }
        Ok(verdicts)
    }
}

/// Drops over-long sources, length-ratio outliers and duplicates, in that order.
/// The first occurrence of a duplicate is kept and input order is preserved.
pub fn filter_pairs(
    pairs: &[(String, String)],
    cfg: &FilterConfig,
) -> Result<(Vec<(String, String)>, FilterReport)> {
    filter_pairs_with_hook(pairs, cfg, None)
}

pub fn filter_pairs_with_hook(
    pairs: &[(String, String)],
    cfg: &FilterConfig,
    hook: Option<&mut dyn PairHook>,
) -> Result<(Vec<(String, String)>, FilterReport)> {
    cfg.validate()?;
    let verdicts = match hook {
        Some(h) => Some(h.keep(pairs)?),
        None => None,
    };
    let mut report = FilterReport { input: pairs.len(), ..Default::default() };
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut kept = Vec::new();
    for (i, (src, tgt)) in pairs.iter().enumerate() {
        let s_tok = token_count(src);
        let t_tok = token_count(tgt);
        if s_tok > cfg.max_source_tokens {
            report.drop(RULE_SOURCE_LENGTH);
            continue;
        }
        if ratio_violated(s_tok, t_tok, cfg) {
            report.drop(RULE_LENGTH_RATIO);
            continue;
        }
        if let Some(v) = &verdicts {
            if !v[i] {
                report.drop(RULE_EXTERNAL);
                continue;
            }
        }
        let key = match cfg.dedup {
            Dedup::None => None,
            Dedup::ExactPair => Some((src.as_str(), tgt.as_str())),
            Dedup::ExactSource => Some((src.as_str(), "")),
        };
        if let Some(key) = key {
            if !seen.insert(key) {
                report.drop(RULE_DUPLICATE);
                continue;
            }
        }
        kept.push((src.clone(), tgt.clone()));
    }
    report.kept = kept.len();
    Ok((kept, report))
}

/// Exact-match dedup keeping the first occurrence, order preserved.
pub fn dedup_monolingual<S: AsRef<str>>(lines: &[S]) -> Vec<String> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = Vec::new();
    for line in lines {
        if seen.insert(line.as_ref()) {
            out.push(line.as_ref().to_string());
        }
    }
    out
}

/// Parses `source\ttarget` lines; blank lines are skipped.
pub fn read_tsv_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (s, t) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected source<TAB>target".into(),
        })?;
        out.push((s.to_string(), t.to_string()));
    }
    Ok(out)
}

pub fn write_tsv_pairs<W: Write>(mut writer: W, pairs: &[(String, String)]) -> Result<()> {
    for (s, t) in pairs {
        writeln!(writer, "{s}\t{t}")?;
    }
    writer.flush()?;
    Ok(())
}
