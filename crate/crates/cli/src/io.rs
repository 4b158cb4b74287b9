use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mbrkit::jsonl::{read_plain_sources, read_segments};
use mbrkit::metrics::SystemOutputs;
use mbrkit::Segment;
use serde_json::Value;

use crate::args::InputFormat;

pub fn open_input(path: Option<&Path>) -> anyhow::Result<Box<dyn BufRead>> {
    match path {
        None => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(Box::new(BufReader::new(f)))
        }
    }
}

pub fn read_all(path: Option<&Path>) -> anyhow::Result<String> {
    let mut s = String::new();
    open_input(path)?.read_to_string(&mut s)?;
    Ok(s)
}

/// Buffered writer to a file, or stdout when `path` is `None` or `-`.
pub fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    let mut out = open_output(path)?;
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn single_input(inputs: &[PathBuf]) -> anyhow::Result<Option<&Path>> {
    match inputs {
        [] => Ok(None),
        [p] => Ok(Some(p.as_path())),
        _ => bail!(crate::UsageError("expected at most one input file".into())),
    }
}

fn looks_like_jsonl(path: Option<&Path>, text: &str) -> bool {
    if path.and_then(|p| p.extension()).is_some_and(|e| e == "jsonl") {
        return true;
    }
    text.trim_start().starts_with('{')
}

/// Segments from JSONL or one-sentence-per-line text.
pub fn read_sources(path: Option<&Path>, format: InputFormat) -> anyhow::Result<Vec<Segment>> {
    let text = read_all(path)?;
    let jsonl = match format {
        InputFormat::Jsonl => true,
        InputFormat::Plain => false,
        InputFormat::Auto => looks_like_jsonl(path, &text),
    };
    let segs = if jsonl {
        read_segments(text.as_bytes())?
    } else {
        read_plain_sources(text.as_bytes())?
    };
    Ok(segs)
}

/// `name=path` or `path` (name = file stem).
pub fn split_named(spec: &str) -> (String, PathBuf) {
    if let Some((name, path)) = spec.split_once('=') {
        if !name.is_empty() && !name.contains('/') {
            return (name.to_string(), PathBuf::from(path));
        }
    }
    let path = PathBuf::from(spec);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.to_string());
    (name, path)
}

const TEXT_KEYS: [&str; 4] = ["target", "text", "hypothesis", "translation"];

/// Text keyed by seg_id, plus the source when the records carry one.
pub struct KeyedText {
    pub texts: BTreeMap<String, String>,
    pub sources: BTreeMap<String, String>,
}

/// Reads system outputs or references: JSONL objects with `seg_id` and one of
/// `target`, `text`, `hypothesis`, `translation` or `reference`, or plain lines
/// keyed by line number.
pub fn read_keyed_text(path: &Path, text_keys: &[&str]) -> anyhow::Result<KeyedText> {
    let content = read_all(Some(path))?;
    let mut out = KeyedText {
        texts: BTreeMap::new(),
        sources: BTreeMap::new(),
    };
    let jsonl = looks_like_jsonl(Some(path), &content);
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = if jsonl {
            let v: Value = serde_json::from_str(line)
                .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
            let id = match v.get("seg_id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => bail!("{}: line {}: missing seg_id", path.display(), i + 1),
            };
            let text = text_keys
                .iter()
                .find_map(|k| v.get(*k).and_then(Value::as_str))
                .with_context(|| format!("{}: line {}: no {} field", path.display(), i + 1, text_keys.join("/")))?;
            if let Some(src) = v.get("source").and_then(Value::as_str) {
                out.sources.insert(id.clone(), src.to_string());
            }
            (id, text.to_string())
        } else {
            ((i + 1).to_string(), line.to_string())
        };
        if out.texts.insert(id.clone(), text).is_some() {
            bail!("{}: duplicate seg_id `{id}`", path.display());
        }
    }
    Ok(out)
}

pub fn read_system(spec: &str) -> anyhow::Result<(SystemOutputs, BTreeMap<String, String>)> {
    let (name, path) = split_named(spec);
    let keyed = read_keyed_text(&path, &TEXT_KEYS)?;
    Ok((
        SystemOutputs {
            name,
            outputs: keyed.texts,
        },
        keyed.sources,
    ))
}

pub fn read_references(path: &Path) -> anyhow::Result<KeyedText> {
    read_keyed_text(path, &["reference", "target", "text"])
}
