//! JSON job files: `{"schema": 1, "command": "...", "workers": N, "args": {...}}`.
//!
//! Each key in `args` is a long flag of the command; `inputs` holds the
//! positional arguments.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::args::Command;

pub const JOB_SCHEMA: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    pub schema: u64,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl JobFile {
    pub fn from_command(command: &Command, workers: usize) -> Self {
        let args = match command.args_json() {
            Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
            _ => Map::new(),
        };
        JobFile {
            schema: JOB_SCHEMA,
            command: command.name().to_string(),
            workers: Some(workers),
            args,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading job file {}", path.display()))?;
        let job: JobFile = serde_json::from_str(&text).with_context(|| format!("parsing job file {}", path.display()))?;
        if job.schema != JOB_SCHEMA {
            bail!("job file schema {} is not supported (expected {JOB_SCHEMA})", job.schema);
        }
        Ok(job)
    }

    /// Command line equivalent to this job.
    pub fn to_argv(&self) -> anyhow::Result<Vec<String>> {
        let mut argv = vec!["mbrkit".to_string()];
        if let Some(w) = self.workers {
            argv.push(format!("--workers={w}"));
        }
        argv.push(self.command.clone());
        let mut positional = Vec::new();
        for (key, value) in &self.args {
            if key == "inputs" {
                match value {
                    Value::Array(items) => {
                        for v in items {
                            positional.push(scalar(key, v)?);
                        }
                    }
                    v => positional.push(scalar(key, v)?),
                }
                continue;
            }
            match value {
                Value::Null => {}
                Value::Array(items) => {
                    for v in items {
                        argv.push(format!("--{key}={}", scalar(key, v)?));
                    }
                }
                v => argv.push(format!("--{key}={}", scalar(key, v)?)),
            }
        }
        if !positional.is_empty() {
            argv.push("--".into());
            argv.extend(positional);
        }
        Ok(argv)
    }
}

fn scalar(key: &str, v: &Value) -> anyhow::Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        _ => bail!("job argument `{key}` must be a string, number, boolean or list of those"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::Cli;
    use clap::Parser;

    #[test]
    fn round_trips_through_argv() {
        let cli = Cli::try_parse_from([
            "mbrkit", "--workers", "3", "decide", "--method", "mbr", "--utility", "chrf",
            "--top-k", "2,4", "--include-self=false", "c.jsonl",
        ])
        .unwrap();
        let job = JobFile::from_command(cli.command.as_ref().unwrap(), cli.workers);
        let again = Cli::try_parse_from(job.to_argv().unwrap()).unwrap();
        let job2 = JobFile::from_command(again.command.as_ref().unwrap(), again.workers);
        assert_eq!(job, job2);
        assert_eq!(job.args["top-k"], serde_json::json!([2, 4]));
        assert_eq!(job.args["include-self"], Value::Bool(false));
    }

    #[test]
    fn unknown_keys_fail_to_parse() {
        let job: JobFile = serde_json::from_str(
            r#"{"schema":1,"command":"sample","args":{"seed":1,"no-such-flag":2}}"#,
        )
        .unwrap();
        assert!(Cli::try_parse_from(job.to_argv().unwrap()).is_err());
        assert!(serde_json::from_str::<JobFile>(r#"{"schema":1,"command":"x","extra":0}"#).is_err());
    }
}
