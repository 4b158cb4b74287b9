//! Client side of the external scorer line protocol.
//!
//! Requests and responses are single-line UTF-8 JSON objects terminated by
//! `\n`. Over a subprocess, one request per line goes to stdin and one
//! response per line comes back on stdout; a `{"ping":true}` line is answered
//! with the health object. Over HTTP, `POST /v1/score` takes a JSON array of
//! requests and returns an array of responses, and `GET /v1/health` returns
//! the health object.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Endpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Qe,
    Ref,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub mode: ScoreMode,
    pub source: String,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub metric: String,
    pub mode: ScoreMode,
}

/// A response line as sent by the scorer; error objects carry `error`.
#[derive(Clone, Debug, Deserialize)]
pub struct ResponseLine {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Raw transport to one scorer instance.
pub trait ScorerClient: Send {
    fn health(&mut self) -> Result<Health>;

    /// Sends one batch and returns the response lines in arrival order.
    fn send(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ResponseLine>>;

    /// Re-establishes the transport after a failure.
    fn reset(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Opens a client and checks the scorer's health.
pub fn connect(endpoint: &Endpoint) -> Result<(Box<dyn ScorerClient>, Health)> {
    let mut client: Box<dyn ScorerClient> = match endpoint {
        Endpoint::Command(cmd) => Box::new(SubprocessClient::spawn(cmd)?),
        Endpoint::Http(addr) => Box::new(HttpClient::new(addr)),
    };
    let health = client.health()?;
    if health.status != "ok" {
        return Err(Error::Transport(format!("scorer reports status `{}`", health.status)));
    }
    Ok((client, health))
}

fn parse_line(raw: &str) -> Result<ResponseLine> {
    serde_json::from_str(raw).map_err(|e| Error::Protocol {
        message: e.to_string(),
        raw: raw.to_string(),
    })
}

fn validate_requests(requests: &[ScoreRequest]) -> Result<()> {
    let mut ids = HashSet::with_capacity(requests.len());
    for r in requests {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::Config(format!("duplicate request id `{}`", r.id)));
        }
        if r.mode == ScoreMode::Ref && r.reference.is_none() {
            return Err(Error::Config(format!("request `{}`: mode=ref requires a reference", r.id)));
        }
    }
    Ok(())
}

fn match_responses(requests: &[ScoreRequest], lines: Vec<ResponseLine>) -> Result<Vec<ScoreResponse>> {
    let wanted: HashSet<&str> = requests.iter().map(|r| r.id.as_str()).collect();
    let mut scores: HashMap<String, f64> = HashMap::with_capacity(requests.len());
    let mut errors = Vec::new();
    for line in lines {
        match (line.id, line.score, line.error) {
            (_, _, Some(err)) => errors.push(err),
            (Some(id), Some(score), None) => {
                if !wanted.contains(id.as_str()) {
                    return Err(Error::Protocol {
                        message: format!("response for unknown id `{id}`"),
                        raw: format!("{{\"id\":{id:?},\"score\":{score}}}"),
                    });
                }
                if !score.is_finite() {
                    return Err(Error::Protocol {
                        message: format!("non-finite score for id `{id}`"),
                        raw: score.to_string(),
                    });
                }
                scores.insert(id, score);
            }
            (id, score, None) => {
                return Err(Error::Protocol {
                    message: "response needs both id and score".into(),
                    raw: format!("id={id:?} score={score:?}"),
                })
            }
        }
    }
    let missing: Vec<String> = requests
        .iter()
        .filter(|r| !scores.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        if !errors.is_empty() {
            log::warn!("scorer reported errors: {}", errors.join("; "));
        }
        return Err(Error::MissingIds(missing));
    }
    Ok(requests
        .iter()
        .map(|r| ScoreResponse {
            id: r.id.clone(),
            score: scores[&r.id],
        })
        .collect())
}

/// Scores one batch, returning responses in request order.
///
/// A failed batch is retried exactly once (after resetting the transport)
/// before the error is returned.
pub fn score_batch(client: &mut dyn ScorerClient, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
    validate_requests(requests)?;
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let attempt = |c: &mut dyn ScorerClient| c.send(requests).and_then(|l| match_responses(requests, l));
    match attempt(client) {
        Ok(r) => Ok(r),
        Err(first) => {
            log::warn!("scorer batch failed, retrying once: {first}");
            client.reset()?;
            attempt(client)
        }
    }
}

/// Scorer running as a child process (`sh -c <command>`).
pub struct SubprocessClient {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessClient {
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(SubprocessClient {
            command: command.to_string(),
            child,
            stdin,
            stdout,
        })
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self.stdout.read_line(&mut line)?;
        if n == 0 {
            return Err(Error::Transport(format!("scorer `{}` closed its output", self.command)));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

impl ScorerClient for SubprocessClient {
    fn health(&mut self) -> Result<Health> {
        let stdin = self.stdin.as_mut().ok_or_else(|| Error::Transport("scorer stdin closed".into()))?;
        stdin.write_all(b"{\"ping\":true}\n")?;
        stdin.flush()?;
        let raw = self.read_line()?;
        serde_json::from_str(&raw).map_err(|e| Error::Protocol {
            message: format!("bad health response: {e}"),
            raw,
        })
    }

    fn send(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ResponseLine>> {
        let mut payload = Vec::new();
        for r in requests {
            serde_json::to_writer(&mut payload, r).map_err(|e| Error::InvalidRecord(e.to_string()))?;
            payload.push(b'\n');
        }
        let mut stdin = self.stdin.take().ok_or_else(|| Error::Transport("scorer stdin closed".into()))?;
        // write on a separate thread so a scorer that answers while we are
        // still writing cannot fill both pipes
        let writer = std::thread::spawn(move || {
            let res = stdin.write_all(&payload).and_then(|_| stdin.flush());
            (stdin, res)
        });
        let mut lines = Vec::with_capacity(requests.len());
        let mut read_err = None;
        for _ in 0..requests.len() {
            match self.read_line() {
                Ok(raw) => match parse_line(&raw) {
                    Ok(l) => lines.push(l),
                    Err(e) => {
                        read_err = Some(e);
                        break;
                    }
                },
                Err(e) => {
                    read_err = Some(e);
                    break;
                }
            }
        }
        let (stdin, write_res) = writer
            .join()
            .map_err(|_| Error::Transport("scorer writer thread panicked".into()))?;
        self.stdin = Some(stdin);
        if let Some(e) = read_err {
            return Err(e);
        }
        write_res?;
        Ok(lines)
    }

    fn reset(&mut self) -> Result<()> {
        let _ = self.child.kill();
        let _ = self.child.wait();
        *self = SubprocessClient::spawn(&self.command)?;
        Ok(())
    }
}

impl Drop for SubprocessClient {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved scorer exit on EOF
        drop(self.stdin.take());
        if let Ok(None) = self.child.try_wait() {
            std::thread::sleep(Duration::from_millis(10));
            if let Ok(None) = self.child.try_wait() {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

/// Scorer service reachable over HTTP.
pub struct HttpClient {
    base: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(addr: &str) -> Self {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_string()
        } else {
            format!("http://{}", addr.trim_end_matches('/'))
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        HttpClient { base, agent }
    }
}

impl ScorerClient for HttpClient {
    fn health(&mut self) -> Result<Health> {
        let mut resp = self
            .agent
            .get(format!("{}/v1/health", self.base))
            .call()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let raw = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        serde_json::from_str(&raw).map_err(|e| Error::Protocol {
            message: format!("bad health response: {e}"),
            raw,
        })
    }

    fn send(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ResponseLine>> {
        let mut resp = self
            .agent
            .post(format!("{}/v1/score", self.base))
            .send_json(requests)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let raw = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        serde_json::from_str(&raw).map_err(|e| Error::Protocol {
            message: e.to_string(),
            raw,
        })
    }
}
