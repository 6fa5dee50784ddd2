//! Scoring adapters: built-ins, a child process speaking line-delimited JSON
//! over stdio, and an HTTP endpoint.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, bail, Result};
use forge_core::evaluation::{
    ConstantScorer, EvaluationError, OracleScorer, ScoreRequest, ScoreResponse, SentenceScorer, UniformRandomScorer,
};
use forge_core::synthesis::{DatasetInstance, DifficultyScorer, ScorerError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_RETRIES: usize = 1;

fn adapter_error(message: impl Into<String>, request: &ScoreRequest) -> EvaluationError {
    EvaluationError::Adapter {
        message: message.into(),
        request: serde_json::to_string(request).unwrap_or_default(),
    }
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// Runs `sh -c <command>` and exchanges one JSON line per request. A batch
/// that times out or breaks the pipe is retried on a fresh process.
pub struct ExecScorer {
    command: String,
    timeout: Duration,
    retries: usize,
    running: Option<Running>,
}

impl ExecScorer {
    pub fn new(command: &str) -> Self {
        ExecScorer {
            command: command.to_string(),
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            running: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration, retries: usize) -> Self {
        self.timeout = timeout;
        self.retries = retries;
        self
    }

    fn spawn(&self) -> std::io::Result<Running> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Running { child, stdin, lines })
    }

    fn stop(&mut self) {
        if let Some(mut r) = self.running.take() {
            let _ = r.child.kill();
            let _ = r.child.wait();
        }
    }

    fn attempt(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError> {
        if self.running.is_none() {
            let r = self.spawn().map_err(|e| adapter_error(format!("cannot start `{}`: {e}", self.command), &requests[0]))?;
            self.running = Some(r);
        }
        let timeout = self.timeout;
        let r = self.running.as_mut().expect("running");
        let mut payload = String::new();
        for req in requests {
            payload.push_str(&serde_json::to_string(req).expect("request serializes"));
            payload.push('\n');
        }
        r.stdin
            .write_all(payload.as_bytes())
            .and_then(|_| r.stdin.flush())
            .map_err(|e| adapter_error(format!("write failed: {e}"), &requests[0]))?;
        let mut out = Vec::with_capacity(requests.len());
        for req in requests {
            let line = match r.lines.recv_timeout(timeout) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(adapter_error(format!("read failed: {e}"), req)),
                Err(RecvTimeoutError::Timeout) => return Err(adapter_error(format!("no response within {timeout:?}"), req)),
                Err(RecvTimeoutError::Disconnected) => return Err(adapter_error("adapter closed its output", req)),
            };
            let resp: ScoreResponse = serde_json::from_str(&line)
                .map_err(|e| adapter_error(format!("malformed response {line:?}: {e}"), req))?;
            out.push(resp);
        }
        Ok(out)
    }
}

impl SentenceScorer for ExecScorer {
    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let mut last = None;
        for _ in 0..=self.retries {
            match self.attempt(requests) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    self.stop();
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

impl Drop for ExecScorer {
    fn drop(&mut self) {
        if let Some(mut r) = self.running.take() {
            drop(r.stdin);
            if r.child.wait_timeout_ok().is_err() {
                let _ = r.child.kill();
            }
            let _ = r.child.wait();
        }
    }
}

trait WaitBriefly {
    fn wait_timeout_ok(&mut self) -> std::io::Result<()>;
}

impl WaitBriefly for Child {
    /// Gives a child that is draining its input a moment to exit on its own.
    fn wait_timeout_ok(&mut self) -> std::io::Result<()> {
        for _ in 0..50 {
            if self.try_wait()?.is_some() {
                return Ok(());
            }
            thread::sleep(Duration::from_millis(10));
        }
        Err(std::io::Error::other("still running"))
    }
}

/// POSTs each request body to `<base>/score`.
pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
    retries: usize,
}

impl HttpScorer {
    pub fn new(base: &str) -> Self {
        let base = base.trim_end_matches('/');
        let base = if base.starts_with("http://") || base.starts_with("https://") {
            base.to_string()
        } else {
            format!("http://{base}")
        };
        let url = if base.ends_with("/score") { base } else { format!("{base}/score") };
        HttpScorer {
            url,
            agent: ureq::AgentBuilder::new().timeout(DEFAULT_TIMEOUT).build(),
            retries: DEFAULT_RETRIES,
        }
    }

    fn one(&self, req: &ScoreRequest) -> Result<ScoreResponse, EvaluationError> {
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.agent.post(&self.url).send_json(req) {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| adapter_error(e.to_string(), req))?;
                    return serde_json::from_str(&text)
                        .map_err(|e| adapter_error(format!("malformed response {text:?}: {e}"), req));
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    return Err(adapter_error(format!("HTTP {code}: {body}"), req));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(adapter_error(last, req))
    }
}

impl SentenceScorer for HttpScorer {
    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError> {
        requests.iter().map(|r| self.one(r)).collect()
    }
}

/// Parses an `--adapter` value.
pub fn scorer_from_spec(spec: &str, dataset: &[DatasetInstance], seed: u64) -> Result<Box<dyn SentenceScorer>> {
    if let Some(cmd) = spec.strip_prefix("exec:") {
        if cmd.trim().is_empty() {
            bail!("exec adapter needs a command");
        }
        return Ok(Box::new(ExecScorer::new(cmd)));
    }
    if let Some(url) = spec.strip_prefix("http:").filter(|u| !u.starts_with("//")) {
        return Ok(Box::new(HttpScorer::new(url)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(HttpScorer::new(spec)));
    }
    if let Some(rate) = spec.strip_prefix("random:") {
        let rate: f64 = rate.parse().map_err(|_| anyhow!("random adapter needs a rate in [0, 1]"))?;
        if !(0.0..=1.0).contains(&rate) {
            bail!("random adapter rate must be in [0, 1]");
        }
        return Ok(Box::new(UniformRandomScorer { seed, rate }));
    }
    match spec {
        "majority" => Ok(Box::new(ConstantScorer(0.0))),
        "oracle" => Ok(Box::new(OracleScorer::new(dataset))),
        other => bail!("unknown adapter `{other}` (expected exec:<cmd>, http:<url>, majority, oracle or random:<rate>)"),
    }
}

/// Difficulty scorer backed by an external adapter, for `--scorer adapter:<spec>`.
pub struct AdapterDifficulty {
    inner: Mutex<Box<dyn SentenceScorer + Send>>,
}

impl AdapterDifficulty {
    pub fn new(spec: &str) -> Result<Self> {
        let inner: Box<dyn SentenceScorer + Send> = if let Some(cmd) = spec.strip_prefix("exec:") {
            Box::new(ExecScorer::new(cmd))
        } else {
            let url = spec.strip_prefix("http:").filter(|u| !u.starts_with("//")).unwrap_or(spec);
            Box::new(HttpScorer::new(url))
        };
        Ok(AdapterDifficulty { inner: Mutex::new(inner) })
    }
}

impl DifficultyScorer for AdapterDifficulty {
    fn score(&self, instance_id: &str, sentences: &[String], candidate_index: usize) -> Result<f64, ScorerError> {
        let req = ScoreRequest {
            instance_id: instance_id.to_string(),
            sentences: sentences.to_vec(),
            candidate_index,
        };
        let mut inner = self.inner.lock().map_err(|_| ScorerError("adapter lock poisoned".into()))?;
        let resp = inner.score_batch(std::slice::from_ref(&req)).map_err(|e| ScorerError(e.to_string()))?;
        let score = resp.first().map(|r| r.score).ok_or_else(|| ScorerError("empty response".into()))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(ScorerError(format!("score {score} is not a probability")));
        }
        Ok(score)
    }
}
