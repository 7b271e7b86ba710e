//! Line-delimited JSON protocol for out-of-process judges.
//!
//! Each request is one JSON object on the child's stdin:
//!
//! ```text
//! {"id":3,"case_id":"case_0007","structure":"aorta","prompt":"...",
//!  "overlay_a_rle":"0:130,1:4,...","overlay_b_rle":"...","width":64,"height":64}
//! ```
//!
//! and the child answers with one line on stdout:
//!
//! ```text
//! {"id":3,"preference":"first"}
//! ```
//!
//! Overlays are run-length encoded over pixels in row-major order with x
//! fastest (row 0 is the most inferior slice), as comma-separated
//! `value:count` pairs where value is 0 or 1.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::judge::{Judge, JudgeVerdict, PairRequest, Preference, RuleJudge};
use crate::error::{Error, Result};

pub fn rle_encode(pixels: &[bool]) -> String {
    let mut out = Vec::new();
    let mut iter = pixels.iter().peekable();
    while let Some(&v) = iter.next() {
        let mut n = 1usize;
        while iter.peek() == Some(&&v) {
            iter.next();
            n += 1;
        }
        out.push(format!("{}:{n}", v as u8));
    }
    out.join(",")
}

pub fn rle_decode(text: &str) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    if text.is_empty() {
        return Ok(out);
    }
    for run in text.split(',') {
        let (v, n) = run
            .split_once(':')
            .ok_or_else(|| Error::Protocol(format!("malformed run `{run}`")))?;
        let v = match v {
            "0" => false,
            "1" => true,
            _ => return Err(Error::Protocol(format!("run value `{v}` is not 0 or 1"))),
        };
        let n: usize = n.parse().map_err(|_| Error::Protocol(format!("bad run length in `{run}`")))?;
        out.extend(std::iter::repeat_n(v, n));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgePairRequest {
    pub id: u64,
    pub case_id: String,
    pub structure: String,
    pub prompt: String,
    pub overlay_a_rle: String,
    pub overlay_b_rle: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgePairResponse {
    pub id: u64,
    pub preference: Preference,
}

impl JudgePairRequest {
    pub fn from_pair(id: u64, req: &PairRequest<'_>) -> Self {
        Self {
            id,
            case_id: req.case_id.to_string(),
            structure: req.prior.structure.clone(),
            prompt: req.prior.prompt.clone(),
            overlay_a_rle: rle_encode(&req.overlay_a.pixels),
            overlay_b_rle: rle_encode(&req.overlay_b.pixels),
            width: req.overlay_a.width,
            height: req.overlay_a.height,
        }
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Judge backed by a child process. Requests are serialized; one is in
/// flight at a time. A timeout counts as a tie; a malformed or missing
/// answer falls back to the rule-based judge.
pub struct ExternalJudge {
    command: Vec<String>,
    timeout: Duration,
    fallback: RuleJudge,
    session: Mutex<Option<Session>>,
}

impl ExternalJudge {
    pub fn new(command: Vec<String>, timeout: Duration, fallback: RuleJudge) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config("external judge command is empty".into()));
        }
        Ok(Self { command, timeout, fallback, session: Mutex::new(None) })
    }

    fn spawn(&self) -> Result<Session> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Session { child, stdin, lines: rx, next_id: 0 })
    }

    /// One protocol exchange. Timeouts surface as `Ok(None)`.
    pub fn call(&self, req: &PairRequest<'_>) -> Result<Option<Preference>> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let session = guard.as_mut().expect("session just created");
        let id = session.next_id;
        session.next_id += 1;
        let mut line = serde_json::to_string(&JudgePairRequest::from_pair(id, req))?;
        line.push('\n');
        if let Err(e) = session.stdin.write_all(line.as_bytes()).and_then(|_| session.stdin.flush()) {
            *guard = None;
            return Err(Error::Protocol(format!("judge process rejected input: {e}")));
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match session.lines.recv_timeout(left) {
                Ok(Ok(text)) => {
                    let resp: JudgePairResponse = serde_json::from_str(&text)
                        .map_err(|e| Error::Protocol(format!("unparseable judge reply `{text}`: {e}")))?;
                    if resp.id < id {
                        // Late answer to a request that already timed out.
                        continue;
                    }
                    if resp.id != id {
                        return Err(Error::Protocol(format!("reply id {} for request {id}", resp.id)));
                    }
                    return Ok(Some(resp.preference));
                }
                Ok(Err(e)) => {
                    *guard = None;
                    return Err(Error::Protocol(format!("reading judge output failed: {e}")));
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => {
                    *guard = None;
                    return Err(Error::Protocol("judge process closed its output".into()));
                }
            }
        }
    }
}

impl Judge for ExternalJudge {
    fn judge(&self, req: &PairRequest<'_>) -> Result<JudgeVerdict> {
        match self.call(req) {
            Ok(Some(preference)) => Ok(JudgeVerdict { preference, rationale: None, protocol_failure: false }),
            Ok(None) => {
                log::warn!(
                    "external judge timed out on case {} `{}`; counting a tie",
                    req.case_id,
                    req.prior.structure
                );
                Ok(JudgeVerdict { preference: Preference::Tie, rationale: None, protocol_failure: false })
            }
            Err(Error::Protocol(msg)) => {
                log::warn!("external judge protocol error ({msg}); using the rule-based judge");
                let mut v = self.fallback.compare(req.prior, req.overlay_a, req.overlay_b);
                v.protocol_failure = true;
                Ok(v)
            }
            Err(e) => Err(e),
        }
    }
}
