//! Oracle served by a child process speaking one JSON request/response per line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::wire::{ClassifyRequest, ClassifyResponse};
use super::{Oracle, OracleError, OracleVerdict};
use crate::image_ops::Image;

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct SubprocessOracle {
    child: Mutex<Child>,
    pipe: Mutex<Pipe>,
    next_id: AtomicU64,
}

impl SubprocessOracle {
    /// Spawns `command_line`, split on whitespace into program and arguments.
    pub fn spawn(command_line: &str) -> Result<Self, OracleError> {
        let mut parts = command_line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| OracleError::Config("empty subprocess command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Transport(format!("spawn `{command_line}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessOracle {
            child: Mutex::new(child),
            pipe: Mutex::new(Pipe { stdin, stdout }),
            next_id: AtomicU64::new(0),
        })
    }

    fn round_trip(&self, request: &ClassifyRequest) -> Result<ClassifyResponse, OracleError> {
        let transport = |e: std::io::Error| OracleError::Transport(format!("subprocess: {e}"));
        let mut line = serde_json::to_string(request).map_err(|e| OracleError::Transport(e.to_string()))?;
        line.push('\n');
        let mut pipe = self.pipe.lock().map_err(|_| OracleError::Transport("subprocess pipe poisoned".into()))?;
        pipe.stdin.write_all(line.as_bytes()).map_err(transport)?;
        pipe.stdin.flush().map_err(transport)?;
        let mut reply = String::new();
        if pipe.stdout.read_line(&mut reply).map_err(transport)? == 0 {
            return Err(OracleError::Transport("subprocess closed its output".into()));
        }
        serde_json::from_str(reply.trim_end()).map_err(|e| OracleError::Transport(format!("malformed reply: {e}")))
    }
}

impl Oracle for SubprocessOracle {
    fn query(&self, image: &Image, top_k: usize) -> Result<OracleVerdict, OracleError> {
        let id = format!("q{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let request = ClassifyRequest::new(id.clone(), image, top_k)?;
        let start = Instant::now();
        let mut verdict = self.round_trip(&request)?.into_verdict(&id)?;
        verdict.latency = Some(start.elapsed());
        Ok(verdict)
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
