//! Host side of the guest protocol.
//!
//! One guest process serves one candidate for one batch. Every message is a
//! single JSON object on its own line, tagged by `type`:
//!
//! ```text
//! host  -> guest   {"type":"load","source":"..."}
//! guest -> host    {"type":"ready"} | {"type":"load_error","msg":"..."}
//! host  -> guest   {"type":"solve","instance_id":"tsp50-7","n":50,"coords":[[x,y],...],"start":0}
//! guest -> host    {"type":"tour","instance_id":"tsp50-7","order":[0,...]} | {"type":"step_error","msg":"..."}
//! host  -> guest   {"type":"shutdown"}
//! ```
//!
//! Coordinates are sent with shortest round-trip precision; the guest
//! computes distances as `sqrt(dx*dx + dy*dy)` in double precision and must
//! present unvisited nodes in ascending index order so its tours match the
//! native ones bit for bit.
//!
//! The batch deadline is enforced by killing the process. A guest that
//! exits mid-batch is restarted for the remaining instances; a guest that
//! runs out of time is not, and the instances after it are reported as
//! skipped.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::TourOutcome;
use crate::tsp::{InstanceId, TspInstance};

const SHUTDOWN_GRACE: Duration = Duration::from_secs(1);

/// How to launch the guest runtime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuestCommand {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

impl GuestCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        GuestCommand {
            program: program.into(),
            args: Vec::new(),
        }
    }

    /// `argv[0]` is the program, the rest are arguments.
    pub fn from_argv(argv: &[String]) -> Option<Self> {
        let (program, args) = argv.split_first()?;
        Some(GuestCommand {
            program: program.into(),
            args: args.to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GuestRequest {
    Load {
        source: String,
    },
    Solve {
        instance_id: InstanceId,
        n: usize,
        coords: Vec<[f64; 2]>,
        start: usize,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GuestReply {
    Ready,
    LoadError {
        msg: String,
    },
    Tour {
        instance_id: InstanceId,
        order: Vec<usize>,
    },
    StepError {
        msg: String,
    },
}

enum Received {
    Reply(GuestReply),
    Malformed(String),
    Closed,
    TimedOut,
}

struct GuestProcess {
    child: Child,
    outbox: Option<Sender<String>>,
    inbox: Receiver<String>,
}

impl GuestProcess {
    fn spawn(cmd: &GuestCommand) -> std::io::Result<Self> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        // Both directions get their own thread so that a guest which stops
        // reading or writing can never block the deadline check.
        let (out_tx, out_rx) = mpsc::channel();
        thread::spawn(move || write_loop(stdin, out_rx));
        let (in_tx, in_rx) = mpsc::channel();
        thread::spawn(move || read_loop(stdout, in_tx));
        Ok(GuestProcess {
            child,
            outbox: Some(out_tx),
            inbox: in_rx,
        })
    }

    fn send(&self, req: &GuestRequest) {
        let line = serde_json::to_string(req).expect("requests always serialize");
        if let Some(outbox) = &self.outbox {
            // A dead writer shows up as a closed inbox on the next receive.
            let _ = outbox.send(line);
        }
    }

    fn recv(&self, deadline: Instant) -> Received {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.inbox.recv_timeout(wait) {
            Ok(line) => match serde_json::from_str(&line) {
                Ok(reply) => Received::Reply(reply),
                Err(e) => Received::Malformed(format!("unparseable reply {:?}: {e}", clip(&line))),
            },
            Err(RecvTimeoutError::Timeout) => Received::TimedOut,
            Err(RecvTimeoutError::Disconnected) => Received::Closed,
        }
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn shutdown(mut self) {
        self.send(&GuestRequest::Shutdown);
        self.outbox = None;
        match self.child.wait_timeout(SHUTDOWN_GRACE) {
            Ok(Some(_)) => {}
            _ => self.kill(),
        }
    }
}

fn write_loop(mut stdin: ChildStdin, outbox: Receiver<String>) {
    for line in outbox {
        if stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .is_err()
        {
            return;
        }
    }
}

fn read_loop(stdout: ChildStdout, inbox: Sender<String>) {
    for line in BufReader::new(stdout).lines() {
        match line {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => {
                if inbox.send(line).is_err() {
                    return;
                }
            }
            Err(_) => return,
        }
    }
}

fn clip(s: &str) -> String {
    const MAX: usize = 120;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Why a freshly started guest could not take instances.
enum StartFailure {
    /// Affects every remaining instance the same way.
    Fatal(String),
    TimedOut,
}

fn start(
    cmd: &GuestCommand,
    source: &str,
    deadline: Instant,
) -> Result<GuestProcess, StartFailure> {
    let proc = GuestProcess::spawn(cmd).map_err(|e| {
        StartFailure::Fatal(format!("cannot start guest {}: {e}", cmd.program.display()))
    })?;
    proc.send(&GuestRequest::Load {
        source: source.to_string(),
    });
    let failure = match proc.recv(deadline) {
        Received::Reply(GuestReply::Ready) => return Ok(proc),
        Received::Reply(GuestReply::LoadError { msg }) => {
            StartFailure::Fatal(format!("load_error: {msg}"))
        }
        Received::Reply(other) => {
            StartFailure::Fatal(format!("protocol violation: expected ready, got {other:?}"))
        }
        Received::Malformed(msg) => StartFailure::Fatal(format!("protocol violation: {msg}")),
        Received::Closed => StartFailure::Fatal("guest exited while loading".into()),
        Received::TimedOut => StartFailure::TimedOut,
    };
    proc.kill();
    Err(failure)
}

/// Runs `source` on every instance inside guest processes launched with
/// `cmd`, within a total wall-clock budget of `timeout`.
pub fn run_batch(
    cmd: &GuestCommand,
    source: &str,
    instances: &[TspInstance],
    start_node: usize,
    timeout: Duration,
) -> Vec<TourOutcome> {
    let deadline = Instant::now() + timeout;
    let mut outcomes = Vec::with_capacity(instances.len());
    let mut guest: Option<GuestProcess> = None;
    for inst in instances {
        if Instant::now() >= deadline {
            break;
        }
        let proc = match guest.take() {
            Some(p) => p,
            None => match start(cmd, source, deadline) {
                Ok(p) => p,
                Err(StartFailure::TimedOut) => break,
                Err(StartFailure::Fatal(msg)) => {
                    outcomes.resize(instances.len(), TourOutcome::RuntimeError(msg));
                    return outcomes;
                }
            },
        };
        proc.send(&GuestRequest::Solve {
            instance_id: inst.id(),
            n: inst.n(),
            coords: inst.coords().to_vec(),
            start: start_node,
        });
        let outcome = match proc.recv(deadline) {
            Received::Reply(GuestReply::Tour { instance_id, order })
                if instance_id == inst.id() =>
            {
                guest = Some(proc);
                TourOutcome::Tour(order)
            }
            Received::Reply(GuestReply::StepError { msg }) => {
                guest = Some(proc);
                TourOutcome::RuntimeError(format!("step_error: {msg}"))
            }
            Received::Reply(other) => {
                proc.kill();
                TourOutcome::RuntimeError(format!("protocol violation: unexpected reply {other:?}"))
            }
            Received::Malformed(msg) => {
                proc.kill();
                TourOutcome::RuntimeError(format!("protocol violation: {msg}"))
            }
            Received::Closed => {
                proc.kill();
                TourOutcome::RuntimeError("guest exited mid-solve".into())
            }
            Received::TimedOut => {
                proc.kill();
                break;
            }
        };
        outcomes.push(outcome);
    }
    if let Some(proc) = guest {
        proc.shutdown();
    }
    if outcomes.len() < instances.len() {
        outcomes.push(TourOutcome::Timeout);
        outcomes.resize(instances.len(), TourOutcome::Skipped);
    }
    outcomes
}
