//! Protocol test double for the guest runtime.
//!
//! It speaks the guest protocol but does not execute source code. The
//! loaded source must mention `def select_next_node`; the first line that
//! is a native program (`greedy`, `scored ...`) decides the heuristic,
//! defaulting to greedy. A `# stub: MODE` line switches on misbehaviour:
//!
//! * `loop` / `loop_after K`: hang on every solve / from the K-th solve on
//! * `revisit`: answer step_error as if the program chose a visited node
//! * `crash` / `crash_odd`: exit on every solve / on odd instance seeds
//! * `garbage`: answer a non-JSON line
//! * `duplicate`: answer a tour that repeats node 0
//! * `hang_load`: never answer the load message

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use ael_core::evaluator::{GuestReply, GuestRequest};
use ael_core::llm::CandidateProgram;
use ael_core::tsp::{construct_tour, greedy_select_next, TspInstance};

fn hang() -> ! {
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn main() -> ExitCode {
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut program = None;
    let mut mode = String::new();
    let mut solves = 0usize;
    for line in stdin.lock().lines() {
        let Ok(line) = line else {
            return ExitCode::from(2);
        };
        let req: GuestRequest = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) => return ExitCode::from(2),
        };
        let reply = match req {
            GuestRequest::Load { source } => {
                mode = source
                    .lines()
                    .find_map(|l| l.trim().strip_prefix("# stub:"))
                    .unwrap_or("")
                    .trim()
                    .to_string();
                if mode == "hang_load" {
                    hang();
                }
                if !source.contains("def select_next_node") {
                    GuestReply::LoadError {
                        msg: "function select_next_node is not defined".into(),
                    }
                } else {
                    program = Some(
                        source
                            .lines()
                            .find_map(|l| CandidateProgram::parse_native(l).and_then(Result::ok))
                            .unwrap_or(CandidateProgram::NativeGreedy),
                    );
                    GuestReply::Ready
                }
            }
            GuestRequest::Solve {
                instance_id,
                coords,
                start,
                ..
            } => {
                let Some(program) = &program else {
                    return ExitCode::from(2);
                };
                let k = solves;
                solves += 1;
                let seed: u64 = instance_id
                    .as_str()
                    .rsplit('-')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(0);
                let mut words = mode.split_whitespace();
                match (
                    words.next(),
                    words.next().and_then(|w| w.parse::<usize>().ok()),
                ) {
                    (Some("loop"), _) => hang(),
                    (Some("loop_after"), Some(after)) if k >= after => hang(),
                    (Some("crash"), _) => return ExitCode::from(3),
                    (Some("crash_odd"), _) if seed % 2 == 1 => return ExitCode::from(3),
                    _ => {}
                }
                let inst = match TspInstance::from_coords(coords, seed) {
                    Ok(i) => i,
                    Err(e) => {
                        let _ = writeln!(
                            out,
                            "{}",
                            serde_json::to_string(&GuestReply::StepError { msg: e.to_string() })
                                .unwrap()
                        );
                        continue;
                    }
                };
                match mode.as_str() {
                    "garbage" => {
                        let _ = writeln!(out, "this is not json");
                        let _ = out.flush();
                        continue;
                    }
                    "revisit" => GuestReply::StepError {
                        msg: format!("step 0: select_next_node returned visited node {start}"),
                    },
                    "duplicate" => GuestReply::Tour {
                        instance_id,
                        order: vec![0; inst.n()],
                    },
                    _ => {
                        let tour = match program {
                            CandidateProgram::NativeScored(p) => construct_tour(p, &inst, start),
                            _ => construct_tour(&greedy_select_next, &inst, start),
                        };
                        match tour {
                            Ok(t) => GuestReply::Tour {
                                instance_id,
                                order: t.order,
                            },
                            Err(e) => GuestReply::StepError { msg: e.to_string() },
                        }
                    }
                }
            }
            GuestRequest::Shutdown => return ExitCode::SUCCESS,
        };
        if writeln!(out, "{}", serde_json::to_string(&reply).unwrap())
            .and_then(|_| out.flush())
            .is_err()
        {
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}
