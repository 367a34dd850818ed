use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ael_core::evaluator::{
    load_baselines, EvaluationBatch, EvaluationLimits, FitnessEvaluator, GuestCommand,
    InstanceStatus, OverallStatus, TspEvaluator,
};
use ael_core::llm::{parse_individual, CandidateProgram, GREEDY_KEYWORD};
use ael_core::prompt::TaskSpec;
use ael_core::tsp::{generate_batch, DEFAULT_RESTARTS};
use anyhow::{anyhow, Context};
use clap::Args;

use crate::exit::{Exit, WithCode, CONFIG, EVALUATION_FAILED, IO};

#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    TwoOpt,
    /// JSON object mapping instance ids (`tsp{n}-{seed}`) to lengths.
    Import(PathBuf),
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "two-opt" => Ok(Baseline::TwoOpt),
            Some(("import", p)) if !p.is_empty() => Ok(Baseline::Import(p.into())),
            _ => Err(format!("expected two-opt or import:PATH, got {s:?}")),
        }
    }
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// `greedy`, or a file holding a model-style answer or a one-line
    /// native program.
    #[arg(long)]
    pub algorithm: String,
    #[arg(long, value_delimiter = ',', default_value = "20,50,100,200,500,1000")]
    pub sizes: Vec<usize>,
    /// Instances per size.
    #[arg(long, default_value_t = 64)]
    pub instances: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value = "two-opt")]
    pub baseline: Baseline,
    /// 2-opt restarts per instance when computing baselines.
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Guest runtime command line for source programs, e.g. "python3 guest.py".
    #[arg(long)]
    pub guest: Option<String>,
    /// Deadline per size for guest programs, in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub timeout: f64,
    /// Directory for evaluation.csv, evaluation_instances.csv and evaluation.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load_algorithm(spec: &str) -> anyhow::Result<(String, CandidateProgram)> {
    if spec == GREEDY_KEYWORD {
        return Ok((
            "Always move to the nearest unvisited node.".into(),
            CandidateProgram::NativeGreedy,
        ));
    }
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
    match parse_individual(&text, &TaskSpec::tsp_next_node()) {
        Ok(parsed) => Ok(parsed),
        Err(e) => match CandidateProgram::parse_native(&text) {
            Some(Ok(p)) => Ok((String::new(), p)),
            Some(Err(native)) => Err(anyhow!("{spec}: {native}")),
            None => Err(anyhow!("{spec}: {e}")),
        },
    }
}

/// Base seed of the instance batch for one size.
pub fn size_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_mul(10_007).wrapping_add(n as u64)
}

pub struct SizeRow {
    pub n: usize,
    pub solved: usize,
    pub count: usize,
    pub mean_length: Option<f64>,
    pub mean_baseline: f64,
    pub mean_gap: Option<f64>,
    pub failure: Option<String>,
}

fn fmt_opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "-".into(), f)
}

fn table(rows: &[SizeRow]) -> String {
    let mut s = format!(
        "{:>8} {:>9} {:>12} {:>14} {:>9}  {}\n",
        "size", "instances", "mean_length", "mean_baseline", "mean_gap", "status"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8} {:>9} {:>12} {:>14.4} {:>9}  {}",
            format!("TSP{}", r.n),
            format!("{}/{}", r.solved, r.count),
            fmt_opt(r.mean_length, |v| format!("{v:.4}")),
            r.mean_baseline,
            fmt_opt(r.mean_gap, |g| format!("{:.2}%", 100.0 * g)),
            r.failure.as_deref().unwrap_or("ok")
        );
    }
    s
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Exit> {
    if let Some(k) = args.parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .code(CONFIG)?;
    }
    if args.instances == 0 || args.sizes.is_empty() || args.sizes.iter().any(|&n| n < 2) {
        return Err(Exit::new(
            CONFIG,
            anyhow!("need at least one size >= 2 and one instance"),
        ));
    }
    let (description, program) = load_algorithm(&args.algorithm).code(CONFIG)?;
    let guest = match &args.guest {
        Some(line) => {
            let argv: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            Some(
                GuestCommand::from_argv(&argv)
                    .ok_or_else(|| Exit::new(CONFIG, anyhow!("empty --guest")))?,
            )
        }
        None => None,
    };
    let table_import = match &args.baseline {
        Baseline::TwoOpt => None,
        Baseline::Import(p) => Some(load_baselines(p).code(CONFIG)?),
    };
    let limits = EvaluationLimits {
        batch_timeout_secs: args.timeout,
        ..EvaluationLimits::default()
    };

    if !description.is_empty() {
        println!("{description}");
    }
    let mut rows = Vec::new();
    let mut per_instance =
        String::from("size,instance_id,tour_length,baseline,gap,status,message\n");
    for &n in &args.sizes {
        let instances = generate_batch(n, args.instances, size_seed(args.seed, n)).code(CONFIG)?;
        let batch = match &table_import {
            None => EvaluationBatch::with_two_opt(instances, args.restarts),
            Some(t) => EvaluationBatch::with_table(instances, t),
        }
        .code(CONFIG)?;
        let mean_baseline = batch.baselines().iter().sum::<f64>() / batch.len() as f64;
        let mut ev = TspEvaluator::new(batch, limits);
        if let Some(g) = &guest {
            ev = ev.with_guest(g.clone());
        }
        let report = ev.evaluate(&program);
        let lengths: Vec<f64> = report
            .per_instance
            .iter()
            .filter_map(|r| r.tour_length)
            .collect();
        for (r, b) in report.per_instance.iter().zip(ev.batch().baselines()) {
            let _ = writeln!(
                per_instance,
                "{n},{},{},{b},{},{},{}",
                r.instance_id,
                fmt_opt(r.tour_length, |v| v.to_string()),
                fmt_opt(r.gap, |v| v.to_string()),
                r.status,
                csv_cell(r.message.as_deref().unwrap_or(""))
            );
        }
        rows.push(SizeRow {
            n,
            solved: report
                .per_instance
                .iter()
                .filter(|r| r.status == InstanceStatus::Ok)
                .count(),
            count: report.per_instance.len(),
            mean_length: (report.overall_status == OverallStatus::Ok)
                .then(|| lengths.iter().sum::<f64>() / lengths.len() as f64),
            mean_baseline,
            mean_gap: report.mean_gap,
            failure: report
                .first_failure()
                .map(|f| format!("{} on {}", f.status, f.instance_id)),
        });
    }

    let text = table(&rows);
    print!("{text}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).code(IO)?;
        let mut csv = String::from("size,instances,mean_length,mean_baseline,mean_gap,status\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.n,
                r.count,
                fmt_opt(r.mean_length, |v| v.to_string()),
                r.mean_baseline,
                fmt_opt(r.mean_gap, |v| v.to_string()),
                if r.failure.is_none() { "ok" } else { "failed" }
            );
        }
        for (name, body) in [
            ("evaluation.csv", csv),
            ("evaluation_instances.csv", per_instance),
            ("evaluation.txt", text),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body)
                .with_context(|| format!("writing {}", path.display()))
                .code(IO)?;
        }
    }
    if let Some(r) = rows.iter().find(|r| r.failure.is_some()) {
        return Err(Exit::new(
            EVALUATION_FAILED,
            anyhow!("TSP{}: {}", r.n, r.failure.as_deref().unwrap_or_default()),
        ));
    }
    Ok(())
}
