use std::path::PathBuf;

use ael_core::engine::EvolutionTrace;
use ael_core::evaluator::TourOutcome;
use anyhow::{anyhow, Context};
use clap::Args;

use crate::exit::{Exit, WithCode, CONFIG, IO};
use crate::manifest::{RunManifest, RunStatus, TRACE_JSON};
use crate::svg::route_svg;

pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const ROUTES_DIR: &str = "routes";

#[derive(Args)]
pub struct ReportArgs {
    /// Run directory written by `ael run`.
    pub dir: PathBuf,
    /// Draw the best algorithm's tours on the first K evaluation instances.
    #[arg(long, default_value_t = 0)]
    pub routes: usize,
}

pub fn cmd_report(args: ReportArgs) -> Result<(), Exit> {
    let dir = &args.dir;
    let manifest = RunManifest::load(dir).code(CONFIG)?;
    let trace_path = dir.join(TRACE_JSON);
    let trace: EvolutionTrace = std::fs::read_to_string(&trace_path)
        .with_context(|| format!("reading {}", trace_path.display()))
        .and_then(|t| {
            serde_json::from_str(&t).with_context(|| format!("parsing {}", trace_path.display()))
        })
        .code(CONFIG)?;
    if manifest.status != RunStatus::Completed {
        eprintln!("warning: run status is {:?}", manifest.status);
    }

    let csv_path = dir.join(CONVERGENCE_CSV);
    std::fs::write(&csv_path, trace.to_csv())
        .with_context(|| format!("writing {}", csv_path.display()))
        .code(IO)?;

    let curve: Vec<Option<f64>> = trace.records().map(|g| g.best_gap).collect();
    if curve
        .windows(2)
        .any(|w| matches!(w, [Some(a), Some(b)] if b > a))
    {
        eprintln!("warning: best gap increases somewhere in the trace");
    }
    let pct = |g: Option<f64>| g.map_or("-".into(), |g| format!("{:.2}%", 100.0 * g));
    println!(
        "{} generations, best gap {} -> {}, final mean gap {}",
        trace.generations.len(),
        pct(trace.initial.best_gap),
        pct(curve.last().copied().flatten()),
        pct(trace.records().last().and_then(|g| g.mean_gap))
    );
    println!("wrote {}", csv_path.display());

    if args.routes > 0 {
        let best = manifest
            .best
            .as_ref()
            .ok_or_else(|| Exit::new(CONFIG, anyhow!("manifest has no best individual")))?;
        let evaluator = manifest.config.build_evaluator().code(CONFIG)?;
        let routes = dir.join(ROUTES_DIR);
        std::fs::create_dir_all(&routes).code(IO)?;
        let start = manifest.config.limits.start_node;
        let tours = evaluator.tours(&best.program);
        for (inst, outcome) in evaluator
            .batch()
            .instances()
            .iter()
            .zip(&tours)
            .take(args.routes)
        {
            let (order, note) = match outcome {
                TourOutcome::Tour(order) => {
                    let len = ael_core::tsp::tour_length(order, inst.dist());
                    (Some(order.as_slice()), format!("length {len:.4}"))
                }
                other => (None, format!("no tour: {other:?}")),
            };
            let title = format!("{} {} {note}", inst.id(), best.id);
            let path = routes.join(format!("route-seed{}.svg", inst.seed()));
            std::fs::write(&path, route_svg(inst, order, start, &title))
                .with_context(|| format!("writing {}", path.display()))
                .code(IO)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
