//! Grid search for the scored next-node rule.
//!
//! Weights range over {0, 0.25, 0.5, 0.75, 1}^4; for each weight vector the
//! threshold candidates are +inf plus quantiles of the per-step minimum
//! score observed with no threshold. The winner (lowest mean gap to the
//! 2-opt baseline on the training batch) is written as a JSON fixture.
//!
//! cargo run --release -p ael-core --example grid_search -- [OUT] [N] [COUNT] [SEED]

use std::cell::RefCell;

use ael_core::tsp::{
    construct_tour, gap, generate_batch, greedy_select_next, node_score, scored_select_next,
    two_opt_baseline, ScoredParams, SelectionContext, DEFAULT_RESTARTS,
};

const LATTICE: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .first()
        .cloned()
        .unwrap_or_else(|| "crates/core/fixtures/scored_params.json".into());
    let n: usize = args.get(1).map_or(50, |s| s.parse().unwrap());
    let count: usize = args.get(2).map_or(64, |s| s.parse().unwrap());
    let seed: u64 = args.get(3).map_or(20_231_001, |s| s.parse().unwrap());

    let batch = generate_batch(n, count, seed).unwrap();
    let baselines: Vec<f64> = batch
        .iter()
        .map(|i| two_opt_baseline(i, DEFAULT_RESTARTS))
        .collect();
    let mean_gap = |params: &ScoredParams| -> f64 {
        batch
            .iter()
            .zip(&baselines)
            .map(|(inst, &b)| {
                let sel = |c: &SelectionContext<'_>| scored_select_next(c, params);
                gap(construct_tour(&sel, inst, 0).unwrap().length, b)
            })
            .sum::<f64>()
            / batch.len() as f64
    };
    let greedy_gap = batch
        .iter()
        .zip(&baselines)
        .map(|(inst, &b)| {
            gap(
                construct_tour(&greedy_select_next, inst, 0).unwrap().length,
                b,
            )
        })
        .sum::<f64>()
        / batch.len() as f64;

    let mut best = (ScoredParams::GREEDY, greedy_gap);
    for &c1 in &LATTICE {
        for &c2 in &LATTICE {
            for &c3 in &LATTICE {
                for &c4 in &LATTICE {
                    if c1 == 0.0 && c2 == 0.0 && c3 == 0.0 && c4 == 0.0 {
                        continue;
                    }
                    let open = ScoredParams {
                        c1,
                        c2,
                        c3,
                        c4,
                        tau: f64::INFINITY,
                    };
                    let mins = RefCell::new(Vec::new());
                    let mut total = 0.0;
                    for (inst, &b) in batch.iter().zip(&baselines) {
                        let sel = |ctx: &SelectionContext<'_>| {
                            if ctx.unvisited.len() > 1 {
                                let m = ctx
                                    .unvisited
                                    .iter()
                                    .map(|&j| node_score(ctx, &open, j))
                                    .fold(f64::INFINITY, f64::min);
                                mins.borrow_mut().push(m);
                            }
                            scored_select_next(ctx, &open)
                        };
                        total += gap(construct_tour(&sel, inst, 0).unwrap().length, b);
                    }
                    let open_gap = total / batch.len() as f64;
                    if open_gap < best.1 {
                        best = (open, open_gap);
                    }
                    let mut mins = mins.into_inner();
                    mins.sort_by(f64::total_cmp);
                    for q in QUANTILES {
                        let tau = mins[((mins.len() - 1) as f64 * q).round() as usize];
                        let p = ScoredParams { tau, ..open };
                        let g = mean_gap(&p);
                        if g < best.1 {
                            best = (p, g);
                        }
                    }
                }
            }
            eprintln!(
                "c1={c1} c2={c2} done; best so far {} gap {:.4}",
                best.0, best.1
            );
        }
    }

    let fixture = serde_json::json!({
        "params": best.0,
        "canonical": best.0.to_string(),
        "training": { "n": n, "count": count, "seed": seed, "baseline_restarts": DEFAULT_RESTARTS },
        "train_mean_gap": best.1,
        "train_greedy_gap": greedy_gap,
    });
    std::fs::write(&out, serde_json::to_string_pretty(&fixture).unwrap() + "\n").unwrap();
    println!(
        "{} (train gap {:.4}, greedy {:.4}) -> {out}",
        best.0, best.1, greedy_gap
    );
}
