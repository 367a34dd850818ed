use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DistanceMatrix, TspError, TspInstance};

/// A closed tour: `order` is a permutation of the nodes, `length` its
/// Euclidean length including the closing edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn from_order(order: Vec<usize>, dist: &DistanceMatrix) -> Self {
        let length = tour_length(&order, dist);
        Tour { order, length }
    }
}

pub fn tour_length(order: &[usize], dist: &DistanceMatrix) -> f64 {
    if order.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for w in order.windows(2) {
        total += dist.get(w[0], w[1]);
    }
    total + dist.get(order[order.len() - 1], order[0])
}

/// What a step function sees when choosing the next node.
///
/// `unvisited` is always sorted ascending; candidates that depend on
/// iteration order are deterministic under that convention.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub current: usize,
    pub destination: usize,
    pub unvisited: &'a [usize],
    pub dist: &'a DistanceMatrix,
}

/// A constructive step function.
pub trait NextNodeSelector {
    fn select(&self, ctx: &SelectionContext<'_>) -> usize;
}

impl<F> NextNodeSelector for F
where
    F: Fn(&SelectionContext<'_>) -> usize,
{
    fn select(&self, ctx: &SelectionContext<'_>) -> usize {
        self(ctx)
    }
}

impl NextNodeSelector for ScoredParams {
    fn select(&self, ctx: &SelectionContext<'_>) -> usize {
        scored_select_next(ctx, self)
    }
}

/// Nearest unvisited node; ties go to the smallest index.
pub fn greedy_select_next(ctx: &SelectionContext<'_>) -> usize {
    let row = ctx.dist.row(ctx.current);
    let mut best = ctx.unvisited[0];
    let mut best_d = row[best];
    for &j in &ctx.unvisited[1..] {
        if row[j] < best_d {
            best = j;
            best_d = row[j];
        }
    }
    best
}

/// Weights of the scored next-node rule.
///
/// ```text
/// score(j) = c1·d(current, j)
///          − c2·mean_{u ∈ U∖{j}} d(j, u)
///          + c3·std_{u ∈ U∖{j}} d(j, u)
///          − c4·d(j, destination)
/// ```
///
/// The node with the lowest score is chosen, unless even the lowest score
/// exceeds `tau`, in which case the rule falls back to the nearest node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub tau: f64,
}

impl ScoredParams {
    /// The parameter vector that reduces the rule to plain nearest-neighbor.
    pub const GREEDY: ScoredParams = ScoredParams {
        c1: 1.0,
        c2: 0.0,
        c3: 0.0,
        c4: 0.0,
        tau: f64::INFINITY,
    };
}

impl fmt::Display for ScoredParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scored c1={} c2={} c3={} c4={} tau={}",
            self.c1, self.c2, self.c3, self.c4, self.tau
        )
    }
}

impl FromStr for ScoredParams {
    type Err = String;

    /// Parses `scored c1=… c2=… c3=… c4=… tau=…` (keys in any order, each
    /// exactly once).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tokens = s.split_whitespace();
        if tokens.next() != Some("scored") {
            return Err("expected leading `scored` keyword".into());
        }
        let mut slots: [Option<f64>; 5] = [None; 5];
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| format!("`{tok}` is not a key=value pair"))?;
            let idx = match key {
                "c1" => 0,
                "c2" => 1,
                "c3" => 2,
                "c4" => 3,
                "tau" => 4,
                other => return Err(format!("unknown parameter `{other}`")),
            };
            let v: f64 = value
                .parse()
                .map_err(|_| format!("`{value}` is not a number"))?;
            if v.is_nan() {
                return Err(format!("parameter `{key}` is NaN"));
            }
            if idx < 4 && !v.is_finite() {
                return Err(format!("weight `{key}` must be finite"));
            }
            if slots[idx].replace(v).is_some() {
                return Err(format!("parameter `{key}` given twice"));
            }
        }
        let get = |i: usize, name: &str| slots[i].ok_or_else(|| format!("missing `{name}`"));
        Ok(ScoredParams {
            c1: get(0, "c1")?,
            c2: get(1, "c2")?,
            c3: get(2, "c3")?,
            c4: get(3, "c4")?,
            tau: get(4, "tau")?,
        })
    }
}

/// Mean and population standard deviation of `d(j, u)` over `u ∈ U∖{j}`.
/// Both are 0 when the set is empty.
fn spread_from(row: &[f64], unvisited: &[usize], j: usize) -> (f64, f64) {
    let m = unvisited.len() - usize::from(unvisited.binary_search(&j).is_ok());
    if m == 0 {
        return (0.0, 0.0);
    }
    let mut sum = 0.0;
    for &u in unvisited {
        if u != j {
            sum += row[u];
        }
    }
    let mean = sum / m as f64;
    let mut sq = 0.0;
    for &u in unvisited {
        if u != j {
            let e = row[u] - mean;
            sq += e * e;
        }
    }
    (mean, (sq / m as f64).sqrt())
}

pub fn node_score(ctx: &SelectionContext<'_>, params: &ScoredParams, j: usize) -> f64 {
    let row_j = ctx.dist.row(j);
    let (mean, std) = spread_from(row_j, ctx.unvisited, j);
    params.c1 * ctx.dist.get(ctx.current, j) - params.c2 * mean + params.c3 * std
        - params.c4 * row_j[ctx.destination]
}

pub fn scored_select_next(ctx: &SelectionContext<'_>, params: &ScoredParams) -> usize {
    if ctx.unvisited.len() == 1 {
        return ctx.unvisited[0];
    }
    let mut best = ctx.unvisited[0];
    let mut best_score = f64::INFINITY;
    for &j in ctx.unvisited {
        let s = node_score(ctx, params, j);
        if s < best_score {
            best = j;
            best_score = s;
        }
    }
    if best_score > params.tau {
        greedy_select_next(ctx)
    } else {
        best
    }
}

/// Builds a tour from `start` by repeatedly asking `selector` for the next
/// node. The tour returns to `start`, which is also the destination every
/// step sees.
pub fn construct_tour<S>(
    selector: &S,
    instance: &TspInstance,
    start: usize,
) -> Result<Tour, TspError>
where
    S: NextNodeSelector + ?Sized,
{
    let n = instance.n();
    if start >= n {
        return Err(TspError::InvalidStart { start, n });
    }
    let dist = instance.dist();
    let mut unvisited: Vec<usize> = (0..n).filter(|&i| i != start).collect();
    let mut order = Vec::with_capacity(n);
    order.push(start);
    let mut current = start;
    let mut step = 0;
    while !unvisited.is_empty() {
        let ctx = SelectionContext {
            current,
            destination: start,
            unvisited: &unvisited,
            dist,
        };
        let next = selector.select(&ctx);
        let slot = unvisited
            .binary_search(&next)
            .map_err(|_| TspError::InvalidStep {
                step,
                node: next,
                reason: if next >= n {
                    "out of range".into()
                } else {
                    "already visited".into()
                },
            })?;
        unvisited.remove(slot);
        order.push(next);
        current = next;
        step += 1;
    }
    Ok(Tour::from_order(order, dist))
}
