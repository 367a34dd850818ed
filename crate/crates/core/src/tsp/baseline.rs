use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::construct::{construct_tour, greedy_select_next, tour_length};
use super::{DistanceMatrix, TspError, TspInstance};

/// Largest instance the exact solver accepts.
pub const HELD_KARP_MAX_NODES: usize = 13;

/// Candidate-list width for the neighbor-driven 2-opt phase.
const NEIGHBORS: usize = 10;

const IMPROVEMENT_EPS: f64 = 1e-12;

pub const DEFAULT_RESTARTS: usize = 5;

/// Relative excess of `length` over `baseline`.
pub fn gap(length: f64, baseline: f64) -> f64 {
    (length - baseline) / baseline
}

/// Best tour length over `restarts` runs of 2-opt. The first run starts
/// from the greedy tour (start node 0), the rest from random permutations
/// seeded by the instance seed, so the result never exceeds the greedy
/// length.
pub fn two_opt_baseline(instance: &TspInstance, restarts: usize) -> f64 {
    two_opt_best_tour(instance, restarts).1
}

pub fn two_opt_best_tour(instance: &TspInstance, restarts: usize) -> (Vec<usize>, f64) {
    let restarts = restarts.max(1);
    let dist = instance.dist();
    let greedy = construct_tour(&greedy_select_next, instance, 0)
        .expect("greedy never produces an invalid step")
        .order;
    let mut rng = ChaCha8Rng::seed_from_u64(instance.seed() ^ 0x2077_5eed);
    let mut best_order = two_opt(greedy, dist);
    let mut best = tour_length(&best_order, dist);
    for _ in 1..restarts {
        let mut order: Vec<usize> = (0..instance.n()).collect();
        order.shuffle(&mut rng);
        let order = two_opt(order, dist);
        let len = tour_length(&order, dist);
        if len < best {
            best = len;
            best_order = order;
        }
    }
    (best_order, best)
}

/// First-improvement 2-opt until no segment reversal shortens the tour.
///
/// Moves are first searched over each node's nearest neighbors with
/// don't-look bits; once that queue drains, a full O(n²) scan confirms the
/// tour is 2-opt optimal (and re-seeds the queue if it is not).
pub fn two_opt(order: Vec<usize>, dist: &DistanceMatrix) -> Vec<usize> {
    let n = order.len();
    if n < 4 {
        return order;
    }
    let mut tour = TourArray::new(order);
    let neighbors = nearest_neighbors(dist, NEIGHBORS.min(n - 1));
    let mut queue: VecDeque<usize> = (0..n).map(|p| tour.order[p]).collect();
    let mut queued = vec![true; n];

    loop {
        while let Some(a) = queue.pop_front() {
            queued[a] = false;
            if let Some(touched) = improve_around(&mut tour, dist, &neighbors[a], a) {
                for c in touched {
                    if !queued[c] {
                        queued[c] = true;
                        queue.push_back(c);
                    }
                }
            }
        }
        match full_scan(&mut tour, dist) {
            Some(touched) => {
                for c in touched {
                    if !queued[c] {
                        queued[c] = true;
                        queue.push_back(c);
                    }
                }
            }
            None => break,
        }
    }
    tour.order
}

fn nearest_neighbors(dist: &DistanceMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = dist.len();
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist.get(i, a).total_cmp(&dist.get(i, b)).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

struct TourArray {
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl TourArray {
    fn new(order: Vec<usize>) -> Self {
        let mut pos = vec![0; order.len()];
        for (p, &c) in order.iter().enumerate() {
            pos[c] = p;
        }
        TourArray { order, pos }
    }

    fn n(&self) -> usize {
        self.order.len()
    }

    fn succ(&self, c: usize) -> usize {
        self.order[(self.pos[c] + 1) % self.n()]
    }

    fn pred(&self, c: usize) -> usize {
        self.order[(self.pos[c] + self.n() - 1) % self.n()]
    }

    /// Replaces edges (t[i], t[i+1]) and (t[j], t[j+1]) with (t[i], t[j])
    /// and (t[i+1], t[j+1]) by reversing the shorter of the two paths.
    fn apply(&mut self, i: usize, j: usize) {
        let n = self.n();
        let mut from = (i + 1) % n;
        let mut to = j;
        let inner = (to + n - from) % n + 1;
        if 2 * inner > n {
            from = (j + 1) % n;
            to = i;
        }
        let len = (to + n - from) % n + 1;
        for _ in 0..len / 2 {
            let (a, b) = (self.order[from], self.order[to]);
            self.order[from] = b;
            self.order[to] = a;
            self.pos[b] = from;
            self.pos[a] = to;
            from = (from + 1) % n;
            to = (to + n - 1) % n;
        }
    }
}

fn improve_around(
    tour: &mut TourArray,
    dist: &DistanceMatrix,
    neighbors: &[usize],
    a: usize,
) -> Option<[usize; 4]> {
    // Successor direction: break (a, succ a) and (c, succ c).
    let b = tour.succ(a);
    let d_ab = dist.get(a, b);
    for &c in neighbors {
        let d_ac = dist.get(a, c);
        if d_ac >= d_ab {
            break;
        }
        let d = tour.succ(c);
        if c == b || d == a {
            continue;
        }
        let delta = d_ac + dist.get(b, d) - d_ab - dist.get(c, d);
        if delta < -IMPROVEMENT_EPS {
            tour.apply(tour.pos[a], tour.pos[c]);
            return Some([a, b, c, d]);
        }
    }
    // Predecessor direction: break (pred a, a) and (pred c, c).
    let b = tour.pred(a);
    let d_ab = dist.get(a, b);
    for &c in neighbors {
        let d_ac = dist.get(a, c);
        if d_ac >= d_ab {
            break;
        }
        let d = tour.pred(c);
        if c == b || d == a {
            continue;
        }
        let delta = d_ac + dist.get(b, d) - d_ab - dist.get(c, d);
        if delta < -IMPROVEMENT_EPS {
            tour.apply(tour.pos[b], tour.pos[d]);
            return Some([a, b, c, d]);
        }
    }
    None
}

fn full_scan(tour: &mut TourArray, dist: &DistanceMatrix) -> Option<[usize; 4]> {
    let n = tour.n();
    for i in 0..n - 2 {
        let a = tour.order[i];
        let b = tour.order[i + 1];
        let d_ab = dist.get(a, b);
        let last = if i == 0 { n - 1 } else { n };
        for j in (i + 2)..last {
            let c = tour.order[j];
            let d = tour.order[(j + 1) % n];
            let delta = dist.get(a, c) + dist.get(b, d) - d_ab - dist.get(c, d);
            if delta < -IMPROVEMENT_EPS {
                tour.apply(i, j);
                return Some([a, b, c, d]);
            }
        }
    }
    None
}

/// Exact optimal tour length by dynamic programming over node subsets.
pub fn held_karp(instance: &TspInstance) -> Result<f64, TspError> {
    let n = instance.n();
    if n > HELD_KARP_MAX_NODES {
        return Err(TspError::InstanceTooLarge {
            n,
            max: HELD_KARP_MAX_NODES,
        });
    }
    let dist = instance.dist();
    if n <= 3 {
        let order: Vec<usize> = (0..n).collect();
        return Ok(tour_length(&order, dist));
    }
    // Node 0 is the fixed start; subsets range over nodes 1..n.
    let m = n - 1;
    let full = 1usize << m;
    let mut dp = vec![f64::INFINITY; full * m];
    for k in 0..m {
        dp[(1 << k) * m + k] = dist.get(0, k + 1);
    }
    for mask in 1..full {
        for last in 0..m {
            let here = dp[mask * m + last];
            if mask & (1 << last) == 0 || !here.is_finite() {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let cand = here + dist.get(last + 1, next + 1);
                let slot = &mut dp[(mask | (1 << next)) * m + next];
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
    }
    let best = (0..m)
        .map(|last| dp[(full - 1) * m + last] + dist.get(last + 1, 0))
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}
