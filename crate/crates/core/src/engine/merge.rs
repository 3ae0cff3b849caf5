use serde::{Deserialize, Serialize};

use super::{EngineError, SubSolution};
use crate::model::{AtspInstance, Tour};

/// One fusion step: arcs `removed_arc_a` (in the partial cycle) and
/// `removed_arc_b` (in the incoming loop) are replaced by `added_arc_1`
/// and `added_arc_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bridge {
    pub removed_arc_a: (usize, usize),
    pub removed_arc_b: (usize, usize),
    pub added_arc_1: (usize, usize),
    pub added_arc_2: (usize, usize),
    pub delta_cost: i64,
}

fn arcs(cycle: &[usize]) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
    (0..cycle.len()).map(move |i| (i, (cycle[i], cycle[(i + 1) % cycle.len()])))
}

/// Cheapest reconnection of `cycle` with `incoming`: remove `(u, v)` and
/// `(x, y)`, add `(u, y)` and `(x, v)`. Ties go to the lexicographically
/// smallest pair of added arcs.
pub fn best_bridge(instance: &AtspInstance, cycle: &[usize], incoming: &[usize]) -> (Bridge, usize, usize) {
    let mut best: Option<(Bridge, usize, usize)> = None;
    for (i, (u, v)) in arcs(cycle) {
        for (j, (x, y)) in arcs(incoming) {
            let delta = instance.cost(u, y) + instance.cost(x, v) - instance.cost(u, v) - instance.cost(x, y);
            let bridge = Bridge {
                removed_arc_a: (u, v),
                removed_arc_b: (x, y),
                added_arc_1: (u, y),
                added_arc_2: (x, v),
                delta_cost: delta,
            };
            let better = best.as_ref().is_none_or(|(b, _, _)| {
                (delta, (u, y), (x, v)) < (b.delta_cost, b.added_arc_1, b.added_arc_2)
            });
            if better {
                best = Some((bridge, i, j));
            }
        }
    }
    best.expect("both loops have arcs")
}

fn splice(cycle: &[usize], at: usize, incoming: &[usize], from: usize) -> Vec<usize> {
    let m = incoming.len();
    let mut out = Vec::with_capacity(cycle.len() + m);
    out.extend_from_slice(&cycle[..=at]);
    // incoming walked from y = incoming[from + 1] round to x = incoming[from]
    out.extend((1..=m).map(|k| incoming[(from + k) % m]));
    out.extend_from_slice(&cycle[at + 1..]);
    out
}

/// Fuses the loops into one Hamiltonian cycle, largest loop first (ties by
/// smallest member node), each step taking the cheapest bridge.
pub fn greedy_merge_with_bridges(
    instance: &AtspInstance,
    subsolutions: &[SubSolution],
) -> Result<(Tour, Vec<Bridge>), EngineError> {
    let n = instance.dimension();
    let mut seen = vec![false; n];
    for sub in subsolutions {
        for &v in sub.tour.nodes() {
            if v >= n || seen[v] {
                return Err(EngineError::Coverage(format!("node {v} covered twice or out of range")));
            }
            seen[v] = true;
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(EngineError::Coverage(format!("node {v} not covered")));
    }
    let mut order: Vec<&SubSolution> = subsolutions.iter().collect();
    order.sort_by_key(|s| {
        (
            std::cmp::Reverse(s.tour.len()),
            s.tour.nodes().iter().copied().min().unwrap_or(usize::MAX),
        )
    });
    let mut cycle = order[0].tour.nodes().to_vec();
    let mut bridges = Vec::with_capacity(order.len() - 1);
    for sub in &order[1..] {
        let (bridge, i, j) = best_bridge(instance, &cycle, sub.tour.nodes());
        cycle = splice(&cycle, i, sub.tour.nodes(), j);
        bridges.push(bridge);
    }
    Ok((Tour::new(instance, cycle)?.canonicalize(), bridges))
}

pub fn greedy_merge(instance: &AtspInstance, subsolutions: &[SubSolution]) -> Result<Tour, EngineError> {
    greedy_merge_with_bridges(instance, subsolutions).map(|(t, _)| t)
}
