//! Exact oracles: Held-Karp dynamic programming, brute-force permutation
//! enumeration, and a backend that answers cluster QUBOs exactly.

use std::time::Instant;

use thiserror::Error;

use super::{Backend, BackendError, BackendRequest, BackendResponse, Sample};
use crate::model::{AtspInstance, ModelError, Tour};
use crate::qubo::Qubo;

pub const HELD_KARP_MAX: usize = 20;
pub const EXHAUSTIVE_MAX: usize = 10;
/// Largest generic QUBO the exact backend enumerates state by state.
pub const ENUMERATION_MAX_VARS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("node set of size {size} exceeds the solver limit {max}")]
    SetTooLarge { size: usize, max: usize },
    #[error("a tour needs at least 2 nodes, got {0}")]
    SetTooSmall(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn sorted_checked(instance: &AtspInstance, nodes: &[usize], max: usize) -> Result<Vec<usize>, SolveError> {
    if nodes.len() < 2 {
        return Err(SolveError::SetTooSmall(nodes.len()));
    }
    if nodes.len() > max {
        return Err(SolveError::SetTooLarge {
            size: nodes.len(),
            max,
        });
    }
    instance.check_nodes(nodes)?;
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    Ok(sorted)
}

/// Minimum-cost closed tour over `nodes` by dynamic programming over subsets.
///
/// Among optimal tours the lexicographically smallest canonical one is
/// returned.
pub fn solve_exact_heldkarp(instance: &AtspInstance, nodes: &[usize]) -> Result<Tour, SolveError> {
    let nodes = sorted_checked(instance, nodes, HELD_KARP_MAX)?;
    let m = nodes.len();
    let cost = |a: usize, b: usize| instance.cost(nodes[a], nodes[b]);
    if m == 2 {
        return Ok(Tour::new(instance, nodes)?);
    }

    // Local node 0 is the start. Others are 1..m, bit (k-1) in a subset mask.
    // rest[mask * w + (j-1)]: cheapest path leaving j, visiting exactly the
    // nodes in mask (j not in mask), then returning to the start.
    let w = m - 1;
    let full = 1usize << w;
    const INF: i64 = i64::MAX / 4;
    let mut rest = vec![INF; full * w];
    for j in 1..m {
        rest[j - 1] = cost(j, 0);
    }
    for mask in 1..full {
        for j in 1..m {
            let jb = 1 << (j - 1);
            if mask & jb != 0 {
                continue;
            }
            let mut best = INF;
            let mut bits = mask;
            while bits != 0 {
                let k = bits.trailing_zeros() as usize + 1;
                bits &= bits - 1;
                let cand = cost(j, k) + rest[(mask & !(1 << (k - 1))) * w + (k - 1)];
                if cand < best {
                    best = cand;
                }
            }
            rest[mask * w + (j - 1)] = best;
        }
    }

    let all = full - 1;
    let total = (1..m)
        .map(|k| cost(0, k) + rest[(all & !(1 << (k - 1))) * w + (k - 1)])
        .min()
        .expect("m >= 3");

    // Walk forward taking the smallest next node that keeps the optimum.
    let mut order = vec![0usize];
    let mut cur = 0;
    let mut mask = all;
    let mut remaining = total;
    while mask != 0 {
        let next = (1..m)
            .filter(|&k| mask & (1 << (k - 1)) != 0)
            .find(|&k| cost(cur, k) + rest[(mask & !(1 << (k - 1))) * w + (k - 1)] == remaining)
            .expect("optimal continuation exists");
        remaining -= cost(cur, next);
        mask &= !(1 << (next - 1));
        order.push(next);
        cur = next;
    }
    let tour = Tour::new(instance, order.into_iter().map(|k| nodes[k]).collect())?;
    debug_assert_eq!(tour.cost(), total);
    Ok(tour)
}

/// Enumerates all `(m-1)!` directed cycles with the smallest node first.
/// Ties go to the lexicographically smallest node sequence.
pub fn solve_exhaustive(instance: &AtspInstance, nodes: &[usize]) -> Result<Tour, SolveError> {
    let nodes = sorted_checked(instance, nodes, EXHAUSTIVE_MAX)?;
    let m = nodes.len();
    let mut path = vec![nodes[0]];
    let mut used = vec![false; m];
    used[0] = true;
    let mut best: Option<(i64, Vec<usize>)> = None;

    fn extend(
        instance: &AtspInstance,
        nodes: &[usize],
        path: &mut Vec<usize>,
        used: &mut [bool],
        partial: i64,
        best: &mut Option<(i64, Vec<usize>)>,
    ) {
        let last = *path.last().unwrap();
        if path.len() == nodes.len() {
            let total = partial + instance.cost(last, path[0]);
            // visiting in lexicographic order, so only strict improvements replace
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                *best = Some((total, path.clone()));
            }
            return;
        }
        for k in 1..nodes.len() {
            if used[k] {
                continue;
            }
            used[k] = true;
            path.push(nodes[k]);
            extend(instance, nodes, path, used, partial + instance.cost(last, nodes[k]), best);
            path.pop();
            used[k] = false;
        }
    }

    extend(instance, &nodes, &mut path, &mut used, 0, &mut best);
    let (_, order) = best.expect("at least one cycle");
    Ok(Tour::new(instance, order)?)
}

/// Exact minimiser behind the backend contract.
///
/// With a permutation layout the arc costs are read back from the
/// couplers between positions 0 and 1 and the cycle is solved by Held-Karp;
/// otherwise small QUBOs are enumerated exhaustively.
#[derive(Debug, Clone, Default)]
pub struct ExactBackend;

impl ExactBackend {
    fn solve_permutation(qubo: &Qubo, m: usize) -> Result<Vec<bool>, BackendError> {
        if m * m != qubo.n_vars() {
            return Err(BackendError::InvalidRequest(format!(
                "permutation side {m} does not match {} variables",
                qubo.n_vars()
            )));
        }
        let mut order: Vec<usize> = (0..m).collect();
        if m > 2 {
            let mut rows = vec![vec![0i64; m]; m];
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    if i != j {
                        // penalty terms never couple different nodes at
                        // different positions, so this is exactly c_ij
                        *cell = qubo.get(i * m, j * m + 1).round() as i64;
                    }
                }
            }
            let local = AtspInstance::from_rows("cluster", &rows)?;
            order = solve_exact_heldkarp(&local, &order)?.nodes().to_vec();
        }
        let mut bits = vec![false; m * m];
        for (p, &v) in order.iter().enumerate() {
            bits[v * m + p] = true;
        }
        Ok(bits)
    }

    fn enumerate(qubo: &Qubo) -> Vec<bool> {
        let n = qubo.n_vars();
        let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        for (i, j, c) in qubo.entries() {
            if i == j {
                diag[i] += c;
            } else {
                neighbours[i].push((j, c));
                neighbours[j].push((i, c));
            }
        }
        // Gray-code walk: one flip per step with an O(degree) energy update.
        let mut bits = vec![false; n];
        let mut energy = 0.0;
        let mut best = (0.0, bits.clone());
        for step in 1u64..(1u64 << n) {
            let i = step.trailing_zeros() as usize;
            let field: f64 = diag[i]
                + neighbours[i]
                    .iter()
                    .filter(|(j, _)| bits[*j])
                    .map(|(_, c)| c)
                    .sum::<f64>();
            energy += if bits[i] { -field } else { field };
            bits[i] = !bits[i];
            if energy < best.0 - 1e-12 {
                best = (energy, bits.clone());
            }
        }
        best.1
    }
}

impl Backend for ExactBackend {
    fn name(&self) -> String {
        "exact".into()
    }

    fn sample(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let started = Instant::now();
        let bits = match request.permutation_side {
            Some(m) => Self::solve_permutation(&request.qubo, m)?,
            None if request.qubo.n_vars() <= ENUMERATION_MAX_VARS => Self::enumerate(&request.qubo),
            None => {
                return Err(BackendError::Unsupported(format!(
                    "{} variables without a permutation layout",
                    request.qubo.n_vars()
                )))
            }
        };
        let energy = request.qubo.energy(&bits);
        Ok(BackendResponse {
            samples: vec![Sample { bits, energy }],
            backend_name: self.name(),
            elapsed: started.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::build_atsp_qubo;

    fn toy() -> AtspInstance {
        AtspInstance::from_rows("toy", &[vec![0, 5], vec![7, 0]]).unwrap()
    }

    #[test]
    fn forced_two_cycle() {
        let t = solve_exact_heldkarp(&toy(), &[1, 0]).unwrap();
        assert_eq!((t.nodes(), t.cost()), (&[0, 1][..], 12));
        let t = solve_exhaustive(&toy(), &[0, 1]).unwrap();
        assert_eq!((t.nodes(), t.cost()), (&[0, 1][..], 12));
    }

    #[test]
    fn asymmetric_triangle_picks_cheaper_direction() {
        // (0 1 2) = 1 + 1 + 1 = 3, (0 2 1) = 10 + 10 + 10 = 30
        let rows = vec![vec![0, 1, 10], vec![10, 0, 1], vec![1, 10, 0]];
        let inst = AtspInstance::from_rows("tri", &rows).unwrap();
        for t in [
            solve_exhaustive(&inst, &[0, 1, 2]).unwrap(),
            solve_exact_heldkarp(&inst, &[0, 1, 2]).unwrap(),
        ] {
            assert_eq!(t.nodes(), &[0, 1, 2]);
            assert_eq!(t.cost(), 3);
        }
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let flat = vec![vec![0, 1, 1, 1], vec![1, 0, 1, 1], vec![1, 1, 0, 1], vec![1, 1, 1, 0]];
        let inst = AtspInstance::from_rows("flat", &flat).unwrap();
        assert_eq!(solve_exhaustive(&inst, &[3, 2, 1, 0]).unwrap().nodes(), &[0, 1, 2, 3]);
        assert_eq!(solve_exact_heldkarp(&inst, &[3, 2, 1, 0]).unwrap().nodes(), &[0, 1, 2, 3]);
    }

    #[test]
    fn size_limits() {
        let rows: Vec<Vec<i64>> = (0..21).map(|i| (0..21).map(|j| i64::from(i != j)).collect()).collect();
        let inst = AtspInstance::from_rows("big", &rows).unwrap();
        let all: Vec<usize> = (0..21).collect();
        assert_eq!(
            solve_exact_heldkarp(&inst, &all).unwrap_err(),
            SolveError::SetTooLarge { size: 21, max: 20 }
        );
        assert_eq!(
            solve_exhaustive(&inst, &all[..11]).unwrap_err(),
            SolveError::SetTooLarge { size: 11, max: 10 }
        );
    }

    #[test]
    fn backend_recovers_cluster_optimum() {
        let rows = vec![
            vec![0, 4, 9, 2],
            vec![3, 0, 1, 8],
            vec![7, 2, 0, 6],
            vec![1, 5, 3, 0],
        ];
        let inst = AtspInstance::from_rows("four", &rows).unwrap();
        let cluster = [3, 1, 0, 2];
        let q = build_atsp_qubo(&inst, &cluster, None, 10).unwrap();
        let req = BackendRequest::new(q.qubo().clone(), 1, Some(1)).with_permutation_side(4);
        let resp = ExactBackend.sample(&req).unwrap();
        let tour = crate::qubo::decode(&q, &inst, &resp.samples[0].bits)
            .unwrap()
            .tour()
            .unwrap();
        let oracle = solve_exhaustive(&inst, &cluster).unwrap();
        assert_eq!(tour.cost(), oracle.cost());
        assert_eq!(resp.samples[0].energy + q.offset(), oracle.cost() as f64);
    }

    #[test]
    fn enumeration_finds_global_minimum() {
        let mut q = Qubo::new(3);
        q.add(0, 0, 1.0);
        q.add(1, 1, -2.0);
        q.add(2, 2, -1.0);
        q.add(1, 2, 4.0);
        let resp = ExactBackend.sample(&BackendRequest::new(q, 1, None)).unwrap();
        assert_eq!(resp.samples[0].bits, vec![false, true, false]);
        assert_eq!(resp.samples[0].energy, -2.0);
    }
}
