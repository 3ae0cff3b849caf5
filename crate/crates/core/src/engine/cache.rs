use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::backends::{solve_exact_heldkarp, solve_exhaustive, Backend, BackendRequest};
use crate::backends::exact::EXHAUSTIVE_MAX;
use crate::model::{AtspInstance, Tour};
use crate::qubo::{build_atsp_qubo, decode, Decoded};

/// An optimized closed loop over one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSolution {
    pub tour: Tour,
    pub source_backend: String,
    /// QUBO energy of the loop, excluding the offset.
    pub energy: f64,
    /// Produced by the classical fallback instead of the backend.
    pub fallback: bool,
}

/// Cache of solved clusters keyed by their sorted node set.
#[derive(Debug, Clone, Default)]
pub struct TabuDictionary {
    entries: BTreeMap<Vec<usize>, SubSolution>,
    hits: usize,
    misses: usize,
}

impl TabuDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(cluster: &[usize]) -> Vec<usize> {
        let mut key = cluster.to_vec();
        key.sort_unstable();
        key
    }

    /// Lookup that counts towards the hit statistics.
    pub fn lookup(&mut self, cluster: &[usize]) -> Option<SubSolution> {
        let found = self.entries.get(&Self::key(cluster)).cloned();
        if found.is_some() {
            self.hits += 1;
        }
        found
    }

    pub fn peek(&self, cluster: &[usize]) -> Option<&SubSolution> {
        self.entries.get(&Self::key(cluster))
    }

    pub fn insert(&mut self, cluster: &[usize], solution: SubSolution) {
        self.entries.insert(Self::key(cluster), solution);
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Backend-call allowance. A unit is reserved before dispatch and given back
/// if the call fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    max_calls: usize,
    used: usize,
}

pub const DEFAULT_BUDGET: usize = 40;

impl Default for Budget {
    fn default() -> Self {
        Self::new(DEFAULT_BUDGET)
    }
}

impl Budget {
    pub fn new(max_calls: usize) -> Self {
        Self { max_calls, used: 0 }
    }

    pub fn max_calls(&self) -> usize {
        self.max_calls
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> usize {
        self.max_calls - self.used
    }

    pub fn is_exhausted(&self) -> bool {
        self.used >= self.max_calls
    }

    pub fn reserve(&mut self) -> Result<(), EngineError> {
        if self.is_exhausted() {
            return Err(EngineError::BudgetExhausted {
                max_calls: self.max_calls,
            });
        }
        self.used += 1;
        Ok(())
    }

    pub fn release(&mut self) {
        self.used = self.used.saturating_sub(1);
    }
}

/// Per-request sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub num_reads: usize,
    /// Mixed with the call index to seed each backend request.
    pub seed: u64,
    pub max_cluster_size: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            num_reads: 100,
            seed: 0,
            max_cluster_size: 10,
        }
    }
}

pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Classical exact solve used when no sample decodes to a tour.
pub fn fallback_solve(instance: &AtspInstance, cluster: &[usize]) -> Result<SubSolution, EngineError> {
    let tour = if cluster.len() <= EXHAUSTIVE_MAX {
        solve_exhaustive(instance, cluster)
    } else {
        solve_exact_heldkarp(instance, cluster)
    }?;
    let key = TabuDictionary::key(cluster);
    let matrix = build_atsp_qubo(instance, &key, None, key.len())?;
    Ok(SubSolution {
        energy: matrix.energy(&matrix.encode(tour.nodes())),
        tour,
        source_backend: "fallback".into(),
        fallback: true,
    })
}

/// Returns the cached loop for `cluster`, or solves it with one backend call.
///
/// A failed backend call gives its budget unit back and is reported as
/// [`EngineError::Backend`]; nothing is cached in that case.
pub fn solve_cluster_cached(
    instance: &AtspInstance,
    cluster: &[usize],
    backend: &dyn Backend,
    tabu: &mut TabuDictionary,
    budget: &mut Budget,
    options: &SolveOptions,
) -> Result<SubSolution, EngineError> {
    if let Some(hit) = tabu.lookup(cluster) {
        return Ok(hit);
    }
    let key = TabuDictionary::key(cluster);
    let matrix = build_atsp_qubo(instance, &key, None, options.max_cluster_size)?;
    budget.reserve()?;
    let request = BackendRequest::new(
        matrix.qubo().clone(),
        options.num_reads,
        Some(derive_seed(options.seed, budget.used() as u64)),
    )
    .with_permutation_side(key.len());
    let response = match backend.sample(&request) {
        Ok(r) => r,
        Err(e) => {
            budget.release();
            return Err(EngineError::Backend(e));
        }
    };
    tabu.misses += 1;

    let mut best: Option<(Tour, f64)> = None;
    for sample in &response.samples {
        if let Decoded::Feasible(tour) = decode(&matrix, instance, &sample.bits)? {
            let better = best.as_ref().is_none_or(|(b, _)| {
                (tour.cost(), tour.nodes()) < (b.cost(), b.nodes())
            });
            if better {
                best = Some((tour, sample.energy));
            }
        }
    }
    let solution = match best {
        Some((tour, energy)) => SubSolution {
            tour,
            source_backend: response.backend_name.clone(),
            energy,
            fallback: false,
        },
        None => fallback_solve(instance, &key)?,
    };
    tabu.insert(&key, solution.clone());
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ExactBackend;
    use crate::fixtures::random_instance;

    #[test]
    fn repeated_cluster_is_a_hit() {
        let inst = random_instance(12, 3, 1, 50);
        let mut tabu = TabuDictionary::new();
        let mut budget = Budget::default();
        let opts = SolveOptions::default();
        let a = solve_cluster_cached(&inst, &[2, 5, 9], &ExactBackend, &mut tabu, &mut budget, &opts).unwrap();
        let b = solve_cluster_cached(&inst, &[9, 2, 5], &ExactBackend, &mut tabu, &mut budget, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(budget.used(), 1);
        assert_eq!((tabu.hits(), tabu.misses(), tabu.len()), (1, 1, 1));
    }

    #[test]
    fn forty_first_miss_is_refused() {
        let inst = random_instance(20, 1, 1, 50);
        let mut tabu = TabuDictionary::new();
        let mut budget = Budget::new(40);
        let opts = SolveOptions::default();
        let mut pairs = Vec::new();
        for a in 0..20 {
            for b in (a + 1)..20 {
                pairs.push([a, b]);
            }
        }
        for p in &pairs[..40] {
            solve_cluster_cached(&inst, p, &ExactBackend, &mut tabu, &mut budget, &opts).unwrap();
        }
        assert_eq!(budget.used(), 40);
        let err = solve_cluster_cached(&inst, &pairs[40], &ExactBackend, &mut tabu, &mut budget, &opts);
        assert!(matches!(err, Err(EngineError::BudgetExhausted { max_calls: 40 })));
        assert_eq!(budget.used(), 40);
        // hits stay free once the budget is spent
        solve_cluster_cached(&inst, &pairs[0], &ExactBackend, &mut tabu, &mut budget, &opts).unwrap();
    }

    #[test]
    fn seeds_differ_per_call() {
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }
}
