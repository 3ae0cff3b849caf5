//! Multiform variable neighbourhood search: one subpopulation per validity
//! index, each improving its own incumbent, with periodic exchange of
//! incumbents between subpopulations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{ClusterMetric, SimilarityView};
use super::moves::balanced_partition;
use super::state::LabelState;
use super::PartitionError;
use crate::model::{AtspInstance, Partition, MIN_CLUSTER_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnsConfig {
    /// Shake-and-descend rounds per subpopulation.
    pub iterations: usize,
    /// Rounds between incumbent exchanges; 0 disables migration.
    pub migration_interval: usize,
    /// Largest shaking neighbourhood (number of random moves).
    pub max_shake: usize,
    /// Cap on best-improvement passes per local search.
    pub max_descent_passes: usize,
    pub seed: u64,
}

impl Default for VnsConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            migration_interval: 40,
            max_shake: 3,
            max_descent_passes: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiformOutcome {
    pub partitions: BTreeMap<ClusterMetric, Partition>,
    pub initial_scores: BTreeMap<ClusterMetric, f64>,
    pub final_scores: BTreeMap<ClusterMetric, f64>,
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Relabel(usize, usize),
    Swap(usize, usize),
}

fn apply(state: &mut LabelState<'_>, mv: Move) {
    match mv {
        Move::Relabel(v, to) => state.relabel(v, to),
        Move::Swap(a, b) => state.swap(a, b),
    }
}

fn relabel_legal(state: &LabelState<'_>, v: usize, to: usize, max: usize) -> bool {
    let from = state.label(v);
    from != to && state.size(from) > MIN_CLUSTER_SIZE && state.size(to) < max
}

fn random_move<R: Rng>(state: &LabelState<'_>, max: usize, rng: &mut R) -> Option<Move> {
    let n = state.labels().len();
    let k = state.num_clusters();
    for _ in 0..32 {
        if rng.gen_bool(0.5) {
            let v = rng.gen_range(0..n);
            let to = rng.gen_range(0..k);
            if relabel_legal(state, v, to, max) {
                return Some(Move::Relabel(v, to));
            }
        } else {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if state.label(a) != state.label(b) {
                return Some(Move::Swap(a, b));
            }
        }
    }
    None
}

/// Best-improvement descent over relabel and swap moves.
fn descend(state: &mut LabelState<'_>, metric: ClusterMetric, max: usize, passes: usize) -> f64 {
    let n = state.labels().len();
    let k = state.num_clusters();
    let mut current = state.score(metric);
    for _ in 0..passes {
        let mut best: Option<(Move, f64)> = None;
        let mut consider = |mv: Move, s: f64| {
            if metric.better(s, best.map_or(current, |(_, b)| b)) {
                best = Some((mv, s));
            }
        };
        for v in 0..n {
            for to in 0..k {
                if relabel_legal(state, v, to, max) {
                    consider(Move::Relabel(v, to), state.score_relabel(metric, v, to));
                }
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                if state.label(a) != state.label(b) {
                    consider(Move::Swap(a, b), state.score_swap(metric, a, b));
                }
            }
        }
        match best {
            Some((mv, s)) => {
                apply(state, mv);
                current = s;
            }
            None => break,
        }
    }
    current
}

struct Subpopulation {
    metric: ClusterMetric,
    labels: Vec<usize>,
    score: f64,
    shake: usize,
    rng: ChaCha8Rng,
}

impl Subpopulation {
    fn step(&mut self, view: &SimilarityView, max: usize, config: &VnsConfig) {
        let mut state = LabelState::new(view, &self.labels);
        for _ in 0..self.shake {
            if let Some(mv) = random_move(&state, max, &mut self.rng) {
                apply(&mut state, mv);
            }
        }
        let s = descend(&mut state, self.metric, max, config.max_descent_passes);
        if self.metric.better(s, self.score) {
            self.labels = state.labels().to_vec();
            self.score = s;
            self.shake = 1;
        } else {
            self.shake = self.shake % config.max_shake.max(1) + 1;
        }
    }
}

/// Runs one subpopulation per metric from a shared balanced start using the
/// fewest clusters allowed by `max_cluster_size`. Each incumbent only ever
/// improves. When the instance fits in one cluster, that cluster is returned
/// for every metric.
pub fn multiform_vns_init(
    instance: &AtspInstance,
    max_cluster_size: usize,
    config: &VnsConfig,
) -> Result<MultiformOutcome, PartitionError> {
    let n = instance.dimension();
    if n <= max_cluster_size {
        let single = Partition::single(n);
        let partitions = ClusterMetric::ALL.iter().map(|&m| (m, single.clone())).collect();
        let nan: BTreeMap<_, _> = ClusterMetric::ALL.iter().map(|&m| (m, f64::NAN)).collect();
        return Ok(MultiformOutcome {
            partitions,
            initial_scores: nan.clone(),
            final_scores: nan,
        });
    }
    let view = SimilarityView::from_instance(instance);
    multiform_vns_on_view(&view, max_cluster_size, config)
}

pub fn multiform_vns_on_view(
    view: &SimilarityView,
    max_cluster_size: usize,
    config: &VnsConfig,
) -> Result<MultiformOutcome, PartitionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = balanced_partition(view.len(), max_cluster_size, &mut rng)?;
    let mut pops: Vec<Subpopulation> = ClusterMetric::ALL
        .iter()
        .map(|&metric| {
            let state = LabelState::new(view, start.labels());
            Subpopulation {
                metric,
                labels: start.labels().to_vec(),
                score: state.score(metric),
                shake: 1,
                rng: ChaCha8Rng::seed_from_u64(rng.gen()),
            }
        })
        .collect();
    let initial_scores = pops.iter().map(|p| (p.metric, p.score)).collect();

    let mut round = 0usize;
    for it in 1..=config.iterations {
        for pop in pops.iter_mut() {
            pop.step(view, max_cluster_size, config);
        }
        if config.migration_interval > 0 && it % config.migration_interval == 0 {
            // round-robin: on exchange r, subpopulation i looks at i + 1 + (r mod (P-1))
            let p = pops.len();
            let shift = 1 + round % (p - 1);
            round += 1;
            let snapshot: Vec<Vec<usize>> = pops.iter().map(|s| s.labels.clone()).collect();
            for (i, pop) in pops.iter_mut().enumerate() {
                let donor = &snapshot[(i + shift) % p];
                let s = LabelState::new(view, donor).score(pop.metric);
                if pop.metric.better(s, pop.score) {
                    pop.labels = donor.clone();
                    pop.score = s;
                }
            }
        }
    }

    Ok(MultiformOutcome {
        partitions: pops
            .iter()
            .map(|p| (p.metric, Partition::from_labels(p.labels.clone()).compacted()))
            .collect(),
        initial_scores,
        final_scores: pops.iter().map(|p| (p.metric, p.score)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{planted_block_instance, random_instance};
    use crate::model::validate_partition;
    use crate::partition::metrics::score_partition;

    fn quick() -> VnsConfig {
        VnsConfig {
            iterations: 20,
            migration_interval: 5,
            ..VnsConfig::default()
        }
    }

    #[test]
    fn small_instances_get_one_cluster() {
        let inst = random_instance(8, 1, 1, 50);
        let out = multiform_vns_init(&inst, 10, &quick()).unwrap();
        for p in out.partitions.values() {
            assert_eq!(*p, Partition::single(8));
        }
    }

    #[test]
    fn incumbents_never_worsen_and_stay_valid() {
        let inst = random_instance(23, 4, 1, 100);
        let out = multiform_vns_init(&inst, 6, &quick()).unwrap();
        let view = SimilarityView::from_instance(&inst);
        for metric in ClusterMetric::ALL {
            let p = &out.partitions[&metric];
            assert!(validate_partition(p, 23, 6).is_empty());
            let init = out.initial_scores[&metric];
            let fin = out.final_scores[&metric];
            assert!(!metric.better(init, fin), "{metric:?}: {init} -> {fin}");
            let full = score_partition(&view, p, metric).unwrap();
            assert!((full - fin).abs() <= 1e-7 * full.abs().max(1.0));
        }
    }

    #[test]
    fn recovers_planted_blocks() {
        let (inst, truth) = planted_block_instance(&[6, 6, 6], 7, (1, 5), (80, 100));
        let out = multiform_vns_init(&inst, 6, &quick()).unwrap();
        for metric in ClusterMetric::ALL {
            assert_eq!(out.partitions[&metric].compacted(), truth.compacted(), "{metric:?}");
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let inst = random_instance(15, 9, 1, 100);
        let a = multiform_vns_init(&inst, 5, &quick()).unwrap();
        let b = multiform_vns_init(&inst, 5, &quick()).unwrap();
        assert_eq!(a.partitions, b.partitions);
    }
}
