//! Random partitions and the insertion perturbation.

use rand::seq::SliceRandom;
use rand::Rng;

use super::PartitionError;
use crate::model::{Partition, MIN_CLUSTER_SIZE};

pub(crate) fn check_feasible(n: usize, max_cluster_size: usize) -> Result<(), PartitionError> {
    let infeasible = PartitionError::InfeasibleConstraints {
        n,
        max_cluster_size,
    };
    if n < MIN_CLUSTER_SIZE || max_cluster_size < MIN_CLUSTER_SIZE {
        return Err(infeasible);
    }
    if 2 * n.div_ceil(max_cluster_size) > n {
        return Err(infeasible);
    }
    Ok(())
}

/// Uniformly shuffled nodes cut into chunks whose sizes are drawn one at a
/// time from the sizes that still leave a completable remainder.
pub fn random_feasible_partition<R: Rng + ?Sized>(
    n: usize,
    max_cluster_size: usize,
    rng: &mut R,
) -> Result<Partition, PartitionError> {
    check_feasible(n, max_cluster_size)?;
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut labels = vec![0; n];
    let mut rest = n;
    let mut at = 0;
    let mut k = 0;
    while rest > 0 {
        let allowed: Vec<usize> = (MIN_CLUSTER_SIZE..=max_cluster_size.min(rest))
            .filter(|&s| rest - s == 0 || rest - s >= MIN_CLUSTER_SIZE)
            .collect();
        let size = *allowed.choose(rng).expect("feasible remainder");
        for &v in &nodes[at..at + size] {
            labels[v] = k;
        }
        at += size;
        rest -= size;
        k += 1;
    }
    Ok(Partition::from_labels(labels).compacted())
}

/// Fewest possible clusters (`ceil(n / max)`), sizes as even as possible,
/// members assigned at random.
pub fn balanced_partition<R: Rng + ?Sized>(
    n: usize,
    max_cluster_size: usize,
    rng: &mut R,
) -> Result<Partition, PartitionError> {
    check_feasible(n, max_cluster_size)?;
    let k = n.div_ceil(max_cluster_size);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut labels = vec![0; n];
    for (i, &v) in nodes.iter().enumerate() {
        labels[v] = i % k;
    }
    Ok(Partition::from_labels(labels).compacted())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Insertion {
    Single(usize),
    /// Source cluster holds exactly two nodes; both move so no singleton remains.
    Pair(usize),
}

fn legal_insertions(labels: &[usize], sizes: &[usize], v: usize, max: usize) -> Vec<Insertion> {
    let from = labels[v];
    (0..sizes.len())
        .filter(|&c| c != from)
        .filter_map(|c| {
            if sizes[from] > MIN_CLUSTER_SIZE && sizes[c] < max {
                Some(Insertion::Single(c))
            } else if sizes[from] == MIN_CLUSTER_SIZE && sizes[c] + MIN_CLUSTER_SIZE <= max {
                Some(Insertion::Pair(c))
            } else {
                None
            }
        })
        .collect()
}

/// Moves one node (or a two-node cluster) into another cluster. The node is
/// uniform among nodes that have some legal target, the target uniform among
/// that node's legal targets. Labels of the result are compacted.
pub fn insertion_perturb<R: Rng + ?Sized>(
    partition: &Partition,
    max_cluster_size: usize,
    rng: &mut R,
) -> Result<Partition, PartitionError> {
    let labels = partition.labels();
    let sizes = partition.sizes();
    let movable: Vec<(usize, Vec<Insertion>)> = (0..labels.len())
        .map(|v| (v, legal_insertions(labels, &sizes, v, max_cluster_size)))
        .filter(|(_, moves)| !moves.is_empty())
        .collect();
    let (v, moves) = movable.choose(rng).ok_or(PartitionError::NoLegalMove)?;
    let mut out = labels.to_vec();
    let from = labels[*v];
    match *moves.choose(rng).expect("non-empty") {
        Insertion::Single(c) => out[*v] = c,
        Insertion::Pair(c) => out.iter_mut().filter(|l| **l == from).for_each(|l| *l = c),
    }
    Ok(Partition::from_labels(out).compacted())
}
