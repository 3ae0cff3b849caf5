//! Problem and solution value types: the cost matrix, closed tours and
//! label-encoded partitions.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tsplib::{EdgeWeightFormat, EdgeWeightType, ProblemType, TsplibHeader};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("node {0} appears more than once")]
    DuplicateNode(usize),
    #[error("node {node} is out of range for an instance with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("a tour needs at least 2 nodes, got {0}")]
    TooShort(usize),
    #[error("cost matrix has {found} entries, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("negative arc cost {cost} on ({from}, {to})")]
    NegativeCost { from: usize, to: usize, cost: i64 },
}

/// A complete directed graph with integral arc costs.
///
/// Diagonal entries are kept only so that the text form can be written back
/// unchanged; no cost query ever reads them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtspInstance {
    header: TsplibHeader,
    n: usize,
    costs: Vec<i64>,
}

impl AtspInstance {
    /// Builds an instance from a header and a row-major `N*N` matrix.
    pub fn new(header: TsplibHeader, costs: Vec<i64>) -> Result<Self, ModelError> {
        let n = header.dimension;
        if n < 2 {
            return Err(ModelError::DimensionTooSmall(n));
        }
        if costs.len() != n * n {
            return Err(ModelError::ShapeMismatch {
                expected: n * n,
                found: costs.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let c = costs[i * n + j];
                if i != j && c < 0 {
                    return Err(ModelError::NegativeCost { from: i, to: j, cost: c });
                }
            }
        }
        Ok(Self { header, n, costs })
    }

    /// Convenience constructor for an explicit ATSP matrix given as rows.
    pub fn from_rows(name: &str, rows: &[Vec<i64>]) -> Result<Self, ModelError> {
        let n = rows.len();
        let mut costs = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(ModelError::ShapeMismatch {
                    expected: n * n,
                    found: n * row.len(),
                });
            }
            costs.extend_from_slice(row);
        }
        let header = TsplibHeader {
            name: name.to_string(),
            problem_type: ProblemType::Atsp,
            dimension: n,
            edge_weight_type: EdgeWeightType::Explicit,
            edge_weight_format: Some(EdgeWeightFormat::FullMatrix),
            comment: None,
        };
        Self::new(header, costs)
    }

    pub fn header(&self) -> &TsplibHeader {
        &self.header
    }

    pub fn name(&self) -> &str {
        &self.header.name
    }

    /// Number of nodes `N`.
    pub fn dimension(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cost(&self, from: usize, to: usize) -> i64 {
        debug_assert!(from != to, "diagonal entries carry no cost");
        self.costs[from * self.n + to]
    }

    /// Row-major matrix exactly as read, diagonal included.
    pub fn raw_matrix(&self) -> &[i64] {
        &self.costs
    }

    /// Largest off-diagonal cost among arcs joining nodes of `nodes`.
    pub fn max_cost_within(&self, nodes: &[usize]) -> i64 {
        let mut best = 0;
        for &i in nodes {
            for &j in nodes {
                if i != j {
                    best = best.max(self.cost(i, j));
                }
            }
        }
        best
    }

    /// Largest off-diagonal cost of the whole instance.
    pub fn max_cost(&self) -> i64 {
        let all: Vec<usize> = (0..self.n).collect();
        self.max_cost_within(&all)
    }

    /// First pair `(i, j)` with `c(i,j) != c(j,i)`, if any.
    pub fn asymmetry_witness(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.cost(i, j) != self.cost(j, i) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub(crate) fn check_nodes(&self, nodes: &[usize]) -> Result<(), ModelError> {
        let mut seen = HashSet::with_capacity(nodes.len());
        for &v in nodes {
            if v >= self.n {
                return Err(ModelError::NodeOutOfRange { node: v, n: self.n });
            }
            if !seen.insert(v) {
                return Err(ModelError::DuplicateNode(v));
            }
        }
        Ok(())
    }
}

/// Closed-cycle cost of visiting `nodes` in order and returning to the start.
pub fn tour_cost(instance: &AtspInstance, nodes: &[usize]) -> Result<i64, ModelError> {
    if nodes.len() < 2 {
        return Err(ModelError::TooShort(nodes.len()));
    }
    instance.check_nodes(nodes)?;
    Ok(cycle_cost_unchecked(instance, nodes))
}

pub(crate) fn cycle_cost_unchecked(instance: &AtspInstance, nodes: &[usize]) -> i64 {
    let len = nodes.len();
    (0..len)
        .map(|k| instance.cost(nodes[k], nodes[(k + 1) % len]))
        .sum()
}

/// A Hamiltonian cycle over a subset of the nodes together with its cost.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tour {
    nodes: Vec<usize>,
    cost: i64,
}

impl Tour {
    pub fn new(instance: &AtspInstance, nodes: Vec<usize>) -> Result<Self, ModelError> {
        let cost = tour_cost(instance, &nodes)?;
        Ok(Self { nodes, cost })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn cost(&self) -> i64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Rotation that puts the smallest node first. Direction is kept since
    /// reversing an asymmetric cycle changes its cost.
    pub fn canonicalize(&self) -> Tour {
        let start = self
            .nodes
            .iter()
            .enumerate()
            .min_by_key(|&(_, v)| *v)
            .map(|(k, _)| k)
            .unwrap_or(0);
        let mut nodes = Vec::with_capacity(self.nodes.len());
        nodes.extend_from_slice(&self.nodes[start..]);
        nodes.extend_from_slice(&self.nodes[..start]);
        Tour {
            nodes,
            cost: self.cost,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.nodes.first() == self.nodes.iter().min()
    }

    /// Directed arcs of the cycle in visiting order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let len = self.nodes.len();
        (0..len).map(move |k| (self.nodes[k], self.nodes[(k + 1) % len]))
    }
}

impl fmt::Display for Tour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.nodes.iter().map(|v| v.to_string()).collect();
        write!(f, "({}) cost={}", parts.join(" "), self.cost)
    }
}

/// Cluster assignment in label-based encoding: `labels[v]` is the cluster of node `v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionViolation {
    LengthMismatch { expected: usize, found: usize },
    UnusedCluster(usize),
    ClusterTooSmall { cluster: usize, size: usize },
    ClusterTooLarge { cluster: usize, size: usize, max: usize },
}

impl fmt::Display for PartitionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LengthMismatch { expected, found } => {
                write!(f, "{found} labels for {expected} nodes")
            }
            Self::UnusedCluster(c) => write!(f, "cluster id {c} unused"),
            Self::ClusterTooSmall { cluster, size } => {
                write!(f, "cluster {cluster} size {size} < {MIN_CLUSTER_SIZE}")
            }
            Self::ClusterTooLarge { cluster, size, max } => {
                write!(f, "cluster {cluster} size {size} > {max}")
            }
        }
    }
}

/// A single node has no interior route, so every cluster carries at least two.
pub const MIN_CLUSTER_SIZE: usize = 2;

impl Partition {
    /// Wraps raw labels; `K` is one more than the largest label. No validity check.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    /// The trivial partition with every node in cluster 0.
    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    /// Builds labels from explicit clusters; nodes must cover `0..n` exactly once.
    pub fn from_clusters(n: usize, clusters: &[Vec<usize>]) -> Self {
        let mut labels = vec![usize::MAX; n];
        for (c, members) in clusters.iter().enumerate() {
            for &v in members {
                labels[v] = c;
            }
        }
        debug_assert!(labels.iter().all(|&l| l != usize::MAX));
        Self::from_labels(labels).compacted()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_clusters(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Member lists per cluster id, each sorted ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (v, &l) in self.labels.iter().enumerate() {
            out[l].push(v);
        }
        out
    }

    /// Relabels clusters in order of first appearance, dropping unused ids.
    pub fn compacted(&self) -> Partition {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Partition { labels, k: next }
    }
}

/// Every violated partition invariant, in a stable order. Empty means valid.
pub fn validate_partition(
    partition: &Partition,
    n: usize,
    max_cluster_size: usize,
) -> Vec<PartitionViolation> {
    let mut out = Vec::new();
    if partition.len() != n {
        out.push(PartitionViolation::LengthMismatch {
            expected: n,
            found: partition.len(),
        });
    }
    for (cluster, size) in partition.sizes().into_iter().enumerate() {
        if size == 0 {
            out.push(PartitionViolation::UnusedCluster(cluster));
        } else if size < MIN_CLUSTER_SIZE {
            out.push(PartitionViolation::ClusterTooSmall { cluster, size });
        } else if size > max_cluster_size {
            out.push(PartitionViolation::ClusterTooLarge {
                cluster,
                size,
                max: max_cluster_size,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> AtspInstance {
        AtspInstance::from_rows("toy", &[vec![0, 5], vec![7, 0]]).unwrap()
    }

    #[test]
    fn two_node_cycle_cost() {
        let inst = toy();
        assert_eq!(tour_cost(&inst, &[0, 1]).unwrap(), 12);
        assert_eq!(tour_cost(&inst, &[1, 0]).unwrap(), 12);
    }

    #[test]
    fn seeded_five_node_cost_matches_hand_sum() {
        // arcs of (3 0 4 1 2): 3->0=16, 0->4=4, 4->1=21, 1->2=7, 2->3=13
        let rows = vec![
            vec![0, 2, 9, 10, 4],
            vec![1, 0, 7, 4, 12],
            vec![15, 7, 0, 13, 3],
            vec![16, 3, 12, 0, 5],
            vec![6, 21, 8, 9, 0],
        ];
        let inst = AtspInstance::from_rows("five", &rows).unwrap();
        assert_eq!(tour_cost(&inst, &[3, 0, 4, 1, 2]).unwrap(), 16 + 4 + 21 + 7 + 13);
    }

    #[test]
    fn tour_cost_errors() {
        let inst = toy();
        assert_eq!(tour_cost(&inst, &[0, 0]), Err(ModelError::DuplicateNode(0)));
        assert_eq!(
            tour_cost(&inst, &[0, 2]),
            Err(ModelError::NodeOutOfRange { node: 2, n: 2 })
        );
        assert_eq!(tour_cost(&inst, &[1]), Err(ModelError::TooShort(1)));
    }

    #[test]
    fn reversal_changes_cost_on_asymmetric_witness() {
        let rows = vec![vec![0, 1, 10], vec![10, 0, 1], vec![1, 10, 0]];
        let inst = AtspInstance::from_rows("w", &rows).unwrap();
        assert_eq!(tour_cost(&inst, &[0, 1, 2]).unwrap(), 3);
        assert_eq!(tour_cost(&inst, &[0, 2, 1]).unwrap(), 30);
    }

    #[test]
    fn canonicalize_rotates_without_reversing() {
        let rows = vec![vec![0, 1, 10], vec![10, 0, 1], vec![1, 10, 0]];
        let inst = AtspInstance::from_rows("w", &rows).unwrap();
        let t = Tour::new(&inst, vec![2, 0, 1]).unwrap();
        let c = t.canonicalize();
        assert_eq!(c.nodes(), &[0, 1, 2]);
        assert_eq!(c.cost(), t.cost());
        assert_eq!(tour_cost(&inst, c.nodes()).unwrap(), t.cost());

        let fixed = Tour::new(&inst, vec![0, 1, 2]).unwrap();
        assert_eq!(fixed.canonicalize(), fixed);
    }

    #[test]
    fn canonicalize_three_one_two() {
        let inst = AtspInstance::from_rows(
            "f",
            &[
                vec![0, 1, 1, 1],
                vec![1, 0, 1, 1],
                vec![1, 1, 0, 1],
                vec![1, 1, 1, 0],
            ],
        )
        .unwrap();
        let t = Tour::new(&inst, vec![3, 1, 2]).unwrap();
        assert_eq!(t.canonicalize().nodes(), &[1, 2, 3]);
    }

    #[test]
    fn partition_verdicts() {
        let p = Partition::from_labels(vec![0, 0, 1, 1]);
        assert!(validate_partition(&p, 4, 10).is_empty());

        let p = Partition::from_labels(vec![0, 0, 0]);
        assert_eq!(
            validate_partition(&p, 3, 2),
            vec![PartitionViolation::ClusterTooLarge { cluster: 0, size: 3, max: 2 }]
        );

        let p = Partition::from_labels(vec![0, 2, 2]);
        let v = validate_partition(&p, 3, 10);
        assert!(v.contains(&PartitionViolation::UnusedCluster(1)));
    }

    #[test]
    fn compaction_orders_by_first_appearance() {
        let p = Partition::from_labels(vec![3, 3, 1, 1, 3]).compacted();
        assert_eq!(p.labels(), &[0, 0, 1, 1, 0]);
        assert_eq!(p.num_clusters(), 2);
        assert_eq!(p.sizes().iter().sum::<usize>(), 5);
    }

    #[test]
    fn negative_costs_rejected() {
        let err = AtspInstance::from_rows("neg", &[vec![0, -1], vec![1, 0]]).unwrap_err();
        assert!(matches!(err, ModelError::NegativeCost { .. }));
    }
}
