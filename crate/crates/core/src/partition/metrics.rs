//! Clustering validity indices over a symmetrised view of the instance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::PartitionError;
use crate::model::{AtspInstance, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClusterMetric {
    CalinskiHarabasz,
    DaviesBouldin,
    Modularity,
}

impl ClusterMetric {
    pub const ALL: [ClusterMetric; 3] = [
        ClusterMetric::CalinskiHarabasz,
        ClusterMetric::DaviesBouldin,
        ClusterMetric::Modularity,
    ];

    pub fn maximize(self) -> bool {
        !matches!(self, ClusterMetric::DaviesBouldin)
    }

    /// Strictly better under this metric's direction.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.maximize() {
            a > b
        } else {
            a < b
        }
    }

    pub fn worst(self) -> f64 {
        if self.maximize() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClusterMetric::CalinskiHarabasz => "calinski_harabasz",
            ClusterMetric::DaviesBouldin => "davies_bouldin",
            ClusterMetric::Modularity => "modularity",
        }
    }
}

/// Maximum number of embedding dimensions used for the centroid metrics.
pub const EMBED_DIMS: usize = 8;

/// Symmetric distances `d_ij = (c_ij + c_ji) / 2`, similarities
/// `w_ij = c_max - d_ij`, and a classical MDS embedding of the distances.
#[derive(Debug, Clone)]
pub struct SimilarityView {
    n: usize,
    distance: Vec<f64>,
    similarity: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl SimilarityView {
    pub fn from_instance(instance: &AtspInstance) -> Self {
        let n = instance.dimension();
        let c_max = instance.max_cost() as f64;
        let mut distance = vec![0.0; n * n];
        let mut similarity = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = (instance.cost(i, j) + instance.cost(j, i)) as f64 / 2.0;
                    distance[i * n + j] = d;
                    similarity[i * n + j] = c_max - d;
                }
            }
        }
        Self::from_matrices(n, distance, similarity)
    }

    /// From explicit symmetric matrices (row-major, `n * n`).
    pub fn from_matrices(n: usize, distance: Vec<f64>, similarity: Vec<f64>) -> Self {
        assert_eq!(distance.len(), n * n);
        assert_eq!(similarity.len(), n * n);
        let points = classical_mds(n, &distance, EMBED_DIMS.min(n.saturating_sub(1)));
        Self {
            n,
            distance,
            similarity,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance[i * self.n + j]
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.similarity[i * self.n + j]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// Coordinates whose Euclidean distances approximate `distance`, from the
/// top positive eigenpairs of the double-centred squared distance matrix.
fn classical_mds(n: usize, distance: &[f64], dims: usize) -> Vec<Vec<f64>> {
    if n == 0 || dims == 0 {
        return vec![Vec::new(); n];
    }
    let sq = DMatrix::from_fn(n, n, |i, j| distance[i * n + j].powi(2));
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .take(dims)
        .filter(|&k| eig.eigenvalues[k] > 1e-9 * top.max(1e-300))
        .collect();
    (0..n)
        .map(|i| {
            kept.iter()
                .map(|&k| eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt())
                .collect()
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn centroids(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; d]; k];
    let mut sizes = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sizes[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &size) in sums.iter_mut().zip(&sizes) {
        if size > 0 {
            s.iter_mut().for_each(|x| *x /= size as f64);
        }
    }
    (sums, sizes)
}

/// Between/within dispersion ratio scaled by `(N-K)/(K-1)`. Infinite when
/// every cluster collapses to a point.
pub fn calinski_harabasz(points: &[Vec<f64>], labels: &[usize]) -> Result<f64, PartitionError> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let n = points.len();
    if k < 2 || n <= k {
        return Err(PartitionError::DegenerateMetric(ClusterMetric::CalinskiHarabasz));
    }
    let (cents, sizes) = centroids(points, labels, k);
    let d = points[0].len();
    let mut grand = vec![0.0; d];
    for p in points {
        for (g, x) in grand.iter_mut().zip(p) {
            *g += x / n as f64;
        }
    }
    let between: f64 = cents
        .iter()
        .zip(&sizes)
        .map(|(c, &s)| s as f64 * dist(c, &grand).powi(2))
        .sum();
    let within: f64 = points
        .iter()
        .zip(labels)
        .map(|(p, &l)| dist(p, &cents[l]).powi(2))
        .sum();
    Ok(ch_ratio(between, within, n, k))
}

pub(crate) fn ch_ratio(between: f64, within: f64, n: usize, k: usize) -> f64 {
    if within <= 1e-12 * (between + within).max(1e-300) {
        return if between > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

/// Mean over clusters of the worst `(s_i + s_j) / |c_i - c_j|` ratio.
pub fn davies_bouldin(points: &[Vec<f64>], labels: &[usize]) -> Result<f64, PartitionError> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(PartitionError::DegenerateMetric(ClusterMetric::DaviesBouldin));
    }
    let (cents, sizes) = centroids(points, labels, k);
    let mut spread = vec![0.0; k];
    for (p, &l) in points.iter().zip(labels) {
        spread[l] += dist(p, &cents[l]);
    }
    for (s, &size) in spread.iter_mut().zip(&sizes) {
        if size > 0 {
            *s /= size as f64;
        }
    }
    Ok(db_from_parts(&cents, &spread))
}

pub(crate) fn db_from_parts(cents: &[Vec<f64>], spread: &[f64]) -> f64 {
    let k = cents.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let num = spread[i] + spread[j];
            let den = dist(&cents[i], &cents[j]);
            let r = if den > 0.0 {
                num / den
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(r);
        }
        total += worst;
    }
    total / k as f64
}

/// Newman modularity `sum_c (w_in,c / W - (deg_c / 2W)^2)` on a weighted
/// undirected graph given as a symmetric row-major `n * n` matrix.
pub fn modularity(n: usize, weights: &[f64], labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; k];
    let mut degree = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = weights[i * n + j];
            degree[labels[i]] += w;
            if i < j {
                total += w;
                if labels[i] == labels[j] {
                    inside[labels[i]] += w;
                }
            }
        }
    }
    modularity_from_parts(&inside, &degree, total)
}

pub(crate) fn modularity_from_parts(inside: &[f64], degree: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    inside
        .iter()
        .zip(degree)
        .map(|(&w_in, &deg)| w_in / total - (deg / (2.0 * total)).powi(2))
        .sum()
}

/// Index value of `partition` under `metric`.
pub fn score_partition(
    view: &SimilarityView,
    partition: &Partition,
    metric: ClusterMetric,
) -> Result<f64, PartitionError> {
    let labels = partition.labels();
    match metric {
        ClusterMetric::CalinskiHarabasz => calinski_harabasz(view.points(), labels),
        ClusterMetric::DaviesBouldin => davies_bouldin(view.points(), labels),
        ClusterMetric::Modularity => Ok(modularity(view.len(), &view.similarity, labels)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cliques() -> (usize, Vec<f64>) {
        // nodes 0..3 and 3..6 fully connected inside, nothing across
        let n = 6;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && (i < 3) == (j < 3) {
                    w[i * n + j] = 1.0;
                }
            }
        }
        (n, w)
    }

    #[test]
    fn modularity_of_two_disconnected_cliques() {
        let (n, w) = two_cliques();
        // W = 6, each side: 3/6 - (6/12)^2 = 0.25
        assert!((modularity(n, &w, &[0, 0, 0, 1, 1, 1]) - 0.5).abs() < 1e-12);
        assert!(modularity(n, &w, &[0; 6]).abs() < 1e-12);
    }

    fn blobs(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..12)
            .map(|i| {
                let cx = if i < 6 { 0.0 } else { 20.0 };
                vec![cx + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            })
            .collect()
    }

    #[test]
    fn calinski_harabasz_prefers_true_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = blobs(&mut rng);
        let truth: Vec<usize> = (0..12).map(|i| usize::from(i >= 6)).collect();
        let good = calinski_harabasz(&pts, &truth).unwrap();
        for _ in 0..20 {
            let mut labels: Vec<usize> = (0..12).map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 0;
            labels[11] = 1;
            if labels == truth {
                continue;
            }
            assert!(good > calinski_harabasz(&pts, &labels).unwrap());
        }
    }

    #[test]
    fn davies_bouldin_prefers_true_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = blobs(&mut rng);
        let truth: Vec<usize> = (0..12).map(|i| usize::from(i >= 6)).collect();
        let mixed: Vec<usize> = (0..12).map(|i| i % 2).collect();
        assert!(
            davies_bouldin(&pts, &truth).unwrap() < davies_bouldin(&pts, &mixed).unwrap()
        );
    }

    #[test]
    fn single_cluster_is_degenerate_for_centroid_metrics() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            calinski_harabasz(&pts, &[0, 0, 0]),
            Err(PartitionError::DegenerateMetric(ClusterMetric::CalinskiHarabasz))
        ));
        assert!(davies_bouldin(&pts, &[0, 0, 0]).is_err());
    }

    #[test]
    fn mds_reproduces_euclidean_distances() {
        let pts = [[0.0, 0.0], [3.0, 0.0], [0.0, 4.0], [5.0, 5.0]];
        let n = pts.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = dist(&pts[i], &pts[j]);
            }
        }
        let view = SimilarityView::from_matrices(n, d.clone(), vec![0.0; n * n]);
        for i in 0..n {
            for j in 0..n {
                let e = dist(&view.points()[i], &view.points()[j]);
                assert!((e - d[i * n + j]).abs() < 1e-9, "{i},{j}: {e}");
            }
        }
    }

    #[test]
    fn similarity_view_is_symmetric_and_non_negative() {
        let inst = AtspInstance::from_rows(
            "s",
            &[vec![0, 4, 9], vec![2, 0, 7], vec![5, 1, 0]],
        )
        .unwrap();
        let view = SimilarityView::from_instance(&inst);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(view.distance(i, j), view.distance(j, i));
                assert_eq!(view.similarity(i, j), view.similarity(j, i));
                assert!(view.similarity(i, j) >= 0.0);
            }
        }
        assert_eq!(view.distance(0, 2), 7.0);
        assert_eq!(view.similarity(0, 2), 2.0);
    }
}
