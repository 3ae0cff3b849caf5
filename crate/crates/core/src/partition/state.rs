//! Labelling with cached per-cluster aggregates. Candidate relabels and swaps
//! are scored without being applied: O(1) for modularity, O(d) for
//! Calinski-Harabasz and O(N*d + K^2*d) for Davies-Bouldin.

use super::metrics::{ch_ratio, db_from_parts, modularity_from_parts, ClusterMetric, SimilarityView};

pub(crate) struct LabelState<'a> {
    view: &'a SimilarityView,
    labels: Vec<usize>,
    sizes: Vec<usize>,
    sums: Vec<Vec<f64>>,
    /// `|S_c|^2 / s_c` per cluster, where `S_c` is the coordinate sum.
    energy: Vec<f64>,
    spread: Vec<f64>,
    /// `node_to_cluster[v * k + c]`: similarity mass between `v` and cluster `c`, excluding `v`.
    node_to_cluster: Vec<f64>,
    inside: Vec<f64>,
    degree: Vec<f64>,
    node_degree: Vec<f64>,
    total_weight: f64,
    grand_energy: f64,
    total_scatter: f64,
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum()
}

impl<'a> LabelState<'a> {
    pub(crate) fn new(view: &'a SimilarityView, labels: &[usize]) -> Self {
        let n = view.len();
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let pts = view.points();
        let d = pts.first().map_or(0, Vec::len);
        let mut total = vec![0.0; d];
        for p in pts {
            for (g, x) in total.iter_mut().zip(p) {
                *g += x;
            }
        }
        let grand_energy = if n > 0 { sq_norm(&total) / n as f64 } else { 0.0 };
        let total_scatter = pts.iter().map(|p| sq_norm(p)).sum::<f64>() - grand_energy;

        let mut node_degree = vec![0.0; n];
        let mut node_to_cluster = vec![0.0; n * k];
        let mut total_weight = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let w = view.similarity(i, j);
                    node_degree[i] += w;
                    node_to_cluster[i * k + labels[j]] += w;
                    if i < j {
                        total_weight += w;
                    }
                }
            }
        }
        let mut sizes = vec![0; k];
        let mut sums = vec![vec![0.0; d]; k];
        let mut inside = vec![0.0; k];
        let mut degree = vec![0.0; k];
        for v in 0..n {
            let l = labels[v];
            sizes[l] += 1;
            degree[l] += node_degree[v];
            inside[l] += node_to_cluster[v * k + l] / 2.0;
            for (s, x) in sums[l].iter_mut().zip(&pts[v]) {
                *s += x;
            }
        }
        let mut state = Self {
            view,
            labels: labels.to_vec(),
            energy: vec![0.0; k],
            spread: vec![0.0; k],
            sizes,
            sums,
            node_to_cluster,
            inside,
            degree,
            node_degree,
            total_weight,
            grand_energy,
            total_scatter,
        };
        for c in 0..k {
            state.refresh(c);
        }
        state
    }

    pub(crate) fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub(crate) fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub(crate) fn size(&self, c: usize) -> usize {
        self.sizes[c]
    }

    pub(crate) fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    fn k(&self) -> usize {
        self.sizes.len()
    }

    fn refresh(&mut self, c: usize) {
        self.energy[c] = if self.sizes[c] > 0 {
            sq_norm(&self.sums[c]) / self.sizes[c] as f64
        } else {
            0.0
        };
        self.spread[c] = self.spread_of(|v| self.labels[v] == c, &self.sums[c], self.sizes[c]);
    }

    /// Mean distance to the centroid over the nodes selected by `member`.
    fn spread_of(&self, member: impl Fn(usize) -> bool, sum: &[f64], size: usize) -> f64 {
        if size == 0 {
            return 0.0;
        }
        let s = size as f64;
        let pts = self.view.points();
        let total: f64 = (0..pts.len())
            .filter(|&v| member(v))
            .map(|v| {
                pts[v]
                    .iter()
                    .zip(sum)
                    .map(|(x, t)| (x - t / s).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        total / s
    }

    /// Moves `v` into cluster `to`. Callers keep sizes legal.
    pub(crate) fn relabel(&mut self, v: usize, to: usize) {
        let from = self.labels[v];
        if from == to {
            return;
        }
        let k = self.k();
        self.inside[from] -= self.node_to_cluster[v * k + from];
        self.inside[to] += self.node_to_cluster[v * k + to];
        self.degree[from] -= self.node_degree[v];
        self.degree[to] += self.node_degree[v];
        for u in 0..self.labels.len() {
            if u != v {
                let w = self.view.similarity(u, v);
                self.node_to_cluster[u * k + from] -= w;
                self.node_to_cluster[u * k + to] += w;
            }
        }
        self.labels[v] = to;
        self.sizes[from] -= 1;
        self.sizes[to] += 1;
        let p = &self.view.points()[v];
        for (s, x) in self.sums[from].iter_mut().zip(p) {
            *s -= x;
        }
        for (s, x) in self.sums[to].iter_mut().zip(p) {
            *s += x;
        }
        self.refresh(from);
        self.refresh(to);
    }

    pub(crate) fn swap(&mut self, a: usize, b: usize) {
        let (la, lb) = (self.labels[a], self.labels[b]);
        self.relabel(a, lb);
        self.relabel(b, la);
    }

    pub(crate) fn score(&self, metric: ClusterMetric) -> f64 {
        match metric {
            ClusterMetric::CalinskiHarabasz => self.ch_with(self.energy.iter().sum()),
            ClusterMetric::DaviesBouldin => {
                let cents: Vec<Vec<f64>> = (0..self.k()).map(|c| self.centroid(&self.sums[c], self.sizes[c])).collect();
                self.db_with(&cents, &self.spread)
            }
            ClusterMetric::Modularity => modularity_from_parts(&self.inside, &self.degree, self.total_weight),
        }
    }

    fn centroid(&self, sum: &[f64], size: usize) -> Vec<f64> {
        let s = size.max(1) as f64;
        sum.iter().map(|x| x / s).collect()
    }

    fn ch_with(&self, energy_sum: f64) -> f64 {
        let n = self.labels.len();
        let k = self.k();
        if k < 2 || n <= k {
            return f64::NEG_INFINITY;
        }
        let between = (energy_sum - self.grand_energy).max(0.0);
        let within = (self.total_scatter - between).max(0.0);
        ch_ratio(between, within, n, k)
    }

    fn db_with(&self, cents: &[Vec<f64>], spread: &[f64]) -> f64 {
        if self.k() < 2 {
            return f64::INFINITY;
        }
        db_from_parts(cents, spread)
    }

    /// Score if the nodes `out_a` left cluster `a` for `b` and `out_b` left `b` for `a`.
    fn score_exchange(&self, metric: ClusterMetric, a: usize, b: usize, out_a: Option<usize>, out_b: Option<usize>) -> f64 {
        let pts = self.view.points();
        let (mut size_a, mut size_b) = (self.sizes[a], self.sizes[b]);
        let mut sum_a = self.sums[a].clone();
        let mut sum_b = self.sums[b].clone();
        let shift = |v: usize, from: &mut Vec<f64>, to: &mut Vec<f64>| {
            for ((f, t), x) in from.iter_mut().zip(to.iter_mut()).zip(&pts[v]) {
                *f -= x;
                *t += x;
            }
        };
        if let Some(v) = out_a {
            shift(v, &mut sum_a, &mut sum_b);
            size_a -= 1;
            size_b += 1;
        }
        if let Some(v) = out_b {
            shift(v, &mut sum_b, &mut sum_a);
            size_b -= 1;
            size_a += 1;
        }
        match metric {
            ClusterMetric::CalinskiHarabasz => {
                let e = |sum: &[f64], size: usize| if size > 0 { sq_norm(sum) / size as f64 } else { 0.0 };
                let total: f64 = self.energy.iter().sum::<f64>() - self.energy[a] - self.energy[b]
                    + e(&sum_a, size_a)
                    + e(&sum_b, size_b);
                self.ch_with(total)
            }
            ClusterMetric::Modularity => {
                let k = self.k();
                let w = |v: usize, c: usize| self.node_to_cluster[v * k + c];
                let mut inside_a = self.inside[a];
                let mut inside_b = self.inside[b];
                let mut deg_a = self.degree[a];
                let mut deg_b = self.degree[b];
                if let Some(v) = out_a {
                    inside_a -= w(v, a);
                    inside_b += w(v, b);
                    deg_a -= self.node_degree[v];
                    deg_b += self.node_degree[v];
                }
                if let Some(u) = out_b {
                    // u leaves b (which may now hold out_a) and joins a (without out_a)
                    let pair = out_a.map_or(0.0, |v| self.view.similarity(u, v));
                    inside_b -= w(u, b) + pair;
                    inside_a += w(u, a) - pair;
                    deg_b -= self.node_degree[u];
                    deg_a += self.node_degree[u];
                }
                let total = self.total_weight;
                if total <= 0.0 {
                    return 0.0;
                }
                let q = |inside: f64, deg: f64| inside / total - (deg / (2.0 * total)).powi(2);
                let base = modularity_from_parts(&self.inside, &self.degree, total);
                base - q(self.inside[a], self.degree[a]) - q(self.inside[b], self.degree[b])
                    + q(inside_a, deg_a)
                    + q(inside_b, deg_b)
            }
            ClusterMetric::DaviesBouldin => {
                let member_of = |v: usize, c: usize| {
                    let l = if Some(v) == out_a {
                        b
                    } else if Some(v) == out_b {
                        a
                    } else {
                        self.labels[v]
                    };
                    l == c
                };
                let mut spread = self.spread.clone();
                spread[a] = self.spread_of(|v| member_of(v, a), &sum_a, size_a);
                spread[b] = self.spread_of(|v| member_of(v, b), &sum_b, size_b);
                let mut cents: Vec<Vec<f64>> = (0..self.k()).map(|c| self.centroid(&self.sums[c], self.sizes[c])).collect();
                cents[a] = self.centroid(&sum_a, size_a);
                cents[b] = self.centroid(&sum_b, size_b);
                self.db_with(&cents, &spread)
            }
        }
    }

    pub(crate) fn score_relabel(&self, metric: ClusterMetric, v: usize, to: usize) -> f64 {
        self.score_exchange(metric, self.labels[v], to, Some(v), None)
    }

    pub(crate) fn score_swap(&self, metric: ClusterMetric, a: usize, b: usize) -> f64 {
        self.score_exchange(metric, self.labels[a], self.labels[b], Some(a), Some(b))
    }
}
