//! QUBO encoding of a cluster sub-tour, decoding of sampler bitstrings and
//! the QUBO to Ising change of variables.
//!
//! A cluster of `m` nodes uses `m * m` binary variables `x[v][p]`, true when
//! local node `v` sits at cyclic position `p`. Variable `v * m + p` holds
//! `x[v][p]`. The energy is
//!
//! ```text
//! sum_{i != j} c_ij sum_p x[i][p] x[j][(p+1) % m]
//!   + A sum_v (1 - sum_p x[v][p])^2 + A sum_p (1 - sum_v x[v][p])^2
//! ```
//!
//! expanded into an upper-triangular table. The constant left over from the
//! squared constraint terms lives in [`Qubo::offset`] so that
//! `energy(z) + offset` equals the closed sub-tour cost on every permutation
//! matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AtspInstance, ModelError, Tour, MIN_CLUSTER_SIZE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuboError {
    #[error("cluster of {0} nodes is too small (minimum {MIN_CLUSTER_SIZE})")]
    ClusterTooSmall(usize),
    #[error("cluster of {size} nodes exceeds the configured maximum {max}")]
    ClusterTooLarge { size: usize, max: usize },
    #[error("assignment has {found} bits, QUBO has {expected} variables")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    InvalidCluster(#[from] ModelError),
    #[error("QUBO text line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Sparse upper-triangular QUBO with a constant offset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Qubo {
    n_vars: usize,
    entries: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl Qubo {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            entries: BTreeMap::new(),
            offset: 0.0,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    /// Accumulates `coeff` onto the entry for `{i, j}`, stored with `i <= j`.
    pub fn add(&mut self, i: usize, j: usize, coeff: f64) {
        assert!(i < self.n_vars && j < self.n_vars, "variable index out of range");
        let key = if i <= j { (i, j) } else { (j, i) };
        *self.entries.entry(key).or_insert(0.0) += coeff;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    /// Nonzero entries in `(i, j)` order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .filter(|(_, &c)| c != 0.0)
            .map(|(&(i, j), &c)| (i, j, c))
    }

    pub fn num_nonzero(&self) -> usize {
        self.entries().count()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.entries().map(|(_, _, c)| c.abs()).fold(0.0, f64::max)
    }

    /// `z^T Q z`, excluding the offset.
    pub fn energy(&self, bits: &[bool]) -> f64 {
        assert_eq!(bits.len(), self.n_vars, "assignment length");
        self.entries()
            .filter(|&(i, j, _)| bits[i] && bits[j])
            .map(|(_, _, c)| c)
            .sum()
    }

    /// Energy including the offset.
    pub fn total_energy(&self, bits: &[bool]) -> f64 {
        self.energy(bits) + self.offset
    }

    /// Plain-text sparse form: a `#` header with `n_vars` and `offset`, then
    /// one `i j coeff` line per nonzero entry.
    pub fn to_text(&self) -> String {
        self.to_text_with(&[])
    }

    pub(crate) fn to_text_with(&self, extra_header: &[String]) -> String {
        let mut out = String::new();
        writeln!(out, "# n_vars {}", self.n_vars).unwrap();
        writeln!(out, "# offset {}", self.offset).unwrap();
        for line in extra_header {
            writeln!(out, "# {line}").unwrap();
        }
        for (i, j, c) in self.entries() {
            writeln!(out, "{i} {j} {c}").unwrap();
        }
        out
    }

    /// Inverse of [`Qubo::to_text`]. Unknown `#` lines are ignored.
    pub fn from_text(text: &str) -> Result<Self, QuboError> {
        let mut n_vars = None;
        let mut offset = 0.0;
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            let bad = |reason: &str| QuboError::Format {
                line: k + 1,
                reason: reason.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some("n_vars"), Some(v)) => {
                        n_vars = Some(v.parse().map_err(|_| bad("bad n_vars"))?)
                    }
                    (Some("offset"), Some(v)) => offset = v.parse().map_err(|_| bad("bad offset"))?,
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad("expected `i j coeff`"));
            }
            let i: usize = fields[0].parse().map_err(|_| bad("bad row index"))?;
            let j: usize = fields[1].parse().map_err(|_| bad("bad column index"))?;
            let c: f64 = fields[2].parse().map_err(|_| bad("bad coefficient"))?;
            if i > j {
                return Err(bad("entry below the diagonal"));
            }
            rows.push((k + 1, i, j, c));
        }
        let n_vars = n_vars.ok_or(QuboError::Format {
            line: 0,
            reason: "missing `# n_vars` header".into(),
        })?;
        let mut q = Qubo::new(n_vars);
        q.offset = offset;
        for (line, i, j, c) in rows {
            if j >= n_vars {
                return Err(QuboError::Format {
                    line,
                    reason: format!("index {j} out of range"),
                });
            }
            q.add(i, j, c);
        }
        Ok(q)
    }

    /// Subproblem over `vars` with every other variable clamped to `fixed`.
    /// The clamped variables' own energy goes to the offset so that
    /// `sub.total_energy(y) == self.energy(x with vars <- y)`.
    pub fn clamp(&self, vars: &[usize], fixed: &[bool]) -> Qubo {
        let mut local = vec![usize::MAX; self.n_vars];
        for (k, &v) in vars.iter().enumerate() {
            local[v] = k;
        }
        let mut sub = Qubo::new(vars.len());
        let mut offset = 0.0;
        for (i, j, c) in self.entries() {
            match (local[i] != usize::MAX, local[j] != usize::MAX) {
                (true, true) => sub.add(local[i], local[j], c),
                (true, false) => {
                    if fixed[j] {
                        sub.add(local[i], local[i], c)
                    }
                }
                (false, true) => {
                    if fixed[i] {
                        sub.add(local[j], local[j], c)
                    }
                }
                (false, false) => {
                    if fixed[i] && fixed[j] {
                        offset += c
                    }
                }
            }
        }
        sub.offset = offset;
        sub
    }
}

/// Bijection between variable index and `(node, position)` for one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarIndex {
    cluster: Vec<usize>,
}

impl VarIndex {
    pub fn new(cluster: Vec<usize>) -> Self {
        Self { cluster }
    }

    /// Cluster side `m`.
    pub fn side(&self) -> usize {
        self.cluster.len()
    }

    pub fn cluster(&self) -> &[usize] {
        &self.cluster
    }

    pub fn var(&self, local_node: usize, position: usize) -> usize {
        local_node * self.side() + position
    }

    /// `(global node, position)` of a variable.
    pub fn node_position(&self, var: usize) -> (usize, usize) {
        let m = self.side();
        (self.cluster[var / m], var % m)
    }
}

/// An ATSP cluster QUBO together with its variable bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboMatrix {
    qubo: Qubo,
    var_index: VarIndex,
    penalty: f64,
}

impl QuboMatrix {
    pub fn qubo(&self) -> &Qubo {
        &self.qubo
    }

    pub fn into_qubo(self) -> Qubo {
        self.qubo
    }

    pub fn var_index(&self) -> &VarIndex {
        &self.var_index
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn n_vars(&self) -> usize {
        self.qubo.n_vars
    }

    pub fn offset(&self) -> f64 {
        self.qubo.offset
    }

    pub fn energy(&self, bits: &[bool]) -> f64 {
        self.qubo.energy(bits)
    }

    /// Sparse text export including the cluster and penalty as comments.
    pub fn to_text(&self) -> String {
        let nodes: Vec<String> = self.var_index.cluster.iter().map(|v| v.to_string()).collect();
        self.qubo.to_text_with(&[
            format!("penalty {}", self.penalty),
            format!("cluster {}", nodes.join(" ")),
        ])
    }

    /// Permutation-matrix bits placing `order[p]` at position `p`.
    /// Every node of `order` must belong to the cluster.
    pub fn encode(&self, order: &[usize]) -> Vec<bool> {
        let m = self.var_index.side();
        assert_eq!(order.len(), m, "order must cover the cluster");
        let mut bits = vec![false; m * m];
        for (p, node) in order.iter().enumerate() {
            let local = self
                .var_index
                .cluster
                .iter()
                .position(|v| v == node)
                .expect("node outside cluster");
            bits[self.var_index.var(local, p)] = true;
        }
        bits
    }
}

/// `A = m * c_max + 1` with `c_max` the largest arc cost inside the cluster.
pub fn default_penalty(instance: &AtspInstance, cluster: &[usize]) -> f64 {
    let m = cluster.len() as f64;
    m * instance.max_cost_within(cluster) as f64 + 1.0
}

/// Builds the cluster QUBO; `penalty` defaults to [`default_penalty`].
pub fn build_atsp_qubo(
    instance: &AtspInstance,
    cluster: &[usize],
    penalty: Option<f64>,
    max_cluster_size: usize,
) -> Result<QuboMatrix, QuboError> {
    let m = cluster.len();
    if m < MIN_CLUSTER_SIZE {
        return Err(QuboError::ClusterTooSmall(m));
    }
    if m > max_cluster_size {
        return Err(QuboError::ClusterTooLarge {
            size: m,
            max: max_cluster_size,
        });
    }
    instance.check_nodes(cluster)?;
    let a = penalty.unwrap_or_else(|| default_penalty(instance, cluster));
    let index = VarIndex::new(cluster.to_vec());
    let mut q = Qubo::new(m * m);

    for (li, &i) in cluster.iter().enumerate() {
        for (lj, &j) in cluster.iter().enumerate() {
            if li == lj {
                continue;
            }
            let c = instance.cost(i, j) as f64;
            if c == 0.0 {
                continue;
            }
            for p in 0..m {
                q.add(index.var(li, p), index.var(lj, (p + 1) % m), c);
            }
        }
    }

    // (1 - sum x)^2 = 1 - sum x + 2 sum_{a<b} x_a x_b on binaries
    let add_one_hot = |q: &mut Qubo, vars: &[usize]| {
        for (k, &u) in vars.iter().enumerate() {
            q.add(u, u, -a);
            for &w in &vars[k + 1..] {
                q.add(u, w, 2.0 * a);
            }
        }
    };
    for v in 0..m {
        let row: Vec<usize> = (0..m).map(|p| index.var(v, p)).collect();
        add_one_hot(&mut q, &row);
    }
    for p in 0..m {
        let col: Vec<usize> = (0..m).map(|v| index.var(v, p)).collect();
        add_one_hot(&mut q, &col);
    }
    q.offset = 2.0 * m as f64 * a;

    Ok(QuboMatrix {
        qubo: q,
        var_index: index,
        penalty: a,
    })
}

/// Row and column constraint violations of a non-permutation assignment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct InfeasibilityReport {
    /// Nodes placed at no position.
    pub unassigned_nodes: Vec<usize>,
    /// Nodes placed at more than one position.
    pub repeated_nodes: Vec<usize>,
    pub empty_positions: Vec<usize>,
    pub crowded_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Feasible(Tour),
    Infeasible(InfeasibilityReport),
}

impl Decoded {
    pub fn tour(self) -> Option<Tour> {
        match self {
            Decoded::Feasible(t) => Some(t),
            Decoded::Infeasible(_) => None,
        }
    }
}

/// Reads a sampler bitstring back as a canonical tour, if it is a permutation matrix.
pub fn decode(
    matrix: &QuboMatrix,
    instance: &AtspInstance,
    bits: &[bool],
) -> Result<Decoded, QuboError> {
    let index = &matrix.var_index;
    let m = index.side();
    if bits.len() != m * m {
        return Err(QuboError::LengthMismatch {
            expected: m * m,
            found: bits.len(),
        });
    }
    let mut report = InfeasibilityReport::default();
    for v in 0..m {
        match (0..m).filter(|&p| bits[index.var(v, p)]).count() {
            0 => report.unassigned_nodes.push(index.cluster[v]),
            1 => {}
            _ => report.repeated_nodes.push(index.cluster[v]),
        }
    }
    let mut order = Vec::with_capacity(m);
    for p in 0..m {
        let at: Vec<usize> = (0..m).filter(|&v| bits[index.var(v, p)]).collect();
        match at.len() {
            0 => report.empty_positions.push(p),
            1 => order.push(index.cluster[at[0]]),
            _ => report.crowded_positions.push(p),
        }
    }
    if report != InfeasibilityReport::default() {
        return Ok(Decoded::Infeasible(report));
    }
    Ok(Decoded::Feasible(Tour::new(instance, order)?.canonicalize()))
}

/// Spin form `H(s) = sum h_i s_i + sum J_ij s_i s_j + offset` with `s in {-1, +1}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IsingModel {
    pub linear: BTreeMap<usize, f64>,
    pub quadratic: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl IsingModel {
    pub fn energy(&self, spins: &[i8]) -> f64 {
        let lin: f64 = self
            .linear
            .iter()
            .map(|(&i, &h)| h * f64::from(spins[i]))
            .sum();
        let quad: f64 = self
            .quadratic
            .iter()
            .map(|(&(i, j), &jij)| jij * f64::from(spins[i]) * f64::from(spins[j]))
            .sum();
        lin + quad + self.offset
    }
}

/// Substitutes `z = (1 + s) / 2`. The Ising offset absorbs the QUBO offset,
/// so `ising.energy(s) == qubo.total_energy(z)` with bit 0 <-> spin -1.
pub fn qubo_to_ising(qubo: &Qubo) -> IsingModel {
    let mut ising = IsingModel {
        offset: qubo.offset,
        ..IsingModel::default()
    };
    for (i, j, c) in qubo.entries() {
        if i == j {
            *ising.linear.entry(i).or_insert(0.0) += c / 2.0;
            ising.offset += c / 2.0;
        } else {
            *ising.quadratic.entry((i, j)).or_insert(0.0) += c / 4.0;
            *ising.linear.entry(i).or_insert(0.0) += c / 4.0;
            *ising.linear.entry(j).or_insert(0.0) += c / 4.0;
            ising.offset += c / 4.0;
        }
    }
    ising.linear.retain(|_, h| *h != 0.0);
    ising
}

pub fn bits_to_spins(bits: &[bool]) -> Vec<i8> {
    bits.iter().map(|&b| if b { 1 } else { -1 }).collect()
}
