//! Benchmark instance lookup and seeded synthetic instances.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AtspInstance, Partition};
use crate::tsplib::{read_instance, EdgeWeightFormat, EdgeWeightType, ProblemType, TsplibError, TsplibHeader};

/// Overrides the directory searched for benchmark instances.
pub const DATA_DIR_ENV: &str = "QTA_TSPLIB_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkInstance {
    pub name: &'static str,
    pub dimension: usize,
    /// Best known tour length from the TSPLIB distribution.
    pub optimum: i64,
}

/// The asymmetric benchmark set, smallest first.
pub const BENCHMARK_SET: [BenchmarkInstance; 6] = [
    BenchmarkInstance { name: "br17", dimension: 17, optimum: 39 },
    BenchmarkInstance { name: "ftv33", dimension: 34, optimum: 1286 },
    BenchmarkInstance { name: "ftv35", dimension: 36, optimum: 1473 },
    BenchmarkInstance { name: "ftv38", dimension: 39, optimum: 1530 },
    BenchmarkInstance { name: "p43", dimension: 43, optimum: 5620 },
    BenchmarkInstance { name: "ry48p", dimension: 48, optimum: 14422 },
];

pub fn benchmark(name: &str) -> Option<BenchmarkInstance> {
    BENCHMARK_SET.iter().copied().find(|b| b.name == name)
}

pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/tsplib"),
    }
}

/// Path of `<name>.atsp` in the data directory, if the file exists.
pub fn benchmark_path(name: &str) -> Option<PathBuf> {
    let path = data_dir().join(format!("{name}.atsp"));
    path.is_file().then_some(path)
}

/// Parses the named benchmark instance; `None` when the file is not shipped.
pub fn load_benchmark(name: &str) -> Option<Result<AtspInstance, TsplibError>> {
    benchmark_path(name).map(read_instance)
}

fn explicit_header(name: &str, n: usize) -> TsplibHeader {
    TsplibHeader {
        name: name.to_string(),
        problem_type: ProblemType::Atsp,
        dimension: n,
        edge_weight_type: EdgeWeightType::Explicit,
        edge_weight_format: Some(EdgeWeightFormat::FullMatrix),
        comment: None,
    }
}

/// Uniform integer costs in `lo..=hi` off the diagonal, zero on it.
pub fn random_instance(n: usize, seed: u64, lo: i64, hi: i64) -> AtspInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let costs = (0..n * n)
        .map(|k| if k / n == k % n { 0 } else { rng.gen_range(lo..=hi) })
        .collect();
    AtspInstance::new(explicit_header(&format!("rand{n}-{seed}"), n), costs)
        .expect("valid random instance")
}

/// Nodes split into shuffled blocks of the given sizes; arcs inside a block
/// cost in `within`, arcs across blocks in `across`. Returns the planted
/// partition alongside.
pub fn planted_block_instance(
    sizes: &[usize],
    seed: u64,
    within: (i64, i64),
    across: (i64, i64),
) -> (AtspInstance, Partition) {
    let n: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let mut labels = vec![0; n];
    let mut at = 0;
    for (b, &s) in sizes.iter().enumerate() {
        for &v in &nodes[at..at + s] {
            labels[v] = b;
        }
        at += s;
    }
    let mut costs = vec![0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (lo, hi) = if labels[i] == labels[j] { within } else { across };
                costs[i * n + j] = rng.gen_range(lo..=hi);
            }
        }
    }
    let inst = AtspInstance::new(explicit_header(&format!("planted{n}-{seed}"), n), costs)
        .expect("valid planted instance");
    (inst, Partition::from_labels(labels))
}

/// Seeded random instance with the benchmark's dimension and a cost range
/// of similar magnitude, for use when the real file is not shipped.
pub fn stand_in(bench: &BenchmarkInstance, seed: u64) -> AtspInstance {
    let hi = (4 * bench.optimum / bench.dimension as i64).max(10);
    let inst = random_instance(bench.dimension, seed, 1, hi);
    let costs = inst.raw_matrix().to_vec();
    AtspInstance::new(
        explicit_header(&format!("{}-standin", bench.name), bench.dimension),
        costs,
    )
    .expect("valid stand-in")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_seeded() {
        assert_eq!(random_instance(7, 3, 1, 9), random_instance(7, 3, 1, 9));
        assert_ne!(random_instance(7, 3, 1, 9), random_instance(7, 4, 1, 9));
    }

    #[test]
    fn planted_blocks_have_the_requested_shape() {
        let (inst, part) = planted_block_instance(&[4, 5], 1, (1, 2), (50, 60));
        assert_eq!(inst.dimension(), 9);
        let mut sizes = part.sizes();
        sizes.sort();
        assert_eq!(sizes, vec![4, 5]);
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    let same = part.labels()[i] == part.labels()[j];
                    assert_eq!(inst.cost(i, j) <= 2, same);
                }
            }
        }
    }

    #[test]
    fn stand_ins_match_dimensions() {
        for b in BENCHMARK_SET {
            assert_eq!(stand_in(&b, 0).dimension(), b.dimension);
        }
    }
}
