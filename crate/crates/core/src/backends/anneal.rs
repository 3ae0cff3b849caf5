//! Single-bit-flip Metropolis annealing over a QUBO.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sort_samples, Backend, BackendError, BackendRequest, BackendResponse, Sample};
use crate::qubo::Qubo;

/// Geometric inverse-temperature ladder, one rung per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub sweeps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

pub const DEFAULT_SWEEPS: usize = 1000;
pub const DEFAULT_NUM_READS: usize = 100;
const HOT_SCALE: f64 = 2.0;

impl AnnealSchedule {
    /// Ladder scaled to the coefficient magnitudes of `qubo`: the hot end
    /// is `2 / max|q|`, the cold end `10 / min|q|`. For the tour encoding
    /// with m = 10 the largest coupler is about `2 m c_max`, so the hot end
    /// sits near `0.1 / c_max`.
    pub fn for_qubo(qubo: &Qubo, sweeps: usize) -> Self {
        let max = qubo.max_abs_coefficient();
        let min = qubo
            .entries()
            .map(|(_, _, c)| c.abs())
            .fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            return Self {
                sweeps,
                beta_start: 0.1,
                beta_end: 10.0,
            };
        }
        let beta_start = HOT_SCALE / max;
        let beta_end = (10.0 / min).max(beta_start * 10.0);
        Self {
            sweeps,
            beta_start,
            beta_end,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.sweeps == 0 {
            return Err(BackendError::InvalidRequest("sweeps must be at least 1".into()));
        }
        if !(self.beta_start > 0.0 && self.beta_start < self.beta_end) {
            return Err(BackendError::InvalidRequest(format!(
                "need 0 < beta_start < beta_end, got {} and {}",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        if self.sweeps == 1 {
            return vec![self.beta_end];
        }
        let ratio = (self.beta_end / self.beta_start).ln() / (self.sweeps - 1) as f64;
        (0..self.sweeps)
            .map(|k| self.beta_start * (ratio * k as f64).exp())
            .collect()
    }
}

/// Symmetric adjacency of the QUBO for O(1) flip deltas.
pub(crate) struct Couplings {
    pub(crate) diag: Vec<f64>,
    pub(crate) start: Vec<usize>,
    pub(crate) nbr: Vec<usize>,
    pub(crate) weight: Vec<f64>,
}

impl Couplings {
    pub(crate) fn new(qubo: &Qubo) -> Self {
        let n = qubo.n_vars();
        let mut diag = vec![0.0; n];
        let mut degree = vec![0usize; n];
        for (i, j, c) in qubo.entries() {
            if i == j {
                diag[i] += c;
            } else {
                degree[i] += 1;
                degree[j] += 1;
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + degree[i];
        }
        let mut fill = start.clone();
        let mut nbr = vec![0usize; start[n]];
        let mut weight = vec![0.0; start[n]];
        for (i, j, c) in qubo.entries() {
            if i != j {
                nbr[fill[i]] = j;
                weight[fill[i]] = c;
                fill[i] += 1;
                nbr[fill[j]] = i;
                weight[fill[j]] = c;
                fill[j] += 1;
            }
        }
        Self {
            diag,
            start,
            nbr,
            weight,
        }
    }
}

/// Beyond this value of `beta * delta` the acceptance probability is
/// below 1e-13 and the uniform draw is skipped.
const REJECT_EXPONENT: f64 = 30.0;

fn anneal_chain(coup: &Couplings, betas: &[f64], rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = coup.diag.len();
    let mut bits: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
    // field[i] = diag[i] + sum_j w_ij z_j, so flipping i changes energy by
    // +field[i] (0 -> 1) or -field[i] (1 -> 0)
    let mut field = coup.diag.clone();
    let mut energy = 0.0;
    for i in 0..n {
        if bits[i] {
            energy += coup.diag[i];
            for k in coup.start[i]..coup.start[i + 1] {
                let j = coup.nbr[k];
                field[j] += coup.weight[k];
                if j < i && bits[j] {
                    energy += coup.weight[k];
                }
            }
        }
    }
    let mut best_energy = energy;
    let mut best = bits.clone();

    for &beta in betas {
        for i in 0..n {
            let delta = if bits[i] { -field[i] } else { field[i] };
            let accept = delta <= 0.0 || {
                let x = beta * delta;
                x < REJECT_EXPONENT && rng.gen::<f64>() < (-x).exp()
            };
            if accept {
                bits[i] = !bits[i];
                energy += delta;
                let sign = if bits[i] { 1.0 } else { -1.0 };
                for k in coup.start[i]..coup.start[i + 1] {
                    field[coup.nbr[k]] += sign * coup.weight[k];
                }
            }
        }
        if energy < best_energy {
            best_energy = energy;
            best.copy_from_slice(&bits);
        }
    }
    best
}

/// Runs `num_reads` independent chains and returns the lowest state each
/// chain visited at a sweep boundary, sorted by energy.
pub fn sample_simulated_annealing(
    request: &BackendRequest,
    schedule: &AnnealSchedule,
) -> Result<BackendResponse, BackendError> {
    let started = Instant::now();
    if request.num_reads == 0 {
        return Err(BackendError::InvalidRequest("num_reads must be at least 1".into()));
    }
    schedule.validate()?;
    let coup = Couplings::new(&request.qubo);
    let betas = schedule.betas();
    let mut master = match request.seed {
        Some(seed) => ChaCha8Rng::seed_from_u64(seed),
        None => ChaCha8Rng::from_entropy(),
    };
    let mut samples: Vec<Sample> = (0..request.num_reads)
        .map(|_| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
            let bits = anneal_chain(&coup, &betas, &mut rng);
            // re-evaluate so reported energies carry no accumulated drift
            let energy = request.qubo.energy(&bits);
            Sample { bits, energy }
        })
        .collect();
    sort_samples(&mut samples);
    Ok(BackendResponse {
        samples,
        backend_name: "sa".into(),
        elapsed: started.elapsed(),
    })
}

/// Simulated-annealing sampler; the ladder is derived per request unless fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedAnnealing {
    pub sweeps: usize,
    pub betas: Option<(f64, f64)>,
}

impl Default for SimulatedAnnealing {
    fn default() -> Self {
        Self {
            sweeps: DEFAULT_SWEEPS,
            betas: None,
        }
    }
}

impl SimulatedAnnealing {
    pub fn with_sweeps(sweeps: usize) -> Self {
        Self {
            sweeps,
            betas: None,
        }
    }

    pub fn schedule_for(&self, qubo: &Qubo) -> AnnealSchedule {
        match self.betas {
            Some((beta_start, beta_end)) => AnnealSchedule {
                sweeps: self.sweeps,
                beta_start,
                beta_end,
            },
            None => AnnealSchedule::for_qubo(qubo, self.sweeps),
        }
    }
}

impl Backend for SimulatedAnnealing {
    fn name(&self) -> String {
        "sa".into()
    }

    fn sample(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        sample_simulated_annealing(request, &self.schedule_for(&request.qubo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AtspInstance;
    use crate::qubo::{build_atsp_qubo, decode};

    #[test]
    fn ladder_is_geometric_and_bounded() {
        let s = AnnealSchedule {
            sweeps: 5,
            beta_start: 0.1,
            beta_end: 10.0,
        };
        let b = s.betas();
        assert_eq!(b.len(), 5);
        assert!((b[0] - 0.1).abs() < 1e-12);
        assert!((b[4] - 10.0).abs() < 1e-9);
        assert!((b[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_schedules() {
        let q = Qubo::new(1);
        let req = BackendRequest::new(q, 1, Some(0));
        let bad = AnnealSchedule {
            sweeps: 10,
            beta_start: 2.0,
            beta_end: 1.0,
        };
        assert!(sample_simulated_annealing(&req, &bad).is_err());
        let zero = AnnealSchedule {
            sweeps: 0,
            beta_start: 0.1,
            beta_end: 1.0,
        };
        assert!(sample_simulated_annealing(&req, &zero).is_err());
    }

    #[test]
    fn two_node_cluster_hits_forced_cycle() {
        let inst = AtspInstance::from_rows("toy", &[vec![0, 5], vec![7, 0]]).unwrap();
        let q = build_atsp_qubo(&inst, &[0, 1], None, 10).unwrap();
        for seed in 0..5 {
            let req = BackendRequest::new(q.qubo().clone(), 10, Some(seed));
            let resp = SimulatedAnnealing::default().sample(&req).unwrap();
            let tour = decode(&q, &inst, &resp.samples[0].bits).unwrap().tour().unwrap();
            assert_eq!(tour.cost(), 12);
        }
    }

    #[test]
    fn identical_seed_identical_samples() {
        let inst = AtspInstance::from_rows(
            "tri",
            &[vec![0, 1, 10], vec![10, 0, 1], vec![1, 10, 0]],
        )
        .unwrap();
        let q = build_atsp_qubo(&inst, &[0, 1, 2], None, 10).unwrap();
        let req = BackendRequest::new(q.qubo().clone(), 8, Some(42));
        let sa = SimulatedAnnealing::with_sweeps(100);
        let a = sa.sample(&req).unwrap();
        let b = sa.sample(&req).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn energies_sorted_and_consistent() {
        let mut q = Qubo::new(6);
        for i in 0..6 {
            q.add(i, i, -1.0 + i as f64 * 0.3);
            for j in (i + 1)..6 {
                q.add(i, j, ((i * 7 + j * 3) % 5) as f64 - 2.0);
            }
        }
        let req = BackendRequest::new(q.clone(), 20, Some(9));
        let resp = SimulatedAnnealing::with_sweeps(50).sample(&req).unwrap();
        assert_eq!(resp.samples.len(), 20);
        for w in resp.samples.windows(2) {
            assert!(w[0].energy <= w[1].energy);
        }
        for s in &resp.samples {
            assert!((s.energy - q.energy(&s.bits)).abs() <= 1e-9 * s.energy.abs().max(1.0));
        }
    }
}
