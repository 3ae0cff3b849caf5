//! Subproblem solvers behind one sampler contract.
//!
//! Every backend receives a [`BackendRequest`] and answers with samples
//! sorted by energy. The engine counts one budget unit per successful
//! [`Backend::sample`] call, whatever `num_reads` was.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;
use crate::qubo::Qubo;

pub mod anneal;
pub mod exact;
pub mod qbsolv;
pub mod remote;

pub use anneal::{sample_simulated_annealing, AnnealSchedule, SimulatedAnnealing};
pub use exact::{solve_exact_heldkarp, solve_exhaustive, ExactBackend, SolveError};
pub use qbsolv::{solve_qbsolv_like, QbsolvConfig, QbsolvOutcome};
pub use remote::{solve_remote, LoopbackServer, RemoteBackend};

#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub qubo: Qubo,
    pub num_reads: usize,
    pub seed: Option<u64>,
    /// Side `m` when the variables are a position-encoded `m x m`
    /// permutation matrix (variable `v * m + p`). Structure-aware backends
    /// use it; samplers ignore it.
    pub permutation_side: Option<usize>,
}

impl BackendRequest {
    pub fn new(qubo: Qubo, num_reads: usize, seed: Option<u64>) -> Self {
        Self {
            qubo,
            num_reads,
            seed,
            permutation_side: None,
        }
    }

    pub fn with_permutation_side(mut self, side: usize) -> Self {
        self.permutation_side = Some(side);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub bits: Vec<bool>,
    /// `z^T Q z` without the offset.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub samples: Vec<Sample>,
    pub backend_name: String,
    pub elapsed: Duration,
}

impl BackendResponse {
    pub fn best(&self) -> Option<&Sample> {
        self.samples.first()
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("authentication rejected (HTTP {0})")]
    AuthRejected(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unsupported problem: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    fn sample(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn sample(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).sample(request)
    }
}

/// Stable ascending sort by energy.
pub(crate) fn sort_samples(samples: &mut [Sample]) {
    samples.sort_by(|a, b| a.energy.total_cmp(&b.energy));
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn bits_from_str(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}
