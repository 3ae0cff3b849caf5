//! Decomposition heuristics for the asymmetric travelling salesman problem
//! with pluggable QUBO samplers.

pub mod backends;
pub mod bench;
pub mod engine;
pub mod fixtures;
pub mod model;
pub mod partition;
pub mod qubo;
pub mod report;
pub mod tsplib;

pub use model::{tour_cost, validate_partition, AtspInstance, ModelError, Partition, Tour};
pub use report::{Method, RunReport};
