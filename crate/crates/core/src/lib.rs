//! Exact ergodic limits for finite, not necessarily irreducible, Markov chains
//! and Monte-Carlo machinery for checking them, including countable chains.
//!
//! The exact pipeline is
//! [`chain::validate_chain`] → [`structure::communicating_classes`] →
//! [`solve`] (hitting probabilities, stationary laws, mean return times) →
//! [`limits`]. [`montecarlo`] simulates the same chains, or the built-in
//! countable families in [`family`], and summarizes occupation statistics.

pub mod chain;
pub mod exec;
pub mod family;
pub mod limits;
pub mod linalg;
pub mod montecarlo;
pub mod solve;
pub mod structure;

pub use chain::{validate_chain, ChainError, ChainSpec, Distribution, RawChain, StateSpace, StochasticMatrix};
pub use exec::Execution;
pub use limits::{analyze, Atom, LimitReport, LimitsError};
pub use linalg::Dense;
pub use family::{builtin_family, Analytic, Family, FamilyError, GeneratorChain};
pub use montecarlo::{ExperimentConfig, ExperimentError, ExperimentSummary, Observable, TrajectoryStats};
pub use solve::{ClassStationary, HittingMatrix, SolveConfig, SolveError};
pub use structure::{communicating_classes, ClassStructure, Classification};
