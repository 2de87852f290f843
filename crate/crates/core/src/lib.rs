//! Learning pairwise cost function networks from solved examples.
//!
//! A neural network maps features of every variable pair to a cost matrix.
//! The matrices form a cost function network that an exact branch-and-bound
//! solver minimizes at inference time. Training never calls the solver: it
//! minimizes the negative pseudo-loglikelihood of observed solutions, with a
//! random subset of each variable's incoming messages muted (E-NPLL) so that
//! constraints which are redundant in the context of one sample still
//! receive gradient.
//!
//! Modules:
//!
//! - [`cfn`]: the network data model, conditioning, thresholding, JSON files.
//! - [`solver`]: exact minimization, bounded enumeration, brute force, and
//!   loss-augmented inference for the Hinge loss.
//! - [`loss`]: NPLL, E-NPLL and Hinge losses with analytic gradients.
//! - [`mlp`]: residual MLP with hand-written backpropagation and Adam.
//! - [`sudoku`]: Sudoku datasets, generation, features and rule analysis.
//! - [`experiment`]: training, evaluation, the k sweep and enumeration of
//!   learned rules.

pub mod cfn;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod mlp;
pub mod rng;
pub mod solver;
pub mod sudoku;

pub use cfn::{Assignment, Cost, CostFunctionNetwork, CostMatrix, DEFAULT_TOP};
pub use error::{Error, Result};
pub use solver::{SolveResult, SolverConfig, VariableOrder};
