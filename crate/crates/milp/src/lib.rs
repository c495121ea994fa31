//! Small self-contained LP/MILP solver for market-clearing problems.
//!
//! * [`solve_lp`] runs a bounded-variable revised primal simplex (sparse LU
//!   basis factorisation, Harris ratio test, Bland's rule after a long run of
//!   degenerate pivots) and returns row duals.
//! * [`solve_milp`] wraps it in best-bound branch-and-bound over the declared
//!   binary variables, branching on the most fractional binary.
//! * [`duals_at_fixed_binaries`] re-solves the LP with every binary pinned and
//!   reports its duals, which is how prices are attached to MILP solutions.
//!
//! The [`MilpSolver`] trait lets callers swap in a different engine.
//!
//! Dual sign convention: `duals[i]` is the change of the optimal objective
//! per unit increase of the right-hand side of constraint `i`.

mod branch;
mod error;
mod lu;
mod problem;
mod simplex;

use std::collections::BTreeMap;

pub use error::SolverError;
pub use problem::{CanonicalProblem, Constraint, Relation};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One value per constraint; present for optimal LP solves.
    pub duals: Option<Vec<f64>>,
    pub lp_iterations: usize,
    pub nodes: usize,
}

impl Solution {
    /// Values of the problem's binaries, keyed by variable index.
    pub fn binary_values(&self, p: &CanonicalProblem) -> BTreeMap<usize, f64> {
        p.binaries().iter().map(|&j| (j, self.x[j])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpOptions {
    /// Absolute optimality gap on the objective.
    pub abs_gap: f64,
    /// Relative gap term added to `abs_gap`, absorbing floating-point noise
    /// on large objectives.
    pub rel_gap: f64,
    pub int_tol: f64,
    pub node_limit: usize,
    /// Run the rounding heuristic at the root and every this many nodes.
    pub heuristic_every: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions { abs_gap: 1e-6, rel_gap: 1e-9, int_tol: 1e-6, node_limit: 1_000_000, heuristic_every: 16 }
    }
}

/// A pluggable LP/MILP engine.
pub trait MilpSolver: Send + Sync {
    fn solve_lp(&self, p: &CanonicalProblem) -> Result<Solution, SolverError>;
    fn solve_milp(&self, p: &CanonicalProblem) -> Result<Solution, SolverError>;
    fn duals_at_fixed_binaries(
        &self,
        p: &CanonicalProblem,
        binary_values: &BTreeMap<usize, f64>,
    ) -> Result<Solution, SolverError>;
}

/// The built-in simplex + branch-and-bound engine.
#[derive(Debug, Clone, Default)]
pub struct BranchAndBound {
    pub options: MilpOptions,
}

impl MilpSolver for BranchAndBound {
    fn solve_lp(&self, p: &CanonicalProblem) -> Result<Solution, SolverError> {
        branch::solve_lp(p)
    }

    fn solve_milp(&self, p: &CanonicalProblem) -> Result<Solution, SolverError> {
        branch::solve_milp(p, &self.options)
    }

    fn duals_at_fixed_binaries(
        &self,
        p: &CanonicalProblem,
        binary_values: &BTreeMap<usize, f64>,
    ) -> Result<Solution, SolverError> {
        branch::duals_at_fixed_binaries(p, binary_values)
    }
}

/// Solves the LP relaxation (binaries treated as continuous in `[0, 1]`).
pub fn solve_lp(p: &CanonicalProblem) -> Result<Solution, SolverError> {
    branch::solve_lp(p)
}

pub fn solve_milp(p: &CanonicalProblem) -> Result<Solution, SolverError> {
    branch::solve_milp(p, &MilpOptions::default())
}

pub fn duals_at_fixed_binaries(
    p: &CanonicalProblem,
    binary_values: &BTreeMap<usize, f64>,
) -> Result<Solution, SolverError> {
    branch::duals_at_fixed_binaries(p, binary_values)
}
