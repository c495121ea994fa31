//! Canonical minimisation problem shared by the LP and MILP entry points.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::SolverError;

/// Relation of a linear constraint `coeffs · x (rel) rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse coefficients, sorted by variable index, no duplicates.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Eq => (act - self.rhs).abs(),
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
        }
    }
}

/// Minimise `objective · x` subject to linear constraints, finite variable
/// bounds and a set of binary variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CanonicalProblem {
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    constraints: Vec<Constraint>,
    binaries: BTreeSet<usize>,
}

impl CanonicalProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a continuous variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(cost);
        self.bounds.push((lo, hi));
        self.objective.len() - 1
    }

    /// Adds a binary variable (bounds `[0, 1]`) and returns its index.
    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.add_var(cost, 0.0, 1.0);
        self.binaries.insert(j);
        j
    }

    /// Adds a constraint; duplicate indices are merged and explicit zeros dropped.
    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        let mut coeffs = coeffs;
        coeffs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (j, a) in coeffs {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint { coeffs: merged, relation, rhs });
        self.constraints.len() - 1
    }

    /// Marks an existing variable as binary and forces its bounds to `[0, 1]`.
    pub fn mark_binary(&mut self, j: usize) {
        self.bounds[j] = (0.0, 1.0);
        self.binaries.insert(j);
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.bounds[j] = (lo, hi);
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.objective[j] = cost;
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn binaries(&self) -> &BTreeSet<usize> {
        &self.binaries
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.binaries.contains(&j)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        self.bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Checks the structural invariants: finite ordered bounds, finite data,
    /// in-range indices and binaries bounded by `[0, 1]`.
    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.n_vars();
        for (j, (&c, &(lo, hi))) in self.objective.iter().zip(&self.bounds).enumerate() {
            if !c.is_finite() {
                return Err(SolverError::MalformedProblem(format!("variable {j}: non-finite cost")));
            }
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SolverError::MalformedProblem(format!("variable {j}: non-finite bound")));
            }
            if lo > hi {
                return Err(SolverError::MalformedProblem(format!(
                    "variable {j}: lower bound {lo} exceeds upper bound {hi}"
                )));
            }
        }
        for &j in &self.binaries {
            if j >= n {
                return Err(SolverError::MalformedProblem(format!("binary index {j} out of range")));
            }
            let (lo, hi) = self.bounds[j];
            if lo < 0.0 || hi > 1.0 {
                return Err(SolverError::MalformedProblem(format!(
                    "binary {j} has bounds [{lo}, {hi}] outside [0, 1]"
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SolverError::MalformedProblem(format!("constraint {i}: non-finite rhs")));
            }
            for &(j, a) in &c.coeffs {
                if j >= n {
                    return Err(SolverError::MalformedProblem(format!(
                        "constraint {i}: variable index {j} out of range"
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::MalformedProblem(format!(
                        "constraint {i}: non-finite coefficient"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump, one line per variable and per constraint.
    ///
    /// ```text
    /// problem vars=<n> constraints=<m> binaries=<k>
    /// var <j> <lo> <hi> <cost> [bin]
    /// con <i> <rel> <rhs> | <j>:<coef> <j>:<coef> ...
    /// ```
    ///
    /// All numbers are printed in fixed-point notation with nine decimals;
    /// `<rel>` is one of `=`, `<=`, `>=`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "problem vars={} constraints={} binaries={}",
            self.n_vars(),
            self.n_constraints(),
            self.binaries.len()
        );
        for (j, (&c, &(lo, hi))) in self.objective.iter().zip(&self.bounds).enumerate() {
            let tag = if self.is_binary(j) { " bin" } else { "" };
            let _ = writeln!(out, "var {j} {lo:.9} {hi:.9} {c:.9}{tag}");
        }
        for (i, con) in self.constraints.iter().enumerate() {
            let _ = write!(out, "con {i} {} {:.9} |", con.relation.symbol(), con.rhs);
            for &(j, a) in &con.coeffs {
                let _ = write!(out, " {j}:{a:.9}");
            }
            out.push('\n');
        }
        out
    }
}
