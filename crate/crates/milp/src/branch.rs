//! Best-bound branch-and-bound over the declared binary variables.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::rc::Rc;

use log::debug;

use crate::error::SolverError;
use crate::problem::CanonicalProblem;
use crate::simplex::{self, Basis, LpStatus, StandardForm};
use crate::{MilpOptions, Solution, Status};

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fixes: Vec<(usize, f64)>,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the "greatest" node is the lowest bound,
    // then the deepest, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    objective: f64,
    x: Vec<f64>,
}

pub(crate) fn solve_lp(p: &CanonicalProblem) -> Result<Solution, SolverError> {
    p.validate()?;
    let sf = StandardForm::from_problem(p);
    let r = simplex::solve(&sf, &sf.lo, &sf.hi, None)?;
    Ok(lp_solution(&sf, r, 0))
}

fn lp_solution(sf: &StandardForm, r: simplex::LpResult, nodes: usize) -> Solution {
    let status = match r.status {
        LpStatus::Optimal => Status::Optimal,
        LpStatus::Infeasible => Status::Infeasible,
        LpStatus::Unbounded => Status::Unbounded,
    };
    let mut x = r.x;
    x.truncate(sf.n);
    Solution {
        status,
        objective: if status == Status::Optimal { r.objective } else { f64::NAN },
        duals: (status == Status::Optimal).then_some(r.duals),
        x,
        lp_iterations: r.iterations,
        nodes,
    }
}

fn bounds_with(sf: &StandardForm, fixes: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = sf.lo.clone();
    let mut hi = sf.hi.clone();
    for &(j, v) in fixes {
        lo[j] = v;
        hi[j] = v;
    }
    (lo, hi)
}

pub(crate) fn duals_at_fixed_binaries(
    p: &CanonicalProblem,
    values: &BTreeMap<usize, f64>,
) -> Result<Solution, SolverError> {
    p.validate()?;
    let mut fixes = Vec::with_capacity(p.binaries().len());
    for &j in p.binaries() {
        let v = *values
            .get(&j)
            .ok_or_else(|| SolverError::InvalidFixing(format!("binary {j} has no value")))?;
        let r = v.round();
        if (v - r).abs() > 1e-6 || !(r == 0.0 || r == 1.0) {
            return Err(SolverError::InvalidFixing(format!("binary {j} fixed to non-integral {v}")));
        }
        fixes.push((j, r));
    }
    let sf = StandardForm::from_problem(p);
    let (lo, hi) = bounds_with(&sf, &fixes);
    let r = simplex::solve(&sf, &lo, &hi, None)?;
    match r.status {
        LpStatus::Infeasible => Err(SolverError::InfeasibleFixing),
        _ => Ok(lp_solution(&sf, r, 0)),
    }
}

fn most_fractional(x: &[f64], binaries: &[usize], tol: f64) -> Option<usize> {
    let mut best = None;
    let mut best_frac = tol;
    for &j in binaries {
        let frac = (x[j] - x[j].round()).abs();
        if frac > best_frac {
            best_frac = frac;
            best = Some(j);
        }
    }
    best
}

pub(crate) fn solve_milp(p: &CanonicalProblem, opts: &MilpOptions) -> Result<Solution, SolverError> {
    p.validate()?;
    if p.binaries().is_empty() {
        return solve_lp(p);
    }
    let sf = StandardForm::from_problem(p);
    let binaries: Vec<usize> = p.binaries().iter().copied().collect();
    let gap = |obj: f64| opts.abs_gap + opts.rel_gap * obj.abs();

    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, id: 0, fixes: Vec::new(), basis: None });
    let mut next_id = 1;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut incumbent: Option<Incumbent> = None;

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.objective - gap(inc.objective) {
                continue;
            }
        }
        nodes += 1;
        if nodes > opts.node_limit {
            return Err(SolverError::NodeLimitExceeded { nodes });
        }
        let (lo, hi) = bounds_with(&sf, &node.fixes);
        let lp = simplex::solve(&sf, &lo, &hi, node.basis.as_deref())?;
        iterations += lp.iterations;
        match lp.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Ok(Solution {
                    status: Status::Unbounded,
                    x: vec![f64::NAN; sf.n],
                    objective: f64::NEG_INFINITY,
                    duals: None,
                    lp_iterations: iterations,
                    nodes,
                })
            }
            LpStatus::Optimal => {}
        }
        if let Some(inc) = &incumbent {
            if lp.objective >= inc.objective - gap(inc.objective) {
                continue;
            }
        }

        let Some(branch_var) = most_fractional(&lp.x, &binaries, opts.int_tol) else {
            let better = incumbent.as_ref().map_or(true, |inc| lp.objective < inc.objective);
            if better {
                debug!("node {nodes}: integral incumbent {:.6}", lp.objective);
                incumbent = Some(Incumbent { objective: lp.objective, x: lp.x[..sf.n].to_vec() });
            }
            continue;
        };

        if nodes == 1 || nodes % opts.heuristic_every == 0 {
            let fixes: Vec<(usize, f64)> =
                binaries.iter().map(|&j| (j, if lp.x[j] > 0.5 { 1.0 } else { 0.0 })).collect();
            let (rlo, rhi) = bounds_with(&sf, &fixes);
            let h = simplex::solve(&sf, &rlo, &rhi, Some(&lp.basis))?;
            iterations += h.iterations;
            if h.status == LpStatus::Optimal
                && incumbent.as_ref().map_or(true, |inc| h.objective < inc.objective)
            {
                debug!("node {nodes}: rounding incumbent {:.6}", h.objective);
                incumbent = Some(Incumbent { objective: h.objective, x: h.x[..sf.n].to_vec() });
            }
        }

        let basis = Rc::new(lp.basis);
        let value = lp.x[branch_var];
        // The child on the side the relaxation leans towards gets the older id.
        let order = if value >= 0.5 { [1.0, 0.0] } else { [0.0, 1.0] };
        for v in order {
            let mut fixes = node.fixes.clone();
            fixes.push((branch_var, v));
            heap.push(Node {
                bound: lp.objective,
                depth: node.depth + 1,
                id: next_id,
                fixes,
                basis: Some(Rc::clone(&basis)),
            });
            next_id += 1;
        }
    }

    let Some(inc) = incumbent else {
        return Ok(Solution {
            status: Status::Infeasible,
            x: vec![f64::NAN; sf.n],
            objective: f64::NAN,
            duals: None,
            lp_iterations: iterations,
            nodes,
        });
    };

    // Re-solve with the binaries pinned so the reported point is exactly integral.
    let fixes: Vec<(usize, f64)> = binaries.iter().map(|&j| (j, inc.x[j].round())).collect();
    let (lo, hi) = bounds_with(&sf, &fixes);
    let polished = simplex::solve(&sf, &lo, &hi, None)?;
    iterations += polished.iterations;
    let (x, objective) = if polished.status == LpStatus::Optimal {
        let mut x = polished.x;
        x.truncate(sf.n);
        (x, polished.objective)
    } else {
        let mut x = inc.x;
        for &(j, v) in &fixes {
            x[j] = v;
        }
        (x, inc.objective)
    };
    debug!("branch-and-bound: {nodes} nodes, {iterations} simplex iterations, objective {objective:.6}");
    Ok(Solution { status: Status::Optimal, x, objective, duals: None, lp_iterations: iterations, nodes })
}
