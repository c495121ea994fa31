//! Bounded-variable revised primal simplex.
//!
//! Every row `i` gets a logical variable `s_i = a_i · x` whose bounds encode
//! the relation (`=`: `[b, b]`, `<=`: `[-inf, b]`, `>=`: `[b, inf]`), so the
//! working system is `A x - s = 0`. Infeasible starting bases are repaired
//! with a composite phase 1 that minimises the sum of bound violations of
//! the basic variables.

use log::trace;

use crate::error::SolverError;
use crate::lu::{LuFactors, SparseCol};
use crate::problem::{CanonicalProblem, Relation};

const NONE: usize = usize::MAX;
pub(crate) const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const BLAND_AFTER: usize = 1000;
const REFACTOR_EVERY: usize = 100;

/// Column-compressed constraint matrix plus the default bounds of the
/// structural and logical variables.
#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub n: usize,
    pub m: usize,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    logical_rows: Vec<usize>,
    logical_vals: Vec<f64>,
    pub cost: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StandardForm {
    pub fn from_problem(p: &CanonicalProblem) -> Self {
        let n = p.n_vars();
        let m = p.n_constraints();
        let mut counts = vec![0usize; n];
        for c in p.constraints() {
            for &(j, _) in &c.coeffs {
                counts[j] += 1;
            }
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let nnz = col_start[n];
        let mut col_rows = vec![0usize; nnz];
        let mut col_vals = vec![0.0f64; nnz];
        let mut fill = col_start.clone();
        for (i, c) in p.constraints().iter().enumerate() {
            for &(j, a) in &c.coeffs {
                col_rows[fill[j]] = i;
                col_vals[fill[j]] = a;
                fill[j] += 1;
            }
        }
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        for &(l, h) in p.bounds() {
            lo.push(l);
            hi.push(h);
        }
        for c in p.constraints() {
            let (l, h) = match c.relation {
                Relation::Eq => (c.rhs, c.rhs),
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Ge => (c.rhs, f64::INFINITY),
            };
            lo.push(l);
            hi.push(h);
        }
        StandardForm {
            n,
            m,
            col_start,
            col_rows,
            col_vals,
            logical_rows: (0..m).collect(),
            logical_vals: vec![-1.0; m],
            cost: p.objective().to_vec(),
            lo,
            hi,
        }
    }

    pub fn column(&self, j: usize) -> SparseCol<'_> {
        if j < self.n {
            let r = self.col_start[j]..self.col_start[j + 1];
            SparseCol { rows: &self.col_rows[r.clone()], vals: &self.col_vals[r] }
        } else {
            let i = j - self.n;
            SparseCol { rows: &self.logical_rows[i..i + 1], vals: &self.logical_vals[i..i + 1] }
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for t in self.col_start[j]..self.col_start[j + 1] {
                s += self.col_vals[t] * y[self.col_rows[t]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

/// A simplex basis that can seed a later solve of a problem with the same
/// matrix but different bounds.
#[derive(Debug, Clone)]
pub(crate) struct Basis {
    pub basic: Vec<usize>,
    pub state: Vec<VarState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct LpResult {
    pub status: LpStatus,
    /// Values of structural then logical variables.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Marginal objective change per unit increase of each row's rhs.
    pub duals: Vec<f64>,
    pub basis: Basis,
    pub iterations: usize,
}

pub(crate) fn solve(
    sf: &StandardForm,
    lo: &[f64],
    hi: &[f64],
    warm: Option<&Basis>,
) -> Result<LpResult, SolverError> {
    let mut engine = Engine::new(sf, lo, hi, warm);
    engine.run()
}

fn resting_state(lo: f64, hi: f64) -> (VarState, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if hi <= 0.0 || (lo < 0.0 && hi.abs() < lo.abs()) {
                (VarState::AtUpper, hi)
            } else {
                (VarState::AtLower, lo)
            }
        }
        (true, false) => (VarState::AtLower, lo),
        (false, true) => (VarState::AtUpper, hi),
        (false, false) => (VarState::Free, 0.0),
    }
}

struct Engine<'a> {
    sf: &'a StandardForm,
    lo: &'a [f64],
    hi: &'a [f64],
    x: Vec<f64>,
    basic: Vec<usize>,
    state: Vec<VarState>,
    pos_of: Vec<usize>,
    lu: LuFactors,
    iterations: usize,
    cap: usize,
    degenerate_run: usize,
    bland: bool,
    col: Vec<f64>,
    y: Vec<f64>,
    cb: Vec<f64>,
}

enum Step {
    Optimal,
    Infeasible,
    Unbounded,
    Continue,
}

impl<'a> Engine<'a> {
    fn new(sf: &'a StandardForm, lo: &'a [f64], hi: &'a [f64], warm: Option<&Basis>) -> Self {
        let (n, m) = (sf.n, sf.m);
        let total = n + m;
        let mut x = vec![0.0; total];
        let mut state = vec![VarState::AtLower; total];
        let mut basic: Vec<usize> = Vec::with_capacity(m);

        let warm = warm.filter(|b| b.basic.len() == m && b.state.len() == total);
        match warm {
            Some(b) => {
                basic.extend_from_slice(&b.basic);
                for j in 0..total {
                    if b.state[j] == VarState::Basic {
                        state[j] = VarState::Basic;
                        continue;
                    }
                    let (s, v) = match b.state[j] {
                        VarState::AtUpper if hi[j].is_finite() => (VarState::AtUpper, hi[j]),
                        VarState::AtLower if lo[j].is_finite() => (VarState::AtLower, lo[j]),
                        _ => resting_state(lo[j], hi[j]),
                    };
                    state[j] = s;
                    x[j] = v;
                }
            }
            None => {
                for j in 0..n {
                    let (s, v) = resting_state(lo[j], hi[j]);
                    state[j] = s;
                    x[j] = v;
                }
                for i in 0..m {
                    basic.push(n + i);
                    state[n + i] = VarState::Basic;
                }
            }
        }
        let mut pos_of = vec![NONE; total];
        for (p, &j) in basic.iter().enumerate() {
            pos_of[j] = p;
        }
        Engine {
            sf,
            lo,
            hi,
            x,
            basic,
            state,
            pos_of,
            lu: LuFactors::default(),
            iterations: 0,
            cap: 50 * total.max(1),
            degenerate_run: 0,
            bland: false,
            col: vec![0.0; m],
            y: vec![0.0; m],
            cb: vec![0.0; m],
        }
    }

    fn refactor(&mut self) {
        let m = self.sf.m;
        loop {
            let sf = self.sf;
            let basic = &self.basic;
            match LuFactors::factorize(m, |p| sf.column(basic[p])) {
                Ok(lu) => {
                    self.lu = lu;
                    break;
                }
                Err(sing) => {
                    trace!("repairing singular basis: {} columns", sing.positions.len());
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let old = self.basic[p];
                        let (s, v) = resting_state(self.lo[old], self.hi[old]);
                        self.state[old] = s;
                        self.x[old] = v;
                        self.pos_of[old] = NONE;
                        let logical = self.sf.n + r;
                        self.basic[p] = logical;
                        self.state[logical] = VarState::Basic;
                        self.pos_of[logical] = p;
                    }
                }
            }
        }
        self.recompute_basics();
    }

    fn recompute_basics(&mut self) {
        let sf = self.sf;
        let rhs = &mut self.col;
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..sf.n + sf.m {
            if self.state[j] == VarState::Basic || self.x[j] == 0.0 {
                continue;
            }
            let c = sf.column(j);
            for (&r, &a) in c.rows.iter().zip(c.vals) {
                rhs[r] -= a * self.x[j];
            }
        }
        self.lu.ftran(rhs);
        for p in 0..sf.m {
            self.x[self.basic[p]] = rhs[p];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] - PRIMAL_TOL {
            -1.0
        } else if v > self.hi[j] + PRIMAL_TOL {
            1.0
        } else {
            0.0
        }
    }

    fn run(&mut self) -> Result<LpResult, SolverError> {
        self.refactor();
        loop {
            match self.iterate()? {
                Step::Continue => {}
                Step::Optimal => {
                    if self.lu.n_etas() > 0 {
                        self.refactor();
                        if let Step::Optimal = self.iterate()? {
                            return Ok(self.finish(LpStatus::Optimal));
                        }
                        continue;
                    }
                    return Ok(self.finish(LpStatus::Optimal));
                }
                Step::Infeasible => {
                    if self.lu.n_etas() > 0 {
                        self.refactor();
                        continue;
                    }
                    return Ok(self.finish(LpStatus::Infeasible));
                }
                Step::Unbounded => return Ok(self.finish(LpStatus::Unbounded)),
            }
        }
    }

    fn finish(&mut self, status: LpStatus) -> LpResult {
        let sf = self.sf;
        // Duals against the true objective.
        for p in 0..sf.m {
            let j = self.basic[p];
            self.cb[p] = if j < sf.n { sf.cost[j] } else { 0.0 };
        }
        let mut y = self.cb.clone();
        self.lu.btran(&mut y);
        let objective = (0..sf.n).map(|j| sf.cost[j] * self.x[j]).sum();
        LpResult {
            status,
            x: self.x.clone(),
            objective,
            duals: y,
            basis: Basis { basic: self.basic.clone(), state: self.state.clone() },
            iterations: self.iterations,
        }
    }

    /// One pricing + ratio test + update cycle.
    fn iterate(&mut self) -> Result<Step, SolverError> {
        if self.iterations >= self.cap {
            return Err(SolverError::NumericalFailure { iterations: self.iterations });
        }
        let sf = self.sf;
        let (n, m) = (sf.n, sf.m);

        let mut phase1 = false;
        for p in 0..m {
            let j = self.basic[p];
            let inf = self.infeasibility(j);
            if inf != 0.0 {
                phase1 = true;
            }
            self.cb[p] = inf;
        }
        if !phase1 {
            for p in 0..m {
                let j = self.basic[p];
                self.cb[p] = if j < n { sf.cost[j] } else { 0.0 };
            }
        }
        self.y.copy_from_slice(&self.cb);
        self.lu.btran(&mut self.y);

        // Pricing.
        let mut entering = NONE;
        let mut best = 0.0;
        let mut entering_d = 0.0;
        for j in 0..n + m {
            let st = self.state[j];
            if st == VarState::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let c = if phase1 || j >= n { 0.0 } else { sf.cost[j] };
            let d = c - sf.dot_column(j, &self.y);
            let eligible = match st {
                VarState::AtLower => d < -DUAL_TOL,
                VarState::AtUpper => d > DUAL_TOL,
                VarState::Free => d.abs() > DUAL_TOL,
                VarState::Basic => false,
            };
            if !eligible {
                continue;
            }
            if self.bland {
                entering = j;
                entering_d = d;
                break;
            }
            if d.abs() > best {
                best = d.abs();
                entering = j;
                entering_d = d;
            }
        }
        if entering == NONE {
            return Ok(if phase1 { Step::Infeasible } else { Step::Optimal });
        }
        let q = entering;
        let dir = if entering_d < 0.0 { 1.0 } else { -1.0 };

        // alpha = B^{-1} a_q
        self.col.iter_mut().for_each(|v| *v = 0.0);
        {
            let c = sf.column(q);
            for (&r, &a) in c.rows.iter().zip(c.vals) {
                self.col[r] = a;
            }
        }
        self.lu.ftran(&mut self.col);

        let (leave, t) = self.ratio_test(phase1, dir);
        let range = self.hi[q] - self.lo[q];
        let flip = match leave {
            None => range.is_finite(),
            Some(_) => range <= t,
        };
        if leave.is_none() && !flip {
            if phase1 {
                return Err(SolverError::NumericalFailure { iterations: self.iterations });
            }
            return Ok(Step::Unbounded);
        }
        let step = if flip { range } else { t };

        self.iterations += 1;
        if step < DEGENERATE_STEP {
            self.degenerate_run += 1;
            if self.degenerate_run > BLAND_AFTER && !self.bland {
                trace!("switching to Bland's rule after {} degenerate pivots", self.degenerate_run);
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }

        if step != 0.0 {
            self.x[q] += dir * step;
            for p in 0..m {
                let a = self.col[p];
                if a != 0.0 {
                    self.x[self.basic[p]] -= dir * step * a;
                }
            }
        }

        if flip {
            if dir > 0.0 {
                self.state[q] = VarState::AtUpper;
                self.x[q] = self.hi[q];
            } else {
                self.state[q] = VarState::AtLower;
                self.x[q] = self.lo[q];
            }
            return Ok(Step::Continue);
        }

        let (r, to_upper) = leave.expect("leaving row");
        let out = self.basic[r];
        if to_upper {
            self.x[out] = self.hi[out];
            self.state[out] = if self.lo[out] == self.hi[out] { VarState::AtLower } else { VarState::AtUpper };
        } else {
            self.x[out] = self.lo[out];
            self.state[out] = VarState::AtLower;
        }
        self.pos_of[out] = NONE;
        self.basic[r] = q;
        self.state[q] = VarState::Basic;
        self.pos_of[q] = r;
        self.lu.push_eta(r, &self.col);
        if self.lu.n_etas() >= REFACTOR_EVERY {
            self.refactor();
        }
        Ok(Step::Continue)
    }

    /// Returns the leaving position with the bound it leaves at, and the step length.
    fn ratio_test(&self, phase1: bool, dir: f64) -> (Option<(usize, bool)>, f64) {
        let m = self.sf.m;
        // Per basic position: (exact ratio, relaxed ratio, leaves at upper)
        let limit = |p: usize| -> Option<(f64, f64, bool)> {
            let a = self.col[p];
            if a.abs() < PIVOT_TOL {
                return None;
            }
            let rate = -dir * a;
            let j = self.basic[p];
            let (v, l, h) = (self.x[j], self.lo[j], self.hi[j]);
            if rate < 0.0 {
                let target = if phase1 && v > h + PRIMAL_TOL {
                    h
                } else if phase1 && v < l - PRIMAL_TOL {
                    return None;
                } else {
                    l
                };
                if !target.is_finite() {
                    return None;
                }
                let exact = ((v - target) / -rate).max(0.0);
                let relaxed = (v - target + PRIMAL_TOL) / -rate;
                Some((exact, relaxed, target == h && target != l))
            } else {
                let target = if phase1 && v < l - PRIMAL_TOL {
                    l
                } else if phase1 && v > h + PRIMAL_TOL {
                    return None;
                } else {
                    h
                };
                if !target.is_finite() {
                    return None;
                }
                let exact = ((target - v) / rate).max(0.0);
                let relaxed = (target - v + PRIMAL_TOL) / rate;
                Some((exact, relaxed, target == h))
            }
        };

        if self.bland {
            let mut best: Option<(usize, bool)> = None;
            let mut best_t = f64::INFINITY;
            let mut best_var = NONE;
            for p in 0..m {
                if let Some((exact, _, up)) = limit(p) {
                    let var = self.basic[p];
                    if exact < best_t || (exact == best_t && var < best_var) {
                        best_t = exact;
                        best = Some((p, up));
                        best_var = var;
                    }
                }
            }
            return (best, best_t);
        }

        let mut theta = f64::INFINITY;
        for p in 0..m {
            if let Some((_, relaxed, _)) = limit(p) {
                theta = theta.min(relaxed);
            }
        }
        if !theta.is_finite() {
            return (None, f64::INFINITY);
        }
        let mut best: Option<(usize, bool)> = None;
        let mut best_t = 0.0;
        let mut best_a = 0.0;
        let mut best_var = NONE;
        for p in 0..m {
            if let Some((exact, _, up)) = limit(p) {
                if exact > theta {
                    continue;
                }
                let a = self.col[p].abs();
                let var = self.basic[p];
                if a > best_a || (a == best_a && var < best_var) {
                    best_a = a;
                    best = Some((p, up));
                    best_t = exact;
                    best_var = var;
                }
            }
        }
        (best, best_t)
    }
}
