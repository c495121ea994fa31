//! Sparse LU factorisation of the simplex basis with product-form updates.
//!
//! The basis `B` is factorised left-looking, one column at a time, with
//! threshold partial pivoting. After factorisation
//!
//! ```text
//! B[:, q_k] = sum_{j <= k} U[j, k] * L_j
//! ```
//!
//! where `L_j` has a unit entry in pivot row `p_j` and further entries only
//! in rows pivoted after step `j`. Pivots performed after the factorisation
//! are recorded as eta columns and applied on top.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

const NONE: usize = usize::MAX;
const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

/// Sparse column given as parallel row/value slices.
pub(crate) struct SparseCol<'a> {
    pub rows: &'a [usize],
    pub vals: &'a [f64],
}

#[derive(Debug)]
pub(crate) struct Singular {
    /// Basis positions whose columns could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    /// Off-pivot entries `(basis position, value)` of the entering column.
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactors {
    m: usize,
    pivot_row: Vec<usize>,
    col_pos: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
    work: Vec<f64>,
}

impl LuFactors {
    /// Factorises the `m x m` matrix whose column at basis position `pos` is `col(pos)`.
    pub fn factorize<'a, F>(m: usize, col: F) -> Result<Self, Singular>
    where
        F: Fn(usize) -> SparseCol<'a>,
    {
        let mut row_count = vec![0usize; m];
        let mut order: Vec<(usize, usize)> = Vec::with_capacity(m);
        for pos in 0..m {
            let c = col(pos);
            for &r in c.rows {
                row_count[r] += 1;
            }
            order.push((c.rows.len(), pos));
        }
        order.sort_unstable();

        let mut f = LuFactors {
            m,
            pivot_row: Vec::with_capacity(m),
            col_pos: Vec::with_capacity(m),
            l_start: vec![0],
            u_start: vec![0],
            u_diag: Vec::with_capacity(m),
            work: vec![0.0; m],
            ..Default::default()
        };

        let mut row_step = vec![NONE; m];
        let mut work = vec![0.0f64; m];
        let mut in_pattern = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut step_seen = vec![NONE; m];
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
        let mut singular_positions = Vec::new();

        for &(_, pos) in &order {
            let k = f.pivot_row.len();
            let c = col(pos);
            for (&r, &v) in c.rows.iter().zip(c.vals) {
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                }
                work[r] += v;
                if row_step[r] != NONE && step_seen[row_step[r]] != k {
                    step_seen[row_step[r]] = k;
                    heap.push(Reverse(row_step[r]));
                }
            }

            let u_begin = f.u_idx.len();
            while let Some(Reverse(s)) = heap.pop() {
                let r = f.pivot_row[s];
                let v = work[r];
                if v == 0.0 {
                    continue;
                }
                f.u_idx.push(s);
                f.u_val.push(v);
                for t in f.l_start[s]..f.l_start[s + 1] {
                    let row = f.l_idx[t];
                    if !in_pattern[row] {
                        in_pattern[row] = true;
                        pattern.push(row);
                    }
                    work[row] -= f.l_val[t] * v;
                    let rs = row_step[row];
                    if rs != NONE && step_seen[rs] != k {
                        step_seen[rs] = k;
                        heap.push(Reverse(rs));
                    }
                }
            }

            let mut max_abs = 0.0f64;
            for &r in &pattern {
                if row_step[r] == NONE {
                    max_abs = max_abs.max(work[r].abs());
                }
            }

            if max_abs < SINGULAR_TOL {
                singular_positions.push(pos);
                f.u_idx.truncate(u_begin);
                f.u_val.truncate(u_begin);
            } else {
                let mut best = NONE;
                for &r in &pattern {
                    if row_step[r] != NONE || work[r].abs() < PIVOT_THRESHOLD * max_abs {
                        continue;
                    }
                    if best == NONE
                        || row_count[r] < row_count[best]
                        || (row_count[r] == row_count[best] && r < best)
                    {
                        best = r;
                    }
                }
                let piv = work[best];
                f.pivot_row.push(best);
                f.col_pos.push(pos);
                row_step[best] = k;
                f.u_diag.push(piv);
                f.u_start.push(f.u_idx.len());
                for &r in &pattern {
                    if row_step[r] == NONE && work[r].abs() > DROP_TOL {
                        f.l_idx.push(r);
                        f.l_val.push(work[r] / piv);
                    }
                }
                f.l_start.push(f.l_idx.len());
            }

            for &r in &pattern {
                work[r] = 0.0;
                in_pattern[r] = false;
            }
            pattern.clear();
        }

        if !singular_positions.is_empty() {
            let rows = (0..m).filter(|&r| row_step[r] == NONE).collect();
            return Err(Singular { positions: singular_positions, rows });
        }
        Ok(f)
    }

    pub fn n_etas(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B z = b` in place: on entry `x` holds `b` indexed by row, on
    /// exit `z` indexed by basis position.
    pub fn ftran(&mut self, x: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let t = x[self.pivot_row[k]];
            if t != 0.0 {
                for s in self.l_start[k]..self.l_start[k + 1] {
                    x[self.l_idx[s]] -= self.l_val[s] * t;
                }
            }
        }
        let w = &mut self.work;
        for k in 0..m {
            w[k] = x[self.pivot_row[k]];
        }
        for k in (0..m).rev() {
            let z = w[k] / self.u_diag[k];
            w[k] = z;
            if z != 0.0 {
                for s in self.u_start[k]..self.u_start[k + 1] {
                    w[self.u_idx[s]] -= self.u_val[s] * z;
                }
            }
        }
        for k in 0..m {
            x[self.col_pos[k]] = w[k];
        }
        for eta in &self.etas {
            let zr = x[eta.pos] / eta.pivot;
            x[eta.pos] = zr;
            if zr != 0.0 {
                for &(i, a) in &eta.entries {
                    x[i] -= a * zr;
                }
            }
        }
    }

    /// Solves `B^T y = c` in place: on entry `x` holds `c` indexed by basis
    /// position, on exit `y` indexed by row.
    pub fn btran(&mut self, x: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = x[eta.pos];
            for &(i, a) in &eta.entries {
                s -= a * x[i];
            }
            x[eta.pos] = s / eta.pivot;
        }
        let w = &mut self.work;
        for k in 0..m {
            let mut s = x[self.col_pos[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[t] * w[self.u_idx[t]];
            }
            w[k] = s / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let mut s = w[k];
            for t in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[t] * x[self.l_idx[t]];
            }
            x[self.pivot_row[k]] = s;
        }
    }

    /// Records a basis change at position `pos`; `alpha` is `B^{-1} a_q`
    /// of the entering column computed before the change.
    pub fn push_eta(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta { pos, pivot: alpha[pos], entries });
    }
}
