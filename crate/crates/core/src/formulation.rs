//! Translation of a market hour into an LP/MILP and back.
//!
//! Every variant minimises generation cost subject to zonal balance. Lines
//! carrying loss factors get an explicit loss variable `p` which is charged
//! half to each endpoint zone's balance. Lines without factors are plain
//! flow variables bounded by the hourly ATC, optionally with a fixed loss
//! estimate added to the endpoint demands.

use std::collections::{BTreeMap, BTreeSet};

use gridloss_milp::{BranchAndBound, CanonicalProblem, MilpSolver, Relation, Solution, SolverError, Status};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{validate_instance, LinearFactors, MarketInstance, Segment, ValidationReport};

/// Loss share each endpoint zone carries.
pub const ENDPOINT_SHARE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Lossless,
    /// Rigid loss estimates added to endpoint demands; no loss factors.
    FixedLosses,
    /// Linear loss factors with a direction binary per line.
    LinearLF,
    /// Piecewise factors with ordered segment binaries per direction.
    PiecewiseLF,
    /// Linear factors as two inequalities, no binaries.
    RelaxedLinearLF,
}

impl Variant {
    pub fn uses_factors(self) -> bool {
        matches!(self, Variant::LinearLF | Variant::PiecewiseLF | Variant::RelaxedLinearLF)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulationSpec {
    pub variant: Variant,
    /// Lines that carry loss factors (ignored by the factor-free variants).
    pub lf_selection: BTreeSet<String>,
    /// Fixed loss estimates in MW for lines without factors.
    pub fixed_losses: BTreeMap<String, f64>,
}

impl FormulationSpec {
    pub fn lossless() -> Self {
        FormulationSpec { variant: Variant::Lossless, lf_selection: BTreeSet::new(), fixed_losses: BTreeMap::new() }
    }

    pub fn fixed_losses(estimates: BTreeMap<String, f64>) -> Self {
        FormulationSpec { variant: Variant::FixedLosses, lf_selection: BTreeSet::new(), fixed_losses: estimates }
    }

    pub fn with_factors<I, S>(variant: Variant, lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FormulationSpec {
            variant,
            lf_selection: lines.into_iter().map(Into::into).collect(),
            fixed_losses: BTreeMap::new(),
        }
    }

    pub fn and_fixed_losses(mut self, estimates: BTreeMap<String, f64>) -> Self {
        self.fixed_losses.extend(estimates);
        self
    }
}

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("instance is invalid: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidInstance(ValidationReport),
    #[error("unknown line {0}")]
    UnknownLine(String),
    #[error("line {line} lacks {needs} loss factors")]
    UncalibratedLine { line: String, needs: &'static str },
    #[error("line {line}: segment grid ends at {last_hi} MW, rating is {rated} MW")]
    SegmentGridMismatch { line: String, last_hi: f64, rated: f64 },
    #[error("invalid formulation: {0}")]
    InvalidSpec(String),
    #[error("solution status is {0:?}, not optimal")]
    StatusNotOptimal(Status),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Where a line's quantities live in the problem.
#[derive(Debug, Clone, PartialEq)]
pub enum LineVars {
    Lossless {
        flow: usize,
    },
    Linear {
        fwd: usize,
        rev: usize,
        /// Direction binary; absent in the relaxed variant.
        dir: Option<usize>,
        loss: usize,
    },
    Piecewise {
        fwd: Vec<usize>,
        rev: Vec<usize>,
        on_fwd: Vec<usize>,
        on_rev: Vec<usize>,
        loss: usize,
    },
}

/// A canonical problem plus the symbol table mapping it back to the market.
#[derive(Debug, Clone)]
pub struct ClearingProblem {
    pub problem: CanonicalProblem,
    pub variant: Variant,
    pub instance: MarketInstance,
    pub gen_vars: Vec<usize>,
    pub line_vars: Vec<LineVars>,
    /// Balance row of each zone, in instance order.
    pub balance_rows: Vec<usize>,
    /// Fixed loss estimate of each line in instance order (0 when none).
    pub fixed_losses: Vec<f64>,
    pub var_names: Vec<String>,
}

impl ClearingProblem {
    fn var(&mut self, name: String, cost: f64, lo: f64, hi: f64) -> usize {
        self.var_names.push(name);
        self.problem.add_var(cost, lo, hi)
    }

    fn binary(&mut self, name: String) -> usize {
        self.var_names.push(name);
        self.problem.add_binary(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub timestamp: usize,
    pub status: Status,
    pub objective: f64,
    pub generation: BTreeMap<String, f64>,
    /// Signed flow, positive from `from_zone` to `to_zone`.
    pub flow: BTreeMap<String, f64>,
    /// `(forward, reverse)` flow parts of lines with loss factors.
    pub flow_parts: BTreeMap<String, (f64, f64)>,
    /// Loss from the factor model on lines with loss factors.
    pub modeled_loss: BTreeMap<String, f64>,
    /// Rigid loss estimates charged on lines without factors.
    pub fixed_loss: BTreeMap<String, f64>,
    pub zonal_price: BTreeMap<String, f64>,
}

impl DispatchResult {
    /// Loss charged to the balance for a line: modeled or fixed, else zero.
    pub fn charged_loss(&self, line: &str) -> f64 {
        self.modeled_loss.get(line).or_else(|| self.fixed_loss.get(line)).copied().unwrap_or(0.0)
    }
}

fn check_spec(inst: &MarketInstance, spec: &FormulationSpec) -> Result<(), FormulationError> {
    for id in spec.lf_selection.iter().chain(spec.fixed_losses.keys()) {
        if inst.line(id).is_none() {
            return Err(FormulationError::UnknownLine(id.clone()));
        }
    }
    match spec.variant {
        Variant::Lossless if !spec.fixed_losses.is_empty() => {
            return Err(FormulationError::InvalidSpec("lossless clearing takes no loss estimates".into()))
        }
        Variant::Lossless | Variant::FixedLosses if !spec.lf_selection.is_empty() => {
            return Err(FormulationError::InvalidSpec(format!("{:?} takes no loss-factor selection", spec.variant)))
        }
        _ => {}
    }
    for (id, &v) in &spec.fixed_losses {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(FormulationError::InvalidSpec(format!("fixed loss of {id} is {v}")));
        }
        if spec.lf_selection.contains(id) {
            return Err(FormulationError::InvalidSpec(format!("{id} has both loss factors and a fixed loss")));
        }
    }
    for id in &spec.lf_selection {
        let line = inst.line(id).expect("checked above");
        let model = line.loss_model.as_ref();
        match spec.variant {
            Variant::LinearLF | Variant::RelaxedLinearLF => {
                if model.and_then(|m| m.linear).is_none() {
                    return Err(FormulationError::UncalibratedLine { line: id.clone(), needs: "linear" });
                }
            }
            Variant::PiecewiseLF => {
                let segs = model
                    .and_then(|m| m.piecewise.as_ref())
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| FormulationError::UncalibratedLine { line: id.clone(), needs: "piecewise" })?;
                let last_hi = segs[segs.len() - 1].hi;
                if (last_hi - line.rated_capacity).abs() > 1e-9 * line.rated_capacity.max(1.0) {
                    return Err(FormulationError::SegmentGridMismatch {
                        line: id.clone(),
                        last_hi,
                        rated: line.rated_capacity,
                    });
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn value_range(points: impl IntoIterator<Item = f64>) -> (f64, f64) {
    points.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Builds the clearing problem for one hour.
pub fn build_problem(inst: &MarketInstance, spec: &FormulationSpec) -> Result<ClearingProblem, FormulationError> {
    let report = validate_instance(inst);
    if !report.is_valid() {
        return Err(FormulationError::InvalidInstance(report));
    }
    check_spec(inst, spec)?;

    let mut cp = ClearingProblem {
        problem: CanonicalProblem::new(),
        variant: spec.variant,
        instance: inst.clone(),
        gen_vars: Vec::with_capacity(inst.generators.len()),
        line_vars: Vec::with_capacity(inst.interconnectors.len()),
        balance_rows: Vec::with_capacity(inst.zones.len()),
        fixed_losses: Vec::with_capacity(inst.interconnectors.len()),
        var_names: Vec::new(),
    };

    let nz = inst.zones.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nz];
    let mut rhs: Vec<f64> = inst.zones.iter().map(|z| z.net_demand()).collect();

    for g in &inst.generators {
        let j = cp.var(format!("gen[{}]", g.id), g.cost, g.p_min, g.p_max);
        cp.gen_vars.push(j);
        rows[inst.zone_index(&g.zone).expect("validated")].push((j, 1.0));
    }

    for line in &inst.interconnectors {
        let from = inst.zone_index(&line.from_zone).expect("validated");
        let to = inst.zone_index(&line.to_zone).expect("validated");
        let fixed = spec.fixed_losses.get(&line.id).copied().unwrap_or(0.0);
        cp.fixed_losses.push(fixed);
        rhs[from] += ENDPOINT_SHARE * fixed;
        rhs[to] += ENDPOINT_SHARE * fixed;

        let selected = spec.variant.uses_factors() && spec.lf_selection.contains(&line.id);
        if !selected {
            let f = cp.var(format!("flow[{}]", line.id), 0.0, -line.atc_rev, line.atc_fwd);
            rows[from].push((f, -1.0));
            rows[to].push((f, 1.0));
            cp.line_vars.push(LineVars::Lossless { flow: f });
            continue;
        }

        let model = line.loss_model.as_ref().expect("checked by check_spec");
        let vars = match spec.variant {
            Variant::LinearLF | Variant::RelaxedLinearLF => {
                let lf = model.linear.expect("checked by check_spec");
                add_linear_line(&mut cp, &line.id, line.atc_fwd, line.atc_rev, lf, spec.variant == Variant::LinearLF)
            }
            Variant::PiecewiseLF => {
                let segs = model.piecewise.as_ref().expect("checked by check_spec");
                add_piecewise_line(&mut cp, &line.id, line.atc_fwd, line.atc_rev, segs)
            }
            _ => unreachable!("factor-free variants never select lines"),
        };
        let (fwd, rev, loss): (Vec<usize>, Vec<usize>, usize) = match &vars {
            LineVars::Linear { fwd, rev, loss, .. } => (vec![*fwd], vec![*rev], *loss),
            LineVars::Piecewise { fwd, rev, loss, .. } => (fwd.clone(), rev.clone(), *loss),
            LineVars::Lossless { .. } => unreachable!(),
        };
        for &j in &fwd {
            rows[from].push((j, -1.0));
            rows[to].push((j, 1.0));
        }
        for &j in &rev {
            rows[from].push((j, 1.0));
            rows[to].push((j, -1.0));
        }
        rows[from].push((loss, -ENDPOINT_SHARE));
        rows[to].push((loss, -ENDPOINT_SHARE));
        cp.line_vars.push(vars);
    }

    for (coeffs, b) in rows.into_iter().zip(rhs) {
        let r = cp.problem.add_constraint(coeffs, Relation::Eq, b);
        cp.balance_rows.push(r);
    }
    Ok(cp)
}

fn add_linear_line(cp: &mut ClearingProblem, id: &str, atc_fwd: f64, atc_rev: f64, lf: LinearFactors, exact: bool) -> LineVars {
    let fwd = cp.var(format!("fwd[{id}]"), 0.0, 0.0, atc_fwd);
    let rev = cp.var(format!("rev[{id}]"), 0.0, 0.0, atc_rev);
    let (lo, hi) = value_range([lf.beta, lf.beta + lf.alpha * (atc_fwd + atc_rev)]);
    let loss = cp.var(format!("loss[{id}]"), 0.0, lo, hi);
    let dir = if exact {
        let u = cp.binary(format!("dir[{id}]"));
        cp.problem.add_constraint(vec![(fwd, 1.0), (u, -atc_fwd)], Relation::Le, 0.0);
        cp.problem.add_constraint(vec![(rev, 1.0), (u, atc_rev)], Relation::Le, atc_rev);
        Some(u)
    } else {
        None
    };
    let rel = if exact { Relation::Eq } else { Relation::Ge };
    cp.problem.add_constraint(vec![(loss, 1.0), (fwd, -lf.alpha), (rev, -lf.alpha)], rel, lf.beta);
    LineVars::Linear { fwd, rev, dir, loss }
}

fn add_piecewise_line(cp: &mut ClearingProblem, id: &str, atc_fwd: f64, atc_rev: f64, segs: &[Segment]) -> LineVars {
    let k_count = segs.len();
    let mut flows = [Vec::with_capacity(k_count), Vec::with_capacity(k_count)];
    let mut ons = [Vec::with_capacity(k_count), Vec::with_capacity(k_count)];
    for (d, (tag, atc)) in [("fwd", atc_fwd), ("rev", atc_rev)].into_iter().enumerate() {
        for (k, s) in segs.iter().enumerate() {
            let f = cp.var(format!("{tag}[{id}][{}]", k + 1), 0.0, 0.0, s.hi.min(atc));
            let u = cp.binary(format!("on_{tag}[{id}][{}]", k + 1));
            // A segment starting beyond the hour's ATC can never be active.
            if s.lo > atc + 1e-9 {
                cp.problem.set_bounds(u, 0.0, 0.0);
            }
            flows[d].push(f);
            ons[d].push(u);
        }
        let (f, u) = (&flows[d], &ons[d]);
        for k in 0..k_count {
            let s = &segs[k];
            if k + 1 < k_count {
                // Segment k is selected when u_k = 1 and u_{k+1} = 0.
                cp.problem.add_constraint(vec![(f[k], 1.0), (u[k], -s.hi), (u[k + 1], s.hi)], Relation::Le, 0.0);
                if s.lo > 0.0 {
                    cp.problem.add_constraint(vec![(f[k], 1.0), (u[k], -s.lo), (u[k + 1], s.lo)], Relation::Ge, 0.0);
                }
                cp.problem.add_constraint(vec![(u[k], 1.0), (u[k + 1], -1.0)], Relation::Ge, 0.0);
            } else {
                cp.problem.add_constraint(vec![(f[k], 1.0), (u[k], -s.hi)], Relation::Le, 0.0);
                if s.lo > 0.0 {
                    cp.problem.add_constraint(vec![(f[k], 1.0), (u[k], -s.lo)], Relation::Ge, 0.0);
                }
            }
        }
        // Hourly ATC on the total over segments of this direction.
        cp.problem.add_constraint(f.iter().map(|&j| (j, 1.0)).collect(), Relation::Le, atc);
    }
    // At most one direction active, otherwise both could carry flow and the
    // loss term would be inflated at negative prices.
    cp.problem.add_constraint(vec![(ons[0][0], 1.0), (ons[1][0], 1.0)], Relation::Le, 1.0);

    let (mut lo, mut hi) = value_range(segs.iter().flat_map(|s| [s.loss(s.lo), s.loss(s.hi)]));
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    let loss = cp.var(format!("loss[{id}]"), 0.0, lo, hi);
    // loss = sum_k alpha_k f_k + sum_k beta_k (u_k - u_{k+1}), telescoped onto u_k.
    let mut coeffs = vec![(loss, 1.0)];
    for d in 0..2 {
        for k in 0..k_count {
            coeffs.push((flows[d][k], -segs[k].alpha));
            let beta_step = if k == 0 { segs[0].beta } else { segs[k].beta - segs[k - 1].beta };
            coeffs.push((ons[d][k], -beta_step));
        }
    }
    cp.problem.add_constraint(coeffs, Relation::Eq, 0.0);
    let [fwd, rev] = flows;
    let [on_fwd, on_rev] = ons;
    LineVars::Piecewise { fwd, rev, on_fwd, on_rev, loss }
}

/// Maps an optimal solution back to market quantities; prices come from the
/// LP duals, with binaries fixed at their solution values for MILPs.
pub fn extract_result(cp: &ClearingProblem, sol: &Solution) -> Result<DispatchResult, FormulationError> {
    extract_result_with(&BranchAndBound::default(), cp, sol)
}

pub fn extract_result_with(
    solver: &dyn MilpSolver,
    cp: &ClearingProblem,
    sol: &Solution,
) -> Result<DispatchResult, FormulationError> {
    if sol.status != Status::Optimal {
        return Err(FormulationError::StatusNotOptimal(sol.status));
    }
    let duals = match &sol.duals {
        Some(d) => d.clone(),
        None => {
            let fixed = solver.duals_at_fixed_binaries(&cp.problem, &sol.binary_values(&cp.problem))?;
            fixed.duals.ok_or(FormulationError::StatusNotOptimal(fixed.status))?
        }
    };
    let inst = &cp.instance;
    let x = &sol.x;
    let mut res = DispatchResult {
        timestamp: inst.timestamp,
        status: sol.status,
        objective: sol.objective,
        generation: BTreeMap::new(),
        flow: BTreeMap::new(),
        flow_parts: BTreeMap::new(),
        modeled_loss: BTreeMap::new(),
        fixed_loss: BTreeMap::new(),
        zonal_price: BTreeMap::new(),
    };
    for (g, &j) in inst.generators.iter().zip(&cp.gen_vars) {
        res.generation.insert(g.id.clone(), x[j]);
    }
    for (i, (line, vars)) in inst.interconnectors.iter().zip(&cp.line_vars).enumerate() {
        let id = line.id.clone();
        match vars {
            LineVars::Lossless { flow } => {
                res.flow.insert(id.clone(), x[*flow]);
                if cp.variant != Variant::Lossless && cp.fixed_losses[i] > 0.0 {
                    res.fixed_loss.insert(id, cp.fixed_losses[i]);
                }
            }
            LineVars::Linear { fwd, rev, loss, .. } => {
                res.flow.insert(id.clone(), x[*fwd] - x[*rev]);
                res.flow_parts.insert(id.clone(), (x[*fwd], x[*rev]));
                res.modeled_loss.insert(id, x[*loss]);
            }
            LineVars::Piecewise { fwd, rev, loss, .. } => {
                let pos: f64 = fwd.iter().map(|&j| x[j]).sum();
                let neg: f64 = rev.iter().map(|&j| x[j]).sum();
                res.flow.insert(id.clone(), pos - neg);
                res.flow_parts.insert(id.clone(), (pos, neg));
                res.modeled_loss.insert(id, x[*loss]);
            }
        }
    }
    for (z, &r) in inst.zones.iter().zip(&cp.balance_rows) {
        res.zonal_price.insert(z.id.clone(), duals[r]);
    }
    Ok(res)
}

/// Builds, solves and extracts in one go with the built-in solver.
pub fn clear(inst: &MarketInstance, spec: &FormulationSpec) -> Result<DispatchResult, FormulationError> {
    clear_with(&BranchAndBound::default(), inst, spec)
}

pub fn clear_with(
    solver: &dyn MilpSolver,
    inst: &MarketInstance,
    spec: &FormulationSpec,
) -> Result<DispatchResult, FormulationError> {
    let cp = build_problem(inst, spec)?;
    let sol = solver.solve_milp(&cp.problem)?;
    extract_result_with(solver, &cp, &sol)
}

/// Generation cost recomputed from the dispatch.
pub fn dispatch_cost(inst: &MarketInstance, res: &DispatchResult) -> f64 {
    inst.generators.iter().map(|g| g.cost * res.generation.get(&g.id).copied().unwrap_or(0.0)).sum()
}

/// Supply surplus per zone: generation plus net inflow minus net demand.
/// In a balanced dispatch this is exactly the loss charged to the zone.
pub fn balance_residuals(inst: &MarketInstance, res: &DispatchResult) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = inst.zones.iter().map(|z| (z.id.clone(), -z.net_demand())).collect();
    for g in &inst.generators {
        *out.get_mut(&g.zone).expect("validated") += res.generation[&g.id];
    }
    for l in &inst.interconnectors {
        let f = res.flow[&l.id];
        *out.get_mut(&l.from_zone).expect("validated") -= f;
        *out.get_mut(&l.to_zone).expect("validated") += f;
    }
    out
}

/// Half of each incident line's charged loss, summed per zone.
pub fn expected_loss_allocation(inst: &MarketInstance, res: &DispatchResult) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = inst.zones.iter().map(|z| (z.id.clone(), 0.0)).collect();
    for l in &inst.interconnectors {
        let p = res.charged_loss(&l.id);
        *out.get_mut(&l.from_zone).expect("validated") += ENDPOINT_SHARE * p;
        *out.get_mut(&l.to_zone).expect("validated") += ENDPOINT_SHARE * p;
    }
    out
}
