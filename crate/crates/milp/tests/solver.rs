use std::collections::BTreeMap;

use gridloss_milp::{
    duals_at_fixed_binaries, solve_lp, solve_milp, CanonicalProblem, Relation, SolverError, Status,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Independent oracles

/// Solves the dense system `a x = b` by Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum over all vertices of the polytope: every choice of `n` tight
/// hyperplanes among constraints and bounds. Only for tiny problems.
fn vertex_oracle(p: &CanonicalProblem) -> Option<f64> {
    let n = p.n_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in p.constraints() {
        let mut row = vec![0.0; n];
        for &(j, a) in &c.coeffs {
            row[j] = a;
        }
        planes.push((row, c.rhs));
    }
    for (j, &(lo, hi)) in p.bounds().iter().enumerate() {
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        planes.push((row.clone(), lo));
        planes.push((row, hi));
    }
    let mut best: Option<f64> = None;
    let k = planes.len();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = dense_solve(a, b) {
            if p.max_violation(&x) < 1e-7 && p.max_bound_violation(&x) < 1e-7 {
                let obj = p.objective_value(&x);
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + k - n {
                break;
            }
            if i == 0 && idx[0] == k - n {
                return best;
            }
        }
        idx[i] += 1;
        for t in i + 1..n {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Exhaustive enumeration of binary fixings, each solved as an LP.
fn enumeration_oracle(p: &CanonicalProblem) -> Option<f64> {
    let bins: Vec<usize> = p.binaries().iter().copied().collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut q = p.clone();
        for (t, &j) in bins.iter().enumerate() {
            let v = ((mask >> t) & 1) as f64;
            q.set_bounds(j, v, v);
        }
        let s = solve_lp(&q).unwrap();
        if s.status == Status::Optimal {
            best = Some(best.map_or(s.objective, |b: f64| b.min(s.objective)));
        }
    }
    best
}

fn random_milp(rng: &mut ChaCha8Rng, max_vars: usize, max_bins: usize) -> CanonicalProblem {
    let n = rng.gen_range(2..=max_vars);
    let k = rng.gen_range(1..=max_bins.min(n));
    let m = rng.gen_range(2..=12);
    let mut p = CanonicalProblem::new();
    let mut x0 = Vec::with_capacity(n);
    for j in 0..n {
        let cost = rng.gen_range(-10i32..=10) as f64;
        if j < k {
            p.add_binary(cost);
            x0.push(rng.gen_range(0..=1) as f64);
        } else {
            let lo = rng.gen_range(-5i32..=0) as f64;
            let hi = rng.gen_range(1i32..=10) as f64;
            p.add_var(cost, lo, hi);
            x0.push(rng.gen_range(lo..=hi));
        }
    }
    let feasible_by_construction = rng.gen_bool(0.85);
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.5) {
                coeffs.push((j, rng.gen_range(-5i32..=5) as f64));
            }
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let rel = match rng.gen_range(0..10) {
            0 => Relation::Eq,
            1..=5 => Relation::Le,
            _ => Relation::Ge,
        };
        let slack = if feasible_by_construction { rng.gen_range(0.0..4.0) } else { rng.gen_range(-6.0..6.0) };
        let rhs = match rel {
            Relation::Eq => act,
            Relation::Le => act + slack,
            Relation::Ge => act - slack,
        };
        p.add_constraint(coeffs, rel, rhs);
    }
    p
}

// ---------------------------------------------------------------------------
// Documented examples

#[test]
fn bound_active_minimum() {
    let mut p = CanonicalProblem::new();
    p.add_var(1.0, 1.0, 3.0);
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_eq!(s.x, vec![1.0]);
    assert_eq!(s.objective, 1.0);
}

#[test]
fn negative_cost_drives_to_upper_bound() {
    let mut p = CanonicalProblem::new();
    p.add_var(-1.0, 0.0, 2.0);
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_eq!(s.x, vec![2.0]);
    assert_eq!(s.objective, -2.0);
}

#[test]
fn two_generator_merit_order_and_balance_dual() {
    // Basic solutions of g1 + g2 = 100 with the bounds: (60, 40) costs 1400,
    // (0, 100) costs 2000; (100, 0) violates g1 <= 60. The marginal unit is
    // g2, so one more MW costs 20.
    let mut p = CanonicalProblem::new();
    let g1 = p.add_var(10.0, 0.0, 60.0);
    let g2 = p.add_var(20.0, 0.0, 100.0);
    let bal = p.add_constraint(vec![(g1, 1.0), (g2, 1.0)], Relation::Eq, 100.0);
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.x[g1] - 60.0).abs() < 1e-9);
    assert!((s.x[g2] - 40.0).abs() < 1e-9);
    assert!((s.objective - 1400.0).abs() < 1e-9);
    assert!((s.duals.unwrap()[bal] - 20.0).abs() < 1e-9);
    assert_eq!(vertex_oracle(&p), Some(1400.0));
}

#[test]
fn milp_without_binaries_matches_lp() {
    let mut p = CanonicalProblem::new();
    let a = p.add_var(3.0, 0.0, 5.0);
    let b = p.add_var(1.0, 0.0, 2.0);
    p.add_constraint(vec![(a, 1.0), (b, 1.0)], Relation::Ge, 4.0);
    let lp = solve_lp(&p).unwrap();
    let milp = solve_milp(&p).unwrap();
    assert_eq!(lp.status, milp.status);
    assert_eq!(lp.x, milp.x);
    assert_eq!(lp.objective, milp.objective);
}

fn direction_problem() -> (CanonicalProblem, usize, usize, usize) {
    let mut p = CanonicalProblem::new();
    let fp = p.add_var(1.0, 0.0, 100.0);
    let fm = p.add_var(1.0, 0.0, 100.0);
    let u = p.add_binary(0.0);
    p.add_constraint(vec![(fp, 1.0), (fm, -1.0)], Relation::Eq, 50.0);
    p.add_constraint(vec![(fp, 1.0), (u, -100.0)], Relation::Le, 0.0);
    p.add_constraint(vec![(fm, 1.0), (u, 100.0)], Relation::Le, 100.0);
    (p, fp, fm, u)
}

#[test]
fn direction_binary_selects_the_only_feasible_direction() {
    let (p, fp, fm, u) = direction_problem();
    let s = solve_milp(&p).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_eq!(s.x[u], 1.0);
    assert!((s.x[fp] - 50.0).abs() < 1e-9);
    assert_eq!(s.x[fm], 0.0);
    assert!((s.objective - 50.0).abs() < 1e-9);
}

#[test]
fn fixing_from_incumbent_reproduces_objective() {
    let (p, _, _, _) = direction_problem();
    let s = solve_milp(&p).unwrap();
    let fixed = duals_at_fixed_binaries(&p, &s.binary_values(&p)).unwrap();
    assert_eq!(fixed.status, Status::Optimal);
    assert!((fixed.objective - s.objective).abs() < 1e-9);
    assert_eq!(fixed.duals.as_ref().unwrap().len(), p.n_constraints());
}

#[test]
fn single_generator_sets_price() {
    let mut p = CanonicalProblem::new();
    let g = p.add_var(25.0, 0.0, 500.0);
    let u = p.add_binary(0.0);
    let bal = p.add_constraint(vec![(g, 1.0)], Relation::Eq, 120.0);
    p.add_constraint(vec![(g, 1.0), (u, -500.0)], Relation::Le, 0.0);
    let s = solve_milp(&p).unwrap();
    let fixed = duals_at_fixed_binaries(&p, &s.binary_values(&p)).unwrap();
    assert!((fixed.duals.unwrap()[bal] - 25.0).abs() < 1e-9);
}

#[test]
fn infeasible_fixing_is_reported() {
    let (p, _, _, u) = direction_problem();
    let mut fixing = BTreeMap::new();
    fixing.insert(u, 0.0);
    assert_eq!(duals_at_fixed_binaries(&p, &fixing), Err(SolverError::InfeasibleFixing));
}

#[test]
fn non_integral_fixing_is_rejected() {
    let (p, _, _, u) = direction_problem();
    let mut fixing = BTreeMap::new();
    fixing.insert(u, 0.4);
    assert!(matches!(duals_at_fixed_binaries(&p, &fixing), Err(SolverError::InvalidFixing(_))));
}

#[test]
fn malformed_problem_is_an_error() {
    let mut p = CanonicalProblem::new();
    p.add_var(1.0, 1.0, 0.0);
    assert!(matches!(solve_lp(&p), Err(SolverError::MalformedProblem(_))));
    assert!(matches!(solve_milp(&p), Err(SolverError::MalformedProblem(_))));
}

#[test]
fn infeasible_milp_reports_status() {
    let mut p = CanonicalProblem::new();
    let u = p.add_binary(1.0);
    let v = p.add_binary(1.0);
    p.add_constraint(vec![(u, 1.0), (v, 1.0)], Relation::Eq, 1.5);
    assert_eq!(solve_milp(&p).unwrap().status, Status::Infeasible);
}

// ---------------------------------------------------------------------------
// Randomised checks

#[test]
fn random_milps_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..60 {
        let p = random_milp(&mut rng, 20, 8);
        let s = solve_milp(&p).unwrap();
        let oracle = enumeration_oracle(&p);
        match oracle {
            None => assert_eq!(s.status, Status::Infeasible, "case {case}"),
            Some(best) => {
                assert_eq!(s.status, Status::Optimal, "case {case}");
                assert!((s.objective - best).abs() < 1e-6, "case {case}: {} vs {best}", s.objective);
                assert!(p.max_violation(&s.x) < 1e-6);
                assert!(p.max_bound_violation(&s.x) < 1e-7);
                for &j in p.binaries() {
                    assert!(s.x[j] == 0.0 || s.x[j] == 1.0);
                }
            }
        }
    }
}

#[test]
fn tiny_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let mut p = random_milp(&mut rng, 4, 1);
        // Drop integrality: the vertex oracle handles the continuous relaxation.
        let mut q = CanonicalProblem::new();
        for j in 0..p.n_vars() {
            let (lo, hi) = p.bounds()[j];
            q.add_var(p.objective()[j], lo, hi);
        }
        for c in p.constraints() {
            q.add_constraint(c.coeffs.clone(), c.relation, c.rhs);
        }
        p = q;
        let s = solve_lp(&p).unwrap();
        match vertex_oracle(&p) {
            None => assert_eq!(s.status, Status::Infeasible, "case {case}"),
            Some(best) => {
                assert_eq!(s.status, Status::Optimal, "case {case}");
                assert!((s.objective - best).abs() < 1e-6, "case {case}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strong_duality_on_optimal_lps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_milp(&mut rng, 15, 1);
        let s = solve_lp(&p).unwrap();
        if s.status == Status::Optimal {
            let y = s.duals.as_ref().unwrap();
            // Dual objective: y.b plus reduced-cost contributions at the bounds.
            let mut reduced = p.objective().to_vec();
            for (i, c) in p.constraints().iter().enumerate() {
                for &(j, a) in &c.coeffs {
                    reduced[j] -= y[i] * a;
                }
            }
            let mut dual_obj: f64 = p.constraints().iter().zip(y).map(|(c, yi)| c.rhs * yi).sum();
            for (j, &d) in reduced.iter().enumerate() {
                let (lo, hi) = p.bounds()[j];
                dual_obj += if d > 0.0 { d * lo } else { d * hi };
            }
            prop_assert!((dual_obj - s.objective).abs() < 1e-6, "{} vs {}", dual_obj, s.objective);
            // Row dual signs: <= rows non-positive, >= rows non-negative.
            for (c, &yi) in p.constraints().iter().zip(y) {
                match c.relation {
                    Relation::Le => prop_assert!(yi <= 1e-9),
                    Relation::Ge => prop_assert!(yi >= -1e-9),
                    Relation::Eq => {}
                }
            }
        }
    }

    #[test]
    fn milp_objective_never_below_relaxation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_milp(&mut rng, 12, 6);
        let relaxed = solve_lp(&p).unwrap();
        let s = solve_milp(&p).unwrap();
        if s.status == Status::Optimal {
            prop_assert_eq!(relaxed.status, Status::Optimal);
            prop_assert!(s.objective >= relaxed.objective - 1e-6);
        }
    }

    #[test]
    fn solves_are_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_milp(&mut rng, 15, 5);
        let a = solve_milp(&p).unwrap();
        let b = solve_milp(&p).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.status == Status::Optimal {
            prop_assert_eq!(a.x, b.x);
        }
    }
}
