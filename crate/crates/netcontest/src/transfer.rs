//! Transfer sensitivity and sweeps, plus the exact three-node characterization.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::equilibrium::{
    budget_jacobian, costs_from_budgets, payoff_gradient, payoffs_from_costs, DEFAULT_MAX_ITER,
};
use crate::error::{Error, Result};
use crate::instance::ContestInstance;

pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, Serialize)]
pub struct TransferSensitivity {
    pub a: usize,
    pub b: usize,
    #[serde(rename = "dU_a")]
    pub d_u_a: f64,
    #[serde(rename = "dU_b")]
    pub d_u_b: f64,
    pub q_a_vec: Vec<f64>,
    pub q_b_vec: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferCurve {
    pub a: usize,
    pub b: usize,
    pub grid: Vec<f64>,
    pub u_a: Vec<f64>,
    pub u_b: Vec<f64>,
    pub baseline: (f64, f64),
    /// Maximal tau-intervals where both payoffs strictly beat baseline,
    /// endpoints refined by bisection.
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThreeNodeParams {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub v1: f64,
    pub v2: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThreeNodeEval {
    pub x1: f64,
    pub x2: f64,
    pub u1: f64,
    pub u3: f64,
    pub tau_bound_1: f64,
    pub tau_bound_3: f64,
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solve J^T q = g by dense LU, rejecting ill-conditioned systems. J is
/// nonsingular on the domain, so failure here indicates an upstream bug.
pub fn adjoint_solve(jac: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let jt = jac.transpose();
    let lu = jt.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("J^T is numerically singular".into()))?;
    let cond = one_norm(&jt) * one_norm(&inv);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularSystem(format!(
            "J^T condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )));
    }
    Ok(&inv * g)
}

/// dU_a*/dtau and dU_b*/dtau at tau = 0 for the transfer a -> b, via the
/// adjoint systems J^T s = grad U_a*, J^T t = grad U_b*: dU_a = s_b - s_a.
pub fn transfer_derivative(
    inst: &ContestInstance,
    a: usize,
    b: usize,
    tol: f64,
) -> Result<TransferSensitivity> {
    inst.check_player(a)?;
    inst.check_player(b)?;
    if a == b {
        return Err(Error::Index(format!("donor and recipient must differ, both {a}")));
    }
    let lambda = costs_from_budgets(inst, inst.budgets(), tol, DEFAULT_MAX_ITER)?;
    transfer_derivative_at(inst, &lambda, a, b)
}

/// Same computation but at a caller-supplied equilibrium lambda.
pub fn transfer_derivative_at(
    inst: &ContestInstance,
    lambda: &[f64],
    a: usize,
    b: usize,
) -> Result<TransferSensitivity> {
    let jac = budget_jacobian(inst, lambda);
    let s = adjoint_solve(&jac, &payoff_gradient(inst, lambda, a))?;
    let t = adjoint_solve(&jac, &payoff_gradient(inst, lambda, b))?;
    Ok(TransferSensitivity {
        a,
        b,
        d_u_a: s[b] - s[a],
        d_u_b: t[b] - t[a],
        q_a_vec: s.iter().copied().collect(),
        q_b_vec: t.iter().copied().collect(),
    })
}

fn payoffs_at_tau(inst: &ContestInstance, a: usize, b: usize, tau: f64) -> Result<(f64, f64)> {
    let mut budgets = inst.budgets().to_vec();
    budgets[a] -= tau;
    budgets[b] += tau;
    let lambda =
        costs_from_budgets(inst, &budgets, crate::equilibrium::DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let u = payoffs_from_costs(inst, &lambda);
    Ok((u[a], u[b]))
}

pub fn sweep_transfer(
    inst: &ContestInstance,
    a: usize,
    b: usize,
    steps: usize,
    tau_max: f64,
) -> Result<TransferCurve> {
    inst.check_player(a)?;
    inst.check_player(b)?;
    if a == b {
        return Err(Error::Index("donor and recipient must differ".into()));
    }
    let b_a = inst.budgets()[a];
    if !(tau_max > 0.0 && tau_max < b_a) {
        return Err(Error::Domain(format!("tau_max must lie in (0, B_a = {b_a}), got {tau_max}")));
    }
    if steps < 2 {
        return Err(Error::Domain(format!("steps must be >= 2, got {steps}")));
    }
    let grid: Vec<f64> = (0..steps)
        .map(|k| tau_max * k as f64 / (steps - 1) as f64)
        .collect();
    let mut u_a = Vec::with_capacity(steps);
    let mut u_b = Vec::with_capacity(steps);
    for &tau in &grid {
        let (ua, ub) = payoffs_at_tau(inst, a, b, tau).map_err(|e| annotate_tau(e, tau))?;
        u_a.push(ua);
        u_b.push(ub);
    }
    let baseline = (u_a[0], u_b[0]);
    let tol_a = 1e-10 * (1.0 + baseline.0.abs());
    let tol_b = 1e-10 * (1.0 + baseline.1.abs());
    let beneficial: Vec<bool> = (0..steps)
        .map(|k| k > 0 && u_a[k] - baseline.0 > tol_a && u_b[k] - baseline.1 > tol_b)
        .collect();
    let gap = |tau: f64| -> Result<f64> {
        let (ua, ub) = payoffs_at_tau(inst, a, b, tau)?;
        Ok((ua - baseline.0 - tol_a).min(ub - baseline.1 - tol_b))
    };
    let refine = |mut lo: f64, mut hi: f64, want_positive_hi: bool| -> Result<f64> {
        // invariant: predicate differs at lo and hi
        let target = 1e-6 * b_a;
        while hi - lo > target {
            let mid = 0.5 * (lo + hi);
            let pos = gap(mid)? > 0.0;
            if pos == want_positive_hi {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let mut intervals = Vec::new();
    let mut k = 0;
    while k < steps {
        if beneficial[k] {
            let start = k;
            while k + 1 < steps && beneficial[k + 1] {
                k += 1;
            }
            let lo = if start == 0 { grid[0] } else { refine(grid[start - 1], grid[start], true)? };
            let hi = if k + 1 == steps { grid[k] } else { refine(grid[k], grid[k + 1], false)? };
            intervals.push((lo, hi));
        }
        k += 1;
    }
    Ok(TransferCurve { a, b, grid, u_a, u_b, baseline, intervals })
}

fn annotate_tau(e: Error, tau: f64) -> Error {
    match e {
        Error::Convergence { residual, iterations } => Error::SearchExhausted(format!(
            "equilibrium solve failed at tau = {tau} (residual {residual:.3e}, {iterations} iterations)"
        )),
        other => other,
    }
}

impl ThreeNodeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("b1", self.b1),
            ("b2", self.b2),
            ("b3", self.b3),
            ("v1", self.v1),
            ("v2", self.v2),
        ] {
            if !x.is_finite() || x <= 0.0 {
                return Err(Error::Domain(format!("{name} = {x} must be positive")));
            }
        }
        Ok(())
    }

    /// The induced 3-line instance 1 - 2 - 3 with tau moved from 1 to 3.
    pub fn instance(&self, tau: f64) -> Result<ContestInstance> {
        ContestInstance::new(
            vec![self.b1 - tau, self.b2, self.b3 + tau],
            vec![(0, 1, self.v1), (1, 2, self.v2)],
        )
    }
}

/// Both feasibility inequalities, with margins for diagnostics:
///   (B1+B2)^2/(B1 B3) > v1/v2 > B1 B3/(B2+B3)^2   and   B1 - B3 > 2 sqrt(v1/v2 B1 B3).
/// Comparisons are done on cross-multiplied products so integer-valued inputs
/// are decided exactly.
pub fn three_node_feasible(p: &ThreeNodeParams) -> Result<(bool, [f64; 3])> {
    p.validate()?;
    let r = p.v1 / p.v2;
    let m1 = (p.b1 + p.b2).powi(2) / (p.b1 * p.b3) - r;
    let m2 = r - p.b1 * p.b3 / (p.b2 + p.b3).powi(2);
    let m3 = (p.b1 - p.b3) - 2.0 * (r * p.b1 * p.b3).sqrt();
    let ok1 = (p.b1 + p.b2).powi(2) * p.v2 > p.v1 * p.b1 * p.b3;
    let ok2 = p.v1 * (p.b2 + p.b3).powi(2) > p.v2 * p.b1 * p.b3;
    let ok3 = p.b1 > p.b3 && (p.b1 - p.b3).powi(2) * p.v2 > 4.0 * p.v1 * p.b1 * p.b3;
    Ok((ok1 && ok2 && ok3, [m1, m2, m3]))
}

/// Closed forms for the 3-line after a transfer tau from player 1 to player 3:
/// with su = sqrt(v1 (B1-tau)), sw = sqrt(v2 (B3+tau)), T = B1+B2+B3:
///   x1* = ((B2+B3+tau) su - (B1-tau) sw) / (su+sw)
///   x2* = ((B1+B2-tau) sw - (B3+tau) su) / (su+sw)
///   U1* = su (su+sw) / T,   U3* = sw (su+sw) / T
/// tau_bound_i is the positive root of U_i(tau) = U_i(0):
///   tau_bound_1 = (B1-B3 - 2 sqrt(v1/v2 B1 B3)) / (1 + v1/v2)
///   tau_bound_3 = (B1-B3 + 2 sqrt(v2/v1 B1 B3)) / (1 + v2/v1)
pub fn three_node_closed_form(p: &ThreeNodeParams, tau: f64) -> Result<ThreeNodeEval> {
    p.validate()?;
    if !(0.0..p.b1).contains(&tau) {
        return Err(Error::Domain(format!("tau = {tau} must lie in [0, B1 = {})", p.b1)));
    }
    let su = (p.v1 * (p.b1 - tau)).sqrt();
    let sw = (p.v2 * (p.b3 + tau)).sqrt();
    let total = p.b1 + p.b2 + p.b3;
    let x1 = ((p.b2 + p.b3 + tau) * su - (p.b1 - tau) * sw) / (su + sw);
    let x2 = ((p.b1 + p.b2 - tau) * sw - (p.b3 + tau) * su) / (su + sw);
    if x1 <= 0.0 || x2 <= 0.0 {
        return Err(Error::Boundary(format!(
            "interior solution fails at tau = {tau}: x1 = {x1}, x2 = {x2}"
        )));
    }
    let r = p.v1 / p.v2;
    Ok(ThreeNodeEval {
        x1,
        x2,
        u1: su * (su + sw) / total,
        u3: sw * (su + sw) / total,
        tau_bound_1: ((p.b1 - p.b3) - 2.0 * (r * p.b1 * p.b3).sqrt()) / (1.0 + r),
        tau_bound_3: ((p.b1 - p.b3) + 2.0 * (p.b1 * p.b3 / r).sqrt()) / (1.0 + 1.0 / r),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CrossValidation {
    pub closed: ThreeNodeEval,
    pub solver_u1: f64,
    pub solver_u3: f64,
    pub solver_x1: f64,
    pub solver_x2: f64,
}

/// Check the closed form against the generic Newton path on the same instance.
pub fn cross_validate_three_node(
    p: &ThreeNodeParams,
    tau: f64,
    tol: f64,
) -> Result<CrossValidation> {
    let closed = three_node_closed_form(p, tau)?;
    let inst = p.instance(tau)?;
    let sol = crate::equilibrium::solve_equilibrium(&inst)?;
    // x1*, x2* are the middle player's allocations toward players 1 and 3
    let x1 = sol.allocations[1][&0];
    let x2 = sol.allocations[1][&2];
    let checks = [
        ("U1", closed.u1, sol.payoffs[0]),
        ("U3", closed.u3, sol.payoffs[2]),
        ("x1", closed.x1, x1),
        ("x2", closed.x2, x2),
    ];
    for (name, want, got) in checks {
        if ((want - got) / want).abs() > tol {
            return Err(Error::Mismatch(format!(
                "{name}: closed form {want:.12e} vs solver {got:.12e}"
            )));
        }
    }
    Ok(CrossValidation { closed, solver_u1: sol.payoffs[0], solver_u3: sol.payoffs[2], solver_x1: x1, solver_x2: x2 })
}
