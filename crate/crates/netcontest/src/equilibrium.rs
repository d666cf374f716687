//! Per-unit-cost parametrization of the networked Tullock contest.
//!
//! With marginal costs lambda the equilibrium is closed-form:
//!   x*_{i,j} = v_{i,j} lambda_j / (lambda_i + lambda_j)^2
//!   U_i*     = sum_j v_{i,j} lambda_j / (lambda_i + lambda_j)
//!   B_i      = sum_j v_{i,j} lambda_j / (lambda_i + lambda_j)^2
//! The budget map B(lambda) has a negative-definite Jacobian with antisymmetric
//! off-diagonal, so a damped Newton iteration inverts it from budgets.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{AllocationProfile, ContestInstance};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumSolution {
    pub lambda: Vec<f64>,
    pub payoffs: Vec<f64>,
    pub allocations: AllocationProfile,
    pub residual: f64,
}

/// Tullock winning rule; alpha(0,0) = 1/2 by the tie-break convention.
pub fn win_probability(x_own: f64, x_opp: f64) -> Result<f64> {
    if !x_own.is_finite() || !x_opp.is_finite() || x_own < 0.0 || x_opp < 0.0 {
        return Err(Error::Domain(format!(
            "win_probability needs finite nonnegative efforts, got ({x_own}, {x_opp})"
        )));
    }
    let s = x_own + x_opp;
    Ok(if s > 0.0 { x_own / s } else { 0.5 })
}

/// U_i(x) for an arbitrary (not necessarily equilibrium) allocation profile.
pub fn payoff(inst: &ContestInstance, profile: &AllocationProfile) -> Result<Vec<f64>> {
    if profile.len() != inst.n() {
        return Err(Error::Shape(format!(
            "profile has {} rows, instance has {} players",
            profile.len(),
            inst.n()
        )));
    }
    let mut u = vec![0.0; inst.n()];
    for i in 0..inst.n() {
        for &(j, v) in inst.neighbors(i) {
            let xi = *profile[i]
                .get(&j)
                .ok_or_else(|| Error::Shape(format!("profile[{i}] missing item {j}")))?;
            let xj = *profile[j]
                .get(&i)
                .ok_or_else(|| Error::Shape(format!("profile[{j}] missing item {i}")))?;
            u[i] += v * win_probability(xi, xj)?;
        }
        if profile[i].len() != inst.neighbors(i).len() {
            return Err(Error::Shape(format!("profile[{i}] keys do not match N_i")));
        }
    }
    Ok(u)
}

pub fn allocations_from_costs(inst: &ContestInstance, lambda: &[f64]) -> AllocationProfile {
    let mut x: AllocationProfile = vec![BTreeMap::new(); inst.n()];
    for &(i, j, v) in inst.edges() {
        let s2 = (lambda[i] + lambda[j]).powi(2);
        x[i].insert(j, v * lambda[j] / s2);
        x[j].insert(i, v * lambda[i] / s2);
    }
    x
}

pub fn payoffs_from_costs(inst: &ContestInstance, lambda: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; inst.n()];
    for &(i, j, v) in inst.edges() {
        let s = lambda[i] + lambda[j];
        u[i] += v * lambda[j] / s;
        u[j] += v * lambda[i] / s;
    }
    u
}

pub fn budgets_from_costs(inst: &ContestInstance, lambda: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; inst.n()];
    for &(i, j, v) in inst.edges() {
        let s2 = (lambda[i] + lambda[j]).powi(2);
        b[i] += v * lambda[j] / s2;
        b[j] += v * lambda[i] / s2;
    }
    b
}

/// J[i][k] = dB_i/dlambda_k: diagonal -2 sum_j v lambda_j/(l_i+l_j)^3,
/// off-diagonal v (lambda_i - lambda_j)/(l_i+l_j)^3 on edges, zero elsewhere.
pub fn budget_jacobian(inst: &ContestInstance, lambda: &[f64]) -> DMatrix<f64> {
    let n = inst.n();
    let mut jac = DMatrix::zeros(n, n);
    for &(i, j, v) in inst.edges() {
        let s3 = (lambda[i] + lambda[j]).powi(3);
        jac[(i, i)] += -2.0 * v * lambda[j] / s3;
        jac[(j, j)] += -2.0 * v * lambda[i] / s3;
        jac[(i, j)] += v * (lambda[i] - lambda[j]) / s3;
        jac[(j, i)] += v * (lambda[j] - lambda[i]) / s3;
    }
    jac
}

/// Analytic gradient of U_i* with respect to lambda.
pub fn payoff_gradient(inst: &ContestInstance, lambda: &[f64], i: usize) -> DVector<f64> {
    let mut g = DVector::zeros(inst.n());
    for &(j, v) in inst.neighbors(i) {
        let s2 = (lambda[i] + lambda[j]).powi(2);
        g[i] += -v * lambda[j] / s2;
        g[j] = v * lambda[i] / s2;
    }
    g
}

fn residual_metric(b_of_lam: &[f64], budgets: &[f64]) -> f64 {
    b_of_lam
        .iter()
        .zip(budgets)
        .map(|(x, b)| ((x - b) / b).abs())
        .fold(0.0, f64::max)
}

/// Invert the budget map by damped Newton. Initial guess
/// lambda_i = (sum_j v_{i,j}) / (4 B_i) is exact on uniform-lambda instances.
pub fn costs_from_budgets(
    inst: &ContestInstance,
    budgets: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = inst.n();
    if budgets.len() != n {
        return Err(Error::Shape(format!("budgets length {} != n {}", budgets.len(), n)));
    }
    if budgets.iter().any(|b| !b.is_finite() || *b <= 0.0) {
        return Err(Error::Domain("budgets must be strictly positive".into()));
    }
    let mut lambda: Vec<f64> = (0..n)
        .map(|i| inst.neighbors(i).iter().map(|&(_, v)| v).sum::<f64>() / (4.0 * budgets[i]))
        .collect();
    let mut best = f64::INFINITY;
    for it in 0..max_iter {
        let r: Vec<f64> = budgets_from_costs(inst, &lambda)
            .iter()
            .zip(budgets)
            .map(|(x, b)| x - b)
            .collect();
        let metric = residual_metric(&budgets_from_costs(inst, &lambda), budgets);
        best = best.min(metric);
        if metric <= tol {
            return Ok(lambda);
        }
        let jac = budget_jacobian(inst, &lambda);
        let rhs = -DVector::from_column_slice(&r);
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("budget Jacobian LU solve failed".into()))?;
        let rnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut step = 1.0;
        for _ in 0..60 {
            let cand: Vec<f64> = lambda
                .iter()
                .zip(delta.iter())
                .map(|(l, d)| l + step * d)
                .collect();
            if cand.iter().all(|l| *l > 0.0) {
                let r2 = budgets_from_costs(inst, &cand);
                let r2norm = r2
                    .iter()
                    .zip(budgets)
                    .map(|(x, b)| (x - b) * (x - b))
                    .sum::<f64>()
                    .sqrt();
                if r2norm < rnorm {
                    break;
                }
            }
            step *= 0.5;
        }
        for (l, d) in lambda.iter_mut().zip(delta.iter()) {
            *l += step * d;
        }
        let _ = it;
    }
    let metric = residual_metric(&budgets_from_costs(inst, &lambda), budgets);
    if metric <= tol {
        return Ok(lambda);
    }
    // the lambda-space iteration can stall when steps keep clipping at the
    // positivity boundary; retry in log space where positivity is structural,
    // then by continuation along a geometric budget path
    let start: Vec<f64> = (0..n)
        .map(|i| {
            (inst.neighbors(i).iter().map(|&(_, v)| v).sum::<f64>() / (4.0 * budgets[i])).ln()
        })
        .collect();
    if let Ok(lambda) = costs_log_newton(inst, budgets, tol, max_iter, start.clone()) {
        return Ok(lambda);
    }
    if let Ok(lambda) = costs_continuation(inst, budgets, tol, start.clone()) {
        return Ok(lambda);
    }
    // last resort: the deterministic inits can sit in the basin of a boundary
    // attractor even when an interior solution exists; perturbed restarts
    // land in the interior basin with good probability per draw
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e65_7463_6f6e_7465);
    for _ in 0..40 {
        let jittered: Vec<f64> = start.iter().map(|t| t + rng.gen_range(-6.0..6.0)).collect();
        if let Ok(lambda) = costs_log_newton(inst, budgets, tol, max_iter, jittered) {
            return Ok(lambda);
        }
    }
    Err(Error::Convergence { residual: best.min(metric), iterations: max_iter })
}

/// Homotopy fallback: B(0) = B(exp(start)) is solved by construction; walk
/// ln-interpolated budgets toward the target, warm-starting each leg.
fn costs_continuation(
    inst: &ContestInstance,
    budgets: &[f64],
    tol: f64,
    start: Vec<f64>,
) -> Result<Vec<f64>> {
    let lam0: Vec<f64> = start.iter().map(|t| t.exp()).collect();
    let b0 = budgets_from_costs(inst, &lam0);
    let mut theta = start;
    let mut t = 0.0f64;
    let mut dt = 0.25f64;
    let mut legs = 0usize;
    while t < 1.0 && legs < 400 {
        legs += 1;
        let tn = (t + dt).min(1.0);
        let target: Vec<f64> = b0
            .iter()
            .zip(budgets)
            .map(|(s, b)| (s.ln() * (1.0 - tn) + b.ln() * tn).exp())
            .collect();
        let leg_tol = if tn < 1.0 { 1e-9f64.max(tol) } else { tol };
        match costs_log_newton(inst, &target, leg_tol, 80, theta.clone()) {
            Ok(lam) => {
                theta = lam.iter().map(|l| l.ln()).collect();
                t = tn;
                dt = (dt * 1.5).min(0.25);
            }
            Err(_) => {
                dt *= 0.5;
                if dt < 1e-6 {
                    break;
                }
            }
        }
    }
    if t >= 1.0 {
        return Ok(theta.iter().map(|t| t.exp()).collect());
    }
    let lam: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    let metric = residual_metric(&budgets_from_costs(inst, &lam), budgets);
    Err(Error::Convergence { residual: metric, iterations: legs })
}

/// Damped Newton on theta = ln(lambda): dB/dtheta_j = J[:, j] lambda_j.
fn costs_log_newton(
    inst: &ContestInstance,
    budgets: &[f64],
    tol: f64,
    max_iter: usize,
    start: Vec<f64>,
) -> Result<Vec<f64>> {
    let n = inst.n();
    let mut theta = start;
    let rel = |theta: &[f64]| -> (Vec<f64>, f64) {
        let lam: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let got = budgets_from_costs(inst, &lam);
        let r: Vec<f64> = got.iter().zip(budgets).map(|(x, b)| (x - b) / b).collect();
        let m = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        (r, m)
    };
    let (mut r, mut metric) = rel(&theta);
    let mut best = metric;
    for _ in 0..max_iter {
        if metric <= tol {
            return Ok(theta.iter().map(|t| t.exp()).collect());
        }
        let lam: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let mut jac = budget_jacobian(inst, &lam);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] *= lam[j] / budgets[i];
            }
        }
        let rhs = -DVector::from_column_slice(&r);
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("log-space budget Jacobian LU failed".into()))?;
        let cap = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let mut step = if cap > 10.0 { 10.0 / cap } else { 1.0 };
        let mut advanced = false;
        for _ in 0..60 {
            let cand: Vec<f64> =
                theta.iter().zip(delta.iter()).map(|(t, d)| t + step * d).collect();
            let (rc, mc) = rel(&cand);
            if mc.is_finite() && mc < metric {
                theta = cand;
                r = rc;
                metric = mc;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        best = best.min(metric);
        if !advanced {
            break;
        }
    }
    if metric <= tol {
        return Ok(theta.iter().map(|t| t.exp()).collect());
    }
    Err(Error::Convergence { residual: best, iterations: max_iter })
}

pub fn solve_equilibrium(inst: &ContestInstance) -> Result<EquilibriumSolution> {
    solve_equilibrium_with(inst, inst.budgets())
}

/// Same as [`solve_equilibrium`] but with budgets overridden (transfer sweeps).
pub fn solve_equilibrium_with(inst: &ContestInstance, budgets: &[f64]) -> Result<EquilibriumSolution> {
    let lambda = costs_from_budgets(inst, budgets, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let residual = residual_metric(&budgets_from_costs(inst, &lambda), budgets);
    Ok(EquilibriumSolution {
        payoffs: payoffs_from_costs(inst, &lambda),
        allocations: allocations_from_costs(inst, &lambda),
        residual,
        lambda,
    })
}

/// Independent best-response oracle: water-filling on player i's multiplier.
/// x_{i,j}(mu) = max(0, sqrt(v_{i,j} x_{j,i} / mu) - x_{j,i}) is monotone
/// decreasing in mu, so bisection on the budget constraint converges.
pub fn best_response_oracle(
    inst: &ContestInstance,
    opponent: &AllocationProfile,
    i: usize,
    tol: f64,
) -> Result<BTreeMap<usize, f64>> {
    inst.check_player(i)?;
    let budget = inst.budgets()[i];
    let items: Vec<(usize, f64, f64)> = inst
        .neighbors(i)
        .iter()
        .map(|&(j, v)| {
            let xj = opponent[j]
                .get(&i)
                .copied()
                .ok_or_else(|| Error::Shape(format!("opponent profile missing x[{j}][{i}]")))?;
            Ok((j, v, xj))
        })
        .collect::<Result<_>>()?;
    let spend = |mu: f64| -> f64 {
        items
            .iter()
            .map(|&(_, v, xj)| ((v * xj / mu).sqrt() - xj).max(0.0))
            .sum()
    };
    // Bracket: spend is 0 for mu >= max v/xj and grows without bound as mu -> 0.
    let mut hi = items
        .iter()
        .filter(|&&(_, _, xj)| xj > 0.0)
        .map(|&(_, v, xj)| v / xj)
        .fold(1.0, f64::max);
    let mut lo = hi;
    for _ in 0..200 {
        if spend(lo) > budget {
            break;
        }
        lo *= 0.5;
    }
    if spend(lo) <= budget {
        // all opponents at zero: nothing contested, drop budget on first item
        let mut x = BTreeMap::new();
        for (k, &(j, _, _)) in items.iter().enumerate() {
            x.insert(j, if k == 0 { budget } else { 0.0 });
        }
        return Ok(x);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spend(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= tol * lo {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut x: BTreeMap<usize, f64> = items
        .iter()
        .map(|&(j, v, xj)| (j, ((v * xj / mu).sqrt() - xj).max(0.0)))
        .collect();
    // distribute the bisection slack proportionally so the budget binds
    let total: f64 = x.values().sum();
    if total > 0.0 {
        for val in x.values_mut() {
            *val *= budget / total;
        }
    }
    Ok(x)
}
