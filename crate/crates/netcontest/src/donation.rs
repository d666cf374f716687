//! Donation profiles, the analytic payoff gradient over donation fractions,
//! and discrete replicator dynamics on the per-donor simplex.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::equilibrium::{budget_jacobian, costs_from_budgets, payoff_gradient, payoffs_from_costs};
use crate::error::{Error, Result};
use crate::instance::ContestInstance;
use crate::transfer::adjoint_solve;

/// Row-stochastic donation fractions. Each row lives on the donee set
/// D_i = {i} union {j : arc (i,j)}; players without a row keep everything.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DonationProfile {
    pub rows: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl DonationProfile {
    /// Everyone keeps their own budget.
    pub fn identity() -> Self {
        DonationProfile { rows: BTreeMap::new() }
    }

    /// Uniform over D_i for each listed donor, identity elsewhere.
    pub fn uniform(inst: &ContestInstance, donors: &[usize]) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for &i in donors {
            inst.check_player(i)?;
            let d = donee_set(inst, i);
            let share = 1.0 / d.len() as f64;
            rows.insert(i, d.into_iter().map(|j| (j, share)).collect());
        }
        Ok(DonationProfile { rows })
    }

    pub fn validate(&self, inst: &ContestInstance) -> Result<()> {
        for (&i, row) in &self.rows {
            inst.check_player(i)?;
            let d = donee_set(inst, i);
            let mut sum = 0.0;
            for &(j, bij) in row {
                if !d.contains(&j) {
                    return Err(Error::Validation(format!("b[{i}][{j}] set but {j} not in D_{i}")));
                }
                if !(bij >= 0.0) {
                    return Err(Error::Validation(format!("b[{i}][{j}] = {bij} negative")));
                }
                sum += bij;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(())
    }

    pub fn fraction(&self, i: usize, j: usize) -> f64 {
        match self.rows.get(&i) {
            Some(row) => row.iter().find(|&&(k, _)| k == j).map_or(0.0, |&(_, b)| b),
            None => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// D_i = {i} plus the arc targets of i, sorted.
pub fn donee_set(inst: &ContestInstance, i: usize) -> Vec<usize> {
    let mut d = vec![i];
    for &(from, to) in inst.donation_arcs() {
        if from == i {
            d.push(to);
        }
    }
    d.sort_unstable();
    d.dedup();
    d
}

/// B~_j = sum_i b_{i,j} B_i over donors (including own retained share).
pub fn effective_budgets(inst: &ContestInstance, profile: &DonationProfile) -> Result<Vec<f64>> {
    profile.validate(inst)?;
    let n = inst.n();
    let mut eff = vec![0.0; n];
    for i in 0..n {
        match profile.rows.get(&i) {
            Some(row) => {
                for &(j, bij) in row {
                    eff[j] += bij * inst.budgets()[i];
                }
            }
            None => eff[i] += inst.budgets()[i],
        }
    }
    let floor = 1e-12 * inst.budgets().iter().fold(0.0f64, |a, &b| a.max(b));
    for (j, &b) in eff.iter().enumerate() {
        if b <= floor {
            return Err(Error::DegenerateBudget(format!(
                "effective budget of player {j} is {b:.3e}"
            )));
        }
    }
    Ok(eff)
}

/// Eq-style gradient of U_i* in the donation fractions of row i:
/// f_{i,j} = B_i w_j where J^T w = grad_lambda U_i* at lambda(B~).
pub fn donation_gradient(
    inst: &ContestInstance,
    profile: &DonationProfile,
    i: usize,
) -> Result<Vec<(usize, f64)>> {
    inst.check_player(i)?;
    let eff = effective_budgets(inst, profile)?;
    let lambda = costs_from_budgets(
        inst,
        &eff,
        crate::equilibrium::DEFAULT_TOL,
        crate::equilibrium::DEFAULT_MAX_ITER,
    )?;
    let jac = budget_jacobian(inst, &lambda);
    let w = adjoint_solve(&jac, &payoff_gradient(inst, &lambda, i))?;
    Ok(donee_set(inst, i)
        .into_iter()
        .map(|j| (j, inst.budgets()[i] * w[j]))
        .collect())
}

/// Multiplicative replicator update on the donor rows; rows stay exactly on
/// the simplex since the update is self-normalizing up to rounding.
pub fn replicator_step(
    profile: &DonationProfile,
    gradients: &BTreeMap<usize, Vec<(usize, f64)>>,
    beta: f64,
) -> Result<DonationProfile> {
    let mut rows = profile.rows.clone();
    for (i, grad) in gradients {
        let Some(row) = rows.get_mut(i) else {
            return Err(Error::Shape(format!("gradient for player {i} without a profile row")));
        };
        let lookup: BTreeMap<usize, f64> = grad.iter().copied().collect();
        let mut mean = 0.0;
        for &(j, bij) in row.iter() {
            let fij = *lookup
                .get(&j)
                .ok_or_else(|| Error::Shape(format!("gradient row {i} missing donee {j}")))?;
            if bij > 0.0 && beta + fij <= 0.0 {
                let min_beta = grad
                    .iter()
                    .map(|&(_, f)| -f)
                    .fold(f64::NEG_INFINITY, f64::max);
                return Err(Error::BetaTooSmall(min_beta));
            }
            mean += bij * fij;
        }
        let mut total = 0.0;
        for (j, bij) in row.iter_mut() {
            *bij *= (beta + lookup[j]) / (beta + mean);
            total += *bij;
        }
        for (_, bij) in row.iter_mut() {
            *bij /= total;
        }
    }
    Ok(DonationProfile { rows })
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub enum Termination {
    GradientFlat,
    MaxIters,
    SimplexCorner,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub rows: BTreeMap<usize, Vec<(usize, f64)>>,
    pub payoffs: Vec<f64>,
    pub gradients: BTreeMap<usize, Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizerTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    pub profile: DonationProfile,
}

pub fn default_flat_tol(inst: &ContestInstance) -> f64 {
    1e-8 * (1.0 + inst.edges().iter().map(|&(_, _, v)| v).sum::<f64>())
}

/// Gradient ascent by replicator dynamics over the listed donors' rows
/// (Jacobi-style simultaneous update). beta = None uses the adaptive
/// 1 + max |f| each iteration.
pub fn optimize_donations(
    inst: &ContestInstance,
    donors: &[usize],
    beta: Option<f64>,
    max_iters: usize,
    flat_tol: Option<f64>,
) -> Result<OptimizerTrace> {
    if donors.is_empty() {
        return Err(Error::Validation("donors must be nonempty".into()));
    }
    let flat_tol = flat_tol.unwrap_or_else(|| default_flat_tol(inst));
    let mut profile = DonationProfile::uniform(inst, donors)?;
    let mut records = Vec::new();
    for iter in 0..max_iters {
        let eff = effective_budgets(inst, &profile)?;
        let lambda = costs_from_budgets(
            inst,
            &eff,
            crate::equilibrium::DEFAULT_TOL,
            crate::equilibrium::DEFAULT_MAX_ITER,
        )?;
        let payoffs = payoffs_from_costs(inst, &lambda);
        let mut gradients = BTreeMap::new();
        for &i in donors {
            gradients.insert(i, donation_gradient(inst, &profile, i)?);
        }
        records.push(TraceRecord {
            iter,
            rows: profile.rows.clone(),
            payoffs,
            gradients: gradients.clone(),
        });
        // dispersion over support: max f - weighted mean, per donor row
        let mut dispersion = 0.0f64;
        let mut corner = true;
        for &i in donors {
            let row = &profile.rows[&i];
            let lookup: BTreeMap<usize, f64> = gradients[&i].iter().copied().collect();
            let mean: f64 = row.iter().map(|&(j, b)| b * lookup[&j]).sum();
            for &(j, b) in row {
                if b > 1e-12 {
                    dispersion = dispersion.max(lookup[&j] - mean);
                }
                if b > 1e-12 && b < 1.0 - 1e-12 {
                    corner = false;
                }
            }
        }
        if dispersion < flat_tol {
            let termination =
                if corner { Termination::SimplexCorner } else { Termination::GradientFlat };
            return Ok(OptimizerTrace { records, termination, profile });
        }
        let step_beta = beta.unwrap_or_else(|| {
            1.0 + gradients
                .values()
                .flat_map(|g| g.iter().map(|&(_, f)| f.abs()))
                .fold(0.0, f64::max)
        });
        profile = replicator_step(&profile, &gradients, step_beta)?;
    }
    Ok(OptimizerTrace { records, termination: Termination::MaxIters, profile })
}
