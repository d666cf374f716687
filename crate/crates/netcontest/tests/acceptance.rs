//! Acceptance gate: one test (and one pass/fail line) per criterion.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netcontest::builder::{base_line_instances, construct_for_graph, Topology};
use netcontest::donation::{
    donation_gradient, effective_budgets, optimize_donations, DonationProfile,
};
use netcontest::equilibrium::{
    allocations_from_costs, budget_jacobian, budgets_from_costs, costs_from_budgets,
    payoffs_from_costs, solve_equilibrium, solve_equilibrium_with,
};
use netcontest::instance::ContestInstance;
use netcontest::transfer::{
    sweep_transfer, three_node_closed_form, three_node_feasible, transfer_derivative,
    ThreeNodeParams,
};

use common::{log_uniform, random_instance};

fn three_line() -> ContestInstance {
    ContestInstance::new(vec![6.0, 6.0, 1.0], vec![(0, 1, 2.0), (1, 2, 10.0)]).unwrap()
}

#[test]
fn criterion_1_example_regression() {
    let start = Instant::now();
    let inst = three_line();
    let sol = solve_equilibrium(&inst).unwrap();
    let shifted = solve_equilibrium_with(&inst, &[5.0, 6.0, 2.0]).unwrap();
    let elapsed = start.elapsed();
    assert!((sol.payoffs[0] - 1.7657).abs() < 5e-4);
    assert!((sol.payoffs[2] - 1.6119).abs() < 5e-4);
    assert!((shifted.payoffs[0] - 1.8571).abs() < 5e-4);
    assert!((shifted.payoffs[2] - 2.6263).abs() < 5e-4);
    assert!(elapsed.as_millis() < 100, "took {elapsed:?}");
    println!("criterion 1 (example regression): PASS");
}

#[test]
fn criterion_2_closed_form_cross_check() {
    let start = Instant::now();
    for gi in 0..20 {
        let b1 = 2.0 + 8.0 * gi as f64 / 19.0;
        let p = ThreeNodeParams { b1, b2: 6.0, b3: 1.0, v1: 2.0, v2: 10.0 };
        let bound = match three_node_closed_form(&p, 0.0) {
            Ok(c) => c.tau_bound_1,
            // no interior equilibrium at tau = 0 for this B1; nothing to check
            Err(netcontest::Error::Boundary(_)) => continue,
            Err(e) => panic!("unexpected error: {e}"),
        };
        for gj in 0..20 {
            // grid over [0, 0.8 bound); collapses to tau = 0 when no gain is possible
            let tau = if bound > 0.0 { 0.8 * bound * gj as f64 / 20.0 } else { 0.0 };
            let closed = match three_node_closed_form(&p, tau) {
                Ok(c) => c,
                // interior solution breaks down; nothing to cross-check there
                Err(netcontest::Error::Boundary(_)) => continue,
                Err(e) => panic!("unexpected error: {e}"),
            };
            let inst = p.instance(tau).unwrap();
            let sol = solve_equilibrium(&inst).unwrap();
            let x1 = sol.allocations[1][&0];
            let x2 = sol.allocations[1][&2];
            for (want, got) in [
                (closed.x1, x1),
                (closed.x2, x2),
                (closed.u1, sol.payoffs[0]),
                (closed.u3, sol.payoffs[2]),
            ] {
                assert!(
                    ((want - got) / want).abs() < 1e-8,
                    "B1 = {b1}, tau = {tau}: {want} vs {got}"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("criterion 2 (closed-form cross-check): PASS");
}

#[test]
fn criterion_3_inequality_reproduction() {
    let p = ThreeNodeParams { b1: 6.0, b2: 6.0, b3: 1.0, v1: 2.0, v2: 10.0 };
    let (feasible, margins) = three_node_feasible(&p).unwrap();
    assert!(feasible);
    // 24 > 1/5 > 6/49 and 5 > 2 sqrt(6/5): margins are the chain gaps
    assert!((margins[0] - (24.0 - 0.2)).abs() < 1e-12);
    assert!((margins[1] - (0.2 - 6.0 / 49.0)).abs() < 1e-12);
    assert!((margins[2] - (5.0 - 2.0 * (1.2f64).sqrt())).abs() < 1e-12);
    println!("criterion 3 (inequality reproduction): PASS");
}

#[test]
fn criterion_4_derivative_vs_sweep_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut agree = 0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 2, 8);
        let n = inst.n();
        let a = rng.gen_range(0..n);
        let b = loop {
            let b = rng.gen_range(0..n);
            if b != a {
                break b;
            }
        };
        let Ok(s) = transfer_derivative(&inst, a, b, 1e-12) else { continue };
        let h = 1e-5 * inst.budgets()[a];
        let mut shifted = inst.budgets().to_vec();
        shifted[a] -= h;
        shifted[b] += h;
        let u0 = solve_equilibrium(&inst).unwrap().payoffs;
        let uh = solve_equilibrium_with(&inst, &shifted).unwrap().payoffs;
        let slope_a = (uh[a] - u0[a]) / h;
        let slope_b = (uh[b] - u0[b]) / h;
        let mut ok = true;
        if slope_a.abs() > 1e-6 {
            ok &= slope_a.signum() == s.d_u_a.signum();
        }
        if slope_b.abs() > 1e-6 {
            ok &= slope_b.signum() == s.d_u_b.signum();
        }
        if ok {
            agree += 1;
        }
    }
    assert!(agree >= 99, "only {agree}/100 agreed");
    println!("criterion 4 (derivative vs sweep slope): PASS ({agree}/100)");
}

#[test]
fn criterion_5_lonely_donor_falsification() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for case in 0..200 {
        // random connected core, then a fresh leaf donor hanging off node b
        let core = random_instance(&mut rng, 2, 6);
        let n = core.n();
        let b = rng.gen_range(0..n);
        let mut edges = core.edges().to_vec();
        edges.push((b, n, log_uniform(&mut rng, 0.1, 10.0)));
        let lambda: Vec<f64> = (0..=n).map(|_| log_uniform(&mut rng, 0.1, 10.0)).collect();
        let shell = ContestInstance::new(vec![1.0; n + 1], edges.clone()).unwrap();
        let budgets = budgets_from_costs(&shell, &lambda);
        let inst = ContestInstance::new(budgets, edges).unwrap();
        let a = n; // the leaf: N_a = {b}
        // large transfers can leave the realizable-budget domain; shrink the
        // sweep range until the whole grid solves
        let mut tau_max = 0.9 * inst.budgets()[a];
        let curve = loop {
            match sweep_transfer(&inst, a, b, 400, tau_max) {
                Ok(c) => break c,
                Err(netcontest::Error::SearchExhausted(_)) => tau_max *= 0.5,
                Err(e) => panic!("case {case}: {e}"),
            }
        };
        assert!(
            curve.intervals.is_empty(),
            "case {case}: beneficial interval {:?} for a lonely donor",
            curve.intervals
        );
    }
    println!("criterion 5 (lonely-donor falsification): PASS (200/200 empty)");
}

fn assert_certified_with_sweep(inst: &ContestInstance, a: usize, b: usize, what: &str) {
    let cert = inst.certificate.clone().expect("constructed instance carries a certificate");
    assert_eq!((cert.donor, cert.recipient), (a, b));
    assert!(cert.d_u_donor > 0.0 && cert.d_u_recipient > 0.0, "{what}: certificate not positive");
    // independent re-verification: the sweep must expose a beneficial interval.
    // The window can be tiny next to B_a, so zoom in until the grid resolves it.
    let mut tau_max = 0.5 * inst.budgets()[a];
    for _ in 0..60 {
        match sweep_transfer(inst, a, b, 160, tau_max) {
            Ok(curve) if !curve.intervals.is_empty() => return,
            Ok(_) | Err(netcontest::Error::SearchExhausted(_)) => tau_max *= 0.5,
            Err(e) => panic!("{what}: {e}"),
        }
    }
    panic!("{what}: sweep found no beneficial interval at any resolution");
}

#[test]
fn criterion_6_constructive_suite() {
    let start = Instant::now();
    for n in 3..=9 {
        let topo = Topology::new(n, (0..n - 1).map(|k| (k, k + 1)).collect()).unwrap();
        let inst = construct_for_graph(&topo, 0, n - 1, 0).unwrap();
        assert_certified_with_sweep(&inst, 0, n - 1, &format!("{n}-line"));
    }
    for n in 3..=8 {
        let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|k| (k, k + 1)).collect();
        edges.push((0, n - 1));
        let topo = Topology::new(n, edges).unwrap();
        let inst = construct_for_graph(&topo, 0, n - 1, 0).unwrap();
        assert_certified_with_sweep(&inst, 0, n - 1, &format!("{n}-cycle"));
    }
    // 6-node random connected graph, (a,b) = (0,5) nonadjacent
    let topo = Topology::new(6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4), (2, 5)])
        .unwrap();
    let inst = construct_for_graph(&topo, 0, 5, 0).unwrap();
    assert_certified_with_sweep(&inst, 0, 5, "6-node nonadjacent");
    // 6-node 2-connected graph with (a,b) = (0,5) adjacent
    let topo = Topology::new(
        6,
        vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)],
    )
    .unwrap();
    let inst = construct_for_graph(&topo, 0, 5, 0).unwrap();
    assert_certified_with_sweep(&inst, 0, 5, "6-node adjacent 2-connected");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("criterion 6 (constructive suite): PASS in {elapsed:?}");
}

#[test]
fn criterion_7_gradient_and_jacobian_acceptance() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    // analytic donation gradient vs simplex finite differences
    let mut checked = 0;
    while checked < 50 {
        let base = random_instance(&mut rng, 3, 8);
        let n = base.n();
        let i = rng.gen_range(0..n);
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let keep = rng.gen_range(1..=others.len().min(3));
        others.truncate(keep);
        let arcs: Vec<(usize, usize)> = others.iter().map(|&j| (i, j)).collect();
        let inst = ContestInstance::with_arcs(
            base.budgets().to_vec(),
            base.edges().to_vec(),
            arcs,
        )
        .unwrap();
        // random interior row over D_i
        let mut row: Vec<(usize, f64)> = std::iter::once(i)
            .chain(others.iter().copied())
            .map(|j| (j, rng.gen_range(0.2..1.0)))
            .collect();
        let total: f64 = row.iter().map(|&(_, b)| b).sum();
        for (_, b) in &mut row {
            *b /= total;
        }
        row.sort_by_key(|&(j, _)| j);
        let mut profile = DonationProfile::identity();
        profile.rows.insert(i, row.clone());
        let Ok(grad) = donation_gradient(&inst, &profile, i) else { continue };
        let grad: BTreeMap<usize, f64> = grad.into_iter().collect();
        let payoff_of = |p: &DonationProfile| -> Option<f64> {
            let eff = effective_budgets(&inst, p).ok()?;
            let lam = costs_from_budgets(&inst, &eff, 1e-13, 200).ok()?;
            Some(payoffs_from_costs(&inst, &lam)[i])
        };
        let mut all_ok = true;
        for &j in &others {
            let h = 1e-6;
            let perturb = |delta: f64| -> DonationProfile {
                let mut p = profile.clone();
                let r = p.rows.get_mut(&i).unwrap();
                for (k, b) in r.iter_mut() {
                    if *k == j {
                        *b += delta;
                    } else if *k == i {
                        *b -= delta;
                    }
                }
                p
            };
            let (Some(up), Some(um)) = (payoff_of(&perturb(h)), payoff_of(&perturb(-h))) else {
                all_ok = false;
                break;
            };
            let fd = (up - um) / (2.0 * h);
            let analytic = grad[&j] - grad[&i];
            if fd.abs() > 1e-8 {
                assert!(
                    ((analytic - fd) / fd).abs() < 1e-4,
                    "gradient mismatch: {analytic} vs {fd}"
                );
            }
        }
        if all_ok {
            checked += 1;
        }
    }
    // budget Jacobian vs central finite differences
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 2, 8);
        let n = inst.n();
        let lambda: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 0.1, 10.0)).collect();
        let jac = budget_jacobian(&inst, &lambda);
        for k in 0..n {
            let h = 1e-6 * lambda[k];
            let mut lp = lambda.clone();
            let mut lm = lambda.clone();
            lp[k] += h;
            lm[k] -= h;
            let bp = budgets_from_costs(&inst, &lp);
            let bm = budgets_from_costs(&inst, &lm);
            for r in 0..n {
                let fd = (bp[r] - bm[r]) / (2.0 * h);
                if fd.abs() > 1e-9 {
                    assert!(
                        ((jac[(r, k)] - fd) / fd).abs() < 1e-5,
                        "J[{r}][{k}] = {} vs fd {fd}",
                        jac[(r, k)]
                    );
                }
            }
        }
    }
    println!("criterion 7 (gradient/Jacobian acceptance): PASS (50 + 50 cases)");
}

#[test]
fn criterion_8_optimizer_qualitative() {
    let (_, four) = base_line_instances().unwrap();
    let u0 = solve_equilibrium(&four).unwrap().payoffs;

    // D_1 = {1, 4} (players 0 and 3 zero-indexed): keep-or-give-to-the-far-end
    let restricted = ContestInstance::with_arcs(
        four.budgets().to_vec(),
        four.edges().to_vec(),
        vec![(0, 3)],
    )
    .unwrap();
    let trace = optimize_donations(&restricted, &[0], None, 50_000, None).unwrap();
    let row: BTreeMap<usize, f64> = trace.profile.rows[&0].iter().copied().collect();
    assert!(
        row[&3] > 1e-6 && row[&3] < 1.0 - 1e-6,
        "expected interior b_{{1,4}}, got {}",
        row[&3]
    );
    let u_restricted = trace.records.last().unwrap().payoffs.clone();
    assert!(u_restricted[0] > u0[0], "donor payoff must strictly improve");
    assert!(u_restricted[3] > u0[3], "donee payoff must strictly improve");

    // D_1 = all players: widening the donee set weakly improves the donor
    let wide = ContestInstance::with_arcs(
        four.budgets().to_vec(),
        four.edges().to_vec(),
        vec![(0, 1), (0, 2), (0, 3)],
    )
    .unwrap();
    let trace_wide = optimize_donations(&wide, &[0], None, 50_000, None).unwrap();
    let u_wide = trace_wide.records.last().unwrap().payoffs.clone();
    assert!(
        u_wide[0] >= u_restricted[0] - 1e-9,
        "wide {} < restricted {}",
        u_wide[0],
        u_restricted[0]
    );
    println!(
        "criterion 8 (optimizer qualitative): PASS (interior b = {:.4}, donor {:.6} -> {:.6})",
        row[&3], u0[0], u_restricted[0]
    );
}

#[test]
fn criterion_9_conservation_and_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    for case in 0..500 {
        let inst = random_instance(&mut rng, 2, 12);
        let sum_v: f64 = inst.edges().iter().map(|&(_, _, v)| v).sum();
        let lambda = costs_from_budgets(&inst, inst.budgets(), 1e-12, 200).unwrap();
        // payoff conservation
        let total: f64 = payoffs_from_costs(&inst, &lambda).iter().sum();
        assert!(((total - sum_v) / sum_v).abs() < 1e-10, "case {case}: conservation");
        // budget round-trip within 10 tol
        let back = budgets_from_costs(&inst, &lambda);
        for (x, b) in back.iter().zip(inst.budgets()) {
            assert!(((x - b) / b).abs() <= 1e-11, "case {case}: round-trip");
        }
        // scale covariances
        let c = log_uniform(&mut rng, 0.3, 3.0);
        let scaled_v = ContestInstance::new(
            inst.budgets().to_vec(),
            inst.edges().iter().map(|&(i, j, v)| (i, j, c * v)).collect(),
        )
        .unwrap();
        let lam_v = costs_from_budgets(&scaled_v, scaled_v.budgets(), 1e-12, 200).unwrap();
        let x0 = allocations_from_costs(&inst, &lambda);
        let xv = allocations_from_costs(&scaled_v, &lam_v);
        let u0 = payoffs_from_costs(&inst, &lambda);
        let uv = payoffs_from_costs(&scaled_v, &lam_v);
        for i in 0..inst.n() {
            assert!(((lam_v[i] - c * lambda[i]) / (c * lambda[i])).abs() < 1e-8);
            assert!(((uv[i] - c * u0[i]) / (c * u0[i])).abs() < 1e-8);
            for (j, x) in &x0[i] {
                assert!(((xv[i][j] - x) / x).abs() < 1e-8, "case {case}: x under v-scaling");
            }
        }
        let scaled_b = ContestInstance::new(
            inst.budgets().iter().map(|b| c * b).collect(),
            inst.edges().to_vec(),
        )
        .unwrap();
        let lam_b = costs_from_budgets(&scaled_b, scaled_b.budgets(), 1e-12, 200).unwrap();
        let xb = allocations_from_costs(&scaled_b, &lam_b);
        let ub = payoffs_from_costs(&scaled_b, &lam_b);
        for i in 0..inst.n() {
            assert!(((lam_b[i] - lambda[i] / c) / (lambda[i] / c)).abs() < 1e-8);
            assert!(((ub[i] - u0[i]) / u0[i]).abs() < 1e-8);
            for (j, x) in &x0[i] {
                assert!(((xb[i][j] - c * x) / (c * x)).abs() < 1e-8, "case {case}: x under B-scaling");
            }
        }
    }
    println!("criterion 9 (conservation/round-trip/scaling): PASS (500 instances)");
}
