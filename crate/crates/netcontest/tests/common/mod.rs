//! Shared helpers for integration tests: seeded random instance generation.

use netcontest::equilibrium::budgets_from_costs;
use netcontest::instance::ContestInstance;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Random connected instance: spanning tree plus a few extra edges, values
/// log-uniform in [0.1, 10]. Budgets come from a random cost vector via
/// B(lambda), so every generated instance has an interior equilibrium (an
/// arbitrary budget vector need not be realizable by binding budgets).
pub fn random_instance(rng: &mut ChaCha8Rng, n_min: usize, n_max: usize) -> ContestInstance {
    let n = rng.gen_range(n_min..=n_max);
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for k in 1..n {
        let parent = rng.gen_range(0..k);
        edges.push((parent, k, log_uniform(rng, 0.1, 10.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.15) && !edges.iter().any(|&(a, b, _)| (a, b) == (i, j)) {
                edges.push((i, j, log_uniform(rng, 0.1, 10.0)));
            }
        }
    }
    let lambda: Vec<f64> = (0..n).map(|_| log_uniform(rng, 0.1, 10.0)).collect();
    let shell = ContestInstance::new(vec![1.0; n], edges.clone()).expect("shell instance");
    let budgets = budgets_from_costs(&shell, &lambda);
    ContestInstance::new(budgets, edges).expect("generated instance is valid")
}
