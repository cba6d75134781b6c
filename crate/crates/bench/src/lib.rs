//! Shared fixtures for the pipeline benchmarks.

use rand::Rng;

use flipnet::seeding::{root_rng, standard_normal};
use flipnet::tradenet::TradeNetwork;

/// Heteroskedastic Gaussian (x, z) pairs for density-forest benchmarks.
pub fn heteroskedastic_pairs(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = root_rng(seed);
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let xv: f64 = rng.random_range(0.0..1.0);
        x.push(xv);
        z.push(2.0 * xv - 1.0 + (0.5 + 2.0 * xv) * standard_normal(&mut rng));
    }
    (x, z)
}

/// Sparse directed host graph with roughly `avg_out` edges per node.
pub fn sparse_host(n: usize, avg_out: usize, seed: u64) -> TradeNetwork {
    let mut rng = root_rng(seed);
    let names: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
    let mut pairs = Vec::with_capacity(n * avg_out);
    for i in 0..n {
        for _ in 0..avg_out {
            let j = rng.random_range(0..n);
            if j != i {
                pairs.push((names[i].as_str(), names[j].as_str(), 1));
            }
        }
    }
    TradeNetwork::from_nodes_and_weighted_pairs(names.iter().map(|s| s.as_str()), pairs)
}

/// Pareto degree-like samples for power-law fits.
pub fn pareto_samples(n: usize, alpha: f64, seed: u64) -> Vec<f64> {
    let mut rng = root_rng(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (1.0 - u).powf(-1.0 / (alpha - 1.0))
        })
        .collect()
}
