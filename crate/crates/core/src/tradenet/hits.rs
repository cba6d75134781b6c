//! Hub/authority centrality by mutually recursive power iteration.

use serde::{Deserialize, Serialize};

use super::graph::TradeNetwork;
use super::NetError;

pub const DEFAULT_HITS_TOL: f64 = 1e-10;
pub const DEFAULT_HITS_MAX_ITER: usize = 1000;

/// Hub and authority score vectors, each L2-normalized. In a trade network
/// high hub scores mark central sellers, high authority scores central
/// buyers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitsScores {
    pub hub: Vec<f64>,
    pub authority: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration: authority(u) = Σ_{v→u} hub(v), hub(u) = Σ_{u→v}
/// authority(v), with L2 normalization each round. Converges when the max
/// absolute change drops below `tol` in both vectors; returns
/// `converged = false` after `max_iter` rounds without error.
pub fn hits(net: &TradeNetwork, tol: f64, max_iter: usize) -> Result<HitsScores, NetError> {
    let n = net.node_count();
    if net.edge_count() == 0 {
        return Err(NetError::NoEdges);
    }
    let init = 1.0 / (n as f64).sqrt();
    let mut hub = vec![init; n];
    let mut authority = vec![init; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let mut new_authority = vec![0.0; n];
        for v in 0..n as u32 {
            let mut sum = 0.0;
            for &u in net.in_neighbors(v) {
                sum += hub[u as usize];
            }
            new_authority[v as usize] = sum;
        }
        normalize(&mut new_authority);

        let mut new_hub = vec![0.0; n];
        for u in 0..n as u32 {
            let mut sum = 0.0;
            for &v in net.out_neighbors(u) {
                sum += new_authority[v as usize];
            }
            new_hub[u as usize] = sum;
        }
        normalize(&mut new_hub);

        let delta_a = max_abs_diff(&authority, &new_authority);
        let delta_h = max_abs_diff(&hub, &new_hub);
        authority = new_authority;
        hub = new_hub;
        if delta_a < tol && delta_h < tol {
            converged = true;
            break;
        }
    }

    Ok(HitsScores {
        hub,
        authority,
        iterations,
        converged,
    })
}

/// HITS with the default tolerance and iteration cap.
pub fn hits_default(net: &TradeNetwork) -> Result<HitsScores, NetError> {
    hits(net, DEFAULT_HITS_TOL, DEFAULT_HITS_MAX_ITER)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
