//! Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// D = sup |ECDF_a − ECDF_b|.
    pub statistic: f64,
    /// Asymptotic p-value from the Kolmogorov distribution at
    /// λ = √(n_a·n_b/(n_a+n_b)) · D.
    pub p_value: f64,
}

/// Two-sample KS test. Non-finite values are ignored.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, NetError> {
    let mut xs: Vec<f64> = a.iter().copied().filter(|v| v.is_finite()).collect();
    let mut ys: Vec<f64> = b.iter().copied().filter(|v| v.is_finite()).collect();
    if xs.is_empty() || ys.is_empty() {
        return Err(NetError::EmptySample);
    }
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);

    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut d = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }

    let n_eff = na * nb / (na + nb);
    let lambda = n_eff.sqrt() * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    })
}

/// Survival function Q(λ) = Pr[K > λ] of the Kolmogorov distribution.
///
/// Large λ: Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}. Small λ: the dual
/// theta-series form, which converges where the first diverges slowly.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Q = 1 − √(2π)/λ · Σ_{k≥1} exp(−(2k−1)²π²/(8λ²))
        let f = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=20u32 {
            let m = (2 * k - 1).pow(2) as f64;
            let term = (-m * f).exp();
            sum += term;
            if term < 1e-18 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100u32 {
            let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
            sum += sign * term;
            sign = -sign;
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}
