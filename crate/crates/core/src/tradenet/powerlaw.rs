//! Maximum-likelihood power-law fitting for heavy-tailed sequences, with a
//! KS-minimizing tail cutoff scan and a two-regime (double power law)
//! variant.

use serde::{Deserialize, Serialize};

use super::NetError;

/// Minimum observations at or above the cutoff for a fit.
pub const MIN_TAIL_POINTS: usize = 10;

/// Minimum observations for a double fit.
pub const MIN_DOUBLE_POINTS: usize = 50;

/// Cap on scanned cutoff candidates; unique values are rank-decimated down
/// to this many.
const MAX_SCAN_CANDIDATES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerLawMode {
    Continuous,
    Discrete,
}

/// Tail cutoff policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum XminPolicy {
    Fixed(f64),
    /// Scan observed values for the cutoff minimizing the KS distance
    /// between the fitted and empirical tail.
    ScanKs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub xmin: f64,
    /// KS distance between the fitted and empirical tail.
    pub ks_distance: f64,
    pub n_tail: usize,
    pub mode: PowerLawMode,
}

/// Fits `p(x) ∝ x^{-α}` for `x ≥ xmin` by maximum likelihood.
///
/// Continuous: `α = 1 + n / Σ ln(x_i/xmin)` in closed form. Discrete:
/// numeric maximization of the zeta likelihood.
pub fn fit_power_law(
    data: &[f64],
    mode: PowerLawMode,
    xmin_policy: XminPolicy,
) -> Result<PowerLawFit, NetError> {
    let mut xs: Vec<f64> = data
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    xs.sort_by(f64::total_cmp);

    match xmin_policy {
        XminPolicy::Fixed(xmin) => fit_tail(&xs, xmin, mode),
        XminPolicy::ScanKs => {
            let mut candidates: Vec<f64> = xs.clone();
            candidates.dedup();
            // Only cutoffs leaving a big-enough tail are eligible.
            candidates.retain(|&c| xs.len() - xs.partition_point(|&v| v < c) >= MIN_TAIL_POINTS);
            if candidates.is_empty() {
                return Err(NetError::TooFewTailPoints {
                    needed: MIN_TAIL_POINTS,
                    got: xs.len(),
                });
            }
            let candidates = decimate(&candidates, MAX_SCAN_CANDIDATES);
            let mut best: Option<PowerLawFit> = None;
            for &xmin in &candidates {
                if let Ok(fit) = fit_tail(&xs, xmin, mode) {
                    if best.as_ref().is_none_or(|b| fit.ks_distance < b.ks_distance) {
                        best = Some(fit);
                    }
                }
            }
            best.ok_or(NetError::TooFewTailPoints {
                needed: MIN_TAIL_POINTS,
                got: xs.len(),
            })
        }
    }
}

/// Evenly rank-spaced subset of at most `max` values (first and last kept).
fn decimate(values: &[f64], max: usize) -> Vec<f64> {
    if values.len() <= max {
        return values.to_vec();
    }
    let last = values.len() - 1;
    let mut out: Vec<f64> = (0..max)
        .map(|k| values[k * last / (max - 1)])
        .collect();
    out.dedup();
    out
}

/// Fits the tail `x ≥ xmin` of sorted data.
fn fit_tail(sorted: &[f64], xmin: f64, mode: PowerLawMode) -> Result<PowerLawFit, NetError> {
    let start = sorted.partition_point(|&v| v < xmin);
    let tail = &sorted[start..];
    if tail.len() < MIN_TAIL_POINTS {
        return Err(NetError::TooFewTailPoints {
            needed: MIN_TAIL_POINTS,
            got: tail.len(),
        });
    }
    let alpha = match mode {
        PowerLawMode::Continuous => {
            let sum_ln: f64 = tail.iter().map(|&v| (v / xmin).ln()).sum();
            if sum_ln <= 0.0 {
                return Err(NetError::TooFewTailPoints {
                    needed: MIN_TAIL_POINTS,
                    got: 0,
                });
            }
            1.0 + tail.len() as f64 / sum_ln
        }
        PowerLawMode::Discrete => discrete_mle(tail, xmin)?,
    };
    let ks_distance = match mode {
        PowerLawMode::Continuous => ks_continuous(tail, xmin, alpha),
        PowerLawMode::Discrete => ks_discrete(tail, xmin, alpha),
    };
    Ok(PowerLawFit {
        alpha,
        xmin,
        ks_distance,
        n_tail: tail.len(),
        mode,
    })
}

/// KS distance of a sorted tail against the continuous Pareto CDF.
fn ks_continuous(tail: &[f64], xmin: f64, alpha: f64) -> f64 {
    let n = tail.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in tail.iter().enumerate() {
        let f = 1.0 - (x / xmin).powf(1.0 - alpha);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// KS distance of a sorted integer-valued tail against the zeta CDF.
fn ks_discrete(tail: &[f64], xmin: f64, alpha: f64) -> f64 {
    let n = tail.len() as f64;
    let xmin_i = xmin.ceil().max(1.0);
    let z_norm = hurwitz_zeta(alpha, xmin_i);
    let mut d = 0.0f64;
    let mut i = 0;
    while i < tail.len() {
        let x = tail[i];
        let mut j = i;
        while j < tail.len() && tail[j] == x {
            j += 1;
        }
        let ecdf = j as f64 / n;
        let f = 1.0 - hurwitz_zeta(alpha, x.floor() + 1.0) / z_norm;
        d = d.max((ecdf - f).abs());
        i = j;
    }
    d
}

/// Discrete power-law MLE: maximizes `-α Σ ln x − n ln ζ(α, xmin)` by
/// golden-section search.
fn discrete_mle(tail: &[f64], xmin: f64) -> Result<f64, NetError> {
    let xmin_i = xmin.ceil().max(1.0);
    let sum_ln: f64 = tail.iter().map(|&v| v.ln()).sum();
    let n = tail.len() as f64;
    let ll = |alpha: f64| -alpha * sum_ln - n * hurwitz_zeta(alpha, xmin_i).ln();
    Ok(golden_max(ll, 1.000_001, 25.0))
}

/// Golden-section maximization of a unimodal function on [lo, hi].
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
        if (hi - lo).abs() < 1e-10 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Hurwitz zeta ζ(s, q) = Σ_{k≥0} (q+k)^{-s} for s > 1, q ≥ 1, by
/// Euler–Maclaurin with two Bernoulli correction terms.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const N: usize = 16;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (q + k as f64).powf(-s);
    }
    let a = q + N as f64;
    sum += a.powf(1.0 - s) / (s - 1.0);
    sum += 0.5 * a.powf(-s);
    sum += s * a.powf(-s - 1.0) / 12.0;
    sum -= s * (s + 1.0) * (s + 2.0) * a.powf(-s - 3.0) / 720.0;
    sum
}

/// Two-regime power-law fit: one exponent below the breakpoint (truncated
/// MLE on [xmin, breakpoint]) and one above (Pareto MLE from the
/// breakpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublePowerLawFit {
    pub alpha1: f64,
    pub alpha2: f64,
    pub breakpoint: f64,
    pub xmin: f64,
    pub ks_lower: f64,
    pub ks_upper: f64,
    pub n_lower: usize,
    pub n_upper: usize,
}

/// Scans candidate breakpoints over observed values, fits a continuous MLE
/// exponent per regime, and keeps the breakpoint minimizing the summed
/// per-regime *normalized* KS statistics √n·D (the raw distance shrinks
/// like 1/√n under a correct fit, so an unnormalized sum always prefers a
/// degenerate micro-regime over the true breakpoint). Each regime must
/// hold at least 10 points.
pub fn fit_double_power_law(data: &[f64]) -> Result<DoublePowerLawFit, NetError> {
    let mut xs: Vec<f64> = data
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    xs.sort_by(f64::total_cmp);
    if xs.len() < MIN_DOUBLE_POINTS {
        return Err(NetError::TooFewTailPoints {
            needed: MIN_DOUBLE_POINTS,
            got: xs.len(),
        });
    }
    let xmin = xs[0];
    let mut uniques: Vec<f64> = xs.clone();
    uniques.dedup();
    let candidates: Vec<f64> = decimate(&uniques, MAX_SCAN_CANDIDATES);

    let mut best: Option<DoublePowerLawFit> = None;
    let mut best_score: Option<f64> = None;
    for &brk in &candidates {
        let split = xs.partition_point(|&v| v < brk);
        let lower = &xs[..split];
        let upper = &xs[split..];
        if lower.len() < MIN_TAIL_POINTS || upper.len() < MIN_TAIL_POINTS {
            continue;
        }
        let Some(alpha1) = truncated_mle(lower, xmin, brk) else {
            continue;
        };
        let sum_ln_upper: f64 = upper.iter().map(|&v| (v / brk).ln()).sum();
        if sum_ln_upper <= 0.0 {
            continue;
        }
        let alpha2 = 1.0 + upper.len() as f64 / sum_ln_upper;
        let ks_lower = ks_truncated(lower, xmin, brk, alpha1);
        let ks_upper = ks_continuous(upper, brk, alpha2);
        let score = ks_lower * (lower.len() as f64).sqrt() + ks_upper * (upper.len() as f64).sqrt();
        if best_score.is_none_or(|s| score < s) {
            best_score = Some(score);
            best = Some(DoublePowerLawFit {
                alpha1,
                alpha2,
                breakpoint: brk,
                xmin,
                ks_lower,
                ks_upper,
                n_lower: lower.len(),
                n_upper: upper.len(),
            });
        }
    }
    best.ok_or(NetError::TooFewTailPoints {
        needed: MIN_TAIL_POINTS,
        got: 0,
    })
}

/// MLE exponent of a power law truncated to [a, b], by golden-section
/// search on the profile likelihood. Needs spread data (None when all
/// values coincide).
fn truncated_mle(values: &[f64], a: f64, b: f64) -> Option<f64> {
    if values.is_empty() || a <= 0.0 || b <= a {
        return None;
    }
    let sum_ln: f64 = values.iter().map(|&v| v.ln()).sum();
    let n = values.len() as f64;
    if values.first() == values.last() {
        return None;
    }
    // log C(α) with C the truncated normalizer (α−1)/(a^{1−α} − b^{1−α}),
    // written via expm1 for stability near α = 1.
    let ln_c = |alpha: f64| -> f64 {
        let p = 1.0 - alpha;
        // a^p − b^p = e^{p ln b} · expm1(p ln(a/b))
        let diff = (p * b.ln()).exp() * (p * (a / b).ln()).exp_m1();
        if diff.is_finite() && diff > 0.0 {
            ((alpha - 1.0) / diff).ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let ll = |alpha: f64| n * ln_c(alpha) - alpha * sum_ln;
    Some(golden_max(ll, 1.000_001, 25.0))
}

/// KS distance of a sorted sample against the truncated power-law CDF on
/// [a, b].
fn ks_truncated(values: &[f64], a: f64, b: f64, alpha: f64) -> f64 {
    let p = 1.0 - alpha;
    let denom = a.powf(p) - b.powf(p);
    let n = values.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in values.iter().enumerate() {
        let f = (a.powf(p) - x.powf(p)) / denom;
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}
