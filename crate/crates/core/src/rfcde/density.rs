//! Weighted Gaussian-mixture densities produced by forest queries.
//!
//! A density estimate is a kernel mixture over the in-bag training
//! responses sharing leaves with the query. Tail probabilities and CDF
//! values use the exact Gaussian-mixture closed form, so the production
//! path carries no quadrature error.

use statrs::function::erf::erfc;

/// Kernel contributions beyond this many bandwidths are dropped
/// (exp(-72) ≈ 5e-32, far below f64 accumulation noise).
const PRUNE_SIGMAS: f64 = 12.0;

/// Padding of the evaluation grid beyond the support, in bandwidths.
pub const GRID_PAD_SIGMAS: f64 = 6.0;

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    let t = x / sigma;
    (-0.5 * t * t).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// One component of the mixture: a training response and its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPoint {
    /// Training-set index.
    pub index: u32,
    pub z: f64,
    pub weight: f64,
}

/// A conditional density estimate at one query point: nonnegative weights
/// summing to 1 over training responses, smoothed by a Gaussian kernel of
/// bandwidth `bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    /// The query covariates.
    pub query: Vec<f64>,
    /// Support sorted ascending by response value.
    points: Vec<SupportPoint>,
    /// cum_weight[i] = Σ weights of points[..i].
    cum_weight: Vec<f64>,
    pub bandwidth: f64,
    /// Weighted standard deviation of the support responses.
    pub sigma_w: f64,
    /// Effective sample size 1/Σw².
    pub n_eff: f64,
}

impl DensityEstimate {
    /// `points` must be sorted ascending by z with weights summing to 1.
    pub(crate) fn new(query: Vec<f64>, points: Vec<SupportPoint>, bandwidth: f64, sigma_w: f64, n_eff: f64) -> DensityEstimate {
        let mut cum_weight = Vec::with_capacity(points.len() + 1);
        let mut acc = 0.0;
        cum_weight.push(0.0);
        for p in &points {
            acc += p.weight;
            cum_weight.push(acc);
        }
        DensityEstimate {
            query,
            points,
            cum_weight,
            bandwidth,
            sigma_w,
            n_eff,
        }
    }

    pub fn support(&self) -> &[SupportPoint] {
        &self.points
    }

    fn total_weight(&self) -> f64 {
        *self.cum_weight.last().unwrap_or(&0.0)
    }

    /// Index range of support points within `radius` of `z`.
    fn window(&self, z: f64, radius: f64) -> (usize, usize) {
        let lo = self.points.partition_point(|p| p.z < z - radius);
        let hi = self.points.partition_point(|p| p.z <= z + radius);
        (lo, hi)
    }

    /// Mixture density at `z`.
    pub fn pdf(&self, z: f64) -> f64 {
        let h = self.bandwidth;
        let (lo, hi) = self.window(z, PRUNE_SIGMAS * h);
        self.points[lo..hi]
            .iter()
            .map(|p| p.weight * normal_pdf(z - p.z, h))
            .sum()
    }

    /// Pr[r ≤ t] = Σ_i w_i Φ((t − z_i)/h).
    pub fn cdf(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let (lo, hi) = self.window(t, PRUNE_SIGMAS * h);
        // Points far below t contribute their full weight.
        let mut total = self.cum_weight[lo];
        for p in &self.points[lo..hi] {
            total += p.weight * standard_normal_cdf((t - p.z) / h);
        }
        total.clamp(0.0, 1.0)
    }

    /// Upper tail Pr[r > t] = Σ_i w_i (1 − Φ((t − z_i)/h)), the exact
    /// complement of the mixture CDF.
    pub fn tail_probability(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let (lo, hi) = self.window(t, PRUNE_SIGMAS * h);
        // Points far above t contribute their full weight.
        let mut total = self.total_weight() - self.cum_weight[hi];
        for p in &self.points[lo..hi] {
            total += p.weight * standard_normal_cdf((p.z - t) / h);
        }
        total.clamp(0.0, 1.0)
    }

    /// Smallest t with CDF(t) ≥ p, by bisection (the mixture CDF is
    /// strictly increasing).
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let (mut lo, mut hi) = self.padded_range();
        let span = (hi - lo).max(1e-300);
        lo -= span;
        hi += span;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * span {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Support range padded by [`GRID_PAD_SIGMAS`] bandwidths each side.
    pub fn padded_range(&self) -> (f64, f64) {
        let pad = GRID_PAD_SIGMAS * self.bandwidth;
        let lo = self.points.first().map_or(0.0, |p| p.z) - pad;
        let hi = self.points.last().map_or(0.0, |p| p.z) + pad;
        (lo, hi)
    }

    /// Evaluation grid over the padded range: `(z values, density values)`.
    pub fn grid(&self, n_points: usize) -> (Vec<f64>, Vec<f64>) {
        let n = n_points.max(2);
        let (lo, hi) = self.padded_range();
        let step = (hi - lo) / (n - 1) as f64;
        let zs: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        let fs: Vec<f64> = zs.iter().map(|&z| self.pdf(z)).collect();
        (zs, fs)
    }

    /// ∫ f̂(z)² dz in closed form: Σ_i Σ_j w_i w_j N(z_i − z_j; 0, 2h²).
    pub fn squared_integral(&self) -> f64 {
        let sigma = std::f64::consts::SQRT_2 * self.bandwidth;
        let radius = PRUNE_SIGMAS * sigma;
        let g0 = normal_pdf(0.0, sigma);
        let mut total = 0.0;
        for (i, pi) in self.points.iter().enumerate() {
            total += pi.weight * pi.weight * g0;
            for pj in &self.points[i + 1..] {
                let d = pj.z - pi.z;
                if d > radius {
                    break;
                }
                total += 2.0 * pi.weight * pj.weight * normal_pdf(d, sigma);
            }
        }
        total
    }
}

/// Free-function form of [`DensityEstimate::tail_probability`].
pub fn tail_probability(density: &DensityEstimate, t: f64) -> f64 {
    density.tail_probability(t)
}
