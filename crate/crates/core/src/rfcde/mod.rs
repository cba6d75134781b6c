//! Random-forest conditional density estimation of regression residuals.
//!
//! Trees partition the covariate space on a density-estimation loss; a
//! query's density is a weighted Gaussian KDE over the in-bag responses
//! sharing leaves with it, with weights 1/(leaf size) per tree, normalized.
//! Bandwidth follows a weighted Silverman rule by default.

mod density;
mod tree;

pub use density::{tail_probability, DensityEstimate, SupportPoint, GRID_PAD_SIGMAS};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::stream_rng;
use tree::{Tree, TreeBuilder};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CdeError {
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("empty holdout set")]
    EmptyHoldout,
    #[error("query matched only empty leaves")]
    EmptyWeights,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite input value at index {0}")]
    NonFinite(usize),
}

/// Bandwidth selection for the leaf-weighted KDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    /// h = 1.06 · σ̂_w · n_eff^{-1/5}, with σ̂_w the weighted standard
    /// deviation of the support responses and n_eff = 1/Σw².
    WeightedSilverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdeForestParams {
    pub n_trees: usize,
    pub min_leaf_size: usize,
    /// Number of cosine basis functions used by the split criterion.
    pub n_basis: usize,
    /// Features tried per split; `None` means all.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub bandwidth_rule: BandwidthRule,
    pub rng_seed: u64,
}

impl Default for CdeForestParams {
    fn default() -> Self {
        CdeForestParams {
            n_trees: 100,
            min_leaf_size: 50,
            n_basis: 15,
            mtry: None,
            bootstrap: true,
            bandwidth_rule: BandwidthRule::WeightedSilverman,
            rng_seed: 0,
        }
    }
}

impl CdeForestParams {
    // Negated comparisons here intentionally reject NaN parameters.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), CdeError> {
        if self.n_trees < 1 {
            return Err(CdeError::InvalidParams("n_trees must be >= 1".into()));
        }
        if self.min_leaf_size < 2 {
            return Err(CdeError::InvalidParams("min_leaf_size must be >= 2".into()));
        }
        if self.n_basis < 1 {
            return Err(CdeError::InvalidParams("n_basis must be >= 1".into()));
        }
        if let Some(m) = self.mtry {
            if m < 1 {
                return Err(CdeError::InvalidParams("mtry must be >= 1".into()));
            }
        }
        if let BandwidthRule::Fixed(h) = self.bandwidth_rule {
            if !(h > 0.0) || !h.is_finite() {
                return Err(CdeError::InvalidParams(format!(
                    "fixed bandwidth must be positive and finite, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// A fitted residual-density forest. Serializes to a versioned JSON
/// artifact carrying the split nodes, leaf membership indices, training
/// data, and parameters, sufficient to reload and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdeForest {
    pub format_version: u32,
    pub params: CdeForestParams,
    pub n_features: usize,
    /// Training covariates, n × n_features row-major.
    x: Vec<f64>,
    /// Training responses.
    z: Vec<f64>,
    pub z_min: f64,
    pub z_max: f64,
    /// True when all training responses were identical: trees are single
    /// leaves and every query returns one kernel bump (warning condition).
    pub degenerate: bool,
    trees: Vec<Tree>,
}

pub const FOREST_FORMAT_VERSION: u32 = 1;

/// Fits a forest on a single covariate (the usual configuration: the
/// covariate is the predicted value, the response is the residual).
pub fn fit_forest(x: &[f64], z: &[f64], params: &CdeForestParams) -> Result<CdeForest, CdeError> {
    fit_forest_nd(x, 1, z, params)
}

/// Fits a forest on `n_features` covariates given row-major `x`.
pub fn fit_forest_nd(
    x: &[f64],
    n_features: usize,
    z: &[f64],
    params: &CdeForestParams,
) -> Result<CdeForest, CdeError> {
    params.validate()?;
    if n_features < 1 {
        return Err(CdeError::InvalidParams("n_features must be >= 1".into()));
    }
    let n = z.len();
    if x.len() != n * n_features {
        return Err(CdeError::DimensionMismatch(format!(
            "x has {} values, expected {} ({} rows × {} features)",
            x.len(),
            n * n_features,
            n,
            n_features
        )));
    }
    if n < 2 * params.min_leaf_size {
        return Err(CdeError::TooFewPoints {
            needed: 2 * params.min_leaf_size,
            got: n,
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(CdeError::NonFinite(i));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(CdeError::NonFinite(i));
    }

    let z_min = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let z_max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = z_min == z_max;

    // Basis values on the rescaled responses, shared by every tree.
    let n_basis = params.n_basis;
    let phi: Vec<f64> = if degenerate {
        Vec::new()
    } else {
        let mut phi = Vec::with_capacity(n * n_basis);
        for &v in z {
            let u = (v - z_min) / (z_max - z_min);
            for jj in 1..=n_basis {
                phi.push(std::f64::consts::SQRT_2 * (jj as f64 * std::f64::consts::PI * u).cos());
            }
        }
        phi
    };

    let mtry = params.mtry.unwrap_or(n_features).min(n_features);
    let builder = TreeBuilder {
        x,
        n_features,
        phi: &phi,
        n_basis,
        min_leaf: params.min_leaf_size,
        mtry,
    };

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(params.rng_seed, t as u64);
            let in_bag: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n) as u32).collect()
            } else {
                (0..n as u32).collect()
            };
            if degenerate {
                let mut members = in_bag;
                members.sort_unstable();
                Tree {
                    nodes: vec![tree::TreeNode::Leaf { members }],
                }
            } else {
                builder.build(in_bag, &mut rng)
            }
        })
        .collect();

    Ok(CdeForest {
        format_version: FOREST_FORMAT_VERSION,
        params: params.clone(),
        n_features,
        x: x.to_vec(),
        z: z.to_vec(),
        z_min,
        z_max,
        degenerate,
        trees,
    })
}

impl CdeForest {
    pub fn n_training_points(&self) -> usize {
        self.z.len()
    }

    /// Mean leaf count across trees.
    pub fn mean_leaf_count(&self) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let total: usize = self.trees.iter().map(|t| t.leaf_count()).sum();
        total as f64 / self.trees.len() as f64
    }

    /// Root split (feature, threshold) per tree; `None` for single-leaf
    /// trees. Diagnostic.
    pub fn root_splits(&self) -> Vec<Option<(usize, f64)>> {
        self.trees
            .iter()
            .map(|t| match t.nodes.first() {
                Some(tree::TreeNode::Split {
                    feature, threshold, ..
                }) => Some((*feature, *threshold)),
                _ => None,
            })
            .collect()
    }

    pub fn training_responses(&self) -> &[f64] {
        &self.z
    }

    /// Mixture density of the response at covariate `query`.
    ///
    /// Weight of training point i: Σ_trees [query shares i's leaf] /
    /// (leaf in-bag size), normalized to sum 1.
    pub fn predict_density(&self, query: &[f64]) -> Result<DensityEstimate, CdeError> {
        if query.len() != self.n_features {
            return Err(CdeError::DimensionMismatch(format!(
                "query has {} features, forest has {}",
                query.len(),
                self.n_features
            )));
        }

        // Gather (index, weight) contributions across trees, then merge.
        let mut contributions: Vec<(u32, f64)> = Vec::new();
        for tree in &self.trees {
            let members = tree.leaf_members(query);
            if members.is_empty() {
                continue;
            }
            let w = 1.0 / members.len() as f64;
            contributions.extend(members.iter().map(|&i| (i, w)));
        }
        if contributions.is_empty() {
            return Err(CdeError::EmptyWeights);
        }
        contributions.sort_unstable_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::new();
        for (i, w) in contributions {
            match merged.last_mut() {
                Some((last, acc)) if *last == i => *acc += w,
                _ => merged.push((i, w)),
            }
        }
        let total: f64 = merged.iter().map(|&(_, w)| w).sum();
        let mut points: Vec<SupportPoint> = merged
            .into_iter()
            .map(|(i, w)| SupportPoint {
                index: i,
                z: self.z[i as usize],
                weight: w / total,
            })
            .collect();
        points.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.index.cmp(&b.index)));

        let mean: f64 = points.iter().map(|p| p.weight * p.z).sum();
        let var: f64 = points
            .iter()
            .map(|p| p.weight * (p.z - mean) * (p.z - mean))
            .sum();
        let sigma_w = var.max(0.0).sqrt();
        let sum_sq: f64 = points.iter().map(|p| p.weight * p.weight).sum();
        let n_eff = if sum_sq > 0.0 { 1.0 / sum_sq } else { 1.0 };

        let bandwidth = match self.params.bandwidth_rule {
            BandwidthRule::Fixed(h) => h,
            BandwidthRule::WeightedSilverman => {
                let h = 1.06 * sigma_w * n_eff.powf(-0.2);
                if h > 0.0 {
                    h
                } else {
                    // Degenerate support: a single narrow bump.
                    1e-9 * (1.0 + mean.abs())
                }
            }
        };

        Ok(DensityEstimate::new(
            query.to_vec(),
            points,
            bandwidth,
            sigma_w,
            n_eff,
        ))
    }

    /// Convenience for the single-covariate configuration.
    pub fn predict_density_1d(&self, x: f64) -> Result<DensityEstimate, CdeError> {
        self.predict_density(&[x])
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<CdeForest> {
        serde_json::from_str(s)
    }
}

/// Held-out density-estimation loss: E[∫f̂²dz] − 2·E[f̂(z|x)], estimated on
/// `(x_held, z_held)` pairs. Lower is better. The squared term uses the
/// closed-form Gaussian-mixture self-convolution; held-out responses
/// outside the training range are clamped for the second term.
pub fn cde_loss(forest: &CdeForest, x_held: &[f64], z_held: &[f64]) -> Result<f64, CdeError> {
    let m = z_held.len();
    if m == 0 {
        return Err(CdeError::EmptyHoldout);
    }
    if x_held.len() != m * forest.n_features {
        return Err(CdeError::DimensionMismatch(format!(
            "x_held has {} values for {} responses × {} features",
            x_held.len(),
            m,
            forest.n_features
        )));
    }
    let d = forest.n_features;
    let terms: Result<Vec<(f64, f64)>, CdeError> = (0..m)
        .into_par_iter()
        .map(|k| {
            let de = forest.predict_density(&x_held[k * d..(k + 1) * d])?;
            let sq = de.squared_integral();
            let z = z_held[k].clamp(forest.z_min, forest.z_max);
            Ok((sq, de.pdf(z)))
        })
        .collect();
    let terms = terms?;
    let mean_sq: f64 = terms.iter().map(|t| t.0).sum::<f64>() / m as f64;
    let mean_pdf: f64 = terms.iter().map(|t| t.1).sum::<f64>() / m as f64;
    Ok(mean_sq - 2.0 * mean_pdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::root_rng;
    use rand::Rng;

    fn small_params(seed: u64) -> CdeForestParams {
        CdeForestParams {
            n_trees: 20,
            min_leaf_size: 20,
            n_basis: 10,
            rng_seed: seed,
            ..CdeForestParams::default()
        }
    }

    /// Bimodal data whose mode is determined by the sign of x.
    fn bimodal(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = root_rng(seed);
        let mut x = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let xv: f64 = rng.random_range(-1.0..1.0);
            let center = if xv < 0.0 { -3.0 } else { 3.0 };
            let noise: f64 = rng.random_range(-0.5..0.5);
            x.push(xv);
            z.push(center + noise);
        }
        (x, z)
    }

    #[test]
    fn too_few_points_is_rejected() {
        let params = CdeForestParams::default();
        let x = vec![0.0; 10];
        let z = vec![0.0; 10];
        assert!(matches!(
            fit_forest(&x, &z, &params),
            Err(CdeError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn degenerate_response_gives_single_bump() {
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let z = vec![7.0; n];
        let forest = fit_forest(&x, &z, &small_params(3)).unwrap();
        assert!(forest.degenerate);
        let de = forest.predict_density_1d(12.0).unwrap();
        assert!(de.tail_probability(6.9) > 0.999);
        assert!(de.tail_probability(7.1) < 0.001);
    }

    #[test]
    fn single_tree_single_leaf_weights_are_uniform() {
        let n = 60;
        // One shared covariate value: no candidate threshold, so the tree
        // stays a single leaf.
        let x: Vec<f64> = vec![1.0; n];
        let z: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        let params = CdeForestParams {
            n_trees: 1,
            min_leaf_size: 10,
            bootstrap: false,
            rng_seed: 1,
            ..CdeForestParams::default()
        };
        let forest = fit_forest(&x, &z, &params).unwrap();
        let de = forest.predict_density_1d(10.0).unwrap();
        assert_eq!(de.support().len(), n);
        for p in de.support() {
            assert!((p.weight - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_normalized_for_any_query() {
        let (x, z) = bimodal(500, 11);
        let forest = fit_forest(&x, &z, &small_params(5)).unwrap();
        for q in [-2.0, -0.3, 0.0, 0.4, 5.0] {
            let de = forest.predict_density_1d(q).unwrap();
            let sum: f64 = de.support().iter().map(|p| p.weight).sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(de.support().iter().all(|p| p.weight >= 0.0));
            assert!(de.bandwidth > 0.0);
        }
    }

    #[test]
    fn conditional_densities_track_the_modes() {
        let (x, z) = bimodal(2000, 23);
        let forest = fit_forest(&x, &z, &small_params(7)).unwrap();
        let left = forest.predict_density_1d(-0.8).unwrap();
        let right = forest.predict_density_1d(0.8).unwrap();
        assert!(left.pdf(-3.0) > 5.0 * left.pdf(3.0));
        assert!(right.pdf(3.0) > 5.0 * right.pdf(-3.0));
    }

    #[test]
    fn identical_seed_gives_bit_identical_serialization() {
        let (x, z) = bimodal(300, 9);
        let a = fit_forest(&x, &z, &small_params(42)).unwrap();
        let b = fit_forest(&x, &z, &small_params(42)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = fit_forest(&x, &z, &small_params(43)).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn serde_round_trip_preserves_predictions() {
        let (x, z) = bimodal(300, 9);
        let forest = fit_forest(&x, &z, &small_params(42)).unwrap();
        let back = CdeForest::from_json(&forest.to_json().unwrap()).unwrap();
        let a = forest.predict_density_1d(0.5).unwrap();
        let b = back.predict_density_1d(0.5).unwrap();
        assert_eq!(a.tail_probability(1.0), b.tail_probability(1.0));
    }

    #[test]
    fn cde_loss_prefers_the_fitted_bandwidth() {
        let (x, z) = bimodal(1200, 31);
        let (xh, zh) = bimodal(300, 77);
        let forest = fit_forest(&x, &z, &small_params(13)).unwrap();
        let loss_fitted = cde_loss(&forest, &xh, &zh).unwrap();

        // Same forest with a wildly over-smoothed bandwidth.
        let mut wide = forest.clone();
        let h = forest.predict_density_1d(0.5).unwrap().bandwidth;
        wide.params.bandwidth_rule = BandwidthRule::Fixed(h * 100.0);
        let loss_wide = cde_loss(&wide, &xh, &zh).unwrap();
        assert!(
            loss_fitted < loss_wide,
            "fitted {loss_fitted} vs wide {loss_wide}"
        );
    }

    #[test]
    fn cde_loss_is_permutation_invariant() {
        let (x, z) = bimodal(800, 41);
        let (xh, zh) = bimodal(100, 5);
        let forest = fit_forest(&x, &z, &small_params(2)).unwrap();
        let a = cde_loss(&forest, &xh, &zh).unwrap();
        let mut pairs: Vec<(f64, f64)> = xh.iter().cloned().zip(zh.iter().cloned()).collect();
        pairs.reverse();
        pairs.swap(3, 60);
        let (xp, zp): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let b = cde_loss(&forest, &xp, &zp).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn empty_holdout_is_rejected() {
        let (x, z) = bimodal(200, 1);
        let forest = fit_forest(&x, &z, &small_params(1)).unwrap();
        assert!(matches!(
            cde_loss(&forest, &[], &[]),
            Err(CdeError::EmptyHoldout)
        ));
    }
}
