//! Binary split trees grown on the density-estimation loss.
//!
//! Node responses are mapped to [0,1] and expanded in the orthonormal
//! cosine basis φ_j(u) = √2·cos(jπu). A split of a node into L/R is scored
//! by Σ_j (S_{j,L}²/n_L + S_{j,R}²/n_R) with S the per-side basis sums;
//! the best split must beat the parent score Σ_j S_j²/n or the node stays
//! a leaf.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// In-bag training indices, sorted, with bootstrap multiplicity.
        members: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Members of the leaf a query point falls into.
    pub fn leaf_members(&self, query: &[f64]) -> &[u32] {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if query[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                TreeNode::Leaf { members } => return members,
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

pub(crate) struct TreeBuilder<'a> {
    /// Covariates, n × d row-major.
    pub x: &'a [f64],
    pub n_features: usize,
    /// Basis values, n × j row-major.
    pub phi: &'a [f64],
    pub n_basis: usize,
    pub min_leaf: usize,
    pub mtry: usize,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> TreeBuilder<'a> {
    fn xv(&self, row: u32, feature: usize) -> f64 {
        self.x[row as usize * self.n_features + feature]
    }

    pub fn build(&self, in_bag: Vec<u32>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![TreeNode::Leaf { members: Vec::new() }];
        self.grow(&mut nodes, 0, in_bag, rng);
        Tree { nodes }
    }

    fn grow(&self, nodes: &mut Vec<TreeNode>, node: usize, members: Vec<u32>, rng: &mut ChaCha8Rng) {
        match self.best_split(&members, rng) {
            Some(best) => {
                let (left_members, right_members): (Vec<u32>, Vec<u32>) = members
                    .iter()
                    .partition(|&&i| self.xv(i, best.feature) <= best.threshold);
                let left = nodes.len() as u32;
                let right = left + 1;
                nodes.push(TreeNode::Leaf { members: Vec::new() });
                nodes.push(TreeNode::Leaf { members: Vec::new() });
                nodes[node] = TreeNode::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
                self.grow(nodes, left as usize, left_members, rng);
                self.grow(nodes, right as usize, right_members, rng);
            }
            None => {
                let mut members = members;
                members.sort_unstable();
                nodes[node] = TreeNode::Leaf { members };
            }
        }
    }

    /// Scans midpoints between consecutive distinct covariate values on an
    /// mtry-subset of features; returns the best split if it improves on
    /// the parent score and leaves both children at least `min_leaf` large.
    fn best_split(&self, members: &[u32], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let m = members.len();
        let j = self.n_basis;
        if m < 2 * self.min_leaf {
            return None;
        }

        let mut total = vec![0.0f64; j];
        for &i in members {
            let row = &self.phi[i as usize * j..(i as usize + 1) * j];
            for (t, p) in total.iter_mut().zip(row) {
                *t += p;
            }
        }
        let parent_score: f64 = total.iter().map(|s| s * s).sum::<f64>() / m as f64;

        let features = self.candidate_features(rng);
        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<u32> = members.to_vec();
        let mut prefix = vec![0.0f64; j];

        for &f in &features {
            sorted.sort_unstable_by(|&a, &b| {
                self.xv(a, f).total_cmp(&self.xv(b, f)).then(a.cmp(&b))
            });
            prefix.iter_mut().for_each(|v| *v = 0.0);
            for k in 1..m {
                let prev = sorted[k - 1];
                let row = &self.phi[prev as usize * j..(prev as usize + 1) * j];
                for (p, v) in prefix.iter_mut().zip(row) {
                    *p += v;
                }
                if k < self.min_leaf || m - k < self.min_leaf {
                    continue;
                }
                let xa = self.xv(prev, f);
                let xb = self.xv(sorted[k], f);
                if xa >= xb {
                    continue;
                }
                let (nl, nr) = (k as f64, (m - k) as f64);
                let mut score = 0.0;
                for (p, t) in prefix.iter().zip(&total) {
                    let sr = t - p;
                    score += p * p / nl + sr * sr / nr;
                }
                if best.as_ref().is_none_or(|b| score > b.score) {
                    // Midpoint; pulled back to xa if rounding crossed into xb,
                    // so routing by `<= threshold` always separates the two.
                    let mut threshold = 0.5 * (xa + xb);
                    if threshold >= xb {
                        threshold = xa;
                    }
                    best = Some(BestSplit {
                        score,
                        feature: f,
                        threshold,
                    });
                }
            }
        }

        best.filter(|b| b.score > parent_score)
    }

    fn candidate_features(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let d = self.n_features;
        if self.mtry >= d {
            return (0..d).collect();
        }
        // Partial Fisher-Yates over the feature indices.
        let mut pool: Vec<usize> = (0..d).collect();
        let mut picked = Vec::with_capacity(self.mtry);
        for k in 0..self.mtry {
            let idx = k + rng.random_range(0..(d - k));
            pool.swap(k, idx);
            picked.push(pool[k]);
        }
        picked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn basis(z: &[f64], n_basis: usize) -> Vec<f64> {
        let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut phi = Vec::with_capacity(z.len() * n_basis);
        for &v in z {
            let u = (v - zmin) / (zmax - zmin);
            for jj in 1..=n_basis {
                phi.push(std::f64::consts::SQRT_2 * (jj as f64 * std::f64::consts::PI * u).cos());
            }
        }
        phi
    }

    #[test]
    fn splits_separable_responses_at_the_boundary() {
        // z depends on the sign of x; the best split must isolate it.
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
        let z: Vec<f64> = x.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let phi = basis(&z, 5);
        let builder = TreeBuilder {
            x: &x,
            n_features: 1,
            phi: &phi,
            n_basis: 5,
            min_leaf: 10,
            mtry: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = builder.build((0..n as u32).collect(), &mut rng);
        match &tree.nodes[0] {
            TreeNode::Split { threshold, .. } => {
                assert!(threshold.abs() < 0.02, "root threshold {threshold}");
            }
            TreeNode::Leaf { .. } => panic!("expected a split at the root"),
        }
    }

    #[test]
    fn identical_responses_stay_single_leaf() {
        let n = 80;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let phi = vec![1.0; n * 3]; // constant basis rows: no split can improve
        let builder = TreeBuilder {
            x: &x,
            n_features: 1,
            phi: &phi,
            n_basis: 3,
            min_leaf: 10,
            mtry: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = builder.build((0..n as u32).collect(), &mut rng);
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.leaf_members(&[5.0]).len(), n);
    }

    #[test]
    fn children_respect_min_leaf() {
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let z: Vec<f64> = x.iter().map(|&v| if v < 0.13 { -1.0 } else { 1.0 }).collect();
        let phi = basis(&z, 4);
        let builder = TreeBuilder {
            x: &x,
            n_features: 1,
            phi: &phi,
            n_basis: 4,
            min_leaf: 25,
            mtry: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = builder.build((0..n as u32).collect(), &mut rng);
        for node in &tree.nodes {
            if let TreeNode::Leaf { members } = node {
                assert!(members.len() >= 25);
            }
        }
    }
}
