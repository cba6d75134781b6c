//! Ordinary least squares with full diagnostics: coefficients, standard
//! errors, R², residual standard error, F statistic, residuals.
//!
//! Coefficients come from a Householder QR factorization; the normal-matrix
//! inverse is never formed explicitly (standard errors use the row norms of
//! R⁻¹).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Relative tolerance on the pivoted-QR diagonal for rank detection.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressError {
    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("too few rows: {rows} rows for {cols} columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// A fitted linear model plus standard OLS diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Two-sided p-values; exact t for df ≤ 1000, normal approximation above.
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub residual_std_error: f64,
    pub f_statistic: f64,
    pub df_model: u64,
    pub df_residual: u64,
    pub n_observations: u64,
    /// Index of the constant column, when one was detected.
    pub intercept_index: Option<usize>,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.coefficients[i])
    }

    /// Significance stars matching the usual regression-table footer.
    pub fn stars(p: f64) -> &'static str {
        if p < 0.01 {
            "***"
        } else if p < 0.05 {
            "**"
        } else if p < 0.1 {
            "*"
        } else {
            ""
        }
    }
}

/// Detects a constant nonzero column (the intercept) in the design.
fn intercept_column(x: &DMatrix<f64>) -> Option<usize> {
    (0..x.ncols()).find(|&j| {
        let first = x[(0, j)];
        first != 0.0 && (0..x.nrows()).all(|i| x[(i, j)] == first)
    })
}

/// Names the columns that are linear combinations of earlier ones, via a
/// greedy Gram-Schmidt pass. Used only to report `RankDeficient`.
fn dependent_columns(x: &DMatrix<f64>, columns: &[String]) -> Vec<String> {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    let scale = (0..x.ncols())
        .map(|j| x.column(j).norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for (j, name) in columns.iter().enumerate() {
        let mut v = DVector::from_iterator(n, x.column(j).iter().copied());
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        // Re-orthogonalize once for numerical robustness.
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm <= RANK_TOLERANCE * scale {
            dependent.push(name.clone());
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Fits `y ≈ Xβ` by least squares and computes the standard diagnostics.
///
/// The design must have at least as many rows as columns and full column
/// rank (checked on the pivoted-QR diagonal at [`RANK_TOLERANCE`] relative
/// to its largest entry).
pub fn fit_ols(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    columns: &[String],
) -> Result<RegressionFit, RegressError> {
    let n = x.nrows();
    let p = x.ncols();
    if columns.len() != p {
        return Err(RegressError::SchemaMismatch(format!(
            "{} column names for {} columns",
            columns.len(),
            p
        )));
    }
    if y.len() != n {
        return Err(RegressError::SchemaMismatch(format!(
            "{n} rows but {} responses",
            y.len()
        )));
    }
    if n < p || p == 0 {
        return Err(RegressError::TooFewRows { rows: n, cols: p });
    }

    // Rank check on the column-pivoted QR diagonal (sorted by magnitude).
    let piv = x.clone().col_piv_qr();
    let r_piv = piv.r();
    let lead = r_piv[(0, 0)].abs();
    let rank = (0..p).take_while(|&i| r_piv[(i, i)].abs() > RANK_TOLERANCE * lead).count();
    if lead == 0.0 || rank < p {
        return Err(RegressError::RankDeficient {
            columns: dependent_columns(x, columns),
        });
    }

    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| RegressError::RankDeficient {
            columns: dependent_columns(x, columns),
        })?;

    let fitted = x * &beta;
    let resid = y - &fitted;
    let rss: f64 = resid.norm_squared();

    let intercept_index = intercept_column(x);
    let tss: f64 = if intercept_index.is_some() {
        let mean = y.mean();
        y.iter().map(|v| (v - mean).powi(2)).sum()
    } else {
        y.norm_squared()
    };

    let df_residual = (n - p) as u64;
    let df_model = (p - usize::from(intercept_index.is_some())) as u64;
    let sigma2 = if df_residual > 0 {
        rss / df_residual as f64
    } else {
        0.0
    };
    let residual_std_error = sigma2.sqrt();

    let r_squared = if tss > 0.0 {
        1.0 - rss / tss
    } else if rss <= f64::EPSILON * (n as f64) {
        1.0
    } else {
        0.0
    };
    let tss_df = if intercept_index.is_some() { n - 1 } else { n } as f64;
    let adjusted_r_squared = if df_residual > 0 && tss > 0.0 {
        1.0 - (rss / df_residual as f64) / (tss / tss_df)
    } else {
        r_squared
    };

    // Standard errors from the row norms of R^{-1}: diag((X'X)^{-1}) = ||e_j' R^{-1}||².
    let identity = DMatrix::<f64>::identity(p, p);
    let r_inv = r
        .solve_upper_triangular(&identity)
        .ok_or_else(|| RegressError::RankDeficient {
            columns: dependent_columns(x, columns),
        })?;
    let mut standard_errors = Vec::with_capacity(p);
    for j in 0..p {
        let row_norm2: f64 = (0..p).map(|k| r_inv[(j, k)].powi(2)).sum();
        standard_errors.push((sigma2 * row_norm2).sqrt());
    }

    let p_values = p_values_from_t(&beta, &standard_errors, df_residual);

    let f_statistic = if df_model > 0 && rss > 0.0 && df_residual > 0 {
        ((tss - rss) / df_model as f64) / (rss / df_residual as f64)
    } else if rss == 0.0 {
        f64::MAX // exact fit; reported as the largest finite value
    } else {
        0.0
    };
    let f_statistic = if f_statistic.is_finite() { f_statistic } else { f64::MAX };

    Ok(RegressionFit {
        columns: columns.to_vec(),
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        p_values,
        r_squared,
        adjusted_r_squared,
        residual_std_error,
        f_statistic,
        df_model,
        df_residual,
        n_observations: n as u64,
        intercept_index,
    })
}

fn p_values_from_t(beta: &DVector<f64>, se: &[f64], df: u64) -> Vec<f64> {
    beta.iter()
        .zip(se)
        .map(|(&b, &s)| {
            if s == 0.0 {
                return if b == 0.0 { 1.0 } else { 0.0 };
            }
            let t = (b / s).abs();
            // Normal approximation is indistinguishable from t at large df.
            let upper = if df > 1000 {
                let normal = Normal::new(0.0, 1.0).unwrap();
                1.0 - normal.cdf(t)
            } else if df > 0 {
                let dist = StudentsT::new(0.0, 1.0, df as f64).unwrap();
                1.0 - dist.cdf(t)
            } else {
                return 1.0;
            };
            (2.0 * upper).clamp(0.0, 1.0)
        })
        .collect()
}

impl RegressionFit {
    /// Predicted response for a row. Accepts either a full design row
    /// (length = columns) or, when the fit has an intercept, a row without
    /// the intercept entry (length = columns − 1) that is implicitly
    /// prefixed with 1 at the intercept position.
    pub fn predict(&self, row: &[f64]) -> Result<f64, RegressError> {
        let p = self.coefficients.len();
        if row.len() == p {
            return Ok(row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum());
        }
        if let Some(idx) = self.intercept_index {
            if row.len() == p - 1 {
                let mut total = self.coefficients[idx];
                let mut r = 0;
                for (j, b) in self.coefficients.iter().enumerate() {
                    if j != idx {
                        total += b * row[r];
                        r += 1;
                    }
                }
                return Ok(total);
            }
        }
        Err(RegressError::SchemaMismatch(format!(
            "row has {} values, fit has {} columns",
            row.len(),
            p
        )))
    }

    /// Residuals `y_i − x_i'β`.
    pub fn residuals(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>, RegressError> {
        if x.ncols() != self.coefficients.len() {
            return Err(RegressError::SchemaMismatch(format!(
                "design has {} columns, fit has {}",
                x.ncols(),
                self.coefficients.len()
            )));
        }
        if x.nrows() != y.len() {
            return Err(RegressError::SchemaMismatch(format!(
                "{} rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        let beta = DVector::from_vec(self.coefficients.clone());
        Ok(y - x * beta)
    }
}
