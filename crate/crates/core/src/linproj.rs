//! Least-squares machinery shared by every estimator: OLS and WLS linear
//! projections solved by Householder QR, plus the HC1 sandwich covariance.
//!
//! Designs always carry an explicit leading intercept column; nothing here
//! centers data implicitly.

use nalgebra::{DMatrix, DVector};

use crate::error::{HetdiagError, Result};

/// Relative tolerance on |R_jj| against the largest column norm below which a
/// column is treated as linearly dependent on the columns before it.
pub const RANK_TOL: f64 = 1e-10;

/// A fitted linear projection of `y` on the columns of a design matrix.
///
/// The design is retained so the robust covariance can be formed later.
#[derive(Debug, Clone)]
pub struct ProjectionFit {
    pub coef: DVector<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub n: usize,
    pub k: usize,
    design: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl ProjectionFit {
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Unscaled (Z'WZ)^-1.
    pub fn bread(&self) -> DMatrix<f64> {
        &self.r_inv * self.r_inv.transpose()
    }

    pub fn vcov_robust(&self) -> DMatrix<f64> {
        hc1_vcov(self)
    }

    /// Square roots of the HC1 diagonal.
    pub fn robust_se(&self) -> Vec<f64> {
        let v = hc1_vcov(self);
        (0..self.k).map(|j| v[(j, j)].max(0.0).sqrt()).collect()
    }

    /// Weighted sum of squared residuals, the minimized objective.
    pub fn objective(&self) -> f64 {
        match &self.weights {
            Some(w) => self.residuals.iter().zip(w).map(|(r, w)| w * r * r).sum(),
            None => self.residuals.iter().map(|r| r * r).sum(),
        }
    }
}

/// Design matrix `[1, columns..., x]`.
pub fn design_matrix(columns: &[&[f64]], x: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let n = columns
        .first()
        .map(|c| c.len())
        .or_else(|| x.map(|m| m.nrows()))
        .unwrap_or(0);
    let kx = x.map_or(0, |m| m.ncols());
    let k = 1 + columns.len() + kx;
    let mut z = DMatrix::zeros(n, k);
    z.column_mut(0).fill(1.0);
    for (j, col) in columns.iter().enumerate() {
        assert_eq!(col.len(), n, "design column {j} has wrong length");
        z.column_mut(j + 1).copy_from_slice(col);
    }
    if let Some(m) = x {
        assert_eq!(m.nrows(), n, "covariate block has wrong row count");
        z.columns_mut(1 + columns.len(), kx).copy_from(m);
    }
    z
}

struct Factor {
    r: DMatrix<f64>,
    qty: DVector<f64>,
}

fn factor(z: DMatrix<f64>, y: DVector<f64>) -> (Factor, f64) {
    let max_norm = z.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let k = z.ncols();
    let qr = z.qr();
    let mut qty = y;
    qr.q_tr_mul(&mut qty);
    let r = qr.r();
    (
        Factor {
            r,
            qty: qty.rows(0, k).into_owned(),
        },
        max_norm,
    )
}

fn dependent_columns(r: &DMatrix<f64>, max_norm: f64) -> Vec<usize> {
    let tol = RANK_TOL * max_norm;
    (0..r.ncols())
        .filter(|&j| j >= r.nrows() || r[(j, j)].abs() <= tol || !r[(j, j)].is_finite())
        .collect()
}

/// Columns of `z` that are (numerically) linear combinations of the columns
/// to their left. Empty when `z` has full column rank.
pub fn collinear_columns(z: &DMatrix<f64>) -> Vec<usize> {
    if z.nrows() < z.ncols() {
        let mut out = collinear_columns(&z.columns(0, z.nrows()).into_owned());
        out.extend(z.nrows()..z.ncols());
        return out;
    }
    let (f, max_norm) = factor(z.clone(), DVector::zeros(z.nrows()));
    dependent_columns(&f.r, max_norm)
}

fn solve(y: &[f64], z: &DMatrix<f64>, weights: Option<&[f64]>) -> Result<ProjectionFit> {
    let (n, k) = z.shape();
    if y.len() != n {
        return Err(HetdiagError::Dimension(format!(
            "y has {} rows, design has {n}",
            y.len()
        )));
    }
    if n < k {
        return Err(HetdiagError::RankDeficient {
            columns: collinear_columns(z),
        });
    }
    let (zs, ys) = match weights {
        Some(w) => {
            let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
            let mut zs = z.clone();
            for (i, s) in sw.iter().enumerate() {
                zs.row_mut(i).scale_mut(*s);
            }
            let ys = DVector::from_iterator(n, y.iter().zip(&sw).map(|(a, s)| a * s));
            (zs, ys)
        }
        None => (z.clone(), DVector::from_column_slice(y)),
    };
    let (f, max_norm) = factor(zs, ys);
    let bad = dependent_columns(&f.r, max_norm);
    if !bad.is_empty() {
        return Err(HetdiagError::RankDeficient { columns: bad });
    }
    let coef =
        f.r.solve_upper_triangular(&f.qty)
            .ok_or_else(|| HetdiagError::RankDeficient {
                columns: Vec::new(),
            })?;
    let r_inv =
        f.r.solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| HetdiagError::RankDeficient {
                columns: Vec::new(),
            })?;
    let fitted: Vec<f64> = (z * &coef).iter().copied().collect();
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(ProjectionFit {
        coef,
        fitted,
        residuals,
        weights: weights.map(<[f64]>::to_vec),
        n,
        k,
        design: z.clone(),
        r_inv,
    })
}

/// Ordinary least squares of `y` on the columns of `z`.
pub fn fit_ols(y: &[f64], z: &DMatrix<f64>) -> Result<ProjectionFit> {
    solve(y, z, None)
}

/// Weighted least squares, minimizing `sum_i w_i r_i^2`.
pub fn fit_wls(y: &[f64], z: &DMatrix<f64>, w: &[f64]) -> Result<ProjectionFit> {
    if w.len() != y.len() {
        return Err(HetdiagError::Dimension(format!(
            "{} weights for {} observations",
            w.len(),
            y.len()
        )));
    }
    if let Some(row) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(HetdiagError::NonpositiveWeight { row });
    }
    solve(y, z, Some(w))
}

/// HC1 heteroskedasticity-robust covariance,
/// `n/(n-k) (Z'WZ)^-1 Z'W diag(r^2) W Z (Z'WZ)^-1`.
pub fn hc1_vcov(fit: &ProjectionFit) -> DMatrix<f64> {
    let (n, k) = (fit.n, fit.k);
    // Q1 = W^(1/2) Z R^-1, scaled row-wise by the weighted residual.
    let mut a = &fit.design * &fit.r_inv;
    for i in 0..n {
        let s = match &fit.weights {
            Some(w) => w[i] * fit.residuals[i],
            None => fit.residuals[i],
        };
        a.row_mut(i).scale_mut(s);
    }
    let meat = a.transpose() * &a;
    let dof = if n > k {
        n as f64 / (n - k) as f64
    } else {
        0.0
    };
    let v = &fit.r_inv * meat * fit.r_inv.transpose() * dof;
    (&v + v.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_design(n: usize) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 / 3.0).collect();
        let d: Vec<f64> = (0..n).map(|i| ((i * 3) % 5 < 2) as u8 as f64).collect();
        (x, d)
    }

    #[test]
    fn exact_linear_data_is_recovered() {
        let (x, d) = toy_design(30);
        let y: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(x, d)| 1.0 + 2.0 * d + 3.0 * x)
            .collect();
        let z = design_matrix(&[&d, &x], None);
        let fit = fit_ols(&y, &z).unwrap();
        assert_relative_eq!(fit.coef[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coef[1], 2.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coef[2], 3.0, epsilon = 1e-10);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
        let v = hc1_vcov(&fit);
        assert!(v.iter().all(|e| e.abs() < 1e-18));
    }

    #[test]
    fn toy8_treatment_coefficient() {
        let y = [2.0, 0.0, 0.0, 0.0, 4.0, 4.0, 4.0, 0.0];
        let d = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let fit = fit_ols(&y, &design_matrix(&[&d, &x], None)).unwrap();
        assert_relative_eq!(fit.coef[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_weights_match_ols() {
        let (x, d) = toy_design(40);
        let y: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(x, d)| x * x - d + 0.5 * x * d)
            .collect();
        let z = design_matrix(&[&d, &x], None);
        let ols = fit_ols(&y, &z).unwrap();
        let wls = fit_wls(&y, &z, &vec![1.0; 40]).unwrap();
        for j in 0..3 {
            assert_relative_eq!(ols.coef[j], wls.coef[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn weight_scaling_leaves_coefficients() {
        let (x, d) = toy_design(40);
        let y: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x.sin() + d * x).collect();
        let w: Vec<f64> = (0..40).map(|i| 0.5 + (i % 4) as f64).collect();
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let z = design_matrix(&[&d, &x], None);
        let a = fit_wls(&y, &z, &w).unwrap();
        let b = fit_wls(&y, &z, &w2).unwrap();
        for j in 0..3 {
            assert_relative_eq!(a.coef[j], b.coef[j], max_relative = 1e-10);
        }
        assert_relative_eq!(b.objective(), 2.0 * a.objective(), max_relative = 1e-10);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let (x, d) = toy_design(10);
        let z = design_matrix(&[&d, &x], None);
        let mut w = vec![1.0; 10];
        w[4] = 0.0;
        let err = fit_wls(&x, &z, &w).unwrap_err();
        assert!(matches!(err, HetdiagError::NonpositiveWeight { row: 4 }));
    }

    #[test]
    fn collinear_column_is_reported() {
        let (x, d) = toy_design(20);
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let z = design_matrix(&[&d, &x, &x2], None);
        let err = fit_ols(&x, &z).unwrap_err();
        match err {
            HetdiagError::RankDeficient { columns } => assert_eq!(columns, vec![3]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(collinear_columns(&z), vec![3]);
    }

    #[test]
    fn weighted_normal_equations_hold() {
        let (x, d) = toy_design(50);
        let y: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(x, d)| (x * 1.7).cos() * 10.0 + d)
            .collect();
        let w: Vec<f64> = (0..50).map(|i| 1.0 + (i % 7) as f64 / 2.0).collect();
        let z = design_matrix(&[&d, &x], None);
        let fit = fit_wls(&y, &z, &w).unwrap();
        let wr = DVector::from_iterator(50, fit.residuals.iter().zip(&w).map(|(r, w)| r * w));
        let wy = DVector::from_iterator(50, y.iter().zip(&w).map(|(y, w)| y * w));
        let ne = z.transpose() * wr;
        let scale = (z.transpose() * wy).norm();
        assert!(ne.norm() <= 1e-8 * scale, "{}", ne.norm());
    }

    #[test]
    fn refitting_fitted_values_is_idempotent() {
        let (x, d) = toy_design(25);
        let y: Vec<f64> = x.iter().map(|v| v.exp().ln_1p()).collect();
        let z = design_matrix(&[&d, &x], None);
        let a = fit_ols(&y, &z).unwrap();
        let b = fit_ols(&a.fitted, &z).unwrap();
        for j in 0..3 {
            assert_relative_eq!(a.coef[j], b.coef[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn hc1_is_symmetric_psd() {
        let (x, d) = toy_design(60);
        let y: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(x, d)| x * d + (x * 5.0).sin())
            .collect();
        let fit = fit_ols(&y, &design_matrix(&[&d, &x], None)).unwrap();
        let v = fit.vcov_robust();
        assert_relative_eq!(v.clone(), v.transpose(), epsilon = 1e-15);
        let eig = v.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-12));
    }
}
