//! Estimators that target ATE/ATT/ATU directly instead of reading them off
//! the OLS coefficient.

use crate::data::Dataset;
use crate::diagnostics::{GroupMoments, OlsWeights};
use crate::error::{HetdiagError, Result};
use crate::linproj::{design_matrix, fit_ols, fit_wls, ProjectionFit};

/// Oaxaca-Blinder regression adjustment on the full covariate vector.
#[derive(Debug, Clone)]
pub struct RaEstimates {
    pub ate: f64,
    pub att: f64,
    pub atu: f64,
    /// `y` on `[1, X]` among treated units.
    pub treated_fit: ProjectionFit,
    /// `y` on `[1, X]` among untreated units.
    pub untreated_fit: ProjectionFit,
}

fn split_rows(ds: &Dataset) -> (Vec<usize>, Vec<usize>) {
    (0..ds.n()).partition(|&i| ds.d()[i] == 1.0)
}

/// Fits `y ~ 1 + X` separately by treatment group and imputes each unit's
/// missing outcome from the other group's fit.
pub fn regression_adjustment(ds: &Dataset) -> Result<RaEstimates> {
    let (treated, untreated) = split_rows(ds);
    let z = design_matrix(&[], Some(ds.x()));
    let y = ds.y();

    let fit_group = |rows: &[usize]| {
        let yg: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        fit_ols(&yg, &z.select_rows(rows))
    };
    let treated_fit = fit_group(&treated)?;
    let untreated_fit = fit_group(&untreated)?;

    let predict = |fit: &ProjectionFit, i: usize| -> f64 {
        z.row(i)
            .iter()
            .zip(fit.coef.iter())
            .map(|(a, b)| a * b)
            .sum()
    };
    let att = treated
        .iter()
        .map(|&i| y[i] - predict(&untreated_fit, i))
        .sum::<f64>()
        / treated.len() as f64;
    let atu = untreated
        .iter()
        .map(|&i| predict(&treated_fit, i) - y[i])
        .sum::<f64>()
        / untreated.len() as f64;
    let rho = treated.len() as f64 / ds.n() as f64;

    Ok(RaEstimates {
        ate: rho * att + (1.0 - rho) * atu,
        att,
        atu,
        treated_fit,
        untreated_fit,
    })
}

/// Unit weights that undo the OLS weights: `(1-rho)/w0` for treated and
/// `rho/w1` for untreated units.
pub fn correction_weights(d: &[f64], rho: f64, w: &OlsWeights) -> Vec<f64> {
    let (wt, wu) = ((1.0 - rho) / w.w0, rho / w.w1);
    d.iter()
        .map(|&di| if di == 1.0 { wt } else { wu })
        .collect()
}

/// Coefficient on `d` from WLS of `y` on `[1, d, p]` with
/// [`correction_weights`]; recovers the APLE.
pub fn wls_correction(
    y: &[f64],
    p: &[f64],
    d: &[f64],
    m: &GroupMoments,
    w: &OlsWeights,
) -> Result<f64> {
    if !(w.w0 > 0.0 && w.w1 > 0.0) {
        return Err(HetdiagError::Assumption2 {
            var_p_1: m.var_p_1,
            var_p_0: m.var_p_0,
        });
    }
    let weights = correction_weights(d, m.rho, w);
    let fit = fit_wls(y, &design_matrix(&[d, p], None), &weights)?;
    Ok(fit.coef[1])
}

/// Coefficient on `d` from WLS of `y` on `[1, d, X]` with weight 1 for
/// treated and `1/k` for untreated units.
pub fn downweight_untreated(ds: &Dataset, k: f64) -> Result<f64> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(HetdiagError::BadConfig(format!(
            "down-weighting factor k = {k} must be >= 1"
        )));
    }
    let weights: Vec<f64> = ds
        .d()
        .iter()
        .map(|&di| if di == 1.0 { 1.0 } else { 1.0 / k })
        .collect();
    let z = design_matrix(&[ds.d()], Some(ds.x()));
    let fit = if k == 1.0 {
        fit_ols(ds.y(), &z)?
    } else {
        fit_wls(ds.y(), &z, &weights)?
    };
    Ok(fit.coef[1])
}
