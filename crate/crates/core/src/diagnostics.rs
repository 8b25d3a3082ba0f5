//! What OLS estimates under heterogeneous effects.
//!
//! The coefficient on a binary treatment in `y ~ 1 + d + X` is a convex
//! combination of two group-specific average partial linear effects (APLE),
//! each built from a separate regression of `y` on the linear-probability
//! propensity score `p(X)`:
//!
//! ```text
//! tau_ols = w1 * aple1 + w0 * aple0
//! w1 = (1-rho) Var[p|d=0] / (rho Var[p|d=1] + (1-rho) Var[p|d=0])
//! ```
//!
//! All quantities are sample analogues; with every projection fitted on the
//! same sample and conditional variances dividing by the group size, the
//! decomposition is an exact in-sample identity, which [`diagnose`] checks.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{HetdiagError, Result};
use crate::linproj::{design_matrix, fit_ols};

/// A within-group variance of `p` at or below this fraction of `Var[p]`
/// counts as zero.
pub const ASSUMPTION2_TOL: f64 = 1e-12;

/// Tolerance for the internal decomposition check, relative to `1 + |tau|`.
pub const IDENTITY_TOL: f64 = 1e-6;

/// Linear-probability propensity score: fitted values of `d` on `[1, X]`.
#[derive(Debug, Clone, Serialize)]
pub struct PropensityFit {
    pub p: Vec<f64>,
    /// Intercept followed by the covariate slopes.
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMoments {
    pub rho: f64,
    pub n_treated: usize,
    pub n_untreated: usize,
    pub mean_p: f64,
    pub var_p: f64,
    pub mean_p_1: f64,
    pub mean_p_0: f64,
    pub var_p_1: f64,
    pub var_p_0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlsWeights {
    pub w1: f64,
    pub w0: f64,
    pub delta: f64,
    /// Rule-of-thumb `w0` under equal conditional variances (= rho).
    pub w0_star: f64,
    /// Rule-of-thumb `delta` under equal conditional variances (= 2 rho - 1).
    pub delta_star: f64,
}

/// Intercepts and slopes of the group-wise regressions of `y` on `p(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApleComponents {
    pub alpha1: f64,
    pub gamma1: f64,
    pub alpha0: f64,
    pub gamma0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApleEffects {
    pub aple: f64,
    pub aple1: f64,
    pub aple0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub outcome: String,
    pub treatment: String,
    pub tau_ols: f64,
    pub tau_ols_se: f64,
    /// Names for `ols_coef`: treatment, covariates, then `_cons`.
    pub regressors: Vec<String>,
    pub ols_coef: Vec<f64>,
    pub ols_se: Vec<f64>,
    pub propensity_coef: Vec<f64>,
    pub moments: GroupMoments,
    pub weights: OlsWeights,
    pub components: ApleComponents,
    /// Reported as ATE.
    pub aple: f64,
    /// Reported as ATT.
    pub aple1: f64,
    /// Reported as ATU.
    pub aple0: f64,
    pub identity_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    Ate,
    Att,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasDecomposition {
    pub target: Target,
    /// `delta` for ATE, `w0` for ATT.
    pub multiplier: f64,
    /// `aple0 - aple1`.
    pub heterogeneity_gap: f64,
    pub bias: f64,
    /// `tau_ols - aple` (ATE) or `tau_ols - aple1` (ATT), computed directly.
    pub direct_difference: f64,
}

pub fn propensity_lpm(d: &[f64], x: &DMatrix<f64>) -> Result<PropensityFit> {
    let z = design_matrix(&[], Some(x));
    let fit = fit_ols(d, &z)?;
    Ok(PropensityFit {
        p: fit.fitted,
        coef: fit.coef.iter().copied().collect(),
    })
}

pub fn group_moments(p: &[f64], d: &[f64]) -> Result<GroupMoments> {
    if p.len() != d.len() {
        return Err(HetdiagError::Dimension(format!(
            "{} scores for {} units",
            p.len(),
            d.len()
        )));
    }
    let n = p.len();
    let n1 = d.iter().filter(|&&v| v == 1.0).count();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(HetdiagError::DegenerateGroup {
            treated: n1,
            untreated: n0,
        });
    }
    let (mut s1, mut s0) = (0.0, 0.0);
    for (&pi, &di) in p.iter().zip(d) {
        if di == 1.0 {
            s1 += pi;
        } else {
            s0 += pi;
        }
    }
    let mean_p_1 = s1 / n1 as f64;
    let mean_p_0 = s0 / n0 as f64;
    let mean_p = (s1 + s0) / n as f64;
    let (mut v1, mut v0, mut v) = (0.0, 0.0, 0.0);
    for (&pi, &di) in p.iter().zip(d) {
        if di == 1.0 {
            v1 += (pi - mean_p_1).powi(2);
        } else {
            v0 += (pi - mean_p_0).powi(2);
        }
        v += (pi - mean_p).powi(2);
    }
    let rho = n1 as f64 / n as f64;
    let m = GroupMoments {
        rho,
        n_treated: n1,
        n_untreated: n0,
        mean_p,
        var_p: v / n as f64,
        mean_p_1,
        mean_p_0,
        var_p_1: v1 / n1 as f64,
        var_p_0: v0 / n0 as f64,
    };
    check_assumption2(&m)?;
    Ok(m)
}

fn check_assumption2(m: &GroupMoments) -> Result<()> {
    // A numerically constant score (LPM R^2 below 1e-12) makes the
    // relative test meaningless, so it is caught against Var[d] first.
    let floor = ASSUMPTION2_TOL * m.var_p;
    let constant = m.var_p <= ASSUMPTION2_TOL * m.rho * (1.0 - m.rho);
    if constant || m.var_p_1 <= floor || m.var_p_0 <= floor {
        return Err(HetdiagError::Assumption2 {
            var_p_1: m.var_p_1,
            var_p_0: m.var_p_0,
        });
    }
    Ok(())
}

pub fn ols_weights(m: &GroupMoments) -> OlsWeights {
    let a0 = m.rho * m.var_p_1;
    let a1 = (1.0 - m.rho) * m.var_p_0;
    let w1 = a1 / (a0 + a1);
    let w0 = a0 / (a0 + a1);
    OlsWeights {
        w1,
        w0,
        delta: m.rho - w1,
        w0_star: m.rho,
        delta_star: 2.0 * m.rho - 1.0,
    }
}

fn group_line(y: &[f64], p: &[f64], d: &[f64], group: f64) -> Result<(f64, f64)> {
    let (yg, pg): (Vec<f64>, Vec<f64>) = y
        .iter()
        .zip(p)
        .zip(d)
        .filter(|(_, &di)| di == group)
        .map(|((&yi, &pi), _)| (yi, pi))
        .unzip();
    let fit = fit_ols(&yg, &design_matrix(&[&pg], None))?;
    Ok((fit.coef[0], fit.coef[1]))
}

pub fn aple_components(y: &[f64], p: &[f64], d: &[f64]) -> Result<ApleComponents> {
    if y.len() != p.len() {
        return Err(HetdiagError::Dimension(format!(
            "{} outcomes for {} scores",
            y.len(),
            p.len()
        )));
    }
    let m = group_moments(p, d)?;
    let rank_to_a2 = |e: HetdiagError| match e {
        HetdiagError::RankDeficient { .. } => HetdiagError::Assumption2 {
            var_p_1: m.var_p_1,
            var_p_0: m.var_p_0,
        },
        other => other,
    };
    let (alpha1, gamma1) = group_line(y, p, d, 1.0).map_err(rank_to_a2)?;
    let (alpha0, gamma0) = group_line(y, p, d, 0.0).map_err(rank_to_a2)?;
    Ok(ApleComponents {
        alpha1,
        gamma1,
        alpha0,
        gamma0,
    })
}

pub fn aple_effects(c: &ApleComponents, m: &GroupMoments, mean_p_all: f64) -> ApleEffects {
    let level = c.alpha1 - c.alpha0;
    let slope = c.gamma1 - c.gamma0;
    ApleEffects {
        aple: level + slope * mean_p_all,
        aple1: level + slope * m.mean_p_1,
        aple0: level + slope * m.mean_p_0,
    }
}

/// Difference in means minus the `p(X)` adjustment; equals `tau_ols`.
pub fn diff_in_means_check(
    y: &[f64],
    p: &[f64],
    d: &[f64],
    c: &ApleComponents,
    w: &OlsWeights,
) -> f64 {
    let (mut sy1, mut sy0, mut sp1, mut sp0, mut n1) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for ((&yi, &pi), &di) in y.iter().zip(p).zip(d) {
        if di == 1.0 {
            sy1 += yi;
            sp1 += pi;
            n1 += 1;
        } else {
            sy0 += yi;
            sp0 += pi;
        }
    }
    let n0 = (y.len() - n1) as f64;
    let n1 = n1 as f64;
    let raw = sy1 / n1 - sy0 / n0;
    raw - (w.w0 * c.gamma1 + w.w1 * c.gamma0) * (sp1 / n1 - sp0 / n0)
}

pub fn decompose_bias(report: &DiagnosticsReport, target: Target) -> BiasDecomposition {
    let gap = report.aple0 - report.aple1;
    let (multiplier, direct) = match target {
        Target::Ate => (report.weights.delta, report.tau_ols - report.aple),
        Target::Att => (report.weights.w0, report.tau_ols - report.aple1),
    };
    BiasDecomposition {
        target,
        multiplier,
        heterogeneity_gap: gap,
        bias: multiplier * gap,
        direct_difference: direct,
    }
}

/// Runs the full decomposition on a dataset and verifies the identity
/// `tau_ols = w1 * aple1 + w0 * aple0`.
pub fn diagnose(ds: &Dataset) -> Result<DiagnosticsReport> {
    let (y, d, x) = (ds.y(), ds.d(), ds.x());
    let full = fit_ols(y, &design_matrix(&[d], Some(x)))?;
    let prop = propensity_lpm(d, x)?;
    let moments = group_moments(&prop.p, d)?;
    let weights = ols_weights(&moments);
    let components = aple_components(y, &prop.p, d)?;
    let effects = aple_effects(&components, &moments, moments.mean_p);

    let tau = full.coef[1];
    let residual = (tau - (weights.w1 * effects.aple1 + weights.w0 * effects.aple0)).abs();
    if residual.is_nan() || residual > IDENTITY_TOL * (1.0 + tau.abs()) {
        return Err(HetdiagError::IdentityBroken { residual, tau });
    }

    // Reorder to treatment, covariates, constant.
    let se = full.robust_se();
    let order: Vec<usize> = (1..full.k).chain(std::iter::once(0)).collect();
    let mut regressors = vec![ds.treatment_name().to_string()];
    regressors.extend(ds.covariate_names().iter().cloned());
    regressors.push("_cons".into());

    Ok(DiagnosticsReport {
        n: ds.n(),
        outcome: ds.outcome_name().to_string(),
        treatment: ds.treatment_name().to_string(),
        tau_ols: tau,
        tau_ols_se: se[1],
        regressors,
        ols_coef: order.iter().map(|&j| full.coef[j]).collect(),
        ols_se: order.iter().map(|&j| se[j]).collect(),
        propensity_coef: prop.coef,
        moments,
        weights,
        components,
        aple: effects.aple,
        aple1: effects.aple1,
        aple0: effects.aple0,
        identity_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const Y: [f64; 8] = [2.0, 0.0, 0.0, 0.0, 4.0, 4.0, 4.0, 0.0];
    const D: [f64; 8] = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
    const X: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];

    fn toy8() -> Dataset {
        Dataset::new(Y.to_vec(), D.to_vec(), DMatrix::from_column_slice(8, 1, &X)).unwrap()
    }

    #[test]
    fn toy8_propensity_is_stratum_share() {
        let p = propensity_lpm(&D, &DMatrix::from_column_slice(8, 1, &X))
            .unwrap()
            .p;
        for (pi, xi) in p.iter().zip(X) {
            let want = if xi == 0.0 { 0.25 } else { 0.75 };
            assert_relative_eq!(*pi, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn toy8_moments_and_weights() {
        let p: Vec<f64> = X
            .iter()
            .map(|&x| if x == 0.0 { 0.25 } else { 0.75 })
            .collect();
        let m = group_moments(&p, &D).unwrap();
        assert_eq!(m.rho, 0.5);
        assert_relative_eq!(m.mean_p_1, 0.625, epsilon = 1e-15);
        assert_relative_eq!(m.mean_p_0, 0.375, epsilon = 1e-15);
        assert_relative_eq!(m.var_p_1, 0.046875, epsilon = 1e-15);
        assert_relative_eq!(m.var_p_0, 0.046875, epsilon = 1e-15);
        let w = ols_weights(&m);
        assert_relative_eq!(w.w1, 0.5, epsilon = 1e-15);
        assert_relative_eq!(w.w0, 0.5, epsilon = 1e-15);
        assert_relative_eq!(w.delta, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn toy8_components_and_effects() {
        let p: Vec<f64> = X
            .iter()
            .map(|&x| if x == 0.0 { 0.25 } else { 0.75 })
            .collect();
        let c = aple_components(&Y, &p, &D).unwrap();
        assert_relative_eq!(c.alpha1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.gamma1, 4.0, epsilon = 1e-12);
        assert_relative_eq!(c.alpha0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.gamma0, 0.0, epsilon = 1e-12);
        let m = group_moments(&p, &D).unwrap();
        let e = aple_effects(&c, &m, m.mean_p);
        assert_relative_eq!(e.aple1, 3.5, epsilon = 1e-12);
        assert_relative_eq!(e.aple0, 2.5, epsilon = 1e-12);
        assert_relative_eq!(e.aple, 3.0, epsilon = 1e-12);
        let w = ols_weights(&m);
        assert_relative_eq!(
            diff_in_means_check(&Y, &p, &D, &c, &w),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn toy8_full_report() {
        let r = diagnose(&toy8()).unwrap();
        assert_relative_eq!(r.tau_ols, 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.aple, 3.0, epsilon = 1e-12);
        assert!(r.identity_residual < 1e-12);
        assert_eq!(r.regressors, vec!["d", "x1", "_cons"]);
        let b = decompose_bias(&r, Target::Ate);
        assert_relative_eq!(b.multiplier, 0.0, epsilon = 1e-12);
        assert_relative_eq!(b.heterogeneity_gap, -1.0, epsilon = 1e-12);
        assert_relative_eq!(b.bias, 0.0, epsilon = 1e-12);
        assert_relative_eq!(b.direct_difference, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn homogeneous_exact_data() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 13) % 17) as f64 / 4.0).collect();
        let d: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| (*v > 2.0 || i % 5 == 0) as u8 as f64)
            .collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(x, d)| 1.0 + 2.0 * d + 3.0 * x)
            .collect();
        let ds = Dataset::new(y, d, DMatrix::from_column_slice(40, 1, &x)).unwrap();
        let r = diagnose(&ds).unwrap();
        assert_relative_eq!(r.tau_ols, 2.0, epsilon = 1e-10);
        assert_relative_eq!(r.aple1, 2.0, epsilon = 1e-10);
        assert_relative_eq!(r.aple0, 2.0, epsilon = 1e-10);
        for t in [Target::Ate, Target::Att] {
            assert!(decompose_bias(&r, t).bias.abs() < 1e-9);
        }
    }

    #[test]
    fn constant_score_violates_assumption2() {
        let p = vec![0.4; 10];
        let d: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let err = group_moments(&p, &d).unwrap_err();
        assert_eq!(err.code(), "E_ASSUMPTION2");
    }

    #[test]
    fn covariate_orthogonal_to_treatment_violates_assumption2() {
        // x takes each value equally often in both groups.
        let x = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 4.0, 4.0];
        let d = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let y = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let ds =
            Dataset::new(y.to_vec(), d.to_vec(), DMatrix::from_column_slice(8, 1, &x)).unwrap();
        let p = propensity_lpm(&d, ds.x()).unwrap().p;
        assert!(p.iter().all(|v| (v - 0.5).abs() < 1e-12));
        assert_eq!(diagnose(&ds).unwrap_err().code(), "E_ASSUMPTION2");
    }

    #[test]
    fn zero_and_shared_line_outcomes() {
        let p = [0.1, 0.3, 0.5, 0.2, 0.6, 0.9];
        let d = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let c = aple_components(&[0.0; 6], &p, &d).unwrap();
        assert!([c.alpha1, c.gamma1, c.alpha0, c.gamma0]
            .iter()
            .all(|v| v.abs() < 1e-12));
        let y: Vec<f64> = p.iter().map(|v| 1.5 - 4.0 * v).collect();
        let c = aple_components(&y, &p, &d).unwrap();
        assert_relative_eq!(c.alpha1, 1.5, epsilon = 1e-12);
        assert_relative_eq!(c.alpha0, 1.5, epsilon = 1e-12);
        assert_relative_eq!(c.gamma1, -4.0, epsilon = 1e-12);
        assert_relative_eq!(c.gamma0, -4.0, epsilon = 1e-12);
    }

    #[test]
    fn equal_slopes_collapse_effects() {
        let c = ApleComponents {
            alpha1: 3.0,
            gamma1: 2.0,
            alpha0: 1.0,
            gamma0: 2.0,
        };
        let p = [0.1, 0.3, 0.5, 0.2, 0.6, 0.9];
        let d = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let m = group_moments(&p, &d).unwrap();
        let e = aple_effects(&c, &m, m.mean_p);
        assert_eq!(e.aple, 2.0);
        assert_eq!(e.aple1, 2.0);
        assert_eq!(e.aple0, 2.0);
    }

    #[test]
    fn high_treatment_share_reference_weights() {
        // rho = 0.875 with conditional variances chosen so that w0 = 0.861.
        let rho = 0.875;
        let var_p_0 = 1.0;
        let var_p_1 = 0.861 * (1.0 - rho) * var_p_0 / (rho * (1.0 - 0.861));
        let m = GroupMoments {
            rho,
            n_treated: 7,
            n_untreated: 1,
            mean_p: 0.0,
            var_p: 1.0,
            mean_p_1: 0.0,
            mean_p_0: 0.0,
            var_p_1,
            var_p_0,
        };
        let w = ols_weights(&m);
        assert_relative_eq!(w.w0, 0.861, epsilon = 1e-12);
        assert!((w.delta - 0.736).abs() < 5e-4);
        assert_eq!(w.w0_star, 0.875);
        assert_eq!(w.delta_star, 0.75);
    }

    #[test]
    fn equal_variances_give_rule_of_thumb() {
        let m = GroupMoments {
            rho: 0.3,
            n_treated: 3,
            n_untreated: 7,
            mean_p: 0.3,
            var_p: 0.1,
            mean_p_1: 0.4,
            mean_p_0: 0.25,
            var_p_1: 0.02,
            var_p_0: 0.02,
        };
        let w = ols_weights(&m);
        assert_relative_eq!(w.w0, 0.3, epsilon = 1e-15);
        assert_relative_eq!(w.delta, -0.4, epsilon = 1e-15);
    }
}
