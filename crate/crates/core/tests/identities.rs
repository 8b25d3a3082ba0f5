mod common;

use common::{continuous_draw, rel};
use hetdiag::diagnostics::{diff_in_means_check, propensity_lpm};
use hetdiag::estimators::wls_correction;
use hetdiag::linproj::{design_matrix, fit_ols};
use hetdiag::{diagnose, Dataset};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_identities(seed in any::<u64>()) {
        let (_, s) = continuous_draw(seed);
        let ds = &s.dataset;
        let r = diagnose(ds).unwrap();
        let (w, m) = (&r.weights, &r.moments);
        prop_assert!(rel(r.tau_ols, w.w1 * r.aple1 + w.w0 * r.aple0) < 1e-8);
        prop_assert!(rel(r.aple, m.rho * r.aple1 + (1.0 - m.rho) * r.aple0) < 1e-8);
        prop_assert!(rel(w.delta, m.rho - w.w1) < 1e-12);
        prop_assert!(rel(w.w0 + w.w1, 1.0) < 1e-12);

        let p = propensity_lpm(ds.d(), ds.x()).unwrap().p;
        prop_assert!(rel(r.tau_ols, diff_in_means_check(ds.y(), &p, ds.d(), &r.components, w)) < 1e-8);

        // Partialling out X leaves y regressed on d - p.
        let resid_d: Vec<f64> = ds.d().iter().zip(&p).map(|(d, p)| d - p).collect();
        let fw = fit_ols(ds.y(), &design_matrix(&[&resid_d], None)).unwrap();
        prop_assert!(rel(r.tau_ols, fw.coef[1]) < 1e-8);

        let tau_w = wls_correction(ds.y(), &p, ds.d(), m, w).unwrap();
        prop_assert!(rel(tau_w, r.aple) < 1e-8);
    }

    #[test]
    fn row_order_does_not_matter(seed in any::<u64>()) {
        let (_, s) = continuous_draw(seed);
        let ds = &s.dataset;
        let rows: Vec<usize> = (0..ds.n()).rev().collect();
        let a = diagnose(ds).unwrap();
        let b = diagnose(&ds.select_rows(&rows).unwrap()).unwrap();
        prop_assert!(rel(a.tau_ols, b.tau_ols) < 1e-9);
        prop_assert!(rel(a.weights.w1, b.weights.w1) < 1e-9);
        prop_assert!(rel(a.aple0, b.aple0) < 1e-9);
    }

    #[test]
    fn outcome_scale_and_covariate_shift(seed in any::<u64>(), c in 0.1f64..50.0, shift in -10.0f64..10.0) {
        let (_, s) = continuous_draw(seed);
        let ds = &s.dataset;
        let a = diagnose(ds).unwrap();

        let scaled = ds.with_outcome(ds.y().iter().map(|v| c * v + 3.0).collect()).unwrap();
        let b = diagnose(&scaled).unwrap();
        prop_assert!(rel(b.tau_ols, c * a.tau_ols) < 1e-8);
        prop_assert!(rel(b.aple1, c * a.aple1) < 1e-8);
        prop_assert!(rel(b.weights.w1, a.weights.w1) < 1e-10);

        let x = ds.x().map(|v| 2.0 * v + shift);
        let moved = Dataset::new(ds.y().to_vec(), ds.d().to_vec(), x).unwrap();
        let m = diagnose(&moved).unwrap();
        prop_assert!(rel(m.tau_ols, a.tau_ols) < 1e-8);
        prop_assert!(rel(m.weights.w0, a.weights.w0) < 1e-8);
        prop_assert!(rel(m.aple, a.aple) < 1e-8);
    }
}

#[test]
fn homogeneous_effect_gives_zero_bias() {
    let cfg = hetdiag::oracle::DgpConfig {
        n: 400,
        law: hetdiag::oracle::CovariateLaw::Uniform { k: 1 },
        propensity_intercept: 0.2,
        propensity_slopes: vec![0.5],
        treated_outcome: (2.5, 1.0),
        untreated_outcome: (0.5, 1.0),
        noise_sd: 0.0,
        seed: 9,
    };
    let s = hetdiag::oracle::synth_dgp(&cfg).unwrap();
    let r = diagnose(&s.dataset).unwrap();
    // With one covariate the fitted score is affine in the true one, so y is
    // exactly linear in it within each group.
    for v in [r.tau_ols, r.aple, r.aple1, r.aple0] {
        assert!(rel(v, 2.0) < 1e-9, "{v}");
    }
}
