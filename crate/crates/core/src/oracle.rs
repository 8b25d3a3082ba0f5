//! Independent cross-checks and synthetic data.
//!
//! Everything here is computed by a route that does not go through
//! [`crate::diagnostics`]: stratum contrasts and Angrist's variance weights,
//! raw-moment formulas for the conditional variances of a linear propensity
//! score, an augmented interaction regression, and data generators whose
//! population estimands are known in closed form.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{HetdiagError, Result};
use crate::linproj::{design_matrix, fit_ols};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratum {
    /// P(x_s = 1).
    pub share: f64,
    /// P(d = 1 | x_s = 1).
    pub treated_share: f64,
    /// E(y | d=1, x_s=1) - E(y | d=0, x_s=1); `None` when the stratum has no
    /// treated or no untreated units.
    pub contrast: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumTable {
    pub strata: Vec<Stratum>,
}

impl StratumTable {
    /// Empirical table from stratum labels `0..S`. Empty strata are kept with
    /// zero share.
    pub fn from_sample(y: &[f64], d: &[f64], labels: &[usize]) -> Self {
        let s = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut count = vec![[0usize; 2]; s];
        let mut sum = vec![[0.0f64; 2]; s];
        for ((&yi, &di), &l) in y.iter().zip(d).zip(labels) {
            let g = (di == 1.0) as usize;
            count[l][g] += 1;
            sum[l][g] += yi;
        }
        let n = labels.len() as f64;
        let strata = (0..s)
            .map(|l| {
                let [c0, c1] = count[l];
                let total = c0 + c1;
                Stratum {
                    share: total as f64 / n,
                    treated_share: if total > 0 {
                        c1 as f64 / total as f64
                    } else {
                        0.0
                    },
                    contrast: (c0 > 0 && c1 > 0)
                        .then(|| sum[l][1] / c1 as f64 - sum[l][0] / c0 as f64),
                }
            })
            .collect();
        Self { strata }
    }

    /// Strata whose contrast is undefined because everyone or no one is treated.
    pub fn pure_strata(&self) -> Vec<usize> {
        self.strata
            .iter()
            .enumerate()
            .filter(|(_, s)| s.share > 0.0 && s.contrast.is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stratum labels of a dummy-coded design: 0 when every dummy is zero,
/// otherwise one plus the index of the active dummy.
pub fn stratum_labels(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.nrows())
        .map(|i| {
            (0..x.ncols())
                .find(|&j| x[(i, j)] == 1.0)
                .map_or(0, |j| j + 1)
        })
        .collect()
}

/// Treatment coefficient of a regression saturated in strata, computed as a
/// weighted average of stratum contrasts with weights proportional to
/// `P(x_s) P(d=1|x_s) P(d=0|x_s)`.
pub fn angrist_tau(table: &StratumTable) -> Result<(f64, Vec<f64>)> {
    let raw: Vec<f64> = table
        .strata
        .iter()
        .map(|s| s.share * s.treated_share * (1.0 - s.treated_share))
        .collect();
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(HetdiagError::NoVariation);
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let tau = table
        .strata
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(s, w)| w * s.contrast.unwrap_or(0.0))
        .sum();
    Ok((tau, weights))
}

/// Coefficient on `d` in the regression of `y` on
/// `[1, d, p, d * (p - E[p | d=j])]`. Equals `aple_j`.
pub fn interaction_oracle(y: &[f64], p: &[f64], d: &[f64], group: u8) -> Result<f64> {
    let g = if group == 1 { 1.0 } else { 0.0 };
    let (sum, cnt) = p
        .iter()
        .zip(d)
        .filter(|(_, &di)| di == g)
        .fold((0.0, 0usize), |(s, c), (&pi, _)| (s + pi, c + 1));
    if cnt == 0 {
        return Err(HetdiagError::DegenerateGroup {
            treated: d.iter().filter(|&&v| v == 1.0).count(),
            untreated: d.iter().filter(|&&v| v == 0.0).count(),
        });
    }
    let centre = sum / cnt as f64;
    let inter: Vec<f64> = p
        .iter()
        .zip(d)
        .map(|(&pi, &di)| di * (pi - centre))
        .collect();
    let fit = fit_ols(y, &design_matrix(&[d, p, &inter], None))?;
    Ok(fit.coef[1])
}

/// Raw moments `E[p], E[p^2], E[p^3]`.
pub fn raw_moments(p: &[f64]) -> [f64; 3] {
    let n = p.len() as f64;
    let (mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0);
    for &v in p {
        m1 += v;
        m2 += v * v;
        m3 += v * v * v;
    }
    [m1 / n, m2 / n, m3 / n]
}

/// `(a0, a1)` from raw moments of a propensity score that equals `E(d|X)`:
/// `a0 = rho Var[p|d=1]`, `a1 = (1-rho) Var[p|d=0]`.
pub fn moment_variances_from_raw([m1, m2, m3]: [f64; 3]) -> (f64, f64) {
    let a0 = m3 - m2 * m2 / m1;
    let a1 = m2 - m3 - (m1 - m2).powi(2) / (1.0 - m1);
    (a0, a1)
}

/// [`moment_variances_from_raw`] on the sample raw moments of `p`.
/// Requires `mean(p)` strictly inside (0, 1).
pub fn moment_variances(p: &[f64]) -> (f64, f64) {
    moment_variances_from_raw(raw_moments(p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CovariateLaw {
    /// Exhaustive strata with the given population shares. Covariates are
    /// indicators for strata `1..S`; stratum 0 is the baseline. With `exact`
    /// set, stratum sizes and treated counts are deterministic
    /// (`n * share` and `size * p_s`, which must be integers) and rows are
    /// laid out stratum by stratum, treated first.
    Saturated { shares: Vec<f64>, exact: bool },
    /// `k` independent U(0, 1) covariates.
    Uniform { k: usize },
}

/// Data generating process with a linear propensity score and outcomes linear
/// in it: `P(d=1|X) = a_p + X b_p`, `y = alpha_j + gamma_j p(X) + sigma e`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgpConfig {
    pub n: usize,
    pub law: CovariateLaw,
    pub propensity_intercept: f64,
    pub propensity_slopes: Vec<f64>,
    /// `(alpha_1, gamma_1)`.
    pub treated_outcome: (f64, f64),
    /// `(alpha_0, gamma_0)`.
    pub untreated_outcome: (f64, f64),
    pub noise_sd: f64,
    pub seed: u64,
}

/// Population estimands implied by a [`DgpConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truth {
    pub rho: f64,
    pub aple: f64,
    pub aple1: f64,
    pub aple0: f64,
    pub w1: f64,
    pub w0: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    pub truth: Truth,
    /// Population propensity of every row.
    pub propensity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub shift: f64,
    pub rho: f64,
    pub w1: f64,
    pub w0: f64,
}

impl DgpConfig {
    /// Eight rows, one binary covariate, treated shares 1/4 and 3/4 in the two
    /// strata, `y = 1 + 4p` for treated and `0` for untreated units.
    pub fn toy8() -> Self {
        Self {
            n: 8,
            law: CovariateLaw::Saturated {
                shares: vec![0.5, 0.5],
                exact: true,
            },
            propensity_intercept: 0.25,
            propensity_slopes: vec![0.5],
            treated_outcome: (1.0, 4.0),
            untreated_outcome: (0.0, 0.0),
            noise_sd: 0.0,
            seed: 0,
        }
    }

    /// Random saturated design: 2-6 strata, shares bounded away from zero,
    /// stratum propensities in (0.05, 0.95), heterogeneous outcome lines.
    pub fn random_saturated(seed: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = rng.random_range(2..=6usize);
        let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let shares = raw.iter().map(|v| v / total).collect();
        let mut p: Vec<f64> = (0..s).map(|_| rng.random_range(0.05..0.95)).collect();
        if (p[1] - p[0]).abs() < 0.05 {
            p[1] = if p[0] < 0.5 { p[0] + 0.3 } else { p[0] - 0.3 };
        }
        Self {
            n,
            law: CovariateLaw::Saturated {
                shares,
                exact: false,
            },
            propensity_intercept: p[0],
            propensity_slopes: p[1..].iter().map(|v| v - p[0]).collect(),
            treated_outcome: (rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0)),
            untreated_outcome: (rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0)),
            noise_sd: rng.random_range(0.1..2.0),
            seed: rng.random(),
        }
    }

    /// Random continuous design with `1..=4` uniform covariates and mean
    /// propensity `rho`.
    pub fn random_continuous(seed: u64, n: usize, rho: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..=4usize);
        let mut slopes: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spread: f64 = slopes.iter().map(|b| b.abs()).sum::<f64>() / 2.0;
        let room = 0.9 * rho.min(1.0 - rho);
        if spread > 0.0 {
            slopes.iter_mut().for_each(|b| *b *= room / spread);
        }
        let intercept = rho - slopes.iter().sum::<f64>() / 2.0;
        Self {
            n,
            law: CovariateLaw::Uniform { k },
            propensity_intercept: intercept,
            propensity_slopes: slopes,
            treated_outcome: (rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0)),
            untreated_outcome: (rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0)),
            noise_sd: rng.random_range(0.1..2.0),
            seed: rng.random(),
        }
    }

    /// Stratum propensities `p_s` of a saturated design.
    pub fn stratum_propensities(&self) -> Result<Vec<f64>> {
        match &self.law {
            CovariateLaw::Saturated { shares, .. } => {
                if self.propensity_slopes.len() + 1 != shares.len() {
                    return Err(HetdiagError::BadConfig(format!(
                        "{} strata need {} slopes, got {}",
                        shares.len(),
                        shares.len() - 1,
                        self.propensity_slopes.len()
                    )));
                }
                Ok(std::iter::once(self.propensity_intercept)
                    .chain(
                        self.propensity_slopes
                            .iter()
                            .map(|b| self.propensity_intercept + b),
                    )
                    .collect())
            }
            CovariateLaw::Uniform { .. } => Err(HetdiagError::BadConfig(
                "covariates are not stratified".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HetdiagError::BadConfig(m));
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd = {}", self.noise_sd));
        }
        match &self.law {
            CovariateLaw::Saturated { shares, exact } => {
                if shares.len() < 2 {
                    return bad("a saturated design needs at least two strata".into());
                }
                if shares.iter().any(|&s| s.is_nan() || s <= 0.0)
                    || (shares.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return bad("stratum shares must be positive and sum to one".into());
                }
                let p = self.stratum_propensities()?;
                if let Some(v) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                    return bad(format!("stratum propensity {v} outside (0, 1)"));
                }
                if *exact {
                    for (s, ps) in shares.iter().zip(&p) {
                        let size = self.n as f64 * s;
                        let treated = size * ps;
                        if (size - size.round()).abs() > 1e-9
                            || (treated - treated.round()).abs() > 1e-9
                        {
                            return bad(
                                "exact layout needs integer stratum and treated counts".into()
                            );
                        }
                    }
                }
            }
            CovariateLaw::Uniform { k } => {
                if *k == 0 || self.propensity_slopes.len() != *k {
                    return bad(format!(
                        "{k} covariates with {} slopes",
                        self.propensity_slopes.len()
                    ));
                }
                let lo: f64 = self.propensity_intercept
                    + self
                        .propensity_slopes
                        .iter()
                        .map(|b| b.min(0.0))
                        .sum::<f64>();
                let hi: f64 = self.propensity_intercept
                    + self
                        .propensity_slopes
                        .iter()
                        .map(|b| b.max(0.0))
                        .sum::<f64>();
                if lo < 0.0 || hi > 1.0 {
                    return bad(format!("propensity ranges over [{lo}, {hi}]"));
                }
            }
        }
        Ok(())
    }

    /// Population `E[p], E[p^2], E[p^3]`.
    pub fn population_raw_moments(&self) -> Result<[f64; 3]> {
        self.validate()?;
        match &self.law {
            CovariateLaw::Saturated { shares, .. } => {
                let p = self.stratum_propensities()?;
                let mut m = [0.0; 3];
                for (s, v) in shares.iter().zip(&p) {
                    m[0] += s * v;
                    m[1] += s * v * v;
                    m[2] += s * v * v * v;
                }
                Ok(m)
            }
            CovariateLaw::Uniform { .. } => {
                // p = mu + sum_j b_j (U_j - 1/2); the centred terms are
                // symmetric, so the third central moment vanishes.
                let mu =
                    self.propensity_intercept + self.propensity_slopes.iter().sum::<f64>() / 2.0;
                let var: f64 = self.propensity_slopes.iter().map(|b| b * b / 12.0).sum();
                Ok([mu, mu * mu + var, mu.powi(3) + 3.0 * mu * var])
            }
        }
    }

    pub fn truth(&self) -> Result<Truth> {
        let m = self.population_raw_moments()?;
        let (a0, a1) = moment_variances_from_raw(m);
        let (al1, g1) = self.treated_outcome;
        let (al0, g0) = self.untreated_outcome;
        let level = al1 - al0;
        let slope = g1 - g0;
        Ok(Truth {
            rho: m[0],
            aple: level + slope * m[0],
            aple1: level + slope * m[1] / m[0],
            aple0: level + slope * (m[0] - m[1]) / (1.0 - m[0]),
            w1: a1 / (a0 + a1),
            w0: a0 / (a0 + a1),
        })
    }
}

pub fn synth_dgp(cfg: &DgpConfig) -> Result<SynthData> {
    cfg.validate()?;
    let truth = cfg.truth()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let (x, p, d) = match &cfg.law {
        CovariateLaw::Saturated { shares, exact } => {
            let ps = cfg.stratum_propensities()?;
            let (labels, d): (Vec<usize>, Vec<f64>) = if *exact {
                let mut labels = Vec::with_capacity(n);
                let mut d = Vec::with_capacity(n);
                for (s, (share, pv)) in shares.iter().zip(&ps).enumerate() {
                    let size = (n as f64 * share).round() as usize;
                    let treated = (size as f64 * pv).round() as usize;
                    for i in 0..size {
                        labels.push(s);
                        d.push(if i < treated { 1.0 } else { 0.0 });
                    }
                }
                if labels.len() != n {
                    return Err(HetdiagError::BadConfig(
                        "stratum sizes do not add up to n".into(),
                    ));
                }
                (labels, d)
            } else {
                let pick = WeightedIndex::new(shares)
                    .map_err(|e| HetdiagError::BadConfig(e.to_string()))?;
                (0..n)
                    .map(|_| {
                        let s = pick.sample(&mut rng);
                        let di = (rng.random::<f64>() < ps[s]) as u8 as f64;
                        (s, di)
                    })
                    .unzip()
            };
            let x = DMatrix::from_fn(n, shares.len() - 1, |i, j| {
                (labels[i] == j + 1) as u8 as f64
            });
            let p = labels.iter().map(|&s| ps[s]).collect::<Vec<_>>();
            (x, p, d)
        }
        CovariateLaw::Uniform { k } => {
            let x = DMatrix::from_fn(n, *k, |_, _| rng.random::<f64>());
            let p: Vec<f64> = (0..n)
                .map(|i| {
                    cfg.propensity_intercept
                        + (0..*k)
                            .map(|j| cfg.propensity_slopes[j] * x[(i, j)])
                            .sum::<f64>()
                })
                .collect();
            let d = p
                .iter()
                .map(|&pi| (rng.random::<f64>() < pi) as u8 as f64)
                .collect();
            (x, p, d)
        }
    };
    let y = p
        .iter()
        .zip(&d)
        .map(|(&pi, &di)| {
            let (a, g) = if di == 1.0 {
                cfg.treated_outcome
            } else {
                cfg.untreated_outcome
            };
            let e: f64 = if cfg.noise_sd > 0.0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
            a + g * pi + cfg.noise_sd * e
        })
        .collect();
    let dataset = Dataset::new(y, d, x)?;
    Ok(SynthData {
        dataset,
        truth,
        propensity: p,
    })
}

/// Population OLS weights of a saturated design as the propensity intercept
/// is shifted by each offset. Uses raw-moment formulas only.
pub fn shift_intercept_sweep(cfg: &DgpConfig, shifts: &[f64]) -> Result<Vec<SweepPoint>> {
    if !matches!(cfg.law, CovariateLaw::Saturated { .. }) {
        return Err(HetdiagError::BadConfig(
            "the sweep needs a saturated design".into(),
        ));
    }
    shifts
        .iter()
        .map(|&shift| {
            let shifted = DgpConfig {
                propensity_intercept: cfg.propensity_intercept + shift,
                law: match &cfg.law {
                    CovariateLaw::Saturated { shares, .. } => CovariateLaw::Saturated {
                        shares: shares.clone(),
                        exact: false,
                    },
                    other => other.clone(),
                },
                ..cfg.clone()
            };
            let m = shifted.population_raw_moments()?;
            let (a0, a1) = moment_variances_from_raw(m);
            if !(a0 > 0.0 && a1 > 0.0) {
                return Err(HetdiagError::BadConfig(format!(
                    "no propensity variation within a treatment group at shift {shift}"
                )));
            }
            Ok(SweepPoint {
                shift,
                rho: m[0],
                w1: a1 / (a0 + a1),
                w0: a0 / (a0 + a1),
            })
        })
        .collect()
}
