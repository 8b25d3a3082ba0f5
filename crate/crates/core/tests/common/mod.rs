#![allow(dead_code)]

use hetdiag::{load_csv, Dataset};

pub const DEMO: [&str; 7] = [
    "age", "age2", "educ", "black", "hispanic", "married", "nodegree",
];

pub fn testdata(name: &str) -> String {
    format!("{}/testdata/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// The four covariate sets of the NSW-CPS comparison, 1-based.
pub fn nsw_covariates(spec: usize) -> Vec<String> {
    let mut v: Vec<&str> = match spec {
        1 => DEMO.to_vec(),
        2 => vec![],
        3 | 4 => DEMO.to_vec(),
        _ => panic!("no specification {spec}"),
    };
    if spec == 4 {
        v.push("re74");
    }
    if spec >= 2 {
        v.push("re75");
    }
    v.into_iter().map(String::from).collect()
}

pub fn nsw(spec: usize) -> Dataset {
    load_csv(
        testdata("nswcps.csv"),
        "re78",
        "treated",
        &nsw_covariates(spec),
    )
    .unwrap()
    .0
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

use hetdiag::oracle::{synth_dgp, DgpConfig, SynthData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A continuous-covariate draw with `n` in [50, 5000] and `rho` in
/// [0.02, 0.98]. Configurations whose sample has too few treated or
/// untreated units are redrawn from the next seed.
pub fn continuous_draw(seed: u64) -> (DgpConfig, SynthData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(50..=5000usize);
        let rho = rng.random_range(0.02..=0.98);
        let cfg = DgpConfig::random_continuous(rng.random(), n, rho);
        if let Ok(s) = synth_dgp(&cfg) {
            if hetdiag::diagnose(&s.dataset).is_ok() {
                return (cfg, s);
            }
        }
    }
}

/// A saturated draw with `n` in [200, 3000], redrawn until every stratum has
/// treated and untreated units.
pub fn saturated_draw(seed: u64) -> (DgpConfig, SynthData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let cfg = DgpConfig::random_saturated(rng.random(), rng.random_range(200..=3000usize));
        if let Ok(s) = synth_dgp(&cfg) {
            let labels = hetdiag::oracle::stratum_labels(s.dataset.x());
            let t =
                hetdiag::oracle::StratumTable::from_sample(s.dataset.y(), s.dataset.d(), &labels);
            let full = t.strata.len() == cfg.propensity_slopes.len() + 1;
            if full && t.pure_strata().is_empty() && hetdiag::diagnose(&s.dataset).is_ok() {
                return (cfg, s);
            }
        }
    }
}
