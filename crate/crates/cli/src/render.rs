//! Text rendering. Every function here is pure in its inputs.

use hetdiag::{BootstrapResult, DiagnosticsReport};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn strip_leading_zero(s: String) -> String {
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// `%g`-style number with `sig` significant digits and no leading zero:
/// `793.587 -> "793.6"`, `-6750.7 -> "-6751"`, `0.5 -> ".5"`.
pub fn fmt_g(v: f64, sig: usize) -> String {
    if !v.is_finite() {
        return ".".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mant, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= sig as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant), exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        // Rounding can produce "-0" for tiny negatives.
        let fixed = if fixed
            .trim_start_matches('-')
            .trim_matches(|c| c == '0' || c == '.')
            .is_empty()
        {
            "0".to_string()
        } else {
            fixed
        };
        strip_leading_zero(trim_zeros(&fixed))
    }
}

/// Three decimals without the leading zero: `0.9826 -> ".983"`.
pub fn fmt_prob(v: f64) -> String {
    strip_leading_zero(format!("{v:.3}"))
}

fn line(label: &str, value: &str) -> String {
    format!("{label:>6}  =  {value}\n")
}

fn estimate(label: &str, v: f64) -> String {
    line(label, &format!("{:<9}", fmt_g(v, 4)))
}

pub fn diagnose_text(r: &DiagnosticsReport) -> String {
    let w = &r.weights;
    let mut s = format!(
        "\"OLS\" is the estimated regression coefficient on {}.\n\n",
        r.treatment
    );
    s += &estimate("OLS", r.tau_ols);
    s += "\n";
    s += &line("P(d=1)", &fmt_prob(r.moments.rho));
    s += &line("P(d=0)", &fmt_prob(1.0 - r.moments.rho));
    s += "\n";
    s += &line("w1", &fmt_prob(w.w1));
    s += &line("w0", &fmt_prob(w.w0));
    s += &line("delta", &fmt_prob(w.delta));
    s += "\n";
    s += &estimate("ATE", r.aple);
    s += &estimate("ATT", r.aple1);
    s += &estimate("ATU", r.aple0);
    s += "\n";
    s += &format!(
        "OLS = w1*ATT + w0*ATU = {}\n",
        fmt_g(w.w1 * r.aple1 + w.w0 * r.aple0, 4)
    );
    s
}

pub fn regression_adjustment_text(ate: f64, att: f64, atu: f64) -> String {
    let mut s =
        String::from("Regression adjustment: separate outcome fits by treatment group.\n\n");
    s += &estimate("ATE", ate);
    s += &estimate("ATT", att);
    s += &estimate("ATU", atu);
    s
}

pub fn wls_text(treatment: &str, tau_ols: f64, tau_wls: f64, weights: (f64, f64)) -> String {
    let mut s = format!(
        "\"WLS\" is the coefficient on {treatment} after reweighting by (1-P(d=1))/w0 for treated\n\
         and P(d=1)/w1 for untreated units; it estimates ATE.\n\n"
    );
    s += &estimate("OLS", tau_ols);
    s += &estimate("WLS", tau_wls);
    s += "\n";
    s += &line("wt(1)", &fmt_g(weights.0, 4));
    s += &line("wt(0)", &fmt_g(weights.1, 4));
    s
}

pub fn downweight_text(treatment: &str, ks: &[f64], estimates: &[f64]) -> String {
    let mut s = format!("Coefficient on {treatment} with untreated units weighted 1/k.\n\n");
    s += &format!("{:>10}  {:>10}\n", "k", "estimate");
    for (k, e) in ks.iter().zip(estimates) {
        s += &format!("{:>10}  {:>10}\n", fmt_g(*k, 4), fmt_g(*e, 4));
    }
    s
}

pub fn bootstrap_text(labels: &[&str], b: &BootstrapResult) -> String {
    let mut s = format!(
        "\nBootstrap standard errors ({} replications, seed {}, {} failed):\n\n",
        b.reps, b.seed, b.n_failed
    );
    for (label, se) in labels.iter().zip(&b.se) {
        s += &estimate(label, *se);
    }
    s
}

/// Regression table with HC1 standard errors.
pub fn ols_table(outcome: &str, names: &[String], coef: &[f64], se: &[f64], n: usize) -> String {
    let df = (n - names.len()) as f64;
    let t_dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let crit = t_dist.inverse_cdf(0.975);
    let rule = format!("{}+{}\n", "-".repeat(13), "-".repeat(64));
    let mut s = format!(
        "Linear regression, robust standard errors{:>24}{n:>13}\n\n",
        "Number of obs = "
    );
    s += &format!(
        "{:>12} | {:>10} {:>10} {:>8} {:>7} {:>24}\n",
        outcome, "Coef.", "Std. Err.", "t", "P>|t|", "[95% Conf. Interval]"
    );
    s += &rule;
    for ((name, &b), &e) in names.iter().zip(coef).zip(se) {
        let t = b / e;
        let p = 2.0 * (1.0 - t_dist.cdf(t.abs()));
        s += &format!(
            "{:>12} | {:>10} {:>10} {:>8.2} {:>7.3} {:>12} {:>11}\n",
            name,
            fmt_g(b, 7),
            fmt_g(e, 7),
            t,
            p,
            fmt_g(b - crit * e, 7),
            fmt_g(b + crit * e, 7)
        );
    }
    s += &rule;
    s
}
