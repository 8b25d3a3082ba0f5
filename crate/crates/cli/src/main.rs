mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetdiag::data::{read_headers, resolve_covariates};
use hetdiag::diagnostics::propensity_lpm;
use hetdiag::estimators::{
    correction_weights, downweight_untreated, regression_adjustment, wls_correction,
};
use hetdiag::linproj::{collinear_columns, design_matrix, fit_ols};
use hetdiag::{
    diagnose, load_csv, pairs_bootstrap, BootstrapResult, Dataset, HetdiagError, Result,
};
use serde_json::{json, Value};

const DEFAULT_SEED: u64 = 12345;

#[derive(Parser)]
#[command(
    name = "hetdiag",
    version,
    about = "Diagnostics for OLS treatment coefficients under heterogeneous effects"
)]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Mode {
    /// OLS weights on ATT and ATU, and the implied ATE, ATT and ATU.
    Diagnose(Common),
    /// ATE, ATT and ATU from separate outcome regressions by group.
    RegressionAdjustment(Common),
    /// Reweighted regression whose treatment coefficient estimates ATE.
    WlsCorrection(Common),
    /// Treatment coefficient with untreated units weighted 1/k.
    Downweight {
        #[command(flatten)]
        common: Common,
        /// Comma-separated factors, each at least 1.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    /// Binary 0/1 column.
    #[arg(long)]
    treatment: String,
    /// Comma-separated names; `a:b` selects columns a through b by position.
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    /// Bootstrap replications; 0 disables the bootstrap.
    #[arg(long, default_value_t = 0)]
    reps: usize,
    #[arg(long, env = "HETDIAG_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Also print the OLS regression table.
    #[arg(long)]
    noisily: bool,
    /// Drop covariates that are linear combinations of earlier columns.
    #[arg(long)]
    drop_collinear: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

struct Loaded {
    ds: Dataset,
    dropped_covariates: Vec<String>,
}

fn load(c: &Common) -> Result<Loaded> {
    let headers = read_headers(&c.input)?;
    let names = resolve_covariates(&headers, &c.covariates)?;
    let (ds, report) = load_csv(&c.input, &c.outcome, &c.treatment, &names)?;
    if report.n_dropped > 0 {
        eprintln!(
            "note: {} of {} rows dropped for missing values",
            report.n_dropped, report.n_raw
        );
    }

    let z = design_matrix(&[ds.d()], Some(ds.x()));
    let bad = collinear_columns(&z);
    if bad.is_empty() {
        return Ok(Loaded {
            ds,
            dropped_covariates: vec![],
        });
    }
    let mut labels = vec!["_cons".to_string(), ds.treatment_name().to_string()];
    labels.extend(ds.covariate_names().iter().cloned());
    let named: Vec<String> = bad.iter().map(|&j| labels[j].clone()).collect();
    if !c.drop_collinear || bad.iter().any(|&j| j < 2) {
        eprintln!(
            "collinear columns in [1, {}, X]: {}",
            ds.treatment_name(),
            named.join(", ")
        );
        return Err(HetdiagError::RankDeficient { columns: bad });
    }
    eprintln!("note: dropped collinear covariates {}", named.join(", "));
    let ds = ds.drop_covariates(&bad.iter().map(|j| j - 2).collect::<Vec<_>>())?;
    Ok(Loaded {
        ds,
        dropped_covariates: named,
    })
}

fn bootstrap<F>(c: &Common, ds: &Dataset, stat: F) -> Result<Option<BootstrapResult>>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    if c.reps == 0 {
        return Ok(None);
    }
    let b = pairs_bootstrap(stat, ds, c.reps, c.seed)?;
    if b.n_failed > 0 {
        eprintln!(
            "note: {} of {} bootstrap replicates were degenerate and skipped",
            b.n_failed, b.reps
        );
    }
    Ok(Some(b))
}

fn bootstrap_json(b: &Option<BootstrapResult>, labels: &[&str]) -> Value {
    match b {
        None => Value::Null,
        Some(b) => json!({
            "reps": b.reps,
            "seed": b.seed,
            "n_failed": b.n_failed,
            "se": labels.iter().zip(&b.se).map(|(l, s)| (l.to_string(), json!(s))).collect::<serde_json::Map<_, _>>(),
        }),
    }
}

fn ols_table(ds: &Dataset) -> Result<String> {
    let fit = fit_ols(ds.y(), &design_matrix(&[ds.d()], Some(ds.x())))?;
    let se = fit.robust_se();
    let order: Vec<usize> = (1..fit.k).chain([0]).collect();
    let mut names = vec![ds.treatment_name().to_string()];
    names.extend(ds.covariate_names().iter().cloned());
    names.push("_cons".into());
    let coef: Vec<f64> = order.iter().map(|&j| fit.coef[j]).collect();
    let se: Vec<f64> = order.iter().map(|&j| se[j]).collect();
    Ok(render::ols_table(
        ds.outcome_name(),
        &names,
        &coef,
        &se,
        ds.n(),
    ))
}

fn run(cli: Cli) -> Result<String> {
    let (c, ks) = match &cli.mode {
        Mode::Diagnose(c) | Mode::RegressionAdjustment(c) | Mode::WlsCorrection(c) => (c, None),
        Mode::Downweight { common, k } => (common, Some(k.as_slice())),
    };
    if c.reps == 1 {
        return Err(HetdiagError::BadConfig(
            "--reps must be 0 or at least 2".into(),
        ));
    }
    if let Some(bad) = ks.and_then(|ks| ks.iter().find(|k| !(**k >= 1.0 && k.is_finite()))) {
        return Err(HetdiagError::BadConfig(format!(
            "--k values must be at least 1, got {bad}"
        )));
    }
    let Loaded {
        ds,
        dropped_covariates,
    } = load(c)?;
    let text = c.format == Format::Text;
    let mut out = String::new();
    if text && c.noisily {
        out += &ols_table(&ds)?;
        out += "\n";
    }

    let (body, mut value) = match &cli.mode {
        Mode::Diagnose(_) => {
            let r = diagnose(&ds)?;
            let labels = ["ATE", "ATT", "ATU", "w1", "w0", "delta", "OLS"];
            let boot = bootstrap(c, &ds, |s| {
                let r = diagnose(s)?;
                let w = r.weights;
                Ok(vec![
                    r.aple, r.aple1, r.aple0, w.w1, w.w0, w.delta, r.tau_ols,
                ])
            })?;
            let mut body = render::diagnose_text(&r);
            if let Some(b) = &boot {
                body += &render::bootstrap_text(&labels, b);
            }
            let mut v = serde_json::to_value(&r).expect("report serializes");
            v["bootstrap"] = bootstrap_json(&boot, &labels);
            (body, v)
        }
        Mode::RegressionAdjustment(_) => {
            let ra = regression_adjustment(&ds)?;
            let labels = ["ATE", "ATT", "ATU"];
            let boot = bootstrap(c, &ds, |s| {
                let ra = regression_adjustment(s)?;
                Ok(vec![ra.ate, ra.att, ra.atu])
            })?;
            let mut body = render::regression_adjustment_text(ra.ate, ra.att, ra.atu);
            if let Some(b) = &boot {
                body += &render::bootstrap_text(&labels, b);
            }
            let v = json!({
                "n": ds.n(),
                "outcome": ds.outcome_name(),
                "treatment": ds.treatment_name(),
                "ate": ra.ate,
                "att": ra.att,
                "atu": ra.atu,
                "bootstrap": bootstrap_json(&boot, &labels),
            });
            (body, v)
        }
        Mode::WlsCorrection(_) => {
            let r = diagnose(&ds)?;
            let tau_w = |s: &Dataset| -> Result<f64> {
                let r = diagnose(s)?;
                let p = propensity_lpm(s.d(), s.x())?.p;
                wls_correction(s.y(), &p, s.d(), &r.moments, &r.weights)
            };
            let tau_wls = tau_w(&ds)?;
            let weights = correction_weights(&[1.0, 0.0], r.moments.rho, &r.weights);
            let labels = ["WLS"];
            let boot = bootstrap(c, &ds, |s| Ok(vec![tau_w(s)?]))?;
            let mut body =
                render::wls_text(&r.treatment, r.tau_ols, tau_wls, (weights[0], weights[1]));
            if let Some(b) = &boot {
                body += &render::bootstrap_text(&labels, b);
            }
            let v = json!({
                "n": r.n,
                "outcome": r.outcome,
                "treatment": r.treatment,
                "tau_ols": r.tau_ols,
                "tau_wls": tau_wls,
                "aple": r.aple,
                "treated_weight": weights[0],
                "untreated_weight": weights[1],
                "bootstrap": bootstrap_json(&boot, &labels),
            });
            (body, v)
        }
        Mode::Downweight { k, .. } => {
            let est = k
                .iter()
                .map(|&kk| downweight_untreated(&ds, kk))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<String> = k.iter().map(|kk| format!("k={kk}")).collect();
            let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let boot = bootstrap(c, &ds, |s| {
                k.iter().map(|&kk| downweight_untreated(s, kk)).collect()
            })?;
            let mut body = render::downweight_text(ds.treatment_name(), k, &est);
            if let Some(b) = &boot {
                body += &render::bootstrap_text(&label_refs, b);
            }
            let v = json!({
                "n": ds.n(),
                "outcome": ds.outcome_name(),
                "treatment": ds.treatment_name(),
                "k": k,
                "estimates": est,
                "bootstrap": bootstrap_json(&boot, &label_refs),
            });
            (body, v)
        }
    };

    if text {
        out += &body;
    } else {
        value["mode"] = json!(match cli.mode {
            Mode::Diagnose(_) => "diagnose",
            Mode::RegressionAdjustment(_) => "regression-adjustment",
            Mode::WlsCorrection(_) => "wls-correction",
            Mode::Downweight { .. } => "downweight",
        });
        value["dropped_covariates"] = json!(dropped_covariates);
        out += &serde_json::to_string_pretty(&value).expect("json");
        out += "\n";
    }
    Ok(out)
}

fn exit_code(e: &HetdiagError) -> u8 {
    match e.code() {
        "E_SCHEMA" | "E_TREATMENT_NOT_BINARY" | "E_DEGENERATE_GROUP" => 3,
        "E_ASSUMPTION2" | "E_RANK_DEFICIENT" | "E_NO_VARIATION" | "E_TOO_MANY_FAILURES" => 4,
        "E_BAD_CONFIG" => 2,
        _ => 1,
    }
}

fn hint(e: &HetdiagError) -> Option<&'static str> {
    match e {
        HetdiagError::Assumption2 { .. } => Some(
            "the linear propensity score must vary within both treatment groups; \
             this fails, for example, when treatment is randomized independently of the covariates",
        ),
        HetdiagError::RankDeficient { .. } => {
            Some("pass --drop-collinear to drop redundant covariates")
        }
        HetdiagError::DegenerateGroup { .. } => {
            Some("both treated and untreated units are required")
        }
        HetdiagError::TooManyFailures { .. } => {
            Some("most resamples were degenerate; the treated or untreated group is too small")
        }
        _ => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
