use thiserror::Error;

#[derive(Debug, Error)]
pub enum HetdiagError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("treatment column `{column}` is not binary 0/1 (found levels {levels:?})")]
    TreatmentNotBinary { column: String, levels: Vec<f64> },

    #[error("degenerate treatment groups: {treated} treated and {untreated} untreated units")]
    DegenerateGroup { treated: usize, untreated: usize },

    #[error("design matrix is rank deficient; collinear columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("weights must be strictly positive (first offending row {row})")]
    NonpositiveWeight { row: usize },

    /// Within-group variance of the linear propensity score is (numerically) zero,
    /// so the OLS weights on the group effects are undefined.
    #[error(
        "Assumption 2 violated: Var[p(X) | d=1] = {var_p_1:.3e}, Var[p(X) | d=0] = {var_p_0:.3e}; \
         the OLS weights w1/w0 and the group effects are undefined"
    )]
    Assumption2 { var_p_1: f64, var_p_0: f64 },

    #[error(
        "internal identity OLS = w1*ATT + w0*ATU broken: residual {residual:.3e} (tau {tau:.6})"
    )]
    IdentityBroken { residual: f64, tau: f64 },

    #[error("{failed} of {reps} bootstrap replicates failed")]
    TooManyFailures { failed: usize, reps: usize },

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("no stratum has within-stratum variation in treatment")]
    NoVariation,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HetdiagError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Schema(_) | Self::Io(_) | Self::Csv(_) => "E_SCHEMA",
            Self::TreatmentNotBinary { .. } => "E_TREATMENT_NOT_BINARY",
            Self::DegenerateGroup { .. } => "E_DEGENERATE_GROUP",
            Self::RankDeficient { .. } => "E_RANK_DEFICIENT",
            Self::NonpositiveWeight { .. } => "E_NONPOSITIVE_WEIGHT",
            Self::Assumption2 { .. } => "E_ASSUMPTION2",
            Self::IdentityBroken { .. } => "E_IDENTITY_BROKEN",
            Self::TooManyFailures { .. } => "E_TOO_MANY_FAILURES",
            Self::BadConfig(_) => "E_BAD_CONFIG",
            Self::NoVariation => "E_NO_VARIATION",
            Self::Dimension(_) => "E_DIMENSION",
        }
    }

    /// True for failures caused by the data being degenerate for the
    /// estimator rather than by a bug or bad input. Bootstrap replicates
    /// hitting one of these are discarded.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Self::DegenerateGroup { .. }
                | Self::RankDeficient { .. }
                | Self::Assumption2 { .. }
                | Self::NoVariation
        )
    }
}

pub type Result<T> = std::result::Result<T, HetdiagError>;
