//! Diagnostics for the OLS treatment coefficient under heterogeneous effects.
//!
//! With a binary treatment `d` and controls `X`, the coefficient on `d` from
//! regressing `y` on `[1, d, X]` is a convex combination
//! `w1 * ATT + w0 * ATU` whose weights are inversely related to the share of
//! each group. [`diagnostics::diagnose`] reports the weights and the implied
//! effects; [`estimators`] provides alternatives that target the effects
//! directly; [`oracle`] holds independent cross-checks and synthetic data.
//!
//! ```
//! use hetdiag::{diagnose, Dataset};
//! use nalgebra::DMatrix;
//!
//! let x = DMatrix::from_column_slice(8, 1, &[0., 0., 0., 0., 1., 1., 1., 1.]);
//! let ds = Dataset::new(
//!     vec![2., 0., 0., 0., 4., 4., 4., 0.],
//!     vec![1., 0., 0., 0., 1., 1., 1., 0.],
//!     x,
//! )
//! .unwrap();
//! let r = diagnose(&ds).unwrap();
//! assert!((r.tau_ols - 3.0).abs() < 1e-12);
//! assert!((r.weights.w1 - 0.5).abs() < 1e-12);
//! ```

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linproj;
pub mod oracle;

pub use data::{load_csv, Dataset, ValidationReport};
pub use diagnostics::{diagnose, DiagnosticsReport};
pub use error::{HetdiagError, Result};
pub use inference::{pairs_bootstrap, pairs_bootstrap_with, BootstrapResult, Execution};
