//! Mean-field variational Bayes fitting of additive models with any number of
//! penalized smoothed effects and scalar-on-function effects, for Gaussian
//! and probit (latent-variable) outcomes, plus the variational ZLS global test
//! for a single smoothed or functional term.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and the parallel Monte-Carlo runner live in the `vamzls` crate.
//!
//! Module map:
//!
//! - [`numerics`]: normal cdf/pdf, stable Mills ratios, `ln Γ`, chi-square tail.
//! - [`basis`]: B-spline bases, difference and derivative penalties.
//! - [`design`]: model specification and the stacked design matrix.
//! - [`cavi`]: the Gaussian and probit coordinate-ascent engines.
//! - [`zls`]: c-vectors, the quadratic-form statistic and its Satterthwaite p-value.
//! - [`simulate`]: data-generating processes and the replication loop of the
//!   simulation study.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod basis;
pub mod cavi;
pub mod design;
mod error;
pub mod numerics;
pub mod simulate;
pub mod zls;

pub use basis::{BSplineBasis, PenaltyKind, PenaltyMatrix};
pub use cavi::{extract_curve, fit, fit_gaussian, fit_probit, FitControl, ProbitMean, ScaleUpdate, VariationalFit};
pub use design::{
    assemble, build_design, center_smooth_blocks, Block, BlockKind, DesignBundle, DesignData,
    Family, FunctionalTerm, HyperParams, InvGammaPrior, ModelSpec, SmoothTerm,
};
pub use error::{Error, Result};
pub use numerics::ChiSqParams;
pub use simulate::{Effect, RepOutcome, SimReport, SimScenario};
pub use zls::{zls_test, CForm, CovarianceChoice, ZlsOptions, ZlsResult};
