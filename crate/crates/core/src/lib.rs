//! Context-stratified Mendelian randomization.
//!
//! The population is split by an exogenous context variable (recruitment
//! centre, region, period) that shifts the exposure distribution. Within each
//! context a ratio instrumental-variable estimate is formed; heterogeneity of
//! those estimates is tested with Cochran's Q (first-order and modified
//! second-order weights), and a random-effects meta-regression of the
//! estimates on the context mean exposure tests for a trend.
//!
//! The estimates are only causal under the usual IV conditions holding in
//! every context: the instrument is associated with the exposure, is
//! independent of confounders, and affects the outcome only through the
//! exposure. The context itself must not be caused by the exposure, the
//! outcome, or their confounders.
//!
//! Module map:
//!
//! - [`numerics`]: chi-square and normal tail probabilities, weighted least squares.
//! - [`regress`]: linear and logistic association estimates.
//! - [`datamodel`]: individual-level data, CSV ingestion, context partitioning.
//! - [`ivcore`]: per-context ratio estimates and the IVW pooled estimate.
//! - [`heterogeneity`]: Cochran's Q with two weighting schemes.
//! - [`metareg`]: meta-regression on context mean exposure (REML, DL, fixed).
//! - [`simulate`]: the simulation data-generating model.
//! - [`harness`]: the Monte Carlo experiment runner and result tables.
//! - [`cli`]: report assembly behind the `ctxmr` binary.

// NaN must fail these guards, so the negated forms are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datamodel;
pub mod error;
pub mod harness;
pub mod heterogeneity;
pub mod ivcore;
pub mod metareg;
pub mod numerics;
pub mod regress;
pub mod simulate;
pub mod warning;

pub use error::{Error, Result, Stage};
pub use warning::Warning;
