use serde::{Deserialize, Serialize};
use std::fmt;

/// Non-fatal diagnostics collected along the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Rows dropped during ingestion because a mapped field was missing or unparseable.
    RowsDropped { count: usize },
    /// Context excluded for having fewer than the minimum number of records.
    ContextExcluded { context: String, n: usize, min_n: usize },
    /// Instrument-exposure association below the configured strength threshold.
    WeakInstrument { context: String, t_stat: f64, threshold: f64 },
    /// Regression residuals were exactly zero; the standard error is reported as 0.
    DegenerateFit { context: Option<String> },
    /// Context dropped from a Q statistic because its exposure association is ~0.
    ExcludedFromQ { context: String },
    /// Meta-regression could not be run (too few contexts, identical means).
    TrendSkipped { reason: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::RowsDropped { count } => write!(f, "{count} rows dropped (missing or unparseable fields)"),
            Warning::ContextExcluded { context, n, min_n } => {
                write!(f, "context `{context}` excluded: n = {n} < {min_n}")
            }
            Warning::WeakInstrument { context, t_stat, threshold } => write!(
                f,
                "context `{context}`: weak instrument, |bx/se| = {t_stat:.3} < {threshold}"
            ),
            Warning::DegenerateFit { context: Some(c) } => {
                write!(f, "context `{c}`: exact fit, standard error is zero")
            }
            Warning::DegenerateFit { context: None } => write!(f, "exact fit, standard error is zero"),
            Warning::ExcludedFromQ { context } => {
                write!(f, "context `{context}` excluded from Q: exposure association near zero")
            }
            Warning::TrendSkipped { reason } => write!(f, "trend test skipped: {reason}"),
        }
    }
}
