//! Per-context ratio estimates and the inverse-variance-weighted pool.

use crate::datamodel::{summarize_context, ContextSummary, IndividualRecord};
use crate::error::{Error, Result};
use crate::regress::{fit, AssocEstimate, Family, RegressionSpec, Role};
use crate::warning::Warning;
use serde::{Deserialize, Serialize};
use std::borrow::Borrow;
use std::io::Read;
use std::path::Path;

/// Below this `|bx|` a ratio estimate is meaningless.
pub const ZERO_ASSOCIATION_FLOOR: f64 = 1e-12;
/// Default `|bx / se(bx)|` below which a context is flagged as weakly instrumented.
pub const DEFAULT_WEAK_THRESHOLD: f64 = 2.0;

/// Ratio estimate for one context, keeping both associations for later weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextResult {
    pub context: String,
    pub bx: AssocEstimate,
    pub by: AssocEstimate,
    /// `by.beta / bx.beta`
    pub ratio: f64,
    /// `by.se / |bx.beta|`
    pub ratio_se_first_order: f64,
    pub summary: ContextSummary,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

impl ContextResult {
    /// Builds a result from already-estimated associations.
    pub fn from_associations(
        bx: AssocEstimate,
        by: AssocEstimate,
        summary: ContextSummary,
        weak_threshold: f64,
    ) -> Result<Self> {
        if !(bx.beta.abs() >= ZERO_ASSOCIATION_FLOOR) {
            return Err(Error::ZeroInstrumentAssociation.in_context(&summary.context));
        }
        let mut warnings = Vec::new();
        let t_stat = (bx.beta / bx.se).abs();
        if bx.se > 0.0 && t_stat < weak_threshold {
            warnings.push(Warning::WeakInstrument { context: summary.context.clone(), t_stat, threshold: weak_threshold });
        }
        Ok(ContextResult {
            context: summary.context.clone(),
            ratio: by.beta / bx.beta,
            ratio_se_first_order: by.se / bx.beta.abs(),
            bx,
            by,
            summary,
            warnings,
        })
    }
}

/// Fits both associations within one context and forms the ratio estimate.
///
/// A weak instrument (`|bx / se| < weak_threshold`) only attaches a warning;
/// `|bx| < 1e-12` is an error.
pub fn context_iv<R: Borrow<IndividualRecord>>(
    context: &str,
    records: &[R],
    exposure_spec: &RegressionSpec,
    outcome_spec: &RegressionSpec,
    weak_threshold: f64,
) -> Result<ContextResult> {
    let run = || -> Result<ContextResult> {
        if exposure_spec.response != Role::Exposure || exposure_spec.family != Family::Linear {
            return Err(Error::InvalidConfig("exposure model must be a linear regression of the exposure".into()));
        }
        if outcome_spec.response != Role::Outcome {
            return Err(Error::InvalidConfig("outcome model must regress the outcome".into()));
        }
        let summary = summarize_context(context, records)?;
        let bx = fit(records, exposure_spec)?;
        let by = fit(records, outcome_spec)?;
        let mut result = ContextResult::from_associations(bx.estimate, by.estimate, summary, weak_threshold)?;
        if bx.degenerate || by.degenerate {
            result.warnings.push(Warning::DegenerateFit { context: Some(context.to_string()) });
        }
        Ok(result)
    };
    run().map_err(|e| match e {
        e @ Error::InContext { .. } => e,
        e => e.in_context(context),
    })
}

/// Inverse-variance-weighted pooled estimate with first-order weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub beta: f64,
    pub se: f64,
    pub k: usize,
}

/// `beta = sum(by bx / se_y^2) / sum(bx^2 / se_y^2)`, `se = sum(bx^2 / se_y^2)^(-1/2)`.
pub fn ivw_pool(results: &[ContextResult]) -> Result<PooledEstimate> {
    if results.len() < 2 {
        return Err(Error::TooFewContexts { needed: 2, got: results.len() });
    }
    let (num, den) = results.iter().fold((0.0, 0.0), |(num, den), r| {
        let w = r.by.se.powi(-2);
        (num + r.by.beta * r.bx.beta * w, den + r.bx.beta * r.bx.beta * w)
    });
    Ok(PooledEstimate { beta: num / den, se: den.sqrt().recip(), k: results.len() })
}

/// Re-expresses an estimate per `factor` exposure units.
pub trait Rescale: Sized {
    fn rescale(&self, factor: f64) -> Result<Self>;
}

fn check_factor(factor: f64) -> Result<()> {
    if factor > 0.0 && factor.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("scale factor must be positive, got {factor}")))
    }
}

impl Rescale for PooledEstimate {
    fn rescale(&self, factor: f64) -> Result<Self> {
        check_factor(factor)?;
        Ok(PooledEstimate { beta: self.beta * factor, se: self.se * factor, k: self.k })
    }
}

impl Rescale for ContextResult {
    /// Scales the outcome association, so `ratio = by / bx` continues to hold.
    fn rescale(&self, factor: f64) -> Result<Self> {
        check_factor(factor)?;
        let mut out = self.clone();
        out.by.beta *= factor;
        out.by.se *= factor;
        out.ratio *= factor;
        out.ratio_se_first_order *= factor;
        Ok(out)
    }
}

/// One row of a per-context summary-statistics file:
/// `context,bx,bx_se,by,by_se,xmean,n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub context: String,
    pub bx: f64,
    pub bx_se: f64,
    pub by: f64,
    pub by_se: f64,
    pub xmean: f64,
    pub n: usize,
}

impl SummaryRow {
    pub fn into_result(self, weak_threshold: f64) -> Result<ContextResult> {
        let summary = ContextSummary {
            context: self.context,
            n: self.n,
            exposure_mean: self.xmean,
            exposure_sd: None,
            exposure_median: None,
        };
        ContextResult::from_associations(
            AssocEstimate { beta: self.bx, se: self.bx_se, n: self.n },
            AssocEstimate { beta: self.by, se: self.by_se, n: self.n },
            summary,
            weak_threshold,
        )
    }
}

pub const SUMMARY_HEADER: [&str; 7] = ["context", "bx", "bx_se", "by", "by_se", "xmean", "n"];

pub fn load_summary_csv(path: impl AsRef<Path>, weak_threshold: f64) -> Result<Vec<ContextResult>> {
    read_summary_csv(std::fs::File::open(path)?, weak_threshold)
}

/// Parses summary statistics; malformed rows are reported by line number.
pub fn read_summary_csv<R: Read>(reader: R, weak_threshold: f64) -> Result<Vec<ContextResult>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = SUMMARY_HEADER
        .iter()
        .map(|name| headers.iter().position(|h| h.trim() == *name).ok_or_else(|| Error::MissingColumn(name.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let field = |k: usize| row.get(cols[k]).map(str::trim).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                message: format!("`{}` is not a finite number in column {}", field(k), SUMMARY_HEADER[k]),
            })
        };
        let context = field(0).to_string();
        if context.is_empty() {
            return Err(Error::Parse { line, message: "empty context label".into() });
        }
        let (bx, bx_se, by, by_se, xmean) = (num(1)?, num(2)?, num(3)?, num(4)?, num(5)?);
        if bx_se < 0.0 || by_se <= 0.0 {
            return Err(Error::Parse { line, message: "standard errors must be positive (bx_se may be 0)".into() });
        }
        let n = field(6).parse::<usize>().map_err(|_| Error::Parse { line, message: format!("`{}` is not a count", field(6)) })?;
        let result = SummaryRow { context, bx, bx_se, by, by_se, xmean, n }
            .into_result(weak_threshold)
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        out.push(result);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) fn synthetic(bx: f64, bx_se: f64, by: f64, by_se: f64, xmean: f64, label: &str) -> ContextResult {
    SummaryRow { context: label.into(), bx, bx_se, by, by_se, xmean, n: 1000 }.into_result(0.0).unwrap()
}
