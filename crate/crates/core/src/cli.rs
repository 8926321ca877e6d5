//! Report assembly behind the `ctxmr` binary: full analyses from
//! individual-level or summary data, text/JSON/CSV rendering and plot data.

use crate::datamodel::{load_csv, partition_by_context, ColumnMap, Dataset, DEFAULT_MIN_CONTEXT_N};
use crate::error::{Error, Result};
use crate::heterogeneity::{q_first_order, q_modified_second_order, HeterogeneityResult};
use crate::ivcore::{context_iv, load_summary_csv, read_summary_csv, ContextResult, Rescale, DEFAULT_WEAK_THRESHOLD};
use crate::metareg::{trend_test, MetaRegResult, Tau2Method, TrendVariance};
use crate::regress::{Family, RegressionSpec};
use crate::warning::Warning;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub column_map: ColumnMap,
    pub family: Family,
    /// Estimates are reported per `scale` exposure units.
    pub scale: f64,
    pub min_context_n: usize,
    pub tau2: Tau2Method,
    pub trend_variance: TrendVariance,
    pub weak_threshold: f64,
    /// Normal quantile for confidence intervals.
    pub z: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            column_map: ColumnMap::default(),
            family: Family::Linear,
            scale: 1.0,
            min_context_n: DEFAULT_MIN_CONTEXT_N,
            tau2: Tau2Method::Reml,
            trend_variance: TrendVariance::FirstOrder,
            weak_threshold: DEFAULT_WEAK_THRESHOLD,
            z: Z95,
        }
    }
}

impl AnalysisConfig {
    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(Error::InvalidConfig(format!("z must be positive, got {}", self.z)));
        }
        Ok(())
    }
}

/// One line of the per-context table. `bx`/`by` are unscaled; `ratio` and
/// its interval are per `scale` exposure units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub context: String,
    pub n: usize,
    pub exposure_mean: f64,
    pub bx: f64,
    pub bx_se: f64,
    pub by: f64,
    pub by_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `exp(ratio)` and its interval, for binary outcomes.
    pub odds_ratio: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Individual,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub source: DataSource,
    /// Ascending by exposure mean.
    pub contexts: Vec<ContextRow>,
    pub q_first_order: HeterogeneityResult,
    pub q_modified_second_order: HeterogeneityResult,
    pub trend: Option<MetaRegResult>,
    pub config: AnalysisConfig,
    pub warnings: Vec<Warning>,
}

fn build_report(
    mut results: Vec<ContextResult>,
    config: &AnalysisConfig,
    mut warnings: Vec<Warning>,
    source: DataSource,
) -> Result<AnalysisReport> {
    results.sort_by(|a, b| {
        a.summary.exposure_mean.total_cmp(&b.summary.exposure_mean).then_with(|| a.context.cmp(&b.context))
    });
    for r in &results {
        warnings.extend(r.warnings.iter().cloned());
    }
    let q1 = q_first_order(&results)?;
    let q2 = q_modified_second_order(&results)?;
    warnings.extend(q1.excluded.iter().cloned());

    let scaled = results.iter().map(|r| r.rescale(config.scale)).collect::<Result<Vec<_>>>()?;
    let trend = if scaled.len() < 3 {
        warnings.push(Warning::TrendSkipped { reason: format!("{} contexts, need at least 3", scaled.len()) });
        None
    } else {
        match trend_test(&scaled, config.tau2, config.trend_variance) {
            Ok(t) => Some(t),
            Err(Error::CollinearMeans) => {
                warnings.push(Warning::TrendSkipped { reason: "all context means are equal".into() });
                None
            }
            Err(e) => return Err(e),
        }
    };

    let contexts = results
        .iter()
        .zip(&scaled)
        .map(|(r, s)| {
            let (lo, hi) = (s.ratio - config.z * s.ratio_se_first_order, s.ratio + config.z * s.ratio_se_first_order);
            ContextRow {
                context: r.context.clone(),
                n: r.summary.n,
                exposure_mean: r.summary.exposure_mean,
                bx: r.bx.beta,
                bx_se: r.bx.se,
                by: r.by.beta,
                by_se: r.by.se,
                ratio: s.ratio,
                ratio_se: s.ratio_se_first_order,
                ci_lo: lo,
                ci_hi: hi,
                odds_ratio: (config.family == Family::Logistic).then(|| [s.ratio.exp(), lo.exp(), hi.exp()]),
            }
        })
        .collect();

    Ok(AnalysisReport {
        source,
        contexts,
        q_first_order: q1,
        q_modified_second_order: q2,
        trend,
        config: config.clone(),
        warnings,
    })
}

/// The full pipeline on an in-memory dataset.
pub fn analyze_dataset(ds: &Dataset, config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    let mut warnings = Vec::new();
    if ds.dropped > 0 {
        warnings.push(Warning::RowsDropped { count: ds.dropped });
    }
    let parts = partition_by_context(ds, config.min_context_n)?;
    warnings.extend(parts.excluded.iter().cloned());

    let covs: Vec<usize> = (0..ds.column_map.covariates.len()).collect();
    let xspec = RegressionSpec::exposure(covs.clone());
    let yspec = RegressionSpec::outcome(covs, config.family);
    let results = parts
        .retained
        .par_iter()
        .map(|p| context_iv(p.label, &p.records, &xspec, &yspec, config.weak_threshold))
        .collect::<Result<Vec<_>>>()?;
    build_report(results, config, warnings, DataSource::Individual)
}

/// Loads an individual-level CSV and runs the full pipeline.
pub fn cmd_analyze(data: impl AsRef<Path>, config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    let ds = load_csv(data, &config.column_map, config.family)?;
    analyze_dataset(&ds, config)
}

/// Q statistics and trend test from per-context summary statistics.
pub fn cmd_meta(summary: impl AsRef<Path>, config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    meta_from_results(load_summary_csv(summary, config.weak_threshold)?, config)
}

pub fn meta_from_reader<R: std::io::Read>(reader: R, config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    meta_from_results(read_summary_csv(reader, config.weak_threshold)?, config)
}

fn meta_from_results(results: Vec<ContextResult>, config: &AnalysisConfig) -> Result<AnalysisReport> {
    if results.len() < 2 {
        return Err(Error::FewerThanTwoContexts { retained: results.len(), total: results.len() });
    }
    build_report(results, config, Vec::new(), DataSource::Summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub context: String,
    pub xmean: f64,
    pub estimate: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Scatter data: unscaled instrument-outcome associations and scaled ratio
/// estimates, each with a confidence interval, ordered by mean exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub unscaled: Vec<PlotRow>,
    pub scaled: Vec<PlotRow>,
}

pub fn cmd_plotdata(report: &AnalysisReport) -> PlotData {
    let z = report.config.z;
    let mut rows: Vec<&ContextRow> = report.contexts.iter().collect();
    rows.sort_by(|a, b| a.exposure_mean.total_cmp(&b.exposure_mean));
    let unscaled = rows
        .iter()
        .map(|r| PlotRow { context: r.context.clone(), xmean: r.exposure_mean, estimate: r.by, lo95: r.by - z * r.by_se, hi95: r.by + z * r.by_se })
        .collect();
    let scaled = rows
        .iter()
        .map(|r| PlotRow { context: r.context.clone(), xmean: r.exposure_mean, estimate: r.ratio, lo95: r.ci_lo, hi95: r.ci_hi })
        .collect();
    PlotData { unscaled, scaled }
}

pub const PLOT_HEADER: &str = "context,xmean,estimate,lo95,hi95";

pub fn plot_csv(rows: &[PlotRow]) -> String {
    let mut out = format!("{PLOT_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", csv_field(&r.context), r.xmean, r.estimate, r.lo95, r.hi95);
    }
    out
}

/// Writes `plot_unscaled.csv` and `plot_scaled.csv`.
pub fn write_plotdata(dir: &Path, data: &PlotData) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("plot_unscaled.csv"), plot_csv(&data.unscaled))?;
    std::fs::write(dir.join("plot_scaled.csv"), plot_csv(&data.scaled))?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Formats with `digits` significant figures.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..digits as i32).contains(&magnitude) {
        let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}

fn tau2_name(m: Tau2Method) -> &'static str {
    match m {
        Tau2Method::Reml => "REML",
        Tau2Method::Dl => "DL",
        Tau2Method::Fixed => "fixed",
    }
}

fn sig3(x: f64) -> String {
    sig(x, 3)
}

pub fn render_json(report: &AnalysisReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn parse_json(text: &str) -> Result<AnalysisReport> {
    Ok(serde_json::from_str(text)?)
}

/// Per-context table at full precision.
pub fn render_csv(report: &AnalysisReport) -> String {
    let mut out = String::from("context,n,exposure_mean,bx,bx_se,by,by_se,ratio,ratio_se,ci_lo,ci_hi");
    if report.config.family == Family::Logistic {
        out.push_str(",odds_ratio,or_lo,or_hi");
    }
    out.push('\n');
    for r in &report.contexts {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.context), r.n, r.exposure_mean, r.bx, r.bx_se, r.by, r.by_se, r.ratio, r.ratio_se, r.ci_lo, r.ci_hi
        );
        if let Some([or, lo, hi]) = r.odds_ratio {
            let _ = write!(out, ",{or},{lo},{hi}");
        }
        out.push('\n');
    }
    out
}

/// Human-readable report, numbers to 3 significant figures.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let per = if report.config.scale == 1.0 { "per unit exposure".to_string() } else { format!("per {} units of exposure", sig3(report.config.scale)) };
    let _ = writeln!(out, "Context-stratified MR ({} contexts, estimates {per})", report.contexts.len());
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>10} {:>20} {:>20} {:>30}{}",
        "context",
        "n",
        "xmean",
        "bx (se)",
        "by (se)",
        "ratio [95% CI]",
        if report.config.family == Family::Logistic { format!(" {:>30}", "OR [95% CI]") } else { String::new() }
    );
    for r in &report.contexts {
        let _ = write!(
            out,
            "{:<16} {:>8} {:>10} {:>20} {:>20} {:>30}",
            r.context,
            r.n,
            sig3(r.exposure_mean),
            format!("{} ({})", sig3(r.bx), sig3(r.bx_se)),
            format!("{} ({})", sig3(r.by), sig3(r.by_se)),
            format!("{} [{}, {}]", sig3(r.ratio), sig3(r.ci_lo), sig3(r.ci_hi)),
        );
        if let Some([or, lo, hi]) = r.odds_ratio {
            let _ = write!(out, " {:>30}", format!("{} [{}, {}]", sig3(or), sig3(lo), sig3(hi)));
        }
        out.push('\n');
    }
    let _ = writeln!(out);
    for (label, q) in [("first-order", &report.q_first_order), ("modified second-order", &report.q_modified_second_order)] {
        let _ = writeln!(out, "Heterogeneity Q ({label}) = {}, df = {}, p = {}", sig3(q.q), q.df, sig3(q.p.value()));
    }
    match &report.trend {
        Some(t) => {
            let _ = writeln!(
                out,
                "Trend (meta-regression on mean exposure, tau2 {}): slope = {} (se {}), p = {}, tau2 = {}",
                tau2_name(t.tau2_method),
                sig3(t.slope),
                sig3(t.slope_se),
                sig3(t.slope_p.value()),
                sig3(t.tau2)
            );
        }
        None => {
            let _ = writeln!(out, "Trend: not estimated");
        }
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Warnings:");
        for w in &report.warnings {
            let _ = writeln!(out, "  - {w}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAND: &str = "context,bx,bx_se,by,by_se,xmean,n\nA,1,0,1,1,5,100\nB,1,0,2,1,6,100\n";

    #[test]
    fn sig_figures() {
        assert_eq!(sig(0.123456, 3), "0.123");
        assert_eq!(sig(22.2222, 3), "22.2");
        assert_eq!(sig(-1234.5, 3), "-1.23e3");
        assert_eq!(sig(999.0, 3), "999");
        assert_eq!(sig(1.0e-7, 3), "1.00e-7");
        assert_eq!(sig(0.0, 3), "0");
    }

    #[test]
    fn meta_hand_example() {
        let report = meta_from_reader(HAND.as_bytes(), &AnalysisConfig::default()).unwrap();
        assert!((report.q_first_order.q - 0.5).abs() < 1e-15);
        assert!((report.q_modified_second_order.q - 0.5).abs() < 1e-12);
        assert!(report.trend.is_none());
        assert!(matches!(report.warnings[..], [Warning::TrendSkipped { .. }]));
    }

    #[test]
    fn duplicate_rows_give_zero_q() {
        let text = "context,bx,bx_se,by,by_se,xmean,n\nA,0.5,0.01,0.2,0.05,5,100\nA2,0.5,0.01,0.2,0.05,5,100\nA3,0.5,0.01,0.2,0.05,5,100\n";
        let report = meta_from_reader(text.as_bytes(), &AnalysisConfig::default()).unwrap();
        assert!(report.q_first_order.q.abs() < 1e-20);
        assert!((report.q_first_order.p.value() - 1.0).abs() < 1e-12);
        assert!((report.q_modified_second_order.p.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn meta_single_row_is_configuration_error() {
        let text = "context,bx,bx_se,by,by_se,xmean,n\nA,1,0,1,1,5,100\n";
        let err = meta_from_reader(text.as_bytes(), &AnalysisConfig::default()).unwrap_err();
        assert_eq!(err.stage(), crate::Stage::Configuration);
    }

    #[test]
    fn ci_is_ratio_pm_z_se() {
        let text = "context,bx,bx_se,by,by_se,xmean,n\nA,0.5,0.01,0.2,0.05,5,100\nB,0.4,0.01,0.3,0.05,6,100\nC,0.45,0.01,0.1,0.05,7,100\n";
        let report = meta_from_reader(text.as_bytes(), &AnalysisConfig { scale: 10.0, ..Default::default() }).unwrap();
        for r in &report.contexts {
            assert!((r.ci_lo - (r.ratio - Z95 * r.ratio_se)).abs() < 1e-12);
            assert!((r.ci_hi - (r.ratio + Z95 * r.ratio_se)).abs() < 1e-12);
            assert!((r.ratio - 10.0 * r.by / r.bx).abs() < 1e-12);
        }
        assert!(report.trend.is_some());
    }

    #[test]
    fn text_report_mentions_both_schemes() {
        let report = meta_from_reader(HAND.as_bytes(), &AnalysisConfig::default()).unwrap();
        let text = render_text(&report);
        assert!(text.contains("first-order) = 0.500"));
        assert!(text.contains("modified second-order) = 0.500"));
    }
}
