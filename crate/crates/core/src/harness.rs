//! Monte Carlo experiment runner.
//!
//! Each replication generates a dataset, estimates per-context ratio
//! estimates, computes both Q statistics and the trend test, and records
//! whether each rejects at `alpha_level`. Replications are independent and
//! are reduced in replication-index order, so results depend only on the
//! plan and never on the worker count.

use crate::datamodel::{partition_by_context, DEFAULT_MIN_CONTEXT_N};
use crate::error::{Error, Result};
use crate::heterogeneity::{q_first_order, q_modified_second_order};
use crate::ivcore::{context_iv, ContextResult, DEFAULT_WEAK_THRESHOLD};
use crate::metareg::{trend_test, Tau2Method, TrendVariance};
use crate::regress::{Family, RegressionSpec};
use crate::simulate::{generate_dataset, instrument_strength, AlphaGrid, EffectFunction, SimScenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

/// Largest tolerated share of failed replications in a cell.
pub const MAX_FAILURE_RATE: f64 = 0.01;

fn default_replications() -> usize {
    1000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    496
}
fn default_min_n() -> usize {
    DEFAULT_MIN_CONTEXT_N
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<SimScenario>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha_level: f64,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_min_n")]
    pub min_context_n: usize,
    #[serde(default)]
    pub tau2_method: Tau2Method,
}

impl ExperimentPlan {
    /// The six simulation cells: three effect functions under the larger and
    /// then the smaller alpha grid.
    pub fn table1(replications: usize, master_seed: u64) -> Self {
        let mut scenarios = Vec::new();
        for grid in [AlphaGrid::Larger, AlphaGrid::Smaller] {
            for f in [EffectFunction::LINEAR, EffectFunction::QUADRATIC, EffectFunction::THRESHOLD] {
                scenarios.push(SimScenario::new(f, grid.clone()));
            }
        }
        ExperimentPlan {
            scenarios,
            replications,
            alpha_level: 0.05,
            master_seed,
            parallelism: 0,
            min_context_n: DEFAULT_MIN_CONTEXT_N,
            tau2_method: Tau2Method::Reml,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha_level must lie in (0, 1), got {}", self.alpha_level)));
        }
        self.scenarios.iter().try_for_each(SimScenario::validate)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub q_first_p: f64,
    pub q_mod2_p: f64,
    pub trend_p: f64,
    pub r2: f64,
    pub f_stat: f64,
}

/// Per-context estimates for one simulated dataset.
pub fn estimate_contexts(scenario: &SimScenario, master_seed: u64, replication: u64, min_context_n: usize) -> Result<(Vec<ContextResult>, f64, f64)> {
    let ds = generate_dataset(scenario, master_seed, replication)?;
    let strength = instrument_strength(&ds);
    let parts = partition_by_context(&ds, min_context_n)?;
    let xspec = RegressionSpec::exposure(vec![]);
    let yspec = RegressionSpec::outcome(vec![], Family::Linear);
    let results = parts
        .retained
        .iter()
        .map(|p| context_iv(p.label, &p.records, &xspec, &yspec, DEFAULT_WEAK_THRESHOLD))
        .collect::<Result<Vec<_>>>()?;
    Ok((results, strength.r2, strength.f_stat))
}

pub fn run_replication(plan: &ExperimentPlan, scenario: &SimScenario, replication: u64) -> Result<Replication> {
    let (results, r2, f_stat) = estimate_contexts(scenario, plan.master_seed, replication, plan.min_context_n)?;
    let q1 = q_first_order(&results)?;
    let q2 = q_modified_second_order(&results)?;
    let trend = trend_test(&results, plan.tau2_method, TrendVariance::FirstOrder)?;
    Ok(Replication { q_first_p: q1.p.value(), q_mod2_p: q2.p.value(), trend_p: trend.slope_p.value(), r2, f_stat })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: String,
    pub grid: String,
    pub rej_q_first: f64,
    pub rej_q_mod2: f64,
    pub rej_trend: f64,
    pub mc_se_q_first: f64,
    pub mc_se_q_mod2: f64,
    pub mc_se_trend: f64,
    pub replications_completed: usize,
    pub failures: usize,
    pub mean_r2: f64,
    pub mean_f: f64,
}

fn mc_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

fn summarise(plan: &ExperimentPlan, scenario: &SimScenario, outcomes: Vec<Result<Replication>>) -> Result<CellResult> {
    let total = outcomes.len();
    let ok: Vec<Replication> = outcomes.into_iter().filter_map(Result::ok).collect();
    let failures = total - ok.len();
    if failures as f64 > MAX_FAILURE_RATE * total as f64 || ok.is_empty() {
        return Err(Error::ExcessiveFailures { cell: scenario.id(), failed: failures, total });
    }
    let n = ok.len();
    let rate = |f: fn(&Replication) -> f64| ok.iter().filter(|r| f(r) < plan.alpha_level).count() as f64 / n as f64;
    let (q1, q2, tr) = (rate(|r| r.q_first_p), rate(|r| r.q_mod2_p), rate(|r| r.trend_p));
    Ok(CellResult {
        scenario: scenario.effect.name().to_string(),
        grid: scenario.alpha_grid.name().to_string(),
        rej_q_first: q1,
        rej_q_mod2: q2,
        rej_trend: tr,
        mc_se_q_first: mc_se(q1, n),
        mc_se_q_mod2: mc_se(q2, n),
        mc_se_trend: mc_se(tr, n),
        replications_completed: n,
        failures,
        mean_r2: ok.iter().map(|r| r.r2).sum::<f64>() / n as f64,
        mean_f: ok.iter().map(|r| r.f_stat).sum::<f64>() / n as f64,
    })
}

/// Runs every scenario of the plan. Failed replications (for example a
/// non-convergent fit) are excluded and counted; more than 1% failures in a
/// cell is an error.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<CellResult>> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        plan.scenarios
            .iter()
            .map(|scenario| {
                let outcomes: Vec<Result<Replication>> = (0..plan.replications as u64)
                    .into_par_iter()
                    .map(|rep| run_replication(plan, scenario, rep))
                    .collect();
                summarise(plan, scenario, outcomes)
            })
            .collect()
    })
}

pub const CSV_HEADER: &str =
    "scenario,grid,q_first,q_mod2,trend,mc_se_q_first,mc_se_q_mod2,mc_se_trend,replications,failures,mean_r2,mean_f";

/// The result table in three renderings.
#[derive(Debug, Clone, PartialEq)]
pub struct TableOutput {
    pub text: String,
    pub csv: String,
    pub json: String,
}

pub fn emit_table(results: &[CellResult]) -> Result<TableOutput> {
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for c in results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.scenario, c.grid, c.rej_q_first, c.rej_q_mod2, c.rej_trend, c.mc_se_q_first, c.mc_se_q_mod2,
            c.mc_se_trend, c.replications_completed, c.failures, c.mean_r2, c.mean_f
        );
    }

    let mut text = String::new();
    let _ = writeln!(text, "{:<10} {:<8} {:>14} {:>14} {:>14} {:>6}", "scenario", "grid", "Q first-order", "Q mod. 2nd", "trend", "reps");
    let mut last_grid: Option<&str> = None;
    for c in results {
        if last_grid != Some(c.grid.as_str()) {
            let _ = writeln!(text, "-- {} differences between contexts --", c.grid);
            last_grid = Some(&c.grid);
        }
        let cell = |p: f64, se: f64| format!("{:.1}% ({:.1})", 100.0 * p, 100.0 * se);
        let _ = writeln!(
            text,
            "{:<10} {:<8} {:>14} {:>14} {:>14} {:>6}",
            c.scenario,
            c.grid,
            cell(c.rej_q_first, c.mc_se_q_first),
            cell(c.rej_q_mod2, c.mc_se_q_mod2),
            cell(c.rej_trend, c.mc_se_trend),
            c.replications_completed
        );
    }

    Ok(TableOutput { text, csv, json: serde_json::to_string_pretty(results)? })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub plan: ExperimentPlan,
    pub master_seed: u64,
    pub crate_version: String,
    pub wall_time_secs: f64,
    pub files: Vec<String>,
}

/// Writes `table.{txt,csv,json}` and `manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, plan: &ExperimentPlan, results: &[CellResult], wall_time: Duration) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let table = emit_table(results)?;
    std::fs::write(dir.join("table.txt"), &table.text)?;
    std::fs::write(dir.join("table.csv"), &table.csv)?;
    std::fs::write(dir.join("table.json"), &table.json)?;
    let manifest = Manifest {
        plan: plan.clone(),
        master_seed: plan.master_seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: wall_time.as_secs_f64(),
        files: vec!["table.txt".into(), "table.csv".into(), "table.json".into()],
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
