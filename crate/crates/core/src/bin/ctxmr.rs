use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxmr::cli::{self, AnalysisConfig, AnalysisReport};
use ctxmr::datamodel::ColumnMap;
use ctxmr::harness::{self, ExperimentPlan};
use ctxmr::metareg::{Tau2Method, TrendVariance};
use ctxmr::regress::Family;
use ctxmr::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "ctxmr", version, about = "Context-stratified Mendelian randomization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo simulation experiment.
    Simulate(SimulateArgs),
    /// Full analysis of an individual-level CSV.
    Analyze(AnalyzeArgs),
    /// Q statistics and trend test from per-context summary statistics.
    Meta(MetaArgs),
    /// Scatter data (estimate and 95% CI against mean exposure).
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Linear,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tau2Arg {
    Reml,
    Dl,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrendVarianceArg {
    FirstOrder,
    ModifiedSecondOrder,
}

#[derive(Args)]
struct CommonArgs {
    /// Report estimates per this many exposure units.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, value_enum, default_value = "reml")]
    tau2: Tau2Arg,
    /// Within-context variance used by the trend test.
    #[arg(long, value_enum, default_value = "first-order")]
    trend_variance: TrendVarianceArg,
    /// Normal quantile for confidence intervals.
    #[arg(long, default_value_t = cli::Z95)]
    z: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "context")]
    context_col: String,
    #[arg(long, default_value = "x")]
    exposure_col: String,
    #[arg(long, default_value = "y")]
    outcome_col: String,
    #[arg(long, default_value = "g")]
    instrument_col: String,
    /// Comma-separated adjustment covariates.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, value_enum, default_value = "linear")]
    family: FamilyArg,
    #[arg(long, default_value_t = ctxmr::datamodel::DEFAULT_MIN_CONTEXT_N)]
    min_context_n: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct MetaArgs {
    /// CSV with header `context,bx,bx_se,by,by_se,xmean,n`.
    #[arg(long)]
    summary: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// A JSON report written by `analyze` or `meta`.
    #[arg(long, conflicts_with_all = ["summary", "data"])]
    report: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    summary: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "context")]
    context_col: String,
    #[arg(long, default_value = "x")]
    exposure_col: String,
    #[arg(long, default_value = "y")]
    outcome_col: String,
    #[arg(long, default_value = "g")]
    instrument_col: String,
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, value_enum, default_value = "linear")]
    family: FamilyArg,
    #[arg(long, default_value_t = ctxmr::datamodel::DEFAULT_MIN_CONTEXT_N)]
    min_context_n: usize,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = cli::Z95)]
    z: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML experiment plan; defaults to the six standard cells.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Linear => Family::Linear,
            FamilyArg::Logistic => Family::Logistic,
        }
    }
}

impl From<Tau2Arg> for Tau2Method {
    fn from(t: Tau2Arg) -> Self {
        match t {
            Tau2Arg::Reml => Tau2Method::Reml,
            Tau2Arg::Dl => Tau2Method::Dl,
            Tau2Arg::Fixed => Tau2Method::Fixed,
        }
    }
}

impl From<TrendVarianceArg> for TrendVariance {
    fn from(t: TrendVarianceArg) -> Self {
        match t {
            TrendVarianceArg::FirstOrder => TrendVariance::FirstOrder,
            TrendVarianceArg::ModifiedSecondOrder => TrendVariance::ModifiedSecondOrder,
        }
    }
}

fn column_map(instrument: &str, exposure: &str, outcome: &str, context: &str, covariates: &[String]) -> ColumnMap {
    ColumnMap {
        instrument: instrument.into(),
        exposure: exposure.into(),
        outcome: outcome.into(),
        context: context.into(),
        covariates: covariates.iter().filter(|c| !c.is_empty()).cloned().collect(),
    }
}

fn config_from(common: &CommonArgs, map: ColumnMap, family: Family, min_context_n: usize) -> AnalysisConfig {
    AnalysisConfig {
        column_map: map,
        family,
        scale: common.scale,
        min_context_n,
        tau2: common.tau2.into(),
        trend_variance: common.trend_variance.into(),
        z: common.z,
        ..AnalysisConfig::default()
    }
}

fn emit(report: &AnalysisReport, format: Format, out_dir: Option<&PathBuf>) -> Result<()> {
    let (body, name) = match format {
        Format::Json => (cli::render_json(report)?, "report.json"),
        Format::Text => (cli::render_text(report), "report.txt"),
        Format::Csv => (cli::render_csv(report), "report.csv"),
    };
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), body)?;
            if !matches!(format, Format::Json) {
                std::fs::write(dir.join("report.json"), cli::render_json(report)?)?;
            }
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => {
            let d = &a.data;
            let map = column_map(&d.instrument_col, &d.exposure_col, &d.outcome_col, &d.context_col, &d.covariates);
            let config = config_from(&a.common, map, d.family.into(), d.min_context_n);
            let report = cli::cmd_analyze(&d.data, &config)?;
            emit(&report, a.common.format, a.common.out_dir.as_ref())
        }
        Command::Meta(m) => {
            let config = config_from(&m.common, ColumnMap::default(), Family::Linear, 0);
            let report = cli::cmd_meta(&m.summary, &config)?;
            emit(&report, m.common.format, m.common.out_dir.as_ref())
        }
        Command::Plotdata(p) => {
            let config = AnalysisConfig {
                column_map: column_map(&p.instrument_col, &p.exposure_col, &p.outcome_col, &p.context_col, &p.covariates),
                family: p.family.into(),
                scale: p.scale,
                min_context_n: p.min_context_n,
                z: p.z,
                ..AnalysisConfig::default()
            };
            let report = match (&p.report, &p.summary, &p.data) {
                (Some(path), _, _) => cli::parse_json(&std::fs::read_to_string(path)?)?,
                (None, Some(path), _) => cli::cmd_meta(path, &config)?,
                (None, None, Some(path)) => cli::cmd_analyze(path, &config)?,
                _ => return Err(Error::InvalidConfig("one of --report, --summary or --data is required".into())),
            };
            cli::write_plotdata(&p.out_dir, &cli::cmd_plotdata(&report))
        }
        Command::Simulate(s) => {
            let mut plan = match &s.config {
                Some(path) => ExperimentPlan::from_toml(&std::fs::read_to_string(path)?)?,
                None => ExperimentPlan::table1(1000, 496),
            };
            if let Some(r) = s.reps {
                plan.replications = r;
            }
            if let Some(seed) = s.seed {
                plan.master_seed = seed;
            }
            if let Some(w) = s.workers {
                plan.parallelism = w;
            }
            let start = Instant::now();
            let results = harness::run_experiment(&plan)?;
            let elapsed = start.elapsed();
            if let Some(dir) = &s.out_dir {
                harness::write_outputs(dir, &plan, &results, elapsed)?;
            }
            let table = harness::emit_table(&results)?;
            match s.format {
                Format::Json => println!("{}", table.json),
                Format::Text => print!("{}", table.text),
                Format::Csv => print!("{}", table.csv),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({:?} stage): {e}", e.stage());
            ExitCode::from(e.stage().exit_code() as u8)
        }
    }
}
