//! Command-line front end. Parsing, IO and exit codes only; the work is done
//! by the library.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 on bad usage.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semisup_core::dataset::center;
use semisup_core::estimators::{estimate, EstimateReport, EstimatorConfig, EstimatorId, VarianceMode};
use semisup_core::harness::{ExperimentPlan, SummaryTable};
use semisup_core::simgen::{ModelId, ScenarioSpec};

use crate::emit::{self, Format};
use crate::io::load_csv;
use crate::parallel;

#[derive(Debug, Parser)]
#[command(name = "semisup", version, about = "Semi-supervised inference for one regression coefficient")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo table: bias, RMSE, interval length and coverage
    Simulate(SimulateArgs),
    /// Estimate the coefficient on a primary column from CSV files
    Estimate(EstimateArgs),
    /// Rejection rates of H0: theta = theta_true + h over a grid of h
    Power(PowerArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Simulation design, M1 to M7
    #[arg(long, value_parser = parse_model)]
    pub model: ModelId,
    /// Labeled rows [default: the model's published design]
    #[arg(long)]
    pub n: Option<usize>,
    /// Unlabeled rows [default: the model's published design]
    #[arg(long)]
    pub m: Option<usize>,
    /// Control covariates [default: the model's published design]
    #[arg(long)]
    pub d: Option<usize>,
    /// Controls entering the primary predictor [default: the model's value, at most d]
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Replications
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Base seed; replication r uses seed ^ r
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated estimator ids
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator, default_value = "ss_sr,ss_dfa,ss_dr")]
    pub estimators: Vec<EstimatorId>,
    /// Significance level of the intervals
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Output file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads [default: available parallelism]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Shifts h as "start:stop:step" or a comma-separated list
    #[arg(long, value_parser = parse_h_grid)]
    pub h_grid: HGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceArg {
    NoShift,
    CovariateShift,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV file of labeled rows
    #[arg(long)]
    pub labeled: PathBuf,
    /// CSV file of unlabeled rows [default: none]
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// Name of the primary predictor column
    #[arg(long)]
    pub z: String,
    /// Name of the outcome column
    #[arg(long)]
    pub y: String,
    /// Estimator id
    #[arg(long, value_parser = parse_estimator, default_value = "ss_sr")]
    pub estimator: EstimatorId,
    /// Significance level of the interval
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Variance formula of ss_sr
    #[arg(long, value_enum, default_value_t = VarianceArg::NoShift)]
    pub variance_mode: VarianceArg,
    /// Seed of sample splits and cross-validation folds
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the data as given instead of centering every column
    #[arg(long)]
    pub no_center: bool,
    /// Write the full report as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A parsed list of shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct HGrid(pub Vec<f64>);

const MAX_GRID: usize = 10_000;

fn parse_model(s: &str) -> std::result::Result<ModelId, String> {
    s.parse()
}

fn parse_estimator(s: &str) -> std::result::Result<EstimatorId, String> {
    s.trim().parse()
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}

fn parse_finite(s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("'{s}' is not a finite number"))
}

/// `start:stop:step` (stop included when hit up to rounding) or `a,b,c`.
pub fn parse_h_grid(s: &str) -> std::result::Result<HGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (parse_finite(start)?, parse_finite(stop)?, parse_finite(step)?);
            if !(h > 0.0) {
                return Err(format!("step must be positive, got {h}"));
            }
            if b < a {
                return Err(format!("stop {b} is below start {a}"));
            }
            let count = ((b - a) / h + 1e-9).floor() as usize + 1;
            if count > MAX_GRID {
                return Err(format!("grid has {count} points, more than {MAX_GRID}"));
            }
            (0..count).map(|k| a + k as f64 * h).collect()
        }
        [list] => list.split(',').map(parse_finite).collect::<std::result::Result<Vec<f64>, String>>()?,
        _ => return Err(format!("expected start:stop:step or a comma list, got '{s}'")),
    };
    if grid.is_empty() {
        return Err("empty h grid".into());
    }
    Ok(HGrid(grid))
}

impl ScenarioArgs {
    fn plan(&self) -> ExperimentPlan {
        let (n, m, d) = self.model.paper_dims();
        let mut spec = ScenarioSpec::new(
            self.model,
            self.n.unwrap_or(n),
            self.m.unwrap_or(m),
            self.d.unwrap_or(d),
            self.seed,
        );
        spec.sparsity = self.sparsity;
        let mut plan = ExperimentPlan::new(spec, self.estimators.clone(), self.reps as usize, self.seed);
        plan.alpha = self.alpha;
        plan
    }

    fn workers(&self) -> usize {
        self.workers.map(|w| w as usize).unwrap_or_else(parallel::default_workers)
    }
}

fn opt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Aligned table with four decimals.
pub fn format_table(table: &SummaryTable) -> String {
    let mut s = format!(
        "{:<14}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
        "estimator", "bias", "rmse", "length", "coverage", "failures"
    );
    for r in &table.rows {
        s.push_str(&format!(
            "{:<14}{:>10.4}{:>10.4}{:>10}{:>10}{:>10}\n",
            r.estimator.as_str(),
            r.bias,
            r.rmse,
            opt4(r.length),
            opt4(r.coverage),
            r.rep_failures
        ));
    }
    s
}

fn scale_note(paper_scale: bool) -> &'static str {
    if paper_scale {
        "scale: paper"
    } else {
        "scale: reduced (not the published design)"
    }
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let plan = args.scenario.plan();
    let table = parallel::run_table(&plan, args.scenario.workers())?;
    writeln!(out, "{}", scale_note(table.paper_scale))?;
    write!(out, "{}", format_table(&table))?;
    if let Some(path) = &args.scenario.out {
        emit::emit_table(&table, args.scenario.format, path)?;
    }
    Ok(())
}

fn cmd_power(args: &PowerArgs, out: &mut dyn Write) -> Result<()> {
    let mut plan = args.scenario.plan();
    plan.h_grid = args.h_grid.0.clone();
    let curve = parallel::run_power(&plan, args.scenario.workers())?;
    writeln!(out, "{}", scale_note(curve.paper_scale))?;
    writeln!(out, "{:<14}{:>10}{:>12}", "estimator", "h", "rejection")?;
    for (id, h, rate) in emit::power_rows(&curve) {
        writeln!(out, "{id:<14}{h:>10.4}{rate:>12.4}")?;
    }
    if let Some(path) = &args.scenario.out {
        emit::emit_power(&curve, args.scenario.format, path)?;
    }
    Ok(())
}

/// Load, optionally center, and estimate. Shared with the tests.
pub fn estimate_from_files(args: &EstimateArgs) -> Result<EstimateReport> {
    let loaded = load_csv(&args.labeled, args.unlabeled.as_deref(), &args.z, &args.y)?;
    let data = if args.no_center {
        loaded.dataset
    } else {
        center(&loaded.dataset).0
    };
    let config = EstimatorConfig {
        alpha: args.alpha,
        split_seed: args.seed,
        variance_mode: match args.variance_mode {
            VarianceArg::NoShift => VarianceMode::NoShift,
            VarianceArg::CovariateShift => VarianceMode::CovariateShift,
        },
        ..EstimatorConfig::default()
    };
    estimate(args.estimator, &data, &config).with_context(|| format!("{} failed", args.estimator))
}

fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let report = estimate_from_files(args)?;
    if args.estimator.is_supervised() && args.unlabeled.is_some() {
        writeln!(err, "warning: {} ignores the unlabeled rows", args.estimator)?;
    }
    let d = &report.diagnostics;
    writeln!(out, "estimator   {}", report.estimator)?;
    writeln!(out, "theta_hat   {:.4}", report.theta_hat)?;
    writeln!(out, "std_error   {}", opt4(report.std_error))?;
    writeln!(
        out,
        "ci          [{}, {}] at level {:.4}",
        opt4(report.ci_lower),
        opt4(report.ci_upper),
        1.0 - report.alpha
    )?;
    writeln!(out, "rows        n = {}, m = {}, d = {}", d.n_labeled, d.n_unlabeled, d.d)?;
    for (k, v) in &d.chosen_lambdas {
        writeln!(out, "lambda_{k:<5} {v:.4e}")?;
    }
    if let Some(q) = d.gamma_support_size {
        writeln!(out, "gamma_support {q}")?;
    }
    if let Some(s) = d.beta_support_size {
        writeln!(out, "beta_support  {s}")?;
    }
    for note in &d.notes {
        writeln!(out, "note: {note}")?;
    }
    if let Some(path) = &args.out {
        emit::emit_json(&report, path)?;
    }
    Ok(())
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Power(a) => cmd_power(a, out),
        Command::Estimate(a) => cmd_estimate(a, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}
