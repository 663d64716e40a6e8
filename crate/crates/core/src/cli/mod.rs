//! Command-line front end: subcommands, output writing and config-driven
//! runs.

mod config;
mod sweep;

pub use config::{params_hash, run_config, Manifest, RunConfig};
pub use sweep::{
    default_gamma_grid, figure1, figures, linspace_step, rho_figure, sweep, Axis, SkippedPoint,
    SweepRow, SweepSpec, SweepTable,
};

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::mc::{self, Estimate, McError, Measure, SimConfig};
use crate::model::{MarketParams, ModelError};
use crate::policy::{ConstantControl, Control, FeedbackPolicy};
use crate::riccati::{RiccatiCoeffs, RiccatiError, SolveMethod, SolveOptions, ValueFunctions};
use crate::verify::{self, SuiteConfig, VerificationReport, VerifyError};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("unknown subcommand `{0}` (expected solve, policy, simulate, sweep or verify)")]
    UnknownSubcommand(String),
    #[error("cannot write output to {path}: {source}")]
    OutputUnwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("invalid parameters")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "riskinvest",
    version,
    about = "Risk-sensitive optimal investment with correlated noises"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonOpts {
    /// Base seed for the per-path random streams.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Number of Monte Carlo paths.
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Time steps on [0, T] (also the Riccati grid size).
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Write outputs here instead of standard output.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// MarketParams JSON file; defaults to the reference parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Run single-threaded.
    #[arg(long)]
    pub sequential: bool,
}

impl CommonOpts {
    pub fn market(&self) -> Result<MarketParams, CliError> {
        let mut p = match &self.params {
            Some(path) => read_json(path)?,
            None => MarketParams::reference(),
        };
        if let Some(g) = self.gamma {
            p.gamma = g;
        }
        if let Some(r) = self.rho {
            p.rho = r;
        }
        Ok(p.validate()?)
    }

    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    P,
    #[value(name = "p-tilde", alias = "P_TILDE")]
    PTilde,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::P => Measure::P,
            MeasureArg::PTilde => Measure::PTilde,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    Feedback,
    Constant,
    Zero,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate Q and φ and print the Riccati coefficients.
    Solve {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Use backward RK4 instead of the closed form.
        #[arg(long)]
        numeric: bool,
    },
    /// Print a(t), b(t) and u(t, x) on a time grid and a set of states.
    Policy {
        #[command(flatten)]
        common: CommonOpts,
        /// Evaluation times (comma separated); default is 11 equally spaced points.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// States (comma separated); default is m/c.
        #[arg(long, value_delimiter = ',')]
        states: Vec<f64>,
    },
    /// Monte Carlo estimate of the reduced or original objective.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value_t = MeasureArg::P)]
        measure: MeasureArg,
        #[arg(long, value_enum, default_value_t = PolicySource::Feedback)]
        policy: PolicySource,
        /// Proportion for `--policy constant`.
        #[arg(long, default_value_t = 0.0)]
        u: f64,
        /// Also write one CSV row per path.
        #[arg(long)]
        per_path: bool,
    },
    /// Optimal proportion along a γ or ρ grid, or all four figure tables.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value_t = Axis::Gamma)]
        axis: Axis,
        /// Sweep values (comma separated); default is the axis' standard grid.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Evaluation time.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Log-return ln S(t)/S(0) of the evaluation state.
        #[arg(long, default_value_t = 0.0)]
        k: f64,
        /// Write fig1.csv … fig4.csv instead of a single sweep.
        #[arg(long)]
        figures: bool,
    },
    /// Run the verification suite; exits nonzero iff a gated check fails.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Perturbation size.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Paths for the forward-backward residual runs.
        #[arg(long, default_value_t = 10_000)]
        fbsde_paths: usize,
    },
    /// Dispatch from a JSON config file.
    Run { config: PathBuf },
}

/// Where a subcommand's outputs went and whether it succeeded.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub success: bool,
}

impl Outcome {
    fn ok() -> Self {
        Self {
            files: Vec::new(),
            success: true,
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigParse {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::ConfigParse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Writes into `dir/name`, or to stdout when no directory is given.
pub fn emit(
    dir: Option<&Path>,
    name: &str,
    bytes: &[u8],
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    match dir {
        Some(dir) => {
            let path = dir.join(name);
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(&path, bytes))
                .map_err(|source| CliError::OutputUnwritable {
                    path: path.clone(),
                    source,
                })?;
            outcome.files.push(path);
        }
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            if !bytes.ends_with(b"\n") {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    grid: &'a [f64],
    #[serde(rename = "Q")]
    q: &'a [f64],
    phi: &'a [f64],
    coeffs: &'a RiccatiCoeffs,
}

fn two_column_csv(name: &str, grid: &[f64], values: &[f64]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", name])?;
    for (t, v) in grid.iter().zip(values) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

pub fn solve_cmd(
    params: &MarketParams,
    steps: usize,
    numeric: bool,
    execution: Execution,
    format: Format,
    dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let opts = SolveOptions {
        n_grid: steps,
        method: if numeric {
            SolveMethod::Numeric
        } else {
            SolveMethod::Closed
        },
        execution,
        ..SolveOptions::default()
    };
    let vf = ValueFunctions::solve_with(params, &opts)?;
    let mut outcome = Outcome::ok();
    let json = json_bytes(&SolveOutput {
        grid: &vf.grid,
        q: &vf.q_tab,
        phi: &vf.phi_tab,
        coeffs: &vf.coeffs,
    })?;
    let q_csv = two_column_csv("Q", &vf.grid, &vf.q_tab)?;
    let phi_csv = two_column_csv("phi", &vf.grid, &vf.phi_tab)?;
    match (dir, format) {
        (Some(_), _) => {
            emit(dir, "solve.json", &json, &mut outcome)?;
            emit(dir, "q.csv", &q_csv, &mut outcome)?;
            emit(dir, "phi.csv", &phi_csv, &mut outcome)?;
        }
        (None, Format::Json) => emit(None, "", &json, &mut outcome)?,
        (None, Format::Csv) => {
            emit(None, "", &q_csv, &mut outcome)?;
            emit(None, "", &phi_csv, &mut outcome)?;
        }
    }
    Ok(outcome)
}

pub fn policy_cmd(
    params: &MarketParams,
    steps: usize,
    times: &[f64],
    states: &[f64],
    execution: Execution,
    dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let opts = SolveOptions {
        n_grid: steps,
        execution,
        ..SolveOptions::default()
    };
    let vf = ValueFunctions::solve_with(params, &opts)?;
    let pol = FeedbackPolicy::new(&vf);
    let times: Vec<f64> = if times.is_empty() {
        (0..=10).map(|k| params.horizon * k as f64 / 10.0).collect()
    } else {
        times.to_vec()
    };
    let states = if states.is_empty() {
        vec![params.initial_state()]
    } else {
        states.to_vec()
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x", "a", "b", "u"])?;
    for &t in &times {
        for &x in &states {
            let row = [t, x, pol.gain(t), pol.offset(t), pol.control(t, x)];
            w.write_record(row.iter().map(f64::to_string))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    let mut outcome = Outcome::ok();
    emit(dir, "policy.csv", &bytes, &mut outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub measure: Measure,
    pub policy: PolicySource,
    pub u: Option<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// J under P, J̃ = (1/γ)Ẽ[X(T)^γ] under P̃.
    pub estimate: Estimate,
    /// Mean of the Radon–Nikodym weights (P̃ only).
    pub rn_weight_mean: Option<Estimate>,
    pub flagged_paths: usize,
}

pub fn simulate_cmd(
    params: &MarketParams,
    sim: &SimConfig,
    source: PolicySource,
    u: f64,
    per_path: bool,
    dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let vf;
    let control: Box<dyn Control> = match source {
        PolicySource::Feedback => {
            let opts = SolveOptions {
                n_grid: sim.n_steps.max(2),
                execution: sim.execution,
                ..SolveOptions::default()
            };
            vf = ValueFunctions::solve_with(params, &opts)?;
            Box::new(FeedbackPolicy::new(&vf))
        }
        PolicySource::Constant => Box::new(ConstantControl(u)),
        PolicySource::Zero => Box::new(ConstantControl(0.0)),
    };
    let ens = match sim.measure {
        Measure::P => mc::simulate_reduced(params, control.as_ref(), sim)?,
        Measure::PTilde => mc::simulate_original(params, control.as_ref(), sim)?,
    };
    let (estimate, rn) = match sim.measure {
        Measure::P => (
            Estimate::from_samples(mc::exponential_cost_samples(params, &ens)),
            None,
        ),
        Measure::PTilde => {
            let pw = mc::wealth_power_estimate(params, &ens);
            let hara = Estimate {
                mean: pw.mean / params.gamma,
                std_error: pw.std_error / params.gamma.abs(),
                ..pw
            };
            (hara, Some(Estimate::from_samples(ens.rn_weights())))
        }
    };
    let out = SimulateOutput {
        measure: sim.measure,
        policy: source,
        u: (source == PolicySource::Constant).then_some(u),
        n_paths: sim.n_paths,
        n_steps: sim.n_steps,
        seed: sim.seed,
        estimate,
        rn_weight_mean: rn,
        flagged_paths: ens.flagged(),
    };
    let mut outcome = Outcome::ok();
    emit(dir, "simulate.json", &json_bytes(&out)?, &mut outcome)?;
    if per_path {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "path",
            "terminal_state",
            "cost_integral",
            "log_wealth",
            "rn_log_weight",
            "novikov_max",
            "flagged",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, p) in ens.paths.iter().enumerate() {
            w.write_record([
                i.to_string(),
                p.terminal_state.to_string(),
                p.cost_integral.to_string(),
                opt(p.log_wealth),
                opt(p.rn_log_weight),
                p.novikov_max.to_string(),
                p.flagged.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        emit(dir, "paths.csv", &bytes, &mut outcome)?;
    }
    Ok(outcome)
}

pub fn sweep_cmd(
    spec: &SweepSpec,
    execution: Execution,
    dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let table = sweep(spec, execution)?;
    report_skipped(&table);
    let mut outcome = Outcome::ok();
    emit(dir, "sweep.csv", &table.to_csv()?, &mut outcome)?;
    Ok(outcome)
}

pub fn figures_cmd(
    base: &MarketParams,
    execution: Execution,
    dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::ok();
    for (name, table) in figures(base, execution)? {
        report_skipped(&table);
        emit(dir, name, &table.to_csv()?, &mut outcome)?;
    }
    Ok(outcome)
}

fn report_skipped(table: &SweepTable) {
    for s in &table.skipped {
        eprintln!("skipped {} = {}: {}", s.axis.label(), s.value, s.reason);
    }
}

/// Runs the suite at the given parameters plus the uncorrelated counterpart
/// of the cross-measure check, which is the gated one.
pub fn verify_reports(
    params: &MarketParams,
    cfg: &SuiteConfig,
) -> Result<Vec<VerificationReport>, CliError> {
    let mut reports = verify::run_suite(params, cfg)?;
    if params.rho != 0.0 {
        let uncorrelated = params.with_rho(0.0);
        let opts = SolveOptions {
            n_grid: cfg.n_steps,
            execution: cfg.execution,
            ..SolveOptions::default()
        };
        let vf = ValueFunctions::solve_with(&uncorrelated, &opts)?;
        let sim = SimConfig::new(Measure::P, cfg.n_paths, cfg.n_steps, cfg.seed)
            .with_execution(cfg.execution);
        reports.push(verify::measure_consistency(
            &uncorrelated,
            &FeedbackPolicy::new(&vf),
            &sim,
        )?);
    }
    Ok(reports)
}

pub fn verify_cmd(
    params: &MarketParams,
    cfg: &SuiteConfig,
    dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let reports = verify_reports(params, cfg)?;
    let mut outcome = Outcome::ok();
    emit(dir, "verify.json", &json_bytes(&reports)?, &mut outcome)?;
    outcome.success = verify::gate_failures(&reports) == 0;
    Ok(outcome)
}

fn sim_config(common: &CommonOpts, measure: Measure) -> SimConfig {
    SimConfig::new(measure, common.paths, common.steps, common.seed)
        .with_execution(common.execution())
}

fn suite_config(common: &CommonOpts, eps: f64, fbsde_paths: usize) -> SuiteConfig {
    SuiteConfig {
        n_paths: common.paths,
        n_steps: common.steps,
        seed: common.seed,
        eps,
        fbsde_paths,
        execution: common.execution(),
        ..SuiteConfig::default()
    }
}

pub fn default_values(axis: Axis, params: &MarketParams) -> Vec<f64> {
    match axis {
        Axis::Gamma => default_gamma_grid(params),
        Axis::Rho => (1..=99).map(|k| k as f64 / 100.0).collect(),
    }
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Solve {
            common,
            format,
            numeric,
        } => {
            let p = common.market()?;
            solve_cmd(
                &p,
                common.steps,
                numeric,
                common.execution(),
                format,
                common.out_dir.as_deref(),
            )
        }
        Command::Policy {
            common,
            times,
            states,
        } => {
            let p = common.market()?;
            policy_cmd(
                &p,
                common.steps,
                &times,
                &states,
                common.execution(),
                common.out_dir.as_deref(),
            )
        }
        Command::Simulate {
            common,
            measure,
            policy,
            u,
            per_path,
        } => {
            let p = common.market()?;
            let sim = sim_config(&common, measure.into());
            simulate_cmd(&p, &sim, policy, u, per_path, common.out_dir.as_deref())
        }
        Command::Sweep {
            common,
            axis,
            values,
            t,
            k,
            figures,
        } => {
            let p = common.market()?;
            if figures {
                return figures_cmd(&p, common.execution(), common.out_dir.as_deref());
            }
            let values = if values.is_empty() {
                default_values(axis, &p)
            } else {
                values
            };
            let spec = SweepSpec {
                axis,
                values,
                fixed: p,
                eval_time: t,
                k_offset: k,
            };
            sweep_cmd(&spec, common.execution(), common.out_dir.as_deref())
        }
        Command::Verify {
            common,
            eps,
            fbsde_paths,
        } => {
            let p = common.market()?;
            verify_cmd(
                &p,
                &suite_config(&common, eps, fbsde_paths),
                common.out_dir.as_deref(),
            )
        }
        Command::Run { config } => {
            let manifest = run_config(&config)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(Outcome {
                files: manifest.outputs.clone(),
                success: manifest.success,
            })
        }
    }
}
