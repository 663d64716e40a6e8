//! `run <config.json>`: one JSON file describes a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exec::Execution;
use crate::mc::{Measure, SimConfig};
use crate::model::MarketParams;
use crate::verify::SuiteConfig;

use super::{
    default_values, figures_cmd, policy_cmd, read_json, simulate_cmd, solve_cmd, sweep_cmd,
    verify_cmd, Axis, CliError, Format, Outcome, PolicySource, SweepSpec, DEFAULT_SEED,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// solve | policy | simulate | sweep | verify
    pub cmd: String,
    /// Defaults to the reference parameters.
    #[serde(default)]
    pub params: Option<MarketParams>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub execution: Execution,

    #[serde(default)]
    pub numeric: bool,

    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub states: Vec<f64>,

    #[serde(default)]
    pub measure: Option<Measure>,
    #[serde(default)]
    pub policy: Option<PolicySource>,
    #[serde(default)]
    pub u: Option<f64>,
    #[serde(default)]
    pub per_path: bool,

    #[serde(default)]
    pub axis: Option<Axis>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub eval_time: Option<f64>,
    #[serde(default)]
    pub k_offset: Option<f64>,
    /// Write fig1.csv … fig4.csv.
    #[serde(default)]
    pub figures: bool,

    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub fbsde_paths: Option<usize>,
}

/// Printed after every config-driven run and written as manifest.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub cmd: String,
    pub version: String,
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub params: MarketParams,
    /// SHA-256 of the compact JSON encoding of `params`.
    pub params_hash: String,
    pub outputs: Vec<PathBuf>,
    pub success: bool,
}

pub fn params_hash(params: &MarketParams) -> String {
    let bytes = serde_json::to_vec(params).expect("MarketParams serialises");
    hex::encode(Sha256::digest(bytes))
}

pub fn run_config(path: &Path) -> Result<Manifest, CliError> {
    let cfg: RunConfig = read_json(path)?;
    let params = cfg
        .params
        .unwrap_or_else(MarketParams::reference)
        .validate()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let paths = cfg.paths.unwrap_or(100_000);
    let steps = cfg.steps.unwrap_or(1000);
    let dir = Some(cfg.out_dir.as_path());
    let exec = cfg.execution;

    let outcome: Outcome = match cfg.cmd.as_str() {
        "solve" => solve_cmd(&params, steps, cfg.numeric, exec, Format::Json, dir)?,
        "policy" => policy_cmd(&params, steps, &cfg.times, &cfg.states, exec, dir)?,
        "simulate" => {
            let sim = SimConfig::new(cfg.measure.unwrap_or(Measure::P), paths, steps, seed)
                .with_execution(exec);
            let source = cfg.policy.unwrap_or(PolicySource::Feedback);
            simulate_cmd(
                &params,
                &sim,
                source,
                cfg.u.unwrap_or(0.0),
                cfg.per_path,
                dir,
            )?
        }
        "sweep" if cfg.figures => figures_cmd(&params, exec, dir)?,
        "sweep" => {
            let axis = cfg.axis.unwrap_or(Axis::Gamma);
            let spec = SweepSpec {
                axis,
                values: cfg
                    .values
                    .clone()
                    .unwrap_or_else(|| default_values(axis, &params)),
                fixed: params,
                eval_time: cfg.eval_time.unwrap_or(0.0),
                k_offset: cfg.k_offset.unwrap_or(0.0),
            };
            sweep_cmd(&spec, exec, dir)?
        }
        "verify" => {
            let suite = SuiteConfig {
                n_paths: paths,
                n_steps: steps,
                seed,
                eps: cfg.eps.unwrap_or(0.1),
                fbsde_paths: cfg.fbsde_paths.unwrap_or(10_000),
                execution: exec,
                ..SuiteConfig::default()
            };
            verify_cmd(&params, &suite, dir)?
        }
        other => return Err(CliError::UnknownSubcommand(other.to_owned())),
    };

    let mut manifest = Manifest {
        cmd: cfg.cmd,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        seed,
        paths,
        steps,
        params,
        params_hash: params_hash(&params),
        outputs: outcome.files,
        success: outcome.success,
    };
    let manifest_path = cfg.out_dir.join("manifest.json");
    manifest.outputs.push(manifest_path.clone());
    let bytes = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(&manifest_path, bytes).map_err(|source| CliError::OutputUnwritable {
        path: manifest_path,
        source,
    })?;
    Ok(manifest)
}
