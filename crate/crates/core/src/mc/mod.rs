//! Euler–Maruyama simulation of the market under the two probability
//! measures and Monte Carlo estimators of the two cost functionals.
//!
//! Under P the reduced state follows `dx = [−cx + γ(σ²+σ̄²)u]dt + σdW₁ + σ̄dW₂`
//! from `x(0) = m/c`. Under P̃ the log-price follows
//! `dL = c(L̄ − L)dt + σdW̃ + σ̄dW̄` and log-wealth is integrated exactly in
//! the Itô sense:
//!
//! ```text
//! d ln X = (1−u)r dt + u dL + ½u·v dt − ½u²·v dt,   v = σ²+σ̄²+2ρσσ̄
//! ```

mod rng;

pub use rng::{correlated_increments, PathStream};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::model::MarketParams;
use crate::numerics::uniform_grid;
use crate::policy::Control;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// Measure after the change of measure; the reduced state SDE holds.
    #[serde(rename = "P")]
    P,
    /// Original market measure.
    #[serde(rename = "P_TILDE")]
    PTilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum McError {
    #[error("n_paths must be at least 1")]
    NoPaths,
    #[error("n_steps must be at least 1")]
    NoSteps,
    #[error("estimator needs measure {expected:?}, config has {got:?}")]
    WrongMeasure { expected: Measure, got: Measure },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub measure: Measure,
    /// Keep full per-path trajectories (memory ∝ n_paths × n_steps).
    #[serde(default)]
    pub record_paths: bool,
    #[serde(default)]
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(measure: Measure, n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            measure,
            record_paths: false,
            execution: Execution::default(),
        }
    }

    pub fn with_measure(mut self, measure: Measure) -> Self {
        self.measure = measure;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_paths = true;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.n_paths == 0 {
            return Err(McError::NoPaths);
        }
        if self.n_steps == 0 {
            return Err(McError::NoSteps);
        }
        Ok(())
    }

    fn expect(&self, measure: Measure) -> Result<(), McError> {
        self.validate()?;
        if self.measure != measure {
            return Err(McError::WrongMeasure {
                expected: measure,
                got: self.measure,
            });
        }
        Ok(())
    }
}

/// Full trajectory of one path, kept only when `record_paths` is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    /// Reduced state x(t_k), k = 0..=n.
    pub states: Vec<f64>,
    /// Log-price L(t_k) (P̃ only).
    pub log_prices: Vec<f64>,
    /// Log-wealth ln X(t_k) (P̃ only).
    pub log_wealth: Vec<f64>,
    /// Applied control on [t_k, t_{k+1}), k = 0..n.
    pub controls: Vec<f64>,
    pub increments: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub terminal_state: f64,
    /// Left-endpoint ∫₀ᵀ h(x, u) dt.
    pub cost_integral: f64,
    /// ln X(T) (P̃ only).
    pub log_wealth: Option<f64>,
    /// Log of the discretised Radon–Nikodym density (P̃ only).
    pub rn_log_weight: Option<f64>,
    /// max over steps of (γσu)² + (γσ̄u)².
    pub novikov_max: f64,
    /// Wealth left the positive reals (non-finite or underflowed log-wealth).
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub measure: Measure,
    pub times: Vec<f64>,
    pub paths: Vec<PathSummary>,
    pub records: Option<Vec<PathRecord>>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn rn_weights(&self) -> Vec<f64> {
        self.paths
            .iter()
            .filter_map(|p| p.rn_log_weight.map(f64::exp))
            .collect()
    }

    pub fn flagged(&self) -> usize {
        self.paths.iter().filter(|p| p.flagged).count()
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    /// Paths dropped from the estimate (e.g. non-positive wealth).
    #[serde(default)]
    pub excluded: usize,
}

impl Estimate {
    /// Welford accumulation in iteration order.
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in samples {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        let std_error = if n > 1 {
            (m2 / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            n,
            excluded: 0,
        }
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_se(&self, other: &Estimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

#[inline]
fn novikov_term(params: &MarketParams, u: f64) -> f64 {
    let g = params.gamma;
    (g * params.sigma * u).powi(2) + (g * params.sigma_bar * u).powi(2)
}

/// One step's contribution to the log Radon–Nikodym density
/// `γu(σdW̃ + σ̄dW̄) − ½γ²(σ²+σ̄²)u²dt`.
#[inline]
pub fn girsanov_log_increment(params: &MarketParams, u: f64, dw1: f64, dw2: f64, dt: f64) -> f64 {
    let g = params.gamma;
    g * u * (params.sigma * dw1 + params.sigma_bar * dw2)
        - 0.5 * g * g * params.var_sum() * u * u * dt
}

/// Discretised dP/dP̃ along a recorded P̃ path.
pub fn girsanov_weight(
    params: &MarketParams,
    controls: &[f64],
    increments: &[(f64, f64)],
    dt: f64,
) -> f64 {
    controls
        .iter()
        .zip(increments)
        .map(|(&u, &(dw1, dw2))| girsanov_log_increment(params, u, dw1, dw2, dt))
        .sum::<f64>()
        .exp()
}

/// Simulates the reduced state under P with Euler–Maruyama.
pub fn simulate_reduced<C: Control + ?Sized>(
    params: &MarketParams,
    policy: &C,
    cfg: &SimConfig,
) -> Result<PathEnsemble, McError> {
    cfg.expect(Measure::P)?;
    let times = uniform_grid(params.horizon, cfg.n_steps);
    let dt = params.horizon / cfg.n_steps as f64;
    let drift_gain = params.gamma * params.var_sum();

    let outcomes = exec::map_indices(cfg.execution, cfg.n_paths, |path| {
        let mut stream = PathStream::new(cfg.seed, path as u64);
        let mut record = cfg.record_paths.then(PathRecord::default);
        let mut x = params.initial_state();
        let mut cost = 0.0;
        let mut novikov = 0.0f64;
        for &t in &times[..cfg.n_steps] {
            let u = policy.control(t, x);
            cost += params.running_cost(x, u) * dt;
            novikov = novikov.max(novikov_term(params, u));
            let (dw1, dw2) = correlated_increments(params.rho, dt, &mut stream);
            if let Some(r) = record.as_mut() {
                r.states.push(x);
                r.controls.push(u);
                r.increments.push((dw1, dw2));
            }
            x +=
                (-params.c * x + drift_gain * u) * dt + params.sigma * dw1 + params.sigma_bar * dw2;
        }
        if let Some(r) = record.as_mut() {
            r.states.push(x);
        }
        let summary = PathSummary {
            terminal_state: x,
            cost_integral: cost,
            log_wealth: None,
            rn_log_weight: None,
            novikov_max: novikov,
            flagged: false,
        };
        (summary, record)
    });
    Ok(assemble(Measure::P, times, outcomes, cfg.record_paths))
}

/// Simulates (L, ln X) jointly under P̃; the control sees the transformed
/// state x = L − L̄(t) + m/c.
pub fn simulate_original<C: Control + ?Sized>(
    params: &MarketParams,
    policy: &C,
    cfg: &SimConfig,
) -> Result<PathEnsemble, McError> {
    cfg.expect(Measure::PTilde)?;
    let times = uniform_grid(params.horizon, cfg.n_steps);
    let dt = params.horizon / cfg.n_steps as f64;
    let v = params.total_var();

    let outcomes = exec::map_indices(cfg.execution, cfg.n_paths, |path| {
        let mut stream = PathStream::new(cfg.seed, path as u64);
        let mut record = cfg.record_paths.then(PathRecord::default);
        let mut l = params.trend(0.0);
        let mut log_x = params.x0.ln();
        let mut log_rn = 0.0;
        let mut cost = 0.0;
        let mut novikov = 0.0f64;
        for &t in &times[..cfg.n_steps] {
            let x = params.state_from_logprice(t, l);
            let u = policy.control(t, x);
            cost += params.running_cost(x, u) * dt;
            novikov = novikov.max(novikov_term(params, u));
            let (dw1, dw2) = correlated_increments(params.rho, dt, &mut stream);
            if let Some(r) = record.as_mut() {
                r.states.push(x);
                r.log_prices.push(l);
                r.log_wealth.push(log_x);
                r.controls.push(u);
                r.increments.push((dw1, dw2));
            }
            let dl =
                params.c * (params.trend(t) - l) * dt + params.sigma * dw1 + params.sigma_bar * dw2;
            log_x += (1.0 - u) * params.r * dt + u * dl + 0.5 * u * v * dt - 0.5 * u * u * v * dt;
            log_rn += girsanov_log_increment(params, u, dw1, dw2, dt);
            l += dl;
        }
        let x_final = params.state_from_logprice(params.horizon, l);
        if let Some(r) = record.as_mut() {
            r.states.push(x_final);
            r.log_prices.push(l);
            r.log_wealth.push(log_x);
        }
        let flagged = !log_x.is_finite() || log_x.exp() <= 0.0;
        let summary = PathSummary {
            terminal_state: x_final,
            cost_integral: cost,
            log_wealth: Some(log_x),
            rn_log_weight: Some(log_rn),
            novikov_max: novikov,
            flagged,
        };
        (summary, record)
    });
    Ok(assemble(Measure::PTilde, times, outcomes, cfg.record_paths))
}

fn assemble(
    measure: Measure,
    times: Vec<f64>,
    outcomes: Vec<(PathSummary, Option<PathRecord>)>,
    keep: bool,
) -> PathEnsemble {
    let mut paths = Vec::with_capacity(outcomes.len());
    let mut records = keep.then(|| Vec::with_capacity(outcomes.len()));
    for (summary, record) in outcomes {
        paths.push(summary);
        if let (Some(all), Some(r)) = (records.as_mut(), record) {
            all.push(r);
        }
    }
    PathEnsemble {
        measure,
        times,
        paths,
        records,
    }
}

/// Per-path samples of exp{γ∫h dt} from a P ensemble.
pub fn exponential_cost_samples(params: &MarketParams, ensemble: &PathEnsemble) -> Vec<f64> {
    ensemble
        .paths
        .iter()
        .map(|p| (params.gamma * p.cost_integral).exp())
        .collect()
}

/// J = E[exp{γ∫₀ᵀ h dt}] under P.
pub fn estimate_j<C: Control + ?Sized>(
    params: &MarketParams,
    policy: &C,
    cfg: &SimConfig,
) -> Result<Estimate, McError> {
    let ens = simulate_reduced(params, policy, cfg)?;
    Ok(Estimate::from_samples(exponential_cost_samples(
        params, &ens,
    )))
}

/// Ẽ[X(T)^γ] over unflagged paths of a P̃ ensemble.
pub fn wealth_power_estimate(params: &MarketParams, ensemble: &PathEnsemble) -> Estimate {
    let mut est = Estimate::from_samples(
        ensemble
            .paths
            .iter()
            .filter(|p| !p.flagged)
            .filter_map(|p| p.log_wealth)
            .map(|lx| (params.gamma * lx).exp()),
    );
    est.excluded = ensemble.flagged();
    est
}

/// J̃ = (1/γ)Ẽ[X(T)^γ] under P̃.
pub fn estimate_hara<C: Control + ?Sized>(
    params: &MarketParams,
    policy: &C,
    cfg: &SimConfig,
) -> Result<Estimate, McError> {
    let ens = simulate_original(params, policy, cfg)?;
    let power = wealth_power_estimate(params, &ens);
    Ok(Estimate {
        mean: power.mean / params.gamma,
        std_error: power.std_error / params.gamma.abs(),
        ..power
    })
}
