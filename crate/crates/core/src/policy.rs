//! Optimal feedback law, adjoint reconstruction and the 𝓗-function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::model::MarketParams;
use crate::riccati::ValueFunctions;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PolicyError {
    #[error("D = {0} >= 0: the H-function is not strictly convex in u")]
    NonconvexH(f64),
}

/// A (possibly state-dependent) investment proportion u(t, x).
pub trait Control: Sync {
    fn control(&self, t: f64, x: f64) -> f64;
}

impl<F> Control for F
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    #[inline]
    fn control(&self, t: f64, x: f64) -> f64 {
        self(t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantControl(pub f64);

impl Control for ConstantControl {
    #[inline]
    fn control(&self, _t: f64, _x: f64) -> f64 {
        self.0
    }
}

/// The affine feedback law u(t, x) = a(t)·x + b(t).
#[derive(Debug, Clone, Copy)]
pub struct FeedbackPolicy<'a> {
    vf: &'a ValueFunctions,
    q_gain_sign: f64,
}

impl<'a> FeedbackPolicy<'a> {
    pub fn new(vf: &'a ValueFunctions) -> Self {
        Self {
            vf,
            q_gain_sign: 1.0,
        }
    }

    /// Same law with the sign of the Q-term in the state gain flipped. Only
    /// useful as a deliberately wrong policy.
    pub fn with_flipped_q_gain(mut self) -> Self {
        self.q_gain_sign = -self.q_gain_sign;
        self
    }

    pub fn value_functions(&self) -> &ValueFunctions {
        self.vf
    }

    /// a(t) = [−γ(σ²+σ̄²)Q(t) + c] / D
    #[inline]
    pub fn gain(&self, t: f64) -> f64 {
        let p = &self.vf.params;
        (-self.q_gain_sign * p.gamma * p.var_sum() * self.vf.q(t) + p.c) / p.denominator()
    }

    /// b(t) = −γ(σ²+σ̄²)φ(t)/D − B/D
    #[inline]
    pub fn offset(&self, t: f64) -> f64 {
        let p = &self.vf.params;
        let d = p.denominator();
        -p.gamma * p.var_sum() * self.vf.phi(t) / d - p.excess_drift() / d
    }
}

impl Control for FeedbackPolicy<'_> {
    #[inline]
    fn control(&self, t: f64, x: f64) -> f64 {
        self.gain(t) * x + self.offset(t)
    }
}

/// Optimal investment proportion at (t, x).
pub fn feedback(vf: &ValueFunctions, t: f64, x: f64) -> f64 {
    let p = &vf.params;
    let d = p.denominator();
    let s2 = p.var_sum();
    (-p.gamma * s2 * vf.q(t) + p.c) / d * x - p.gamma * s2 * vf.phi(t) / d - p.excess_drift() / d
}

/// First-order adjoint variables along the optimal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointTriple {
    pub p: f64,
    pub q1: f64,
    pub q2: f64,
}

/// (p̄, q̄₁, q̄₂) = (−Q(t)x − φ(t), −σQ(t), −σ̄Q(t))
pub fn adjoints(vf: &ValueFunctions, t: f64, x: f64) -> AdjointTriple {
    let q = vf.q(t);
    AdjointTriple {
        p: -q * x - vf.phi(t),
        q1: -vf.params.sigma * q,
        q2: -vf.params.sigma_bar * q,
    }
}

/// The scalar 𝓗-function (second-order adjoint terms vanish because the
/// diffusion does not depend on the control).
pub fn h_function(params: &MarketParams, x: f64, u: f64, adj: &AdjointTriple) -> f64 {
    let s2 = params.var_sum();
    let g = params.gamma;
    let AdjointTriple { p, q1, q2 } = *adj;
    (-params.c * x + g * s2 * u) * p
        - 0.5 * s2 * g * p * p
        - 0.5 * u * u * params.denominator()
        - (params.excess_drift() - params.c * x) * u
        + params.sigma * q1
        + params.sigma_bar * q2
        - params.r
}

/// Stationary point of 𝓗 in u: γ(σ²+σ̄²)p/D + c·x/D − B/D.
pub fn stationary_control(params: &MarketParams, x: f64, p: f64) -> f64 {
    let d = params.denominator();
    params.gamma * params.var_sum() / d * p + params.c / d * x - params.excess_drift() / d
}

/// Brute-force minimiser of `f` over the lattice `lo + k·step` in `[lo, hi]`.
pub fn grid_argmin<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=n {
        let u = lo + k as f64 * step;
        let v = f(u);
        if v < best.0 {
            best = (v, u);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerReport {
    pub samples: usize,
    pub max_deviation: f64,
    pub worst_t: f64,
    pub worst_x: f64,
    /// Largest search half-width that was needed to bracket the minimiser.
    pub max_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerOptions {
    pub half_width: f64,
    pub step: f64,
    /// Sampled states are drawn uniformly from m/c ± this spread.
    pub x_spread: f64,
    pub execution: Execution,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            step: 1e-4,
            x_spread: 1.0,
            execution: Execution::default(),
        }
    }
}

/// Compares the brute-force argmin of 𝓗 over u with the feedback law at
/// `samples` random (t, x). The search window doubles until the minimiser
/// is interior.
pub fn minimizer_check(
    vf: &ValueFunctions,
    samples: usize,
    seed: u64,
) -> Result<MinimizerReport, PolicyError> {
    minimizer_check_with(vf, samples, seed, &MinimizerOptions::default())
}

pub fn minimizer_check_with(
    vf: &ValueFunctions,
    samples: usize,
    seed: u64,
    opts: &MinimizerOptions,
) -> Result<MinimizerReport, PolicyError> {
    let params = &vf.params;
    let d = params.denominator();
    if d >= 0.0 {
        return Err(PolicyError::NonconvexH(d));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_mid = params.initial_state();
    let points: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            let t = rng.random_range(0.0..=params.horizon);
            let x = x_mid + rng.random_range(-opts.x_spread..=opts.x_spread);
            (t, x)
        })
        .collect();

    let results = exec::map_indices(opts.execution, samples, |i| {
        let (t, x) = points[i];
        let adj = adjoints(vf, t, x);
        let h = |u: f64| h_function(params, x, u, &adj);
        let mut half = opts.half_width;
        let argmin = loop {
            let u = grid_argmin(h, -half, half, opts.step);
            if u.abs() < half - opts.step {
                break u;
            }
            half *= 2.0;
        };
        ((argmin - feedback(vf, t, x)).abs(), t, x, half)
    });

    let mut report = MinimizerReport {
        samples,
        max_deviation: 0.0,
        worst_t: f64::NAN,
        worst_x: f64::NAN,
        max_window: opts.half_width,
    };
    for (dev, t, x, half) in results {
        if dev >= report.max_deviation {
            report.max_deviation = dev;
            report.worst_t = t;
            report.worst_x = x;
        }
        report.max_window = report.max_window.max(half);
    }
    Ok(report)
}
