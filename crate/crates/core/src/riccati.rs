//! The scalar Riccati equation
//!
//! ```text
//! Q̇ − K₀Q² + 2K₁Q + H = 0,   Q(T) = 0
//! ```
//!
//! and the linear companion equation `φ̇ + f₁φ + f₂ = 0, φ(T) = 0`, each
//! solved twice: by closed form / quadrature, and by backward RK4.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::model::{MarketParams, ModelError};
use crate::numerics::{even_intervals, rk4_step, simpson_samples, uniform_grid};

pub const DEFAULT_GRID: usize = 1000;
pub const DEFAULT_QUAD_NODES: usize = 2001;
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RiccatiError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("delta = {0} is not positive; closed-form Riccati solution unavailable")]
    DeltaNonpositive(f64),
    #[error("K1 - sqrt(delta)/2 vanishes; ell is undefined")]
    DegenerateEll,
    #[error("closed-form Q has a pole at t = {t} inside [0, T]")]
    PoleOnInterval { t: f64 },
    #[error("|Q| = {value} exceeded the blow-up bound at t = {t}")]
    BlowupDetected { t: f64, value: f64 },
    #[error("need at least 2 steps, got {0}")]
    TooFewSteps(usize),
}

/// Scalar coefficients of the rewritten Riccati equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiCoeffs {
    pub k0: f64,
    pub k1: f64,
    pub h_coef: f64,
    /// Δ = 4(K₁² + H·K₀)
    pub delta: f64,
    pub ell: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
}

impl RiccatiCoeffs {
    /// Computes all coefficients without any solvability checks. The optional
    /// fields are filled only when Δ > 0 and their denominators are nonzero.
    pub fn compute(p: &MarketParams) -> Self {
        let s2 = p.var_sum();
        let cross = p.cross();
        let g = p.gamma;
        let d = p.denominator();
        let k0 = (g * s2 * s2 - 2.0 * g * g * cross * s2) / d + 4.0 * g * cross * (s2 + cross) / d;
        let k1 = p.c * p.total_var() / d;
        let h_coef = -p.c * p.c / d;
        let delta = 4.0 * (k1 * k1 + h_coef * k0);

        let (mut ell, mut alpha1, mut alpha2) = (None, None, None);
        if delta > 0.0 {
            let half = 0.5 * delta.sqrt();
            let plus = k1 + half;
            let minus = k1 - half;
            if minus != 0.0 {
                // Q(T) = 0 forces α₁ + ℓα₂ = 0
                ell = Some(-plus / minus);
            }
            if k0 != 0.0 {
                alpha1 = Some(plus / k0);
                alpha2 = Some(minus / k0);
            }
        }
        Self {
            k0,
            k1,
            h_coef,
            delta,
            ell,
            alpha1,
            alpha2,
        }
    }

    /// Q̇ as a function of Q: K₀Q² − 2K₁Q − H.
    #[inline]
    pub fn q_rate(&self, q: f64) -> f64 {
        self.k0 * q * q - 2.0 * self.k1 * q - self.h_coef
    }

    /// Left-hand side of the Riccati equation for a given Q and Q̇.
    #[inline]
    pub fn residual(&self, q: f64, q_dot: f64) -> f64 {
        q_dot - self.k0 * q * q + 2.0 * self.k1 * q + self.h_coef
    }
}

/// Coefficients for the closed-form branch; fails when Δ ≤ 0.
pub fn coefficients(p: &MarketParams) -> Result<RiccatiCoeffs, RiccatiError> {
    let p = p.validate()?;
    let coeffs = RiccatiCoeffs::compute(&p);
    if coeffs.delta.is_nan() || coeffs.delta <= 0.0 {
        return Err(RiccatiError::DeltaNonpositive(coeffs.delta));
    }
    if coeffs.k0 != 0.0 && coeffs.ell.is_none() {
        return Err(RiccatiError::DegenerateEll);
    }
    Ok(coeffs)
}

/// Closed-form Riccati solution, checked once for poles on `[0, T]`.
///
/// Evaluated as `Q(t) = −H(1 − E) / ((K₁ − √Δ/2) − (K₁ + √Δ/2)E)` with
/// `E = e^{−√Δ(T−t)}`, which equals `(α₁ + ℓα₂E)/(1 + ℓE)` whenever K₀ ≠ 0
/// and reduces to the linear-ODE solution when K₀ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormQ {
    k1: f64,
    h_coef: f64,
    sqrt_delta: f64,
    horizon: f64,
}

impl ClosedFormQ {
    pub fn new(coeffs: &RiccatiCoeffs, params: &MarketParams) -> Result<Self, RiccatiError> {
        if coeffs.delta.is_nan() || coeffs.delta <= 0.0 {
            return Err(RiccatiError::DeltaNonpositive(coeffs.delta));
        }
        let sqrt_delta = coeffs.delta.sqrt();
        let half = 0.5 * sqrt_delta;
        let e_min = (-sqrt_delta * params.horizon).exp();
        // the denominator is affine in E and equals −√Δ < 0 at t = T
        let at_start = (coeffs.k1 - half) - (coeffs.k1 + half) * e_min;
        if at_start >= 0.0 {
            let e_star = (coeffs.k1 - half) / (coeffs.k1 + half);
            let t = params.horizon + e_star.ln() / sqrt_delta;
            return Err(RiccatiError::PoleOnInterval { t: t.max(0.0) });
        }
        Ok(Self {
            k1: coeffs.k1,
            h_coef: coeffs.h_coef,
            sqrt_delta,
            horizon: params.horizon,
        })
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let half = 0.5 * self.sqrt_delta;
        let e = (-self.sqrt_delta * (self.horizon - t)).exp();
        -self.h_coef * (1.0 - e) / ((self.k1 - half) - (self.k1 + half) * e)
    }
}

/// Q(t) from the closed form.
pub fn q_closed_form(
    coeffs: &RiccatiCoeffs,
    params: &MarketParams,
    t: f64,
) -> Result<f64, RiccatiError> {
    Ok(ClosedFormQ::new(coeffs, params)?.eval(t))
}

/// The α/ℓ representation `(α₁ + ℓα₂E)/(1 + ℓE)`, available when K₀ ≠ 0.
pub fn q_ell_form(coeffs: &RiccatiCoeffs, params: &MarketParams, t: f64) -> Option<f64> {
    let (ell, a1, a2) = (coeffs.ell?, coeffs.alpha1?, coeffs.alpha2?);
    let e = (-coeffs.delta.sqrt() * (params.horizon - t)).exp();
    Some((a1 + ell * a2 * e) / (1.0 + ell * e))
}

/// A function sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulation {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl Tabulation {
    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Linear interpolation, clamped to the grid ends.
    pub fn interpolate(&self, t: f64) -> f64 {
        interpolate(&self.grid, &self.values, t)
    }

    /// Keeps every `stride`-th node.
    pub fn subsample(&self, stride: usize) -> Tabulation {
        Tabulation {
            grid: self.grid.iter().step_by(stride).copied().collect(),
            values: self.values.iter().step_by(stride).copied().collect(),
        }
    }
}

pub(crate) fn interpolate(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let n = grid.len() - 1;
    if t <= grid[0] {
        return values[0];
    }
    if t >= grid[n] {
        return values[n];
    }
    let i = grid.partition_point(|&g| g <= t) - 1;
    let w = (t - grid[i]) / (grid[i + 1] - grid[i]);
    if w == 0.0 {
        values[i]
    } else {
        values[i] + w * (values[i + 1] - values[i])
    }
}

/// Backward RK4 for the Riccati equation on a uniform grid of `n_steps`
/// intervals. Does not require Δ > 0.
pub fn q_numeric(params: &MarketParams, n_steps: usize) -> Result<Tabulation, RiccatiError> {
    q_numeric_with(params, n_steps, DEFAULT_BLOWUP_BOUND)
}

pub fn q_numeric_with(
    params: &MarketParams,
    n_steps: usize,
    blowup_bound: f64,
) -> Result<Tabulation, RiccatiError> {
    if n_steps < 2 {
        return Err(RiccatiError::TooFewSteps(n_steps));
    }
    let coeffs = RiccatiCoeffs::compute(params);
    let grid = uniform_grid(params.horizon, n_steps);
    let mut values = vec![0.0; n_steps + 1];
    let h = -params.horizon / n_steps as f64;
    let rate = |_t: f64, q: f64| coeffs.q_rate(q);
    let mut q = 0.0;
    for i in (0..n_steps).rev() {
        q = rk4_step(&rate, grid[i + 1], q, h);
        if !q.is_finite() || q.abs() > blowup_bound {
            return Err(RiccatiError::BlowupDetected {
                t: grid[i],
                value: q,
            });
        }
        values[i] = q;
    }
    Ok(Tabulation { grid, values })
}

/// f₁ = −K₀Q + K₁ and f₂ = B/D · (−γ(σ²+σ̄²)Q + c) at a given Q value.
#[inline]
pub fn f1_f2(coeffs: &RiccatiCoeffs, params: &MarketParams, q: f64) -> (f64, f64) {
    let f1 = -coeffs.k0 * q + coeffs.k1;
    let f2 = params.excess_drift() / params.denominator()
        * (-params.gamma * params.var_sum() * q + params.c);
    (f1, f2)
}

/// φ(t) = exp{∫ₜᵀ f₁} ∫ₜᵀ f₂(s) exp{−∫ₛᵀ f₁} ds by composite Simpson on
/// `n_quad` nodes over `[t, T]`; the inner integrals use Simpson on each
/// sub-interval with a midpoint evaluation of Q.
pub fn phi_closed_form<Q>(
    params: &MarketParams,
    coeffs: &RiccatiCoeffs,
    q: &Q,
    t: f64,
    n_quad: usize,
) -> f64
where
    Q: Fn(f64) -> f64 + ?Sized,
{
    let horizon = params.horizon;
    if t >= horizon {
        return 0.0;
    }
    let n = even_intervals(n_quad);
    let h = (horizon - t) / n as f64;
    let node = |j: usize| if j == n { horizon } else { t + j as f64 * h };

    let mut f1 = Vec::with_capacity(n + 1);
    let mut f2 = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let (a, b) = f1_f2(coeffs, params, q(node(j)));
        f1.push(a);
        f2.push(b);
    }
    // tail[j] = ∫_{s_j}^T f₁
    let mut tail = vec![0.0; n + 1];
    for j in (0..n).rev() {
        let mid = f1_f2(coeffs, params, q(node(j) + 0.5 * h)).0;
        tail[j] = tail[j + 1] + h / 6.0 * (f1[j] + 4.0 * mid + f1[j + 1]);
    }
    let integrand: Vec<f64> = (0..=n).map(|j| f2[j] * (-tail[j]).exp()).collect();
    tail[0].exp() * simpson_samples(&integrand, h)
}

/// Backward RK4 for φ̇ = −f₁φ − f₂ on `n_steps` intervals, reading Q from a
/// tabulation on the twice-refined grid (`2·n_steps + 1` nodes) so that the
/// RK4 midpoints fall on nodes.
pub fn phi_numeric(
    params: &MarketParams,
    q_fine: &[f64],
    n_steps: usize,
) -> Result<Tabulation, RiccatiError> {
    if n_steps < 2 {
        return Err(RiccatiError::TooFewSteps(n_steps));
    }
    assert_eq!(
        q_fine.len(),
        2 * n_steps + 1,
        "Q must be tabulated on the refined grid"
    );
    let coeffs = RiccatiCoeffs::compute(params);
    let grid = uniform_grid(params.horizon, n_steps);
    let h = params.horizon / n_steps as f64;
    let rate = |q: f64, phi: f64| {
        let (f1, f2) = f1_f2(&coeffs, params, q);
        -f1 * phi - f2
    };
    let mut values = vec![0.0; n_steps + 1];
    let mut phi = 0.0;
    for i in (0..n_steps).rev() {
        let (q_end, q_mid, q_start) = (q_fine[2 * i + 2], q_fine[2 * i + 1], q_fine[2 * i]);
        let k1 = rate(q_end, phi);
        let k2 = rate(q_mid, phi - 0.5 * h * k1);
        let k3 = rate(q_mid, phi - 0.5 * h * k2);
        let k4 = rate(q_start, phi - h * k3);
        phi -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        values[i] = phi;
    }
    Ok(Tabulation { grid, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    /// Closed-form Q, Simpson quadrature for φ.
    Closed,
    /// RK4 for both Q and φ.
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub n_grid: usize,
    pub n_quad: usize,
    pub method: SolveMethod,
    pub blowup_bound: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            n_grid: DEFAULT_GRID,
            n_quad: DEFAULT_QUAD_NODES,
            method: SolveMethod::Closed,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
            execution: Execution::default(),
        }
    }
}

/// Q(·) and φ(·) on `[0, T]`: tabulated on a uniform grid, with evaluators
/// for off-grid times.
#[derive(Debug, Clone)]
pub struct ValueFunctions {
    pub params: MarketParams,
    pub coeffs: RiccatiCoeffs,
    pub grid: Vec<f64>,
    pub q_tab: Vec<f64>,
    pub phi_tab: Vec<f64>,
    closed: Option<ClosedFormQ>,
}

impl ValueFunctions {
    pub fn solve(params: &MarketParams) -> Result<Self, RiccatiError> {
        Self::solve_with(params, &SolveOptions::default())
    }

    pub fn solve_with(params: &MarketParams, opts: &SolveOptions) -> Result<Self, RiccatiError> {
        let params = params.validate()?;
        if opts.n_grid < 2 {
            return Err(RiccatiError::TooFewSteps(opts.n_grid));
        }
        match opts.method {
            SolveMethod::Closed => {
                let coeffs = coefficients(&params)?;
                let closed = ClosedFormQ::new(&coeffs, &params)?;
                let grid = uniform_grid(params.horizon, opts.n_grid);
                let q_tab: Vec<f64> = grid.iter().map(|&t| closed.eval(t)).collect();
                let q = |t: f64| closed.eval(t);
                let phi_tab = exec::map_indices(opts.execution, grid.len(), |i| {
                    phi_closed_form(&params, &coeffs, &q, grid[i], opts.n_quad)
                });
                Ok(Self {
                    params,
                    coeffs,
                    grid,
                    q_tab,
                    phi_tab,
                    closed: Some(closed),
                })
            }
            SolveMethod::Numeric => {
                let coeffs = RiccatiCoeffs::compute(&params);
                let fine = q_numeric_with(&params, 2 * opts.n_grid, opts.blowup_bound)?;
                let phi = phi_numeric(&params, &fine.values, opts.n_grid)?;
                let q = fine.subsample(2);
                Ok(Self {
                    params,
                    coeffs,
                    grid: phi.grid,
                    q_tab: q.values,
                    phi_tab: phi.values,
                    closed: None,
                })
            }
        }
    }

    /// Builds value functions from externally supplied tabulations (used to
    /// feed corrupted inputs to the verification checks).
    pub fn from_tables(
        params: MarketParams,
        grid: Vec<f64>,
        q_tab: Vec<f64>,
        phi_tab: Vec<f64>,
    ) -> Self {
        assert_eq!(grid.len(), q_tab.len());
        assert_eq!(grid.len(), phi_tab.len());
        Self {
            coeffs: RiccatiCoeffs::compute(&params),
            params,
            grid,
            q_tab,
            phi_tab,
            closed: None,
        }
    }

    pub fn is_closed_form(&self) -> bool {
        self.closed.is_some()
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    #[inline]
    pub fn q(&self, t: f64) -> f64 {
        match &self.closed {
            Some(_) if t >= self.horizon() => 0.0,
            Some(c) => c.eval(t),
            None => interpolate(&self.grid, &self.q_tab, t),
        }
    }

    #[inline]
    pub fn phi(&self, t: f64) -> f64 {
        interpolate(&self.grid, &self.phi_tab, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper(gamma: f64, rho: f64) -> MarketParams {
        MarketParams::reference().with_gamma(gamma).with_rho(rho)
    }

    #[test]
    fn uncorrelated_coefficients() {
        // ρ = 0: K₀ = γ(σ²+σ̄²)/(γ−1), K₁ = c/(γ−1), H = −c²/((γ−1)(σ²+σ̄²))
        let c = coefficients(&paper(0.5, 0.0)).unwrap();
        assert!((c.k0 - (-0.34)).abs() < 1e-14);
        assert!((c.k1 - (-2.0)).abs() < 1e-14);
        assert!((c.h_coef - 1.0 / 0.17).abs() < 1e-12);
        assert!((c.h_coef - 5.882_352_94).abs() < 1e-8);
        assert!((c.delta - 8.0).abs() < 1e-12);
    }

    #[test]
    fn delta_is_definitional() {
        for (g, r) in [(0.5, 0.2), (0.3, -0.3), (0.9, 0.7), (2.0, 0.1)] {
            let c = RiccatiCoeffs::compute(&paper(g, r));
            assert_eq!(c.delta, 4.0 * (c.k1 * c.k1 + c.h_coef * c.k0));
        }
    }

    #[test]
    fn delta_nonpositive_when_unsolvable() {
        assert!(matches!(
            coefficients(&paper(1.5, 0.0)),
            Err(RiccatiError::DeltaNonpositive(_))
        ));
    }

    #[test]
    fn terminal_condition_is_exact() {
        let p = paper(0.5, 0.2);
        let c = coefficients(&p).unwrap();
        assert_eq!(q_closed_form(&c, &p, 1.0).unwrap(), 0.0);
        let vf = ValueFunctions::solve(&p).unwrap();
        assert_eq!(vf.q(1.0), 0.0);
        assert_eq!(vf.phi(1.0), 0.0);
        assert_eq!(*vf.q_tab.last().unwrap(), 0.0);
        assert_eq!(*vf.phi_tab.last().unwrap(), 0.0);
        let num = q_numeric(&p, 100).unwrap();
        assert_eq!(*num.values.last().unwrap(), 0.0);
    }

    #[test]
    fn ell_form_agrees_with_stable_form() {
        for (g, r) in [(0.5, 0.0), (0.3, 0.5), (0.7, -0.3), (0.9, 0.2)] {
            let p = paper(g, r);
            let c = coefficients(&p).unwrap();
            let a1 = c.alpha1.unwrap();
            let a2 = c.alpha2.unwrap();
            assert!((a1 + c.ell.unwrap() * a2).abs() < 1e-12 * a1.abs().max(1.0));
            for i in 0..=20 {
                let t = i as f64 / 20.0;
                let stable = q_closed_form(&c, &p, t).unwrap();
                let ell = q_ell_form(&c, &p, t).unwrap();
                assert!(
                    (stable - ell).abs() < 1e-10 * (1.0 + stable.abs()),
                    "{g} {r} {t}"
                );
            }
        }
    }

    #[test]
    fn closed_form_matches_rk4_at_fine_step() {
        let p = paper(0.5, 0.2);
        let c = coefficients(&p).unwrap();
        let tab = q_numeric(&p, 10_000).unwrap();
        let q0 = q_closed_form(&c, &p, 0.0).unwrap();
        assert!((tab.values[0] - q0).abs() < 1e-8);
    }

    #[test]
    fn near_zero_mean_reversion_gives_near_zero_q() {
        let p = MarketParams {
            c: 1e-8,
            ..paper(0.5, 0.2)
        };
        let c = coefficients(&p).unwrap();
        let tab = q_numeric(&p, 1000).unwrap();
        for (t, v) in tab.grid.iter().zip(&tab.values) {
            let q = q_closed_form(&c, &p, *t).unwrap();
            assert!(q.abs() < 1e-6);
            assert!(v.abs() < 1e-6);
        }
    }

    /// γ chosen so that γ(σ²+σ̄²)² − 2γ²ρσσ̄(σ²+σ̄²) + 4γρσσ̄(σ²+σ̄²+ρσσ̄) = 0.
    fn zero_k0_params() -> MarketParams {
        let p = paper(1.0, 0.2);
        let v = p.total_var();
        let gamma = v * v / (2.0 * p.cross() * p.var_sum());
        p.with_gamma(gamma)
    }

    #[test]
    fn linear_riccati_when_k0_vanishes() {
        let p = zero_k0_params();
        let c = RiccatiCoeffs::compute(&p);
        assert!(c.k0.abs() < 1e-14, "k0 = {}", c.k0);
        let tab = q_numeric(&p, 1000).unwrap();
        for (t, v) in tab.grid.iter().zip(&tab.values) {
            let exact = c.h_coef / (2.0 * c.k1) * ((2.0 * c.k1 * (p.horizon - t)).exp() - 1.0);
            assert!((v - exact).abs() < 1e-9, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn blowup_detected_when_unsolvable() {
        // ρ = 0, γ = 3: Δ < 0 and Q escapes in finite time over a long horizon
        let p = MarketParams {
            horizon: 20.0,
            ..paper(3.0, 0.0)
        };
        assert!(RiccatiCoeffs::compute(&p).delta < 0.0);
        assert!(matches!(
            q_numeric(&p, 20_000),
            Err(RiccatiError::BlowupDetected { .. })
        ));
        assert!(matches!(
            q_numeric(&p, 1),
            Err(RiccatiError::TooFewSteps(1))
        ));
    }

    #[test]
    fn f1_f2_at_zero_q() {
        let p = paper(0.5, 0.2);
        let c = RiccatiCoeffs::compute(&p);
        let (f1, f2) = f1_f2(&c, &p, 0.0);
        assert_eq!(f1, c.k1);
        let expected = p.c * (0.5 * p.total_var() + p.m - p.r) / p.denominator();
        assert!((f2 - expected).abs() < 1e-15);
        // direct substitution at Q = 1: D = −0.23, B = 0.7
        let (f1, f2) = f1_f2(&c, &p, 1.0);
        assert!((f1 - (-c.k0 + c.k1)).abs() < 1e-15);
        assert!((f2 - 0.7 / -0.23 * (1.0 - 0.5 * 0.34)).abs() < 1e-14);
    }

    #[test]
    fn phi_vanishes_with_zero_forcing() {
        // B = 0  ⇔  m − r = −½(σ²+σ̄²+2ρσσ̄)
        let base = paper(0.5, 0.2);
        let p = MarketParams {
            m: base.r - 0.5 * base.total_var(),
            ..base
        };
        let vf = ValueFunctions::solve(&p).unwrap();
        assert!(vf.phi_tab.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn phi_constant_coefficient_oracle() {
        // f₁ ≡ k, f₂ ≡ 1 ⇒ φ(t) = (e^{k(T−t)} − 1)/k. Reached with K₀ = 0
        // (f₁ = K₁) is awkward, so exercise the quadrature directly through a
        // constant-Q evaluator and adjust f₂ by choosing Q.
        let p = paper(0.5, 0.2);
        let c = RiccatiCoeffs::compute(&p);
        let q_const = 0.3;
        let (k, f2) = f1_f2(&c, &p, q_const);
        let q = |_t: f64| q_const;
        for t in [0.0, 0.25, 0.9] {
            let got = phi_closed_form(&p, &c, &q, t, 2001);
            let exact = f2 * ((k * (1.0 - t)).exp() - 1.0) / k;
            assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
        }
        let fine = vec![q_const; 2 * 1000 + 1];
        let tab = phi_numeric(&p, &fine, 1000).unwrap();
        for (t, got) in tab.grid.iter().zip(&tab.values) {
            let exact = f2 * ((k * (1.0 - t)).exp() - 1.0) / k;
            assert!((got - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn phi_is_linear_in_forcing() {
        // φ is linear in f₂; f₂ ∝ B, so scaling B by λ scales φ by λ.
        let base = paper(0.5, 0.2);
        let vf = ValueFunctions::solve(&base).unwrap();
        let b0 = base.excess_drift();
        for lambda in [-1.0, 2.0, 10.0] {
            let p = MarketParams {
                m: base.m + (lambda - 1.0) * b0,
                ..base
            };
            let scaled = ValueFunctions::solve(&p).unwrap();
            for (a, b) in vf.phi_tab.iter().zip(&scaled.phi_tab) {
                assert!((lambda * a - b).abs() < 1e-11 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn evaluators_match_tables_on_grid() {
        let vf = ValueFunctions::solve(&paper(0.5, 0.2)).unwrap();
        for (i, &t) in vf.grid.iter().enumerate() {
            assert!((vf.q(t) - vf.q_tab[i]).abs() <= 1e-12);
            assert!((vf.phi(t) - vf.phi_tab[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn numeric_and_closed_solutions_agree() {
        let p = paper(0.5, 0.0);
        let closed = ValueFunctions::solve(&p).unwrap();
        let numeric = ValueFunctions::solve_with(
            &p,
            &SolveOptions {
                method: SolveMethod::Numeric,
                ..Default::default()
            },
        )
        .unwrap();
        for i in 0..closed.grid.len() {
            assert!((closed.q_tab[i] - numeric.q_tab[i]).abs() < 1e-8);
            assert!((closed.phi_tab[i] - numeric.phi_tab[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn pole_reported_for_positive_denominator_branch() {
        // D > 0, K₀ > 0 and Δ > 0 (γ ∈ (6.67, 7.84) for the reference
        // volatilities at ρ = 0.2): the solution escapes about 6 time units
        // before T.
        let p = MarketParams {
            horizon: 50.0,
            ..paper(7.2, 0.2)
        };
        let c = RiccatiCoeffs::compute(&p);
        assert!(c.delta > 0.0);
        match ClosedFormQ::new(&c, &p) {
            Err(RiccatiError::PoleOnInterval { t }) => assert!((0.0..=50.0).contains(&t)),
            other => panic!("expected pole, got {other:?}"),
        }
    }
}
