//! Market parameters, the log-price/state transform, the running cost and
//! the solvability predicates of the risk-sensitive investment problem.
//!
//! Notation used across the crate:
//!
//! ```text
//! s2 = σ² + σ̄²                 (sum of squared volatilities)
//! v  = σ² + σ̄² + 2ρσσ̄          (variance rate of the log-price)
//! D  = (γ−1)(σ² + σ̄²) − 2ρσσ̄   (= γ·s2 − v, the common denominator)
//! B  = ½v + m − r               (excess drift of the stock over the bond)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModelError {
    #[error("volatilities must be nonzero (sigma = {sigma}, sigma_bar = {sigma_bar})")]
    ZeroVolatility { sigma: f64, sigma_bar: f64 },
    #[error("correlation rho = {0} outside [-1, 1]")]
    RhoOutOfRange(f64),
    #[error("risk-sensitive exponent gamma must be nonzero")]
    GammaZero,
    #[error("denominator (gamma-1)(sigma^2+sigma_bar^2) - 2 rho sigma sigma_bar vanishes")]
    DegenerateDenominator,
    #[error("horizon T = {0} must be positive")]
    NonpositiveHorizon(f64),
    #[error("mean-reversion speed c = {0} must be positive")]
    NonpositiveMeanReversion(f64),
    #[error("initial wealth x0 = {0} must be positive")]
    NonpositiveWealth(f64),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
}

fn default_lbar0() -> f64 {
    0.0
}

fn default_x0() -> f64 {
    1.0
}

/// All constants of the bond/stock market and the investor's objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Riskless interest rate.
    pub r: f64,
    /// Mean-reversion speed of the log-price around its trend.
    pub c: f64,
    /// Slope of the deterministic log-price trend.
    pub m: f64,
    /// Intercept of the log-price trend.
    #[serde(default = "default_lbar0")]
    pub lbar0: f64,
    pub sigma: f64,
    pub sigma_bar: f64,
    /// Correlation between the two driving Brownian motions.
    pub rho: f64,
    /// Risk-sensitive (HARA) exponent.
    pub gamma: f64,
    pub horizon: f64,
    /// Initial wealth.
    #[serde(default = "default_x0")]
    pub x0: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl MarketParams {
    /// The numerical example market: T = 1, c = 1, m = 0.55, r = 0.05,
    /// σ = 0.5, σ̄ = 0.3, with ρ = 0.2, γ = 0.5, x₀ = 1 and L̄₀ = 0.
    pub fn reference() -> Self {
        Self {
            r: 0.05,
            c: 1.0,
            m: 0.55,
            lbar0: 0.0,
            sigma: 0.5,
            sigma_bar: 0.3,
            rho: 0.2,
            gamma: 0.5,
            horizon: 1.0,
            x0: 1.0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    /// σ² + σ̄²
    #[inline]
    pub fn var_sum(&self) -> f64 {
        self.sigma * self.sigma + self.sigma_bar * self.sigma_bar
    }

    /// ρσσ̄
    #[inline]
    pub fn cross(&self) -> f64 {
        self.rho * self.sigma * self.sigma_bar
    }

    /// σ² + σ̄² + 2ρσσ̄, the quadratic variation rate of the log-price.
    #[inline]
    pub fn total_var(&self) -> f64 {
        self.var_sum() + 2.0 * self.cross()
    }

    /// (γ−1)(σ²+σ̄²) − 2ρσσ̄
    #[inline]
    pub fn denominator(&self) -> f64 {
        (self.gamma - 1.0) * self.var_sum() - 2.0 * self.cross()
    }

    /// ½(σ²+σ̄²+2ρσσ̄) + m − r
    #[inline]
    pub fn excess_drift(&self) -> f64 {
        0.5 * self.total_var() + self.m - self.r
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        let fields = [
            ("r", self.r),
            ("c", self.c),
            ("m", self.m),
            ("lbar0", self.lbar0),
            ("sigma", self.sigma),
            ("sigma_bar", self.sigma_bar),
            ("rho", self.rho),
            ("gamma", self.gamma),
            ("horizon", self.horizon),
            ("x0", self.x0),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::NonFinite(name));
        }
        if self.sigma == 0.0 || self.sigma_bar == 0.0 {
            return Err(ModelError::ZeroVolatility {
                sigma: self.sigma,
                sigma_bar: self.sigma_bar,
            });
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(ModelError::RhoOutOfRange(self.rho));
        }
        if self.gamma == 0.0 {
            return Err(ModelError::GammaZero);
        }
        if self.c <= 0.0 {
            return Err(ModelError::NonpositiveMeanReversion(self.c));
        }
        if self.horizon <= 0.0 {
            return Err(ModelError::NonpositiveHorizon(self.horizon));
        }
        if self.x0 <= 0.0 {
            return Err(ModelError::NonpositiveWealth(self.x0));
        }
        if self.denominator() == 0.0 {
            return Err(ModelError::DegenerateDenominator);
        }
        Ok(self)
    }

    /// Deterministic log-price trend L̄(t) = m·t + L̄₀.
    #[inline]
    pub fn trend(&self, t: f64) -> f64 {
        self.m * t + self.lbar0
    }

    /// x = L − L̄(t) + m/c
    #[inline]
    pub fn state_from_logprice(&self, t: f64, l: f64) -> f64 {
        l - self.trend(t) + self.m / self.c
    }

    #[inline]
    pub fn logprice_from_state(&self, t: f64, x: f64) -> f64 {
        x + self.trend(t) - self.m / self.c
    }

    /// Initial reduced state x(0) = m/c (the log-price starts on its trend).
    #[inline]
    pub fn initial_state(&self) -> f64 {
        self.m / self.c
    }

    /// Running cost h(x, u) in reduced coordinates, using c(L̄ − L) = m − c·x.
    #[inline]
    pub fn running_cost(&self, x: f64, u: f64) -> f64 {
        0.5 * u * u * self.denominator()
            + self.r * (1.0 - u)
            + u * (self.m - self.c * x + 0.5 * self.total_var())
    }

    pub fn solvability_bound(&self) -> Solvability {
        let s2 = self.var_sum();
        let cross = self.cross();
        let g = self.gamma;
        let denom = s2 * s2 + 4.0 * cross * (s2 + cross);
        let delta_positive = if denom != 0.0 {
            (g - 1.0) / (g * g) < 2.0 * cross * s2 / denom
        } else {
            // v = 0 (ρ = −1, σ = σ̄): compare the cleared form (γ−1)v² < 2γ²ρσσ̄ s2
            0.0 < 2.0 * g * g * cross * s2
        };
        let gamma_upper =
            (self.rho > -1.0 && self.rho < 1.0 && self.rho != 0.0).then(|| 2.0 * cross / s2 + 1.0);
        Solvability {
            delta_positive,
            gamma_upper,
        }
    }
}

/// Outcome of the solvability test: whether Δ > 0 holds for the given
/// parameters, plus the upper bound on γ available when 0 < |ρ| < 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solvability {
    pub delta_positive: bool,
    pub gamma_upper: Option<f64>,
}

/// A point in time with its reduced state and, optionally, the raw log-price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub t: f64,
    pub x: f64,
    pub l: Option<f64>,
}

impl StatePoint {
    pub fn from_logprice(params: &MarketParams, t: f64, l: f64) -> Self {
        Self {
            t,
            x: params.state_from_logprice(t, l),
            l: Some(l),
        }
    }

    pub fn is_consistent(&self, params: &MarketParams) -> bool {
        self.l
            .is_none_or(|l| self.x == params.state_from_logprice(self.t, l))
    }
}
