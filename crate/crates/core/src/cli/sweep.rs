//! Sensitivity sweeps of the optimal proportion along γ or ρ.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::model::MarketParams;
use crate::riccati::{self, ClosedFormQ, DEFAULT_QUAD_NODES};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "UPPERCASE")]
pub enum Axis {
    Gamma,
    Rho,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::Gamma => "GAMMA",
            Axis::Rho => "RHO",
        }
    }

    pub fn apply(self, params: MarketParams, value: f64) -> MarketParams {
        match self {
            Axis::Gamma => params.with_gamma(value),
            Axis::Rho => params.with_rho(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub fixed: MarketParams,
    pub eval_time: f64,
    /// Log-return k = ln S(t)/S(0) of the evaluation state; the log-price is
    /// L(t) = L̄₀ + k.
    #[serde(default)]
    pub k_offset: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::InvalidSweep(msg));
        if self.values.is_empty() {
            return bad("no sweep values".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sweep values must be strictly increasing".into());
        }
        if !(0.0..=self.fixed.horizon).contains(&self.eval_time) {
            return bad(format!(
                "eval_time {} outside [0, {}]",
                self.eval_time, self.fixed.horizon
            ));
        }
        Ok(())
    }

    /// Reduced state at the evaluation time.
    pub fn state(&self, params: &MarketParams) -> f64 {
        params.state_from_logprice(self.eval_time, params.lbar0 + self.k_offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: Axis,
    pub value: f64,
    pub gamma: f64,
    pub rho: f64,
    pub t: f64,
    pub x: f64,
    pub u: f64,
    #[serde(rename = "Q_t")]
    pub q_t: f64,
    pub phi_t: f64,
}

/// A sweep value at which no closed-form solution exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub axis: Axis,
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedPoint>,
}

impl SweepTable {
    pub fn extend(&mut self, other: SweepTable) {
        self.rows.extend(other.rows);
        self.skipped.extend(other.skipped);
    }

    /// RFC-4180 CSV with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        if self.rows.is_empty() {
            out.write_record([
                "axis", "value", "gamma", "rho", "t", "x", "u", "Q_t", "phi_t",
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

fn evaluate(spec: &SweepSpec, value: f64) -> Result<SweepRow, String> {
    let params = spec.axis.apply(spec.fixed, value);
    let coeffs = riccati::coefficients(&params).map_err(|e| e.to_string())?;
    let q = ClosedFormQ::new(&coeffs, &params).map_err(|e| e.to_string())?;
    let t = spec.eval_time;
    let q_t = if t >= params.horizon { 0.0 } else { q.eval(t) };
    let phi_t = riccati::phi_closed_form(&params, &coeffs, &|s| q.eval(s), t, DEFAULT_QUAD_NODES);
    let x = spec.state(&params);
    let d = params.denominator();
    let s2 = params.var_sum();
    let u = (-params.gamma * s2 * q_t + params.c) / d * x
        - params.gamma * s2 * phi_t / d
        - params.excess_drift() / d;
    Ok(SweepRow {
        axis: spec.axis,
        value,
        gamma: params.gamma,
        rho: params.rho,
        t,
        x,
        u,
        q_t,
        phi_t,
    })
}

/// Solves at every sweep value; rows keep the order of `spec.values`.
pub fn sweep(spec: &SweepSpec, execution: Execution) -> Result<SweepTable, CliError> {
    spec.validate()?;
    let results = exec::map_indices(execution, spec.values.len(), |i| {
        evaluate(spec, spec.values[i])
    });
    let mut table = SweepTable::default();
    for (value, res) in spec.values.iter().zip(results) {
        match res {
            Ok(row) => table.rows.push(row),
            Err(reason) => table.skipped.push(SkippedPoint {
                axis: spec.axis,
                value: *value,
                reason,
            }),
        }
    }
    Ok(table)
}

/// `start, start + step, …` up to and including `stop` (within rounding).
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as i64;
    (0..=n.max(-1)).map(|k| start + k as f64 * step).collect()
}

/// Default γ grid: 0.05, 0.10, … strictly below the solvability bound.
pub fn default_gamma_grid(params: &MarketParams) -> Vec<f64> {
    let upper = params.solvability_bound().gamma_upper.unwrap_or(1.0);
    (1..)
        .map(|k| 0.05 * k as f64)
        .take_while(|g| *g < upper - 1e-9)
        .collect()
}

fn tenths() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

fn rho_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

/// Optimal proportion at t = 0 against γ, one curve per ρ ∈ {0.1, …, 0.9}.
pub fn figure1(base: &MarketParams, execution: Execution) -> Result<SweepTable, CliError> {
    let mut table = SweepTable::default();
    for rho in tenths() {
        let fixed = base.with_rho(rho);
        let spec = SweepSpec {
            axis: Axis::Gamma,
            values: default_gamma_grid(&fixed),
            fixed,
            eval_time: 0.0,
            k_offset: 0.0,
        };
        table.extend(sweep(&spec, execution)?);
    }
    Ok(table)
}

/// Optimal proportion against ρ, one curve per γ ∈ {0.1, …, 0.9}.
pub fn rho_figure(
    base: &MarketParams,
    eval_time: f64,
    k_offset: f64,
    execution: Execution,
) -> Result<SweepTable, CliError> {
    let mut table = SweepTable::default();
    for gamma in tenths() {
        let spec = SweepSpec {
            axis: Axis::Rho,
            values: rho_grid(),
            fixed: base.with_gamma(gamma),
            eval_time,
            k_offset,
        };
        table.extend(sweep(&spec, execution)?);
    }
    Ok(table)
}

/// The four figure tables (fig1 … fig4) in order.
pub fn figures(
    base: &MarketParams,
    execution: Execution,
) -> Result<[(&'static str, SweepTable); 4], CliError> {
    let mid = 0.5 * base.horizon;
    Ok([
        ("fig1.csv", figure1(base, execution)?),
        ("fig2.csv", rho_figure(base, 0.0, 0.0, execution)?),
        ("fig3.csv", rho_figure(base, mid, 0.5, execution)?),
        ("fig4.csv", rho_figure(base, mid, 2.0, execution)?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::feedback;
    use crate::riccati::ValueFunctions;

    fn spec(axis: Axis, values: Vec<f64>) -> SweepSpec {
        SweepSpec {
            axis,
            values,
            fixed: MarketParams::reference(),
            eval_time: 0.0,
            k_offset: 0.0,
        }
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(sweep(&spec(Axis::Gamma, vec![]), Execution::Sequential).is_err());
        assert!(sweep(&spec(Axis::Gamma, vec![0.2, 0.2]), Execution::Sequential).is_err());
        assert!(sweep(&spec(Axis::Gamma, vec![0.3, 0.2]), Execution::Sequential).is_err());
        let mut s = spec(Axis::Rho, vec![0.1]);
        s.eval_time = 1.5;
        assert!(sweep(&s, Execution::Sequential).is_err());
    }

    #[test]
    fn unsolvable_points_are_skipped() {
        let table = sweep(
            &spec(Axis::Gamma, vec![0.5, 1.5, 3.0]),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.skipped.len(), 2);
        assert_eq!(table.skipped[0].value, 1.5);
    }

    #[test]
    fn mid_horizon_state_convention() {
        let mut s = spec(Axis::Rho, vec![0.2]);
        assert!((s.state(&s.fixed) - 0.55).abs() < 1e-15);
        s.eval_time = 0.5;
        s.k_offset = 2.0;
        assert!((s.state(&s.fixed) - 2.275).abs() < 1e-12);
    }

    #[test]
    fn rows_agree_with_tabulated_feedback() {
        let mut s = spec(Axis::Rho, vec![0.1, 0.2, 0.5]);
        s.eval_time = 0.5;
        s.k_offset = 0.5;
        let table = sweep(&s, Execution::Parallel).unwrap();
        for row in &table.rows {
            let vf = ValueFunctions::solve(&s.fixed.with_rho(row.rho)).unwrap();
            assert!((row.q_t - vf.q(0.5)).abs() < 1e-12);
            assert!((row.phi_t - vf.phi(0.5)).abs() < 1e-8);
            assert!((row.u - feedback(&vf, 0.5, row.x)).abs() < 1e-7);
        }
    }

    #[test]
    fn csv_has_header_and_is_reproducible() {
        let s = spec(Axis::Gamma, vec![0.1, 0.5, 0.9]);
        let a = sweep(&s, Execution::Parallel).unwrap().to_csv().unwrap();
        let b = sweep(&s, Execution::Sequential).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(
            text.lines().next(),
            Some("axis,value,gamma,rho,t,x,u,Q_t,phi_t")
        );
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("GAMMA,0.1,"));
        let empty = SweepTable::default().to_csv().unwrap();
        assert_eq!(
            String::from_utf8(empty).unwrap().trim(),
            "axis,value,gamma,rho,t,x,u,Q_t,phi_t"
        );
    }

    #[test]
    fn gamma_grid_stops_below_bound() {
        let grid = default_gamma_grid(&MarketParams::reference());
        assert_eq!(grid.len(), 23);
        assert!(*grid.last().unwrap() < 1.176_470_588);
        assert_eq!(linspace_step(0.1, 0.3, 0.1).len(), 3);
    }
}
