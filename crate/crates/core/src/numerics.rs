//! Small fixed-step integrators shared by the Riccati and φ solvers.

/// Uniform grid `0 = t₀ < … < t_n = horizon` with `n + 1` nodes.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    let h = horizon / n as f64;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    // pin the terminal node so evaluations at T hit the terminal condition exactly
    grid[n] = horizon;
    grid
}

/// One classical RK4 step of `y' = f(t, y)` from `t` with signed step `h`.
#[inline]
pub fn rk4_step<F>(f: &F, t: f64, y: f64, h: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(t + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Composite Simpson rule over `[a, b]` using `nodes` points (rounded up to odd).
pub fn simpson<F>(f: F, a: f64, b: f64, nodes: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let intervals = even_intervals(nodes);
    let h = (b - a) / intervals as f64;
    if h == 0.0 {
        return 0.0;
    }
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Composite Simpson over equally spaced samples (odd length ≥ 3).
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    debug_assert!(values.len() % 2 == 1);
    let n = values.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let mut acc = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    acc * h / 3.0
}

pub(crate) fn even_intervals(nodes: usize) -> usize {
    let n = nodes.max(3) - 1;
    n + n % 2
}
