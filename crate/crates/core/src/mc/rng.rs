//! Counter-based per-path random streams.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path_index)`, so a
//! path's draws do not depend on which thread simulates it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct PathStream {
    rng: ChaCha8Rng,
}

impl PathStream {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self { rng }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Brownian increments over `dt` with correlation `rho`:
/// dW₁ = √dt·Z₁, dW₂ = √dt·(ρZ₁ + √(1−ρ²)Z₂).
#[inline]
pub fn correlated_increments(rho: f64, dt: f64, stream: &mut PathStream) -> (f64, f64) {
    let z1 = stream.normal();
    let z2 = stream.normal();
    let sqrt_dt = dt.sqrt();
    let orth = (1.0 - rho * rho).max(0.0).sqrt();
    (sqrt_dt * z1, sqrt_dt * (rho * z1 + orth * z2))
}
