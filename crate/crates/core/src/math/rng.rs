use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

/// Seeded, platform-independent random stream.
///
/// The generator is ChaCha8 keyed with `ChaCha8Rng::seed_from_u64(seed)`,
/// positioned on the given 64-bit stream id (stream 0 by default).
/// Uniforms take the top 53 bits of `next_u64` scaled by 2^-53, giving `[0, 1)`.
/// Normals use Box–Muller on consecutive uniform pairs `(a, b)`:
/// `r = sqrt(-2 ln(1 - a))`, `θ = 2π b`, emitting `r cos θ` and then `r sin θ`.
#[derive(Debug, Clone)]
pub struct RngState {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(x) = self.spare.take() {
            return x;
        }
        let a = self.uniform();
        let b = self.uniform();
        let r = (-2.0 * (1.0 - a).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * b;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// `d` independent standard normal draws.
    pub fn sample_standard_gaussian(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.standard_normal()).collect()
    }
}
