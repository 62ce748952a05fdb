//! SplitMix64 generator and the few variates built on it.
//!
//! The stream is fixed bit-for-bit: state advances by the golden-ratio
//! increment, output is the standard SplitMix64 finalizer, and unit
//! variates take the top 53 bits. Anything seeded here reproduces on any
//! platform and in any language that implements the same steps.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform variate in `[0, 1)`: `(x >> 11) · 2⁻⁵³`.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform variate in `(0, 1]`, safe to take the logarithm of.
    fn next_open_unit(&mut self) -> f64 {
        1.0 - self.next_unit()
    }

    /// Standard normal variate (Box–Muller, cosine branch; consumes two draws).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_open_unit();
        let u2 = self.next_unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `Gamma(shape, 1)` variate.
    ///
    /// Marsaglia–Tsang squeeze for `shape ≥ 1`; for `shape < 1` draws
    /// `Gamma(shape + 1)` and boosts by `U^(1/shape)`.
    pub fn next_gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            let g = self.next_gamma(shape + 1.0);
            return g * self.next_open_unit().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.next_normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.next_open_unit();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Uniform index in `0..n` as `floor(u · n)`.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_unit() * n as f64) as usize).min(n - 1)
    }
}
