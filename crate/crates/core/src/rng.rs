//! Deterministic random number generation.
//!
//! Everything downstream (corpus synthesis, weight init, training batches,
//! samplers) must reproduce bit-identically from a 64-bit seed, so the
//! toolkit carries its own splitmix64 generator instead of relying on a
//! platform RNG.

/// splitmix64: fast, full-period, and trivially seedable.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Derive an independent stream for a labelled sub-task.
    ///
    /// Streams for different labels never share state, which keeps e.g.
    /// batch selection independent of noise draws.
    pub fn stream(seed: u64, label: u64) -> Self {
        Rng::new(mix(seed ^ mix(label)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller. One fresh pair per two calls.
    pub fn normal(&mut self) -> f64 {
        // Reject u1 == 0 so ln stays finite.
        let mut u1 = self.uniform();
        while u1 <= 0.0 {
            u1 = self.uniform();
        }
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        r * libm::cos(2.0 * core::f64::consts::PI * u2)
    }
}

/// splitmix64 output mixer; also serves as the lattice hash for value noise.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Hash an (x, y, seed) lattice coordinate to a uniform value in [0, 1).
pub fn lattice_hash(x: i64, y: i64, seed: u64) -> f64 {
    let h = mix(seed ^ mix(x as u64).wrapping_add(mix((y as u64).wrapping_mul(0x9E3779B97F4A7C15))));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
