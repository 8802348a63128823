//! Counter-based deterministic random numbers.
//!
//! Pattern draws key a splitmix64 finalizer chain on (seed, ky, kz), so each
//! cell's uniform is a pure function of its coordinates and candidate draws
//! parallelize with bit-identical results at any thread count.

/// splitmix64 finalizer step.
#[inline]
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derive a child seed from a master seed and two stream indices
/// (e.g. acquisition number and candidate number).
#[inline]
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(master) ^ stream) ^ index)
}

/// Uniform in [0, 1) for one grid cell under one seed.
#[inline]
pub fn cell_uniform(seed: u64, iy: usize, iz: usize) -> f64 {
    let h = mix(mix(mix(seed) ^ iy as u64) ^ iz as u64);
    // take the top 53 bits for a dyadic uniform
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential counter RNG for noise streams and test helpers.
#[derive(Debug, Clone)]
pub struct Counter {
    state: u64,
    ctr: u64,
}

impl Counter {
    pub fn new(seed: u64) -> Self {
        Counter { state: mix(seed), ctr: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(1);
        mix(self.state ^ self.ctr)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (two uniforms per pair of normals).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // avoid log(0)
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        (r * th.cos(), r * th.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_uniform_is_deterministic_and_spread() {
        assert_eq!(cell_uniform(7, 3, 5), cell_uniform(7, 3, 5));
        assert_ne!(cell_uniform(7, 3, 5), cell_uniform(8, 3, 5));
        assert_ne!(cell_uniform(7, 3, 5), cell_uniform(7, 5, 3));
        let mut s = 0.0;
        let n = 100_000;
        for i in 0..n {
            let u = cell_uniform(42, i % 317, i / 317);
            assert!((0.0..1.0).contains(&u));
            s += u;
        }
        // mean of 1e5 uniforms within 5 sigma of 0.5
        assert!((s / n as f64 - 0.5).abs() < 5.0 * (1.0 / 12f64).sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn normal_moments() {
        let mut rng = Counter::new(99);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n / 2 {
            let (a, b) = rng.normal_pair();
            s += a + b;
            s2 += a * a + b * b;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn derive_seed_separates_streams() {
        let a = derive_seed(1, 0, 0);
        let b = derive_seed(1, 0, 1);
        let c = derive_seed(1, 1, 0);
        assert!(a != b && b != c && a != c);
    }
}
