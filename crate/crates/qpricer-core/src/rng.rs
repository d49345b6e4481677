//! Counter-based random numbers with per-path substreams.
//!
//! Every path of an ensemble owns an independent stream keyed by
//! `(seed, stream index)`. Draws advance a counter through the golden-ratio
//! increment and hash it with the splitmix64 finalizer, so a stream's k-th
//! draw is a pure function of `(seed, stream, k)`. Regenerating any path is
//! bit-identical no matter how work is partitioned across threads.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One independent stream of uniforms / standard normals.
#[derive(Debug, Clone)]
pub struct SubstreamRng {
    state: u64,
    spare: Option<f64>,
}

impl SubstreamRng {
    /// Stream `stream` of the generator seeded by `seed`.
    pub fn new(seed: u64, stream: u64) -> Self {
        // Decorrelate the key from both inputs before use.
        let state = mix64(seed ^ mix64(stream.wrapping_mul(GOLDEN).wrapping_add(0x1234_5678_9abc_def1)));
        Self { state, spare: None }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform on `(0, 1]` with 53-bit resolution (never zero, so it is
    /// safe under a logarithm).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller; pairs are cached within the stream.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let mag = libm::sqrt(-2.0 * libm::log(u1));
        let ang = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(mag * libm::sin(ang));
        mag * libm::cos(ang)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: alloc::vec::Vec<u64> = {
            let mut r = SubstreamRng::new(7, 3);
            (0..64).map(|_| r.next_u64()).collect()
        };
        let b: alloc::vec::Vec<u64> = {
            let mut r = SubstreamRng::new(7, 3);
            (0..64).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let c: alloc::vec::Vec<u64> = {
            let mut r = SubstreamRng::new(7, 4);
            (0..64).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, c);
    }

    #[test]
    fn normals_have_unit_moments() {
        let mut r = SubstreamRng::new(42, 0);
        let n = 200_000;
        let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = r.normal();
            s1 += z;
            s2 += z * z;
            s3 += z * z * z;
            s4 += z * z * z * z;
        }
        let inv = 1.0 / n as f64;
        // 5 standard errors of each moment estimator.
        assert!((s1 * inv).abs() < 5.0 / libm::sqrt(n as f64));
        assert!((s2 * inv - 1.0).abs() < 5.0 * libm::sqrt(2.0 / n as f64));
        assert!((s3 * inv).abs() < 5.0 * libm::sqrt(15.0 / n as f64));
        assert!((s4 * inv - 3.0).abs() < 5.0 * libm::sqrt(96.0 / n as f64));
    }

    #[test]
    fn uniform_never_zero() {
        let mut r = SubstreamRng::new(0, 0);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!(u > 0.0 && u <= 1.0);
        }
    }
}
