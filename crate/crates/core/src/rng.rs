//! Counter-based random streams.
//!
//! Every draw in the toolkit comes from a ChaCha20 keystream whose key is
//! derived from `(seed, domain)` and whose 64-bit stream id packs
//! `(iteration, row)`. The position within the stream is the draw counter.
//! A stream therefore depends only on its key, never on which worker asks for
//! it or in what order, so parallel schedules reproduce sequential ones bit
//! for bit.
//!
//! Normal variates use the Box–Muller transform (both outputs are used, in
//! order cosine then sine) with `libm` transcendental functions so that the
//! draws are identical across platforms.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::linalg::{DenseMatrix, DenseVector};

/// Separates independent uses of the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    PrivacyNoise = 1,
    Initialization = 2,
    Split = 3,
    Synthetic = 4,
    Test = 0xFFFF,
}

/// Key of one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub domain: Domain,
    pub iteration: u32,
    pub row: u32,
}

impl RngStream {
    pub fn new(seed: u64, domain: Domain, iteration: u32, row: u32) -> Self {
        Self {
            seed,
            domain,
            iteration,
            row,
        }
    }

    /// Starts drawing from the beginning of the stream.
    pub fn draws(&self) -> StreamRng {
        let mut state = self.seed ^ (self.domain as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(((self.iteration as u64) << 32) | self.row as u64);
        StreamRng { inner, spare: None }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sequential reader over one stream.
pub struct StreamRng {
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

impl StreamRng {
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n` (multiply-shift; bias below 2^-40 for any
    /// `n` used here).
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal variate.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * libm::log(u1)).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }
}

/// Symmetric `d x d` matrix whose upper triangle (diagonal included) holds
/// i.i.d. `N(0, scale^2)` entries, filled row by row.
pub fn sample_symmetric_gaussian(d: usize, scale: f64, stream: RngStream) -> DenseMatrix {
    let mut g = DenseMatrix::zeros(d, d);
    if scale == 0.0 {
        return g;
    }
    let mut rng = stream.draws();
    for a in 0..d {
        for b in a..d {
            g[(a, b)] = scale * rng.next_normal();
        }
    }
    g.mirror_upper();
    g
}

/// Vector of i.i.d. `N(0, scale^2)` entries.
pub fn sample_gaussian_vector(d: usize, scale: f64, stream: RngStream) -> DenseVector {
    if scale == 0.0 {
        return DenseVector::zeros(d);
    }
    let mut rng = stream.draws();
    (0..d).map(|_| scale * rng.next_normal()).collect::<Vec<_>>().into()
}
