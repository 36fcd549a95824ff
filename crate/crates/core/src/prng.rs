//! SplitMix64 streams.
//!
//! Every strategy draws from these streams, so the whole simulator is
//! bit-reproducible across runs and across implementations. Index draws
//! always consume exactly one generator step, whatever the bound: the
//! synchronized-stream strategy relies on all ranks advancing in lockstep.

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;

/// Seed offset for synthetic data streams, so generated data never shares
/// a stream with the resampling indices.
const DATA_STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// State of a SplitMix64 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// One SplitMix64 step as a pure function: output and successor state.
    #[inline]
    pub fn step(self) -> (u64, RngState) {
        let next = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = next;
        z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
        (z ^ (z >> 31), RngState { state: next })
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let (out, next) = self.step();
        *self = next;
        out
    }

    /// Uniform index in `[0, bound)` by plain modulo reduction.
    ///
    /// Consumes exactly one step. Bias is at most `bound / 2^64` per index.
    #[inline]
    pub fn bounded_index(&mut self, bound: u64) -> Result<u64> {
        if bound == 0 {
            return Err(Error::Domain("index bound must be positive".into()));
        }
        Ok(self.next_u64() % bound)
    }

    /// Unchecked variant of [`RngState::bounded_index`] for hot loops where
    /// the bound is already validated.
    #[inline]
    pub(crate) fn index_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Uniform double in `(0, 1)`; 53 random bits, zero remapped to 2^-53.
    #[inline]
    pub fn next_open_unit(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let bits = self.next_u64() >> 11;
        if bits == 0 {
            SCALE
        } else {
            bits as f64 * SCALE
        }
    }
}

pub fn rng_new(seed: u64) -> RngState {
    RngState::new(seed)
}

pub fn rng_next_u64(state: RngState) -> (u64, RngState) {
    state.step()
}

pub fn rng_bounded_index(state: RngState, bound: u64) -> Result<(u64, RngState)> {
    let mut s = state;
    let idx = s.bounded_index(bound)?;
    Ok((idx, s))
}

/// Independent per-rank stream, used by strategies where each rank
/// resamples on its own.
///
/// Note that `rank_substream(seed, 0)` differs from `rng_new(seed)`.
pub fn rank_substream(seed: u64, rank: u64) -> RngState {
    let salted = seed ^ rank.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA);
    let (mixed, _) = RngState::new(salted).step();
    RngState::new(mixed)
}

/// Stream used to synthesize the standard-normal dataset for a seed.
pub fn data_stream(seed: u64) -> RngState {
    let (mixed, _) = RngState::new(seed ^ DATA_STREAM_SALT).step();
    RngState::new(mixed)
}

/// `len` standard-normal values by Box-Muller over pairs of open-unit draws.
pub fn standard_normal(rng: &mut RngState, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len + 1);
    while out.len() < len {
        let u1 = rng.next_open_unit();
        let u2 = rng.next_open_unit();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        out.push(radius * angle.cos());
        out.push(radius * angle.sin());
    }
    out.truncate(len);
    out
}
