//! Counter-based standard normal noise.
//!
//! Every `(chain, counter)` pair addresses a fixed block of the ChaCha8
//! keystream: the seed picks the key, the chain picks the stream and the
//! counter picks the word offset. Draws therefore never depend on how chains
//! are scheduled across workers. Counter 0 is the initial state; step `t`
//! (0-based) uses counter `t + 1`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit keystream words consumed by one Box–Muller pair.
const WORDS_PER_PAIR: u128 = 4;

pub struct NoiseStream {
    rng: ChaCha8Rng,
    words_per_counter: u128,
    chain: u64,
}

impl NoiseStream {
    /// Stream for `chain`, producing `n_modes` normals per counter.
    pub fn new(seed: u64, chain: u64, n_modes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain);
        Self {
            rng,
            words_per_counter: WORDS_PER_PAIR * n_modes.div_ceil(2) as u128,
            chain,
        }
    }

    pub fn chain(&self) -> u64 {
        self.chain
    }

    /// Fills `out` with the standard normals addressed by `counter`.
    pub fn fill(&mut self, counter: u64, out: &mut [f64]) {
        self.rng.set_word_pos(counter as u128 * self.words_per_counter);
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.pair().0;
        }
    }

    fn pair(&mut self) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }
}
