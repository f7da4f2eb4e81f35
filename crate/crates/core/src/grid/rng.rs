use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::Grid;

/// Seeded, replayable random stream.
///
/// Backed by ChaCha20, whose (seed, stream, word position) triple fully
/// determines every future draw; that triple is what checkpoints persist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    inner: ChaCha20Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    /// Rebuilds a state saved with [`RngState::position`].
    pub fn restore(seed: u64, stream: u64, word_pos: u128) -> Self {
        let mut state = Self::with_stream(seed, stream);
        state.inner.set_word_pos(word_pos);
        state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.inner.get_stream()
    }

    /// Current offset into the stream, in 32-bit words.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Grid of i.i.d. N(0, 1) draws, filled in row-major order.
pub fn draw_standard_normal(rng: &mut RngState, height: usize, width: usize) -> Grid {
    let data = (0..height * width).map(|_| rng.standard_normal()).collect();
    Grid::from_raw(height, width, data)
}
