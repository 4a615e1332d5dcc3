//! Deterministic stream derivation: every random draw in a fit traces back
//! to one master seed through a path of integer labels, so chains and
//! replicates can run in any order (or in parallel) and still reproduce
//! bit-identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives independent ChaCha8 streams from a master seed and a label path.
#[derive(Debug, Clone, Copy)]
pub struct RngTree {
    master: u64,
}

impl RngTree {
    pub fn new(master: u64) -> Self {
        RngTree { master }
    }

    /// A stream keyed by `path`. Distinct paths give streams with
    /// independent 256-bit ChaCha keys.
    pub fn stream(&self, path: &[u64]) -> ChaCha8Rng {
        let mut state = self.master;
        splitmix64(&mut state);
        for &label in path {
            state ^= label.wrapping_mul(0xD6E8_FEB8_6659_FD93);
            splitmix64(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
