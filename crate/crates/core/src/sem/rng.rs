//! Counter-based noise streams.
//!
//! Each (seed, stream, row) triple keys an independent SplitMix64 sequence,
//! so a row's draws never depend on which thread produced the neighbouring
//! rows.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(GOLDEN)))
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    state: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64, row: u64) -> Self {
        let key = mix64(seed)
            ^ mix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(1))
            ^ mix64(row.wrapping_mul(0xABC9_8388_FB8F_AC03).wrapping_add(2));
        NoiseStream { state: mix64(key) }
    }
}

impl RngCore for NoiseStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
