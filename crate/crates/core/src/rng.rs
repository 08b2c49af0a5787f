//! Deterministic pseudo-random numbers for weight initialization and noise
//! images.
//!
//! The generator is xorshift64* (Vigna, 2014): state `s` is advanced by
//! `s ^= s >> 12; s ^= s << 25; s ^= s >> 27` and the output is
//! `s * 0x2545F4914F6CDD1D`. The seed is passed through one SplitMix64 round
//! so that small seeds (0, 1, 2, ...) give unrelated streams and the state is
//! never zero. Floats in `[0, 1)` take the top 24 bits of the output.
//!
//! The scheme is part of the file-format contract: the same seed produces the
//! same tinyvgg weights and the same noise image on every platform.

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        if z == 0 {
            z = 0x9E37_79B9_7F4A_7C15;
        }
        Self { state: z }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut s = self.state;
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        self.state = s;
        s.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    /// Uniform in `[-bound, bound)`.
    pub fn symmetric(&mut self, bound: f32) -> f32 {
        (2.0 * self.next_f32() - 1.0) * bound
    }
}
