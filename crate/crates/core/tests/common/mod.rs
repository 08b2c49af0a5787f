#![allow(dead_code)]

use dnr_core::engine::Tensor;
use dnr_core::image_io::to_unit;

/// The black band is as wide as the 25% width reduction the fixture is run at.
pub const VALLEY: std::ops::Range<usize> = 36..60;

fn hash(i: usize, j: usize, k: usize) -> u8 {
    let mut x = ((i as u64) << 32) ^ ((j as u64) << 8) ^ k as u64;
    x = x.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 29;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (x >> 56) as u8
}

/// 64 rows by 96 columns of colored stripes plus noise, with a black
/// vertical band at `VALLEY`. Values are multiples of 1/255.
pub fn planted_valley() -> Tensor {
    Tensor::from_fn(64, 96, 3, |i, j, k| {
        if VALLEY.contains(&j) {
            return 0.0;
        }
        let wave = 0.5 + 0.3 * (0.7 * j as f32 + 0.3 * i as f32 + 2.1 * k as f32).sin();
        let noise = hash(i, j, k) as f32 / 255.0 - 0.5;
        let v = (wave + 0.3 * noise).clamp(0.0, 1.0);
        to_unit((v * 255.0).round() as u8)
    })
}
