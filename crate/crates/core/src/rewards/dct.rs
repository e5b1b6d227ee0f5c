//! Code-length estimate for a grayscale image: 8×8 type-II DCT, JPEG-style
//! luminance quantization, and a simple symbol-cost model. The value tracks
//! compressed size; it is not a JPEG encoder.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Standard JPEG luminance quantization table, row-major.
pub const LUMINANCE_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Zigzag scan order as row-major indices.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Bits charged for the run/size symbol of each nonzero AC coefficient,
/// i.e. for closing the (possibly empty) zero-run before it.
pub const RUN_SYMBOL_BITS: u32 = 4;

fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 { (0.125f64).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = c * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

/// Orthonormal 2-D DCT-II of one 8×8 block (row-major in and out).
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut rows = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            rows[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * rows[y * 8 + u]).sum();
        }
    }
    out
}

fn bit_length(n: u64) -> u32 {
    64 - n.leading_zeros()
}

/// Quantized coefficients of one block, row-major.
pub fn quantize_block(pixels: &[f64; 64], quant_scale: f64) -> [i64; 64] {
    let mut shifted = [0.0; 64];
    for (s, p) in shifted.iter_mut().zip(pixels) {
        *s = p.clamp(0.0, 1.0) * 255.0 - 128.0;
    }
    let coeffs = dct8x8(&shifted);
    let mut q = [0i64; 64];
    for k in 0..64 {
        q[k] = (coeffs[k] / (quant_scale * LUMINANCE_QUANT[k] as f64)).round() as i64;
    }
    q
}

/// Bits for one quantized block: the DC always costs `1 + bitlen(|DC|)`;
/// each nonzero AC costs `RUN_SYMBOL_BITS + 1 + bitlen(|c|)`; trailing
/// zeros are free.
pub fn block_bits(q: &[i64; 64]) -> u64 {
    let mut bits = 1 + bit_length(q[0].unsigned_abs()) as u64;
    for &k in &ZIGZAG[1..] {
        let c = q[k];
        if c != 0 {
            bits += (RUN_SYMBOL_BITS + 1 + bit_length(c.unsigned_abs())) as u64;
        }
    }
    bits
}

/// Estimated code length in bits of an `height × width` image with pixel
/// values in [0, 1] (clamped), row-major.
pub fn dct_size_proxy(image: &[f64], height: usize, width: usize, quant_scale: f64) -> Result<f64> {
    if height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0 {
        return Err(Error::config(format!("image {height}x{width} is not a multiple of 8 in both axes")));
    }
    if image.len() != height * width {
        return Err(Error::usage(format!("image has {} pixels, expected {}", image.len(), height * width)));
    }
    if !(quant_scale > 0.0 && quant_scale.is_finite()) {
        return Err(Error::config("quantization scale must be positive"));
    }
    let mut total = 0u64;
    let mut block = [0.0; 64];
    for by in (0..height).step_by(8) {
        for bx in (0..width).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = image[(by + y) * width + bx + x];
                }
            }
            total += block_bits(&quantize_block(&block, quant_scale));
        }
    }
    Ok(total as f64)
}
