//! Seeded random streams for the audit corpora.
//!
//! Stream `s` of seed `n` is ChaCha8 keyed by the 32-byte key whose first
//! eight bytes are `n` little-endian (the rest zero), with stream id `s` and
//! the block counter starting at zero. A `u64` is two consecutive 32-bit
//! output words, low word first; a uniform double is `(u64 >> 11) * 2^-53`.
//! Field `i` of a corpus uses stream `i`, so a corpus of size `2n` extends the
//! corpus of size `n`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid, ScalarField};

#[derive(Clone, Debug)]
pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        Stream(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-1, 1)`.
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}

/// Random trigonometric polynomial `sum_k (a_k cos(k.x') + b_k sin(k.x')) /
/// (1 + |k|^2)` over integer wave vectors `0 < |k|_inf <= modes` on the used
/// axes, with `x' = 2 pi x / L`. Wave vectors are visited in lexicographic
/// order (first axis slowest, each component from `-modes` to `modes`) and
/// `a_k`, `b_k` are drawn in that order from [`Stream::symmetric`].
///
/// The field has zero mean on periodic grids.
pub fn band_limited_field(grid: &Grid, modes: usize, seed: u64, stream: u64) -> ScalarField {
    let dim = grid.dim();
    let m = modes as i64;
    let width = (2 * m + 1) as usize;
    let pts = grid.points();
    // Per-axis tables of (cos, sin)(k * x'_a) indexed [k + m][i].
    let tables: Vec<Vec<Vec<(f64, f64)>>> = (0..dim)
        .map(|a| {
            let scale = 2.0 * std::f64::consts::PI / grid.extent()[a];
            (-m..=m)
                .map(|k| {
                    (0..pts[a])
                        .map(|i| {
                            let ph = k as f64 * scale * grid.axis_coord(a, i);
                            (ph.cos(), ph.sin())
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut rng = Stream::new(seed, stream);
    let mut coeffs = Vec::new();
    let total = width.pow(dim as u32);
    for flat in 0..total {
        let mut k = [0i64; 3];
        let mut rem = flat;
        for a in (0..dim).rev() {
            k[a] = (rem % width) as i64 - m;
            rem /= width;
        }
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        let norm2: i64 = k.iter().map(|v| v * v).sum();
        let w = 1.0 / (1.0 + norm2 as f64);
        let a = rng.symmetric() * w;
        let b = rng.symmetric() * w;
        coeffs.push((k, a, b));
    }
    let mut data = vec![0.0; grid.len()];
    for (idx, out) in data.iter_mut().enumerate() {
        let mi = grid.unravel(idx);
        let mut sum = 0.0;
        for (k, a, b) in &coeffs {
            let (mut re, mut im) = (1.0, 0.0);
            for ax in 0..dim {
                let (c, s) = tables[ax][(k[ax] + m) as usize][mi[ax]];
                let r = re * c - im * s;
                im = re * s + im * c;
                re = r;
            }
            sum += a * re + b * im;
        }
        *out = sum;
    }
    ScalarField::from_vec(grid, data).expect("grid-sized data")
}
