//! Factorization timing: sequential QR of the full `Hᵀ` against streaming
//! compression followed by a reduced QR of `H̄ᵀ`.
//!
//! `H` is synthetic, `2k(m+p) x N` with i.i.d. uniform(0, 1) entries, and is
//! regenerated block by block from a seed so neither path ever holds it in
//! full. Only the factorization work is timed; block generation is not.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::BlockPartition;
use crate::error::Result;
use crate::matops::{lq, Matrix, SequentialQr};
use crate::sketch::{IoCounters, SketchAccumulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrShape {
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub d: usize,
}

impl QrShape {
    pub const fn new(k: usize, m: usize, p: usize, d: usize) -> Self {
        Self { k, m, p, d }
    }

    pub fn rows(&self) -> usize {
        2 * self.k * (self.m + self.p)
    }
}

/// Shapes `{k, m, p, d}` of the standard QR comparison.
pub const TABLE_SHAPES: [QrShape; 4] = [
    QrShape::new(10, 2, 2, 5),
    QrShape::new(20, 5, 5, 10),
    QrShape::new(60, 10, 5, 15),
    QrShape::new(100, 10, 10, 20),
];

/// Column block `cols` of the synthetic `H`; one ChaCha stream per block.
pub fn uniform_block(rows: usize, cols: std::ops::Range<usize>, seed: u64, block: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    Matrix::from_fn(rows, cols.end - cols.start, |_, _| rng.random::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timed {
    pub ms: f64,
    pub io: IoCounters,
}

/// Sequential QR over the `d` column blocks of `H` (row panels of `Hᵀ`).
pub fn time_full_sqr(shape: QrShape, n: usize, seed: u64) -> Result<Timed> {
    let r = shape.rows();
    let part = BlockPartition::new(n, shape.d)?;
    let mut sqr = SequentialQr::new(r);
    let mut elapsed = 0.0;
    let mut io = IoCounters::default();
    for (i, range) in part.ranges().enumerate() {
        let w = range.len();
        let block = uniform_block(r, range, seed, i as u64);
        let t = Instant::now();
        sqr.push(block.transpose())?;
        elapsed += t.elapsed().as_secs_f64();
        let carried = if i == 0 { 0 } else { (r * r) as u64 };
        io.words_read += (r * w) as u64 + carried;
        io.words_written += (r * r) as u64;
        io.blocks_read += 1;
    }
    let t = Instant::now();
    let r_factor = sqr.finish();
    elapsed += t.elapsed().as_secs_f64();
    std::hint::black_box(&r_factor);
    Ok(Timed { ms: elapsed * 1e3, io })
}

/// Streaming sketch with `N_c = rows + l`, then a Q-less QR of `H̄ᵀ`.
pub fn time_sdc_rqr(shape: QrShape, n: usize, l: usize, q: u8, seed: u64, sketch_seed: u64) -> Result<Timed> {
    let r = shape.rows();
    let part = BlockPartition::new(n, shape.d)?;
    let mut acc = SketchAccumulator::new(r, n, r + l, q, sketch_seed)?;
    let mut elapsed = 0.0;
    for (i, range) in part.ranges().enumerate() {
        let block = uniform_block(r, range, seed, i as u64);
        let t = Instant::now();
        acc.push(block.as_ref())?;
        elapsed += t.elapsed().as_secs_f64();
    }
    let t = Instant::now();
    let (h_bar, io) = acc.finish()?;
    let f = lq(h_bar.as_ref(), false)?;
    elapsed += t.elapsed().as_secs_f64();
    std::hint::black_box(&f.l);
    Ok(Timed { ms: elapsed * 1e3, io })
}
