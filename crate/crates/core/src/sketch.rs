//! Streaming Gaussian compression of the block Hankel data.
//!
//! The compressed matrix is `H̄ = (H Hᵀ)^q H 𝒞` with `𝒞` an `N x N_c`
//! Gaussian matrix, `N_c = 2k(m+p) + l`. Column blocks of `H` are visited
//! once. For `q = 1` the Gram matrix `S = Σ H_i H_iᵀ` of the full stacked
//! `H` is accumulated next to the raw sketch `G = Σ H_i 𝒞_i` and the product
//! `S G` is formed at the end, so the result is exactly the global
//! definition rather than a sum of per-block powers.
//!
//! Row `t` of `𝒞` comes from its own ChaCha8 stream (`seed`, stream `t`), so
//! the sketch does not depend on how the columns are partitioned.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use faer::linalg::matmul::matmul;
use faer::{Accum, MatRef, Par};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::{h_columns, hankel_cols, matrix_from_le, write_matrix_le, BlockPartition, TimeSeriesData};
use crate::error::{FrsidError, Result};
use crate::matops::{ensure_finite, Matrix};

pub const DEFAULT_OVERSAMPLING: usize = 5;
pub const CHECKPOINT_MAGIC: &[u8; 6] = b"FRSCK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    /// Prediction horizon.
    pub k: usize,
    /// Oversampling count.
    pub l: usize,
    /// Power exponent, 0 or 1.
    pub q: u8,
    /// Number of column blocks streamed.
    pub d: usize,
    pub seed: u64,
    /// Scale `H` by `1/sqrt(N)` before sketching.
    #[serde(default)]
    pub scale_by_sqrt_n: bool,
}

impl SketchConfig {
    pub fn new(k: usize, q: u8, seed: u64) -> Self {
        Self { k, l: DEFAULT_OVERSAMPLING, q, d: 1, seed, scale_by_sqrt_n: false }
    }

    pub fn with_l(mut self, l: usize) -> Self {
        self.l = l;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn n_c(&self, m: usize, p: usize) -> usize {
        2 * self.k * (m + p) + self.l
    }

    /// Checks the configuration against data with `N` Hankel columns.
    pub fn validate(&self, m: usize, p: usize, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(FrsidError::Config("horizon k must be positive".into()));
        }
        if self.l == 0 {
            return Err(FrsidError::Config("oversampling l must be positive".into()));
        }
        if self.q > 1 {
            return Err(FrsidError::Config(format!("power exponent q must be 0 or 1, got {}", self.q)));
        }
        let n_c = self.n_c(m, p);
        if n_c > n {
            return Err(FrsidError::Config(format!(
                "sketch width N_c = {n_c} exceeds the {n} Hankel columns; compression would expand the data"
            )));
        }
        BlockPartition::new(n, self.d)?;
        Ok(())
    }
}

/// Word-granular IO proxy counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoCounters {
    pub words_read: u64,
    pub words_written: u64,
    pub blocks_read: u64,
}

impl IoCounters {
    /// Closed-form data movement of one streaming sketch pass:
    /// `(q+2)·2k(m+p)·N + l·N`.
    pub fn predicted_sdc_words(k: usize, m: usize, p: usize, l: usize, q: u8, n: usize) -> u64 {
        let r = (2 * k * (m + p)) as u64;
        (q as u64 + 2) * r * n as u64 + (l * n) as u64
    }
}

/// Deterministic source of the rows of `𝒞`, entries `N(0, 1/N_c)`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianSketch {
    seed: u64,
    n_c: usize,
}

impl GaussianSketch {
    pub fn new(seed: u64, n_c: usize) -> Self {
        Self { seed, n_c }
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    /// `𝒞(rows, :)ᵀ` as an `N_c x rows.len()` matrix.
    pub fn rows_transposed(&self, rows: Range<usize>, out: &mut Matrix) {
        let width = rows.end - rows.start;
        if out.nrows() != self.n_c || out.ncols() != width {
            *out = Matrix::zeros(self.n_c, width);
        }
        let scale = 1.0 / (self.n_c as f64).sqrt();
        for (j, t) in rows.enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(t as u64);
            let col = out.as_mut().col_mut(j).try_as_col_major_mut().expect("owned matrix is contiguous");
            for v in col.as_slice_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = z * scale;
            }
        }
    }

    /// Full `N x N_c` matrix; tests only use this on small `N`.
    pub fn materialize(&self, n: usize) -> Matrix {
        let mut ct = Matrix::zeros(0, 0);
        self.rows_transposed(0..n, &mut ct);
        ct.transpose().to_owned()
    }
}

/// Single-pass accumulator for `(X Xᵀ)^q X 𝒞` over column blocks of `X`.
#[derive(Clone, Debug)]
pub struct SketchAccumulator {
    rows: usize,
    n: usize,
    q: u8,
    source: GaussianSketch,
    g: Matrix,
    gram: Option<Matrix>,
    next_col: usize,
    io: IoCounters,
    ct_buf: Matrix,
}

impl SketchAccumulator {
    pub fn new(rows: usize, n: usize, n_c: usize, q: u8, seed: u64) -> Result<Self> {
        if q > 1 {
            return Err(FrsidError::Config(format!("power exponent q must be 0 or 1, got {q}")));
        }
        Ok(Self {
            rows,
            n,
            q,
            source: GaussianSketch::new(seed, n_c),
            g: Matrix::zeros(rows, n_c),
            gram: (q == 1).then(|| Matrix::zeros(rows, rows)),
            next_col: 0,
            io: IoCounters::default(),
            ct_buf: Matrix::zeros(0, 0),
        })
    }

    pub fn next_col(&self) -> usize {
        self.next_col
    }

    pub fn is_complete(&self) -> bool {
        self.next_col == self.n
    }

    pub fn io(&self) -> IoCounters {
        self.io
    }

    /// Folds in the next column block of `X`; blocks must arrive in order.
    pub fn push(&mut self, block: MatRef<'_, f64>) -> Result<()> {
        if block.nrows() != self.rows {
            return Err(FrsidError::Dimension(format!(
                "block has {} rows, expected {}",
                block.nrows(),
                self.rows
            )));
        }
        let width = block.ncols();
        if self.next_col + width > self.n {
            return Err(FrsidError::Dimension(format!(
                "block of width {width} at column {} overruns N = {}",
                self.next_col, self.n
            )));
        }
        ensure_finite(block, "sketch block")?;
        let cols = self.next_col..self.next_col + width;
        self.source.rows_transposed(cols, &mut self.ct_buf);
        matmul(self.g.as_mut(), Accum::Add, block, self.ct_buf.transpose(), 1.0, Par::Seq);
        let mut passes = 1;
        if let Some(gram) = self.gram.as_mut() {
            matmul(gram.as_mut(), Accum::Add, block, block.transpose(), 1.0, Par::Seq);
            passes += 1;
        }
        self.io.words_read += (passes * self.rows * width + width * self.source.n_c()) as u64;
        self.io.blocks_read += 1;
        self.next_col += width;
        Ok(())
    }

    /// Returns the sketch and the IO counters of the pass.
    pub fn finish(self) -> Result<(Matrix, IoCounters)> {
        if !self.is_complete() {
            return Err(FrsidError::InvalidInput(format!(
                "sketch finished after {} of {} columns",
                self.next_col, self.n
            )));
        }
        let mut io = self.io;
        let out = match self.gram {
            Some(gram) => {
                // The Gram accumulates in the upper and lower halves separately;
                // average them so the power step uses an exactly symmetric S.
                let s = Matrix::from_fn(self.rows, self.rows, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
                &s * &self.g
            }
            None => self.g,
        };
        io.words_written += (out.nrows() * out.ncols()) as u64;
        Ok((out, io))
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| FrsidError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            w.write_all(CHECKPOINT_MAGIC)?;
            let header = [
                self.rows as u64,
                self.n as u64,
                self.source.n_c() as u64,
                self.q as u64,
                self.source.seed,
                self.next_col as u64,
                self.io.words_read,
                self.io.words_written,
                self.io.blocks_read,
            ];
            for v in header {
                w.write_all(&v.to_le_bytes())?;
            }
            write_matrix_le(self.g.as_ref(), w)?;
            if let Some(gram) = &self.gram {
                write_matrix_le(gram.as_ref(), w)?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| FrsidError::io(path, e))
    }

    /// Restores an accumulator saved by [`SketchAccumulator::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| FrsidError::io(path, e))?;
        let mut buf = Vec::new();
        BufReader::new(file).read_to_end(&mut buf).map_err(|e| FrsidError::io(path, e))?;
        let loc = path.display().to_string();
        const HEADER: usize = 6 + 9 * 8;
        if buf.len() < HEADER || &buf[..6] != CHECKPOINT_MAGIC {
            return Err(FrsidError::parse(loc, "not a sketch checkpoint"));
        }
        let field = |i: usize| u64::from_le_bytes(buf[6 + 8 * i..14 + 8 * i].try_into().expect("8 bytes"));
        let (rows, n, n_c, q) = (field(0) as usize, field(1) as usize, field(2) as usize, field(3) as u8);
        let expected = HEADER + 8 * rows * n_c + if q == 1 { 8 * rows * rows } else { 0 };
        if buf.len() != expected || q > 1 {
            return Err(FrsidError::parse(
                loc,
                format!("expected {expected} bytes, found {}", buf.len()),
            ));
        }
        let payload = &buf[HEADER..];
        let g = matrix_from_le(payload, rows, n_c);
        let gram = (q == 1).then(|| matrix_from_le(&payload[8 * rows * n_c..], rows, rows));
        Ok(Self {
            rows,
            n,
            q,
            source: GaussianSketch::new(field(4), n_c),
            g,
            gram,
            next_col: field(5) as usize,
            io: IoCounters { words_read: field(6), words_written: field(7), blocks_read: field(8) },
            ct_buf: Matrix::zeros(0, 0),
        })
    }

    fn matches(&self, rows: usize, n: usize, n_c: usize, q: u8, seed: u64) -> bool {
        self.rows == rows && self.n == n && self.source.n_c() == n_c && self.q == q && self.source.seed == seed
    }
}

/// Compressed data: `H̄` with rows ordered `[Ū_f; Ū_p; Ȳ_p; Ȳ_f]`.
#[derive(Clone, Debug)]
pub struct SketchedData {
    pub h_bar: Matrix,
    /// Hankel column count of the uncompressed data.
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub config: SketchConfig,
    pub io: IoCounters,
}

impl SketchedData {
    pub fn n_c(&self) -> usize {
        self.h_bar.ncols()
    }

    fn rows(&self, start: usize, len: usize) -> MatRef<'_, f64> {
        self.h_bar.as_ref().subrows(start, len)
    }

    pub fn u_f(&self) -> MatRef<'_, f64> {
        self.rows(0, self.config.k * self.m)
    }

    pub fn u_p(&self) -> MatRef<'_, f64> {
        self.rows(self.config.k * self.m, self.config.k * self.m)
    }

    pub fn y_p(&self) -> MatRef<'_, f64> {
        self.rows(2 * self.config.k * self.m, self.config.k * self.p)
    }

    pub fn y_f(&self) -> MatRef<'_, f64> {
        let k = self.config.k;
        self.rows(2 * k * self.m + k * self.p, k * self.p)
    }

    /// `W̄_p = [Ū_p; Ȳ_p]`, contiguous in `H̄`.
    pub fn w_p(&self) -> MatRef<'_, f64> {
        self.rows(self.config.k * self.m, self.config.k * (self.m + self.p))
    }

    /// Normalization `τ` that maps `R̄₃₃` back to the innovation factor.
    pub fn tau(&self) -> f64 {
        if self.config.scale_by_sqrt_n {
            1.0
        } else {
            (self.n as f64).powf(-(2.0 * self.config.q as f64 + 1.0) / 2.0)
        }
    }
}

pub fn sketch_stream(ts: &TimeSeriesData, cfg: &SketchConfig) -> Result<SketchedData> {
    sketch_stream_with_checkpoint(ts, cfg, None)
}

/// As [`sketch_stream`], saving progress to `checkpoint` after every block
/// and resuming from it when a compatible file already exists.
pub fn sketch_stream_with_checkpoint(
    ts: &TimeSeriesData,
    cfg: &SketchConfig,
    checkpoint: Option<&Path>,
) -> Result<SketchedData> {
    let (m, p) = (ts.m(), ts.p());
    let n = hankel_cols(ts.n_t(), cfg.k)?;
    cfg.validate(m, p, n)?;
    let part = BlockPartition::new(n, cfg.d)?;
    let rows = 2 * cfg.k * (m + p);
    let n_c = cfg.n_c(m, p);

    let mut acc = match checkpoint.filter(|c| c.exists()) {
        Some(path) => {
            let acc = SketchAccumulator::load_checkpoint(path)?;
            if !acc.matches(rows, n, n_c, cfg.q, cfg.seed) {
                return Err(FrsidError::Config(format!(
                    "checkpoint {} was written for a different configuration",
                    path.display()
                )));
            }
            acc
        }
        None => SketchAccumulator::new(rows, n, n_c, cfg.q, cfg.seed)?,
    };

    let mut block = Matrix::zeros(0, 0);
    for range in part.ranges() {
        if range.end <= acc.next_col() {
            continue;
        }
        if range.start != acc.next_col() {
            return Err(FrsidError::Config(
                "checkpoint position does not fall on a block boundary of this partition".into(),
            ));
        }
        h_columns(ts, cfg.k, range, &mut block);
        acc.push(block.as_ref())?;
        if let Some(path) = checkpoint {
            acc.save_checkpoint(path)?;
        }
    }
    let (mut h_bar, io) = acc.finish()?;
    if cfg.scale_by_sqrt_n {
        let c = (n as f64).powf(-(2.0 * cfg.q as f64 + 1.0) / 2.0);
        h_bar = h_bar * faer::Scale(c);
    }
    Ok(SketchedData { h_bar, n, m, p, config: cfg.clone(), io })
}

/// `(M Mᵀ)^q M 𝒞` for an in-memory matrix.
pub fn sketch_matrix(mat: MatRef<'_, f64>, n_c: usize, q: u8, seed: u64) -> Result<Matrix> {
    if n_c == 0 || n_c >= mat.ncols() {
        return Err(FrsidError::Config(format!(
            "sketch width {n_c} must be positive and below the column count {}",
            mat.ncols()
        )));
    }
    let mut acc = SketchAccumulator::new(mat.nrows(), mat.ncols(), n_c, q, seed)?;
    const PANEL: usize = 8192;
    let mut start = 0;
    while start < mat.ncols() {
        let w = PANEL.min(mat.ncols() - start);
        acc.push(mat.subcols(start, w))?;
        start += w;
    }
    Ok(acc.finish()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::build_hankel;
    use crate::matops::{frobenius, numerical_rank, rel_diff, singular_values};

    fn random_ts(m: usize, p: usize, n_t: usize, seed: u64) -> TimeSeriesData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Matrix::from_fn(m, n_t, |_, _| rng.sample(StandardNormal));
        let y = Matrix::from_fn(p, n_t, |_, _| rng.sample(StandardNormal));
        TimeSeriesData::new(u, y).unwrap()
    }

    fn monolithic(ts: &TimeSeriesData, cfg: &SketchConfig) -> Matrix {
        let h = build_hankel(ts, cfg.k).unwrap().h();
        let c = GaussianSketch::new(cfg.seed, cfg.n_c(ts.m(), ts.p())).materialize(h.ncols());
        let base = &h * &c;
        if cfg.q == 1 {
            &h * h.transpose() * base
        } else {
            base
        }
    }

    #[test]
    fn zero_data_zero_sketch() {
        let ts = TimeSeriesData::new(Matrix::zeros(1, 200), Matrix::zeros(1, 200)).unwrap();
        let sk = sketch_stream(&ts, &SketchConfig::new(3, 1, 7).with_d(4)).unwrap();
        assert_eq!(frobenius(sk.h_bar.as_ref()), 0.0);
    }

    #[test]
    fn streamed_matches_monolithic() {
        let ts = random_ts(2, 1, 600, 1);
        for q in [0, 1] {
            let cfg = SketchConfig::new(3, q, 11);
            let oracle = monolithic(&ts, &cfg);
            for d in [1, 3, 8] {
                let sk = sketch_stream(&ts, &cfg.clone().with_d(d)).unwrap();
                assert!(rel_diff(sk.h_bar.as_ref(), oracle.as_ref()) < 1e-12, "q={q} d={d}");
            }
        }
    }

    #[test]
    fn stream_is_reproducible() {
        let ts = random_ts(1, 1, 300, 2);
        let cfg = SketchConfig::new(2, 1, 5).with_d(4);
        let a = sketch_stream(&ts, &cfg).unwrap();
        let b = sketch_stream(&ts, &cfg).unwrap();
        assert_eq!(a.h_bar, b.h_bar);
        let other = sketch_stream(&ts, &SketchConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.h_bar, other.h_bar);
    }

    #[test]
    fn low_rank_data_keeps_rank() {
        // Two sinusoids in u and a fixed mix in y: H has rank 4 for k = 4.
        let n_t = 2000;
        let f = |t: usize, w: f64, ph: f64| (w * t as f64 + ph).sin();
        let u = Matrix::from_fn(1, n_t, |_, t| f(t, 0.3, 0.0) + f(t, 1.1, 0.5));
        let y = Matrix::from_fn(1, n_t, |_, t| 2.0 * f(t, 0.3, 0.2) - f(t, 1.1, 0.1));
        let ts = TimeSeriesData::new(u, y).unwrap();
        let cfg = SketchConfig::new(4, 0, 3).with_d(5);
        let h = build_hankel(&ts, 4).unwrap().h();
        let r = numerical_rank(&singular_values(h.as_ref()).unwrap(), 1e-8);
        assert_eq!(r, 4);
        let sk = sketch_stream(&ts, &cfg).unwrap();
        assert_eq!(numerical_rank(&singular_values(sk.h_bar.as_ref()).unwrap(), 1e-8), r);
    }

    #[test]
    fn rejects_expanding_sketch() {
        let ts = random_ts(1, 1, 20, 3);
        let err = sketch_stream(&ts, &SketchConfig::new(4, 0, 1)).unwrap_err();
        assert!(matches!(err, FrsidError::Config(_)));
        assert!(sketch_matrix(Matrix::zeros(3, 10).as_ref(), 10, 0, 1).is_err());
    }

    #[test]
    fn sketch_matrix_power_is_two_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Matrix::from_fn(6, 20000, |_, _| rng.sample(StandardNormal));
        let s0 = sketch_matrix(m.as_ref(), 11, 0, 9).unwrap();
        let s1 = sketch_matrix(m.as_ref(), 11, 1, 9).unwrap();
        let two_step = &m * m.transpose() * &s0;
        assert!(rel_diff(s1.as_ref(), two_step.as_ref()) < 1e-10);
        assert_eq!(frobenius(sketch_matrix(Matrix::zeros(3, 50).as_ref(), 5, 1, 0).unwrap().as_ref()), 0.0);
    }

    #[test]
    fn gaussian_moments() {
        let g = GaussianSketch::new(1, 50).materialize(4000);
        let n = (g.nrows() * g.ncols()) as f64;
        let mean: f64 = (0..g.ncols()).flat_map(|j| (0..g.nrows()).map(move |i| (i, j))).map(|ij| g[ij]).sum::<f64>() / n;
        let var = frobenius(g.as_ref()).powi(2) / n;
        assert!(mean.abs() < 3.0 / (50.0 * n).sqrt());
        assert!((var * 50.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn io_counter_formula() {
        let ts = random_ts(2, 1, 1000, 5);
        for q in [0u8, 1] {
            let cfg = SketchConfig::new(3, q, 1).with_d(7);
            let sk = sketch_stream(&ts, &cfg).unwrap();
            let predicted = IoCounters::predicted_sdc_words(3, 2, 1, cfg.l, q, sk.n);
            assert_eq!(sk.io.words_read, predicted);
            assert_eq!(sk.io.blocks_read, 7);
        }
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("s.ck");
        let ts = random_ts(1, 2, 800, 6);
        let cfg = SketchConfig::new(3, 1, 8).with_d(4);
        let full = sketch_stream(&ts, &cfg).unwrap();

        // Simulate an interruption after two blocks.
        let n = hankel_cols(ts.n_t(), 3).unwrap();
        let part = BlockPartition::new(n, 4).unwrap();
        let mut acc = SketchAccumulator::new(18, n, cfg.n_c(1, 2), 1, 8).unwrap();
        let mut block = Matrix::zeros(0, 0);
        for r in part.ranges().take(2) {
            h_columns(&ts, 3, r, &mut block);
            acc.push(block.as_ref()).unwrap();
        }
        acc.save_checkpoint(&ckpt).unwrap();
        let resumed = sketch_stream_with_checkpoint(&ts, &cfg, Some(&ckpt)).unwrap();
        assert_eq!(resumed.h_bar, full.h_bar);
        assert_eq!(resumed.io, full.io);

        let other = SketchConfig { seed: 9, ..cfg };
        assert!(matches!(
            sketch_stream_with_checkpoint(&ts, &other, Some(&ckpt)),
            Err(FrsidError::Config(_))
        ));
    }

    #[test]
    fn block_accessors_partition_rows() {
        let ts = random_ts(2, 3, 400, 7);
        let sk = sketch_stream(&ts, &SketchConfig::new(2, 0, 1)).unwrap();
        assert_eq!(sk.u_f().nrows() + sk.w_p().nrows() + sk.y_f().nrows(), sk.h_bar.nrows());
        assert_eq!(sk.u_p(), sk.w_p().subrows(0, 4));
        assert_eq!(sk.y_p(), sk.w_p().subrows(4, 6));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn scaling_equivariance(c in 0.1f64..10.0, q in 0u8..2, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_fn(4, 300, |_, _| rng.sample(StandardNormal));
            let base = sketch_matrix(m.as_ref(), 9, q, seed).unwrap();
            let scaled = sketch_matrix((&m * faer::Scale(c)).as_ref(), 9, q, seed).unwrap();
            let expect = &base * faer::Scale(c.powi(2 * q as i32 + 1));
            proptest::prop_assert!(rel_diff(scaled.as_ref(), expect.as_ref()) < 1e-12);
        }

        #[test]
        fn partition_independence(d in 1usize..12, q in 0u8..2, seed in 0u64..1000) {
            let ts = random_ts(1, 1, 300, seed);
            let cfg = SketchConfig::new(2, q, seed);
            let one = sketch_stream(&ts, &cfg).unwrap();
            let many = sketch_stream(&ts, &cfg.clone().with_d(d)).unwrap();
            proptest::prop_assert!(rel_diff(many.h_bar.as_ref(), one.h_bar.as_ref()) < 1e-12);
        }
    }
}
