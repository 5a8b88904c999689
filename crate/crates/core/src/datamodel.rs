//! Time series storage, block Hankel matrices and file formats.
//!
//! Hankel matrices are never aliased views into the samples. Callers either
//! materialize the whole [`HankelSet`] or request contiguous column blocks
//! with [`hankel_block`] / [`h_columns`], which is what the streaming sketch
//! uses.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use faer::MatRef;

use crate::error::{FrsidError, Result};
use crate::matops::{ensure_finite, vstack, Matrix};

pub const BINARY_MAGIC: &[u8; 6] = b"FRSID1";

/// Recorded input/output samples, one column per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesData {
    u: Matrix,
    y: Matrix,
}

impl TimeSeriesData {
    /// `u` is `m x N_t`, `y` is `p x N_t`.
    pub fn new(u: Matrix, y: Matrix) -> Result<Self> {
        if u.ncols() != y.ncols() {
            return Err(FrsidError::Dimension(format!(
                "u has {} samples but y has {}",
                u.ncols(),
                y.ncols()
            )));
        }
        if u.ncols() == 0 {
            return Err(FrsidError::InsufficientData { needed: 1, got: 0 });
        }
        ensure_finite(u.as_ref(), "u")?;
        ensure_finite(y.as_ref(), "y")?;
        Ok(Self { u, y })
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.u.ncols()
    }

    pub fn u(&self) -> MatRef<'_, f64> {
        self.u.as_ref()
    }

    pub fn y(&self) -> MatRef<'_, f64> {
        self.y.as_ref()
    }

    /// Samples `range` as a new series.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.n_t() || range.start >= range.end {
            return Err(FrsidError::InvalidInput(format!(
                "sample range {range:?} is empty or exceeds N_t = {}",
                self.n_t()
            )));
        }
        let len = range.end - range.start;
        Ok(Self {
            u: self.u.as_ref().subcols(range.start, len).to_owned(),
            y: self.y.as_ref().subcols(range.start, len).to_owned(),
        })
    }

    /// Same samples multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { u: &self.u * faer::Scale(c), y: &self.y * faer::Scale(c) }
    }
}

/// Number of Hankel columns for horizon `k`.
pub fn hankel_cols(n_t: usize, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(FrsidError::Config("horizon k must be positive".into()));
    }
    if n_t < 2 * k {
        return Err(FrsidError::InsufficientData { needed: 2 * k, got: n_t });
    }
    Ok(n_t - 2 * k + 1)
}

/// Materialized past/future Hankel matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelSet {
    pub k: usize,
    pub u_p: Matrix,
    pub u_f: Matrix,
    pub y_p: Matrix,
    pub y_f: Matrix,
}

impl HankelSet {
    pub fn n_cols(&self) -> usize {
        self.u_p.ncols()
    }

    /// `[U_p; Y_p]`.
    pub fn w_p(&self) -> Matrix {
        vstack(&[self.u_p.as_ref(), self.y_p.as_ref()])
    }

    /// `[U_f; U_p; Y_p; Y_f]`.
    pub fn h(&self) -> Matrix {
        vstack(&[self.u_f.as_ref(), self.u_p.as_ref(), self.y_p.as_ref(), self.y_f.as_ref()])
    }
}

fn fill_hankel(src: MatRef<'_, f64>, k: usize, lag: usize, start: usize, width: usize) -> Matrix {
    let ch = src.nrows();
    Matrix::from_fn(k * ch, width, |r, j| src[(r % ch, lag + r / ch + start + j)])
}

pub fn build_hankel(ts: &TimeSeriesData, k: usize) -> Result<HankelSet> {
    let n = hankel_cols(ts.n_t(), k)?;
    let part = BlockPartition::new(n, 1)?;
    let b = hankel_block(ts, k, &part, 0)?;
    Ok(HankelSet { k, u_p: b.u_p, u_f: b.u_f, y_p: b.y_p, y_f: b.y_f })
}

/// Contiguous column partition of the `N` Hankel columns into `d` blocks.
///
/// Every block has `N / d` columns except the last, which absorbs the
/// remainder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    n: usize,
    d: usize,
}

impl BlockPartition {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(FrsidError::Config("block count d must be at least 1".into()));
        }
        if d > n {
            return Err(FrsidError::Config(format!("block count d = {d} exceeds N = {n}")));
        }
        Ok(Self { n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nominal_width(&self) -> usize {
        self.n / self.d
    }

    /// Column range of block `i` (0-based).
    pub fn range(&self, i: usize) -> Result<Range<usize>> {
        if i >= self.d {
            return Err(FrsidError::IndexOutOfRange { index: i, len: self.d });
        }
        let w = self.nominal_width();
        let start = i * w;
        let end = if i + 1 == self.d { self.n } else { start + w };
        Ok(start..end)
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.d).map(|i| self.range(i).expect("index within partition"))
    }
}

/// Column slice of each Hankel matrix for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelBlock {
    pub u_p: Matrix,
    pub u_f: Matrix,
    pub y_p: Matrix,
    pub y_f: Matrix,
}

pub fn hankel_block(
    ts: &TimeSeriesData,
    k: usize,
    part: &BlockPartition,
    i: usize,
) -> Result<HankelBlock> {
    check_partition(ts, k, part)?;
    let r = part.range(i)?;
    let w = r.end - r.start;
    Ok(HankelBlock {
        u_p: fill_hankel(ts.u(), k, 0, r.start, w),
        u_f: fill_hankel(ts.u(), k, k, r.start, w),
        y_p: fill_hankel(ts.y(), k, 0, r.start, w),
        y_f: fill_hankel(ts.y(), k, k, r.start, w),
    })
}

fn check_partition(ts: &TimeSeriesData, k: usize, part: &BlockPartition) -> Result<()> {
    let n = hankel_cols(ts.n_t(), k)?;
    if part.n() != n {
        return Err(FrsidError::Dimension(format!(
            "partition covers {} columns but the Hankel matrices have {n}",
            part.n()
        )));
    }
    Ok(())
}

/// Columns `cols` of the stacked matrix `H = [U_f; U_p; Y_p; Y_f]`,
/// written straight into a `2k(m+p) x width` buffer.
pub fn h_columns(ts: &TimeSeriesData, k: usize, cols: Range<usize>, out: &mut Matrix) {
    let (m, p) = (ts.m(), ts.p());
    let width = cols.end - cols.start;
    let rows = 2 * k * (m + p);
    if out.nrows() != rows || out.ncols() != width {
        *out = Matrix::zeros(rows, width);
    }
    let (u, y) = (ts.u(), ts.y());
    for j in 0..width {
        let t0 = cols.start + j;
        let col = out.as_mut().col_mut(j).try_as_col_major_mut().expect("owned matrix is contiguous");
        let col = col.as_slice_mut();
        let mut r = 0;
        for (src, lag) in [(u, k), (u, 0), (y, 0), (y, k)] {
            let ch = src.nrows();
            for i in 0..k {
                for c in 0..ch {
                    col[r] = src[(c, t0 + lag + i)];
                    r += 1;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Binary,
}

impl DataFormat {
    /// `.csv` maps to CSV; anything else to the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

pub fn load_timeseries(path: &Path, format: DataFormat) -> Result<TimeSeriesData> {
    let file = File::open(path).map_err(|e| FrsidError::io(path, e))?;
    let reader = BufReader::new(file);
    let loc = path.display().to_string();
    match format {
        DataFormat::Csv => read_csv(reader, &loc),
        DataFormat::Binary => read_binary(reader, &loc),
    }
}

pub fn save_timeseries(ts: &TimeSeriesData, path: &Path, format: DataFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| FrsidError::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        DataFormat::Csv => write_csv(ts, &mut w)?,
        DataFormat::Binary => write_binary(ts, &mut w).map_err(|e| FrsidError::io(path, e))?,
    }
    w.flush().map_err(|e| FrsidError::io(path, e))
}

fn parse_header(fields: &csv::StringRecord, loc: &str) -> Result<(usize, usize)> {
    let mut m = 0;
    let mut p = 0;
    for (idx, name) in fields.iter().enumerate() {
        let name = name.trim();
        let (kind, num) = name.split_at(name.len().min(1));
        let num: usize = num
            .parse()
            .map_err(|_| FrsidError::parse(format!("{loc}:1"), format!("bad column name `{name}`")))?;
        let expected = match kind {
            "u" if p == 0 => {
                m += 1;
                m
            }
            "y" => {
                p += 1;
                p
            }
            _ => {
                return Err(FrsidError::parse(
                    format!("{loc}:1"),
                    format!("column {} is `{name}`; expected u1..um then y1..yp", idx + 1),
                ))
            }
        };
        if num != expected {
            return Err(FrsidError::parse(
                format!("{loc}:1"),
                format!("column `{name}` is out of order (expected index {expected})"),
            ));
        }
    }
    Ok((m, p))
}

pub fn read_csv<R: Read>(reader: R, loc: &str) -> Result<TimeSeriesData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| FrsidError::parse(format!("{loc}:1"), e.to_string()))?
        .clone();
    let (m, p) = parse_header(&header, loc)?;
    let width = m + p;
    let mut vals: Vec<f64> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            FrsidError::parse(format!("{loc}:{line}"), e.to_string())
        })?;
        let line = rec.position().map_or(0, |pos| pos.line());
        if rec.len() != width {
            return Err(FrsidError::parse(
                format!("{loc}:{line}"),
                format!("row has {} fields, header has {width}", rec.len()),
            ));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                FrsidError::parse(format!("{loc}:{line}"), format!("field {} `{cell}` is not a number", c + 1))
            })?;
            vals.push(v);
        }
    }
    let n_t = vals.len() / width.max(1);
    let u = Matrix::from_fn(m, n_t, |i, t| vals[t * width + i]);
    let y = Matrix::from_fn(p, n_t, |i, t| vals[t * width + m + i]);
    TimeSeriesData::new(u, y)
}

pub fn write_csv<W: Write>(ts: &TimeSeriesData, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| FrsidError::InvalidInput(format!("CSV write failed: {e}"));
    let header: Vec<String> = (1..=ts.m())
        .map(|i| format!("u{i}"))
        .chain((1..=ts.p()).map(|i| format!("y{i}")))
        .collect();
    wtr.write_record(&header).map_err(err)?;
    let mut row = Vec::with_capacity(ts.m() + ts.p());
    for t in 0..ts.n_t() {
        row.clear();
        row.extend((0..ts.m()).map(|i| ts.u()[(i, t)].to_string()));
        row.extend((0..ts.p()).map(|i| ts.y()[(i, t)].to_string()));
        wtr.write_record(&row).map_err(err)?;
    }
    wtr.flush().map_err(|e| FrsidError::InvalidInput(format!("CSV write failed: {e}")))
}

pub(crate) fn write_matrix_le<W: Write>(m: MatRef<'_, f64>, w: &mut W) -> std::io::Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn matrix_from_le(bytes: &[u8], rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| {
        let at = 8 * (j * rows + i);
        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte chunk"))
    })
}

pub fn write_binary<W: Write>(ts: &TimeSeriesData, w: &mut W) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    for v in [ts.m(), ts.p(), ts.n_t()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    write_matrix_le(ts.u(), w)?;
    write_matrix_le(ts.y(), w)
}

pub fn read_binary<R: Read>(mut reader: R, loc: &str) -> Result<TimeSeriesData> {
    let mut buf = Vec::new();
    reader
        .read_to_end(&mut buf)
        .map_err(|e| FrsidError::parse(loc, format!("read failed: {e}")))?;
    const HEADER: usize = 6 + 3 * 8;
    if buf.len() < HEADER {
        return Err(FrsidError::parse(
            loc,
            format!("expected at least {HEADER} header bytes, found {}", buf.len()),
        ));
    }
    if &buf[..6] != BINARY_MAGIC {
        return Err(FrsidError::parse(format!("{loc}@0"), "bad magic, expected FRSID1"));
    }
    let field = |i: usize| u64::from_le_bytes(buf[6 + 8 * i..14 + 8 * i].try_into().expect("8 bytes"));
    let (m, p, n_t) = (field(0), field(1), field(2));
    let expected = (m + p)
        .checked_mul(n_t)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER as u64))
        .ok_or_else(|| FrsidError::parse(format!("{loc}@6"), "header sizes overflow"))?;
    if buf.len() as u64 != expected {
        return Err(FrsidError::parse(
            loc,
            format!("expected {expected} bytes for m={m}, p={p}, N_t={n_t}, found {}", buf.len()),
        ));
    }
    let (m, p, n_t) = (m as usize, p as usize, n_t as usize);
    let payload = &buf[HEADER..];
    let u = matrix_from_le(payload, m, n_t);
    let y = matrix_from_le(&payload[8 * m * n_t..], p, n_t);
    TimeSeriesData::new(u, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(m: usize, p: usize, n_t: usize) -> TimeSeriesData {
        let u = Matrix::from_fn(m, n_t, |i, t| (t + 1) as f64 + 100.0 * i as f64);
        let y = Matrix::from_fn(p, n_t, |i, t| -((t + 1) as f64) - 100.0 * i as f64);
        TimeSeriesData::new(u, y).unwrap()
    }

    fn random_ts(m: usize, p: usize, n_t: usize, seed: u64) -> TimeSeriesData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Matrix::from_fn(m, n_t, |_, _| rng.random_range(-1.0..1.0));
        let y = Matrix::from_fn(p, n_t, |_, _| rng.random_range(-1.0..1.0));
        TimeSeriesData::new(u, y).unwrap()
    }

    #[test]
    fn hankel_small_example() {
        let ts = ramp(1, 1, 7);
        let h = build_hankel(&ts, 2).unwrap();
        assert_eq!(h.n_cols(), 4);
        assert_eq!(h.u_p, faer::mat![[1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0]]);
        assert_eq!(h.u_f, faer::mat![[3.0, 4.0, 5.0, 6.0], [4.0, 5.0, 6.0, 7.0]]);
    }

    #[test]
    fn hankel_horizon_one() {
        let ts = ramp(1, 1, 5);
        let h = build_hankel(&ts, 1).unwrap();
        assert_eq!(h.u_p, faer::mat![[1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(h.u_f, faer::mat![[2.0, 3.0, 4.0, 5.0]]);
    }

    #[test]
    fn hankel_needs_2k_samples() {
        let ts = ramp(1, 1, 5);
        assert!(matches!(
            build_hankel(&ts, 3),
            Err(FrsidError::InsufficientData { needed: 6, got: 5 })
        ));
    }

    #[test]
    fn hankel_anti_diagonals_constant() {
        let ts = random_ts(2, 3, 40, 1);
        let k = 4;
        let h = build_hankel(&ts, k).unwrap();
        for (mat, src, ch, lag) in [
            (&h.u_p, ts.u(), 2, 0),
            (&h.u_f, ts.u(), 2, k),
            (&h.y_p, ts.y(), 3, 0),
            (&h.y_f, ts.y(), 3, k),
        ] {
            for bi in 0..k {
                for j in 0..h.n_cols() {
                    for c in 0..ch {
                        assert_eq!(mat[(bi * ch + c, j)], src[(c, lag + bi + j)]);
                        if bi + 1 < k && j > 0 {
                            assert_eq!(mat[((bi + 1) * ch + c, j - 1)], mat[(bi * ch + c, j)]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn block_slicing() {
        let ts = ramp(1, 1, 7);
        let part = BlockPartition::new(4, 2).unwrap();
        let b0 = hankel_block(&ts, 2, &part, 0).unwrap();
        let b1 = hankel_block(&ts, 2, &part, 1).unwrap();
        assert_eq!(b0.u_p, faer::mat![[1.0, 2.0], [2.0, 3.0]]);
        assert_eq!(b1.u_f, faer::mat![[5.0, 6.0], [6.0, 7.0]]);
        assert!(matches!(
            hankel_block(&ts, 2, &part, 2),
            Err(FrsidError::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn partition_widths() {
        let part = BlockPartition::new(10, 3).unwrap();
        let widths: Vec<usize> = part.ranges().map(|r| r.len()).collect();
        assert_eq!(widths, vec![3, 3, 4]);
        assert!(BlockPartition::new(10, 0).is_err());
    }

    #[test]
    fn h_columns_matches_stack() {
        let ts = random_ts(2, 2, 60, 2);
        let k = 5;
        let full = build_hankel(&ts, k).unwrap().h();
        let mut buf = Matrix::zeros(0, 0);
        h_columns(&ts, k, 7..19, &mut buf);
        assert_eq!(buf, full.as_ref().subcols(7, 12).to_owned());
    }

    #[test]
    fn csv_parse_example() {
        let ts = read_csv("u1,y1\n1,2\n3,4".as_bytes(), "mem").unwrap();
        assert_eq!(ts.n_t(), 2);
        assert_eq!(ts.u(), faer::mat![[1.0, 3.0]].as_ref());
        assert_eq!(ts.y(), faer::mat![[2.0, 4.0]].as_ref());
    }

    #[test]
    fn csv_errors_carry_line() {
        let err = read_csv("u1,y1\n1,2\n3,x".as_bytes(), "mem").unwrap_err();
        match err {
            FrsidError::Parse { location, .. } => assert_eq!(location, "mem:3"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_csv("u1,z1\n1,2".as_bytes(), "mem").is_err());
        assert!(read_csv("y1,u1\n1,2".as_bytes(), "mem").is_err());
    }

    #[test]
    fn binary_example_and_truncation() {
        let u = faer::mat![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let y = faer::mat![[7.0, 8.0, 9.0]];
        let ts = TimeSeriesData::new(u, y).unwrap();
        let mut bytes = Vec::new();
        write_binary(&ts, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 30 + 9 * 8);
        assert_eq!(read_binary(bytes.as_slice(), "mem").unwrap(), ts);
        bytes.truncate(bytes.len() - 3);
        let err = read_binary(bytes.as_slice(), "mem").unwrap_err().to_string();
        assert!(err.contains("expected 102 bytes") && err.contains("found 99"), "{err}");
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ts = random_ts(2, 3, 50, 3);
        for (name, fmt) in [("a.csv", DataFormat::Csv), ("a.bin", DataFormat::Binary)] {
            let path = dir.path().join(name);
            assert_eq!(DataFormat::from_path(&path), fmt);
            save_timeseries(&ts, &path, fmt).unwrap();
            assert_eq!(load_timeseries(&path, fmt).unwrap(), ts);
        }
    }

    proptest! {
        #[test]
        fn blocks_concatenate_to_full(
            m in 1usize..3, p in 1usize..3, k in 1usize..5, extra in 0usize..40, d in 1usize..6, seed in 0u64..1000
        ) {
            let n_t = 2 * k + d + extra;
            let ts = random_ts(m, p, n_t, seed);
            let full = build_hankel(&ts, k).unwrap();
            let part = BlockPartition::new(hankel_cols(n_t, k).unwrap(), d).unwrap();
            let mut start = 0;
            for i in 0..d {
                let b = hankel_block(&ts, k, &part, i).unwrap();
                let w = b.u_p.ncols();
                prop_assert_eq!(&b.u_p, &full.u_p.as_ref().subcols(start, w).to_owned());
                prop_assert_eq!(&b.u_f, &full.u_f.as_ref().subcols(start, w).to_owned());
                prop_assert_eq!(&b.y_p, &full.y_p.as_ref().subcols(start, w).to_owned());
                prop_assert_eq!(&b.y_f, &full.y_f.as_ref().subcols(start, w).to_owned());
                start += w;
            }
            prop_assert_eq!(start, full.n_cols());
        }

        #[test]
        fn csv_round_trip_exact(vals in proptest::collection::vec(-1e6f64..1e6, 3..60)) {
            let n_t = vals.len() / 3;
            let u = Matrix::from_fn(1, n_t, |_, t| vals[3 * t]);
            let y = Matrix::from_fn(2, n_t, |i, t| vals[3 * t + 1 + i]);
            let ts = TimeSeriesData::new(u, y).unwrap();
            let mut buf = Vec::new();
            write_csv(&ts, &mut buf).unwrap();
            prop_assert_eq!(read_csv(buf.as_slice(), "mem").unwrap(), ts);
        }
    }
}
