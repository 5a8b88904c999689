//! Dense linear-algebra kernels shared by the identification pipeline.
//!
//! Storage is column-major [`faer::Mat<f64>`]. Factorizations are delegated to
//! faer; this module fixes the conventions the rest of the crate relies on:
//! nonnegative triangular diagonals, economy shapes, and explicit
//! truncation tolerances for pseudo-inverses and ranks.

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::error::{FrsidError, Result};

pub type Matrix = Mat<f64>;

/// Default relative truncation for [`pinv`].
pub const PINV_REL_TOL: f64 = 1e-12;

/// LQ factorization `M = L * Q` with `Q` having orthonormal rows.
#[derive(Clone, Debug)]
pub struct LqResult {
    pub l: Matrix,
    pub q: Option<Matrix>,
}

/// Economy SVD `M = U * diag(S) * V^T`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub fn ensure_finite(m: MatRef<'_, f64>, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(FrsidError::InvalidInput(format!(
                    "{what} has a non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.norm_l2()
}

/// `||a - b||_F / ||b||_F`, or the absolute difference when `b` is zero.
pub fn rel_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let diff = frobenius((a - b).as_ref());
    let nb = frobenius(b);
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}

/// Economy LQ factorization with a nonnegative diagonal in `L`.
///
/// For an `r x c` input, `L` is `r x min(r, c)` and `Q` is `min(r, c) x c`.
pub fn lq(m: MatRef<'_, f64>, keep_q: bool) -> Result<LqResult> {
    ensure_finite(m, "LQ input")?;
    let (rows, cols) = (m.nrows(), m.ncols());
    let k = rows.min(cols);
    if k == 0 {
        return Ok(LqResult {
            l: Matrix::zeros(rows, k),
            q: keep_q.then(|| Matrix::zeros(k, cols)),
        });
    }
    let qr = m.transpose().qr();
    let mut l = qr.thin_R().transpose().to_owned();
    let mut q = keep_q.then(|| qr.compute_thin_Q().transpose().to_owned());
    for j in 0..k {
        if l[(j, j)] < 0.0 {
            for i in 0..rows {
                l[(i, j)] = -l[(i, j)];
            }
            if let Some(q) = q.as_mut() {
                for c in 0..cols {
                    q[(j, c)] = -q[(j, c)];
                }
            }
        }
        // faer leaves exact zeros above the diagonal of R; keep that guarantee
        // explicit since downstream block extraction depends on it.
        for i in 0..j.min(rows) {
            l[(i, j)] = 0.0;
        }
    }
    Ok(LqResult { l, q })
}

/// Streaming ("sequential") QR of a tall matrix presented as row panels.
///
/// Each call to [`SequentialQr::push`] folds a panel into the running
/// triangular factor by factoring `[R; panel]`. Only the `R` factor is kept,
/// so memory is bounded by one panel plus an `ncols x ncols` triangle.
#[derive(Clone, Debug)]
pub struct SequentialQr {
    ncols: usize,
    r: Matrix,
    rows_seen: usize,
}

impl SequentialQr {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, r: Matrix::zeros(0, ncols), rows_seen: 0 }
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn push(&mut self, panel: MatRef<'_, f64>) -> Result<()> {
        if panel.ncols() != self.ncols {
            return Err(FrsidError::Dimension(format!(
                "panel has {} columns, expected {}",
                panel.ncols(),
                self.ncols
            )));
        }
        if panel.nrows() == 0 {
            return Ok(());
        }
        ensure_finite(panel, "QR panel")?;
        let top = self.r.nrows();
        let mut stacked = Matrix::zeros(top + panel.nrows(), self.ncols);
        stacked.as_mut().subrows_mut(0, top).copy_from(&self.r);
        stacked.as_mut().subrows_mut(top, panel.nrows()).copy_from(panel);
        self.r = stacked.qr().thin_R().to_owned();
        self.rows_seen += panel.nrows();
        Ok(())
    }

    /// Upper-triangular `ncols x ncols` factor with nonnegative diagonal.
    pub fn finish(self) -> Matrix {
        let n = self.ncols;
        let mut r = Matrix::zeros(n, n);
        let have = self.r.nrows();
        r.as_mut().subrows_mut(0, have).copy_from(&self.r);
        for i in 0..n {
            for j in 0..i {
                r[(i, j)] = 0.0;
            }
            if r[(i, i)] < 0.0 {
                for j in i..n {
                    r[(i, j)] = -r[(i, j)];
                }
            }
        }
        r
    }
}

/// Economy SVD with singular values sorted nonincreasing.
pub fn svd_econ(m: MatRef<'_, f64>) -> Result<SvdResult> {
    ensure_finite(m, "SVD input")?;
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(m.nrows(), 0),
            s: Vec::new(),
            v: Matrix::zeros(m.ncols(), 0),
        });
    }
    let svd = m
        .thin_svd()
        .map_err(|e| FrsidError::InvalidInput(format!("SVD did not converge: {e:?}")))?;
    let s = (0..k).map(|i| svd.S()[i]).collect();
    Ok(SvdResult { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
}

/// Singular values only.
pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    ensure_finite(m, "SVD input")?;
    if m.nrows().min(m.ncols()) == 0 {
        return Ok(Vec::new());
    }
    m.singular_values()
        .map_err(|e| FrsidError::InvalidInput(format!("SVD did not converge: {e:?}")))
}

/// Moore-Penrose pseudo-inverse, discarding singular values below
/// `rel_tol * sigma_max`.
pub fn pinv(m: MatRef<'_, f64>, rel_tol: f64) -> Result<Matrix> {
    let svd = svd_econ(m)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let cut = rel_tol * smax;
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (idx, &s) in svd.s.iter().enumerate() {
        if s <= cut || s == 0.0 {
            break;
        }
        let inv = 1.0 / s;
        for j in 0..m.nrows() {
            let uj = svd.u[(j, idx)] * inv;
            if uj == 0.0 {
                continue;
            }
            for i in 0..m.ncols() {
                out[(i, j)] += svd.v[(i, idx)] * uj;
            }
        }
    }
    Ok(out)
}

/// 2-norm condition number `sigma_max / sigma_min` (infinite when singular).
pub fn condition_number(m: MatRef<'_, f64>) -> Result<f64> {
    let s = singular_values(m)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Lower Cholesky factor of the symmetric part of `m`.
pub fn cholesky_lower(m: MatRef<'_, f64>) -> Result<Matrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(FrsidError::Dimension(format!(
            "Cholesky needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    ensure_finite(m, "Cholesky input")?;
    let mut g = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= g[(j, k)] * g[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(FrsidError::NotPositiveDefinite { pivot: j + 1 });
        }
        let d = d.sqrt();
        g[(j, j)] = d;
        for i in j + 1..n {
            let mut s = 0.5 * (m[(i, j)] + m[(j, i)]);
            for k in 0..j {
                s -= g[(i, k)] * g[(j, k)];
            }
            g[(i, j)] = s / d;
        }
    }
    Ok(g)
}

/// Count of singular values `>= rel_tol * s[0]`; zero when `s[0] == 0`.
pub fn numerical_rank(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&s0) if s0 > 0.0 => s.iter().take_while(|&&v| v >= rel_tol * s0).count(),
        _ => 0,
    }
}

/// Inverse of a square matrix via partial-pivot LU; errors when singular.
pub fn inverse(m: MatRef<'_, f64>, what: &'static str) -> Result<Matrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(FrsidError::Dimension(format!("{what} is not square")));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let cond = condition_number(m)?;
    if !cond.is_finite() || cond > 1e14 {
        return Err(FrsidError::IllConditioned { what, cond });
    }
    let lu = m.partial_piv_lu();
    Ok(faer::linalg::solvers::DenseSolveCore::inverse(&lu))
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<Complex64>> {
    ensure_finite(m, "eigenvalue input")?;
    if m.nrows() != m.ncols() {
        return Err(FrsidError::Dimension("eigenvalues need a square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.eigenvalues()
        .map_err(|e| FrsidError::InvalidInput(format!("eigenvalue iteration failed: {e:?}")))
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(m: MatRef<'_, f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Real power of a symmetric positive semidefinite matrix via its
/// eigendecomposition; negative eigenvalues from rounding are clamped to 0.
pub fn sym_psd_power(m: MatRef<'_, f64>, power: f64) -> Result<Matrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(FrsidError::Dimension("matrix power needs a square matrix".into()));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let sym = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let evd = sym
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| FrsidError::InvalidInput(format!("symmetric eigensolver failed: {e:?}")))?;
    let u = evd.U();
    let s = evd.S();
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let lam = s[k].max(0.0);
        if lam == 0.0 {
            continue;
        }
        let w = lam.powf(power);
        for j in 0..n {
            let uj = u[(j, k)] * w;
            for i in 0..n {
                out[(i, j)] += u[(i, k)] * uj;
            }
        }
    }
    Ok(out)
}

/// Vertical concatenation of row blocks with equal column counts.
pub fn vstack(blocks: &[MatRef<'_, f64>]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column mismatch");
        out.as_mut().subrows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Horizontal concatenation of column blocks with equal row counts.
pub fn hstack(blocks: &[MatRef<'_, f64>]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row mismatch");
        out.as_mut().subcols_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn orthonormality_defect(q: MatRef<'_, f64>) -> f64 {
        let g = q * q.transpose();
        frobenius((&g - Matrix::identity(g.nrows(), g.ncols())).as_ref())
    }

    #[test]
    fn lq_identity() {
        let lq = lq(Matrix::identity(3, 3).as_ref(), true).unwrap();
        assert!(rel_diff(lq.l.as_ref(), Matrix::identity(3, 3).as_ref()) < 1e-15);
        assert!(rel_diff(lq.q.unwrap().as_ref(), Matrix::identity(3, 3).as_ref()) < 1e-15);
    }

    #[test]
    fn lq_single_row_norm() {
        let m = faer::mat![[3.0, 4.0], [0.0, 0.0]];
        let lq = lq(m.as_ref(), false).unwrap();
        assert!((lq.l[(0, 0)] - 5.0).abs() < 1e-14);
        assert!(lq.q.is_none());
    }

    #[test]
    fn lq_reconstructs_wide_random() {
        let m = randn(20, 500, 1);
        let f = lq(m.as_ref(), true).unwrap();
        let q = f.q.unwrap();
        assert!(rel_diff((&f.l * &q).as_ref(), m.as_ref()) <= 1e-12);
        assert!(orthonormality_defect(q.as_ref()) <= 1e-10);
        for i in 0..20 {
            assert!(f.l[(i, i)] >= 0.0);
            for j in i + 1..20 {
                assert_eq!(f.l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn lq_tall_input() {
        let m = randn(30, 7, 2);
        let f = lq(m.as_ref(), true).unwrap();
        assert_eq!((f.l.nrows(), f.l.ncols()), (30, 7));
        assert!(rel_diff((&f.l * f.q.as_ref().unwrap()).as_ref(), m.as_ref()) <= 1e-12);
    }

    #[test]
    fn lq_rejects_nan() {
        let mut m = Matrix::zeros(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(matches!(lq(m.as_ref(), false), Err(FrsidError::InvalidInput(_))));
    }

    #[test]
    fn sequential_qr_matches_monolithic() {
        let m = randn(1000, 12, 3);
        let mut seq = SequentialQr::new(12);
        for start in (0..1000).step_by(137) {
            let rows = 137.min(1000 - start);
            seq.push(m.as_ref().subrows(start, rows)).unwrap();
        }
        let r = seq.finish();
        let l = lq(m.transpose(), false).unwrap().l;
        assert!(rel_diff(r.transpose(), l.as_ref()) < 1e-12);
    }

    #[test]
    fn svd_diagonal_and_zero() {
        let m = faer::mat![[3.0, 0.0], [0.0, 1.0]];
        let s = svd_econ(m.as_ref()).unwrap().s;
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
        let z = svd_econ(Matrix::zeros(4, 4).as_ref()).unwrap().s;
        assert_eq!(z, vec![0.0; 4]);
    }

    #[test]
    fn svd_matches_gram_eigenvalues() {
        let m = randn(50, 50, 4);
        let svd = svd_econ(m.as_ref()).unwrap();
        // Oracle: eigenvalues of M^T M are the squared singular values.
        let gram = m.transpose() * &m;
        let mut eig: Vec<f64> = gram
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .unwrap()
            .into_iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // Tiny singular values lose relative accuracy through the Gram route.
        for (a, b) in svd.s.iter().zip(&eig).take(45) {
            assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
        }
        let us = &svd.u * faer::Mat::from_fn(50, 50, |i, j| if i == j { svd.s[i] } else { 0.0 });
        assert!(rel_diff((us * svd.v.transpose()).as_ref(), m.as_ref()) < 1e-10);
        assert!(orthonormality_defect(svd.u.transpose()) < 1e-10);
        assert!(orthonormality_defect(svd.v.transpose()) < 1e-10);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pinv_cases() {
        let i2 = Matrix::identity(2, 2);
        assert!(rel_diff(pinv(i2.as_ref(), PINV_REL_TOL).unwrap().as_ref(), i2.as_ref()) < 1e-15);
        let m = faer::mat![[2.0, 0.0], [0.0, 0.0]];
        let p = pinv(m.as_ref(), PINV_REL_TOL).unwrap();
        let expect = faer::mat![[0.5, 0.0], [0.0, 0.0]];
        assert!(rel_diff(p.as_ref(), expect.as_ref()) < 1e-15);
        let w = randn(10, 30, 5);
        let p = pinv(w.as_ref(), PINV_REL_TOL).unwrap();
        let id = &w * &p;
        assert!(frobenius((&id - Matrix::identity(10, 10)).as_ref()) < 1e-9);
    }

    #[test]
    fn pinv_penrose_conditions() {
        for seed in 0..5 {
            let a = randn(20, 7, 100 + seed);
            let x = pinv(a.as_ref(), PINV_REL_TOL).unwrap();
            let axa = &a * &x * &a;
            let xax = &x * &a * &x;
            let ax = &a * &x;
            let xa = &x * &a;
            assert!(frobenius((&axa - &a).as_ref()) < 1e-8);
            assert!(frobenius((&xax - &x).as_ref()) < 1e-8);
            assert!(frobenius((&ax - ax.transpose()).as_ref()) < 1e-8);
            assert!(frobenius((&xa - xa.transpose()).as_ref()) < 1e-8);
        }
    }

    #[test]
    fn cholesky_cases() {
        let i3 = Matrix::identity(3, 3);
        assert!(rel_diff(cholesky_lower(i3.as_ref()).unwrap().as_ref(), i3.as_ref()) < 1e-15);
        let m = faer::mat![[4.0, 2.0], [2.0, 2.0]];
        let g = cholesky_lower(m.as_ref()).unwrap();
        let expect = faer::mat![[2.0, 0.0], [1.0, 1.0]];
        assert!(rel_diff(g.as_ref(), expect.as_ref()) < 1e-15);
        let neg = -Matrix::identity(2, 2);
        assert!(matches!(
            cholesky_lower(neg.as_ref()),
            Err(FrsidError::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn cholesky_recovers_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 12;
        let g = Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => 0.5 + rng.random::<f64>(),
            std::cmp::Ordering::Greater => rng.sample(StandardNormal),
        });
        let m = &g * g.transpose();
        let back = cholesky_lower(m.as_ref()).unwrap();
        assert!(rel_diff(back.as_ref(), g.as_ref()) < 1e-10);
    }

    #[test]
    fn rank_thresholds() {
        assert_eq!(numerical_rank(&[10.0, 5.0, 1e-12], 1e-8), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-3), 0);
        assert_eq!(numerical_rank(&[], 1e-3), 0);
        let m = randn(8, 3, 11) * randn(3, 100, 12);
        let s = singular_values(m.as_ref()).unwrap();
        assert_eq!(numerical_rank(&s, 1e-8), 3);
    }

    #[test]
    fn psd_cube_root() {
        let a = randn(4, 4, 13);
        let spd = &a * a.transpose() + Matrix::identity(4, 4);
        let root = sym_psd_power(spd.as_ref(), 1.0 / 3.0).unwrap();
        let cube = &root * &root * &root;
        assert!(rel_diff(cube.as_ref(), spd.as_ref()) < 1e-12);
    }

    #[test]
    fn eigenvalues_of_rotation() {
        let m = faer::mat![[0.0, -1.0], [1.0, 0.0]];
        let mut ev = eigenvalues(m.as_ref()).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((spectral_radius(m.as_ref()).unwrap() - 1.0).abs() < 1e-14);
    }
}
