//! Conventional subspace identification on the uncompressed Hankel data.
//!
//! The factorization is a sequential QR of `Hᵀ` over column panels of `H`;
//! everything downstream reuses the estimators of [`crate::identify`], so the
//! only difference to FR2SID is the missing compression.

use serde::{Deserialize, Serialize};

use crate::datamodel::{h_columns, hankel_cols, BlockPartition, TimeSeriesData};
use crate::error::{FrsidError, Result, StageExt};
use crate::identify::{estimate_from_factors, Diagnostics, Identification, LqFactors, OrderRule};
use crate::matops::{hstack, pinv, spectral_radius, Matrix, SequentialQr, PINV_REL_TOL};

pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BdMethod {
    #[default]
    Structural,
    FullRegression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub k: usize,
    /// Number of column panels for the sequential QR.
    pub panel: usize,
    #[serde(default)]
    pub order: OrderRule,
    #[serde(default)]
    pub bd_method: BdMethod,
    pub memory_cap_bytes: u64,
}

impl BaselineConfig {
    pub fn new(k: usize) -> Self {
        Self { k, panel: 1, order: OrderRule::default(), bd_method: BdMethod::Structural, memory_cap_bytes: DEFAULT_MEMORY_CAP }
    }
}

/// Bytes the in-memory conventional pipeline needs for `H`, `W_p` and `ζ`.
pub fn footprint_bytes(k: usize, m: usize, p: usize, n: usize) -> u64 {
    let rows = 2 * k * (m + p) + k * (m + p) + k * p;
    8 * rows as u64 * n as u64
}

pub fn run_conventional(ts: &TimeSeriesData, cfg: &BaselineConfig) -> Result<Identification> {
    let (k, m, p) = (cfg.k, ts.m(), ts.p());
    let n = hankel_cols(ts.n_t(), k)?;
    let estimated_bytes = footprint_bytes(k, m, p, n);
    if estimated_bytes > cfg.memory_cap_bytes {
        return Err(FrsidError::MemoryCap { estimated_bytes, cap_bytes: cfg.memory_cap_bytes });
    }
    if cfg.panel == 0 {
        return Err(FrsidError::Config("panel count must be at least 1".into()));
    }
    let r = 2 * k * (m + p);
    if n < r {
        return Err(FrsidError::InsufficientData { needed: ts.n_t() + r - n, got: ts.n_t() });
    }

    let part = BlockPartition::new(n, cfg.panel.min(n))?;
    let mut sqr = SequentialQr::new(r);
    let mut block = Matrix::zeros(0, 0);
    for range in part.ranges() {
        h_columns(ts, k, range, &mut block);
        sqr.push(block.transpose()).stage("lq")?;
    }
    let l = sqr.finish().transpose().to_owned();
    let lq = LqFactors::from_l(l, k, m, p)?;

    // W_p = [R₂₁ R₂₂ 0] Qᵀ with orthonormal Q, so L_p [R₂₁ R₂₂] has the
    // same column space and singular values as ζ = L_p W_p.
    let l_p = lq.r32() * pinv(lq.r22(), PINV_REL_TOL).stage("oblique_projection")?;
    let zeta = &l_p * hstack(&[lq.r21(), lq.r22()]);

    let mut diag = Diagnostics { n_cols: n, n_c: n, ..Default::default() };
    let tau = 1.0 / (n as f64).sqrt();
    let mut model = estimate_from_factors(&lq, zeta, l_p, tau, 0, cfg.order, &mut diag)?;
    if cfg.bd_method == BdMethod::FullRegression {
        let reg = estimate_bd_regression(ts, &model.a, &model.c).stage("estimate_bd_regression")?;
        model.b = reg.b;
        model.d = reg.d;
    }
    Ok(Identification { model, diagnostics: diag })
}

#[derive(Clone, Debug)]
pub struct BdRegression {
    pub b: Matrix,
    pub d: Matrix,
    pub x0: Matrix,
    /// Floating-point operations spent building and factoring the regressors.
    pub flops: u64,
}

const REGRESSION_PANEL: usize = 512;

/// Output-error least squares for `(B, D, x₀)` with `(A, C)` fixed, over all
/// samples.
pub fn estimate_bd_regression(ts: &TimeSeriesData, a: &Matrix, c: &Matrix) -> Result<BdRegression> {
    let (n, m, p, n_t) = (a.nrows(), ts.m(), ts.p(), ts.n_t());
    if a.ncols() != n || c.nrows() != p || c.ncols() != n {
        return Err(FrsidError::Dimension(format!(
            "A is {}x{}, C is {}x{}, data has p = {p}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if n > 0 {
        let rho = spectral_radius(a.as_ref())?;
        if rho > 1.0 + 1e-9 {
            return Err(FrsidError::Unstable(format!(
                "A has spectral radius {rho:.4}; regressors would overflow, use the structural B/D method"
            )));
        }
    }
    let nb = n * m;
    let nd = p * m;
    let cols = nb + nd + n;
    if p * n_t < cols {
        return Err(FrsidError::InsufficientData { needed: cols.div_ceil(p), got: n_t });
    }
    // Z = [X | Aᵗ]: columns of X are the state responses to a unit entry of
    // B, the last n columns propagate the initial state.
    let mut z = Matrix::zeros(n, nb + n);
    for i in 0..n {
        z[(i, nb + i)] = 1.0;
    }
    let mut sqr = SequentialQr::new(cols + 1);
    let mut flops: u64 = 0;
    let mut t = 0;
    while t < n_t {
        let rows_t = REGRESSION_PANEL.min(n_t - t);
        let mut panel = Matrix::zeros(rows_t * p, cols + 1);
        for s in 0..rows_t {
            let tt = t + s;
            let cz = c * &z;
            for k in 0..p {
                let row = s * p + k;
                for j in 0..nb {
                    panel[(row, j)] = cz[(k, j)];
                }
                for j in 0..m {
                    panel[(row, nb + j * p + k)] = ts.u()[(j, tt)];
                }
                for j in 0..n {
                    panel[(row, nb + nd + j)] = cz[(k, nb + j)];
                }
                panel[(row, cols)] = ts.y()[(k, tt)];
            }
            let mut next = a * &z;
            for j in 0..m {
                let uj = ts.u()[(j, tt)];
                for i in 0..n {
                    next[(i, j * n + i)] += uj;
                }
            }
            z = next;
            flops += 2 * (p * n * (nb + n) + n * n * (nb + n)) as u64;
        }
        if !(z.norm_max() < 1e150) {
            return Err(FrsidError::Unstable("regressor simulation overflowed".into()));
        }
        sqr.push(panel.as_ref())?;
        flops += 2 * (rows_t * p) as u64 * ((cols + 1) * (cols + 1)) as u64;
        t += rows_t;
    }
    let r = sqr.finish();
    let theta = back_substitute(&r, cols)?;
    let b = Matrix::from_fn(n, m, |i, j| theta[j * n + i]);
    let d = Matrix::from_fn(p, m, |k, j| theta[nb + j * p + k]);
    let x0 = Matrix::from_fn(n, 1, |i, _| theta[nb + nd + i]);
    Ok(BdRegression { b, d, x0, flops })
}

/// Solves `R[..c, ..c] θ = R[..c, c]` for the augmented triangular factor.
fn back_substitute(r: &Matrix, c: usize) -> Result<Vec<f64>> {
    let dmax = (0..c).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let dmin = (0..c).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if c > 0 && !(dmin > 1e-13 * dmax) {
        return Err(FrsidError::IllConditioned { what: "B/D regressor matrix", cond: dmax / dmin });
    }
    let mut x = vec![0.0; c];
    for i in (0..c).rev() {
        let mut s = r[(i, c)];
        for j in i + 1..c {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}
