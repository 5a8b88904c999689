//! FR2SID: subspace identification on the compressed data matrix.
//!
//! The stages are exposed individually so the conventional pipeline in
//! [`crate::baseline`] can run the same estimators on uncompressed factors.

use std::path::Path;

use faer::MatRef;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::datamodel::TimeSeriesData;
use crate::error::{FrsidError, Result, StageExt};
use crate::matops::{
    condition_number, ensure_finite, inverse, lq, numerical_rank, pinv, singular_values, spectral_radius,
    svd_econ, sym_psd_power, Matrix, PINV_REL_TOL,
};
use crate::sketch::{sketch_stream, IoCounters, SketchConfig};

pub const DEFAULT_ORDER_TOL: f64 = 1e-8;
/// Above this condition number a matrix that must be inverted is rejected.
pub const MAX_COND: f64 = 1e12;
/// `ω̂` is treated as singular below this `σ_min / σ_max`.
pub const NOISE_DEGENERATE_RATIO: f64 = 1e-12;

pub const MODEL_VERSION: &str = "frsid-model-1";

/// Lower-triangular factor of the data matrix, partitioned by the row
/// blocks `[U_f; W_p; Y_f]`.
#[derive(Clone, Debug)]
pub struct LqFactors {
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub l: Matrix,
    pub q: Option<Matrix>,
}

impl LqFactors {
    /// Wraps an existing `2k(m+p)` square lower-triangular factor.
    pub fn from_l(l: Matrix, k: usize, m: usize, p: usize) -> Result<Self> {
        let r = 2 * k * (m + p);
        if l.nrows() != r || l.ncols() != r {
            return Err(FrsidError::Dimension(format!(
                "L factor is {}x{}, expected {r}x{r}",
                l.nrows(),
                l.ncols()
            )));
        }
        Ok(Self { k, m, p, l, q: None })
    }

    fn bounds(&self) -> [(usize, usize); 3] {
        let (k, m, p) = (self.k, self.m, self.p);
        [(0, k * m), (k * m, k * (m + p)), (2 * k * m + k * p, k * p)]
    }

    fn block(&self, bi: usize, bj: usize) -> MatRef<'_, f64> {
        let b = self.bounds();
        self.l.as_ref().submatrix(b[bi].0, b[bj].0, b[bi].1, b[bj].1)
    }

    pub fn r11(&self) -> MatRef<'_, f64> {
        self.block(0, 0)
    }
    pub fn r21(&self) -> MatRef<'_, f64> {
        self.block(1, 0)
    }
    pub fn r22(&self) -> MatRef<'_, f64> {
        self.block(1, 1)
    }
    pub fn r31(&self) -> MatRef<'_, f64> {
        self.block(2, 0)
    }
    pub fn r32(&self) -> MatRef<'_, f64> {
        self.block(2, 1)
    }
    pub fn r33(&self) -> MatRef<'_, f64> {
        self.block(2, 2)
    }
}

/// LQ factorization of the compressed data `H̄` (rows `[Ū_f; W̄_p; Ȳ_f]`).
pub fn project_lq(h_bar: MatRef<'_, f64>, k: usize, m: usize, p: usize, keep_q: bool) -> Result<LqFactors> {
    let r = 2 * k * (m + p);
    if h_bar.nrows() != r {
        return Err(FrsidError::Dimension(format!("H̄ has {} rows, expected {r}", h_bar.nrows())));
    }
    if h_bar.ncols() < r {
        return Err(FrsidError::Config(format!(
            "H̄ has {} columns; at least {r} are needed for a square L factor",
            h_bar.ncols()
        )));
    }
    let f = lq(h_bar, keep_q)?;
    Ok(LqFactors { k, m, p, l: f.l, q: f.q })
}

/// Oblique projection of the future outputs along the future inputs.
#[derive(Clone, Debug)]
pub struct ProjectionResult {
    /// `L̄_p = R̄₃₂ R̄₂₂†`.
    pub l_p: Matrix,
    /// `ζ̄` (or any matrix with the same column space and singular values).
    pub zeta: Matrix,
    /// Triangular factor of the reduced QR of `ζ̄ᵀ`.
    pub r_zeta: Matrix,
    pub singular_values: Vec<f64>,
    /// Right singular vectors of `R_ζ`, i.e. left singular vectors of `ζ̄`.
    pub v: Matrix,
}

/// `L̄_p = R̄₃₂ R̄₂₂†` and `ζ̄ = L̄_p W̄_p`.
pub fn oblique_projection(lq: &LqFactors, w_p: MatRef<'_, f64>) -> Result<(Matrix, Matrix)> {
    let l_p = lq.r32() * pinv(lq.r22(), PINV_REL_TOL)?;
    let zeta = &l_p * w_p;
    Ok((l_p, zeta))
}

/// Reduced QR of `ζ̄ᵀ` (Q discarded) followed by the SVD of the small factor.
pub fn reduce_and_svd(l_p: Matrix, zeta: Matrix) -> Result<ProjectionResult> {
    let kp = zeta.nrows();
    let f = lq(zeta.as_ref(), false)?;
    let mut r_zeta = Matrix::zeros(kp, kp);
    let w = f.l.ncols();
    r_zeta.as_mut().subrows_mut(0, w).copy_from(f.l.transpose());
    let svd = svd_econ(r_zeta.as_ref())?;
    Ok(ProjectionResult { l_p, zeta, r_zeta, singular_values: svd.s, v: svd.v })
}

/// Largest elementwise gap between `σ(R_ζ)` and a direct SVD of `ζ̄`,
/// relative to `σ_1`.
pub fn lemma8_residual(pr: &ProjectionResult) -> Result<f64> {
    let direct = singular_values(pr.zeta.as_ref())?;
    let s1 = direct.first().copied().unwrap_or(0.0).max(pr.singular_values.first().copied().unwrap_or(0.0));
    if s1 == 0.0 {
        return Ok(0.0);
    }
    let worst = pr
        .singular_values
        .iter()
        .zip(direct.iter().chain(std::iter::repeat(&0.0)))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(worst / s1)
}

/// Rule for choosing the model order from the singular values of `ζ̄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderRule {
    /// Count singular values at or above `tol · σ_1`.
    Threshold(f64),
    /// Position of the largest ratio `σ_i / σ_{i+1}`.
    Gap,
    Fixed(usize),
}

impl Default for OrderRule {
    fn default() -> Self {
        OrderRule::Threshold(DEFAULT_ORDER_TOL)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub n: usize,
    /// Count before the largest singular value gap (`None` with fewer than
    /// two positive singular values).
    pub gap_index: Option<usize>,
}

pub fn largest_gap(s: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..s.len().saturating_sub(1) {
        if s[i] <= 0.0 {
            break;
        }
        let ratio = if s[i + 1] > 0.0 { s[i] / s[i + 1] } else { f64::INFINITY };
        if best.is_none_or(|(_, b)| ratio > b) {
            best = Some((i + 1, ratio));
        }
        if ratio.is_infinite() {
            break;
        }
    }
    best.map(|(i, _)| i)
}

pub fn estimate_order(s: &[f64], rule: OrderRule) -> Result<OrderEstimate> {
    let gap_index = largest_gap(s);
    let n = match rule {
        OrderRule::Fixed(n) => {
            if n > s.len() {
                return Err(FrsidError::Config(format!(
                    "requested order {n} exceeds kp = {}",
                    s.len()
                )));
            }
            n
        }
        OrderRule::Threshold(tol) => numerical_rank(s, tol),
        OrderRule::Gap => gap_index.unwrap_or(0),
    };
    Ok(OrderEstimate { n, gap_index })
}

/// `Θ̂_k = V₁ Σ₁^{1/2}`.
pub fn estimate_theta(pr: &ProjectionResult, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(FrsidError::EmptyModel);
    }
    let positive = pr.singular_values.iter().filter(|&&s| s > 0.0).count();
    if n > positive {
        return Err(FrsidError::Config(format!(
            "order {n} exceeds the {positive} positive singular values"
        )));
    }
    let kp = pr.v.nrows();
    Ok(Matrix::from_fn(kp, n, |i, j| pr.v[(i, j)] * pr.singular_values[j].sqrt()))
}

/// `Θ↓` (first `(k-1)p` rows) and `Θ↑` (last `(k-1)p` rows).
fn shifted(theta: MatRef<'_, f64>, p: usize) -> Result<(MatRef<'_, f64>, MatRef<'_, f64>)> {
    let kp = theta.nrows();
    if p == 0 || kp % p != 0 || kp / p < 2 {
        return Err(FrsidError::Config(format!(
            "shift invariance needs at least two block rows (rows {kp}, p = {p})"
        )));
    }
    Ok((theta.subrows(0, kp - p), theta.subrows(p, kp - p)))
}

/// Pseudo-inverse of `Θ↓`, rejecting rank-deficient cases.
pub fn theta_down_pinv(theta: MatRef<'_, f64>, p: usize) -> Result<(Matrix, f64)> {
    let (down, _) = shifted(theta, p)?;
    let cond = condition_number(down)?;
    if !cond.is_finite() || cond > MAX_COND {
        return Err(FrsidError::IllConditioned { what: "shifted observability matrix", cond });
    }
    Ok((pinv(down, PINV_REL_TOL)?, cond))
}

/// `Â = (Θ↓)† Θ↑`, `Ĉ = Θ(1:p, :)`.
pub fn estimate_ac(theta: MatRef<'_, f64>, p: usize) -> Result<(Matrix, Matrix)> {
    let (down_pinv, _) = theta_down_pinv(theta, p)?;
    let (_, up) = shifted(theta, p)?;
    Ok((&down_pinv * up, theta.subrows(0, p).to_owned()))
}

/// `Ψ̂_k = (R̄₃₁ − R̄₃₂ R̄₂₂† R̄₂₁) R̄₁₁⁻¹`.
pub fn estimate_psi(lq: &LqFactors) -> Result<Matrix> {
    let cond = condition_number(lq.r11())?;
    if !cond.is_finite() || cond > MAX_COND {
        return Err(FrsidError::Excitation { cond });
    }
    let r11_inv = inverse(lq.r11(), "R11")?;
    let l_p = lq.r32() * pinv(lq.r22(), PINV_REL_TOL)?;
    let inner = lq.r31() - &l_p * lq.r21();
    Ok(inner * r11_inv)
}

/// `D̂ = M̂(1:p, :)` and `B̂ = (Θ↓)† M̂↑` with `M̂ = Ψ̂_k(:, 1:m)`.
pub fn estimate_bd(psi: MatRef<'_, f64>, theta: MatRef<'_, f64>, m: usize, p: usize) -> Result<(Matrix, Matrix)> {
    if psi.nrows() != theta.nrows() || psi.ncols() < m {
        return Err(FrsidError::Dimension(format!(
            "Ψ̂ is {}x{}, Θ̂ has {} rows, m = {m}",
            psi.nrows(),
            psi.ncols(),
            theta.nrows()
        )));
    }
    let (down_pinv, _) = theta_down_pinv(theta, p)?;
    let mhat = psi.subcols(0, m);
    let kp = psi.nrows();
    let b = &down_pinv * mhat.subrows(p, kp - p);
    let d = mhat.subrows(0, p).to_owned();
    Ok((b, d))
}

/// `K̂ = (Θ↓)† P̂↑ ω̂⁻¹` and `η̂ = (ω̂ ω̂ᵀ)^{1/(2q+1)}`, `P̂ = τ R̄₃₃(:, 1:p)`.
pub fn estimate_k(lq: &LqFactors, theta: MatRef<'_, f64>, tau: f64, q: u8) -> Result<(Matrix, Matrix)> {
    let p = lq.p;
    let kp = lq.k * p;
    let p_hat = lq.r33().subcols(0, p) * faer::Scale(tau);
    let omega = p_hat.as_ref().subrows(0, p);
    let s = singular_values(omega)?;
    let (smax, smin) = (s.first().copied().unwrap_or(0.0), s.last().copied().unwrap_or(0.0));
    if smax == 0.0 || smin < NOISE_DEGENERATE_RATIO * smax {
        return Err(FrsidError::NoiseDegenerate { ratio: if smax == 0.0 { 0.0 } else { smin / smax } });
    }
    let (down_pinv, _) = theta_down_pinv(theta, p)?;
    let omega_inv = inverse(omega, "innovation factor")?;
    let k_hat = &down_pinv * p_hat.as_ref().subrows(p, kp - p) * &omega_inv;
    let oo = omega * omega.transpose();
    let eta = if q == 0 {
        Matrix::from_fn(p, p, |i, j| 0.5 * (oo[(i, j)] + oo[(j, i)]))
    } else {
        sym_psd_power(oo.as_ref(), 1.0 / (2.0 * q as f64 + 1.0))?
    };
    Ok((k_hat, eta))
}

/// Innovation-form state-space model.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub k: Matrix,
    pub eta: Matrix,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, k: Matrix, eta: Matrix) -> Result<Self> {
        let n = a.nrows();
        let (m, p) = (b.ncols(), c.nrows());
        let shapes = [
            ("A", &a, n, n),
            ("B", &b, n, m),
            ("C", &c, p, n),
            ("D", &d, p, m),
            ("K", &k, n, p),
            ("eta", &eta, p, p),
        ];
        for (name, mat, r, cc) in shapes {
            if mat.nrows() != r || mat.ncols() != cc {
                return Err(FrsidError::Dimension(format!(
                    "{name} is {}x{}, expected {r}x{cc}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            ensure_finite(mat.as_ref(), name)?;
        }
        Ok(Self { a, b, c, d, k, eta })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        crate::matops::eigenvalues(self.a.as_ref())
    }

    /// Spectral radius of the predictor matrix `A − K C`.
    pub fn predictor_radius(&self) -> Result<f64> {
        spectral_radius((&self.a - &self.k * &self.c).as_ref())
    }

    /// Markov parameters `D, CB, CAB, ...` up to index `horizon`.
    pub fn markov(&self, horizon: usize) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(self.d.clone());
        let mut ab = self.b.clone();
        for _ in 0..horizon {
            out.push(&self.c * &ab);
            ab = &self.a * &ab;
        }
        out
    }

    /// Same model in the state basis `x' = T⁻¹ x`.
    pub fn similarity(&self, t: MatRef<'_, f64>) -> Result<Self> {
        let t_inv = inverse(t, "similarity transform")?;
        Ok(Self {
            a: &t_inv * &self.a * t,
            b: &t_inv * &self.b,
            c: &self.c * t,
            d: self.d.clone(),
            k: &t_inv * &self.k,
            eta: self.eta.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: ModelJson = serde_json::from_str(text)?;
        j.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| FrsidError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FrsidError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    version: String,
    n: usize,
    m: usize,
    p: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
}

pub(crate) fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], r: usize, c: usize, name: &str) -> Result<Matrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(FrsidError::parse("model", format!("{name} must be {r}x{c}")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl From<&StateSpaceModel> for ModelJson {
    fn from(s: &StateSpaceModel) -> Self {
        ModelJson {
            version: MODEL_VERSION.to_string(),
            n: s.n(),
            m: s.m(),
            p: s.p(),
            a: rows_of(&s.a),
            b: rows_of(&s.b),
            c: rows_of(&s.c),
            d: rows_of(&s.d),
            k: rows_of(&s.k),
            eta: rows_of(&s.eta),
        }
    }
}

impl ModelJson {
    fn into_model(self) -> Result<StateSpaceModel> {
        if self.version != MODEL_VERSION {
            return Err(FrsidError::parse(
                "model",
                format!("unsupported version `{}`, expected {MODEL_VERSION}", self.version),
            ));
        }
        let (n, m, p) = (self.n, self.m, self.p);
        StateSpaceModel::new(
            from_rows(&self.a, n, n, "a")?,
            from_rows(&self.b, n, m, "b")?,
            from_rows(&self.c, p, n, "c")?,
            from_rows(&self.d, p, m, "d")?,
            from_rows(&self.k, n, p, "k")?,
            from_rows(&self.eta, p, p, "eta")?,
        )
    }
}

/// Numerical diagnostics gathered along the pipeline.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub singular_values: Vec<f64>,
    pub order: usize,
    pub gap_index: Option<usize>,
    /// Singular values of `R_ζ` vs `ζ̄`, relative to `σ_1`.
    pub lemma8_residual: f64,
    pub cond_r11: f64,
    pub cond_theta_down: f64,
    pub predictor_radius: f64,
    pub n_cols: usize,
    pub n_c: usize,
    pub io: IoCounters,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Identification {
    pub model: StateSpaceModel,
    pub diagnostics: Diagnostics,
}

/// Everything after the data factorization, shared by both pipelines.
pub(crate) fn estimate_from_factors(
    lq: &LqFactors,
    zeta: Matrix,
    l_p: Matrix,
    tau: f64,
    q: u8,
    rule: OrderRule,
    diag: &mut Diagnostics,
) -> Result<StateSpaceModel> {
    let (m, p) = (lq.m, lq.p);
    let pr = reduce_and_svd(l_p, zeta).stage("reduce_and_svd")?;
    diag.lemma8_residual = lemma8_residual(&pr).stage("reduce_and_svd")?;
    diag.singular_values = pr.singular_values.clone();
    let ord = estimate_order(&pr.singular_values, rule).stage("estimate_order")?;
    diag.order = ord.n;
    diag.gap_index = ord.gap_index;
    let theta = estimate_theta(&pr, ord.n).stage("estimate_theta")?;
    let (a, c) = estimate_ac(theta.as_ref(), p).stage("estimate_ac")?;
    diag.cond_theta_down = theta_down_pinv(theta.as_ref(), p).stage("estimate_ac")?.1;
    diag.cond_r11 = condition_number(lq.r11()).stage("estimate_psi")?;
    let psi = estimate_psi(lq).stage("estimate_psi")?;
    let (b, d) = estimate_bd(psi.as_ref(), theta.as_ref(), m, p).stage("estimate_bd")?;
    let n = ord.n;
    let (k, eta) = match estimate_k(lq, theta.as_ref(), tau, q) {
        Ok(v) => v,
        Err(FrsidError::NoiseDegenerate { ratio }) => {
            diag.warnings.push(format!(
                "innovation factor is numerically singular (ratio {ratio:.2e}); K and eta set to zero"
            ));
            (Matrix::zeros(n, p), Matrix::zeros(p, p))
        }
        Err(e) => return Err(e).stage("estimate_k"),
    };
    let model = StateSpaceModel::new(a, b, c, d, k, eta)?;
    diag.predictor_radius = model.predictor_radius().stage("estimate_k")?;
    if diag.predictor_radius >= 1.0 {
        diag.warnings.push(format!(
            "A - KC has spectral radius {:.4} >= 1; the predictor is unstable",
            diag.predictor_radius
        ));
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fr2sidConfig {
    pub sketch: SketchConfig,
    #[serde(default)]
    pub order: OrderRule,
}

impl Fr2sidConfig {
    pub fn new(sketch: SketchConfig) -> Self {
        Self { sketch, order: OrderRule::default() }
    }

    pub fn with_order(mut self, order: OrderRule) -> Self {
        self.order = order;
        self
    }
}

pub fn run_fr2sid(ts: &TimeSeriesData, cfg: &Fr2sidConfig) -> Result<Identification> {
    let sk = sketch_stream(ts, &cfg.sketch).stage("sketch_stream")?;
    let (k, m, p) = (cfg.sketch.k, ts.m(), ts.p());
    let lqf = project_lq(sk.h_bar.as_ref(), k, m, p, false).stage("project_lq")?;
    let (l_p, zeta) = oblique_projection(&lqf, sk.w_p()).stage("oblique_projection")?;
    let mut diag = Diagnostics { n_cols: sk.n, n_c: sk.n_c(), io: sk.io, ..Default::default() };
    let model = estimate_from_factors(&lqf, zeta, l_p, sk.tau(), cfg.sketch.q, cfg.order, &mut diag)?;
    Ok(Identification { model, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{frobenius, rel_diff, vstack};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    /// Stable random `(A, B, C, D)` with spectral radius 0.8.
    fn random_system(n: usize, m: usize, p: usize, seed: u64) -> (Matrix, Matrix, Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a0 = randn(n, n, &mut rng);
        let rho = spectral_radius(a0.as_ref()).unwrap();
        let a = a0 * faer::Scale(0.8 / rho);
        (a, randn(n, m, &mut rng), randn(p, n, &mut rng), randn(p, m, &mut rng))
    }

    fn observability(a: &Matrix, c: &Matrix, k: usize) -> Matrix {
        let mut blocks = Vec::new();
        let mut ca = c.clone();
        for _ in 0..k {
            blocks.push(ca.clone());
            ca = &ca * a;
        }
        vstack(&blocks.iter().map(|b| b.as_ref()).collect::<Vec<_>>())
    }

    #[test]
    fn lq_factors_of_triangular_input() {
        // Lower-triangular input with positive diagonal is its own L.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = 8;
        let h = Matrix::from_fn(r, r, |i, j| if i > j { rng.sample(StandardNormal) } else if i == j { 1.0 + i as f64 } else { 0.0 });
        let f = project_lq(h.as_ref(), 1, 2, 2, true).unwrap();
        assert!(rel_diff(f.l.as_ref(), h.as_ref()) < 1e-14);
        assert!(rel_diff(f.q.unwrap().as_ref(), Matrix::identity(r, r).as_ref()) < 1e-14);
    }

    #[test]
    fn lq_blocks_have_expected_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (k, m, p) = (3, 2, 1);
        let h = randn(2 * k * (m + p), 40, &mut rng);
        let f = project_lq(h.as_ref(), k, m, p, true).unwrap();
        assert_eq!((f.r11().nrows(), f.r11().ncols()), (6, 6));
        assert_eq!((f.r21().nrows(), f.r21().ncols()), (9, 6));
        assert_eq!((f.r22().nrows(), f.r22().ncols()), (9, 9));
        assert_eq!((f.r32().nrows(), f.r32().ncols()), (3, 9));
        assert_eq!((f.r33().nrows(), f.r33().ncols()), (3, 3));
        assert!(rel_diff((&f.l * f.q.as_ref().unwrap()).as_ref(), h.as_ref()) < 1e-10);
    }

    #[test]
    fn zero_r32_gives_zero_zeta() {
        let mut l = Matrix::identity(12, 12);
        l[(11, 0)] = 0.5;
        let f = LqFactors::from_l(l, 1, 3, 3).unwrap();
        let w = Matrix::from_fn(6, 20, |i, j| (i + j) as f64);
        let (_, zeta) = oblique_projection(&f, w.as_ref()).unwrap();
        assert_eq!(frobenius(zeta.as_ref()), 0.0);
    }

    #[test]
    fn reduced_svd_matches_direct_and_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = randn(12, 4, &mut rng);
        let zeta = &theta * randn(4, 200, &mut rng);
        let pr = reduce_and_svd(Matrix::zeros(0, 0), zeta).unwrap();
        assert!(lemma8_residual(&pr).unwrap() < 1e-12);
        assert_eq!(numerical_rank(&pr.singular_values, 1e-8), 4);

        let z = reduce_and_svd(Matrix::zeros(0, 0), Matrix::zeros(6, 30)).unwrap();
        assert!(z.singular_values.iter().all(|&s| s == 0.0));
        assert_eq!(estimate_order(&z.singular_values, OrderRule::default()).unwrap().n, 0);
    }

    #[test]
    fn order_rules() {
        let s = [5.0, 4.0, 1e-13, 1e-14];
        assert_eq!(estimate_order(&s, OrderRule::default()).unwrap(), OrderEstimate { n: 2, gap_index: Some(2) });
        let long = vec![1.0; 40];
        assert_eq!(estimate_order(&long, OrderRule::Fixed(35)).unwrap().n, 35);
        assert!(estimate_order(&s, OrderRule::Fixed(5)).is_err());
        let decay: Vec<f64> = (0..10).map(|i| 0.5f64.powi(i) * if i >= 6 { 1e-3 } else { 1.0 }).collect();
        assert_eq!(largest_gap(&decay), Some(6));
        assert_eq!(estimate_order(&decay, OrderRule::Gap).unwrap().n, 6);
    }

    #[test]
    fn theta_gram_is_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let zeta = randn(10, 3, &mut rng) * randn(3, 50, &mut rng);
        let pr = reduce_and_svd(Matrix::zeros(0, 0), zeta).unwrap();
        let th = estimate_theta(&pr, 3).unwrap();
        let g = th.transpose() * &th;
        let sig = Matrix::from_fn(3, 3, |i, j| if i == j { pr.singular_values[i] } else { 0.0 });
        assert!(rel_diff(g.as_ref(), sig.as_ref()) < 1e-10);
        assert!(matches!(estimate_theta(&pr, 0), Err(FrsidError::EmptyModel)));
    }

    #[test]
    fn ac_from_exact_observability() {
        let (a, _, c, _) = random_system(3, 1, 2, 5);
        let theta = observability(&a, &c, 4);
        let (ah, ch) = estimate_ac(theta.as_ref(), 2).unwrap();
        assert!(rel_diff(ah.as_ref(), a.as_ref()) < 1e-10);
        assert!(rel_diff(ch.as_ref(), c.as_ref()) < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = randn(3, 3, &mut rng);
        let (at, _) = estimate_ac((&theta * &t).as_ref(), 2).unwrap();
        let expect = inverse(t.as_ref(), "T").unwrap() * &a * &t;
        assert!(rel_diff(at.as_ref(), expect.as_ref()) < 1e-9);
    }

    #[test]
    fn ac_scalar_case() {
        let theta = faer::mat![[2.0], [2.0 * 0.7]];
        let (a, c) = estimate_ac(theta.as_ref(), 1).unwrap();
        assert!((a[(0, 0)] - 0.7).abs() < 1e-15);
        assert_eq!(c[(0, 0)], 2.0);
        assert!(estimate_ac(faer::mat![[1.0]].as_ref(), 1).is_err());
    }

    #[test]
    fn rank_deficient_shift_rejected() {
        let theta = faer::mat![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        assert!(matches!(estimate_ac(theta.as_ref(), 1), Err(FrsidError::IllConditioned { .. })));
    }

    #[test]
    fn bd_from_exact_toeplitz_column() {
        let (n, m, p, k) = (3, 2, 2, 4);
        let (a, b, c, d) = random_system(n, m, p, 7);
        let theta = observability(&a, &c, k);
        let mut mhat = Matrix::zeros(k * p, m);
        mhat.as_mut().subrows_mut(0, p).copy_from(&d);
        mhat.as_mut().subrows_mut(p, (k - 1) * p).copy_from(observability(&a, &c, k - 1) * &b);
        let (bh, dh) = estimate_bd(mhat.as_ref(), theta.as_ref(), m, p).unwrap();
        assert!(rel_diff(bh.as_ref(), b.as_ref()) < 1e-10);
        assert!(rel_diff(dh.as_ref(), d.as_ref()) < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = randn(n, n, &mut rng);
        let (bt, _) = estimate_bd(mhat.as_ref(), (&theta * &t).as_ref(), m, p).unwrap();
        let expect = inverse(t.as_ref(), "T").unwrap() * &b;
        assert!(rel_diff(bt.as_ref(), expect.as_ref()) < 1e-9);
    }

    #[test]
    fn psi_rejects_singular_r11() {
        let mut l = Matrix::identity(8, 8);
        l[(0, 0)] = 0.0;
        let f = LqFactors::from_l(l, 1, 2, 2).unwrap();
        assert!(matches!(estimate_psi(&f), Err(FrsidError::Excitation { .. })));
    }

    #[test]
    fn k_degenerate_when_noise_free() {
        let mut l = Matrix::identity(8, 8);
        l[(6, 6)] = 0.0;
        l[(7, 7)] = 0.0;
        let f = LqFactors::from_l(l, 1, 2, 2).unwrap();
        let theta = Matrix::identity(2, 1);
        assert!(matches!(estimate_k(&f, theta.as_ref(), 1.0, 0), Err(FrsidError::NoiseDegenerate { .. })));
    }

    #[test]
    fn model_json_round_trip() {
        let (a, b, c, d) = random_system(3, 2, 1, 9);
        let model = StateSpaceModel::new(a, b, c, d, Matrix::zeros(3, 1), Matrix::identity(1, 1)).unwrap();
        let text = model.to_json().unwrap();
        assert!(text.contains("\"version\": \"frsid-model-1\""));
        assert_eq!(StateSpaceModel::from_json(&text).unwrap(), model);
        let bad = text.replace("frsid-model-1", "other");
        assert!(StateSpaceModel::from_json(&bad).is_err());
    }

    #[test]
    fn markov_invariant_under_similarity() {
        let (a, b, c, d) = random_system(4, 2, 2, 10);
        let model = StateSpaceModel::new(a, b, c, d, Matrix::zeros(4, 2), Matrix::zeros(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = randn(4, 4, &mut rng);
        let other = model.similarity(t.as_ref()).unwrap();
        for (g1, g2) in model.markov(8).iter().zip(other.markov(8)) {
            assert!(frobenius((g1 - &g2).as_ref()) < 1e-9 * (1.0 + frobenius(g1.as_ref())));
        }
    }
}
