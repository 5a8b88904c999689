//! Model and subspace quality metrics.

use faer::MatRef;
use num_complex::Complex64;
use serde::{Deserialize, Serialize, Serializer};

use crate::datamodel::TimeSeriesData;
use crate::error::{FrsidError, Result};
use crate::identify::StateSpaceModel;
use crate::matops::{numerical_rank, svd_econ, Matrix};
use crate::simulate::simulate_deterministic;
use crate::sketch::IoCounters;

/// Rank cut used when extracting orthonormal bases for subspace distances.
pub const SUBSPACE_RANK_TOL: f64 = 1e-10;

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). `result[i]` is the column assigned to row `i`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[owner[j] - 1] = j - 1;
    }
    assign
}

/// `est` reordered so that `est[i]` is paired with `truth[i]`.
pub fn align_eigenvalues(truth: &[Complex64], est: &[Complex64]) -> Result<Vec<Complex64>> {
    if truth.len() != est.len() {
        return Err(FrsidError::Dimension(format!(
            "{} true eigenvalues vs {} estimated",
            truth.len(),
            est.len()
        )));
    }
    let cost: Vec<Vec<f64>> = truth.iter().map(|t| est.iter().map(|e| (t - e).norm()).collect()).collect();
    Ok(hungarian(&cost).into_iter().map(|j| est[j]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeeResult {
    pub value: f64,
    /// True eigenvalues equal to zero, left out of the sum.
    pub excluded_zero: usize,
}

pub fn nee_detailed(truth: &[Complex64], est: &[Complex64]) -> Result<NeeResult> {
    let aligned = align_eigenvalues(truth, est)?;
    let mut value = 0.0;
    let mut excluded_zero = 0;
    for (t, e) in truth.iter().zip(&aligned) {
        if t.norm() == 0.0 {
            excluded_zero += 1;
        } else {
            value += (t - e).norm_sqr() / t.norm_sqr();
        }
    }
    Ok(NeeResult { value, excluded_zero })
}

/// Normalized eigenvalue error `Σ |λ_i − λ̂_i|² / |λ_i|²` under the best pairing.
pub fn nee(truth: &[Complex64], est: &[Complex64]) -> Result<f64> {
    Ok(nee_detailed(truth, est)?.value)
}

/// Eigenvalue estimates of several runs, each aligned to `truth`, averaged.
pub fn average_aligned(truth: &[Complex64], runs: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let mut acc = vec![Complex64::new(0.0, 0.0); truth.len()];
    for run in runs {
        for (a, e) in acc.iter_mut().zip(align_eigenvalues(truth, run)?) {
            *a += e;
        }
    }
    let count = runs.len().max(1) as f64;
    Ok(acc.into_iter().map(|a| a / count).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    /// Sum over channels of the per-channel mean squared error.
    pub mse: f64,
    pub per_channel: Vec<f64>,
}

pub fn mse_of(y: MatRef<'_, f64>, y_hat: MatRef<'_, f64>) -> Result<MseReport> {
    if y.nrows() != y_hat.nrows() || y.ncols() != y_hat.ncols() {
        return Err(FrsidError::Dimension("output and prediction shapes differ".into()));
    }
    let n = y.ncols().max(1) as f64;
    let per_channel: Vec<f64> = (0..y.nrows())
        .map(|i| (0..y.ncols()).map(|t| (y[(i, t)] - y_hat[(i, t)]).powi(2)).sum::<f64>() / n)
        .collect();
    Ok(MseReport { mse: per_channel.iter().sum(), per_channel })
}

fn check_dims(model: &StateSpaceModel, ts: &TimeSeriesData) -> Result<()> {
    if model.m() != ts.m() || model.p() != ts.p() {
        return Err(FrsidError::Dimension(format!(
            "model has m={}, p={} but data has m={}, p={}",
            model.m(),
            model.p(),
            ts.m(),
            ts.p()
        )));
    }
    Ok(())
}

/// MSE of the deterministic simulation (`e ≡ 0`, `x(0) = 0`) on validation data.
pub fn validation_mse(model: &StateSpaceModel, ts: &TimeSeriesData) -> Result<MseReport> {
    check_dims(model, ts)?;
    let y_hat = simulate_deterministic(model, &ts.u().to_owned())?;
    mse_of(ts.y(), y_hat.as_ref())
}

/// MSE of the one-step-ahead Kalman predictor driven by `u` and the measured `y`.
pub fn predictor_mse(model: &StateSpaceModel, ts: &TimeSeriesData) -> Result<MseReport> {
    check_dims(model, ts)?;
    let radius = model.predictor_radius()?;
    if radius >= 1.0 {
        return Err(FrsidError::Unstable(format!("predictor A - KC has spectral radius {radius:.4}")));
    }
    let ak = &model.a - &model.k * &model.c;
    let bk = &model.b - &model.k * &model.d;
    let mut x = Matrix::zeros(model.n(), 1);
    let mut y_hat = Matrix::zeros(model.p(), ts.n_t());
    for t in 0..ts.n_t() {
        let ut = ts.u().subcols(t, 1);
        let yt = ts.y().subcols(t, 1);
        let pred = &model.c * &x + &model.d * ut;
        y_hat.as_mut().subcols_mut(t, 1).copy_from(&pred);
        x = &ak * &x + &bk * ut + &model.k * yt;
    }
    mse_of(ts.y(), y_hat.as_ref())
}

fn range_basis(m: MatRef<'_, f64>, tol: f64) -> Result<Matrix> {
    let svd = svd_econ(m)?;
    let r = numerical_rank(&svd.s, tol);
    if r == 0 {
        return Err(FrsidError::UndefinedSubspace);
    }
    Ok(svd.u.as_ref().subcols(0, r).to_owned())
}

/// `sin θ_max` between the column spaces of `a` and `b`.
///
/// The sine is read off the residual `Q_B − Q_A Q_Aᵀ Q_B` rather than from
/// `sqrt(1 − σ_min²)`, which loses all digits below about `1e-8`.
pub fn subspace_distance(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<f64> {
    subspace_distance_tol(a, b, SUBSPACE_RANK_TOL)
}

pub fn subspace_distance_tol(a: MatRef<'_, f64>, b: MatRef<'_, f64>, rank_tol: f64) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(FrsidError::Dimension(format!(
            "subspaces live in R^{} and R^{}",
            a.nrows(),
            b.nrows()
        )));
    }
    let mut qa = range_basis(a, rank_tol)?;
    let mut qb = range_basis(b, rank_tol)?;
    if qa.ncols() < qb.ncols() {
        std::mem::swap(&mut qa, &mut qb);
    }
    let resid = &qb - &qa * (qa.transpose() * &qb);
    let s = svd_econ(resid.as_ref())?.s;
    Ok(s.first().copied().unwrap_or(0.0).clamp(0.0, 1.0))
}

/// `sqrt(Σ_{j=0}^{horizon} ‖G₁(j) − G₂(j)‖_F²)` over Markov parameters.
pub fn markov_error(m1: &StateSpaceModel, m2: &StateSpaceModel, horizon: usize) -> Result<f64> {
    if m1.m() != m2.m() || m1.p() != m2.p() {
        return Err(FrsidError::Dimension(format!(
            "models have (m, p) = ({}, {}) and ({}, {})",
            m1.m(),
            m1.p(),
            m2.m(),
            m2.p()
        )));
    }
    let total: f64 = m1
        .markov(horizon)
        .iter()
        .zip(m2.markov(horizon))
        .map(|(g1, g2)| (g1 - &g2).squared_norm_l2())
        .sum();
    Ok(total.sqrt())
}

fn ser_metric<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) if x.is_nan() => s.serialize_str("NaN"),
        Some(x) if *x > 0.0 => s.serialize_str("Inf"),
        Some(_) => s.serialize_str("-Inf"),
        None => s.serialize_none(),
    }
}

fn de_metric<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    Ok(match Option::<Repr>::deserialize(d)? {
        None => None,
        Some(Repr::Num(x)) => Some(x),
        Some(Repr::Str(s)) => Some(s.parse::<f64>().map_err(serde::de::Error::custom)?),
    })
}

/// One evaluated run. Non-finite metrics serialize as `"Inf"`/`"NaN"`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric", default)]
    pub nee: Option<f64>,
    #[serde(default)]
    pub nee_excluded_zero: usize,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric", default)]
    pub mse: Option<f64>,
    #[serde(default)]
    pub mse_per_channel: Vec<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric", default)]
    pub predictor_mse: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric", default)]
    pub markov_err: Option<f64>,
    #[serde(serialize_with = "ser_metric", deserialize_with = "de_metric", default)]
    pub subspace_dist: Option<f64>,
    pub act_ms: f64,
    pub io_words_read: u64,
    pub io_words_written: u64,
    pub blocks_read: u64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "nee,nee_excluded_zero,mse,predictor_mse,markov_err,subspace_dist,act_ms,io_words_read,io_words_written,blocks_read";

    pub fn with_io(mut self, io: IoCounters) -> Self {
        self.io_words_read = io.words_read;
        self.io_words_written = io.words_written;
        self.blocks_read = io.blocks_read;
        self
    }

    /// Row matching [`MetricsReport::CSV_HEADER`]; absent values are empty.
    pub fn to_csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(fmt_metric).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            f(self.nee),
            self.nee_excluded_zero,
            f(self.mse),
            f(self.predictor_mse),
            f(self.markov_err),
            f(self.subspace_dist),
            self.act_ms,
            self.io_words_read,
            self.io_words_written,
            self.blocks_read
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Shortest round-trip decimal, scientific outside `[1e-3, 1e7)`;
/// non-finite values as `Inf`, `-Inf`, `NaN`.
pub fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "Inf" } else { "-Inf" }.into()
    } else if v != 0.0 && !(1e-3..1e7).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}
