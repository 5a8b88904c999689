//! Synthetic multi-scale systems and combined deterministic-stochastic data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::TimeSeriesData;
use crate::error::{FrsidError, Result};
use crate::identify::StateSpaceModel;
use crate::matops::{cholesky_lower, spectral_radius, Matrix};

/// How the `n - 2` intermediate continuous poles are spread between the
/// fast and the slow pole.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleSpacing {
    #[default]
    Uniform,
    LogUniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub fast_pole_range: (f64, f64),
    pub slow_pole_range: (f64, f64),
    /// Defaults to `0.5 / |fast pole|`.
    pub sample_time: Option<f64>,
    pub spacing: PoleSpacing,
    /// Turn consecutive intermediate poles into complex-conjugate pairs.
    pub complex_pairs: bool,
    /// Explicit continuous poles; overrides the random draw when set.
    pub poles: Option<Vec<f64>>,
    pub seed: u64,
}

impl SystemSpec {
    pub fn new(n: usize, m: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            p,
            fast_pole_range: (-100.0, -50.0),
            slow_pole_range: (-0.01, -0.001),
            sample_time: None,
            spacing: PoleSpacing::Uniform,
            complex_pairs: false,
            poles: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.p == 0 {
            return Err(FrsidError::Config(format!(
                "n, m and p must be positive (got {}, {}, {})",
                self.n, self.m, self.p
            )));
        }
        for (name, (lo, hi)) in [("fast", self.fast_pole_range), ("slow", self.slow_pole_range)] {
            if !(lo <= hi && hi < 0.0) {
                return Err(FrsidError::Config(format!(
                    "{name} pole range [{lo}, {hi}] must be ordered and strictly negative"
                )));
            }
        }
        if let Some(ts) = self.sample_time {
            if !(ts > 0.0 && ts.is_finite()) {
                return Err(FrsidError::Config(format!("sample time {ts} must be positive")));
            }
        }
        if let Some(poles) = &self.poles {
            if poles.len() != self.n || poles.iter().any(|&p| !(p < 0.0)) {
                return Err(FrsidError::Config(format!(
                    "explicit poles must be {} strictly negative values",
                    self.n
                )));
            }
        }
        Ok(())
    }
}

/// Continuous-time poles; each complex pair is `(re, im)` with `im > 0`.
#[derive(Clone, Debug, PartialEq)]
enum Mode {
    Real(f64),
    Pair(f64, f64),
}

fn draw_modes(spec: &SystemSpec, rng: &mut ChaCha8Rng) -> Vec<Mode> {
    if let Some(poles) = &spec.poles {
        return poles.iter().copied().map(Mode::Real).collect();
    }
    let uni = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..hi) };
    let fast = uni(rng, spec.fast_pole_range);
    if spec.n == 1 {
        return vec![Mode::Real(fast)];
    }
    let slow = uni(rng, spec.slow_pole_range);
    let mids: Vec<f64> = (0..spec.n - 2)
        .map(|_| match spec.spacing {
            PoleSpacing::Uniform => rng.random_range(fast..slow),
            PoleSpacing::LogUniform => {
                let (a, b) = ((-fast).ln(), (-slow).ln());
                -(rng.random_range(b..a)).exp()
            }
        })
        .collect();
    let mut modes = vec![Mode::Real(fast), Mode::Real(slow)];
    let mut it = mids.into_iter();
    while let Some(re) = it.next() {
        // A pair occupies two state dimensions, so it consumes two draws.
        if spec.complex_pairs && it.next().is_some() {
            let im = rng.random_range(0.0..re.abs());
            modes.push(Mode::Pair(re, im));
            continue;
        }
        modes.push(Mode::Real(re));
    }
    modes
}

fn default_sample_time(spec: &SystemSpec, modes: &[Mode]) -> f64 {
    spec.sample_time.unwrap_or_else(|| {
        let fastest = modes
            .iter()
            .map(|m| match *m {
                Mode::Real(r) => r.abs(),
                Mode::Pair(r, i) => r.hypot(i),
            })
            .fold(0.0, f64::max);
        0.5 / fastest
    })
}

/// Real block-diagonal `A` with eigenvalues `exp(λ T_s)`.
fn realize_a(modes: &[Mode], ts: f64, n: usize) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    let mut at = 0;
    for m in modes {
        match *m {
            Mode::Real(r) => {
                a[(at, at)] = (r * ts).exp();
                at += 1;
            }
            Mode::Pair(r, i) => {
                let mag = (r * ts).exp();
                let (s, c) = (i * ts).sin_cos();
                a[(at, at)] = mag * c;
                a[(at, at + 1)] = -mag * s;
                a[(at + 1, at)] = mag * s;
                a[(at + 1, at + 1)] = mag * c;
                at += 2;
            }
        }
    }
    a
}

fn randn(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random stable multi-scale system with isotropic unit innovation covariance.
pub fn generate_system(spec: &SystemSpec) -> Result<StateSpaceModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let modes = draw_modes(spec, &mut rng);
    let ts = default_sample_time(spec, &modes);
    let (n, m, p) = (spec.n, spec.m, spec.p);
    let a = realize_a(&modes, ts, n);
    let rho = spectral_radius(a.as_ref())?;
    if rho >= 1.0 {
        return Err(FrsidError::Unstable(format!("generated A has spectral radius {rho}")));
    }
    let b = randn(n, m, &mut rng);
    let c = randn(p, n, &mut rng);
    let d = randn(p, m, &mut rng);
    let k0 = randn(n, p, &mut rng);
    let k = stabilize_gain(&a, &c, k0)?;
    StateSpaceModel::new(a, b, c, d, k, Matrix::identity(p, p))
}

/// Scales `K` until `A - KC` is stable, bisecting on the scale factor.
fn stabilize_gain(a: &Matrix, c: &Matrix, k: Matrix) -> Result<Matrix> {
    let radius = |s: f64| spectral_radius((a - &k * c * faer::Scale(s)).as_ref());
    if radius(1.0)? < 1.0 {
        return Ok(k);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if radius(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The radius need not be monotone in the scale, so back off geometrically
    // from the bisection point until the margin holds.
    let mut s = 0.9 * lo;
    for _ in 0..64 {
        if s > 0.0 && radius(s)? < 1.0 - 1e-6 {
            return Ok(k * faer::Scale(s));
        }
        s *= 0.7;
    }
    Err(FrsidError::Unstable("could not scale K to make A - KC stable; re-seed the generator".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    WhiteGaussian,
    Prbs,
}

/// Persistently exciting `m x N_t` input.
pub fn make_input(kind: InputKind, m: usize, n_t: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        InputKind::WhiteGaussian => randn(m, n_t, &mut rng),
        InputKind::Prbs => {
            let mut u = Matrix::zeros(m, n_t);
            for ch in 0..m {
                // Maximal-length 31-bit LFSR, taps 31 and 28.
                let mut state: u32 = rng.random_range(1..(1u32 << 31));
                for t in 0..n_t {
                    let bit = ((state >> 30) ^ (state >> 27)) & 1;
                    state = ((state << 1) | bit) & 0x7fff_ffff;
                    u[(ch, t)] = if bit == 1 { 1.0 } else { -1.0 };
                }
            }
            u
        }
    }
}

/// Noise level of a simulation.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec {
    None,
    /// `10 log10(P_det / P_noise)`, channel-averaged powers.
    SnrDb(f64),
    /// `P_det / P_noise`.
    SnrLinear(f64),
    /// Innovations drawn from `N(0, η)` with the given `η`.
    Covariance(Matrix),
}

impl NoiseSpec {
    /// `inf` maps to [`NoiseSpec::None`].
    pub fn from_snr(value: f64, linear: bool) -> Self {
        match (value.is_infinite() && value > 0.0, linear) {
            (true, _) => NoiseSpec::None,
            (false, true) => NoiseSpec::SnrLinear(value),
            (false, false) => NoiseSpec::SnrDb(value),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulationRun {
    /// Ground truth, with `eta` set to the covariance actually injected.
    pub model: StateSpaceModel,
    pub ts: TimeSeriesData,
    /// Injected innovations, `p x N_t`.
    pub e: Matrix,
    /// Measured `10 log10(P_det / P_noise)`; infinite when noise-free.
    pub snr_db: f64,
}

const OVERFLOW: f64 = 1e150;

/// Runs `x(t+1) = A x + B u + K e`, `y = C x + D u + e` from `x(0) = 0`.
fn run_system(model: &StateSpaceModel, u: &Matrix, e: Option<&Matrix>) -> Result<Matrix> {
    let (n, p, n_t) = (model.n(), model.p(), u.ncols());
    let mut y = Matrix::zeros(p, n_t);
    let mut x = Matrix::zeros(n, 1);
    for t in 0..n_t {
        let ut = u.as_ref().subcols(t, 1);
        let mut yt = &model.c * &x + &model.d * ut;
        let mut xn = &model.a * &x + &model.b * ut;
        if let Some(e) = e {
            let et = e.as_ref().subcols(t, 1);
            yt += et;
            xn += &model.k * et;
        }
        y.as_mut().subcols_mut(t, 1).copy_from(&yt);
        x = xn;
        if t % 256 == 0 && !(x.norm_max() < OVERFLOW) {
            return Err(FrsidError::Unstable(format!("state diverged at sample {t}")));
        }
    }
    if !(x.norm_max() < OVERFLOW) {
        return Err(FrsidError::Unstable("state diverged".into()));
    }
    Ok(y)
}

/// Deterministic response (`e ≡ 0`, `x(0) = 0`).
pub fn simulate_deterministic(model: &StateSpaceModel, u: &Matrix) -> Result<Matrix> {
    check_input(model, u)?;
    run_system(model, u, None)
}

fn check_input(model: &StateSpaceModel, u: &Matrix) -> Result<()> {
    if u.nrows() != model.m() {
        return Err(FrsidError::Dimension(format!(
            "input has {} channels, model expects {}",
            u.nrows(),
            model.m()
        )));
    }
    crate::matops::ensure_finite(u.as_ref(), "input")
}

fn mean_power(y: &Matrix) -> f64 {
    let len = (y.nrows() * y.ncols()) as f64;
    if len == 0.0 {
        0.0
    } else {
        y.squared_norm_l2() / len
    }
}

pub fn simulate(model: &StateSpaceModel, u: &Matrix, noise: &NoiseSpec, seed: u64) -> Result<SimulationRun> {
    check_input(model, u)?;
    let (p, n_t) = (model.p(), u.ncols());
    let y_det = run_system(model, u, None)?;
    let mut truth = model.clone();

    let (shape, scale) = match noise {
        NoiseSpec::None => {
            truth.eta = Matrix::zeros(p, p);
            let ts = TimeSeriesData::new(u.clone(), y_det)?;
            return Ok(SimulationRun { model: truth, ts, e: Matrix::zeros(p, n_t), snr_db: f64::INFINITY });
        }
        NoiseSpec::Covariance(eta) => (eta.clone(), None),
        NoiseSpec::SnrDb(db) => (Matrix::identity(p, p), Some(10f64.powf(db / 10.0))),
        NoiseSpec::SnrLinear(r) => {
            if !(*r > 0.0) {
                return Err(FrsidError::Config(format!("linear SNR {r} must be positive")));
            }
            (Matrix::identity(p, p), Some(*r))
        }
    };
    if shape.nrows() != p || shape.ncols() != p {
        return Err(FrsidError::Dimension(format!("noise covariance must be {p}x{p}")));
    }
    let chol = cholesky_lower(shape.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = randn(p, n_t, &mut rng);
    let e_unit = &chol * &z;

    // The stochastic path is linear in e, so it is simulated once at unit
    // scale and rescaled to hit the requested power ratio.
    let zero_u = Matrix::zeros(model.m(), n_t);
    let y_sto = run_system(model, &zero_u, Some(&e_unit))?;
    let sigma = match scale {
        None => 1.0,
        Some(ratio) => {
            let p_sto = mean_power(&y_sto);
            if p_sto == 0.0 {
                1.0
            } else {
                (mean_power(&y_det) / (p_sto * ratio)).sqrt()
            }
        }
    };
    let e = e_unit * faer::Scale(sigma);
    let y_noise = y_sto * faer::Scale(sigma);
    let snr_db = 10.0 * (mean_power(&y_det) / mean_power(&y_noise)).log10();
    truth.eta = shape * faer::Scale(sigma * sigma);
    let ts = TimeSeriesData::new(u.clone(), &y_det + &y_noise)?;
    Ok(SimulationRun { model: truth, ts, e, snr_db })
}
