use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use frsid::baseline::DEFAULT_MEMORY_CAP;
use frsid::datamodel::DataFormat;
use frsid::identify::{OrderRule, DEFAULT_ORDER_TOL};
use frsid::simulate::InputKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fr2sid,
    Baseline,
    Both,
}

impl Method {
    pub fn runs_fr2sid(self) -> bool {
        matches!(self, Method::Fr2sid | Method::Both)
    }

    pub fn runs_baseline(self) -> bool {
        matches!(self, Method::Baseline | Method::Both)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Bin => "bin",
        }
    }

    pub fn data_format(self) -> DataFormat {
        match self {
            Format::Csv => DataFormat::Csv,
            Format::Bin => DataFormat::Binary,
        }
    }
}

/// Everything an experiment needs. Every field has a default, so a config
/// file only lists what it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Total samples; 30% go to the validation set.
    pub nt: usize,
    /// Signal-to-noise ratio; absent means noise-free.
    pub snr: Option<f64>,
    pub snr_linear: bool,
    pub input: InputKind,
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Horizon; defaults to `n + 1` when a ground-truth model is available.
    pub k: Option<usize>,
    pub l: usize,
    pub q: u8,
    pub d: usize,
    pub seed: u64,
    /// Fixed model order; otherwise the singular-value threshold decides.
    pub order: Option<usize>,
    pub order_tol: f64,
    pub n_iter: usize,
    pub method: Method,
    pub out: PathBuf,
    pub format: Format,
    pub predictor: bool,
    pub memory_cap: u64,
    pub bench_n: usize,
    pub repeats: usize,
    /// Indices into the benchmark shape table; empty means all.
    pub shapes: Vec<usize>,
    pub bench_q: Vec<u8>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 5,
            m: 5,
            p: 5,
            nt: 14_000,
            snr: None,
            snr_linear: false,
            input: InputKind::WhiteGaussian,
            train: None,
            validation: None,
            truth: None,
            k: None,
            l: 5,
            q: 0,
            d: 10,
            seed: 1,
            order: None,
            order_tol: DEFAULT_ORDER_TOL,
            n_iter: 50,
            method: Method::Both,
            out: PathBuf::from("out"),
            format: Format::Csv,
            predictor: false,
            memory_cap: DEFAULT_MEMORY_CAP,
            bench_n: 100_000,
            repeats: 10,
            shapes: Vec::new(),
            bench_q: vec![0, 1],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [("n", self.n), ("m", self.m), ("p", self.p), ("d", self.d), ("n_iter", self.n_iter)];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be at least 1"));
        }
        if self.nt < 10 {
            return Err("nt must be at least 10".into());
        }
        if self.q > 1 {
            return Err(format!("q must be 0 or 1, got {}", self.q));
        }
        if self.bench_q.iter().any(|&q| q > 1) {
            return Err("bench_q entries must be 0 or 1".into());
        }
        if self.k == Some(0) {
            return Err("k must be at least 1".into());
        }
        if self.order == Some(0) {
            return Err("order must be at least 1".into());
        }
        if !(self.order_tol > 0.0 && self.order_tol < 1.0) {
            return Err("order_tol must lie in (0, 1)".into());
        }
        if let Some(s) = self.snr {
            if s.is_nan() || (self.snr_linear && s <= 0.0) {
                return Err(format!("invalid snr {s}"));
            }
        }
        if self.repeats == 0 || self.bench_n == 0 {
            return Err("repeats and bench_n must be at least 1".into());
        }
        Ok(())
    }

    pub fn order_rule(&self) -> OrderRule {
        match self.order {
            Some(n) => OrderRule::Fixed(n),
            None => OrderRule::Threshold(self.order_tol),
        }
    }

    pub fn data_path(&self, explicit: &Option<PathBuf>, stem: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out.join(format!("{stem}.{}", self.format.ext())))
    }

    pub fn truth_path(&self) -> PathBuf {
        self.truth.clone().unwrap_or_else(|| self.out.join("truth.json"))
    }
}

fn parse_input(s: &str) -> Result<InputKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown input kind `{s}`"))
}

fn parse_snr(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("{s}: {e}"))
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true)]
    pub p: Option<usize>,
    #[arg(long, global = true)]
    pub nt: Option<usize>,
    /// SNR in dB (or linear with --snr-linear); `inf` for noise-free.
    #[arg(long, global = true, value_parser = parse_snr)]
    pub snr: Option<f64>,
    #[arg(long, global = true)]
    pub snr_linear: bool,
    /// `white-gaussian` or `prbs`.
    #[arg(long, global = true, value_parser = parse_input)]
    pub input: Option<InputKind>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long, global = true)]
    pub validation: Option<PathBuf>,
    #[arg(long, global = true)]
    pub truth: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub l: Option<usize>,
    #[arg(long, global = true)]
    pub q: Option<u8>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub order: Option<usize>,
    #[arg(long, global = true)]
    pub order_tol: Option<f64>,
    #[arg(long, global = true)]
    pub n_iter: Option<usize>,
    #[arg(long, global = true)]
    pub method: Option<Method>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Also report one-step-ahead predictor MSE.
    #[arg(long, global = true)]
    pub predictor: bool,
    #[arg(long, global = true)]
    pub memory_cap: Option<u64>,
    #[arg(long, global = true)]
    pub bench_n: Option<usize>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub shapes: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub bench_q: Option<Vec<u8>>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<ExperimentConfig, String> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(n, m, p, nt, input, l, q, d, seed, order_tol, n_iter, method, out, format, memory_cap, bench_n, repeats, shapes, bench_q);
        macro_rules! set_opt {
            ($($f:ident),*) => { $(if self.$f.is_some() { c.$f = self.$f.clone(); })* };
        }
        set_opt!(train, validation, truth, k, order);
        if let Some(s) = self.snr {
            c.snr = (!(s.is_infinite() && s > 0.0)).then_some(s);
        }
        c.snr_linear |= self.snr_linear;
        c.predictor |= self.predictor;
        c.validate()?;
        Ok(c)
    }
}
