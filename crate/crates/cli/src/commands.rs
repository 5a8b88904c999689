use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use frsid::baseline::{run_conventional, BaselineConfig};
use frsid::bench::{time_full_sqr, time_sdc_rqr, TABLE_SHAPES};
use frsid::datamodel::{load_timeseries, save_timeseries, DataFormat, TimeSeriesData};
use frsid::identify::{run_fr2sid, Fr2sidConfig, Identification, StateSpaceModel};
use frsid::metrics::{average_aligned, fmt_metric, markov_error, nee_detailed, predictor_mse, validation_mse, MetricsReport};
use frsid::simulate::{generate_system, make_input, simulate, NoiseSpec, SystemSpec};
use frsid::sketch::{IoCounters, SketchConfig};
use frsid::FrsidError;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<FrsidError> for CliError {
    fn from(e: FrsidError) -> Self {
        let code = match e.root() {
            FrsidError::Config(_)
            | FrsidError::InvalidInput(_)
            | FrsidError::Dimension(_)
            | FrsidError::Parse { .. }
            | FrsidError::Json(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError { code: 1, message: format!("{}: {e}", path.display()) }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn ensure_out(cfg: &ExperimentConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))
}

fn noise(cfg: &ExperimentConfig) -> NoiseSpec {
    match cfg.snr {
        None => NoiseSpec::None,
        Some(s) => NoiseSpec::from_snr(s, cfg.snr_linear),
    }
}

pub fn generate(cfg: &ExperimentConfig) -> CliResult<()> {
    let spec = SystemSpec::new(cfg.n, cfg.m, cfg.p, cfg.seed);
    spec.validate()?;
    let truth = generate_system(&spec)?;
    let n_v = (0.3 * cfg.nt as f64).round() as usize;
    let n_train = cfg.nt - n_v;
    let noise = noise(cfg);
    // Both sets start from x(0) = 0 so deterministic validation has no transient.
    let u = make_input(cfg.input, cfg.m, n_train, cfg.seed);
    let train = simulate(&truth, &u, &noise, cfg.seed.wrapping_add(1))?;
    let u_v = make_input(cfg.input, cfg.m, n_v, cfg.seed.wrapping_add(2));
    let val = simulate(&truth, &u_v, &noise, cfg.seed.wrapping_add(3))?;

    ensure_out(cfg)?;
    let fmt = cfg.format.data_format();
    let train_path = cfg.data_path(&None, "train");
    let val_path = cfg.data_path(&None, "validation");
    save_timeseries(&train.ts, &train_path, fmt)?;
    save_timeseries(&val.ts, &val_path, fmt)?;
    train.model.save(&cfg.out.join("truth.json"))?;
    println!(
        "wrote {} ({n_train} samples), {} ({n_v} samples), {}; measured SNR {:.2} dB",
        train_path.display(),
        val_path.display(),
        cfg.out.join("truth.json").display(),
        train.snr_db
    );
    Ok(())
}

struct Inputs {
    train: TimeSeriesData,
    validation: Option<TimeSeriesData>,
    truth: Option<StateSpaceModel>,
}

fn load_data(path: &Path) -> CliResult<TimeSeriesData> {
    Ok(load_timeseries(path, DataFormat::from_path(path))?)
}

fn load_inputs(cfg: &ExperimentConfig) -> CliResult<Inputs> {
    let train = load_data(&cfg.data_path(&cfg.train, "train"))?;
    let val_path = cfg.data_path(&cfg.validation, "validation");
    let validation = if cfg.validation.is_some() || val_path.exists() { Some(load_data(&val_path)?) } else { None };
    let truth_path = cfg.truth_path();
    let truth = if cfg.truth.is_some() || truth_path.exists() { Some(StateSpaceModel::load(&truth_path)?) } else { None };
    Ok(Inputs { train, validation, truth })
}

fn horizon(cfg: &ExperimentConfig, truth: Option<&StateSpaceModel>) -> CliResult<usize> {
    cfg.k
        .or(truth.map(|t| t.n() + 1))
        .ok_or_else(|| CliError::usage("horizon k is required when no ground-truth model is available"))
}

/// Metrics of one estimated model against whatever references exist.
fn evaluate_model(
    model: &StateSpaceModel,
    validation: Option<&TimeSeriesData>,
    truth: Option<&StateSpaceModel>,
    horizon: usize,
    predictor: bool,
) -> CliResult<MetricsReport> {
    let mut r = MetricsReport::default();
    if let Some(truth) = truth {
        if truth.m() != model.m() || truth.p() != model.p() {
            return Err(FrsidError::Dimension("model and ground truth have different m or p".into()).into());
        }
        if truth.n() == model.n() {
            let res = nee_detailed(&truth.eigenvalues()?, &model.eigenvalues()?)?;
            r.nee = Some(res.value);
            r.nee_excluded_zero = res.excluded_zero;
        }
        r.markov_err = Some(markov_error(truth, model, horizon)?);
    }
    if let Some(val) = validation {
        let m = validation_mse(model, val)?;
        r.mse = Some(m.mse);
        r.mse_per_channel = m.per_channel;
        if predictor {
            r.predictor_mse = Some(match predictor_mse(model, val) {
                Ok(p) => p.mse,
                Err(FrsidError::Unstable(_)) => f64::INFINITY,
                Err(e) => return Err(e.into()),
            });
        }
    }
    Ok(r)
}

#[derive(Serialize)]
struct MethodReport {
    method: &'static str,
    aggregate: MetricsReport,
    runs: Vec<MetricsReport>,
    warnings: Vec<String>,
}

fn aggregate(runs: &[MetricsReport], eigs: &[Vec<Complex64>], truth: Option<&StateSpaceModel>) -> CliResult<MetricsReport> {
    let count = runs.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = runs.iter().filter_map(f).collect();
        (v.len() == runs.len()).then(|| v.iter().sum::<f64>() / count)
    };
    let mut agg = MetricsReport {
        mse: mean(&|r| r.mse),
        predictor_mse: mean(&|r| r.predictor_mse),
        markov_err: mean(&|r| r.markov_err),
        act_ms: runs.iter().map(|r| r.act_ms).sum::<f64>() / count,
        ..Default::default()
    };
    if let Some(truth) = truth {
        let lam = truth.eigenvalues()?;
        if eigs.iter().all(|e| e.len() == lam.len()) {
            let res = nee_detailed(&lam, &average_aligned(&lam, eigs)?)?;
            agg.nee = Some(res.value);
            agg.nee_excluded_zero = res.excluded_zero;
        }
    }
    if let Some(first) = runs.first() {
        agg.io_words_read = first.io_words_read;
        agg.io_words_written = first.io_words_written;
        agg.blocks_read = first.blocks_read;
    }
    Ok(agg)
}

fn run_method(
    name: &'static str,
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    k: usize,
    runs: usize,
    run: &dyn Fn(u64) -> frsid::Result<Identification>,
) -> CliResult<(MethodReport, StateSpaceModel)> {
    let mut reports = Vec::new();
    let mut eigs = Vec::new();
    let mut warnings = Vec::new();
    let mut first_model = None;
    for i in 0..runs {
        let seed = cfg.seed.wrapping_add(i as u64);
        let t = Instant::now();
        let id = run(seed)?;
        let act_ms = t.elapsed().as_secs_f64() * 1e3;
        let mut r = evaluate_model(&id.model, inputs.validation.as_ref(), inputs.truth.as_ref(), 2 * k, cfg.predictor)?
            .with_io(id.diagnostics.io);
        r.act_ms = act_ms;
        warnings.extend(id.diagnostics.warnings.iter().map(|w| format!("run {i}: {w}")));
        eigs.push(id.model.eigenvalues()?);
        reports.push(r);
        first_model.get_or_insert(id.model);
    }
    let aggregate = aggregate(&reports, &eigs, inputs.truth.as_ref())?;
    let model = first_model.expect("at least one run");
    Ok((MethodReport { method: name, aggregate, runs: reports, warnings }, model))
}

pub fn identify(cfg: &ExperimentConfig) -> CliResult<()> {
    let inputs = load_inputs(cfg)?;
    let k = horizon(cfg, inputs.truth.as_ref())?;
    let mut reports = Vec::new();
    if cfg.method.runs_fr2sid() {
        let run = |seed: u64| {
            let sketch = SketchConfig::new(k, cfg.q, seed).with_l(cfg.l).with_d(cfg.d);
            run_fr2sid(&inputs.train, &Fr2sidConfig::new(sketch).with_order(cfg.order_rule()))
        };
        reports.push(run_method("fr2sid", cfg, &inputs, k, cfg.n_iter, &run)?);
    }
    if cfg.method.runs_baseline() {
        let mut bcfg = BaselineConfig::new(k);
        bcfg.order = cfg.order_rule();
        bcfg.panel = cfg.d;
        bcfg.memory_cap_bytes = cfg.memory_cap;
        // The conventional pipeline has no randomness; one run suffices.
        let run = |_seed: u64| run_conventional(&inputs.train, &bcfg);
        reports.push(run_method("baseline", cfg, &inputs, k, 1, &run)?);
    }

    ensure_out(cfg)?;
    for (rep, model) in &reports {
        model.save(&cfg.out.join(format!("model_{}.json", rep.method)))?;
    }
    let reports: Vec<MethodReport> = reports.into_iter().map(|(r, _)| r).collect();
    write_file(&cfg.out.join("runs.csv"), &runs_csv(cfg, &reports))?;
    write_file(&cfg.out.join("comparison.csv"), &comparison_csv(&reports))?;
    let json = serde_json::to_string_pretty(&reports).map_err(FrsidError::from)?;
    write_file(&cfg.out.join("metrics.json"), &json)?;

    for rep in &reports {
        for w in &rep.warnings {
            eprintln!("warning [{}]: {w}", rep.method);
        }
    }
    print!("{}", summary_table(&reports));
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_metric).unwrap_or_default()
}

fn runs_csv(cfg: &ExperimentConfig, reports: &[MethodReport]) -> String {
    let mut s = format!("method,run,seed,{}\n", MetricsReport::CSV_HEADER);
    for rep in reports {
        for (i, r) in rep.runs.iter().enumerate() {
            let seed = cfg.seed.wrapping_add(i as u64);
            let _ = writeln!(s, "{},{i},{seed},{}", rep.method, r.to_csv_row());
        }
    }
    s
}

/// One row: ACT, NEE and Net-MSE for each method that ran.
fn comparison_csv(reports: &[MethodReport]) -> String {
    let mut head = Vec::new();
    let mut row = Vec::new();
    for rep in reports {
        head.extend(["act_ms", "nee", "net_mse"].map(|c| format!("{c}_{}", rep.method)));
        let a = &rep.aggregate;
        row.extend([a.act_ms.to_string(), opt(a.nee), opt(a.mse)]);
    }
    format!("{}\n{}\n", head.join(","), row.join(","))
}

fn summary_table(reports: &[MethodReport]) -> String {
    let mut s = format!("{:<10} {:>6} {:>12} {:>12} {:>12}\n", "method", "runs", "ACT [ms]", "NEE", "Net-MSE");
    for rep in reports {
        let a = &rep.aggregate;
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>12.2} {:>12} {:>12}",
            rep.method,
            rep.runs.len(),
            a.act_ms,
            cell(a.nee),
            cell(a.mse)
        );
    }
    s
}

pub fn evaluate(cfg: &ExperimentConfig, model: &Path, data: &Path) -> CliResult<()> {
    let model = StateSpaceModel::load(model)?;
    let data = load_data(data)?;
    if model.m() != data.m() || model.p() != data.p() {
        return Err(FrsidError::Dimension(format!(
            "model has m={}, p={} but data has m={}, p={}",
            model.m(),
            model.p(),
            data.m(),
            data.p()
        ))
        .into());
    }
    let truth = cfg.truth.as_ref().map(|p| StateSpaceModel::load(p)).transpose()?;
    let k = cfg.k.unwrap_or(model.n() + 1);
    let report = evaluate_model(&model, Some(&data), truth.as_ref(), 2 * k, cfg.predictor)?;
    let mut json: serde_json::Value = serde_json::to_value(&report).map_err(FrsidError::from)?;
    if let Some(obj) = json.as_object_mut() {
        obj.retain(|_, v| !v.is_null());
        for key in ["act_ms", "io_words_read", "io_words_written", "blocks_read"] {
            obj.remove(key);
        }
    }
    eprintln!("{:<14} {:>12}", "metric", "value");
    for (name, v) in [("mse", report.mse), ("predictor_mse", report.predictor_mse), ("nee", report.nee), ("markov_err", report.markov_err)] {
        if let Some(v) = v {
            eprintln!("{name:<14} {v:>12.4e}");
        }
    }
    println!("{}", serde_json::to_string_pretty(&json).map_err(FrsidError::from)?);
    Ok(())
}

pub fn benchmark(cfg: &ExperimentConfig) -> CliResult<()> {
    let indices: Vec<usize> = if cfg.shapes.is_empty() { (0..TABLE_SHAPES.len()).collect() } else { cfg.shapes.clone() };
    if let Some(bad) = indices.iter().find(|&&i| i >= TABLE_SHAPES.len()) {
        return Err(CliError::usage(format!("shape index {bad} out of range (0..{})", TABLE_SHAPES.len())));
    }
    let n = cfg.bench_n;
    let mut csv = String::from(
        "k,m,p,d,q,n,h_rows,h_bar_cols,sqr_ms,sdc_ms,speedup,io_words_read,io_predicted,io_ratio\n",
    );
    for &i in &indices {
        let shape = TABLE_SHAPES[i];
        let rows = shape.rows();
        // Full QR materializes Hᵀ panel by panel but still keeps R plus one panel.
        let footprint = 8 * (rows as u64) * (rows as u64 + (n / shape.d) as u64 + 1);
        let sqr_ms = if footprint > cfg.memory_cap {
            f64::INFINITY
        } else {
            let mut total = 0.0;
            for r in 0..cfg.repeats {
                total += time_full_sqr(shape, n, cfg.seed.wrapping_add(r as u64))?.ms;
            }
            total / cfg.repeats as f64
        };
        for &q in &cfg.bench_q {
            let mut total = 0.0;
            let mut io = IoCounters::default();
            for r in 0..cfg.repeats {
                let s = cfg.seed.wrapping_add(r as u64);
                let t = time_sdc_rqr(shape, n, cfg.l, q, s, s.wrapping_add(1 << 32))?;
                total += t.ms;
                io = t.io;
            }
            let sdc_ms = total / cfg.repeats as f64;
            let predicted = IoCounters::predicted_sdc_words(shape.k, shape.m, shape.p, cfg.l, q, n);
            let _ = writeln!(
                csv,
                "{},{},{},{},{q},{n},{rows},{},{},{sdc_ms},{},{},{predicted},{}",
                shape.k,
                shape.m,
                shape.p,
                shape.d,
                rows + cfg.l,
                fmt_metric(sqr_ms),
                fmt_metric(sqr_ms / sdc_ms),
                io.words_read,
                io.words_read as f64 / predicted as f64
            );
            println!(
                "{{k,m,p,d}}={{{},{},{},{}}} q={q}: H {rows}x{n}, H̄ {rows}x{}, full SQR {} ms, SDC+RQR {sdc_ms:.1} ms, speedup {}",
                shape.k,
                shape.m,
                shape.p,
                shape.d,
                rows + cfg.l,
                fmt_metric(sqr_ms),
                fmt_metric(sqr_ms / sdc_ms)
            );
        }
    }
    ensure_out(cfg)?;
    write_file(&cfg.out.join("benchmark.csv"), &csv)?;
    Ok(())
}
