use frsid::baseline::{run_conventional, BaselineConfig};
use frsid::datamodel::{load_timeseries, save_timeseries, DataFormat, TimeSeriesData};
use frsid::identify::{run_fr2sid, Fr2sidConfig, OrderRule, StateSpaceModel};
use frsid::metrics::{markov_error, nee};
use frsid::simulate::{generate_system, make_input, simulate, InputKind, NoiseSpec, SystemSpec};
use frsid::sketch::SketchConfig;

fn system(n: usize, m: usize, p: usize, seed: u64) -> StateSpaceModel {
    generate_system(&SystemSpec::new(n, m, p, seed)).unwrap()
}

fn data(model: &StateSpaceModel, n_t: usize, noise: NoiseSpec, seed: u64) -> TimeSeriesData {
    let u = make_input(InputKind::WhiteGaussian, model.m(), n_t, seed);
    simulate(model, &u, &noise, seed + 1).unwrap().ts
}

fn fr2sid(k: usize, q: u8, seed: u64) -> Fr2sidConfig {
    Fr2sidConfig::new(SketchConfig::new(k, q, seed).with_d(4))
}

#[test]
fn noise_free_recovery_for_both_power_settings() {
    let truth = system(5, 3, 3, 1);
    let ts = data(&truth, 6000, NoiseSpec::None, 2);
    for q in [0, 1] {
        let id = run_fr2sid(&ts, &fr2sid(6, q, 3).with_order(OrderRule::Fixed(5))).unwrap();
        let e = nee(&truth.eigenvalues().unwrap(), &id.model.eigenvalues().unwrap()).unwrap();
        assert!(e <= 1e-10, "q={q}: NEE {e:.2e}");
        assert!(id.diagnostics.lemma8_residual <= 1e-10);
    }
}

#[test]
fn sketch_seed_does_not_change_the_input_output_map() {
    let truth = system(4, 2, 2, 11);
    let ts = data(&truth, 5000, NoiseSpec::None, 12);
    let a = run_fr2sid(&ts, &fr2sid(5, 0, 100)).unwrap().model;
    let b = run_fr2sid(&ts, &fr2sid(5, 0, 200)).unwrap().model;
    assert_eq!(a.n(), 4);
    assert!(markov_error(&a, &b, 10).unwrap() <= 1e-8);
    assert!(markov_error(&truth, &a, 10).unwrap() <= 1e-8);
}

#[test]
fn same_seed_same_model() {
    let truth = system(3, 2, 2, 21);
    let ts = data(&truth, 4000, NoiseSpec::SnrDb(30.0), 22);
    let cfg = fr2sid(5, 1, 7).with_order(OrderRule::Fixed(3));
    assert_eq!(run_fr2sid(&ts, &cfg).unwrap().model, run_fr2sid(&ts, &cfg).unwrap().model);
}

#[test]
fn scaling_the_data_scales_only_the_noise_covariance() {
    let truth = system(3, 2, 2, 31);
    let ts = data(&truth, 20_000, NoiseSpec::SnrDb(20.0), 32);
    let cfg = fr2sid(5, 0, 9).with_order(OrderRule::Fixed(3));
    let a = run_fr2sid(&ts, &cfg).unwrap().model;
    let b = run_fr2sid(&ts.scaled(10.0), &cfg).unwrap().model;
    let (ea, eb) = (a.eigenvalues().unwrap(), b.eigenvalues().unwrap());
    assert!(nee(&ea, &eb).unwrap() <= 1e-16);
    let scale: f64 = a.markov(10).iter().map(|g| g.norm_l2().powi(2)).sum::<f64>().sqrt();
    assert!(markov_error(&a, &b, 10).unwrap() <= 1e-8 * scale);
    let ratio = b.eta[(0, 0)] / a.eta[(0, 0)];
    assert!((ratio - 100.0).abs() <= 1e-6 * 100.0, "eta ratio {ratio}");
}

#[test]
fn conventional_is_consistent_on_noisy_data() {
    let truth = system(4, 2, 2, 41);
    let ts = data(&truth, 30_000, NoiseSpec::SnrDb(40.0), 42);
    let mut base = BaselineConfig::new(6);
    base.order = OrderRule::Fixed(4);
    let conv = run_conventional(&ts, &base).unwrap().model;
    let e = nee(&truth.eigenvalues().unwrap(), &conv.eigenvalues().unwrap()).unwrap();
    assert!(e < 1e-2, "NEE {e:.2e}");
}

#[test]
fn identification_from_files_matches_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let truth = system(3, 1, 2, 51);
    let ts = data(&truth, 3000, NoiseSpec::SnrDb(25.0), 52);
    let cfg = fr2sid(4, 0, 53).with_order(OrderRule::Fixed(3));
    let expected = run_fr2sid(&ts, &cfg).unwrap().model;
    for (name, fmt) in [("d.csv", DataFormat::Csv), ("d.bin", DataFormat::Binary)] {
        let path = dir.path().join(name);
        save_timeseries(&ts, &path, fmt).unwrap();
        let loaded = load_timeseries(&path, fmt).unwrap();
        assert_eq!(run_fr2sid(&loaded, &cfg).unwrap().model, expected, "{name}");
    }
}

#[test]
fn model_file_round_trip_preserves_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let truth = system(4, 2, 3, 61);
    let path = dir.path().join("m.json");
    truth.save(&path).unwrap();
    assert_eq!(StateSpaceModel::load(&path).unwrap(), truth);
}
