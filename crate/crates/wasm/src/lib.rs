//! Browser bindings for three small demos. Each export takes plain numbers
//! and returns a JSON string; `www/main.js` parses and plots it.

use frsid::identify::{run_fr2sid, Fr2sidConfig, OrderRule, StateSpaceModel};
use frsid::bench::uniform_block;
use frsid::matops::{lq, numerical_rank, singular_values};
use frsid::metrics::{nee, subspace_distance, validation_mse};
use frsid::simulate::{generate_system, make_input, simulate, simulate_deterministic, InputKind, NoiseSpec, SystemSpec};
use frsid::sketch::{sketch_matrix, SketchConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Pole {
    re: f64,
    im: f64,
}

fn poles(model: &StateSpaceModel) -> frsid::Result<Vec<Pole>> {
    Ok(model.eigenvalues()?.into_iter().map(|z| Pole { re: z.re, im: z.im }).collect())
}

#[derive(Serialize)]
pub struct IdentifyDemo {
    true_poles: Vec<Pole>,
    est_poles: Vec<Pole>,
    singular_values: Vec<f64>,
    order: usize,
    nee: Option<f64>,
    /// Validation outputs of the first channel: truth and model.
    y_true: Vec<f64>,
    y_est: Vec<f64>,
    mse: f64,
    warnings: Vec<String>,
}

/// Simulates a random system, identifies it and scores it on fresh data.
/// `snr_db` of `inf` or above 300 means noise-free.
#[allow(clippy::too_many_arguments)]
pub fn identify_demo(
    n: usize,
    m: usize,
    p: usize,
    n_t: usize,
    snr_db: f64,
    q: u8,
    l: usize,
    seed: u64,
) -> frsid::Result<IdentifyDemo> {
    let truth = generate_system(&SystemSpec::new(n, m, p, seed))?;
    let noise = if snr_db > 300.0 { NoiseSpec::None } else { NoiseSpec::SnrDb(snr_db) };
    let u = make_input(InputKind::WhiteGaussian, m, n_t, seed);
    let train = simulate(&truth, &u, &noise, seed + 1)?;
    let k = n + 1;
    let cfg = Fr2sidConfig::new(SketchConfig::new(k, q, seed + 2).with_l(l).with_d(4)).with_order(OrderRule::Fixed(n));
    let id = run_fr2sid(&train.ts, &cfg)?;

    let n_v = 400;
    let u_v = make_input(InputKind::WhiteGaussian, m, n_v, seed + 3);
    let val = simulate(&truth, &u_v, &NoiseSpec::None, seed + 4)?;
    let y_est = simulate_deterministic(&id.model, &u_v)?;
    let mse = validation_mse(&id.model, &val.ts)?.mse;
    Ok(IdentifyDemo {
        true_poles: poles(&truth)?,
        est_poles: poles(&id.model)?,
        singular_values: id.diagnostics.singular_values.clone(),
        order: id.diagnostics.order,
        nee: nee(&truth.eigenvalues()?, &id.model.eigenvalues()?).ok(),
        y_true: (0..n_v).map(|t| val.ts.y()[(0, t)]).collect(),
        y_est: (0..n_v).map(|t| y_est[(0, t)]).collect(),
        mse,
        warnings: id.diagnostics.warnings,
    })
}

#[derive(Serialize)]
pub struct SubspacePoint {
    n_c: usize,
    rank: usize,
    distance: f64,
}

/// Rank of `ζ𝒞` and its distance to `range(ζ)` for a rank-`rank` `ζ` as
/// the sketch width grows. The rank saturates once `N_c` reaches it.
pub fn subspace_demo(rows: usize, rank: usize, n: usize, max_width: usize, seed: u64) -> frsid::Result<Vec<SubspacePoint>> {
    let theta = uniform_block(rows, 0..rank, seed, 0);
    let z = uniform_block(rank, 0..n, seed, 1);
    let basis = &theta * lq(z.as_ref(), false)?.l;
    let mut out = Vec::new();
    for n_c in 1..=max_width.min(n - 1) {
        let zeta_bar = &theta * sketch_matrix(z.as_ref(), n_c, 0, seed + n_c as u64)?;
        out.push(SubspacePoint {
            n_c,
            rank: numerical_rank(&singular_values(zeta_bar.as_ref())?, 1e-10),
            distance: subspace_distance(basis.as_ref(), zeta_bar.as_ref())?,
        });
    }
    Ok(out)
}

fn to_json<T: Serialize>(r: frsid::Result<T>) -> Result<String, JsValue> {
    match r {
        Ok(v) => serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())),
        Err(e) => Err(JsValue::from_str(&e.to_string())),
    }
}

#[wasm_bindgen(js_name = identifyDemo)]
#[allow(clippy::too_many_arguments)]
pub fn identify_demo_js(n: usize, m: usize, p: usize, n_t: usize, snr_db: f64, q: u8, l: usize, seed: u32) -> Result<String, JsValue> {
    to_json(identify_demo(n, m, p, n_t, snr_db, q, l, seed as u64))
}

#[wasm_bindgen(js_name = subspaceDemo)]
pub fn subspace_demo_js(rows: usize, rank: usize, n: usize, max_width: usize, seed: u32) -> Result<String, JsValue> {
    to_json(subspace_demo(rows, rank, n, max_width, seed as u64))
}
