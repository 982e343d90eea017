//! Browser bindings for the simulator. Each export takes plain strings and
//! numbers and returns a JSON document; errors come back as JS strings.
//!
//! The `*_json` functions are the native entry points and are what the tests
//! exercise. The wasm exports only convert the error type.

use rydsim::analysis::{detectable_components, fit_scan, model_profile, profile_centroid};
use rydsim::atomic::ZeemanState;
use rydsim::coherent::beam_profile;
use rydsim::scan::linear_grid;
use rydsim::sequence::{parse, Engine};
use rydsim::transport::equilibrium_positions;
use rydsim::ExperimentConfig;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Upper bound on points × shots so a click cannot hang the tab.
pub const MAX_WORK: u64 = 20_000_000;

pub const PROGRAMS: [(&str, &str, &str); 3] = [
    ("zeeman", include_str!("../../../sequences/zeeman_minus.seq"), include_str!("../../../sequences/zeeman.json")),
    (
        "addressed_central",
        include_str!("../../../sequences/addressed_central.seq"),
        include_str!("../../../sequences/addressed_central.json"),
    ),
    (
        "addressed_outer",
        include_str!("../../../sequences/addressed_outer.seq"),
        include_str!("../../../sequences/addressed_outer.json"),
    ),
];

fn config(text: &str) -> Result<ExperimentConfig, String> {
    if text.trim().is_empty() {
        return Ok(ExperimentConfig::default());
    }
    ExperimentConfig::from_json(text).map_err(|e| e.to_string())
}

pub fn programs_json() -> String {
    let list: Vec<Value> =
        PROGRAMS.iter().map(|(name, seq, cfg)| json!({ "name": name, "program": seq, "config": cfg })).collect();
    Value::Array(list).to_string()
}

/// Scan the program over a detuning grid and fit a Gaussian to every ion.
pub fn scan_json(
    program: &str,
    config_json: &str,
    from_mhz: f64,
    to_mhz: f64,
    points: usize,
    shots: u64,
    seed: u64,
) -> Result<String, String> {
    if (points as u64).saturating_mul(shots) > MAX_WORK {
        return Err(format!("points x shots exceeds {MAX_WORK}"));
    }
    let program = parse(program).map_err(|e| e.to_string())?;
    let cfg = config(config_json)?;
    let engine = Engine::new(&program, &cfg).map_err(|e| e.to_string())?;
    let grid = linear_grid(from_mhz * 1e6, to_mhz * 1e6, points).map_err(|e| e.to_string())?;
    let scan = engine.scan(&grid, shots, seed).map_err(|e| e.to_string())?;
    let fits: Vec<Value> = (0..scan.n_ions())
        .map(|ion| match fit_scan(&scan, ion) {
            Ok(f) => serde_json::from_str(&f.to_json()).unwrap_or(Value::Null),
            Err(e) => json!({ "error": e.to_string() }),
        })
        .collect();
    Ok(json!({
        "detunings_hz": scan.detunings,
        "p": scan.p,
        "err": scan.err,
        "fits": fits,
        "csv": scan.to_csv(),
    })
    .to_string())
}

/// Equilibrium positions and relative beam coupling for the configured crystal.
pub fn geometry_json(config_json: &str) -> Result<String, String> {
    let cfg = config(config_json)?;
    cfg.validate().map_err(|e| e.to_string())?;
    let z = equilibrium_positions(cfg.n_ions, &cfg.trap()).map_err(|e| e.to_string())?;
    let coupling: Vec<f64> = z.iter().map(|&x| beam_profile(x - cfg.beam.center_m, cfg.beam.waist_m)).collect();
    let um: Vec<f64> = z.iter().map(|x| x * 1e6).collect();
    Ok(json!({
        "positions_um": um,
        "coupling": coupling,
        "beam_center_um": cfg.beam.center_m * 1e6,
        "waist_um": cfg.beam.waist_m * 1e6,
    })
    .to_string())
}

/// Noise-free line profile from one D5/2 sublevel, with its detectable components.
pub fn profile_json(config_json: &str, from: &str, from_mhz: f64, to_mhz: f64, points: usize) -> Result<String, String> {
    let cfg = config(config_json)?;
    let shape = cfg.line_shape().map_err(|e| e.to_string())?;
    let state: ZeemanState = from.parse().map_err(|e| format!("{e}"))?;
    let comps = detectable_components(&shape, state);
    if comps.is_empty() {
        return Err(format!("no detectable channels from {from}"));
    }
    let grid = linear_grid(from_mhz * 1e6, to_mhz * 1e6, points).map_err(|e| e.to_string())?;
    let y = model_profile(&grid, &comps, shape.sigma());
    let lines: Vec<Value> =
        comps.iter().map(|c| json!({ "label": c.label(), "center_hz": c.center, "weight": c.weight })).collect();
    Ok(json!({
        "detunings_hz": grid,
        "profile": y,
        "components": lines,
        "centroid_hz": profile_centroid(&comps),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn programs() -> String {
    programs_json()
}

#[wasm_bindgen]
pub fn scan(
    program: &str,
    config_json: &str,
    from_mhz: f64,
    to_mhz: f64,
    points: usize,
    shots: u32,
    seed: u32,
) -> Result<String, JsValue> {
    scan_json(program, config_json, from_mhz, to_mhz, points, shots as u64, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn geometry(config_json: &str) -> Result<String, JsValue> {
    geometry_json(config_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn profile(config_json: &str, from: &str, from_mhz: f64, to_mhz: f64, points: usize) -> Result<String, JsValue> {
    profile_json(config_json, from, from_mhz, to_mhz, points).map_err(|e| JsValue::from_str(&e))
}
