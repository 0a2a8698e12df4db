//! Browser bindings for the phase-field solver.
//!
//! Each exported function takes a JSON request and returns a JSON response.
//! The plain `*_json` functions carry the logic and are usable natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use std::sync::Arc;

use caginalp_core::coupled_solver::{solve_system, Method, SystemConfig};
use caginalp_core::data::{FieldSpec, SourceSpec};
use caginalp_core::mesh::{integral, norm_lp_omega};
use caginalp_core::nonlinearity::{
    check_hypotheses, check_m4_violation, m4_sides, HypothesisOptions, HypothesisReport, M4Params, M4Witness,
    NonlinearitySpec,
};
use caginalp_core::Grid;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Upper bound on nodes × steps so a request cannot stall the page.
pub const WORK_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub nodes: usize,
    #[serde(default = "one")]
    pub length: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub latent_heat: f64,
    pub nonlinearity: NonlinearitySpec,
    pub u0: FieldSpec,
    pub phi0: FieldSpec,
    #[serde(default)]
    pub f: SourceSpec,
    #[serde(default)]
    pub method: Method,
    /// Number of frames returned, including both ends.
    #[serde(default = "default_frames")]
    pub frames: usize,
}

fn one() -> f64 {
    1.0
}

fn default_frames() -> usize {
    50
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResponse {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub u_l2: Vec<f64>,
    pub phi_l2: Vec<f64>,
    /// `∫(u + lφ)` per returned frame.
    pub conserved: Vec<f64>,
    pub method: String,
    pub iterations: usize,
}

/// Frame indices `0 = k_0 < … < k_{m−1} = steps`, evenly spread.
fn subsample(steps: usize, frames: usize) -> Vec<usize> {
    let m = frames.clamp(2, steps + 1);
    let mut idx: Vec<usize> = (0..m).map(|i| (i * steps + (m - 1) / 2) / (m - 1)).collect();
    idx.dedup();
    idx
}

pub fn simulate_json(request: &str) -> Result<String, String> {
    let req: SimulateRequest = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    if !(req.dt > 0.0 && req.t_end > 0.0) {
        return Err("dt and t_end must be positive".into());
    }
    let steps = (req.t_end / req.dt).round().max(1.0) as usize;
    if req.nodes.saturating_mul(steps) > WORK_LIMIT {
        return Err(format!("{} nodes × {steps} steps exceeds the demo limit of {WORK_LIMIT}", req.nodes));
    }
    let err = |e: caginalp_core::Error| e.to_string();
    let grid = Arc::new(Grid::new(&[req.length], &[req.nodes]).map_err(err)?);
    let cfg = SystemConfig::new(
        req.latent_heat,
        req.u0.to_field(&grid).map_err(err)?,
        req.phi0.to_field(&grid).map_err(err)?,
        req.f.to_trajectory(&grid, req.dt, steps).map_err(err)?,
        req.nonlinearity.build().map_err(err)?,
    );
    cfg.validate().map_err(err)?;
    let pair = solve_system(&cfg, req.method).map_err(err)?;

    let mut resp = SimulateResponse {
        x: (0..grid.len()).map(|i| grid.coordinates(i)[0]).collect(),
        t: Vec::new(),
        u: Vec::new(),
        phi: Vec::new(),
        u_l2: Vec::new(),
        phi_l2: Vec::new(),
        conserved: Vec::new(),
        method: pair.method.to_string(),
        iterations: pair.iterations,
    };
    for k in subsample(steps, req.frames) {
        let (uf, pf) = (pair.u.frame(k), pair.phi.frame(k));
        resp.t.push(pair.u.time(k));
        resp.u.push(uf.values().to_vec());
        resp.phi.push(pf.values().to_vec());
        resp.u_l2.push(norm_lp_omega(uf, 2.0).map_err(err)?);
        resp.phi_l2.push(norm_lp_omega(pf, 2.0).map_err(err)?);
        resp.conserved.push(integral(uf) + req.latent_heat * integral(pf));
    }
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesRequest {
    pub nonlinearity: NonlinearitySpec,
    #[serde(rename = "box", default = "default_box")]
    pub sampling_box: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Points on the plotted curve of `F`.
    #[serde(default = "default_curve")]
    pub curve_points: usize,
}

fn default_box() -> f64 {
    10.0
}

fn default_samples() -> usize {
    400
}

fn default_curve() -> usize {
    201
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub z: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesesResponse {
    pub curve: Curve,
    pub reports: Vec<HypothesisReport>,
}

fn curve(lo: f64, hi: f64, n: usize, g: impl Fn(f64) -> f64) -> Curve {
    let n = n.max(2);
    let z: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let f = z.iter().map(|&z| g(z)).collect();
    Curve { z, f }
}

pub fn hypotheses_json(request: &str) -> Result<String, String> {
    let req: HypothesesRequest = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    let nl = req.nonlinearity.build().map_err(|e| e.to_string())?;
    let opts =
        HypothesisOptions { sampling_box: req.sampling_box, samples: req.samples, ..HypothesisOptions::default() };
    let reports = check_hypotheses(&nl, &opts).map_err(|e| e.to_string())?;
    let b = req.sampling_box.min(3.0);
    let resp = HypothesesResponse { curve: curve(-b, b, req.curve_points, |z| nl.eval_z(z)), reports };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct M4Request {
    pub nonlinearity: NonlinearitySpec,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "two")]
    pub p: f64,
    pub r: f64,
    #[serde(rename = "box", default = "default_box")]
    pub sampling_box: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize)]
pub struct M4Response {
    pub witness: Option<M4Witness>,
    /// `lhs − rhs` of the inequality over `[0, box]`; positive means violated.
    pub gap: Curve,
}

pub fn m4_search_json(request: &str) -> Result<String, String> {
    let req: M4Request = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    let nl = req.nonlinearity.build().map_err(|e| e.to_string())?;
    let params = M4Params { alpha: req.alpha, beta: req.beta, p: req.p, r: req.r };
    let witness = check_m4_violation(&nl, &params, req.sampling_box).map_err(|e| e.to_string())?;
    let gap = curve(0.0, req.sampling_box, 401, |z| {
        let (lhs, rhs) = m4_sides(&nl, &params, z);
        lhs - rhs
    });
    serde_json::to_string(&M4Response { witness, gap }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsError> {
    simulate_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn hypotheses(request: &str) -> Result<String, JsError> {
    hypotheses_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn m4_search(request: &str) -> Result<String, JsError> {
    m4_search_json(request).map_err(|e| JsError::new(&e))
}
