//! Browser bindings: closed-loop runs, target potential profiles and the
//! decaying-perturbation counterexample, each returned as JSON.

use serde::Serialize;
use underact::ode::{solve, OdeOptions};
use underact::scenario::{
    furuta_profile, pendubot_profile, FURUTA_GAINS, FURUTA_K1, PENDUBOT_GAINS, PENDUBOT_K2,
};
use underact::simcore::{
    extract_steady_orbit, simulate_closed_loop, IntegratorConfig, Representation,
};
use underact::verify::{d4_counterexample, d4_field, d4_hamiltonian, Perturbation, D4_START};
use underact::{Furuta, Pendubot, State4, SynthesisProfile};
use wasm_bindgen::prelude::*;

/// Samples returned to the page per series.
pub const MAX_SAMPLES: usize = 2000;

fn profile(system: &str, k: f64, gamma1: f64, gamma2: f64) -> Result<SynthesisProfile, String> {
    let r = match system {
        "furuta" => furuta_profile(&Furuta::benchmark(), k, (gamma1, gamma2)),
        "pendubot" => pendubot_profile(&Pendubot::benchmark(), k, (gamma1, gamma2)),
        other => return Err(format!("unknown system `{other}`")),
    };
    r.map_err(|e| e.to_string())
}

/// Default design parameter and gains of a built-in system.
pub fn defaults(system: &str) -> Result<(f64, (f64, f64)), String> {
    match system {
        "furuta" => Ok((FURUTA_K1, FURUTA_GAINS)),
        "pendubot" => Ok((PENDUBOT_K2, PENDUBOT_GAINS)),
        other => Err(format!("unknown system `{other}`")),
    }
}

fn stride(n: usize) -> usize {
    n.div_ceil(MAX_SAMPLES).max(1)
}

#[derive(Debug, Serialize)]
pub struct RunData {
    pub t: Vec<f64>,
    pub x: [Vec<f64>; 4],
    pub z: [Vec<f64>; 2],
    pub hx: Vec<f64>,
    pub abort: Option<String>,
    pub period: Option<f64>,
    pub tail_mean_x1: Option<f64>,
    pub tail_hx_variation: Option<f64>,
}

pub fn simulate_run(
    system: &str,
    k: f64,
    gamma1: f64,
    gamma2: f64,
    x0: &[f64],
    t_end: f64,
) -> Result<RunData, String> {
    let p = profile(system, k, gamma1, gamma2)?;
    let x0: [f64; 4] = x0.try_into().map_err(|_| "x0 needs 4 values".to_string())?;
    if !(t_end > 0.0 && t_end <= 300.0) {
        return Err("t_end must lie in (0, 300]".into());
    }
    let cfg = IntegratorConfig {
        t_end,
        ..IntegratorConfig::default()
    };
    let traj = simulate_closed_loop(&p, State4::from_array(x0), &cfg, Representation::El)
        .map_err(|e| e.to_string())?;
    let step = stride(traj.len());
    let idx: Vec<usize> = (0..traj.len()).step_by(step).collect();
    let col = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).collect::<Vec<f64>>();
    let orbit = extract_steady_orbit(&traj, 0.2).ok();
    Ok(RunData {
        t: col(&|i| traj.t[i]),
        x: [
            col(&|i| traj.x[i].x1),
            col(&|i| traj.x[i].x2),
            col(&|i| traj.x[i].x3),
            col(&|i| traj.x[i].x4),
        ],
        z: [col(&|i| traj.z[i][0]), col(&|i| traj.z[i][1])],
        hx: col(&|i| traj.hx[i]),
        abort: traj.abort.as_ref().map(|e| e.to_string()),
        period: orbit.as_ref().and_then(|o| o.period),
        tail_mean_x1: orbit.as_ref().map(|o| o.mean[0]),
        tail_hx_variation: orbit.as_ref().map(|o| o.hx_variation),
    })
}

#[derive(Debug, Serialize)]
pub struct PotentialData {
    pub x1: Vec<f64>,
    pub potential: Vec<f64>,
    pub mass: Vec<f64>,
    pub minima: Vec<f64>,
}

pub fn potential_data(system: &str, k: f64, n: usize) -> Result<PotentialData, String> {
    let (_, gains) = defaults(system)?;
    let p = profile(system, k, gains.0, gains.1)?;
    let n = n.clamp(2, MAX_SAMPLES);
    let (lo, hi) = p.interval();
    let x1: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let minima = p
        .find_potential_minima((lo, hi))
        .map(|v| v.into_iter().map(|c| c.x1).collect())
        .unwrap_or_default();
    Ok(PotentialData {
        potential: x1.iter().map(|&x| p.potential(x)).collect(),
        mass: x1.iter().map(|&x| p.mass(x)).collect(),
        x1,
        minima,
    })
}

#[derive(Debug, Serialize)]
pub struct D4Data {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    pub h0: f64,
    pub doubling_time: Option<f64>,
}

pub fn d4_data(perturbed: bool, t_end: f64) -> Result<D4Data, String> {
    if !(t_end > 0.0 && t_end <= 200.0) {
        return Err("t_end must lie in (0, 200]".into());
    }
    let pert = if perturbed {
        Perturbation::On
    } else {
        Perturbation::Off
    };
    let opts = OdeOptions::rk45(1e-10, 1e-12);
    let report = d4_counterexample(pert, t_end, &opts).map_err(|e| e.to_string())?;
    let sol = solve(
        |t, xi: &[f64; 2]| Ok(d4_field(t, *xi, pert)),
        0.0,
        D4_START,
        t_end,
        &opts,
    )
    .into_result()
    .map_err(|e| e.to_string())?;
    let grid = sol.resample(t_end / (MAX_SAMPLES - 1) as f64);
    Ok(D4Data {
        h: grid.iter().map(|(_, y)| d4_hamiltonian(*y)).collect(),
        xi1: grid.iter().map(|(_, y)| y[0]).collect(),
        xi2: grid.iter().map(|(_, y)| y[1]).collect(),
        t: grid.iter().map(|(t, _)| *t).collect(),
        h0: report.h0,
        doubling_time: report.doubling_time,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(
    system: &str,
    k: f64,
    gamma1: f64,
    gamma2: f64,
    x0: Vec<f64>,
    t_end: f64,
) -> Result<String, JsValue> {
    to_js(simulate_run(system, k, gamma1, gamma2, &x0, t_end))
}

#[wasm_bindgen]
pub fn potential_profile(system: &str, k: f64, n: usize) -> Result<String, JsValue> {
    to_js(potential_data(system, k, n))
}

#[wasm_bindgen]
pub fn d4(perturbed: bool, t_end: f64) -> Result<String, JsValue> {
    to_js(d4_data(perturbed, t_end))
}
