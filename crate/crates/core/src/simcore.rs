//! Closed-loop simulation in three equivalent coordinate systems, section
//! crossings, steady-orbit extraction and CSV export.

use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechmodel::{eval_el_dynamics, State4};
use crate::ode::{crossings, solve, Direction, Method, OdeOptions, Solution};
use crate::prefeedback::{drift, input_field, u_pl};
use crate::synthesis::SynthesisProfile;

pub const CSV_HEADER: &str = "t,x1,x2,x3,x4,z1,z2,u,Hx";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Euler-Lagrange equations driven by the pre-feedback torque.
    El,
    /// Control-affine form after pre-feedback.
    Spong,
    /// Off-manifold coordinates `z` together with `(x1, x3)`.
    Zx,
}

impl FromStr for Representation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "el" => Ok(Self::El),
            "spong" => Ok(Self::Spong),
            "zx" => Ok(Self::Zx),
            other => Err(format!(
                "unknown representation `{other}` (expected el, spong or zx)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub h: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    /// Spacing of the exported samples.
    pub output_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            h: 1e-3,
            rtol: 1e-9,
            atol: 1e-11,
            t_end: 30.0,
            output_dt: 0.01,
        }
    }
}

impl IntegratorConfig {
    pub fn ode_options(&self) -> OdeOptions {
        OdeOptions {
            method: self.method,
            h: self.h,
            rtol: self.rtol,
            atol: self.atol,
            ..OdeOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ode_options().validate()?;
        for (name, value) in [("t_end", self.t_end), ("output_dt", self.output_dt)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        Ok(())
    }
}

/// A closed-loop run: the dense solution in plant coordinates plus annotated
/// samples every `output_dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<State4>,
    pub z: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    pub hx: Vec<f64>,
    pub dense: Solution<4>,
    pub representation: Representation,
    /// Why the run stopped before `t_end`, if it did.
    pub abort: Option<Error>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.dense.t_last()
    }

    pub fn state_at(&self, t: f64) -> State4 {
        State4::from_array(self.dense.interpolate(t))
    }

    pub fn rows(&self) -> impl Iterator<Item = [f64; 9]> + '_ {
        (0..self.t.len()).map(|i| {
            let x = self.x[i];
            [
                self.t[i],
                x.x1,
                x.x2,
                x.x3,
                x.x4,
                self.z[i][0],
                self.z[i][1],
                self.u[i],
                self.hx[i],
            ]
        })
    }
}

/// `H` evaluated at the unactuated coordinates `(x1, x3)`.
pub fn energy_hx(p: &SynthesisProfile, x: &State4) -> f64 {
    0.5 * p.mass(x.x1) * x.x3 * x.x3 + p.potential(x.x1)
}

/// Closed-loop vector field in plant coordinates.
pub fn closed_loop_field(
    p: &SynthesisProfile,
    x: &State4,
    rep: Representation,
) -> Result<[f64; 4]> {
    let sys = p.system();
    let u = p.control_u(x)?;
    match rep {
        Representation::El => eval_el_dynamics(sys, x, u_pl(sys, x, u)),
        Representation::Spong | Representation::Zx => {
            let f = drift(sys, x);
            let g = input_field(sys, x.x1);
            Ok([f[0], f[1], f[2] + g[2] * u, f[3] + u])
        }
    }
}

/// Field in `(x1, x3, z1, z2)`.
pub fn zx_field(p: &SynthesisProfile, y: &[f64; 4]) -> Result<[f64; 4]> {
    let sys = p.system();
    let [x1, x3, z1, z2] = *y;
    let s = p.checked_scaling(x1)?;
    let (k, dk) = (p.k(x1), p.dk(x1));
    let (g1, g2) = p.gains();
    let gz = g1 * z1 + g2 * z2;
    let cbar = sys.c_bar_u(x1);
    let x3_dot =
        p.beta(x1) * x3 * x3 - sys.grad_u_v(x1, k + z1) / s - cbar * (z2 + 2.0 * dk * x3) * z2 / s
            + sys.m_au(x1) * gz / s;
    Ok([x3, x3_dot, z2, -gz])
}

fn zx_to_x(p: &SynthesisProfile, y: &[f64; 4]) -> State4 {
    let [x1, x3, z1, z2] = *y;
    State4::new(x1, p.k(x1) + z1, x3, p.dk(x1) * x3 + z2)
}

fn zx_to_x_rate(p: &SynthesisProfile, y: &[f64; 4], dy: &[f64; 4]) -> [f64; 4] {
    let [x1, x3, _, _] = *y;
    let (dk, ddk) = (p.dk(x1), p.ddk(x1));
    [
        dy[0],
        dk * x3 + dy[2],
        dy[1],
        ddk * x3 * x3 + dk * dy[1] + dy[3],
    ]
}

/// Runs the closed loop from `x0`. Configuration problems are errors; runtime
/// failures truncate the trajectory and are recorded in `abort`.
pub fn simulate_closed_loop(
    p: &SynthesisProfile,
    x0: State4,
    cfg: &IntegratorConfig,
    rep: Representation,
) -> Result<Trajectory> {
    cfg.validate()?;
    let x0 = State4::checked(x0.to_array())?;
    let opts = cfg.ode_options();
    let (dense, abort) = match rep {
        Representation::El | Representation::Spong => {
            let out = solve(
                |_, y: &[f64; 4]| closed_loop_field(p, &State4::from_array(*y), rep),
                0.0,
                x0.to_array(),
                cfg.t_end,
                &opts,
            );
            (out.solution, out.error)
        }
        Representation::Zx => {
            let z0 = p.phi(&x0);
            let out = solve(
                |_, y: &[f64; 4]| zx_field(p, y),
                0.0,
                [x0.x1, x0.x3, z0[0], z0[1]],
                cfg.t_end,
                &opts,
            );
            let s = out.solution;
            let y: Vec<[f64; 4]> = s.y.iter().map(|y| zx_to_x(p, y).to_array()).collect();
            let dy =
                s.y.iter()
                    .zip(&s.dy)
                    .map(|(y, d)| zx_to_x_rate(p, y, d))
                    .collect();
            let mut y = y;
            // keep the exact starting point
            y[0] = x0.to_array();
            (Solution { t: s.t, y, dy }, out.error)
        }
    };

    let mut traj = Trajectory {
        t: Vec::new(),
        x: Vec::new(),
        z: Vec::new(),
        u: Vec::new(),
        hx: Vec::new(),
        dense,
        representation: rep,
        abort,
    };
    for (t, y) in traj.dense.resample(cfg.output_dt) {
        let x = State4::from_array(y);
        let z = p.phi(&x);
        let u = match rep {
            Representation::Zx => p.v_control(&x, z),
            _ => p.control_u(&x),
        };
        let u = match u {
            Ok(u) => u,
            Err(e) => {
                traj.abort.get_or_insert(e);
                break;
            }
        };
        traj.t.push(t);
        traj.x.push(x);
        traj.z.push(z);
        traj.u.push(u);
        traj.hx.push(energy_hx(p, &x));
    }
    Ok(traj)
}

/// Closed-form solution of `ż = (z2, -γ1 z1 - γ2 z2)`.
pub fn linear_z(gamma1: f64, gamma2: f64, z0: [f64; 2], t: f64) -> [f64; 2] {
    // e^{At} = e^{τt/2} [c(t) I + s(t) (A - τ/2 I)], τ = trace A
    let tau = -gamma2;
    let disc = 0.25 * gamma2 * gamma2 - gamma1;
    let (c, s) = if disc > 0.0 {
        let w = disc.sqrt();
        ((w * t).cosh(), (w * t).sinh() / w)
    } else if disc < 0.0 {
        let w = (-disc).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        (1.0, t)
    };
    let e = (0.5 * tau * t).exp();
    let b = [[-0.5 * tau, 1.0], [-gamma1, -gamma2 - 0.5 * tau]];
    [
        e * (c * z0[0] + s * (b[0][0] * z0[0] + b[0][1] * z0[1])),
        e * (c * z0[1] + s * (b[1][0] * z0[0] + b[1][1] * z0[1])),
    ]
}

/// Crossings of `g(x) = 0` on the dense output, localized to 1e-9 s.
pub fn poincare_crossings(
    traj: &Trajectory,
    g: impl Fn(&State4) -> f64,
    direction: Direction,
) -> Vec<(f64, State4)> {
    crossings(
        &traj.dense,
        |_, y| g(&State4::from_array(*y)),
        direction,
        1e-9,
    )
    .into_iter()
    .map(|(t, y)| (t, State4::from_array(y)))
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitStatus {
    Periodic,
    /// Tail crossing intervals vary by more than 1%.
    NotConverged,
    /// The state does not move on the tail.
    PointOrbit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSummary {
    pub status: OrbitStatus,
    pub tail_start: f64,
    pub period: Option<f64>,
    /// Relative spread (max - min) / mean of the tail crossing intervals.
    pub period_spread: Option<f64>,
    pub crossings: usize,
    /// Half peak-to-peak of x1..x4 on the tail.
    pub amplitude: [f64; 4],
    pub mean: [f64; 4],
    pub max_abs: [f64; 4],
    pub hx_mean: f64,
    /// (max - min) / |mean| of `H_x` on the tail.
    pub hx_variation: f64,
}

/// Steady-state orbit on the last `tail_fraction` of the run. The period is
/// measured from zero crossings of `x3` in both directions, one period being
/// two crossings apart.
pub fn extract_steady_orbit(traj: &Trajectory, tail_fraction: f64) -> Result<OrbitSummary> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "tail_fraction".into(),
            value: tail_fraction,
            reason: "must lie in (0, 1]",
        });
    }
    let (t0, t1) = (traj.dense.t_start(), traj.t_end());
    let tail_start = t1 - tail_fraction * (t1 - t0);
    let mut amplitude = [0.0; 4];
    let mut max_abs = [0.0; 4];
    for k in 0..4 {
        let (lo, hi) = traj.dense.range_of(k, tail_start, t1);
        amplitude[k] = 0.5 * (hi - lo);
        max_abs[k] = lo.abs().max(hi.abs());
    }
    let idx: Vec<usize> = (0..traj.t.len())
        .filter(|&i| traj.t[i] >= tail_start)
        .collect();
    let mut mean = [0.0; 4];
    let mut hx = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &i in &idx {
        let a = traj.x[i].to_array();
        for k in 0..4 {
            mean[k] += a[k] / idx.len() as f64;
        }
        hx.0 = hx.0.min(traj.hx[i]);
        hx.1 = hx.1.max(traj.hx[i]);
        hx.2 += traj.hx[i] / idx.len() as f64;
    }
    if idx.is_empty() {
        return Err(Error::analysis("no samples on the tail"));
    }
    let hx_variation = if hx.2 == 0.0 {
        hx.1 - hx.0
    } else {
        (hx.1 - hx.0) / hx.2.abs()
    };
    let scale = 1.0 + max_abs.iter().cloned().fold(0.0, f64::max);
    let base = OrbitSummary {
        status: OrbitStatus::PointOrbit,
        tail_start,
        period: None,
        period_spread: None,
        crossings: 0,
        amplitude,
        mean,
        max_abs,
        hx_mean: hx.2,
        hx_variation,
    };
    if amplitude.iter().all(|a| *a <= 1e-9 * scale) {
        return Ok(base);
    }
    let times: Vec<f64> = poincare_crossings(traj, |x| x.x3, Direction::Either)
        .into_iter()
        .map(|c| c.0)
        .filter(|&t| t >= tail_start)
        .collect();
    if times.len() < 5 {
        return Err(Error::analysis(format!(
            "only {} section crossings on the tail (need 5)",
            times.len()
        )));
    }
    let intervals: Vec<f64> = times.windows(3).map(|w| w[2] - w[0]).collect();
    let period = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let spread = (intervals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - intervals.iter().cloned().fold(f64::INFINITY, f64::min))
        / period;
    Ok(OrbitSummary {
        status: if spread > 0.01 {
            OrbitStatus::NotConverged
        } else {
            OrbitStatus::Periodic
        },
        period: Some(period),
        period_spread: Some(spread),
        crossings: times.len(),
        ..base
    })
}

/// Writes the trajectory samples with 17 significant digits.
pub fn write_csv<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    w.write_all(CSV_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for row in traj.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        w.write_all(line.join(",").as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a trajectory CSV, validating header, column count and finiteness.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<[f64; 9]>> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::Schema(e.to_string())),
        None => return Err(Error::Schema("empty file".into())),
    };
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Schema(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Schema(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = [0.0; 9];
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Schema(format!(
                "line {}: expected 9 columns, found {}",
                n + 2,
                fields.len()
            )));
        }
        for (k, f) in fields.iter().enumerate() {
            row[k] = f
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("line {}: bad number `{f}`", n + 2)))?;
        }
        if row[0] <= prev_t {
            return Err(Error::Schema(format!(
                "line {}: time not increasing",
                n + 2
            )));
        }
        prev_t = row[0];
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    Ok(rows)
}
