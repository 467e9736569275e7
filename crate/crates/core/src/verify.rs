//! Executable certificates for a synthesized controller: invariance (FBI)
//! residuals, off-manifold decay, energy bounds and the comparison lemma,
//! closed-form cross-checks and the decaying-perturbation counterexample.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechmodel::{linspace, Furuta, Pendubot, State4};
use crate::ode::{crossings, solve, Direction, OdeOptions};
use crate::prefeedback::drift;
use crate::quad::integrate;
use crate::simcore::{
    closed_loop_field, energy_hx, extract_steady_orbit, simulate_closed_loop, IntegratorConfig,
    OrbitStatus, Representation, Trajectory,
};
use crate::synthesis::{bisect, SynthesisProfile};
use crate::target::{orbit_from_ic, target_field};

/// Rectangular grid of `n1 × n2` target states.
pub fn grid2(r1: (f64, f64), r2: (f64, f64), n1: usize, n2: usize) -> Vec<[f64; 2]> {
    let a = linspace(r1.0, r1.1, n1);
    let b = linspace(r2.0, r2.1, n2);
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| [x, y]))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FbiResult {
    /// max |r| / (1 + |f(π(ξ))|)
    pub max_scaled: f64,
    pub max_abs: f64,
    pub worst_at: [f64; 2],
}

/// `g⊥(π(ξ)) · [f(π(ξ)) - ∇π(ξ) α(ξ)]` with `g⊥ = (0, 0, 1, m_au/m_uu)`.
pub fn fbi_point(p: &SynthesisProfile, xi: [f64; 2]) -> (f64, f64) {
    let sys = p.system();
    let x = p.pi_map(xi);
    let f = drift(sys, &x);
    let alpha = target_field(p, xi);
    let (dk, ddk) = (p.dk(xi[0]), p.ddk(xi[0]));
    let dpi_alpha = [
        alpha[0],
        dk * alpha[0],
        alpha[1],
        ddk * xi[1] * alpha[0] + dk * alpha[1],
    ];
    let ratio = sys.m_au(xi[0]) / sys.m_uu(xi[0]);
    let r = (f[2] - dpi_alpha[2]) + ratio * (f[3] - dpi_alpha[3]);
    (r, norm(&f))
}

pub fn fbi_residual(p: &SynthesisProfile, grid: &[[f64; 2]]) -> FbiResult {
    let mut out = FbiResult {
        max_scaled: 0.0,
        max_abs: 0.0,
        worst_at: [f64::NAN; 2],
    };
    for &xi in grid {
        let (r, fnorm) = fbi_point(p, xi);
        let scaled = r.abs() / (1.0 + fnorm);
        if !(scaled <= out.max_scaled) {
            out.max_scaled = scaled;
            out.worst_at = xi;
        }
        out.max_abs = out.max_abs.max(r.abs());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewrittenFbi {
    pub beta: f64,
    pub rho: f64,
    /// `|m_uu + m_au K' - s|`, scaled.
    pub denominator: f64,
    /// Closed-form on-manifold control against the pseudo-inverse solution.
    pub control_paths: f64,
    pub worst_at: [f64; 2],
}

impl RewrittenFbi {
    pub fn max(&self) -> f64 {
        self.beta
            .max(self.rho)
            .max(self.denominator)
            .max(self.control_paths)
    }
}

/// `c = -(gᵀg)⁻¹ gᵀ ϖ` with `ϖ = f(π(ξ)) - ∇π α`.
pub fn pseudo_inverse_control(p: &SynthesisProfile, xi: [f64; 2]) -> f64 {
    let sys = p.system();
    let x = p.pi_map(xi);
    let f = drift(sys, &x);
    let alpha = target_field(p, xi);
    let (dk, ddk) = (p.dk(xi[0]), p.ddk(xi[0]));
    let dpi_alpha = [
        alpha[0],
        dk * alpha[0],
        alpha[1],
        ddk * xi[1] * alpha[0] + dk * alpha[1],
    ];
    let g = [0.0, 0.0, -sys.m_au(xi[0]) / sys.m_uu(xi[0]), 1.0];
    let gtg: f64 = g.iter().map(|v| v * v).sum();
    let gtw: f64 = (0..4).map(|i| g[i] * (f[i] - dpi_alpha[i])).sum();
    -gtw / gtg
}

pub fn rewritten_fbi_check(p: &SynthesisProfile, grid: &[[f64; 2]]) -> Result<RewrittenFbi> {
    let sys = p.system();
    let mut out = RewrittenFbi {
        beta: 0.0,
        rho: 0.0,
        denominator: 0.0,
        control_paths: 0.0,
        worst_at: [f64::NAN; 2],
    };
    let mut worst = -1.0;
    for &xi in grid {
        let q = xi[0];
        let (dk, ddk) = (p.dk(q), p.ddk(q));
        let den = sys.m_uu(q) + sys.m_au(q) * dk;
        let beta = -(sys.m_au(q) * ddk + sys.c_bar_u(q) * dk * dk + sys.c_a(q)) / den;
        let rho = -sys.grad_u_v(q, p.k(q)) / den;
        let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs());
        let c1 = p.manifold_control(xi)?;
        let c2 = pseudo_inverse_control(p, xi);
        let r = [
            rel(beta, p.beta(q)),
            rel(rho, p.rho(q)),
            (den - p.scaling(q)).abs() / (1.0 + sys.m_uu(q).abs()),
            rel(c1, c2),
        ];
        out.beta = out.beta.max(r[0]);
        out.rho = out.rho.max(r[1]);
        out.denominator = out.denominator.max(r[2]);
        out.control_paths = out.control_paths.max(r[3]);
        let m = r.iter().cloned().fold(0.0, f64::max);
        if m > worst {
            worst = m;
            out.worst_at = xi;
        }
    }
    Ok(out)
}

/// `-max Re λ` for `λ² + γ2 λ + γ1 = 0`.
pub fn predicted_decay_rate(gamma1: f64, gamma2: f64) -> f64 {
    let disc = gamma2 * gamma2 - 4.0 * gamma1;
    if disc >= 0.0 {
        0.5 * (gamma2 - disc.sqrt())
    } else {
        0.5 * gamma2
    }
}

/// |z| below this is treated as numerically zero.
pub const Z_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZDecayFit {
    pub fitted_rate: Option<f64>,
    pub predicted_rate: f64,
    pub relative_error: Option<f64>,
    pub max_norm: f64,
    pub final_norm: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

impl ZDecayFit {
    /// Nothing to fit: |z| never rises above the floor.
    pub fn vacuous(&self) -> bool {
        self.fitted_rate.is_none()
    }
}

/// Least-squares slope of `ln |z|` after one dominant time constant, while
/// `|z|` is above the numerical floor.
pub fn z_decay_fit(traj: &Trajectory, gamma1: f64, gamma2: f64) -> ZDecayFit {
    let predicted = predicted_decay_rate(gamma1, gamma2);
    let norms: Vec<f64> = traj.z.iter().map(|z| norm(z)).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let final_norm = norms.last().copied().unwrap_or(0.0);
    let t_skip = traj.t.first().copied().unwrap_or(0.0) + 1.0 / predicted;
    let floor = Z_FLOOR.max(1e-7 * max_norm);
    let pts: Vec<(f64, f64)> = traj
        .t
        .iter()
        .zip(&norms)
        .take_while(|(_, n)| **n > floor)
        .filter(|(t, _)| **t >= t_skip)
        .map(|(t, n)| (*t, n.ln()))
        .collect();
    let mut out = ZDecayFit {
        fitted_rate: None,
        predicted_rate: predicted,
        relative_error: None,
        max_norm,
        final_norm,
        window: (f64::NAN, f64::NAN),
        samples: pts.len(),
    };
    if max_norm <= Z_FLOOR || pts.len() < 10 {
        return out;
    }
    let (_, slope) = linear_fit(&pts);
    out.fitted_rate = Some(-slope);
    out.relative_error = Some((-slope - predicted).abs() / predicted);
    out.window = (pts[0].0, pts[pts.len() - 1].0);
    out
}

/// `(intercept, slope)` of the least-squares line.
fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// `a e^{-k t}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub a: f64,
    pub k: f64,
}

impl Envelope {
    pub const ZERO: Envelope = Envelope { a: 0.0, k: 1.0 };

    pub fn at(&self, t: f64) -> f64 {
        self.a * (-self.k * t).exp()
    }
}

/// Exponential envelope of non-negative samples: log-linear fit through the
/// local peaks, then the amplitude is raised until every sample above the
/// floor lies under the envelope. `None` when the peaks do not decay.
pub fn fit_envelope(t: &[f64], v: &[f64]) -> Option<Envelope> {
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    if vmax == 0.0 {
        return Some(Envelope::ZERO);
    }
    let floor = 1e-14f64.max(1e-9 * vmax);
    let n = v.len();
    let above: Vec<usize> = (0..n).filter(|&i| v[i] > floor).collect();
    let peaks: Vec<(f64, f64)> = above
        .iter()
        .filter(|&&i| (i == 0 || v[i] >= v[i - 1]) && (i + 1 == n || v[i] >= v[i + 1]))
        .map(|&i| (t[i], v[i].ln()))
        .collect();
    let pts = if peaks.len() >= 3 {
        peaks
    } else {
        above.iter().map(|&i| (t[i], v[i].ln())).collect()
    };
    if pts.len() < 2 {
        return Some(Envelope { a: vmax, k: 1.0 });
    }
    let (_, slope) = linear_fit(&pts);
    let k = -slope;
    if !(k > 0.0) {
        return None;
    }
    let a = above
        .iter()
        .map(|&i| v[i] * (k * t[i]).exp())
        .fold(0.0, f64::max);
    Some(Envelope { a, k })
}

/// `(ε1, ε2)` with `Ḣ_x = ε1 x3² + ε2 x3` along the closed loop.
pub fn epsilon_terms(p: &SynthesisProfile, x: &State4) -> Result<(f64, f64)> {
    let sys = p.system();
    let q = x.x1;
    let s = p.checked_scaling(q)?;
    let [z1, z2] = p.phi(x);
    let (k, dk, m) = (p.k(q), p.dk(q), p.mass(q));
    let (g1, g2) = p.gains();
    let cbar = sys.c_bar_u(q);
    let eps1 = -2.0 * cbar * dk * z2 * m / s;
    let eps2 = m
        * ((sys.grad_u_v(q, k) - sys.grad_u_v(q, k + z1)) / s - cbar * z2 * z2 / s
            + sys.m_au(q) * (g1 * z1 + g2 * z2) / s);
    Ok((eps1, eps2))
}

/// `Ḣ_x` by the chain rule through the closed-loop field.
pub fn energy_rate(p: &SynthesisProfile, x: &State4) -> Result<f64> {
    let xd = closed_loop_field(p, x, Representation::Spong)?;
    let q = x.x1;
    Ok(
        (0.5 * p.mass_slope(q) * x.x3 * x.x3 + p.potential_slope(q)) * x.x3
            + p.mass(q) * x.x3 * xd[2],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// (max - min) / |mean| of `H_x` on the tail.
    pub tail_variation: f64,
    /// max |Ḣ_x - (ε1 x3² + ε2 x3)| / (1 + |Ḣ_x|)
    pub identity_residual: f64,
    /// Largest excess of `Ḣ_x` over the pointwise bound, scaled by `1 + |Ḣ_x|`.
    pub bound_violation: f64,
    /// max |central difference of `H_x` on the dense output - `Ḣ_x`| / (1 + |Ḣ_x|)
    pub fd_deviation: f64,
    pub bound_worst_t: f64,
    /// Smallest `m` and `U` over the visited `x1` range.
    pub m_min: f64,
    pub u_min: f64,
    /// Envelopes of `(2/m_min)|ε1|` and `sqrt(2/m_min)|ε2|`.
    pub envelope1: Option<Envelope>,
    pub envelope2: Option<Envelope>,
}

/// Samples of the scaled perturbation terms used by the bound.
pub fn scaled_epsilons(
    p: &SynthesisProfile,
    traj: &Trajectory,
    m_min: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut e1 = Vec::with_capacity(traj.len());
    let mut e2 = Vec::with_capacity(traj.len());
    for x in &traj.x {
        let (a, b) = epsilon_terms(p, x)?;
        e1.push(2.0 / m_min * a.abs());
        e2.push((2.0 / m_min).sqrt() * b.abs());
    }
    Ok((e1, e2))
}

/// Minimum of `m` and `U` over the `x1` range visited by the run.
pub fn visited_minima(p: &SynthesisProfile, traj: &Trajectory) -> (f64, f64) {
    let (lo, hi) = traj.dense.range_of(0, traj.dense.t_start(), traj.t_end());
    let grid = linspace(lo, hi, 4001);
    let m_min = grid
        .iter()
        .map(|&x| p.mass(x))
        .fold(f64::INFINITY, f64::min);
    let u_min = grid
        .iter()
        .map(|&x| p.potential(x))
        .fold(f64::INFINITY, f64::min);
    (m_min, u_min)
}

pub fn energy_convergence(
    p: &SynthesisProfile,
    traj: &Trajectory,
    tail_fraction: f64,
) -> Result<EnergyReport> {
    if traj.len() < 3 {
        return Err(Error::analysis("trajectory too short"));
    }
    let t_end = traj.t_end();
    let tail_start = t_end - tail_fraction * (t_end - traj.dense.t_start());
    let tail: Vec<f64> = (0..traj.len())
        .filter(|&i| traj.t[i] >= tail_start)
        .map(|i| traj.hx[i])
        .collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let tail_variation = if mean == 0.0 {
        spread
    } else {
        spread / mean.abs()
    };

    let (m_min, u_min) = visited_minima(p, traj);
    let mut identity_residual: f64 = 0.0;
    let mut bound_violation = f64::NEG_INFINITY;
    let mut bound_worst_t = f64::NAN;
    let mut fd_deviation: f64 = 0.0;
    let delta = 1e-4;
    for (i, x) in traj.x.iter().enumerate() {
        let (e1, e2) = epsilon_terms(p, x)?;
        let hdot = energy_rate(p, x)?;
        identity_residual = identity_residual
            .max((hdot - (e1 * x.x3 * x.x3 + e2 * x.x3)).abs() / (1.0 + hdot.abs()));

        let t = traj.t[i];
        let h_shift = (traj.hx[i] - u_min).max(0.0);
        let bound =
            2.0 / m_min * e1.abs() * h_shift + (2.0 / m_min).sqrt() * e2.abs() * h_shift.sqrt();
        let excess = (hdot - bound) / (1.0 + hdot.abs());
        if excess > bound_violation {
            bound_violation = excess;
            bound_worst_t = t;
        }
        if t - delta >= traj.dense.t_start() && t + delta <= t_end {
            let h_at = |s: f64| energy_hx(p, &traj.state_at(s));
            let hdot_fd = (h_at(t + delta) - h_at(t - delta)) / (2.0 * delta);
            fd_deviation = fd_deviation.max((hdot_fd - hdot).abs() / (1.0 + hdot.abs()));
        }
    }
    let (s1, s2) = scaled_epsilons(p, traj, m_min)?;
    Ok(EnergyReport {
        tail_variation,
        identity_residual,
        bound_violation,
        bound_worst_t,
        fd_deviation,
        m_min,
        u_min,
        envelope1: fit_envelope(&traj.t, &s1),
        envelope2: fit_envelope(&traj.t, &s2),
    })
}

/// Closed-form solution of `ṙ = a1 e^{-k1 t} r + a2 e^{-k2 t} √r`, `r(0) = r0`.
pub struct ComparisonSolution {
    a1: f64,
    k1: f64,
    a2: f64,
    k2: f64,
    c1: f64,
}

impl ComparisonSolution {
    pub fn new(a1: f64, k1: f64, a2: f64, k2: f64, r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "r0".into(),
                value: r0,
                reason: "square root is not unique at r0 = 0; need r0 > 0",
            });
        }
        for (name, v) in [("k1", k1), ("k2", k2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    value: v,
                    reason: "decay rate must be positive",
                });
            }
        }
        for (name, v) in [("a1", a1), ("a2", a2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    value: v,
                    reason: "amplitude must be non-negative",
                });
            }
        }
        let c1 = (0.5 * a1 / k1).exp() * r0.sqrt();
        Ok(Self { a1, k1, a2, k2, c1 })
    }

    fn e(&self, t: f64) -> f64 {
        (0.5 * self.a1 / self.k1 * (-self.k1 * t).exp()).exp()
    }

    fn integrand(&self, s: f64) -> f64 {
        0.5 * self.a2 * self.e(s) * (-self.k2 * s).exp()
    }

    /// Value from an already accumulated integral `∫₀ᵗ`.
    fn from_integral(&self, integral: f64, t: f64) -> f64 {
        ((integral + self.c1) / self.e(t)).powi(2)
    }

    pub fn at(&self, t: f64) -> f64 {
        self.from_integral(integrate(|s| self.integrand(s), 0.0, t, 1e-14), t)
    }

    /// Values on an increasing time grid, accumulating the integral piecewise.
    pub fn on_grid(&self, ts: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        let mut prev = 0.0;
        ts.iter()
            .map(|&t| {
                acc += integrate(|s| self.integrand(s), prev, t, 1e-15);
                prev = t;
                self.from_integral(acc, t)
            })
            .collect()
    }

    /// Limit as `t → ∞`.
    pub fn limit(&self) -> f64 {
        let t_far = 60.0 / self.k1.min(self.k2);
        self.at(t_far)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonCheck {
    pub max_rel_dev: f64,
    pub worst_t: f64,
    pub r_end: f64,
    pub r_sup: f64,
    pub r_limit: f64,
    pub bounded: bool,
}

/// Integrates the comparison ODE and measures it against the closed form.
pub fn comparison_bound(
    a1: f64,
    k1: f64,
    a2: f64,
    k2: f64,
    r0: f64,
    t_end: f64,
) -> Result<ComparisonCheck> {
    let exact = ComparisonSolution::new(a1, k1, a2, k2, r0)?;
    let sol = solve(
        |t, r: &[f64; 1]| {
            Ok([a1 * (-k1 * t).exp() * r[0] + a2 * (-k2 * t).exp() * r[0].max(0.0).sqrt()])
        },
        0.0,
        [r0],
        t_end,
        &OdeOptions::rk45(1e-12, 1e-14),
    )
    .into_result()?;
    let reference = exact.on_grid(&sol.t);
    let mut out = ComparisonCheck {
        max_rel_dev: 0.0,
        worst_t: 0.0,
        r_end: sol.last()[0],
        r_sup: 0.0,
        r_limit: exact.limit(),
        bounded: false,
    };
    for ((t, r), e) in sol.t.iter().zip(&sol.y).zip(&reference) {
        let d = (r[0] - e).abs() / e.abs();
        if d > out.max_rel_dev {
            out.max_rel_dev = d;
            out.worst_t = *t;
        }
        out.r_sup = out.r_sup.max(r[0]);
    }
    out.bounded = out.r_limit.is_finite() && out.r_sup <= out.r_limit * (1.0 + 1e-9);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunComparison {
    /// max over the run of `H_x - U_min - r(t)`.
    pub max_violation: f64,
    pub worst_t: f64,
    pub r_end: f64,
}

/// `H_x(t) - U_min ≤ r(t)` with the fitted envelopes and `r(0) = H_x(0) - U_min`.
pub fn comparison_along_run(traj: &Trajectory, energy: &EnergyReport) -> Result<RunComparison> {
    let env1 = energy
        .envelope1
        .ok_or_else(|| Error::analysis("perturbation term 1 has no decaying envelope"))?;
    let env2 = energy
        .envelope2
        .ok_or_else(|| Error::analysis("perturbation term 2 has no decaying envelope"))?;
    let shifted: Vec<f64> = traj.hx.iter().map(|h| h - energy.u_min).collect();
    let r0 = shifted[0].max(f64::MIN_POSITIVE);
    let sol = ComparisonSolution::new(env1.a, env1.k, env2.a, env2.k, r0)?;
    let t0 = traj.t[0];
    let ts: Vec<f64> = traj.t.iter().map(|t| t - t0).collect();
    let r = sol.on_grid(&ts);
    let mut out = RunComparison {
        max_violation: f64::NEG_INFINITY,
        worst_t: f64::NAN,
        r_end: *r.last().expect("non-empty"),
    };
    for i in 0..ts.len() {
        let v = shifted[i] - r[i];
        if v > out.max_violation {
            out.max_violation = v;
            out.worst_t = traj.t[i];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    Off,
    On,
    /// Perturbation present only at `t = 0`.
    Zeroed,
}

pub const D4_START: [f64; 2] = [-1.0, 1.0];

/// `H = ½ ln(ξ1² + 1) + ½ ξ2²`
pub fn d4_hamiltonian(xi: [f64; 2]) -> f64 {
    0.5 * (xi[0] * xi[0] + 1.0).ln() + 0.5 * xi[1] * xi[1]
}

pub fn d4_field(t: f64, xi: [f64; 2], pert: Perturbation) -> [f64; 2] {
    let e = match pert {
        Perturbation::On => (-t / 5.0).exp(),
        Perturbation::Zeroed if t == 0.0 => 1.0,
        _ => 0.0,
    };
    [xi[1] + e, -xi[0] / (xi[0] * xi[0] + 1.0) - 2.0 * e]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct D4Report {
    pub perturbation: Perturbation,
    pub h0: f64,
    pub h_end: f64,
    pub h_max: f64,
    pub sup_norm: f64,
    /// max |H - H0| / H0
    pub max_h_drift: f64,
    /// First time with `H > 2 H0`.
    pub doubling_time: Option<f64>,
}

pub fn d4_counterexample(pert: Perturbation, t_end: f64, opts: &OdeOptions) -> Result<D4Report> {
    let sol = solve(
        |t, xi: &[f64; 2]| Ok(d4_field(t, *xi, pert)),
        0.0,
        D4_START,
        t_end,
        opts,
    )
    .into_result()?;
    let h0 = d4_hamiltonian(D4_START);
    let hs: Vec<f64> = sol.y.iter().map(|xi| d4_hamiltonian(*xi)).collect();
    let doubling = crossings(
        &sol,
        |_, xi| d4_hamiltonian(*xi) - 2.0 * h0,
        Direction::Rising,
        1e-12,
    );
    Ok(D4Report {
        perturbation: pert,
        h0,
        h_end: *hs.last().expect("non-empty"),
        h_max: hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        sup_norm: sol.y.iter().map(|y| norm(y)).fold(0.0, f64::max),
        max_h_drift: hs.iter().map(|h| (h - h0).abs() / h0).fold(0.0, f64::max),
        doubling_time: doubling.first().map(|c| c.0),
    })
}

/// Doubling time of the perturbed run from the reference integration at
/// rtol 1e-12 (rounded up in the sixth decimal).
pub const D4_DOUBLING_TIME: f64 = 1.784854;

/// Closed forms quoted for the benchmark designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum QuotedForm {
    /// `cos(x)^(-κ1)`
    FurutaMass { kappa1: f64 },
    /// `a3 / (J κ2) (cos(x)^(-κ2) - 1)`
    FurutaPotential { a3_over_j: f64, kappa2: f64 },
    /// `1 / (2 c2 + c3 cos x)²`
    PendubotMass { c2: f64, c3: f64 },
    /// `2 c5 g (c2 + c3 cos x) / (c3² (2 c2 + c3 cos x)²)`
    PendubotPotential { c2: f64, c3: f64, c5: f64, g: f64 },
}

impl QuotedForm {
    pub fn furuta(f: &Furuta, k1: f64) -> [QuotedForm; 2] {
        let a1s = f.a1 * f.a1;
        let kappa1 = (1.0 + k1) * (1.0 + k1 + a1s) / (a1s * k1);
        let kappa2 = (2.0 + 4.0 * k1 + 2.0 * a1s + 2.0 * k1 * k1 + k1 * a1s) / a1s;
        [
            QuotedForm::FurutaMass { kappa1 },
            QuotedForm::FurutaPotential {
                a3_over_j: f.a3 / f.j,
                kappa2,
            },
        ]
    }

    pub fn pendubot(p: &Pendubot) -> [QuotedForm; 2] {
        [
            QuotedForm::PendubotMass { c2: p.c2, c3: p.c3 },
            QuotedForm::PendubotPotential {
                c2: p.c2,
                c3: p.c3,
                c5: p.c5,
                g: p.g,
            },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            QuotedForm::FurutaMass { .. } => "furuta-mass",
            QuotedForm::FurutaPotential { .. } => "furuta-potential",
            QuotedForm::PendubotMass { .. } => "pendubot-mass",
            QuotedForm::PendubotPotential { .. } => "pendubot-potential",
        }
    }

    pub fn is_potential(&self) -> bool {
        matches!(
            self,
            QuotedForm::FurutaPotential { .. } | QuotedForm::PendubotPotential { .. }
        )
    }

    /// The Furuta forms carry exponents that do not follow from integrating β.
    pub fn expected_to_match(&self) -> bool {
        matches!(
            self,
            QuotedForm::PendubotMass { .. } | QuotedForm::PendubotPotential { .. }
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            QuotedForm::FurutaMass { kappa1 } => x.cos().powf(-kappa1),
            QuotedForm::FurutaPotential { a3_over_j, kappa2 } => {
                a3_over_j / kappa2 * (x.cos().powf(-kappa2) - 1.0)
            }
            QuotedForm::PendubotMass { c2, c3 } => (2.0 * c2 + c3 * x.cos()).powi(-2),
            QuotedForm::PendubotPotential { c2, c3, c5, g } => {
                let d = 2.0 * c2 + c3 * x.cos();
                2.0 * c5 * g * (c2 + c3 * x.cos()) / (c3 * c3 * d * d)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCheck {
    pub form: QuotedForm,
    /// Best positive multiplier `c` in `computed ≈ c · quoted` (after removing
    /// the value at 0 for potentials).
    pub multiplier: f64,
    /// max |computed - c · quoted| / max |computed|
    pub max_rel_residual: f64,
    pub worst_at: f64,
}

pub fn closed_form_crosscheck(p: &SynthesisProfile, form: QuotedForm, grid: &[f64]) -> CrossCheck {
    let (q0, f0) = if form.is_potential() {
        (p.potential(0.0), form.eval(0.0))
    } else {
        (0.0, 0.0)
    };
    let pairs: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|&x| {
            let q = if form.is_potential() {
                p.potential(x)
            } else {
                p.mass(x)
            };
            (x, q - q0, form.eval(x) - f0)
        })
        .collect();
    let sqf: f64 = pairs.iter().map(|p| p.1 * p.2).sum();
    let sff: f64 = pairs.iter().map(|p| p.2 * p.2).sum();
    let c = if sff > 0.0 { sqf / sff } else { f64::NAN };
    let scale = pairs
        .iter()
        .map(|p| p.1.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut out = CrossCheck {
        form,
        multiplier: c,
        max_rel_residual: 0.0,
        worst_at: f64::NAN,
    };
    for (x, q, f) in pairs {
        let r = (q - c * f).abs() / scale;
        if !(r <= out.max_rel_residual) {
            out.max_rel_residual = r;
            out.worst_at = x;
        }
    }
    out
}

/// Stationary point of a quoted form near `guess`, from the sign change of a
/// central-difference derivative.
pub fn quoted_stationary_point(form: &QuotedForm, guess: f64, half_width: f64) -> Option<f64> {
    let h = 1e-4;
    let d = |x: f64| (form.eval(x + h) - form.eval(x - h)) / (2.0 * h);
    let (a, b) = (guess - half_width, guess + half_width);
    (d(a).signum() != d(b).signum()).then(|| bisect(d, a, b, 1e-12))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CotsBounds {
    pub s_abs_min: f64,
    pub s_abs_max: f64,
    pub m_min: f64,
    pub m_max: f64,
}

/// Extremes of `|s|` and `m` over the operating interval.
pub fn cots_bounds(p: &SynthesisProfile, n: usize) -> CotsBounds {
    let (lo, hi) = p.interval();
    let mut b = CotsBounds {
        s_abs_min: f64::INFINITY,
        s_abs_max: 0.0,
        m_min: f64::INFINITY,
        m_max: 0.0,
    };
    for x in linspace(lo, hi, n) {
        let s = p.scaling(x).abs();
        let m = p.mass(x);
        b.s_abs_min = b.s_abs_min.min(s);
        b.s_abs_max = b.s_abs_max.max(s);
        b.m_min = b.m_min.min(m);
        b.m_max = b.m_max.max(m);
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GravityBound {
    pub lipschitz: f64,
    /// max |∇uV(x1, K) - ∇uV(x1, K + z1)| / (L |z1|)
    pub max_ratio: f64,
    pub worst_t: f64,
}

/// Lipschitz bound of the gravity difference along a run, with `L` the
/// largest mixed partial `∂²V/∂x2∂x1` met on the run.
pub fn gravity_difference_bound(p: &SynthesisProfile, traj: &Trajectory) -> GravityBound {
    let sys = p.system();
    let lipschitz = traj
        .x
        .iter()
        .map(|x| {
            let k = p.k(x.x1);
            sys.d2v_au(x.x1, x.x2)
                .abs()
                .max(sys.d2v_au(x.x1, k).abs())
                .max(sys.d2v_au(x.x1, 0.5 * (k + x.x2)).abs())
        })
        .fold(0.0, f64::max);
    let mut out = GravityBound {
        lipschitz,
        max_ratio: 0.0,
        worst_t: f64::NAN,
    };
    for (t, x) in traj.t.iter().zip(&traj.x) {
        let k = p.k(x.x1);
        let z1 = x.x2 - k;
        let lhs = (sys.grad_u_v(x.x1, k) - sys.grad_u_v(x.x1, x.x2)).abs();
        let ratio = if z1.abs() * lipschitz > 1e-13 {
            lhs / (lipschitz * z1.abs())
        } else if lhs <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > out.max_ratio {
            out.max_ratio = ratio;
            out.worst_t = *t;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// A known discrepancy with a quoted formula, recorded but not a failure.
    ExpectedDeviation,
    /// Nothing to measure (the quantity sits at its floor).
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub worst_residual: f64,
    pub location: String,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, ok: bool, worst: f64, location: String, tol: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            worst_residual: worst,
            location,
            tolerance: tol,
            detail,
        }
    }

    fn error(name: &str, e: &Error) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Fail,
            worst_residual: f64::INFINITY,
            location: String::new(),
            tolerance: f64::NAN,
            detail: e.to_string(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertReport {
    pub scenario: String,
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

impl CertReport {
    pub fn new(scenario: impl Into<String>, checks: Vec<CheckResult>) -> Self {
        let all_passed = checks.iter().all(CheckResult::passed);
        Self {
            scenario: scenario.into(),
            all_passed,
            checks,
        }
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        fn field(s: &str) -> String {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        }
        let mut out = String::from("name,status,worst_residual,location,tolerance,detail\n");
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::ExpectedDeviation => "expected-deviation",
                CheckStatus::Vacuous => "vacuous",
            };
            let _ = writeln!(
                out,
                "{},{},{:e},{},{:e},{}",
                field(&c.name),
                status,
                c.worst_residual,
                field(&c.location),
                c.tolerance,
                field(&c.detail)
            );
        }
        out
    }
}

/// Everything the checks read: the profile, the scenario run and grids.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub label: String,
    pub profile: SynthesisProfile,
    pub x0: State4,
    pub trajectory: Trajectory,
    /// Operating grid for the FBI checks, `n1 × n2` over `xi1_range × [-3, 3]`.
    pub fbi_grid: Vec<[f64; 2]>,
    pub xi1_range: (f64, f64),
    pub quoted_forms: Vec<QuotedForm>,
    pub tail_fraction: f64,
}

impl VerifyContext {
    pub fn new(
        label: impl Into<String>,
        profile: SynthesisProfile,
        x0: State4,
        cfg: &IntegratorConfig,
        xi1_range: (f64, f64),
        quoted_forms: Vec<QuotedForm>,
    ) -> Result<Self> {
        let trajectory = simulate_closed_loop(&profile, x0, cfg, Representation::El)?;
        Ok(Self {
            label: label.into(),
            fbi_grid: grid2(xi1_range, (-3.0, 3.0), 40, 25),
            profile,
            x0,
            trajectory,
            xi1_range,
            quoted_forms,
            tail_fraction: 0.2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum CheckKind {
    /// Target level sets are closed orbits.
    TargetOrbit,
    Fbi,
    RewrittenFbi,
    /// `φ ∘ π ≡ 0`.
    ManifoldImage,
    /// Off-manifold decay rate and boundedness of the run.
    Attractivity,
    /// Starting on the manifold keeps `z = 0` and `H_x` constant.
    ManifoldInvariance,
    EnergyConvergence,
    EnergyIdentity,
    EnergyBound,
    ComparisonLemma,
    ComparisonOnRun,
    GravityBound,
    CotsBounds,
    PotentialMinima,
    SteadyOrbit,
    ClosedForm(QuotedForm),
    D4(Perturbation),
}

impl CheckKind {
    /// All checks for a scenario, optionally with the counterexample runs.
    pub fn for_context(ctx: &VerifyContext, with_d4: bool) -> Vec<CheckKind> {
        let mut v = vec![
            CheckKind::TargetOrbit,
            CheckKind::Fbi,
            CheckKind::RewrittenFbi,
            CheckKind::ManifoldImage,
            CheckKind::Attractivity,
            CheckKind::ManifoldInvariance,
            CheckKind::EnergyConvergence,
            CheckKind::EnergyIdentity,
            CheckKind::EnergyBound,
            CheckKind::ComparisonLemma,
            CheckKind::ComparisonOnRun,
            CheckKind::GravityBound,
            CheckKind::CotsBounds,
            CheckKind::PotentialMinima,
            CheckKind::SteadyOrbit,
        ];
        v.extend(ctx.quoted_forms.iter().map(|f| CheckKind::ClosedForm(*f)));
        if with_d4 {
            v.extend([
                CheckKind::D4(Perturbation::Off),
                CheckKind::D4(Perturbation::On),
                CheckKind::D4(Perturbation::Zeroed),
            ]);
        }
        v
    }

    pub fn name(&self) -> String {
        match self {
            CheckKind::TargetOrbit => "target-orbit".into(),
            CheckKind::Fbi => "fbi-residual".into(),
            CheckKind::RewrittenFbi => "fbi-rewritten".into(),
            CheckKind::ManifoldImage => "manifold-image".into(),
            CheckKind::Attractivity => "attractivity".into(),
            CheckKind::ManifoldInvariance => "manifold-invariance".into(),
            CheckKind::EnergyConvergence => "energy-convergence".into(),
            CheckKind::EnergyIdentity => "energy-identity".into(),
            CheckKind::EnergyBound => "energy-bound".into(),
            CheckKind::ComparisonLemma => "comparison-closed-form".into(),
            CheckKind::ComparisonOnRun => "comparison-on-run".into(),
            CheckKind::GravityBound => "gravity-lipschitz".into(),
            CheckKind::CotsBounds => "scaling-mass-bounds".into(),
            CheckKind::PotentialMinima => "potential-minima".into(),
            CheckKind::SteadyOrbit => "steady-orbit".into(),
            CheckKind::ClosedForm(f) => format!("closed-form-{}", f.name()),
            CheckKind::D4(p) => format!(
                "d4-{}",
                match p {
                    Perturbation::Off => "conservative",
                    Perturbation::On => "perturbed",
                    Perturbation::Zeroed => "zeroed",
                }
            ),
        }
    }

    pub fn run(&self, ctx: &VerifyContext) -> CheckResult {
        let name = self.name();
        let name = name.as_str();
        let p = &ctx.profile;
        let traj = &ctx.trajectory;
        match self {
            CheckKind::TargetOrbit => {
                let x_star = match p.nearest_minimum(0.5 * (ctx.xi1_range.0 + ctx.xi1_range.1)) {
                    Ok(m) => m.x1,
                    Err(e) => return CheckResult::error(name, &e),
                };
                let xi0 = [x_star + 0.35, 0.0];
                match orbit_from_ic(p, xi0) {
                    Ok(o) => {
                        let spread = ((o.period - o.period_alt) / o.period).abs();
                        let ok = o.closure_error <= 1e-5 && spread <= 1e-4;
                        CheckResult::new(
                            name,
                            ok,
                            o.closure_error,
                            format!("xi0 = ({:.6}, 0)", xi0[0]),
                            1e-5,
                            format!(
                                "period {:.9} s, section disagreement {:.2e}, turning points ({:.6}, {:.6})",
                                o.period, spread, o.turning_points.0, o.turning_points.1
                            ),
                        )
                    }
                    Err(e) => CheckResult::error(name, &e),
                }
            }
            CheckKind::Fbi => {
                let r = fbi_residual(p, &ctx.fbi_grid);
                CheckResult::new(
                    name,
                    r.max_scaled <= 1e-8,
                    r.max_scaled,
                    format!("xi = ({:.6}, {:.6})", r.worst_at[0], r.worst_at[1]),
                    1e-8,
                    format!(
                        "{} grid points, max |residual| {:.3e}",
                        ctx.fbi_grid.len(),
                        r.max_abs
                    ),
                )
            }
            CheckKind::RewrittenFbi => match rewritten_fbi_check(p, &ctx.fbi_grid) {
                Ok(r) => CheckResult::new(
                    name,
                    r.max() <= 1e-9,
                    r.max(),
                    format!("xi = ({:.6}, {:.6})", r.worst_at[0], r.worst_at[1]),
                    1e-9,
                    format!(
                        "beta {:.2e}, rho {:.2e}, denominator {:.2e}, control paths {:.2e}",
                        r.beta, r.rho, r.denominator, r.control_paths
                    ),
                ),
                Err(e) => CheckResult::error(name, &e),
            },
            CheckKind::ManifoldImage => {
                let (worst, at) = ctx
                    .fbi_grid
                    .iter()
                    .map(|&xi| (norm(&p.phi(&p.pi_map(xi))), xi))
                    .fold((-1.0, [f64::NAN; 2]), |a, b| if b.0 > a.0 { b } else { a });
                CheckResult::new(
                    name,
                    worst <= 1e-12,
                    worst,
                    format!("xi = ({:.6}, {:.6})", at[0], at[1]),
                    1e-12,
                    String::new(),
                )
            }
            CheckKind::Attractivity => {
                let (g1, g2) = p.gains();
                let fit = z_decay_fit(traj, g1, g2);
                let vel = traj
                    .x
                    .iter()
                    .map(|x| x.x3.abs().max(x.x4.abs()))
                    .fold(0.0, f64::max);
                let bounded = traj.abort.is_none() && vel.is_finite() && vel < 1e4;
                let rate_ok = fit.relative_error.is_none_or(|e| e <= 0.1);
                let decayed = fit.final_norm <= 1e-6 * fit.max_norm.max(1.0);
                let mut r = CheckResult::new(
                    name,
                    bounded && rate_ok && decayed,
                    fit.relative_error.unwrap_or(0.0),
                    format!("window {:.3}..{:.3} s", fit.window.0, fit.window.1),
                    0.1,
                    format!(
                        "fitted rate {:?}, predicted {:.6}, final |z| {:.3e}, max velocity {:.3e}{}",
                        fit.fitted_rate,
                        fit.predicted_rate,
                        fit.final_norm,
                        vel,
                        traj.abort.as_ref().map(|e| format!(", aborted: {e}")).unwrap_or_default()
                    ),
                );
                if fit.vacuous() && r.status == CheckStatus::Pass {
                    r.status = CheckStatus::Vacuous;
                }
                r
            }
            CheckKind::ManifoldInvariance => {
                let x0 = p.pi_map([ctx.x0.x1, ctx.x0.x3]);
                let cfg = IntegratorConfig {
                    t_end: traj.t_end().min(10.0),
                    rtol: 1e-12,
                    atol: 1e-14,
                    ..IntegratorConfig::default()
                };
                match simulate_closed_loop(p, x0, &cfg, Representation::El) {
                    Ok(run) => {
                        let zmax = run.z.iter().map(|z| norm(z)).fold(0.0, f64::max);
                        let h0 = run.hx[0];
                        let scale = (h0 - visited_minima(p, &run).1).abs().max(1e-12);
                        let drift =
                            run.hx.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max) / scale;
                        CheckResult::new(
                            name,
                            zmax <= 1e-8 && drift <= 1e-6 && run.abort.is_none(),
                            zmax,
                            format!("x0 = pi({:.6}, {:.6})", ctx.x0.x1, ctx.x0.x3),
                            1e-8,
                            format!("relative H_x drift {drift:.3e} (tolerance 1e-6)"),
                        )
                    }
                    Err(e) => CheckResult::error(name, &e),
                }
            }
            CheckKind::EnergyConvergence => match energy_convergence(p, traj, ctx.tail_fraction) {
                Ok(e) => CheckResult::new(
                    name,
                    e.tail_variation <= 0.01,
                    e.tail_variation,
                    format!("last {:.0}% of the run", 100.0 * ctx.tail_fraction),
                    0.01,
                    String::new(),
                ),
                Err(e) => CheckResult::error(name, &e),
            },
            CheckKind::EnergyIdentity => match energy_convergence(p, traj, ctx.tail_fraction) {
                Ok(e) => CheckResult::new(
                    name,
                    e.identity_residual <= 1e-9,
                    e.identity_residual,
                    "all samples".into(),
                    1e-9,
                    "dH/dt = eps1 x3^2 + eps2 x3".into(),
                ),
                Err(e) => CheckResult::error(name, &e),
            },
            CheckKind::EnergyBound => match energy_convergence(p, traj, ctx.tail_fraction) {
                Ok(e) => {
                    let ok = e.bound_violation <= 1e-12
                        && e.envelope1.is_some()
                        && e.envelope2.is_some();
                    CheckResult::new(
                        name,
                        ok,
                        e.bound_violation,
                        format!("t = {:.4}", e.bound_worst_t),
                        1e-12,
                        format!(
                            "envelopes {:?} / {:?}, m_min {:.6e}, U_min {:.6e}, finite-difference deviation {:.2e}",
                            e.envelope1, e.envelope2, e.m_min, e.u_min, e.fd_deviation
                        ),
                    )
                }
                Err(e) => CheckResult::error(name, &e),
            },
            CheckKind::ComparisonLemma => match comparison_bound(1.0, 0.5, 2.0, 0.3, 1.0, 50.0) {
                Ok(c) => CheckResult::new(
                    name,
                    c.max_rel_dev <= 1e-6 && c.bounded,
                    c.max_rel_dev,
                    format!("t = {:.4}", c.worst_t),
                    1e-6,
                    format!(
                        "(a1, k1, a2, k2, r0) = (1, 0.5, 2, 0.3, 1), r(50) = {:.9e}, limit {:.9e}",
                        c.r_end, c.r_limit
                    ),
                ),
                Err(e) => CheckResult::error(name, &e),
            },
            CheckKind::ComparisonOnRun => {
                match energy_convergence(p, traj, ctx.tail_fraction)
                    .and_then(|e| comparison_along_run(traj, &e))
                {
                    Ok(c) => CheckResult::new(
                        name,
                        c.max_violation <= 1e-6,
                        c.max_violation,
                        format!("t = {:.4}", c.worst_t),
                        1e-6,
                        format!("r(t_end) = {:.6e}", c.r_end),
                    ),
                    Err(e) => CheckResult::error(name, &e),
                }
            }
            CheckKind::GravityBound => {
                let g = gravity_difference_bound(p, traj);
                CheckResult::new(
                    name,
                    g.max_ratio <= 1.1,
                    g.max_ratio,
                    format!("t = {:.4}", g.worst_t),
                    1.1,
                    format!("L = {:.6e}", g.lipschitz),
                )
            }
            CheckKind::CotsBounds => {
                let b = cots_bounds(p, 2001);
                let ok = b.s_abs_min > 0.0
                    && b.m_min > 0.0
                    && b.s_abs_max.is_finite()
                    && b.m_max.is_finite();
                CheckResult::new(
                    name,
                    ok,
                    b.s_abs_min.min(b.m_min),
                    "operating interval".into(),
                    0.0,
                    format!(
                        "|s| in [{:.6e}, {:.6e}], m in [{:.6e}, {:.6e}]",
                        b.s_abs_min, b.s_abs_max, b.m_min, b.m_max
                    ),
                )
            }
            CheckKind::PotentialMinima => match p.find_potential_minima(p.interval()) {
                Ok(mins) => {
                    // |U'| / U'' is the distance to the true stationary point to first order.
                    let worst = mins
                        .iter()
                        .map(|m| p.potential_slope(m.x1).abs() / m.curvature.abs())
                        .fold(0.0, f64::max);
                    let list: Vec<String> = mins
                        .iter()
                        .map(|m| {
                            format!(
                                "({:.10}, U = {:.6e}, U'' = {:.3e})",
                                m.x1, m.potential, m.curvature
                            )
                        })
                        .collect();
                    CheckResult::new(
                        name,
                        worst <= 1e-9,
                        worst,
                        String::new(),
                        1e-9,
                        list.join(" "),
                    )
                }
                Err(e) => CheckResult::error(name, &e),
            },
            CheckKind::SteadyOrbit => match extract_steady_orbit(traj, ctx.tail_fraction) {
                Ok(s) => {
                    let ok = s.status == OrbitStatus::Periodic;
                    CheckResult::new(
                        name,
                        ok,
                        s.period_spread.unwrap_or(0.0),
                        format!("tail from t = {:.3}", s.tail_start),
                        0.01,
                        format!(
                            "status {:?}, period {:?}, x1 mean {:.6}, x1 amplitude {:.6}",
                            s.status, s.period, s.mean[0], s.amplitude[0]
                        ),
                    )
                }
                Err(e) => CheckResult::error(name, &e),
            },
            CheckKind::ClosedForm(form) => {
                let (lo, hi) = ctx.xi1_range;
                let grid = linspace(lo, hi, 1001);
                let c = closed_form_crosscheck(p, *form, &grid);
                let tol = 1e-6;
                let matches = c.max_rel_residual <= tol;
                let status = match (matches, form.expected_to_match()) {
                    (true, _) => CheckStatus::Pass,
                    (false, true) => CheckStatus::Fail,
                    (false, false) => CheckStatus::ExpectedDeviation,
                };
                CheckResult {
                    name: name.into(),
                    status,
                    worst_residual: c.max_rel_residual,
                    location: format!("x1 = {:.6}", c.worst_at),
                    tolerance: tol,
                    detail: format!("multiplier {:.12e}", c.multiplier),
                }
            }
            CheckKind::D4(pert) => {
                let t_end = 60.0;
                match d4_counterexample(*pert, t_end, &OdeOptions::rk45(1e-12, 1e-14)) {
                    Ok(r) => {
                        let ok = match pert {
                            Perturbation::Off | Perturbation::Zeroed => {
                                r.max_h_drift <= 1e-6 && r.sup_norm < 10.0
                            }
                            Perturbation::On => {
                                r.doubling_time.is_some_and(|t| t <= D4_DOUBLING_TIME)
                            }
                        };
                        CheckResult::new(
                            name,
                            ok,
                            r.max_h_drift,
                            format!("t in [0, {t_end}]"),
                            1e-6,
                            format!(
                                "H0 {:.9}, H_max {:.6}, sup |xi| {:.6}, doubling time {:?}",
                                r.h0, r.h_max, r.sup_norm, r.doubling_time
                            ),
                        )
                    }
                    Err(e) => CheckResult::error(name, &e),
                }
            }
        }
    }
}

/// Runs the checks in order.
pub fn run_checks(ctx: &VerifyContext, kinds: &[CheckKind]) -> CertReport {
    CertReport::new(
        ctx.label.clone(),
        kinds.iter().map(|k| k.run(ctx)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{make_profile, Design, ProfileSettings};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn furuta(g1: f64, g2: f64) -> SynthesisProfile {
        let f = Furuta::benchmark();
        make_profile(
            Arc::new(f.clone()),
            Design::furuta_k1(&f, 5.0),
            ProfileSettings {
                gamma1: g1,
                gamma2: g2,
                interval: (-1.4, 1.4),
            },
        )
        .unwrap()
    }

    #[test]
    fn decay_rates_of_characteristic_polynomial() {
        assert!((predicted_decay_rate(5.0, 5.0) - 1.381966).abs() < 1e-6);
        assert!((predicted_decay_rate(100.0, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fbi_vanishes_for_furuta() {
        let p = furuta(5.0, 5.0);
        let r = fbi_residual(&p, &grid2((-1.3, 1.3), (-3.0, 3.0), 40, 25));
        assert!(r.max_scaled <= 1e-8, "{r:?}");
    }

    #[test]
    fn pseudo_inverse_matches_closed_form() {
        let p = furuta(5.0, 5.0);
        let r = rewritten_fbi_check(&p, &grid2((-1.3, 1.3), (-3.0, 3.0), 11, 7)).unwrap();
        assert!(r.max() <= 1e-9, "{r:?}");
    }

    #[test]
    fn comparison_special_case() {
        let (a1, k1, r0) = (1.5, 0.7, 2.0);
        let s = ComparisonSolution::new(a1, k1, 0.0, 1.0, r0).unwrap();
        for t in [0.0, 0.5, 3.0, 20.0] {
            let hand = r0 * ((a1 / k1) * (1.0 - (-k1 * t).exp())).exp();
            assert!((s.at(t) - hand).abs() <= 1e-10 * hand);
        }
        assert!(ComparisonSolution::new(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn comparison_generic_case() {
        let c = comparison_bound(1.0, 0.5, 2.0, 0.3, 1.0, 50.0).unwrap();
        assert!(c.max_rel_dev <= 1e-6, "{c:?}");
        assert!(c.bounded);
    }

    #[test]
    fn envelope_dominates_samples() {
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|t| (3.0 * (-0.8 * t).exp() * (5.0 * t).sin()).abs())
            .collect();
        let e = fit_envelope(&t, &v).unwrap();
        assert!((e.k - 0.8).abs() < 0.05, "{e:?}");
        assert!(t
            .iter()
            .zip(&v)
            .all(|(t, v)| *v <= e.at(*t) * (1.0 + 1e-12)));
        let growing: Vec<f64> = t.iter().map(|t| (0.1 * t).exp()).collect();
        assert!(fit_envelope(&t, &growing).is_none());
    }

    #[test]
    fn d4_conservative_case() {
        let r =
            d4_counterexample(Perturbation::Off, 30.0, &OdeOptions::rk45(1e-12, 1e-14)).unwrap();
        assert!((r.h0 - (0.5 + 0.5 * 2f64.ln())).abs() < 1e-15);
        assert!(r.max_h_drift < 1e-6);
        assert!(r.doubling_time.is_none());
        let z =
            d4_counterexample(Perturbation::Zeroed, 30.0, &OdeOptions::rk45(1e-12, 1e-14)).unwrap();
        assert!(z.max_h_drift < 1e-6);
    }

    #[test]
    fn quoted_pendubot_forms_match_after_scaling() {
        let pb = Pendubot::benchmark();
        let p = make_profile(
            Arc::new(pb.clone()),
            Design::pendubot_k2(&pb, -1.0),
            ProfileSettings {
                gamma1: 10.0,
                gamma2: 5.0,
                interval: (-2.0 * PI, 2.0 * PI),
            },
        )
        .unwrap();
        let grid = linspace(-PI, PI, 501);
        let [mass, pot] = QuotedForm::pendubot(&pb);
        let c = closed_form_crosscheck(&p, mass, &grid);
        let expected = (2.0 * pb.c2 + pb.c3).powi(2);
        assert!((c.multiplier - expected).abs() <= 1e-9 * expected);
        assert!(c.max_rel_residual <= 1e-6);
        let c = closed_form_crosscheck(&p, pot, &grid);
        assert!(c.max_rel_residual <= 1e-6, "{c:?}");
        assert!((c.multiplier - expected).abs() <= 1e-6 * expected);
        let x = quoted_stationary_point(&pot, PI, 0.5).unwrap();
        assert!((x - PI).abs() <= 1e-8);
    }

    #[test]
    fn quoted_furuta_forms_deviate() {
        let f = Furuta::benchmark();
        let p = furuta(5.0, 5.0);
        let grid = linspace(-1.3, 1.3, 501);
        for form in QuotedForm::furuta(&f, 5.0) {
            let c = closed_form_crosscheck(&p, form, &grid);
            assert!(c.max_rel_residual > 1e-3, "{c:?}");
        }
        match QuotedForm::furuta(&f, 5.0)[1] {
            QuotedForm::FurutaPotential { kappa2, .. } => assert!((kappa2 - 27.78).abs() < 0.01),
            _ => unreachable!(),
        }
    }

    #[test]
    fn report_serializations() {
        let r = CertReport::new(
            "demo",
            vec![
                CheckResult::new(
                    "a",
                    true,
                    1e-12,
                    "x = 1, y = 2".into(),
                    1e-8,
                    "say \"hi\"".into(),
                ),
                CheckResult::new("b", false, 0.5, String::new(), 0.1, String::new()),
            ],
        );
        assert!(!r.all_passed);
        let t = r.to_toml();
        assert!(t.contains("scenario = \"demo\"") && t.contains("[[checks]]"));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("\"x = 1, y = 2\"") && csv.contains("\"say \"\"hi\"\"\""));
    }
}
