//! Explicit Runge-Kutta integration with cubic Hermite dense output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fixed-step fourth order.
    Rk4,
    /// Adaptive Dormand-Prince 5(4).
    Rk45,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" | "fixed-rk4" => Ok(Method::Rk4),
            "rk45" | "adaptive-rk45" | "dopri5" => Ok(Method::Rk45),
            other => Err(format!("unknown method `{other}` (expected rk4 or rk45)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub method: Method,
    /// Fixed step for RK4.
    pub h: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the adaptive step.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            h: 1e-3,
            rtol: 1e-9,
            atol: 1e-11,
            h_max: f64::INFINITY,
            max_steps: 20_000_000,
        }
    }
}

impl OdeOptions {
    pub fn rk4(h: f64) -> Self {
        Self {
            method: Method::Rk4,
            h,
            ..Self::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self {
            method: Method::Rk45,
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, value: f64| Error::InvalidParameter {
            name: name.into(),
            value,
            reason: "must be positive and finite",
        };
        match self.method {
            Method::Rk4 if !(self.h.is_finite() && self.h > 0.0) => Err(bad("h", self.h)),
            Method::Rk45 if !(self.rtol.is_finite() && self.rtol > 0.0) => {
                Err(bad("rtol", self.rtol))
            }
            Method::Rk45 if !(self.atol.is_finite() && self.atol > 0.0) => {
                Err(bad("atol", self.atol))
            }
            _ => Ok(()),
        }
    }
}

/// Accepted steps with their derivatives; evaluates between nodes by cubic
/// Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
}

impl<const N: usize> Solution<N> {
    fn with_start(t0: f64, y0: [f64; N], dy0: [f64; N]) -> Self {
        Self {
            t: vec![t0],
            y: vec![y0],
            dy: vec![dy0],
        }
    }

    fn push(&mut self, t: f64, y: [f64; N], dy: [f64; N]) {
        self.t.push(t);
        self.y.push(y);
        self.dy.push(dy);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_last(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    pub fn last(&self) -> [f64; N] {
        self.y[self.y.len() - 1]
    }

    /// Dense output; `t` is clamped to the solved range.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return self.y[0];
        }
        if t >= self.t[n - 1] {
            return self.y[n - 1];
        }
        let i = self.t.partition_point(|&s| s <= t) - 1;
        self.hermite(i, t)
    }

    fn hermite(&self, i: usize, t: f64) -> [f64; N] {
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let (h00, h10, h01, h11) = (
            2.0 * s3 - 3.0 * s2 + 1.0,
            s3 - 2.0 * s2 + s,
            -2.0 * s3 + 3.0 * s2,
            s3 - s2,
        );
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = h00 * self.y[i][k]
                + h10 * h * self.dy[i][k]
                + h01 * self.y[i + 1][k]
                + h11 * h * self.dy[i + 1][k];
        }
        out
    }

    /// Time derivative of the dense output.
    pub fn derivative(&self, t: f64) -> [f64; N] {
        let n = self.t.len();
        if n == 1 {
            return self.dy[0];
        }
        let i = (self.t.partition_point(|&s| s <= t).max(1) - 1).min(n - 2);
        self.hermite_slope(i, t)
    }

    fn hermite_slope(&self, i: usize, t: f64) -> [f64; N] {
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let (d00, d10, d01, d11) = (
            6.0 * s2 - 6.0 * s,
            3.0 * s2 - 4.0 * s + 1.0,
            -6.0 * s2 + 6.0 * s,
            3.0 * s2 - 2.0 * s,
        );
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = (d00 * self.y[i][k] + d01 * self.y[i + 1][k]) / h
                + d10 * self.dy[i][k]
                + d11 * self.dy[i + 1][k];
        }
        out
    }

    /// Minimum and maximum of component `k` on `[a, b]`, with interior
    /// extrema located on the interpolant.
    pub fn range_of(&self, k: usize, a: f64, b: f64) -> (f64, f64) {
        let mut lo = self.interpolate(a)[k].min(self.interpolate(b)[k]);
        let mut hi = self.interpolate(a)[k].max(self.interpolate(b)[k]);
        for i in 0..self.len().saturating_sub(1) {
            let (t0, t1) = (self.t[i], self.t[i + 1]);
            if t1 < a || t0 > b {
                continue;
            }
            let (mut l, mut r) = (t0.max(a), t1.min(b));
            let (dl, dr) = (self.hermite_slope(i, l)[k], self.hermite_slope(i, r)[k]);
            let mut candidates = vec![self.hermite(i, l)[k], self.hermite(i, r)[k]];
            if dl.signum() != dr.signum() && dl != 0.0 {
                for _ in 0..80 {
                    let m = 0.5 * (l + r);
                    if self.hermite_slope(i, m)[k].signum() == dl.signum() {
                        l = m;
                    } else {
                        r = m;
                    }
                }
                candidates.push(self.hermite(i, 0.5 * (l + r))[k]);
            }
            for v in candidates {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Samples on `t0, t0 + dt, ...` up to the last node (always included).
    pub fn resample(&self, dt: f64) -> Vec<(f64, [f64; N])> {
        let (a, b) = (self.t_start(), self.t_last());
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let t = a + k as f64 * dt;
            if t >= b - 1e-12 * dt {
                break;
            }
            out.push((t, self.interpolate(t)));
            k += 1;
        }
        out.push((b, self.last()));
        out
    }
}

/// Result of an integration: everything computed up to the point of failure.
#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub solution: Solution<N>,
    pub error: Option<Error>,
}

impl<const N: usize> Outcome<N> {
    pub fn into_result(self) -> Result<Solution<N>> {
        match self.error {
            None => Ok(self.solution),
            Some(e) => Err(e),
        }
    }
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

/// Integrates `ẏ = f(t, y)` from `t0` to `t_end`.
pub fn solve<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
) -> Outcome<N>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let fail = |solution, error| Outcome {
        solution,
        error: Some(error),
    };
    let empty = Solution {
        t: vec![t0],
        y: vec![y0],
        dy: vec![[0.0; N]],
    };
    if let Err(e) = opts.validate() {
        return fail(empty, e);
    }
    if !finite(&y0) {
        return fail(empty, Error::NonFinite("initial state"));
    }
    if !(t_end.is_finite() && t_end > t0) {
        return fail(
            empty,
            Error::InvalidParameter {
                name: "t_end".into(),
                value: t_end,
                reason: "must exceed the start time",
            },
        );
    }
    let dy0 = match f(t0, &y0) {
        Ok(d) if finite(&d) => d,
        Ok(_) => return fail(empty, Error::NonFinite("vector field")),
        Err(e) => return fail(empty, e),
    };
    let sol = Solution::with_start(t0, y0, dy0);
    match opts.method {
        Method::Rk4 => rk4(f, sol, t_end, opts),
        Method::Rk45 => dopri5(f, sol, t_end, opts),
    }
}

fn rk4<const N: usize, F>(
    mut f: F,
    mut sol: Solution<N>,
    t_end: f64,
    opts: &OdeOptions,
) -> Outcome<N>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let t0 = sol.t_start();
    let h = opts.h;
    let steps = ((t_end - t0) / h - 1e-9).ceil().max(1.0) as usize;
    let mut y = sol.y[0];
    let mut k1 = sol.dy[0];
    let mut t = t0;
    for i in 1..=steps {
        let t_next = if i == steps { t_end } else { t0 + i as f64 * h };
        let hs = t_next - t;
        let step = (|| -> Result<([f64; N], [f64; N])> {
            let k2 = f(t + 0.5 * hs, &axpy(&y, hs, &[(0.5, &k1)]))?;
            let k3 = f(t + 0.5 * hs, &axpy(&y, hs, &[(0.5, &k2)]))?;
            let k4 = f(t + hs, &axpy(&y, hs, &[(1.0, &k3)]))?;
            let y_new = axpy(
                &y,
                hs,
                &[
                    (1.0 / 6.0, &k1),
                    (1.0 / 3.0, &k2),
                    (1.0 / 3.0, &k3),
                    (1.0 / 6.0, &k4),
                ],
            );
            if !finite(&y_new) {
                return Err(Error::NonFinite("state"));
            }
            let d = f(t_next, &y_new)?;
            if !finite(&d) {
                return Err(Error::NonFinite("vector field"));
            }
            Ok((y_new, d))
        })();
        match step {
            Ok((y_new, d)) => {
                y = y_new;
                k1 = d;
                t = t_next;
                sol.push(t, y, k1);
            }
            Err(e) => {
                return Outcome {
                    solution: sol,
                    error: Some(e),
                }
            }
        }
    }
    Outcome {
        solution: sol,
        error: None,
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// 5th minus 4th order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dopri5<const N: usize, F>(
    mut f: F,
    mut sol: Solution<N>,
    t_end: f64,
    opts: &OdeOptions,
) -> Outcome<N>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let (rtol, atol) = (opts.rtol, opts.atol);
    let mut t = sol.t_start();
    let mut y = sol.y[0];
    let mut k1 = sol.dy[0];
    let span = t_end - t;
    let h_max = opts.h_max.min(span);

    let norm = |err: &[f64; N], a: &[f64; N], b: &[f64; N]| -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            let sc = atol + rtol * a[i].abs().max(b[i].abs());
            s += (err[i] / sc).powi(2);
        }
        (s / N as f64).sqrt()
    };

    // starting step from the local derivative scale
    let mut h = {
        let d0 = norm(&y, &[0.0; N], &y);
        let d1 = norm(&k1, &[0.0; N], &y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(h_max);
        match f(t + h0, &axpy(&y, h0, &[(1.0, &k1)])) {
            Ok(k) if finite(&k) => {
                let mut diff = [0.0; N];
                for i in 0..N {
                    diff[i] = k[i] - k1[i];
                }
                let d2 = norm(&diff, &[0.0; N], &y) / h0;
                let h1 = if d1.max(d2) <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / d1.max(d2)).powf(0.2)
                };
                (100.0 * h0).min(h1).min(h_max)
            }
            _ => h0,
        }
    };

    let mut steps = 0usize;
    let mut reject_streak = false;
    while t < t_end {
        if steps >= opts.max_steps {
            return Outcome {
                solution: sol,
                error: Some(Error::analysis(format!("step budget exhausted at t = {t}"))),
            };
        }
        steps += 1;
        if t + h > t_end || t_end - (t + h) < 1e-12 * h {
            h = t_end - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Outcome {
                solution: sol,
                error: Some(Error::StepUnderflow {
                    t,
                    state: y.to_vec(),
                }),
            };
        }
        let stage = (|| -> Result<([f64; N], [f64; N], f64)> {
            let k2 = f(t + C[1] * h, &axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = f(t + C[2] * h, &axpy(&y, h, &[(A3[0], &k1), (A3[1], &k2)]))?;
            let k4 = f(
                t + C[3] * h,
                &axpy(&y, h, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]),
            )?;
            let k5 = f(
                t + C[4] * h,
                &axpy(
                    &y,
                    h,
                    &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)],
                ),
            )?;
            let k6 = f(
                t + C[5] * h,
                &axpy(
                    &y,
                    h,
                    &[
                        (A6[0], &k1),
                        (A6[1], &k2),
                        (A6[2], &k3),
                        (A6[3], &k4),
                        (A6[4], &k5),
                    ],
                ),
            )?;
            let y_new = axpy(
                &y,
                h,
                &[
                    (B[0], &k1),
                    (B[2], &k3),
                    (B[3], &k4),
                    (B[4], &k5),
                    (B[5], &k6),
                ],
            );
            if !finite(&y_new) {
                return Err(Error::NonFinite("state"));
            }
            let k7 = f(t + h, &y_new)?;
            let mut err = [0.0; N];
            for i in 0..N {
                err[i] = h
                    * (E[0] * k1[i]
                        + E[2] * k3[i]
                        + E[3] * k4[i]
                        + E[4] * k5[i]
                        + E[5] * k6[i]
                        + E[6] * k7[i]);
            }
            Ok((y_new, k7, norm(&err, &y, &y_new)))
        })();
        let (y_new, k7, err) = match stage {
            Ok(v) if v.2.is_finite() && finite(&v.1) => v,
            // a failed stage evaluation is treated as a rejected step
            Ok(_) | Err(Error::NonFinite(_)) => {
                h *= 0.25;
                reject_streak = true;
                continue;
            }
            Err(e) => {
                return Outcome {
                    solution: sol,
                    error: Some(e),
                }
            }
        };
        if err <= 1.0 {
            t = if (t_end - (t + h)).abs() < 1e-12 * h {
                t_end
            } else {
                t + h
            };
            y = y_new;
            k1 = k7;
            sol.push(t, y, k1);
            let mut fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if reject_streak {
                fac = fac.min(1.0);
            }
            reject_streak = false;
            h = (h * fac).min(h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            reject_streak = true;
        }
    }
    Outcome {
        solution: sol,
        error: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

/// Zeros of `g` along the dense output, localized by bisection to `t_tol`.
/// A node where `g = 0` counts as the non-negative side.
pub fn crossings<const N: usize>(
    sol: &Solution<N>,
    g: impl Fn(f64, &[f64; N]) -> f64,
    direction: Direction,
    t_tol: f64,
) -> Vec<(f64, [f64; N])> {
    let mut out = Vec::new();
    if sol.len() < 2 {
        return out;
    }
    let side = |v: f64| v >= 0.0;
    let mut prev = g(sol.t[0], &sol.y[0]);
    for i in 0..sol.len() - 1 {
        let next = g(sol.t[i + 1], &sol.y[i + 1]);
        if side(prev) != side(next) {
            let rising = !side(prev);
            let wanted = match direction {
                Direction::Rising => rising,
                Direction::Falling => !rising,
                Direction::Either => true,
            };
            if wanted {
                let (mut a, mut b) = (sol.t[i], sol.t[i + 1]);
                let s_a = side(prev);
                while b - a > t_tol {
                    let m = 0.5 * (a + b);
                    if side(g(m, &sol.hermite(i, m))) == s_a {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let tc = 0.5 * (a + b);
                out.push((tc, sol.hermite(i, tc)));
            }
        }
        prev = next;
    }
    out
}
