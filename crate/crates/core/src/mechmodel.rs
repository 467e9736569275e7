//! Two-degree-of-freedom underactuated Euler-Lagrange models.
//!
//! The configuration is `(q_u, q_a)`: an unactuated angle and an actuated
//! coordinate. Inertia and Coriolis data depend on `q_u` only; the potential
//! may depend on both coordinates.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expression;

/// Standard gravity used by the built-in models unless overridden.
pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Full state `(q_u, q_a, q̇_u, q̇_a)`. `x1` is kept unwrapped on ℝ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State4 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl State4 {
    pub const fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        Self { x1, x2, x3, x4 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Validated constructor: all components must be finite.
    pub fn checked(a: [f64; 4]) -> Result<Self> {
        let s = Self::from_array(a);
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFinite("state"))
        }
    }

    /// Unactuated angle reduced to (-π, π].
    pub fn wrapped_x1(&self) -> f64 {
        wrap_angle(self.x1)
    }
}

impl fmt::Display for State4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.x2, self.x3, self.x4)
    }
}

/// Canonical reduction of an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Inertia, Coriolis and gravity profiles of a 2-DOF system with one
/// unactuated angle.
///
/// The unactuated row reads
/// `m_uu q̈_u + m_au q̈_a + c_a q̇_u² + c̄_u q̇_a² + ∇_u V = 0`
/// and the actuated row
/// `m_au q̈_u + m_aa q̈_a + c_p q̇_a q̇_u + c_s q̇_a² + c_r q̇_u² + ∇_a V = τ`.
///
/// `c_r` collects the actuated-row `q̇_u²` term. It does not enter the
/// reduced (pre-feedback) dynamics but both benchmark Coriolis matrices carry
/// it, so the pre-feedback must cancel it as well.
pub trait MechanicalSystem: Send + Sync {
    fn name(&self) -> &str;

    fn m_uu(&self, x1: f64) -> f64;
    fn m_au(&self, x1: f64) -> f64;
    fn m_aa(&self, x1: f64) -> f64;
    fn dm_uu(&self, x1: f64) -> f64;
    fn dm_au(&self, x1: f64) -> f64;
    fn dm_aa(&self, x1: f64) -> f64;

    fn c_a(&self, x1: f64) -> f64;
    fn c_bar_u(&self, x1: f64) -> f64;
    fn c_p(&self, x1: f64) -> f64;
    fn c_s(&self, x1: f64) -> f64;
    fn c_r(&self, x1: f64) -> f64;

    fn potential(&self, x1: f64, x2: f64) -> f64;
    /// ∂V/∂x1
    fn grad_u_v(&self, x1: f64, x2: f64) -> f64;
    /// ∂V/∂x2
    fn grad_a_v(&self, x1: f64, x2: f64) -> f64;
    /// ∂²V/∂x2∂x1
    fn d2v_au(&self, x1: f64, x2: f64) -> f64;

    /// Named physical constants (inputs and derived).
    fn params(&self) -> BTreeMap<String, f64>;

    fn det_inertia(&self, x1: f64) -> f64 {
        let (muu, mau, maa) = (self.m_uu(x1), self.m_au(x1), self.m_aa(x1));
        muu * maa - mau * mau
    }

    /// Schur complement `m_aa - m_au²/m_uu`.
    fn schur(&self, x1: f64) -> f64 {
        let mau = self.m_au(x1);
        self.m_aa(x1) - mau * mau / self.m_uu(x1)
    }
}

pub type SharedSystem = Arc<dyn MechanicalSystem>;

/// Solves the two Euler-Lagrange rows for the accelerations and returns
/// `(x3, x4, q̈_u, q̈_a)`.
pub fn eval_el_dynamics(sys: &dyn MechanicalSystem, x: &State4, tau: f64) -> Result<[f64; 4]> {
    if !x.is_finite() || !tau.is_finite() {
        return Err(Error::NonFinite("eval_el_dynamics input"));
    }
    let q = x.x1;
    let (muu, mau, maa) = (sys.m_uu(q), sys.m_au(q), sys.m_aa(q));
    let h_u = sys.c_a(q) * x.x3 * x.x3 + sys.c_bar_u(q) * x.x4 * x.x4 + sys.grad_u_v(q, x.x2);
    let h_a = sys.c_p(q) * x.x4 * x.x3
        + sys.c_s(q) * x.x4 * x.x4
        + sys.c_r(q) * x.x3 * x.x3
        + sys.grad_a_v(q, x.x2);
    let det = muu * maa - mau * mau;
    let b_u = -h_u;
    let b_a = tau - h_a;
    let acc_u = (maa * b_u - mau * b_a) / det;
    let acc_a = (muu * b_a - mau * b_u) / det;
    let out = [x.x3, x.x4, acc_u, acc_a];
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite("eval_el_dynamics output"))
    }
}

fn require_positive(params: &[(&str, f64)]) -> Result<()> {
    for &(name, value) in params {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter {
                name: name.to_string(),
                value,
                reason: "must be finite and positive",
            });
        }
    }
    Ok(())
}

/// Rotary (Furuta) pendulum.
///
/// `M = J [[1, a1 cos q_u], [a1 cos q_u, a2 + sin² q_u]]`, `V = a3 cos q_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Furuta {
    pub m: f64,
    pub l: f64,
    pub r: f64,
    pub j: f64,
    pub j_a: f64,
    pub g: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Furuta {
    /// Pendulum mass, half pendulum length, arm length, pendulum inertia,
    /// arm + motor inertia.
    pub fn new(m: f64, l: f64, r: f64, j: f64, j_a: f64) -> Result<Self> {
        Self::with_gravity(m, l, r, j, j_a, DEFAULT_GRAVITY)
    }

    pub fn with_gravity(m: f64, l: f64, r: f64, j: f64, j_a: f64, g: f64) -> Result<Self> {
        require_positive(&[
            ("m", m),
            ("l", l),
            ("r", r),
            ("J", j),
            ("J_a", j_a),
            ("g", g),
        ])?;
        Ok(Self {
            m,
            l,
            r,
            j,
            j_a,
            g,
            a1: m * r * l / j,
            a2: (j_a + m * r * r) / j,
            a3: m * g * l,
        })
    }

    /// Bench parameters; `J_a` is not reported with them and defaults to 1e-3 kg·m².
    pub fn benchmark() -> Self {
        Self::new(0.0679, 0.14, 0.235, 0.0012, 1.0e-3).expect("benchmark parameters are valid")
    }
}

impl MechanicalSystem for Furuta {
    fn name(&self) -> &str {
        "furuta"
    }
    fn m_uu(&self, _x1: f64) -> f64 {
        self.j
    }
    fn m_au(&self, x1: f64) -> f64 {
        self.j * self.a1 * x1.cos()
    }
    fn m_aa(&self, x1: f64) -> f64 {
        let s = x1.sin();
        self.j * (self.a2 + s * s)
    }
    fn dm_uu(&self, _x1: f64) -> f64 {
        0.0
    }
    fn dm_au(&self, x1: f64) -> f64 {
        -self.j * self.a1 * x1.sin()
    }
    fn dm_aa(&self, x1: f64) -> f64 {
        2.0 * self.j * x1.sin() * x1.cos()
    }
    fn c_a(&self, _x1: f64) -> f64 {
        0.0
    }
    fn c_bar_u(&self, x1: f64) -> f64 {
        -self.j * x1.sin() * x1.cos()
    }
    fn c_p(&self, x1: f64) -> f64 {
        2.0 * self.j * x1.sin() * x1.cos()
    }
    fn c_s(&self, _x1: f64) -> f64 {
        0.0
    }
    fn c_r(&self, x1: f64) -> f64 {
        -self.j * self.a1 * x1.sin()
    }
    fn potential(&self, x1: f64, _x2: f64) -> f64 {
        self.a3 * x1.cos()
    }
    fn grad_u_v(&self, x1: f64, _x2: f64) -> f64 {
        -self.a3 * x1.sin()
    }
    fn grad_a_v(&self, _x1: f64, _x2: f64) -> f64 {
        0.0
    }
    fn d2v_au(&self, _x1: f64, _x2: f64) -> f64 {
        0.0
    }
    fn params(&self) -> BTreeMap<String, f64> {
        [
            ("m", self.m),
            ("l", self.l),
            ("r", self.r),
            ("J", self.j),
            ("J_a", self.j_a),
            ("g", self.g),
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Pendubot with the passive link as the unactuated coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendubot {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl Pendubot {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m1: f64,
        m2: f64,
        l1: f64,
        l2: f64,
        lc1: f64,
        lc2: f64,
        i1: f64,
        i2: f64,
    ) -> Result<Self> {
        Self::with_gravity(m1, m2, l1, l2, lc1, lc2, i1, i2, DEFAULT_GRAVITY)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_gravity(
        m1: f64,
        m2: f64,
        l1: f64,
        l2: f64,
        lc1: f64,
        lc2: f64,
        i1: f64,
        i2: f64,
        g: f64,
    ) -> Result<Self> {
        require_positive(&[
            ("m1", m1),
            ("m2", m2),
            ("l1", l1),
            ("l2", l2),
            ("lc1", lc1),
            ("lc2", lc2),
            ("I1", i1),
            ("I2", i2),
            ("g", g),
        ])?;
        Ok(Self {
            m1,
            m2,
            l1,
            l2,
            lc1,
            lc2,
            i1,
            i2,
            g,
            c1: m1 * lc1 * lc1 + m2 * l1 * l1 + i1,
            c2: m2 * lc2 * lc2 + i2,
            c3: m2 * l1 * lc2,
            c4: m1 * lc1 + m2 * l1,
            c5: m2 * lc2,
        })
    }

    pub fn benchmark() -> Self {
        Self::new(0.2, 0.052, 0.2, 0.28, 0.13, 0.15, 3.38e-1, 1.17e-3)
            .expect("benchmark parameters are valid")
    }
}

impl MechanicalSystem for Pendubot {
    fn name(&self) -> &str {
        "pendubot"
    }
    fn m_uu(&self, _x1: f64) -> f64 {
        self.c2
    }
    fn m_au(&self, x1: f64) -> f64 {
        self.c2 + self.c3 * x1.cos()
    }
    fn m_aa(&self, x1: f64) -> f64 {
        self.c1 + self.c2 + 2.0 * self.c3 * x1.cos()
    }
    fn dm_uu(&self, _x1: f64) -> f64 {
        0.0
    }
    fn dm_au(&self, x1: f64) -> f64 {
        -self.c3 * x1.sin()
    }
    fn dm_aa(&self, x1: f64) -> f64 {
        -2.0 * self.c3 * x1.sin()
    }
    fn c_a(&self, _x1: f64) -> f64 {
        0.0
    }
    fn c_bar_u(&self, x1: f64) -> f64 {
        self.c3 * x1.sin()
    }
    fn c_p(&self, x1: f64) -> f64 {
        -2.0 * self.c3 * x1.sin()
    }
    fn c_s(&self, _x1: f64) -> f64 {
        0.0
    }
    fn c_r(&self, x1: f64) -> f64 {
        -self.c3 * x1.sin()
    }
    fn potential(&self, x1: f64, x2: f64) -> f64 {
        -self.c4 * self.g * x2.cos() - self.c5 * self.g * (x2 + x1).cos()
    }
    fn grad_u_v(&self, x1: f64, x2: f64) -> f64 {
        self.c5 * self.g * (x2 + x1).sin()
    }
    fn grad_a_v(&self, x1: f64, x2: f64) -> f64 {
        self.c4 * self.g * x2.sin() + self.c5 * self.g * (x2 + x1).sin()
    }
    fn d2v_au(&self, x1: f64, x2: f64) -> f64 {
        self.c5 * self.g * (x2 + x1).cos()
    }
    fn params(&self) -> BTreeMap<String, f64> {
        [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("I1", self.i1),
            ("I2", self.i2),
            ("g", self.g),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c5", self.c5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Source expressions for a user-defined system. Inertia and Coriolis
/// entries are functions of `x1`; the potential of `x1` and `x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomSystemSpec {
    pub m_uu: String,
    pub m_au: String,
    pub m_aa: String,
    #[serde(default = "zero_expr")]
    pub c_a: String,
    #[serde(default = "zero_expr")]
    pub c_bar_u: String,
    #[serde(default = "zero_expr")]
    pub c_p: String,
    #[serde(default = "zero_expr")]
    pub c_s: String,
    #[serde(default = "zero_expr")]
    pub c_r: String,
    pub potential: String,
}

fn zero_expr() -> String {
    "0".to_string()
}

#[derive(Debug, Clone)]
struct Profile1 {
    f: Expression,
}

impl Profile1 {
    fn at(&self, x1: f64) -> f64 {
        self.f.eval(&[x1])
    }
}

/// System whose profiles come from parsed expressions, with derivatives taken symbolically.
#[derive(Debug, Clone)]
pub struct CustomSystem {
    spec: CustomSystemSpec,
    m_uu: Profile1,
    m_au: Profile1,
    m_aa: Profile1,
    dm_uu: Profile1,
    dm_au: Profile1,
    dm_aa: Profile1,
    c_a: Profile1,
    c_bar_u: Profile1,
    c_p: Profile1,
    c_s: Profile1,
    c_r: Profile1,
    v: Expression,
    v_u: Expression,
    v_a: Expression,
    v_au: Expression,
}

impl CustomSystem {
    pub fn from_spec(spec: CustomSystemSpec) -> Result<Self> {
        let one = |src: &str| -> Result<Profile1> {
            Ok(Profile1 {
                f: Expression::parse(src, &["x1"])?,
            })
        };
        let d = |p: &Profile1| -> Result<Profile1> {
            Ok(Profile1 {
                f: p.f.derivative("x1")?,
            })
        };
        let m_uu = one(&spec.m_uu)?;
        let m_au = one(&spec.m_au)?;
        let m_aa = one(&spec.m_aa)?;
        let v = Expression::parse(&spec.potential, &["x1", "x2"])?;
        let v_u = v.derivative("x1")?;
        let v_a = v.derivative("x2")?;
        let v_au = v_u.derivative("x2")?;
        Ok(Self {
            dm_uu: d(&m_uu)?,
            dm_au: d(&m_au)?,
            dm_aa: d(&m_aa)?,
            m_uu,
            m_au,
            m_aa,
            c_a: one(&spec.c_a)?,
            c_bar_u: one(&spec.c_bar_u)?,
            c_p: one(&spec.c_p)?,
            c_s: one(&spec.c_s)?,
            c_r: one(&spec.c_r)?,
            v,
            v_u,
            v_a,
            v_au,
            spec,
        })
    }

    pub fn spec(&self) -> &CustomSystemSpec {
        &self.spec
    }
}

impl MechanicalSystem for CustomSystem {
    fn name(&self) -> &str {
        "custom"
    }
    fn m_uu(&self, x1: f64) -> f64 {
        self.m_uu.at(x1)
    }
    fn m_au(&self, x1: f64) -> f64 {
        self.m_au.at(x1)
    }
    fn m_aa(&self, x1: f64) -> f64 {
        self.m_aa.at(x1)
    }
    fn dm_uu(&self, x1: f64) -> f64 {
        self.dm_uu.at(x1)
    }
    fn dm_au(&self, x1: f64) -> f64 {
        self.dm_au.at(x1)
    }
    fn dm_aa(&self, x1: f64) -> f64 {
        self.dm_aa.at(x1)
    }
    fn c_a(&self, x1: f64) -> f64 {
        self.c_a.at(x1)
    }
    fn c_bar_u(&self, x1: f64) -> f64 {
        self.c_bar_u.at(x1)
    }
    fn c_p(&self, x1: f64) -> f64 {
        self.c_p.at(x1)
    }
    fn c_s(&self, x1: f64) -> f64 {
        self.c_s.at(x1)
    }
    fn c_r(&self, x1: f64) -> f64 {
        self.c_r.at(x1)
    }
    fn potential(&self, x1: f64, x2: f64) -> f64 {
        self.v.eval(&[x1, x2])
    }
    fn grad_u_v(&self, x1: f64, x2: f64) -> f64 {
        self.v_u.eval(&[x1, x2])
    }
    fn grad_a_v(&self, x1: f64, x2: f64) -> f64 {
        self.v_a.eval(&[x1, x2])
    }
    fn d2v_au(&self, x1: f64, x2: f64) -> f64 {
        self.v_au.eval(&[x1, x2])
    }
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}

/// Thresholds for [`check_assumptions`].
#[derive(Debug, Clone, Copy)]
pub struct AssumptionThresholds {
    pub min_abs_m_au: f64,
    pub min_abs_c_bar_u: f64,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        Self {
            min_abs_m_au: 1e-9,
            min_abs_c_bar_u: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub m_uu_min: f64,
    pub m_uu_max: f64,
    pub min_abs_m_au: f64,
    pub argmin_abs_m_au: f64,
    pub min_abs_c_bar_u: f64,
    pub argmin_abs_c_bar_u: f64,
    /// Smallest eigenvalue of the inertia matrix over the grid.
    pub pd_margin: f64,
    pub inertia_positive_definite: bool,
    pub m_au_nonvanishing: bool,
    /// Reported only: both benchmarks have c̄_u = 0 at isolated points.
    pub c_bar_u_nonvanishing: bool,
    pub passed: bool,
}

/// Evaluates the inertia-type assumptions over `grid` (x1 values, wrapped first).
pub fn check_assumptions(
    sys: &dyn MechanicalSystem,
    grid: &[f64],
    thresholds: AssumptionThresholds,
) -> AssumptionReport {
    let mut rep = AssumptionReport {
        m_uu_min: f64::INFINITY,
        m_uu_max: f64::NEG_INFINITY,
        min_abs_m_au: f64::INFINITY,
        argmin_abs_m_au: f64::NAN,
        min_abs_c_bar_u: f64::INFINITY,
        argmin_abs_c_bar_u: f64::NAN,
        pd_margin: f64::INFINITY,
        inertia_positive_definite: true,
        m_au_nonvanishing: true,
        c_bar_u_nonvanishing: true,
        passed: false,
    };
    for &raw in grid {
        let x1 = wrap_angle(raw);
        let (muu, mau, maa) = (sys.m_uu(x1), sys.m_au(x1), sys.m_aa(x1));
        rep.m_uu_min = rep.m_uu_min.min(muu);
        rep.m_uu_max = rep.m_uu_max.max(muu);
        if mau.abs() < rep.min_abs_m_au {
            rep.min_abs_m_au = mau.abs();
            rep.argmin_abs_m_au = x1;
        }
        let cb = sys.c_bar_u(x1).abs();
        if cb < rep.min_abs_c_bar_u {
            rep.min_abs_c_bar_u = cb;
            rep.argmin_abs_c_bar_u = x1;
        }
        let tr = muu + maa;
        let det = muu * maa - mau * mau;
        let lam_min = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
        rep.pd_margin = rep.pd_margin.min(lam_min);
        if !(det > 0.0 && muu > 0.0) {
            rep.inertia_positive_definite = false;
        }
    }
    rep.m_au_nonvanishing = rep.min_abs_m_au >= thresholds.min_abs_m_au;
    rep.c_bar_u_nonvanishing = rep.min_abs_c_bar_u >= thresholds.min_abs_c_bar_u;
    rep.passed = !grid.is_empty()
        && rep.inertia_positive_definite
        && rep.m_au_nonvanishing
        && rep.m_uu_max.is_finite();
    rep
}

/// `n` evenly spaced points on `[a, b]` (inclusive).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn systems() -> Vec<Box<dyn MechanicalSystem>> {
        vec![
            Box::new(Furuta::benchmark()),
            Box::new(Pendubot::benchmark()),
        ]
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(0.3 + 4.0 * PI) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn furuta_derived_constants() {
        let f = Furuta::benchmark();
        assert!((f.a1 - 1.8616).abs() < 1e-4, "a1 = {}", f.a1);
        assert!((f.a3 / f.j - 77.71).abs() < 1e-2, "a3/J = {}", f.a3 / f.j);
        assert_eq!(f.grad_a_v(0.4, 1.3), 0.0);
    }

    #[test]
    fn pendubot_derived_constants() {
        let p = Pendubot::benchmark();
        assert!((p.c2 - 0.00234).abs() < 1e-8);
        assert!((p.c3 - 0.00156).abs() < 1e-8);
        assert!((p.c5 - 0.0078).abs() < 1e-10);
        assert!((p.c4 - 0.0364).abs() < 1e-10);
        assert!((p.c1 - 0.34346).abs() < 1e-10);
        assert!((p.m_au(PI / 2.0) - p.c2).abs() < 1e-15);
    }

    #[test]
    fn non_positive_parameters_rejected() {
        assert!(Furuta::new(0.0, 0.14, 0.235, 0.0012, 1e-3).is_err());
        assert!(Furuta::new(0.1, -0.14, 0.235, 0.0012, 1e-3).is_err());
        assert!(Pendubot::new(0.2, 0.052, 0.2, 0.28, 0.13, 0.15, 0.338, f64::NAN).is_err());
    }

    #[test]
    fn equilibria_of_builtins() {
        let f = Furuta::benchmark();
        assert_eq!(
            eval_el_dynamics(&f, &State4::default(), 0.0).unwrap(),
            [0.0; 4]
        );
        let p = Pendubot::benchmark();
        let d = eval_el_dynamics(&p, &State4::new(PI, PI, 0.0, 0.0), 0.0).unwrap();
        for v in d {
            assert!(v.abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let f = Furuta::benchmark();
        assert!(eval_el_dynamics(&f, &State4::new(f64::NAN, 0.0, 0.0, 0.0), 0.0).is_err());
        assert!(eval_el_dynamics(&f, &State4::default(), f64::INFINITY).is_err());
        assert!(State4::checked([0.0, f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for sys in systems() {
            for _ in 0..200 {
                let x1: f64 = rng.gen_range(-PI..PI);
                let x2: f64 = rng.gen_range(-PI..PI);
                let tol = 1e-5;
                assert!((sys.dm_uu(x1) - fd(|q| sys.m_uu(q), x1)).abs() < tol);
                assert!((sys.dm_au(x1) - fd(|q| sys.m_au(q), x1)).abs() < tol);
                assert!((sys.dm_aa(x1) - fd(|q| sys.m_aa(q), x1)).abs() < tol);
                assert!((sys.grad_u_v(x1, x2) - fd(|q| sys.potential(q, x2), x1)).abs() < 1e-6);
                assert!((sys.grad_a_v(x1, x2) - fd(|q| sys.potential(x1, q), x2)).abs() < 1e-6);
                assert!((sys.d2v_au(x1, x2) - fd(|q| sys.grad_u_v(x1, q), x2)).abs() < tol);
            }
        }
    }

    #[test]
    fn profiles_are_two_pi_periodic() {
        for sys in systems() {
            for x1 in linspace(-PI, PI, 101) {
                let y = x1 + 2.0 * PI;
                for (a, b) in [
                    (sys.m_uu(x1), sys.m_uu(y)),
                    (sys.m_au(x1), sys.m_au(y)),
                    (sys.m_aa(x1), sys.m_aa(y)),
                    (sys.c_bar_u(x1), sys.c_bar_u(y)),
                    (sys.potential(x1, 0.3), sys.potential(y, 0.3)),
                ] {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inertia_positive_definite_on_dense_grid() {
        let grid = linspace(-PI, PI, 1000);
        for sys in systems() {
            for &x in &grid {
                assert!(
                    sys.m_uu(x) > 0.0 && sys.det_inertia(x) > 0.0,
                    "{} at {x}",
                    sys.name()
                );
                let schur = sys.schur(x);
                assert!((schur - sys.det_inertia(x) / sys.m_uu(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn assumption_checks() {
        let f = Furuta::benchmark();
        let th = AssumptionThresholds::default();
        let upper = check_assumptions(&f, &linspace(-1.4, 1.4, 1001), th);
        assert!(upper.passed);
        assert!(upper.min_abs_m_au >= f.j * f.a1 * 1.4f64.cos() - 1e-15);
        let full = check_assumptions(&f, &linspace(-PI, PI, 1001), th);
        assert!(!full.m_au_nonvanishing);
        assert!(!full.passed);
        assert!((full.argmin_abs_m_au.abs() - PI / 2.0).abs() < 1e-2);

        let p = Pendubot::benchmark();
        let rep = check_assumptions(&p, &linspace(-PI, PI, 1001), th);
        assert!(rep.passed);
        assert!(rep.min_abs_m_au >= p.c2 - p.c3 - 1e-15);
        assert!(!rep.c_bar_u_nonvanishing);
    }

    #[test]
    fn custom_system_reproduces_pendubot() {
        let p = Pendubot::benchmark();
        let spec = CustomSystemSpec {
            m_uu: format!("{}", p.c2),
            m_au: format!("{} + {}*cos(x1)", p.c2, p.c3),
            m_aa: format!("{} + {} + 2*{}*cos(x1)", p.c1, p.c2, p.c3),
            c_a: "0".into(),
            c_bar_u: format!("{}*sin(x1)", p.c3),
            c_p: format!("-2*{}*sin(x1)", p.c3),
            c_s: "0".into(),
            c_r: format!("-{}*sin(x1)", p.c3),
            potential: format!("-{}*{}*cos(x2) - {}*{}*cos(x2 + x1)", p.c4, p.g, p.c5, p.g),
        };
        let c = CustomSystem::from_spec(spec).unwrap();
        for x1 in linspace(-3.0, 3.0, 13) {
            let x2 = 0.5 - x1;
            assert!((c.dm_au(x1) - p.dm_au(x1)).abs() < 1e-15);
            assert!((c.grad_u_v(x1, x2) - p.grad_u_v(x1, x2)).abs() < 1e-14);
            assert!((c.grad_a_v(x1, x2) - p.grad_a_v(x1, x2)).abs() < 1e-14);
            assert!((c.d2v_au(x1, x2) - p.d2v_au(x1, x2)).abs() < 1e-14);
        }
    }
}
