//! Construction of the immersion-and-invariance controller.
//!
//! The designer picks a generator `K(x1)` (the manifold `x2 = K(x1)`) and a
//! scaling map `s(x1) = m_uu + m_au K'`. From these follow the target-system
//! coefficients `β`, `ρ`, the target inertia `m` and potential `U`, and the
//! feedback law `u(x)` that renders the manifold attractive and invariant.

use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::mechmodel::{linspace, Furuta, MechanicalSystem, Pendubot, SharedSystem, State4};
use crate::quad::{gauss8, integrate, HermiteTable};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of nodes in the m/U tables.
pub const TABLE_NODES: usize = 4096;
/// Absolute tolerance of the direct (untabulated) quadratures.
pub const QUAD_ABS_TOL: f64 = 1e-10;
const SUBINTERVAL_TOL: f64 = 1e-14;
const CHECK_GRID: usize = 2001;

pub fn scalar_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

/// Relative threshold below which |s(x1)| is treated as singular.
pub fn singular_threshold(m_uu: f64) -> f64 {
    1e-8 * m_uu.abs().max(1.0)
}

/// The manifold generator `K` with its first two derivatives.
#[derive(Clone)]
pub struct GeneratorK {
    k: ScalarFn,
    dk: ScalarFn,
    ddk: ScalarFn,
    label: String,
}

impl fmt::Debug for GeneratorK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorK")
            .field("label", &self.label)
            .finish()
    }
}

impl GeneratorK {
    pub fn new(label: impl Into<String>, k: ScalarFn, dk: ScalarFn, ddk: ScalarFn) -> Self {
        Self {
            k,
            dk,
            ddk,
            label: label.into(),
        }
    }

    /// `K = -(1 + k1) ln(sec x1 + tan x1) / a1`
    pub fn furuta(a1: f64, k1: f64) -> Self {
        let c = (1.0 + k1) / a1;
        Self::new(
            format!("furuta-k1({k1})"),
            scalar_fn(move |x| -c * (1.0 / x.cos() + x.tan()).ln()),
            scalar_fn(move |x| -c / x.cos()),
            scalar_fn(move |x| {
                let cx = x.cos();
                -c * x.sin() / (cx * cx)
            }),
        )
    }

    /// `K = slope · x1`
    pub fn linear(slope: f64) -> Self {
        Self::new(
            format!("linear({slope})"),
            scalar_fn(move |x| slope * x),
            scalar_fn(move |_| slope),
            scalar_fn(|_| 0.0),
        )
    }

    /// `K` given as an expression in `x1`; derivatives taken symbolically.
    pub fn from_expr(src: &str) -> Result<Self> {
        let k = Expression::parse(src, &["x1"])?;
        let dk = k.derivative("x1")?;
        let ddk = dk.derivative("x1")?;
        Ok(Self::new(
            format!("expr({src})"),
            scalar_fn(move |x| k.eval(&[x])),
            scalar_fn(move |x| dk.eval(&[x])),
            scalar_fn(move |x| ddk.eval(&[x])),
        ))
    }

    /// Only `K'` is given; `K` is recovered by quadrature with `K(0) = 0`,
    /// tabulated on `interval` and integrated directly outside it.
    pub fn from_slope_expr(src: &str, interval: (f64, f64)) -> Result<Self> {
        let dk = Expression::parse(src, &["x1"])?;
        let ddk = dk.derivative("x1")?;
        let dk_fn = {
            let dk = dk.clone();
            scalar_fn(move |x| dk.eval(&[x]))
        };
        let table = cumulative_table(interval, 0.0, &|x| dk.eval(&[x]), TABLE_NODES);
        let k_dk = dk_fn.clone();
        let k = scalar_fn(move |x| {
            if table.contains(x) {
                table.eval(x)
            } else {
                let edge = if x < table.lo() {
                    table.lo()
                } else {
                    table.hi()
                };
                table.eval(edge) + integrate(|s| k_dk(s), edge, x, QUAD_ABS_TOL)
            }
        });
        Ok(Self::new(
            format!("slope-expr({src})"),
            k,
            dk_fn,
            scalar_fn(move |x| ddk.eval(&[x])),
        ))
    }

    /// Same generator scaled by `factor` (K, K', K'' all scaled).
    pub fn scaled(&self, factor: f64) -> Self {
        let (k, dk, ddk) = (self.k.clone(), self.dk.clone(), self.ddk.clone());
        Self::new(
            format!("{}*{factor}", self.label),
            scalar_fn(move |x| factor * k(x)),
            scalar_fn(move |x| factor * dk(x)),
            scalar_fn(move |x| factor * ddk(x)),
        )
    }

    pub fn k(&self, x1: f64) -> f64 {
        (self.k)(x1)
    }
    pub fn dk(&self, x1: f64) -> f64 {
        (self.dk)(x1)
    }
    pub fn ddk(&self, x1: f64) -> f64 {
        (self.ddk)(x1)
    }
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Largest finite-difference mismatch of K' and K'' over `grid`,
    /// relative to `1 + |derivative|`.
    pub fn derivative_residual(&self, grid: &[f64]) -> f64 {
        let h = 1e-6;
        grid.iter()
            .map(|&x| {
                let fd1 = (self.k(x + h) - self.k(x - h)) / (2.0 * h);
                let fd2 = (self.dk(x + h) - self.dk(x - h)) / (2.0 * h);
                let r1 = (fd1 - self.dk(x)).abs() / (1.0 + self.dk(x).abs());
                let r2 = (fd2 - self.ddk(x)).abs() / (1.0 + self.ddk(x).abs());
                r1.max(r2)
            })
            .fold(0.0, f64::max)
    }
}

/// A generator together with its scaling map.
#[derive(Clone, Debug)]
pub struct Design {
    pub generator: GeneratorK,
    /// `None` derives `s = m_uu + m_au K'`.
    pub scaling: Option<Scaling>,
}

#[derive(Clone)]
pub struct Scaling(pub ScalarFn);

impl fmt::Debug for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scaling(..)")
    }
}

impl Design {
    /// Furuta choice `s = -J k1`, giving `K' = -(1 + k1) / (a1 cos x1)`.
    pub fn furuta_k1(sys: &Furuta, k1: f64) -> Self {
        let j = sys.j;
        Self {
            generator: GeneratorK::furuta(sys.a1, k1),
            scaling: Some(Scaling(scalar_fn(move |_| -j * k1))),
        }
    }

    /// Pendubot choice `s = -k2 (c2 + c3 cos x1) + c2`, giving `K = -k2 x1`.
    pub fn pendubot_k2(sys: &Pendubot, k2: f64) -> Self {
        let (c2, c3) = (sys.c2, sys.c3);
        Self {
            generator: GeneratorK::linear(-k2),
            scaling: Some(Scaling(scalar_fn(move |x| -k2 * (c2 + c3 * x.cos()) + c2))),
        }
    }

    /// User expressions: exactly one of `k_expr` / `dk_expr`, optional `s_expr`.
    pub fn from_expressions(
        k_expr: Option<&str>,
        dk_expr: Option<&str>,
        s_expr: Option<&str>,
        interval: (f64, f64),
    ) -> Result<Self> {
        let generator = match (k_expr, dk_expr) {
            (Some(k), None) => GeneratorK::from_expr(k)?,
            (None, Some(dk)) => GeneratorK::from_slope_expr(dk, interval)?,
            _ => {
                return Err(Error::Expression {
                    pos: 0,
                    msg: "give exactly one of K or K' as an expression".into(),
                })
            }
        };
        let scaling = match s_expr {
            Some(src) => {
                let e = Expression::parse(src, &["x1"])?;
                Some(Scaling(scalar_fn(move |x| e.eval(&[x]))))
            }
            None => None,
        };
        Ok(Self { generator, scaling })
    }
}

/// Controller gains and the interval on which the design is certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileSettings {
    pub gamma1: f64,
    pub gamma2: f64,
    pub interval: (f64, f64),
}

/// One synthesized controller: generator, scaling, target data and gains.
#[derive(Clone)]
pub struct SynthesisProfile {
    sys: SharedSystem,
    generator: GeneratorK,
    scaling: ScalarFn,
    settings: ProfileSettings,
    mass: Arc<HermiteTable>,
    potential: Arc<HermiteTable>,
    /// Set when β, ρ, m and U all repeat with period 2π over the table.
    period: Option<f64>,
    /// `(m, U)` at evenly spaced points beyond each end of the table, filled on demand.
    anchors: Arc<Mutex<Anchors>>,
}

/// Spacing of the cached `(m, U)` values outside the table.
const ANCHOR_STEP: f64 = 0.5;

#[derive(Debug, Default)]
struct Anchors {
    left: Vec<(f64, f64)>,
    right: Vec<(f64, f64)>,
}

impl fmt::Debug for SynthesisProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SynthesisProfile")
            .field("system", &self.sys.name())
            .field("generator", &self.generator)
            .field("settings", &self.settings)
            .finish()
    }
}

/// Checked construction: rejects designs violating the scaling consistency,
/// a sign change of `s`, non-positive `m` or non-positive gains.
pub fn make_profile(
    sys: SharedSystem,
    design: Design,
    settings: ProfileSettings,
) -> Result<SynthesisProfile> {
    build_profile(sys, design, settings, true)
}

/// Skips the `s = m_uu + m_au K'` consistency check. Used to build
/// deliberately broken designs for sensitivity tests.
pub fn make_profile_unchecked(
    sys: SharedSystem,
    design: Design,
    settings: ProfileSettings,
) -> Result<SynthesisProfile> {
    build_profile(sys, design, settings, false)
}

fn build_profile(
    sys: SharedSystem,
    design: Design,
    settings: ProfileSettings,
    check_consistency: bool,
) -> Result<SynthesisProfile> {
    let ProfileSettings {
        gamma1,
        gamma2,
        interval: (lo, hi),
    } = settings;
    for (name, value) in [("gamma1", gamma1), ("gamma2", gamma2)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter {
                name: name.into(),
                value,
                reason: "gain must be positive",
            });
        }
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter {
            name: "interval".into(),
            value: hi - lo,
            reason: "operating interval must be finite and non-empty",
        });
    }

    let generator = design.generator;
    let scaling: ScalarFn = match design.scaling {
        Some(Scaling(s)) => s,
        None => {
            let (sys, g) = (sys.clone(), generator.clone());
            scalar_fn(move |x| sys.m_uu(x) + sys.m_au(x) * g.dk(x))
        }
    };

    let grid = linspace(lo, hi, CHECK_GRID);
    for &x in &grid {
        if !(generator.k(x).is_finite()
            && generator.dk(x).is_finite()
            && generator.ddk(x).is_finite())
        {
            return Err(Error::Assumption {
                assumption: "A3",
                detail: format!("K or its derivatives not finite at x1 = {x:.6}"),
            });
        }
    }
    let deriv_res = generator.derivative_residual(&linspace(lo, hi, 201)[1..200]);
    if deriv_res > 1e-5 {
        return Err(Error::Assumption {
            assumption: "A3",
            detail: format!(
                "K', K'' inconsistent with K (finite-difference residual {deriv_res:.2e})"
            ),
        });
    }

    // s must keep one sign, away from the singular threshold
    let mut prev: Option<(f64, f64)> = None;
    for &x in &grid {
        let s = scaling(x);
        if !s.is_finite() || s.abs() < singular_threshold(sys.m_uu(x)) {
            return Err(Error::ScalingCrossing { x1: x });
        }
        if let Some((px, ps)) = prev {
            if ps.signum() != s.signum() {
                return Err(Error::ScalingCrossing {
                    x1: bisect(|t| scaling(t), px, x, 1e-12),
                });
            }
        }
        prev = Some((x, s));
    }

    if check_consistency {
        let mut worst = (0.0, lo);
        for &x in &grid {
            let r = (scaling(x) - sys.m_uu(x) - sys.m_au(x) * generator.dk(x)).abs()
                / sys.m_uu(x).abs().max(1.0);
            if r > worst.0 {
                worst = (r, x);
            }
        }
        if worst.0 > 1e-9 {
            return Err(Error::Assumption {
                assumption: "A3(a)",
                detail: format!(
                    "s(x1) != m_uu + m_au K' (residual {:.3e} at x1 = {:.6})",
                    worst.0, worst.1
                ),
            });
        }
    }

    let beta = {
        let (sys, g, s) = (sys.clone(), generator.clone(), scaling.clone());
        move |x: f64| beta_of(sys.as_ref(), &g, &s, x)
    };
    let rho = {
        let (sys, g, s) = (sys.clone(), generator.clone(), scaling.clone());
        move |x: f64| rho_of(sys.as_ref(), &g, &s, x)
    };

    // ∫β is tabulated; m = exp(-2∫β) with slope -2βm.
    let beta_int = cumulative_table((lo, hi), 0.0, &beta, TABLE_NODES);
    let n = beta_int.nodes();
    let mut m_vals = Vec::with_capacity(n);
    let mut m_slopes = Vec::with_capacity(n);
    for i in 0..n {
        let x = beta_int.node(i);
        let m = (-2.0 * beta_int.value_at_node(i)).exp();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Assumption {
                assumption: "A3(b)",
                detail: format!("m(x1) = {m} is not positive at x1 = {x:.6}"),
            });
        }
        m_vals.push(m);
        m_slopes.push(-2.0 * beta(x) * m);
    }
    let xs: Vec<f64> = (0..n).map(|i| beta_int.node(i)).collect();
    let mass = HermiteTable::from_nodes(xs.clone(), m_vals.clone(), m_slopes);

    // U(x) = -∫₀ˣ ρ m, accumulated per cell with m rebuilt from the cell's
    // starting node.
    let cell_integral = |a: f64, b: f64, m_a: f64| -> f64 {
        -gauss8(|s| rho(s) * m_a * (-2.0 * gauss8(&beta, a, s)).exp(), a, b)
    };
    let i0 = nearest_node(&mass, 0.0);
    let x0 = mass.node(i0);
    let mut u_vals = vec![0.0; n];
    u_vals[i0] = if x0 == 0.0 {
        0.0
    } else {
        -integrate(
            |s| rho(s) * (-2.0 * integrate(&beta, 0.0, s, SUBINTERVAL_TOL)).exp(),
            0.0,
            x0,
            SUBINTERVAL_TOL,
        )
    };
    for i in i0..n - 1 {
        u_vals[i + 1] = u_vals[i] + cell_integral(mass.node(i), mass.node(i + 1), m_vals[i]);
    }
    for i in (1..=i0).rev() {
        u_vals[i - 1] = u_vals[i] + cell_integral(mass.node(i), mass.node(i - 1), m_vals[i]);
    }
    let u_slopes: Vec<f64> = (0..n).map(|i| -rho(mass.node(i)) * m_vals[i]).collect();
    if u_vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("potential table"));
    }
    let potential = HermiteTable::from_nodes(xs, u_vals, u_slopes);

    let period = detect_period(&beta, &rho, &mass, &potential);
    Ok(SynthesisProfile {
        sys,
        generator,
        scaling,
        settings,
        mass: Arc::new(mass),
        potential: Arc::new(potential),
        period,
        anchors: Arc::default(),
    })
}

fn detect_period(
    beta: &dyn Fn(f64) -> f64,
    rho: &dyn Fn(f64) -> f64,
    mass: &HermiteTable,
    potential: &HermiteTable,
) -> Option<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let (lo, hi) = (mass.lo(), mass.hi());
    if hi - lo < tau {
        return None;
    }
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
    let coefficients_repeat = linspace(lo, hi - tau, 97)
        .into_iter()
        .all(|x| close(beta(x), beta(x + tau), 1e-12) && close(rho(x), rho(x + tau), 1e-12));
    let tables_repeat = close(mass.eval(lo), mass.eval(lo + tau), 1e-10)
        && close(potential.eval(lo), potential.eval(lo + tau), 1e-9);
    (coefficients_repeat && tables_repeat).then_some(tau)
}

fn beta_of(sys: &dyn MechanicalSystem, g: &GeneratorK, s: &ScalarFn, x: f64) -> f64 {
    let dk = g.dk(x);
    -(sys.c_bar_u(x) * dk * dk + sys.c_a(x) + sys.m_au(x) * g.ddk(x)) / s(x)
}

fn rho_of(sys: &dyn MechanicalSystem, g: &GeneratorK, s: &ScalarFn, x: f64) -> f64 {
    -sys.grad_u_v(x, g.k(x)) / s(x)
}

fn nearest_node(t: &HermiteTable, x: f64) -> usize {
    (0..t.nodes())
        .min_by(|&i, &j| (t.node(i) - x).abs().total_cmp(&(t.node(j) - x).abs()))
        .expect("non-empty table")
}

/// About `nodes` points on `[lo, hi]`, uniform on each side of the origin
/// and containing it when it is interior.
fn table_grid(lo: f64, hi: f64, nodes: usize) -> Vec<f64> {
    if !(lo < 0.0 && 0.0 < hi) {
        return linspace(lo, hi, nodes);
    }
    let cells = (nodes - 1) as f64;
    let left = ((-lo / (hi - lo) * cells).round() as usize).max(1);
    let right = ((nodes - 1).saturating_sub(left)).max(1);
    let mut xs = linspace(lo, 0.0, left + 1);
    xs.pop();
    xs.extend(linspace(0.0, hi, right + 1));
    xs[left] = 0.0;
    xs
}

/// Table of `origin_value + ∫_0^x f` on `[lo, hi]` with slopes `f`.
fn cumulative_table(
    (lo, hi): (f64, f64),
    origin_value: f64,
    f: &dyn Fn(f64) -> f64,
    nodes: usize,
) -> HermiteTable {
    let xs = table_grid(lo, hi, nodes);
    let n = xs.len();
    let i0 = (0..n)
        .min_by(|&i, &j| xs[i].abs().total_cmp(&xs[j].abs()))
        .expect("non-empty grid");
    let mut vals = vec![0.0; n];
    vals[i0] = origin_value + integrate(f, 0.0, xs[i0], SUBINTERVAL_TOL);
    for i in i0..n - 1 {
        vals[i + 1] = vals[i] + gauss8(f, xs[i], xs[i + 1]);
    }
    for i in (1..=i0).rev() {
        vals[i - 1] = vals[i] + gauss8(f, xs[i], xs[i - 1]);
    }
    let slopes = xs.iter().map(|&x| f(x)).collect();
    HermiteTable::from_nodes(xs, vals, slopes)
}

pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Degenerate,
}

/// A zero of `U'` inside the search interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub x1: f64,
    pub potential: f64,
    /// Central-difference estimate of `U''`.
    pub curvature: f64,
    pub kind: CriticalKind,
}

impl SynthesisProfile {
    pub fn system(&self) -> &dyn MechanicalSystem {
        self.sys.as_ref()
    }

    pub fn shared_system(&self) -> SharedSystem {
        self.sys.clone()
    }

    pub fn generator(&self) -> &GeneratorK {
        &self.generator
    }

    pub fn settings(&self) -> ProfileSettings {
        self.settings
    }

    pub fn gains(&self) -> (f64, f64) {
        (self.settings.gamma1, self.settings.gamma2)
    }

    pub fn interval(&self) -> (f64, f64) {
        self.settings.interval
    }

    /// Same design with different gains; tables are shared.
    pub fn with_gains(&self, gamma1: f64, gamma2: f64) -> Result<Self> {
        for (name, value) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    value,
                    reason: "gain must be positive",
                });
            }
        }
        let mut p = self.clone();
        p.settings.gamma1 = gamma1;
        p.settings.gamma2 = gamma2;
        Ok(p)
    }

    pub fn k(&self, x1: f64) -> f64 {
        self.generator.k(x1)
    }
    pub fn dk(&self, x1: f64) -> f64 {
        self.generator.dk(x1)
    }
    pub fn ddk(&self, x1: f64) -> f64 {
        self.generator.ddk(x1)
    }

    /// The scaling map `s(x1)`.
    pub fn scaling(&self, x1: f64) -> f64 {
        (self.scaling)(x1)
    }

    pub fn beta(&self, x1: f64) -> f64 {
        beta_of(self.sys.as_ref(), &self.generator, &self.scaling, x1)
    }

    pub fn rho(&self, x1: f64) -> f64 {
        rho_of(self.sys.as_ref(), &self.generator, &self.scaling, x1)
    }

    /// Target inertia `m(x1) = exp(-2∫₀^{x1} β)`, tabulated.
    pub fn mass(&self, x1: f64) -> f64 {
        if self.mass.contains(x1) {
            return self.mass.eval(x1);
        }
        if let Some(x) = self.wrap(x1) {
            return self.mass.eval(x);
        }
        self.outside(x1).0
    }

    /// `(m, U)` at `x1` beyond the table, continued from the nearest cached anchor.
    fn outside(&self, x1: f64) -> (f64, f64) {
        let right = x1 > self.mass.hi();
        let (edge, dir) = if right {
            (self.mass.hi(), 1.0)
        } else {
            (self.mass.lo(), -1.0)
        };
        let k = ((x1 - edge).abs() / ANCHOR_STEP).floor() as usize;
        let mut anchors = self.anchors.lock().unwrap_or_else(|e| e.into_inner());
        let list = if right {
            &mut anchors.right
        } else {
            &mut anchors.left
        };
        if list.is_empty() {
            list.push((self.mass.eval(edge), self.potential.eval(edge)));
        }
        while list.len() <= k {
            let j = list.len() - 1;
            let a = edge + dir * j as f64 * ANCHOR_STEP;
            let next = self.continue_from(a, list[j], a + dir * ANCHOR_STEP);
            list.push(next);
        }
        let start = list[k];
        drop(anchors);
        self.continue_from(edge + dir * k as f64 * ANCHOR_STEP, start, x1)
    }

    fn continue_from(&self, a: f64, (m_a, u_a): (f64, f64), x: f64) -> (f64, f64) {
        let m_at = |s: f64| m_a * (-2.0 * integrate(|r| self.beta(r), a, s, QUAD_ABS_TOL)).exp();
        (
            m_at(x),
            u_a - integrate(|s| self.rho(s) * m_at(s), a, x, QUAD_ABS_TOL),
        )
    }

    /// Period of the target data in `x1`, when it has one.
    pub fn period(&self) -> Option<f64> {
        self.period
    }

    fn wrap(&self, x1: f64) -> Option<f64> {
        let tau = self.period?;
        let lo = self.mass.lo();
        Some(x1 - tau * ((x1 - lo) / tau).floor())
    }

    /// Target potential `U(x1) = -∫₀^{x1} ρ m`, tabulated.
    pub fn potential(&self, x1: f64) -> f64 {
        if self.potential.contains(x1) {
            return self.potential.eval(x1);
        }
        if let Some(x) = self.wrap(x1) {
            return self.potential.eval(x);
        }
        self.outside(x1).1
    }

    /// `m'(x1) = -2 β m`
    pub fn mass_slope(&self, x1: f64) -> f64 {
        -2.0 * self.beta(x1) * self.mass(x1)
    }

    /// `U'(x1) = -ρ m`
    pub fn potential_slope(&self, x1: f64) -> f64 {
        -self.rho(x1) * self.mass(x1)
    }

    /// `m` by direct quadrature from 0, bypassing the table.
    pub fn mass_direct(&self, x1: f64) -> f64 {
        (-2.0 * integrate(|s| self.beta(s), 0.0, x1, 1e-13)).exp()
    }

    /// `U` by nested direct quadrature from 0, bypassing the tables.
    pub fn potential_direct(&self, x1: f64) -> f64 {
        -integrate(|s| self.rho(s) * self.mass_direct(s), 0.0, x1, QUAD_ABS_TOL)
    }

    /// Off-manifold coordinates `z = (x2 - K(x1), x4 - K'(x1) x3)`.
    pub fn phi(&self, x: &State4) -> [f64; 2] {
        [x.x2 - self.k(x.x1), x.x4 - self.dk(x.x1) * x.x3]
    }

    /// Embedding of the target state into the plant state space.
    pub fn pi_map(&self, xi: [f64; 2]) -> State4 {
        State4::new(xi[0], self.k(xi[0]), xi[1], self.dk(xi[0]) * xi[1])
    }

    pub fn checked_scaling(&self, x1: f64) -> Result<f64> {
        let s = self.scaling(x1);
        if !s.is_finite() || s.abs() < singular_threshold(self.sys.m_uu(x1)) {
            return Err(Error::ControlSingularity { x1, value: s.abs() });
        }
        Ok(s)
    }

    /// The closed-loop feedback `u(x)`.
    pub fn control_u(&self, x: &State4) -> Result<f64> {
        let sys = self.system();
        let q = x.x1;
        let s = self.checked_scaling(q)?;
        let (dk, ddk, muu) = (self.dk(q), self.ddk(q), sys.m_uu(q));
        let [phi1, phi2] = self.phi(x);
        let (g1, g2) = self.gains();
        let num = dk * (x.x4 * x.x4 * sys.c_bar_u(q) + x.x3 * x.x3 * sys.c_a(q))
            - muu * ddk * x.x3 * x.x3
            + dk * sys.grad_u_v(q, x.x2)
            + muu * (g1 * phi1 + g2 * phi2);
        Ok(-num / s)
    }

    /// The feedback written with `z` as a free argument.
    pub fn v_control(&self, x: &State4, z: [f64; 2]) -> Result<f64> {
        let sys = self.system();
        let q = x.x1;
        let s = self.checked_scaling(q)?;
        let (dk, ddk, muu) = (self.dk(q), self.ddk(q), sys.m_uu(q));
        let (g1, g2) = self.gains();
        let num = -dk * (sys.c_bar_u(q) * x.x4 * x.x4 + sys.c_a(q) * x.x3 * x.x3)
            - dk * sys.grad_u_v(q, x.x2)
            + muu * ddk * x.x3 * x.x3
            - muu * (g1 * z[0] + g2 * z[1]);
        Ok(num / s)
    }

    /// Closed-form on-manifold control `c(π(ξ))`.
    pub fn manifold_control(&self, xi: [f64; 2]) -> Result<f64> {
        let sys = self.system();
        let q = xi[0];
        let s = self.checked_scaling(q)?;
        let (k, dk, ddk) = (self.k(q), self.dk(q), self.ddk(q));
        let v2 = xi[1] * xi[1];
        let num = dk * (sys.c_bar_u(q) * dk * dk + sys.c_a(q)) * v2 + dk * sys.grad_u_v(q, k)
            - sys.m_uu(q) * ddk * v2;
        Ok(-num / s)
    }

    /// Interior critical points of `U` on `(lo, hi)`, located by sign changes of
    /// `U'` on a grid and refined by bisection to 1e-10.
    pub fn critical_points(&self, interval: (f64, f64)) -> Vec<CriticalPoint> {
        let (lo, hi) = interval;
        let grid = linspace(lo, hi, 4001);
        let du = |x: f64| self.potential_slope(x);
        let mut roots = Vec::new();
        let mut prev = du(grid[0]);
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let fb = du(b);
            if fb == 0.0 && b < hi {
                roots.push(b);
            } else if prev != 0.0 && fb.signum() != prev.signum() {
                roots.push(bisect(du, a, b, 1e-10));
            }
            prev = fb;
        }
        roots
            .into_iter()
            .filter(|&x| x > lo && x < hi)
            .map(|x| {
                let h = 1e-5;
                let curvature = (du(x + h) - du(x - h)) / (2.0 * h);
                let scale = 1e-9 * (1.0 + du(x + h).abs() / h);
                let kind = if curvature > scale {
                    CriticalKind::Minimum
                } else if curvature < -scale {
                    CriticalKind::Maximum
                } else {
                    CriticalKind::Degenerate
                };
                CriticalPoint {
                    x1: x,
                    potential: self.potential(x),
                    curvature,
                    kind,
                }
            })
            .collect()
    }

    /// Isolated minima of `U` on the open interval; error if there are none.
    pub fn find_potential_minima(&self, interval: (f64, f64)) -> Result<Vec<CriticalPoint>> {
        let minima: Vec<_> = self
            .critical_points(interval)
            .into_iter()
            .filter(|c| c.kind == CriticalKind::Minimum)
            .collect();
        if minima.is_empty() {
            return Err(Error::Assumption {
                assumption: "A3(c)",
                detail: format!(
                    "no isolated minimum of U on ({:.6}, {:.6})",
                    interval.0, interval.1
                ),
            });
        }
        Ok(minima)
    }

    /// The minimum of `U` closest to `x1` (searched on the operating interval).
    pub fn nearest_minimum(&self, x1: f64) -> Result<CriticalPoint> {
        let minima = self.find_potential_minima(self.interval())?;
        Ok(minima
            .into_iter()
            .min_by(|a, b| (a.x1 - x1).abs().total_cmp(&(b.x1 - x1).abs()))
            .expect("non-empty"))
    }
}
