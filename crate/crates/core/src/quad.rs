//! Adaptive quadrature and cumulative integral tables.

/// ∫_a^b f, any orientation, adaptive double-exponential rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    sign * quadrature::integrate(f, lo, hi, abs_tol).integral
}

const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Eight-point Gauss-Legendre rule on `[a, b]`; for short cells of smooth
/// integrands.
pub fn gauss8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in GL8 {
        s += w * (f(c - r * x) + f(c + r * x));
    }
    r * s
}

/// Piecewise cubic Hermite interpolant with exact nodal slopes supplied by
/// the caller. Nodes must be strictly increasing.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    xs: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    /// Uniform grid on `[lo, hi]`.
    pub fn new(lo: f64, hi: f64, values: Vec<f64>, slopes: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n >= 2);
        let step = (hi - lo) / (n - 1) as f64;
        let mut xs: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        xs[n - 1] = hi;
        Self::from_nodes(xs, values, slopes)
    }

    pub fn from_nodes(xs: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && values.len() == xs.len() && slopes.len() == xs.len());
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "nodes must increase");
        Self { xs, values, slopes }
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn node(&self, i: usize) -> f64 {
        self.xs[i]
    }

    pub fn nodes(&self) -> usize {
        self.xs.len()
    }

    pub fn value_at_node(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    /// Interpolated value; `x` is clamped to the table range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self
            .xs
            .partition_point(|&t| t <= x)
            .saturating_sub(1)
            .min(n - 2);
        let h = self.xs[i + 1] - self.xs[i];
        let t = ((x - self.xs[i]) / h).clamp(0.0, 1.0);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        if t == 0.0 {
            return y0;
        }
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_in_both_orientations() {
        let v = integrate(|x| x.cos(), 0.0, 1.0, 1e-12);
        assert!((v - 1f64.sin()).abs() < 1e-12);
        let w = integrate(|x| x.cos(), 1.0, 0.0, 1e-12);
        assert!((w + v).abs() < 1e-15);
        assert_eq!(integrate(|x| x, 2.0, 2.0, 1e-12), 0.0);
    }

    #[test]
    fn gauss8_exact_for_degree_15() {
        let f = |x: f64| x.powi(15) - 3.0 * x.powi(8) + 1.0;
        let exact = |x: f64| x.powi(16) / 16.0 - x.powi(9) / 3.0 + x;
        assert!((gauss8(f, -0.3, 1.2) - (exact(1.2) - exact(-0.3))).abs() < 1e-13);
        assert!((gauss8(f, 1.2, -0.3) + gauss8(f, -0.3, 1.2)).abs() < 1e-15);
    }

    #[test]
    fn hermite_reproduces_cubics_exactly() {
        let f = |x: f64| 2.0 * x * x * x - x + 0.5;
        let df = |x: f64| 6.0 * x * x - 1.0;
        let n = 9;
        let xs: Vec<f64> = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect();
        let t = HermiteTable::new(
            -1.0,
            1.0,
            xs.iter().map(|&x| f(x)).collect(),
            xs.iter().map(|&x| df(x)).collect(),
        );
        for k in 0..50 {
            let x = -1.0 + 2.0 * k as f64 / 49.0;
            assert!((t.eval(x) - f(x)).abs() < 1e-13);
        }
        assert!(t.contains(1.0) && !t.contains(1.0001));
    }
}
