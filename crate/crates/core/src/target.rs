//! The two-dimensional target oscillator `ξ̇ = (ξ2, ρ(ξ1) + β(ξ1) ξ2²)` and its
//! Hamiltonian structure `ξ̇ = J ∇H`, `H = ½ m ξ2² + U`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{crossings, solve, Direction, OdeOptions};
use crate::synthesis::{CriticalPoint, SynthesisProfile};

pub fn target_field(p: &SynthesisProfile, xi: [f64; 2]) -> [f64; 2] {
    [xi[1], p.rho(xi[0]) + p.beta(xi[0]) * xi[1] * xi[1]]
}

pub fn hamiltonian(p: &SynthesisProfile, xi: [f64; 2]) -> f64 {
    0.5 * p.mass(xi[0]) * xi[1] * xi[1] + p.potential(xi[0])
}

/// `∇H = (½ m' ξ2² + U', m ξ2)`
pub fn grad_h(p: &SynthesisProfile, xi: [f64; 2]) -> [f64; 2] {
    [
        0.5 * p.mass_slope(xi[0]) * xi[1] * xi[1] + p.potential_slope(xi[0]),
        p.mass(xi[0]) * xi[1],
    ]
}

/// The structure matrix `J = [[0, 1/m], [-1/m, 0]]`.
pub fn structure_matrix(p: &SynthesisProfile, xi1: f64) -> [[f64; 2]; 2] {
    let inv = 1.0 / p.mass(xi1);
    [[0.0, inv], [-inv, 0.0]]
}

/// `J ∇H`, which coincides with [`target_field`].
pub fn hamiltonian_field(p: &SynthesisProfile, xi: [f64; 2]) -> [f64; 2] {
    let j = structure_matrix(p, xi[0]);
    let g = grad_h(p, xi);
    [j[0][1] * g[1], j[1][0] * g[0]]
}

/// `(J - r I) ∇H`, along which `Ḣ = -r |∇H|²`.
pub fn damped_aux_field(p: &SynthesisProfile, eta: [f64; 2], r_damp: f64) -> Result<[f64; 2]> {
    if !(r_damp.is_finite() && r_damp > 0.0) {
        return Err(Error::InvalidParameter {
            name: "r_damp".into(),
            value: r_damp,
            reason: "damping must be positive",
        });
    }
    let j = structure_matrix(p, eta[0]);
    let g = grad_h(p, eta);
    Ok([
        j[0][1] * g[1] - r_damp * g[0],
        j[1][0] * g[0] - r_damp * g[1],
    ])
}

/// A closed level set of `H` around an isolated minimum of `U`.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitLevel {
    pub energy: f64,
    pub minimum: CriticalPoint,
    /// Extreme values of `ξ1` on the orbit, where `U(ξ1) = energy`.
    pub turning_points: (f64, f64),
    /// Period from successive rising crossings of `ξ2 = 0`.
    pub period: f64,
    /// Period from successive rising crossings of `ξ1 = x1*`.
    pub period_alt: f64,
    /// `|ξ(T) - ξ(0)|` after integrating one period.
    pub closure_error: f64,
}

/// Integrator settings used for orbit analysis.
pub fn orbit_ode_options() -> OdeOptions {
    OdeOptions::rk45(1e-10, 1e-12)
}

/// Level set through `xi0` with its period.
pub fn orbit_from_ic(p: &SynthesisProfile, xi0: [f64; 2]) -> Result<OrbitLevel> {
    if !(xi0[0].is_finite() && xi0[1].is_finite()) {
        return Err(Error::NonFinite("target initial state"));
    }
    let minimum = p.nearest_minimum(xi0[0])?;
    let energy = hamiltonian(p, xi0);
    let depth = energy - minimum.potential;
    if depth <= 1e-12 * (1.0 + minimum.potential.abs()) {
        return Err(Error::DegenerateOrbit);
    }
    let turning_points = (
        turning_point(p, minimum.x1, energy, -1.0)?,
        turning_point(p, minimum.x1, energy, 1.0)?,
    );
    let inside = p.critical_points(turning_points);
    if inside.len() != 1 {
        return Err(Error::NonPeriodic(format!(
            "{} equilibria of the target system on the level set range ({:.6}, {:.6})",
            inside.len(),
            turning_points.0,
            turning_points.1
        )));
    }

    let opts = orbit_ode_options();
    let field = |_: f64, xi: &[f64; 2]| Ok(target_field(p, *xi));
    let x_star = minimum.x1;
    let mut horizon = 10.0;
    let (period, period_alt) = loop {
        let sol = solve(field, 0.0, xi0, horizon, &opts).into_result()?;
        let a = crossings(&sol, |_, y| y[1], Direction::Rising, 1e-10);
        let b = crossings(&sol, |_, y| y[0] - x_star, Direction::Rising, 1e-10);
        if a.len() >= 2 && b.len() >= 2 {
            break (a[1].0 - a[0].0, b[1].0 - b[0].0);
        }
        horizon *= 2.0;
        if horizon > 1e4 {
            return Err(Error::NonPeriodic(
                "no return to the section within t = 1e4".into(),
            ));
        }
    };
    let end = solve(field, 0.0, xi0, period, &opts).into_result()?.last();
    let closure_error = ((end[0] - xi0[0]).powi(2) + (end[1] - xi0[1]).powi(2)).sqrt();
    Ok(OrbitLevel {
        energy,
        minimum,
        turning_points,
        period,
        period_alt,
        closure_error,
    })
}

/// First `x` from `x_star` in direction `dir` with `U(x) = energy`.
fn turning_point(p: &SynthesisProfile, x_star: f64, energy: f64, dir: f64) -> Result<f64> {
    let (lo, hi) = p.interval();
    let step = (hi - lo) / 4000.0;
    let mut a = x_star;
    loop {
        let b = a + dir * step;
        if b < lo || b > hi {
            return Err(Error::NonPeriodic(format!(
                "level set H = {energy:.6e} leaves the operating interval"
            )));
        }
        if p.potential(b) >= energy {
            return Ok(crate::synthesis::bisect(
                |x| p.potential(x) - energy,
                a,
                b,
                1e-13,
            ));
        }
        a = b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechmodel::{Furuta, Pendubot};
    use crate::ode::{solve, OdeOptions};
    use crate::synthesis::{make_profile, Design, ProfileSettings};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn furuta() -> SynthesisProfile {
        let f = Furuta::benchmark();
        make_profile(
            Arc::new(f.clone()),
            Design::furuta_k1(&f, 5.0),
            ProfileSettings {
                gamma1: 5.0,
                gamma2: 5.0,
                interval: (-1.4, 1.4),
            },
        )
        .unwrap()
    }

    fn pendubot() -> SynthesisProfile {
        let p = Pendubot::benchmark();
        make_profile(
            Arc::new(p.clone()),
            Design::pendubot_k2(&p, -1.0),
            ProfileSettings {
                gamma1: 10.0,
                gamma2: 5.0,
                interval: (-2.0 * PI, 2.0 * PI),
            },
        )
        .unwrap()
    }

    #[test]
    fn equilibria_at_minima() {
        let f = furuta();
        assert_eq!(target_field(&f, [0.0, 0.0]), [0.0, 0.0]);
        let p = pendubot();
        let v = target_field(&p, [PI, 0.0]);
        assert!(v[0] == 0.0 && v[1].abs() < 1e-12);
        assert_eq!(hamiltonian(&f, [0.0, 0.0]), 0.0);
        assert_eq!(hamiltonian(&p, [0.0, 0.0]), 0.0);
    }

    #[test]
    fn factorizations_agree() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for (p, r) in [(furuta(), 1.3), (pendubot(), 6.0)] {
            for _ in 0..500 {
                let xi = [rng.gen_range(-r..r), rng.gen_range(-3.0..3.0)];
                let a = target_field(&p, xi);
                let b = hamiltonian_field(&p, xi);
                for k in 0..2 {
                    assert!((a[k] - b[k]).abs() <= 1e-9 * (1.0 + a[k].abs()), "{xi:?}");
                }
                let g = grad_h(&p, xi);
                let skew = g[0] * b[0] + g[1] * b[1];
                assert!(
                    skew.abs() <= 1e-12 * (1.0 + g[0].abs() * b[0].abs() + g[1].abs() * b[1].abs())
                );
            }
        }
    }

    #[test]
    fn furuta_restoring_force() {
        assert!(target_field(&furuta(), [0.3, 0.0])[1] < 0.0);
    }

    #[test]
    fn minimum_of_h_on_grid() {
        let p = pendubot();
        let h_star = hamiltonian(&p, [PI, 0.0]);
        for k in 0..=400 {
            let x = -2.0 * PI + 4.0 * PI * k as f64 / 400.0;
            assert!(hamiltonian(&p, [x, 0.0]) >= h_star - 1e-10 * h_star.abs());
        }
    }

    #[test]
    fn conservation_under_fixed_step() {
        let p = furuta();
        let xi0 = [PI / 9.0, 0.0];
        let orbit = orbit_from_ic(&p, xi0).unwrap();
        let sol = solve(
            |_, xi: &[f64; 2]| Ok(target_field(&p, *xi)),
            0.0,
            xi0,
            10.0 * orbit.period,
            &OdeOptions::rk4(1e-3),
        )
        .into_result()
        .unwrap();
        let h0 = hamiltonian(&p, xi0);
        let drift = sol
            .y
            .iter()
            .map(|xi| (hamiltonian(&p, *xi) - h0).abs())
            .fold(0.0, f64::max);
        assert!(drift / (h0 - orbit.minimum.potential) < 1e-6, "{drift}");
    }

    #[test]
    fn damped_field_dissipates() {
        let p = furuta();
        let r = 0.5;
        assert_eq!(damped_aux_field(&p, [0.0, 0.0], r).unwrap(), [0.0, 0.0]);
        assert!(damped_aux_field(&p, [0.0, 0.0], 0.0).is_err());
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for _ in 0..1000 {
            let eta = [rng.gen_range(-1.3..1.3), rng.gen_range(-3.0..3.0)];
            let g = grad_h(&p, eta);
            let v = damped_aux_field(&p, eta, r).unwrap();
            let dh = g[0] * v[0] + g[1] * v[1];
            let expected = -r * (g[0] * g[0] + g[1] * g[1]);
            assert!(dh <= 0.0);
            assert!((dh - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn damped_field_converges_to_minimum() {
        let p = furuta();
        let r = 0.5;
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..3 {
            let eta0 = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let sol = solve(
                |_, e: &[f64; 2]| damped_aux_field(&p, *e, r),
                0.0,
                eta0,
                200.0 / r,
                &OdeOptions::rk45(1e-9, 1e-12),
            )
            .into_result()
            .unwrap();
            let e = sol.last();
            assert!((e[0] * e[0] + e[1] * e[1]).sqrt() < 1e-4, "{e:?}");
        }
    }

    #[test]
    fn furuta_orbit_is_symmetric() {
        let p = furuta();
        let o = orbit_from_ic(&p, [PI / 9.0, 0.0]).unwrap();
        assert!(
            (o.turning_points.0 + PI / 9.0).abs() < 1e-9,
            "{:?}",
            o.turning_points
        );
        assert!((o.turning_points.1 - PI / 9.0).abs() < 1e-9);
        assert!(((o.period - o.period_alt) / o.period).abs() < 1e-4);
        assert!(o.closure_error < 1e-5, "{}", o.closure_error);
        assert!(o.minimum.x1.abs() < 1e-10);
    }

    #[test]
    fn pendubot_orbit_about_pi() {
        let p = pendubot();
        let o = orbit_from_ic(&p, [PI + 0.4, 0.0]).unwrap();
        assert!((o.minimum.x1 - PI).abs() < 1e-9);
        assert!(o.turning_points.0 < PI && o.turning_points.1 > PI);
        assert!(((o.period - o.period_alt) / o.period).abs() < 1e-4);
        assert!(o.closure_error < 1e-5);
    }

    #[test]
    fn degenerate_and_saddle_cases() {
        let p = furuta();
        assert!(matches!(
            orbit_from_ic(&p, [0.0, 0.0]),
            Err(Error::DegenerateOrbit)
        ));
        // energy above the maxima at ±π/2 of the Pendubot: level set is not closed in the well
        let q = pendubot();
        let h_max = hamiltonian(&q, [PI / 2.0, 0.0]);
        let v = (2.0 * (h_max - hamiltonian(&q, [PI, 0.0])) * 1.5 / q.mass(PI)).sqrt();
        assert!(matches!(
            orbit_from_ic(&q, [PI, v]),
            Err(Error::NonPeriodic(_))
        ));
    }
}
