//! Collocated partial feedback linearization.
//!
//! With `τ = u_pl(x, u)` the actuated acceleration becomes `u` and the plant
//! takes the control-affine form `ẋ = f(x) + g(x) u`.

use crate::mechmodel::{MechanicalSystem, SharedSystem, State4};

/// Torque that renders `q̈_a = u`.
pub fn u_pl(sys: &dyn MechanicalSystem, x: &State4, u: f64) -> f64 {
    let q = x.x1;
    let ratio = sys.m_au(q) / sys.m_uu(q);
    let unact = sys.c_bar_u(q) * x.x4 * x.x4 + sys.c_a(q) * x.x3 * x.x3 + sys.grad_u_v(q, x.x2);
    sys.schur(q) * u
        + sys.c_p(q) * x.x4 * x.x3
        + sys.c_s(q) * x.x4 * x.x4
        + sys.c_r(q) * x.x3 * x.x3
        + sys.grad_a_v(q, x.x2)
        - ratio * unact
}

/// Drift and input vector fields after pre-feedback.
#[derive(Clone)]
pub struct SpongForm {
    sys: SharedSystem,
}

impl SpongForm {
    pub fn new(sys: SharedSystem) -> Self {
        Self { sys }
    }

    pub fn system(&self) -> &dyn MechanicalSystem {
        self.sys.as_ref()
    }

    pub fn f(&self, x: &State4) -> [f64; 4] {
        drift(self.sys.as_ref(), x)
    }

    pub fn g(&self, x: &State4) -> [f64; 4] {
        input_field(self.sys.as_ref(), x.x1)
    }

    /// Schur complement `R(x1)`.
    pub fn r(&self, x1: f64) -> f64 {
        self.sys.schur(x1)
    }

    /// `f(x) + g(x) u`
    pub fn rhs(&self, x: &State4, u: f64) -> [f64; 4] {
        let f = self.f(x);
        let g = self.g(x);
        [
            f[0] + g[0] * u,
            f[1] + g[1] * u,
            f[2] + g[2] * u,
            f[3] + g[3] * u,
        ]
    }
}

pub fn drift(sys: &dyn MechanicalSystem, x: &State4) -> [f64; 4] {
    let q = x.x1;
    let acc = -(sys.c_bar_u(q) * x.x4 * x.x4 + sys.c_a(q) * x.x3 * x.x3 + sys.grad_u_v(q, x.x2))
        / sys.m_uu(q);
    [x.x3, x.x4, acc, 0.0]
}

pub fn input_field(sys: &dyn MechanicalSystem, x1: f64) -> [f64; 4] {
    [0.0, 0.0, -sys.m_au(x1) / sys.m_uu(x1), 1.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechmodel::{eval_el_dynamics, linspace, Furuta, Pendubot};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn random_state(rng: &mut impl Rng) -> State4 {
        State4::new(
            rng.gen_range(-PI..PI),
            rng.gen_range(-PI..PI),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        )
    }

    #[test]
    fn zero_torque_at_rest_equilibrium() {
        let f = Furuta::benchmark();
        assert_eq!(u_pl(&f, &State4::default(), 0.0), 0.0);
        let p = Pendubot::benchmark();
        assert!(u_pl(&p, &State4::new(PI, PI, 0.0, 0.0), 0.0).abs() < 1e-15);
    }

    #[test]
    fn collocated_linearization_identity() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let systems: [&dyn MechanicalSystem; 2] = [&Furuta::benchmark(), &Pendubot::benchmark()];
        for sys in systems {
            for _ in 0..500 {
                let x = random_state(&mut rng);
                let u: f64 = rng.gen_range(-20.0..20.0);
                let d = eval_el_dynamics(sys, &x, u_pl(sys, &x, u)).unwrap();
                assert!((d[3] - u).abs() < 1e-9, "{}: {} vs {u}", sys.name(), d[3]);
            }
        }
    }

    #[test]
    fn spong_form_structure() {
        let f = Arc::new(Furuta::benchmark());
        let form = SpongForm::new(f.clone());
        for x1 in linspace(-1.4, 1.4, 29) {
            let g = form.g(&State4::new(x1, 0.0, 0.0, 0.0));
            assert_eq!((g[0], g[1], g[3]), (0.0, 0.0, 1.0));
            assert!((g[2] + f.a1 * x1.cos()).abs() < 1e-14);
            assert!(form.r(x1) > 0.0);
        }
        assert_eq!(form.f(&State4::new(0.0, 0.7, 0.0, 0.0)), [0.0; 4]);
    }

    #[test]
    fn spong_rhs_matches_el_with_pre_feedback() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(12);
        let p: SharedSystem = Arc::new(Pendubot::benchmark());
        let form = SpongForm::new(p.clone());
        for _ in 0..100 {
            let x = random_state(&mut rng);
            let u: f64 = rng.gen_range(-5.0..5.0);
            let a = form.rhs(&x, u);
            let b = eval_el_dynamics(p.as_ref(), &x, u_pl(p.as_ref(), &x, u)).unwrap();
            for i in 0..4 {
                assert!((a[i] - b[i]).abs() < 1e-10 * (1.0 + b[i].abs()));
            }
        }
    }
}
