use std::f64::consts::PI;

use proptest::prelude::*;
use underact::scenario::{furuta_profile, pendubot_profile};
use underact::simcore::{
    read_csv, simulate_closed_loop, write_csv, IntegratorConfig, Representation,
};
use underact::verify::{fbi_point, pseudo_inverse_control};
use underact::{Furuta, Pendubot, State4};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn furuta_designs_solve_invariance(k1 in 2.0..20.0f64, xi1 in -1.3..1.3f64, xi2 in -3.0..3.0f64) {
        let f = Furuta::benchmark();
        let p = furuta_profile(&f, k1, (5.0, 5.0)).unwrap();
        let (r, fnorm) = fbi_point(&p, [xi1, xi2]);
        prop_assert!(r.abs() / (1.0 + fnorm) <= 1e-8);
        let c = p.manifold_control([xi1, xi2]).unwrap();
        prop_assert!((c - pseudo_inverse_control(&p, [xi1, xi2])).abs() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn pendubot_designs_solve_invariance(k2 in -3.0..-0.2f64, xi1 in -PI..PI, xi2 in -3.0..3.0f64) {
        let pb = Pendubot::benchmark();
        let p = pendubot_profile(&pb, k2, (10.0, 5.0)).unwrap();
        let (r, fnorm) = fbi_point(&p, [xi1, xi2]);
        prop_assert!(r.abs() / (1.0 + fnorm) <= 1e-8);
        let z = p.phi(&p.pi_map([xi1, xi2]));
        prop_assert_eq!(z, [0.0, 0.0]);
    }

    #[test]
    fn csv_roundtrip_is_exact(x1 in -1.0..1.0f64, x3 in -1.0..1.0f64, x2 in -1.0..1.0f64) {
        let p = furuta_profile(&Furuta::benchmark(), 5.0, (5.0, 5.0)).unwrap();
        let cfg = IntegratorConfig { t_end: 0.5, ..IntegratorConfig::default() };
        let traj = simulate_closed_loop(&p, State4::new(x1, x2, x3, 0.0), &cfg, Representation::El).unwrap();
        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        let rows = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(rows.len(), traj.len());
        for (a, b) in rows.iter().zip(traj.rows()) {
            prop_assert_eq!(*a, b);
        }
    }
}
