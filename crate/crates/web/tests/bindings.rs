use std::f64::consts::PI;

use underact_web::{d4_data, defaults, potential_data, simulate_run, MAX_SAMPLES};

#[test]
fn furuta_run_oscillates_about_upright() {
    let (k, (g1, g2)) = defaults("furuta").unwrap();
    let r = simulate_run("furuta", k, g1, g2, &[PI / 9.0, 0.6, 0.0, 0.0], 30.0).unwrap();
    assert!(r.t.len() <= MAX_SAMPLES && r.t.len() > 1000);
    assert!(r.abort.is_none());
    assert!(r.tail_mean_x1.unwrap().abs() < 0.05);
    assert!(r.x[0].iter().all(|x| x.abs() < PI / 2.0));
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["x"][0].is_array() && json["hx"].is_array());
}

#[test]
fn bad_inputs_are_errors() {
    assert!(simulate_run("acrobot", 1.0, 1.0, 1.0, &[0.0; 4], 1.0).is_err());
    assert!(simulate_run("furuta", 5.0, 5.0, 5.0, &[0.0; 3], 1.0).is_err());
    assert!(simulate_run("furuta", 5.0, -5.0, 5.0, &[0.0; 4], 1.0).is_err());
    assert!(simulate_run("furuta", 5.0, 5.0, 5.0, &[0.0; 4], 1e6).is_err());
    assert!(d4_data(true, -1.0).is_err());
}

#[test]
fn pendubot_potential_has_minimum_at_pi() {
    let (k, _) = defaults("pendubot").unwrap();
    let p = potential_data("pendubot", k, 801).unwrap();
    assert_eq!(p.x1.len(), 801);
    assert!(
        p.minima.iter().any(|m| (m - PI).abs() < 1e-8),
        "{:?}",
        p.minima
    );
    assert!(p.mass.iter().all(|m| *m > 0.0));
}

#[test]
fn d4_perturbed_energy_doubles() {
    let on = d4_data(true, 20.0).unwrap();
    let off = d4_data(false, 20.0).unwrap();
    assert!(on.doubling_time.is_some_and(|t| t < 2.0));
    assert!(off.doubling_time.is_none());
    assert!(off.h.iter().all(|h| (h - off.h0).abs() < 1e-6 * off.h0));
    assert_eq!(*on.t.last().unwrap(), 20.0);
}
