use std::path::Path;
use std::process::{Command, Output};

use underact_cli::commands::{sweep, sweep_configs, sweep_table, SweepAxis};
use underact_cli::config::ScenarioConfig;

fn underact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_underact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn demo_furuta_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("furuta.csv");
    let o = underact(&["demo", "furuta", "--out", path(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3,x4,z1,z2,u,Hx"));
    let row: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 9);
    for v in row {
        let mantissa = v.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{v}");
    }
    assert_eq!(text.lines().count(), 3002);
    let summary = std::fs::read_to_string(dir.path().join("furuta.summary.toml")).unwrap();
    assert!(summary.contains("status = \"periodic\""), "{summary}");
}

#[test]
fn point_orbit_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rest.csv");
    let o = underact(&[
        "demo",
        "furuta",
        "--x0",
        "0,0,0,0",
        "--t-end",
        "5",
        "--out",
        path(&csv),
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("status = \"point-orbit\""));
}

#[test]
fn config_errors_exit_3() {
    assert_eq!(code(&underact(&["demo", "pendubot", "--k1", "3"])), 3);
    assert_eq!(code(&underact(&["demo", "furuta", "--gamma1", "-1"])), 3);
    assert_eq!(code(&underact(&["demo", "furuta", "--method", "euler"])), 3);
    assert_eq!(
        code(&underact(&["simulate", "/nonexistent/scenario.toml"])),
        3
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "x0 = [0, 0, 0, 0]\n[system]\nkind = \"furuta\"\n").unwrap();
    assert_eq!(code(&underact(&["simulate", path(&cfg)])), 3);
}

#[test]
fn plotdata_schema_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&underact(&["plotdata", path(&empty)])), 3);
    let header_only = dir.path().join("header.csv");
    std::fs::write(&header_only, "t,x1,x2,x3,x4,z1,z2,u,Hx\n").unwrap();
    assert_eq!(code(&underact(&["plotdata", path(&header_only)])), 3);
    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "t,x\n0,1\n").unwrap();
    assert_eq!(code(&underact(&["plotdata", path(&wrong)])), 3);
}

#[test]
fn plotdata_thins_long_runs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("long.csv");
    assert_eq!(
        code(&underact(&[
            "demo",
            "furuta",
            "--t-end",
            "80",
            "--out",
            path(&csv)
        ])),
        0
    );
    let phase = dir.path().join("phase.csv");
    let o = underact(&[
        "plotdata",
        path(&csv),
        "--kind",
        "phase",
        "--out",
        path(&phase),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&phase).unwrap();
    assert_eq!(text.lines().next(), Some("x1,x3,x2,x4"));
    let n = text.lines().count() - 1;
    assert!(n <= 5000 && n > 1000, "{n}");

    let o = underact(&["plotdata", path(&csv), "--columns", "z1,z2"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() <= 5000);
    let early = rows
        .iter()
        .filter(|r| r[0] < 5.0)
        .map(|r| r[1].abs())
        .fold(0.0, f64::max);
    let late = rows
        .iter()
        .filter(|r| r[0] > 20.0)
        .map(|r| r[1].abs())
        .fold(0.0, f64::max);
    assert!(late < 1e-6 * early, "{early} {late}");
}

#[test]
fn verify_furuta_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert");
    let o = underact(&["verify", "--system", "furuta", "--d4", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let toml = std::fs::read_to_string(dir.path().join("cert.toml")).unwrap();
    assert!(toml.contains("all_passed = true"));
    let csv = std::fs::read_to_string(dir.path().join("cert.csv")).unwrap();
    assert!(csv.starts_with("name,status,worst_residual,location,tolerance,detail\n"));
    for name in [
        "d4-conservative",
        "d4-perturbed",
        "d4-zeroed",
        "fbi-residual",
    ] {
        assert!(
            csv.lines().any(|l| l.starts_with(&format!("{name},pass"))),
            "{name}"
        );
    }
    assert!(csv.contains("closed-form-furuta-mass,expected-deviation"));
}

#[test]
fn verify_detects_mutated_generator() {
    let o = underact(&["verify", "--system", "furuta", "--mutate-k", "1.01"]);
    assert_ne!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout
        .lines()
        .find(|l| l.starts_with("fbi-residual"))
        .unwrap();
    assert!(line.contains("Fail"), "{line}");
}

#[test]
fn singular_control_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("singular.toml");
    std::fs::write(
        &cfg,
        r#"
x0 = [0.0, 0.0, -3.0, 0.0]

[system]
kind = "custom"

[system.custom]
m_uu = "1"
m_au = "0.5"
m_aa = "1"
potential = "0"

[synthesis]
k = "x1^2 - 4 * x1"
gamma1 = 5.0
gamma2 = 5.0
interval = [-0.5, 0.5]

[integrator]
method = "rk45"
h = 0.001
rtol = 1e-9
atol = 1e-11
t_end = 10.0
output_dt = 0.01
"#,
    )
    .unwrap();
    let csv = dir.path().join("run.csv");
    let o = underact(&["simulate", path(&cfg), "--out", path(&csv)]);
    assert_eq!(
        code(&o),
        2,
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("abort"));
    assert!(csv.exists());
}

#[test]
fn sweep_is_order_independent() {
    let base = ScenarioConfig::furuta_demo();
    let values = "5:5;20:2;50:0.5;10:3";
    let configs = sweep_configs(&base, SweepAxis::GammaPairs, values).unwrap();
    let labels: Vec<String> = values.split(';').map(String::from).collect();
    let serial = sweep(&configs, &labels, Some(1)).unwrap();
    let parallel = sweep(&configs, &labels, Some(4)).unwrap();
    assert_eq!(sweep_table(&serial), sweep_table(&parallel));

    let mut rev_configs = configs.clone();
    rev_configs.reverse();
    let mut rev_labels = labels.clone();
    rev_labels.reverse();
    let reversed = sweep(&rev_configs, &rev_labels, Some(3)).unwrap();
    for (a, b) in serial.iter().zip(reversed.iter().rev()) {
        assert_eq!(a.value, b.value);
        assert_eq!(a.summary.to_toml(), b.summary.to_toml());
    }
}

#[test]
fn k_sweep_keeps_amplitude_and_lowers_velocity() {
    let base = ScenarioConfig::furuta_demo();
    let configs = sweep_configs(&base, SweepAxis::KParameter, "5;9;15").unwrap();
    let labels = vec!["5".to_string(), "9".into(), "15".into()];
    let rows = sweep(&configs, &labels, None).unwrap();
    let amp: Vec<f64> = rows
        .iter()
        .map(|r| r.summary.orbit.as_ref().unwrap().amplitude[0])
        .collect();
    let vel: Vec<f64> = rows
        .iter()
        .map(|r| r.summary.orbit.as_ref().unwrap().max_abs[2])
        .collect();
    assert!(
        amp.iter().all(|a| (a - amp[0]).abs() < 0.1 * amp[0]),
        "{amp:?}"
    );
    assert!(vel.windows(2).all(|w| w[1] < w[0]), "{vel:?}");
}

#[test]
fn threads_env_var_is_honored() {
    let o = Command::new(env!("CARGO_BIN_EXE_underact"))
        .args([
            "sweep",
            "--axis",
            "gamma-pairs",
            "--values",
            "5:5",
            "--t-end",
            "5",
        ])
        .env("UNDERACT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    let o = Command::new(env!("CARGO_BIN_EXE_underact"))
        .args([
            "sweep",
            "--axis",
            "gamma-pairs",
            "--values",
            "5:5;6:6",
            "--t-end",
            "5",
        ])
        .env("UNDERACT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
}
