use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use underact::ode::Method;
use underact::scenario::mutated_profile;
use underact::simcore::{
    extract_steady_orbit, read_csv, simulate_closed_loop, write_csv, OrbitSummary, Representation,
    Trajectory, CSV_HEADER,
};
use underact::verify::{z_decay_fit, CertReport, CheckKind, VerifyContext, ZDecayFit};

use crate::config::{Resolved, ScenarioConfig, SystemKind};
use crate::decimate::decimate;
use crate::error::CliError;

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub x0: Option<[f64; 4]>,
    pub t_end: Option<f64>,
    pub method: Option<Method>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        let s = &mut cfg.synthesis;
        if let Some(v) = self.gamma1 {
            s.gamma1 = v;
        }
        if let Some(v) = self.gamma2 {
            s.gamma2 = v;
        }
        if let Some(v) = self.k1 {
            s.k1 = Some(v);
        }
        if let Some(v) = self.k2 {
            s.k2 = Some(v);
        }
        if let Some(v) = self.x0 {
            cfg.x0 = v;
        }
        if let Some(v) = self.t_end {
            cfg.integrator.t_end = v;
        }
        if let Some(v) = self.method {
            cfg.integrator.method = v;
        }
        if let Some(v) = &self.out {
            cfg.output.csv = Some(v.clone());
        }
    }
}

/// Tail fraction used for every steady-state statistic.
pub const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub gamma1: f64,
    pub gamma2: f64,
    pub x0: [f64; 4],
    pub t_end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit_error: Option<String>,
    pub hx_final: f64,
    pub z_decay: ZDecayFit,
    /// Largest |x3|, |x4| over the whole run.
    pub max_abs_x3: f64,
    pub max_abs_x4: f64,
}

impl RunSummary {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}

pub fn summarize(r: &Resolved, traj: &Trajectory) -> RunSummary {
    let (g1, g2) = r.profile.gains();
    let (orbit, orbit_error) = match extract_steady_orbit(traj, TAIL_FRACTION) {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let max_abs = |k: usize| {
        let (lo, hi) = traj.dense.range_of(k, traj.dense.t_start(), traj.t_end());
        lo.abs().max(hi.abs())
    };
    RunSummary {
        label: r.label.clone(),
        gamma1: g1,
        gamma2: g2,
        x0: r.x0.to_array(),
        t_end: traj.t_end(),
        abort: traj.abort.as_ref().map(|e| e.to_string()),
        orbit,
        orbit_error,
        hx_final: traj.hx.last().copied().unwrap_or(f64::NAN),
        z_decay: z_decay_fit(traj, g1, g2),
        max_abs_x3: max_abs(2),
        max_abs_x4: max_abs(3),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// Summary path next to the CSV: `run.csv` gives `run.summary.toml`.
pub fn default_summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.toml")
}

/// Runs one scenario, writing the CSV and summary if paths are configured.
pub fn simulate(cfg: &ScenarioConfig, rep: Representation) -> Result<RunSummary, CliError> {
    let r = cfg.resolve()?;
    let traj = simulate_closed_loop(&r.profile, r.x0, &r.integrator, rep)?;
    let summary = summarize(&r, &traj);
    if let Some(csv) = &cfg.output.csv {
        if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(csv)?);
        write_csv(&traj, &mut w)?;
        w.flush()?;
        let summary_path = cfg
            .output
            .summary
            .clone()
            .unwrap_or_else(|| default_summary_path(csv));
        write_file(&summary_path, &summary.to_toml())?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    GammaPairs,
    KParameter,
    InitialConditions,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gamma-pairs" => Ok(SweepAxis::GammaPairs),
            "k-parameter" => Ok(SweepAxis::KParameter),
            "initial-conditions" => Ok(SweepAxis::InitialConditions),
            other => Err(format!(
                "unknown axis `{other}` (expected gamma-pairs, k-parameter or initial-conditions)"
            )),
        }
    }
}

fn numbers(s: &str, sep: char, n: usize) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(sep)
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("bad number in `{s}`: {e}")))?;
    if v.len() != n {
        return Err(CliError::Config(format!(
            "`{s}` needs {n} values separated by `{sep}`"
        )));
    }
    Ok(v)
}

/// Parses sweep values: `5:5;20:2` for gain pairs, `5;9;15` for the design
/// parameter, `x1:x2:x3:x4;...` for initial conditions.
pub fn sweep_configs(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &str,
) -> Result<Vec<ScenarioConfig>, CliError> {
    let items: Vec<&str> = values
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    items
        .into_iter()
        .map(|item| {
            let mut c = base.clone();
            match axis {
                SweepAxis::GammaPairs => {
                    let v = numbers(item, ':', 2)?;
                    c.synthesis.gamma1 = v[0];
                    c.synthesis.gamma2 = v[1];
                }
                SweepAxis::KParameter => {
                    let k = numbers(item, ':', 1)?[0];
                    match c.system.kind {
                        SystemKind::Furuta => c.synthesis.k1 = Some(k),
                        SystemKind::Pendubot => c.synthesis.k2 = Some(k),
                        SystemKind::Custom => {
                            return Err(CliError::Config(
                                "custom designs have no scalar design parameter".into(),
                            ))
                        }
                    }
                }
                SweepAxis::InitialConditions => {
                    let v = numbers(item, ':', 4)?;
                    c.x0 = [v[0], v[1], v[2], v[3]];
                }
            }
            c.output = Default::default();
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: String,
    pub summary: RunSummary,
}

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Failed(e.to_string()))
}

/// Runs every configuration in parallel; rows come back in input order.
pub fn sweep(
    configs: &[ScenarioConfig],
    labels: &[String],
    threads: Option<usize>,
) -> Result<Vec<SweepRow>, CliError> {
    let resolved: Vec<Resolved> = configs
        .iter()
        .map(ScenarioConfig::resolve)
        .collect::<Result<_, _>>()?;
    let pool = thread_pool(threads)?;
    pool.install(|| {
        resolved
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let traj =
                    simulate_closed_loop(&r.profile, r.x0, &r.integrator, Representation::El)?;
                Ok(SweepRow {
                    index: i,
                    value: labels[i].clone(),
                    summary: summarize(r, &traj),
                })
            })
            .collect()
    })
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "index,value,status,period,amplitude_x1,amplitude_x2,mean_x1,max_abs_x3,max_abs_x4,hx_tail,hx_variation,z_rate\n",
    );
    for r in rows {
        let s = &r.summary;
        let status = match (&s.abort, &s.orbit) {
            (Some(_), _) => "aborted".to_string(),
            (None, Some(o)) => format!("{:?}", o.status).to_lowercase(),
            (None, None) => "no-orbit".to_string(),
        };
        let o = s.orbit.as_ref();
        let f = |v: Option<f64>| {
            v.map(|v| format!("{v:.10e}"))
                .unwrap_or_else(|| "nan".into())
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.value.replace(',', " "),
            status,
            f(o.and_then(|o| o.period)),
            f(o.map(|o| o.amplitude[0])),
            f(o.map(|o| o.amplitude[1])),
            f(o.map(|o| o.mean[0])),
            f(Some(s.max_abs_x3)),
            f(Some(s.max_abs_x4)),
            f(o.map(|o| o.hx_mean)),
            f(o.map(|o| o.hx_variation)),
            f(s.z_decay.fitted_rate),
        );
    }
    out
}

/// Builds the check context (optionally with a mutated generator) and runs
/// the checks in parallel.
pub fn verify(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<CertReport, CliError> {
    let r = cfg.resolve()?;
    let mut label = r.label.clone();
    let profile = match cfg.verify.mutate_k {
        Some(f) if !(f.is_finite() && f != 0.0) => {
            return Err(CliError::Config(format!(
                "mutate_k must be finite and nonzero, got {f}"
            )))
        }
        Some(f) => {
            label.push_str(&format!(" mutated K x{f}"));
            mutated_profile(&r.profile, f)?
        }
        None => r.profile.clone(),
    };
    let ctx = VerifyContext::new(
        label,
        profile,
        r.x0,
        &r.integrator,
        r.check_range,
        r.quoted_forms.clone(),
    )?;
    let kinds = CheckKind::for_context(&ctx, cfg.verify.d4);
    let pool = thread_pool(threads)?;
    let checks = pool.install(|| kinds.par_iter().map(|k| k.run(&ctx)).collect());
    Ok(CertReport::new(ctx.label.clone(), checks))
}

pub fn write_report(report: &CertReport, out: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let (toml_path, csv_path) = (out.with_extension("toml"), out.with_extension("csv"));
    write_file(&toml_path, &report.to_toml())?;
    write_file(&csv_path, &report.to_csv())?;
    Ok((toml_path, csv_path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Timeseries,
    Phase,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "timeseries" => Ok(PlotKind::Timeseries),
            "phase" => Ok(PlotKind::Phase),
            other => Err(format!(
                "unknown plot kind `{other}` (expected timeseries or phase)"
            )),
        }
    }
}

pub const MAX_PLOT_POINTS: usize = 5000;

/// Plot-ready CSV text: `t` plus the chosen columns, or the phase pairs
/// `x1,x3,x2,x4`, thinned to at most `max_points` rows.
pub fn plotdata(
    csv: &Path,
    kind: PlotKind,
    columns: &[String],
    max_points: usize,
) -> Result<String, CliError> {
    let file = File::open(csv)
        .map_err(|e| CliError::Schema(format!("cannot open {}: {e}", csv.display())))?;
    let rows = read_csv(BufReader::new(file))?;
    if rows.is_empty() {
        return Err(CliError::Schema(format!(
            "{} has no data rows",
            csv.display()
        )));
    }
    if max_points < 2 {
        return Err(CliError::Config("max points must be at least 2".into()));
    }
    let names: Vec<&str> = CSV_HEADER.split(',').collect();
    let index = |name: &str| {
        names.iter().position(|n| *n == name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown column `{name}` (expected one of {CSV_HEADER})"
            ))
        })
    };
    let selected: Vec<usize> = match kind {
        PlotKind::Timeseries if columns.is_empty() => (0..names.len()).collect(),
        PlotKind::Timeseries => {
            let mut v = vec![0];
            for c in columns {
                let i = index(c)?;
                if !v.contains(&i) {
                    v.push(i);
                }
            }
            v
        }
        PlotKind::Phase => vec![1, 3, 2, 4],
    };
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| selected.iter().map(|&i| r[i]).collect())
        .collect();
    let value_cols: Vec<usize> = match kind {
        PlotKind::Timeseries => (1..selected.len()).collect(),
        PlotKind::Phase => (0..4).collect(),
    };
    let keep = decimate(&table, &value_cols, max_points);
    let mut out = selected
        .iter()
        .map(|&i| names[i])
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for i in keep {
        let line: Vec<String> = table[i].iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}
