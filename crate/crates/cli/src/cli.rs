use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use underact::ode::Method;
use underact::simcore::Representation;

use crate::commands::{
    plotdata, simulate, sweep, sweep_configs, verify, write_report, Overrides, PlotKind, SweepAxis,
    MAX_PLOT_POINTS,
};
use crate::config::ScenarioConfig;
use crate::error::{CliError, EXIT_FAILURE, EXIT_OK, EXIT_SINGULARITY};

#[derive(Debug, Parser)]
#[command(
    name = "underact",
    version,
    about = "Orbital stabilization of underactuated pendulums"
)]
pub struct Cli {
    /// Worker threads for sweeps and verification.
    #[arg(long, global = true, env = "UNDERACT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Furuta,
    Pendubot,
}

impl Builtin {
    fn config(self) -> ScenarioConfig {
        match self {
            Builtin::Furuta => ScenarioConfig::furuta_demo(),
            Builtin::Pendubot => ScenarioConfig::pendubot_demo(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file; without it the built-in `--system` defaults are used.
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "furuta", conflicts_with = "config")]
    pub system: Builtin,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub gamma2: Option<f64>,
    /// Furuta design parameter.
    #[arg(long)]
    pub k1: Option<f64>,
    /// Pendubot design parameter.
    #[arg(long)]
    pub k2: Option<f64>,
    /// Initial state `x1,x2,x3,x4` (rad, rad/s).
    #[arg(long, value_parser = parse_x0, allow_hyphen_values = true)]
    pub x0: Option<[f64; 4]>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// rk4 or rk45.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_x0(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 4]>::try_from(v).map_err(|v| format!("x0 needs 4 values, got {}", v.len()))
}

impl ScenarioArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            k1: self.k1,
            k2: self.k2,
            x0: self.x0,
            t_end: self.t_end,
            method: self.method,
            out: self.out.clone(),
        }
    }

    pub fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => self.system.config(),
        };
        self.overrides().apply(&mut cfg);
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop scenario and write its CSV and summary.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "el")]
        representation: Representation,
        /// Summary path (default: next to the CSV).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run a family of scenarios in parallel and print one summary row each.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// gamma-pairs, k-parameter or initial-conditions.
        #[arg(long)]
        axis: SweepAxis,
        /// `;`-separated values, e.g. `5:5;20:2` or `5;9;15`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Run every certificate check and write the report.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Include the decaying-perturbation counterexample.
        #[arg(long)]
        d4: bool,
        /// Scale K by this factor with the scaling map kept (sensitivity test).
        #[arg(long)]
        mutate_k: Option<f64>,
    },
    /// Thin a trajectory CSV into plot-ready columns.
    Plotdata {
        csv: PathBuf,
        #[arg(long, default_value = "timeseries")]
        kind: PlotKind,
        /// Columns for time series (default: all).
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long, default_value_t = MAX_PLOT_POINTS)]
        max_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in demo with its default settings.
    Demo {
        #[arg(value_enum)]
        name: Builtin,
        #[arg(long)]
        gamma1: Option<f64>,
        #[arg(long)]
        gamma2: Option<f64>,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        k2: Option<f64>,
        #[arg(long, value_parser = parse_x0, allow_hyphen_values = true)]
        x0: Option<[f64; 4]>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate {
            scenario,
            representation,
            summary,
        } => {
            let mut cfg = scenario.load()?;
            if cfg.output.csv.is_none() {
                cfg.output.csv = Some(PathBuf::from("trajectory.csv"));
            }
            if summary.is_some() {
                cfg.output.summary = summary;
            }
            let s = simulate(&cfg, representation)?;
            print!("{}", s.to_toml());
            Ok(if s.aborted() {
                EXIT_SINGULARITY
            } else {
                EXIT_OK
            })
        }
        Command::Sweep {
            scenario,
            axis,
            values,
        } => {
            let base = scenario.load()?;
            let configs = sweep_configs(&base, axis, &values)?;
            let labels: Vec<String> = values
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            let rows = sweep(&configs, &labels, cli.threads)?;
            emit(scenario.out.as_ref(), &crate::commands::sweep_table(&rows))?;
            Ok(if rows.iter().any(|r| r.summary.aborted()) {
                EXIT_SINGULARITY
            } else {
                EXIT_OK
            })
        }
        Command::Verify {
            scenario,
            d4,
            mutate_k,
        } => {
            let mut cfg = scenario.load()?;
            cfg.output.csv = None;
            cfg.verify.d4 |= d4;
            if mutate_k.is_some() {
                cfg.verify.mutate_k = mutate_k;
            }
            let report = verify(&cfg, cli.threads)?;
            for c in &report.checks {
                println!(
                    "{:<34} {:<18} {:.3e}  {}",
                    c.name,
                    format!("{:?}", c.status),
                    c.worst_residual,
                    c.detail
                );
            }
            if let Some(out) = &scenario.out {
                let (t, c) = write_report(&report, out)?;
                println!("report written to {} and {}", t.display(), c.display());
            }
            Ok(if report.all_passed {
                EXIT_OK
            } else {
                EXIT_FAILURE
            })
        }
        Command::Plotdata {
            csv,
            kind,
            columns,
            max_points,
            out,
        } => {
            let text = plotdata(&csv, kind, &columns, max_points)?;
            emit(out.as_ref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Demo {
            name,
            gamma1,
            gamma2,
            k1,
            k2,
            x0,
            t_end,
            method,
            out,
        } => {
            let mut cfg = name.config();
            Overrides {
                gamma1,
                gamma2,
                k1,
                k2,
                x0,
                t_end,
                method,
                out,
            }
            .apply(&mut cfg);
            let s = simulate(&cfg, Representation::El)?;
            print!("{}", s.to_toml());
            Ok(if s.aborted() {
                EXIT_SINGULARITY
            } else {
                EXIT_OK
            })
        }
    }
}

/// Parses the arguments and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                crate::error::EXIT_CONFIG
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
