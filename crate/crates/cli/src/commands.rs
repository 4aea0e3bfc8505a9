use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use flexpend::analysis::{equilibria_scan, level_grid, linearize, linspace};
use flexpend::control::check_gains;
use flexpend::sim::integrate_closed_loop;
use flexpend::{FeasibilityReport, Gains, InitialConditions, Model, Trajectory};

use crate::config::{ConfigError, ConfigFile, Overrides, RunConfig};
use crate::output::{self, BatchRow};

/// Environment variable naming the default directory for CSV artifacts.
pub const OUT_DIR_ENV: &str = "FLEXPEND_OUT_DIR";

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    /// Bad configuration, arguments or input files.
    Config = 1,
    /// The simulation left the admissible domain or lost realizability.
    Aborted = 2,
    /// The gains fail a feasibility condition.
    Infeasible = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "flexpend",
    version,
    about = "Flexible inverted pendulum on a cart"
)]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file (or directory for `batch`).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Run even when the gains fail the feasibility check.
    #[arg(long, global = true)]
    pub force: bool,
    /// Gain preset: Set1, Set2, Set3 or Exp.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset_gains: Option<String>,
    /// Initial-condition preset: ICs1, ICs2, ICs3 or origin.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset_ics: Option<String>,
    /// Closed-loop form to integrate.
    #[arg(long, global = true, value_parser = ["rel", "srel"])]
    pub form: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate the closed loop and write the trajectory.
    Simulate,
    /// Evaluate the gain conditions.
    CheckGains,
    /// Closed-loop poles at the upright, slowest first.
    Linearize,
    /// Shaped potential on a (theta, z) grid.
    Levelcurves,
    /// Open-loop equilibrium amplitudes.
    Equilibria,
    /// Simulate every listed gain/initial-condition pair.
    Batch,
    /// Print the resolved configuration.
    ShowConfig,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] flexpend::Error),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

type Outcome = Result<ExitStatus, Failure>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                ExitStatus::Config.code()
            } else {
                let _ = write!(stdout, "{}", e.render());
                ExitStatus::Ok.code()
            };
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(status) => status.code(),
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            ExitStatus::Config.code()
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    RunConfig::resolve(
        &file,
        &Overrides {
            preset_gains: cli.preset_gains.clone(),
            preset_ics: cli.preset_ics.clone(),
            form: cli.form.clone(),
            out: cli.out.clone(),
        },
    )
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let cfg = resolve(cli)?;
    if cli.command == Command::ShowConfig {
        write!(stdout, "{}", cfg.to_toml())?;
        return Ok(ExitStatus::Ok);
    }
    let model = Model::new(cfg.physical_params())?;
    match cli.command {
        Command::Simulate => simulate(&cfg, &model, cli.force, stdout, stderr),
        Command::CheckGains => check(&cfg, &model, stdout),
        Command::Linearize => lin(&cfg, &model, cli.force, stdout, stderr),
        Command::Levelcurves => levels(&cfg, &model, cli.force, stdout, stderr),
        Command::Equilibria => equilibria(&cfg, &model, stdout),
        Command::Batch => batch(&cfg, &model, cli.force, stderr),
        Command::ShowConfig => unreachable!(),
    }
}

/// Writes an artifact to the configured path, the default output directory,
/// or stdout, in that order of preference.
fn emit<F>(cfg: &RunConfig, default_name: &str, stdout: &mut dyn Write, f: F) -> Outcome
where
    F: FnOnce(&mut dyn Write) -> csv::Result<()>,
{
    let path = cfg.run.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| PathBuf::from(d).join(default_name))
    });
    match path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(File::create(&path)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => f(stdout)?,
    }
    Ok(ExitStatus::Ok)
}

fn report_lines(report: &FeasibilityReport, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "C = {}", report.c_bound)?;
    for c in &report.conditions {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        writeln!(w, "{tag} {} margin={} {}", c.name, c.margin, c.detail)?;
    }
    Ok(())
}

/// Returns `Some(Infeasible)` after printing the report when the gains fail.
fn gate(
    model: &Model,
    gains: &Gains,
    force: bool,
    stderr: &mut dyn Write,
) -> Result<Option<ExitStatus>, Failure> {
    if force {
        return Ok(None);
    }
    let report = check_gains(model, gains)?;
    if report.all_passed() {
        return Ok(None);
    }
    writeln!(stderr, "gains are infeasible (use --force to run anyway):")?;
    report_lines(&report, stderr)?;
    Ok(Some(ExitStatus::Infeasible))
}

fn check_ics(model: &Model, ics: &InitialConditions) -> Result<(), Failure> {
    model
        .solve_xe(ics.theta)
        .map_err(|e| Failure::Config(ConfigError::Value(format!("initial condition: {e}"))))?;
    Ok(())
}

fn simulate(
    cfg: &RunConfig,
    model: &Model,
    force: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Outcome {
    let gains = cfg.gains();
    if let Some(status) = gate(model, &gains, force, stderr)? {
        return Ok(status);
    }
    let ics = cfg.initial_conditions();
    check_ics(model, &ics)?;
    let traj = integrate_closed_loop(
        model,
        &gains,
        &ics,
        cfg.run.horizon,
        cfg.run.step,
        cfg.form(),
    )?;
    emit(cfg, "trajectory.csv", stdout, |w| {
        output::write_trajectory(w, &traj)
    })?;
    Ok(abort_status(&traj, stderr)?)
}

fn abort_status(traj: &Trajectory, stderr: &mut dyn Write) -> io::Result<ExitStatus> {
    match &traj.abort {
        Some(a) => {
            writeln!(stderr, "run aborted at t = {}: {}", a.t, a.error)?;
            Ok(ExitStatus::Aborted)
        }
        None => Ok(ExitStatus::Ok),
    }
}

fn check(cfg: &RunConfig, model: &Model, stdout: &mut dyn Write) -> Outcome {
    let report = check_gains(model, &cfg.gains())?;
    report_lines(&report, stdout)?;
    if report.all_passed() {
        writeln!(stdout, "feasible")?;
        Ok(ExitStatus::Ok)
    } else {
        writeln!(stdout, "infeasible")?;
        Ok(ExitStatus::Infeasible)
    }
}

fn lin(
    cfg: &RunConfig,
    model: &Model,
    force: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Outcome {
    let gains = cfg.gains();
    if let Some(status) = gate(model, &gains, force, stderr)? {
        return Ok(status);
    }
    let poles = linearize(model, &gains, cfg.linearize.fd_step)?.poles()?;
    emit(cfg, "poles.csv", stdout, |w| output::write_poles(w, &poles))
}

fn levels(
    cfg: &RunConfig,
    model: &Model,
    force: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Outcome {
    let gains = cfg.gains();
    if let Some(status) = gate(model, &gains, force, stderr)? {
        return Ok(status);
    }
    let l = cfg.levelcurves;
    let grid = level_grid(
        model,
        &gains,
        (l.theta_min, l.theta_max),
        (l.z_min, l.z_max),
        l.nodes,
    )?;
    emit(cfg, "levelcurves.csv", stdout, |w| {
        output::write_level_grid(w, &grid)
    })
}

fn equilibria(cfg: &RunConfig, model: &Model, stdout: &mut dyn Write) -> Outcome {
    let grid = linspace(
        flexpend::THETA_MIN,
        flexpend::THETA_MAX,
        cfg.equilibria.nodes,
    );
    let set = equilibria_scan(model, &grid)?;
    emit(cfg, "equilibria.csv", stdout, |w| {
        output::write_equilibria(w, &set)
    })
}

fn batch(cfg: &RunConfig, model: &Model, force: bool, stderr: &mut dyn Write) -> Outcome {
    let dir = cfg
        .run
        .out
        .clone()
        .or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .filter(|d| !d.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;

    let mut feasible = Vec::new();
    for name in &cfg.batch.gains {
        let gains = Gains::preset(name).expect("validated on resolve");
        let ok = gate(model, &gains, force, stderr)?.is_none();
        feasible.push((name.clone(), gains, ok));
    }
    let pairs: Vec<_> = feasible
        .iter()
        .flat_map(|(gn, g, ok)| {
            cfg.batch.ics.iter().map(move |icn| {
                let ics = InitialConditions::preset(icn).expect("validated on resolve");
                (gn.clone(), *g, *ok, icn.clone(), ics)
            })
        })
        .collect();

    let results: Vec<Option<flexpend::Result<Trajectory>>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|(_, g, ok, _, ics)| {
                s.spawn(move || {
                    ok.then(|| {
                        integrate_closed_loop(
                            model,
                            g,
                            ics,
                            cfg.run.horizon,
                            cfg.run.step,
                            cfg.form(),
                        )
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });

    let mut rows = Vec::new();
    let (mut aborted, mut infeasible) = (false, false);
    for ((gn, _, _, icn, _), result) in pairs.iter().zip(results) {
        let row = match result {
            None => {
                infeasible = true;
                BatchRow {
                    gains: gn.clone(),
                    ics: icn.clone(),
                    status: "infeasible".into(),
                    samples: 0,
                    last: None,
                }
            }
            Some(traj) => {
                let traj = traj?;
                let file = dir.join(artifact_name(gn, icn));
                write_file(&file, |w| output::write_trajectory(w, &traj))?;
                let status = match &traj.abort {
                    Some(a) => {
                        aborted = true;
                        writeln!(stderr, "{gn}/{icn}: aborted at t = {}: {}", a.t, a.error)?;
                        "aborted"
                    }
                    None => "complete",
                };
                BatchRow {
                    gains: gn.clone(),
                    ics: icn.clone(),
                    status: status.into(),
                    samples: traj.samples.len(),
                    last: traj.last().map(|p| {
                        let s = p.state;
                        [p.t, s.theta, s.z, s.thetadot, s.zdot, s.xi, p.h_d]
                    }),
                }
            }
        };
        rows.push(row);
    }
    write_file(&dir.join("summary.csv"), |w| {
        output::write_summary(w, &rows)
    })?;
    Ok(if infeasible {
        ExitStatus::Infeasible
    } else if aborted {
        ExitStatus::Aborted
    } else {
        ExitStatus::Ok
    })
}

fn artifact_name(gains: &str, ics: &str) -> String {
    format!(
        "{}_{}.csv",
        gains.to_ascii_lowercase(),
        ics.to_ascii_lowercase()
    )
}

fn write_file<F>(path: &Path, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> csv::Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
