//! The `gnsfde` command-line tool: configuration resolution, the experiment
//! subcommands and CSV output.

pub mod commands;
pub mod config;
pub mod history;
pub mod output;
pub mod presets;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use gnsfde_core::Error;

use crate::config::{
    merge, parse, set_path, ChatteringRun, ControlOptRun, GNormalRun, IsometryRun, NsfdeSimRun,
    PicardRun, QvCheckRun, SamplePathsRun,
};
use crate::output::{write_echo, write_table, RunHeader, Table};

#[derive(Debug, Parser)]
#[command(
    name = "gnsfde",
    version,
    about = "Experiments with G-expectations and neutral functional SDEs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration merged over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Named preset used in place of the defaults.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// Root seed of every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Directory receiving the CSV files.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Monte Carlo sample count (paths or samples per policy).
    #[arg(long, global = true)]
    pub samples: Option<usize>,

    /// Number of forward time steps.
    #[arg(long, global = true)]
    pub steps: Option<usize>,

    /// Override one configuration entry, e.g. `--set bounds.sigma_max=1.2`.
    #[arg(long = "set", global = true, value_name = "PATH=JSON")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Upper or lower G-normal distribution and density tables.
    Gnormal,
    /// G-Brownian paths with quadratic variation under the scenario family.
    SamplePaths,
    /// Trajectories of the neutral equation.
    NsfdeSim,
    /// Quadratic-variation identity under grid refinement.
    QvCheck,
    /// Isometry and maximal inequality checks.
    IsometryCheck,
    /// Contraction of the Picard operator in the weighted norm.
    PicardCheck,
    /// Chattering approximation of a relaxed control.
    Chattering,
    /// Exhaustive strict and relaxed optimisation.
    ControlOpt,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gnormal => "gnormal",
            Command::SamplePaths => "sample-paths",
            Command::NsfdeSim => "nsfde-sim",
            Command::QvCheck => "qv-check",
            Command::IsometryCheck => "isometry-check",
            Command::PicardCheck => "picard-check",
            Command::Chattering => "chattering",
            Command::ControlOpt => "control-opt",
        }
    }

    pub fn defaults(self) -> Value {
        fn to<T: Serialize>(v: T) -> Value {
            serde_json::to_value(v).expect("configs serialise")
        }
        match self {
            Command::Gnormal => to(GNormalRun::default()),
            Command::SamplePaths => to(SamplePathsRun::default()),
            Command::NsfdeSim => to(NsfdeSimRun::default()),
            Command::QvCheck => to(QvCheckRun::default()),
            Command::IsometryCheck => to(IsometryRun::default()),
            Command::PicardCheck => to(PicardRun::default()),
            Command::Chattering => to(presets::chattering_half()),
            Command::ControlOpt => to(presets::control_affine()),
        }
    }

    fn samples_field(self) -> Option<&'static str> {
        match self {
            Command::Gnormal => None,
            Command::NsfdeSim | Command::QvCheck => Some("paths"),
            Command::SamplePaths | Command::IsometryCheck | Command::PicardCheck => Some("samples"),
            Command::Chattering | Command::ControlOpt => Some("problem.samples"),
        }
    }

    fn steps_field(self) -> Option<&'static str> {
        match self {
            Command::Gnormal => None,
            Command::Chattering | Command::ControlOpt => Some("problem.steps"),
            _ => Some("steps"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 configuration or input, 3 numerical failure, 4 estimation, 1 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e.root() {
                Error::Config { .. } | Error::Domain(_) | Error::Input(_) | Error::Usage(_) => 2,
                Error::Divergence { .. } | Error::NonConvergence { .. } => 3,
                Error::Estimation(_) => 4,
                Error::Sample { .. } => unreachable!("root unwraps samples"),
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e.root() {
                Error::Config { .. } => "config",
                Error::Domain(_) => "domain",
                Error::Input(_) => "input",
                Error::Usage(_) => "usage",
                Error::Divergence { .. } => "divergence",
                Error::NonConvergence { .. } => "non_convergence",
                Error::Estimation(_) => "estimation",
                Error::Sample { .. } => unreachable!("root unwraps samples"),
            },
        }
    }

    /// One-line JSON description for stderr.
    pub fn json_line(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Core(e) = self {
            if let Error::Sample { index, .. } = e {
                v["sample"] = json!(index);
            }
            match e.root() {
                Error::Config { field, .. } => v["field"] = json!(field),
                Error::Divergence { step, .. } | Error::NonConvergence { step, .. } => {
                    v["step"] = json!(step)
                }
                _ => {}
            }
        }
        v.to_string()
    }
}

fn read_json(path: &PathBuf) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config("config", format!("{}: {e}", path.display())).into())
}

/// Effective configuration of a run as JSON, before typed parsing.
pub fn resolve_config(cli: &Cli) -> Result<Value, CliError> {
    let mut value = match &cli.preset {
        Some(name) => {
            let (cmd, v) = presets::lookup(name).ok_or_else(|| {
                Error::config(
                    "preset",
                    format!(
                        "unknown preset `{name}`; known: {}",
                        presets::NAMES.join(", ")
                    ),
                )
            })?;
            if cmd != cli.command {
                return Err(Error::config(
                    "preset",
                    format!(
                        "preset `{name}` belongs to `{}`, not `{}`",
                        cmd.name(),
                        cli.command.name()
                    ),
                )
                .into());
            }
            v
        }
        None => cli.command.defaults(),
    };
    if let Some(path) = &cli.config {
        merge(&mut value, read_json(path)?);
    }
    let not_applicable =
        |flag: &str| Error::config(flag, format!("not applicable to `{}`", cli.command.name()));
    if let Some(n) = cli.samples {
        let field = cli
            .command
            .samples_field()
            .ok_or_else(|| not_applicable("samples"))?;
        set_path(&mut value, field, json!(n))?;
    }
    if let Some(n) = cli.steps {
        let field = cli
            .command
            .steps_field()
            .ok_or_else(|| not_applicable("steps"))?;
        let v = if cli.command == Command::QvCheck {
            json!([n, 4 * n, 16 * n])
        } else {
            json!(n)
        };
        set_path(&mut value, field, v)?;
    }
    for o in &cli.overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::config("set", format!("expected PATH=JSON, got `{o}`")))?;
        let v: Value = serde_json::from_str(raw)
            .map_err(|e| Error::config(path, format!("value is not JSON: {e}")))?;
        set_path(&mut value, path, v)?;
    }
    Ok(value)
}

fn report<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialise")
}

/// Run one subcommand; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let value = resolve_config(cli)?;
    let seed = cli.seed;
    let (tables, extra): (Vec<Table>, Value) = match cli.command {
        Command::Gnormal => {
            let run: GNormalRun = parse(value.clone())?;
            let curves = commands::gnormal(&run)?;
            (commands::gnormal_tables(&run, &curves), Value::Null)
        }
        Command::SamplePaths => {
            let run: SamplePathsRun = parse(value.clone())?;
            let (_, labels, paths) = commands::sample_paths(&run, seed)?;
            (commands::sample_path_tables(&labels, &paths), Value::Null)
        }
        Command::NsfdeSim => {
            let run: NsfdeSimRun = parse(value.clone())?;
            let tr = commands::nsfde_sim(&run, seed)?;
            (
                commands::nsfde_tables(&tr),
                json!({ "assumptions": report(&tr.assumptions) }),
            )
        }
        Command::QvCheck => {
            let run: QvCheckRun = parse(value.clone())?;
            let rows = commands::qv_check(&run, seed)?;
            (commands::qv_tables(&rows), Value::Null)
        }
        Command::IsometryCheck => {
            let run: IsometryRun = parse(value.clone())?;
            let rep = commands::isometry_check(&run, seed)?;
            (commands::isometry_tables(&run, &rep), Value::Null)
        }
        Command::PicardCheck => {
            let run: PicardRun = parse(value.clone())?;
            let rep = commands::picard_check(&run, seed)?;
            (commands::picard_tables(&rep), report(&rep))
        }
        Command::Chattering => {
            let run: ChatteringRun = parse(value.clone())?;
            let (rows, assumptions) = commands::chattering(&run, seed)?;
            (
                commands::chattering_tables(&rows),
                json!({ "assumptions": report(&assumptions) }),
            )
        }
        Command::ControlOpt => {
            let run: ControlOptRun = parse(value.clone())?;
            let rep = commands::control_opt(&run, seed)?;
            let extra = json!({
                "assumptions": report(&rep.assumptions),
                "strict": { "encoding": rep.strict.control.encode(), "value": rep.strict.value, "std_err": rep.strict.std_err },
                "relaxed": { "encoding": rep.relaxed.control.encode(), "value": rep.relaxed.value, "std_err": rep.relaxed.std_err },
                "gap": rep.relaxed.gap_to_strict(),
            });
            (commands::control_tables(&rep), extra)
        }
    };
    let header = RunHeader {
        command: cli.command.name(),
        seed,
        config: &value,
    };
    let io = |path: PathBuf| move |source| CliError::Io { path, source };
    let mut written = Vec::new();
    for t in &tables {
        written.push(
            write_table(&cli.out_dir, &header, t)
                .map_err(io(cli.out_dir.join(format!("{}.csv", t.name))))?,
        );
    }
    written.push(write_echo(&cli.out_dir, &header, extra).map_err(io(cli.out_dir.clone()))?);
    Ok(written)
}
