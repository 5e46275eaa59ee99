//! Command-line front end: config loading, subcommand dispatch and artifact
//! files. `main.rs` only parses arguments and maps errors to exit codes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hopod_tree::pipeline::{self, Offline, RunConfig, RunSummary, StudyRow, TrajectoryRow};
use hopod_tree::problems::PRESET_NAMES;
use hopod_tree::reduction::{read_basis, write_basis};
use hopod_tree::Error;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "hopod-tree", version, about = "Tree-structure dynamic programming with HO-POD-DEIM reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Problem preset (advdiff, allen-cahn, burgers3d, heat, vanderpol).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// `section.key=value`; repeatable, applied in order after the config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Basis file; defaults to `<out>/basis.bin`.
    #[arg(long, global = true)]
    pub basis: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Coarse tree, snapshot harvesting and basis construction.
    Offline,
    /// Reduced tree, value function and optimal trajectory.
    Online,
    /// Cardinality and value sweeps over a pruning parameter.
    Study,
    /// State and value error-bound checks.
    Verify,
    /// Replay a control sequence in the full and reduced models.
    Trajectory,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Offline => "offline",
            Self::Online => "online",
            Self::Study => "study",
            Self::Verify => "verify",
            Self::Trajectory => "trajectory",
        }
    }
}

/// Exit code for an error: 2 config, 3 numerical, 4 resource cap.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::Io(_) | Error::Format(_) => 2,
        Error::ResourceCap { .. } | Error::OracleCap { .. } => 4,
        Error::Numerical(_) | Error::Hypothesis { .. } | Error::Structural(_) | Error::DimensionMismatch { .. } => 3,
    }
}

/// Resolves the run configuration from the config file, `--preset` and the
/// overrides, in that order.
pub fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut doc: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(name) = &common.preset {
                let problem = doc.entry("problem").or_insert_with(|| toml::Value::Table(toml::Table::new()));
                let table = problem.as_table_mut().ok_or_else(|| Error::Config("`problem` must be a table".into()))?;
                match table.get("name").and_then(|v| v.as_str()) {
                    Some(existing) if existing != name => {
                        return Err(Error::Config(format!("--preset {name} conflicts with problem.name = {existing}")));
                    }
                    _ => {
                        table.insert("name".into(), toml::Value::String(name.clone()));
                    }
                }
            }
            from_toml(doc)?
        }
        None => {
            let name = common
                .preset
                .as_deref()
                .ok_or_else(|| Error::Config(format!("need --config or --preset (one of {})", PRESET_NAMES.join(", "))))?;
            RunConfig::for_preset(name)?
        }
    };
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Missing problem fields take the preset defaults, so a config file only
/// needs the keys it changes.
fn from_toml(doc: toml::Table) -> Result<RunConfig, Error> {
    let mut json = serde_json::to_value(&doc)?;
    let name = json
        .pointer("/problem/name")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Config("config needs problem.name".into()))?
        .to_string();
    let mut defaults = serde_json::to_value(RunConfig::for_preset(&name)?.problem)?;
    if let (Some(d), Some(p)) = (defaults.as_object_mut(), json.get("problem").and_then(|p| p.as_object())) {
        for (k, v) in p {
            d.insert(k.clone(), v.clone());
        }
    }
    json["problem"] = defaults;
    serde_json::from_value(json).map_err(|e| Error::Config(e.to_string()))
}

/// Writes through a temporary file in the same directory and renames it, so
/// readers never see a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Error> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    controls: usize,
    v0: f64,
}

#[derive(Serialize)]
struct FieldRow {
    k: usize,
    component: usize,
    index: usize,
    reduced: f64,
    full: f64,
}

fn basis_path(common: &Common) -> PathBuf {
    common.basis.clone().unwrap_or_else(|| common.out.join("basis.bin"))
}

fn load_offline(path: &Path) -> Result<Offline, Error> {
    let f = fs::File::open(path).map_err(|e| Error::Config(format!("basis file {}: {e}", path.display())))?;
    Offline::from_bundle(read_basis(std::io::BufReader::new(f))?)
}

fn save_offline(path: &Path, off: &Offline) -> Result<(), Error> {
    let mut bytes = Vec::new();
    write_basis(&off.bundle, &mut bytes)?;
    write_atomic(path, &bytes)
}

/// Bases for the online-type commands: the basis file when it exists,
/// otherwise a fresh offline phase whose bases are saved for later runs.
fn bases(cfg: &RunConfig, common: &Common, summary: &mut RunSummary) -> Result<Option<Offline>, Error> {
    if matches!(cfg.problem.build::<f64>()?.system, hopod_tree::problems::System::Ode { .. }) {
        return Ok(None);
    }
    let path = basis_path(common);
    if path.exists() {
        return load_offline(&path).map(Some);
    }
    let off = pipeline::run_offline(cfg, summary)?;
    save_offline(&path, &off)?;
    Ok(Some(off))
}

fn execute(command: Command, cfg: &RunConfig, common: &Common, summary: &mut RunSummary) -> Result<(), Error> {
    let out = &common.out;
    match command {
        Command::Offline => {
            let off = pipeline::run_offline(cfg, summary)?;
            save_offline(&basis_path(common), &off)?;
            write_csv(&out.join("offline_levels.csv"), &summary.offline_levels)?;
        }
        Command::Online => {
            let off = bases(cfg, common, summary)?;
            let on = pipeline::run_online(cfg, off.as_ref(), summary)?;
            write_csv(&out.join("trajectory.csv"), &on.rows)?;
            write_csv(&out.join("online_levels.csv"), &on.levels)?;
            let hist: Vec<HistoryRow> = summary
                .v0_history
                .iter()
                .zip(&summary.control_counts)
                .enumerate()
                .map(|(iteration, (&v0, &controls))| HistoryRow { iteration, controls, v0 })
                .collect();
            write_csv(&out.join("v0_history.csv"), &hist)?;
        }
        Command::Study => {
            let off = if cfg.study.reduced { bases(cfg, common, summary)? } else { None };
            let rows: Vec<StudyRow> = pipeline::run_study(cfg, off.as_ref(), summary)?;
            write_csv(&out.join("study.csv"), &rows)?;
        }
        Command::Verify => {
            let off = bases(cfg, common, summary)?
                .ok_or_else(|| Error::Config("verify needs a grid problem".into()))?;
            let report = pipeline::run_verify(cfg, &off, summary)?;
            write_json(&out.join("bounds.json"), &report)?;
            summary.bound_reports.push("bounds.json".into());
            if !report.pass {
                summary.error = Some("bound check failed".into());
            }
        }
        Command::Trajectory => {
            let off = bases(cfg, common, summary)?
                .ok_or_else(|| Error::Config("trajectory needs a grid problem".into()))?;
            let controls = match &cfg.trajectory.controls {
                Some(c) => c.clone(),
                None => pipeline::run_online(cfg, Some(&off), &mut RunSummary::new("online", cfg))?.controls,
            };
            let t = pipeline::run_trajectory(cfg, &off, &controls, summary)?;
            let rows: Vec<TrajectoryRow> = t.rows;
            write_csv(&out.join("trajectory.csv"), &rows)?;
            if !t.snapshots.is_empty() {
                let mut fields = Vec::new();
                for (k, red, full) in &t.snapshots {
                    let f = pipeline::field_rows(*k, full);
                    for ((k, component, index, reduced), (_, _, _, full)) in pipeline::field_rows(*k, red).into_iter().zip(f) {
                        fields.push(FieldRow { k, component, index, reduced, full });
                    }
                }
                write_csv(&out.join("fields.csv"), &fields)?;
            }
        }
    }
    Ok(())
}

/// Runs one subcommand and always leaves `summary.json` and `config.json`
/// behind, with `partial` set when the run failed.
pub fn run(cli: &Cli) -> Result<RunSummary, Error> {
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out;
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), &cfg)?;
    let mut summary = RunSummary::new(cli.command.name(), &cfg);
    let result = execute(cli.command, &cfg, &cli.common, &mut summary);
    if let Err(e) = &result {
        summary.partial = true;
        summary.error = Some(e.to_string());
    }
    write_json(&out.join("summary.json"), &summary)?;
    result.map(|_| summary)
}
