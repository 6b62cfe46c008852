//! Command-line front end.
//!
//! Exit codes: 0 success or converged, 1 error, 2 ran but did not converge.

use std::ffi::OsString;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analysis::{field_dump, summarize, GridSpec};
use crate::controller::curvature_feasible;
use crate::path::Path;
use crate::simulator::{run, set_dotted, sweep, sweep_csv, Scenario, SweepGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Scenario shipped with the binary.
pub const DEMO_SCENARIO: &str = include_str!("../configs/demo.json");

#[derive(Debug, Parser)]
#[command(
    name = "walker-guidance",
    version,
    about = "Brake-steered walker path following"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Kinematic,
    Dynamic,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted override, e.g. `controller.eps_theta=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and summary.json.
    Simulate(RunArgs),
    /// Run the grid in the config's `sweep` block and write sweep.csv.
    Sweep(RunArgs),
    /// Write boundary functions and region labels to field.csv.
    Field {
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3, allow_hyphen_values = true)]
        delta: f64,
        /// `l_min,l_max,theta_min,theta_max`.
        #[arg(long, allow_hyphen_values = true)]
        bounds: Option<String>,
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        #[arg(long, default_value_t = 1e-3)]
        band: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check path continuity, curvature and the delta profile.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the bundled scenario.
    Demo {
        #[command(flatten)]
        common: CommonArgs,
    },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => read_config(&a.config).and_then(|v| simulate(v, &a.common)),
        Command::Demo { common } => serde_json::from_str(DEMO_SCENARIO)
            .map_err(Failure::from)
            .and_then(|v| simulate(v, &common)),
        Command::Sweep(a) => read_config(&a.config).and_then(|v| run_sweep(v, &a.common)),
        Command::Field {
            delta,
            bounds,
            resolution,
            band,
            out,
        } => field(delta, bounds.as_deref(), resolution, band, &out),
        Command::Validate { config, overrides } => {
            read_config(&config).and_then(|v| validate(v, &overrides))
        }
    };
    match outcome {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            EXIT_ERROR
        }
    }
}

fn read_config(path: &FsPath) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn parse_override(item: &str) -> Result<(&str, Value), Failure> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Failure(format!("override `{item}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim(), value))
}

fn apply_overrides(config: &mut Value, overrides: &[String]) -> Result<(), Failure> {
    for item in overrides {
        let (key, value) = parse_override(item)?;
        set_dotted(config, key, value).map_err(|e| Failure(format!("override `{key}`: {e}")))?;
    }
    Ok(())
}

fn apply_common(config: &mut Value, common: &CommonArgs) -> Result<(), Failure> {
    apply_overrides(config, &common.overrides)?;
    if let Some(seed) = common.seed {
        set_dotted(config, "rng_seed", json!(seed)).map_err(Failure)?;
    }
    if let Some(mode) = common.mode {
        let name = match mode {
            ModeArg::Kinematic => "kinematic",
            ModeArg::Dynamic => "dynamic",
        };
        set_dotted(config, "mode", json!(name)).map_err(Failure)?;
    }
    Ok(())
}

fn write_file(dir: &FsPath, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    let target = dir.join(name);
    fs::write(&target, contents).map_err(|e| Failure(format!("{}: {e}", target.display())))
}

fn simulate(mut config: Value, common: &CommonArgs) -> Result<i32, Failure> {
    apply_common(&mut config, common)?;
    let scenario = Scenario::from_value(config)?;
    let (_, warnings) = scenario.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let trace = run(&scenario)?;
    let summary = summarize(&trace)?;
    write_file(&common.out, "trace.csv", &trace.to_csv())?;
    let mut report = serde_json::to_value(&summary)?;
    report["halt_reason"] = serde_json::to_value(&trace.meta.halt_reason)?;
    report["warnings"] = json!(warnings);
    write_file(
        &common.out,
        "summary.json",
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    println!(
        "converged: {}  final V: {:.3e}  switches: {}  rows: {}",
        summary.converged,
        summary.final_v,
        summary.switch_count,
        trace.rows.len()
    );
    Ok(if summary.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn run_sweep(mut config: Value, common: &CommonArgs) -> Result<i32, Failure> {
    let grid_value = config
        .as_object_mut()
        .and_then(|m| m.remove("sweep"))
        .ok_or_else(|| Failure("config has no `sweep` block".into()))?;
    let grid: SweepGrid =
        serde_json::from_value(grid_value).map_err(|e| Failure(format!("sweep block: {e}")))?;
    apply_common(&mut config, common)?;
    let base = Scenario::from_value(config)?;
    base.validate()?;
    let results = sweep(&base, &grid, common.parallel)?;
    write_file(&common.out, "sweep.csv", &sweep_csv(&results))?;
    let converged = results
        .iter()
        .filter(|r| r.summary.as_ref().is_some_and(|s| s.converged))
        .count();
    println!("converged: {converged}/{}", results.len());
    Ok(if converged == results.len() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn parse_bounds(text: &str) -> Result<[f64; 4], Failure> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure(format!("bounds `{text}`: {e}")))?;
    <[f64; 4]>::try_from(parts).map_err(|_| Failure(format!("bounds `{text}` need four numbers")))
}

fn field(
    delta: f64,
    bounds: Option<&str>,
    resolution: usize,
    band: f64,
    out: &FsPath,
) -> Result<i32, Failure> {
    let mut grid = GridSpec {
        resolution,
        ..GridSpec::default()
    };
    if let Some(text) = bounds {
        [grid.l_min, grid.l_max, grid.theta_min, grid.theta_max] = parse_bounds(text)?;
    }
    if !delta.is_finite() || band.is_nan() || band <= 0.0 {
        return Err(Failure("delta must be finite and band positive".into()));
    }
    let csv = field_dump(delta, &grid, band)?;
    write_file(out, "field.csv", &csv)?;
    println!("wrote {} grid points", resolution * resolution);
    Ok(EXIT_OK)
}

fn validate(mut config: Value, overrides: &[String]) -> Result<i32, Failure> {
    apply_overrides(&mut config, overrides)?;
    let scenario = Scenario::from_value(config)?;
    let path = Path::build(&scenario.path)?;
    println!(
        "path: {} segments, length {:.3} m, continuous",
        path.segments().len(),
        path.total_length()
    );
    let radius = scenario.vehicle.turning_radius();
    let mut code = EXIT_OK;
    for (i, seg) in path.segments().iter().enumerate() {
        let c = seg.max_abs_curvature();
        if c * radius > 1.0 + 1e-12 {
            println!(
                "segment {i} ({:?}): curvature {c:.4} exceeds 1/R = {:.4}",
                seg.kind,
                1.0 / radius
            );
            code = EXIT_ERROR;
        }
    }
    if code == EXIT_OK {
        println!(
            "path curvature feasible: yes (max {:.4}, 1/R = {:.4})",
            path.max_abs_curvature(),
            1.0 / radius
        );
    }
    let (feasible, l_hat) = curvature_feasible(&scenario.controller.delta_profile);
    if feasible {
        println!("delta profile feasible: yes");
    } else {
        println!("delta profile feasible: no");
        println!("warning: |delta'(l) sin(delta(l))| > 1 from l_hat = {l_hat:.6}");
    }
    if let Err(e) = scenario.validate() {
        println!("scenario: {e}");
        return Ok(EXIT_ERROR);
    }
    Ok(code)
}
