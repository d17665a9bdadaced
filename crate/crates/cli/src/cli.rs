//! Argument parsing and verb dispatch. Exit codes: 0 clean, 1 error,
//! 2 completed with flagged (non-converged or out-of-tolerance) runs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{load_scenario, load_sweep, ScenarioKind};
use crate::error::{CliError, Result};
use crate::output::write_output;
use crate::plot::{heatmap, line_plot, Series};
use crate::scenario::{run_scenario, run_sweep};

#[derive(Parser)]
#[command(name = "photon-extraction", version, about = "Finite-time single-photon extraction scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic bounds against extraction time, with the numeric optimum.
    Bounds(RunArgs),
    /// Wavepacket optimization scenarios (metric or regime studies).
    Optimize(RunArgs),
    /// Run a list of independent scenario jobs on a worker pool.
    Sweep(RunArgs),
    /// Optimized emission product over a (T, splitting) grid.
    ZeemanMap(RunArgs),
    /// Drive reconstruction round-trip checks.
    DriveCheck(RunArgs),
    /// Render a CSV artifact as a static SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Reject under-resolved grids and treat flagged runs as errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = PlotKind::Line)]
    kind: PlotKind,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    /// First column is x; every further column is a line.
    Line,
    /// First three columns are x, y, value on a full grid.
    Heatmap,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Bounds(args) => run_one(args, &[ScenarioKind::BoundsVsT]),
        Command::Optimize(args) => {
            run_one(args, &[ScenarioKind::MetricOptimization, ScenarioKind::RegimeSweep])
        }
        Command::ZeemanMap(args) => run_one(args, &[ScenarioKind::ZeemanMap]),
        Command::DriveCheck(args) => run_one(args, &[ScenarioKind::DriveRoundtrip]),
        Command::Sweep(args) => run_sweep_verb(args),
        Command::Plot(args) => run_plot(args),
    }
}

fn run_one(args: RunArgs, allowed: &[ScenarioKind]) -> Result<i32> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg = load_scenario(&text)?;
    if !allowed.contains(&cfg.scenario.kind) {
        return Err(CliError::Config(format!(
            "scenario kind '{}' does not match this verb",
            cfg.scenario.kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.output.seed = seed;
    }
    let dir = args.out.unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let result = run_scenario(&cfg, args.workers, args.strict)?;
    write_output(&dir, &result)?;
    if result.flagged {
        if args.strict {
            return Err(CliError::Config("flagged runs under --strict".into()));
        }
        eprintln!("warning: some runs flagged; see manifest.json");
        return Ok(2);
    }
    Ok(0)
}

fn run_sweep_verb(args: RunArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.config)?;
    let mut sweep = load_sweep(&text)?;
    if let Some(seed) = args.seed {
        for job in &mut sweep.jobs {
            job.output.seed = seed;
        }
    }
    let dir = args.out.unwrap_or_else(|| PathBuf::from(&sweep.output.directory));
    let results = run_sweep(&sweep.jobs, args.workers, args.strict);

    let mut statuses = Vec::new();
    let mut any_error = false;
    let mut any_flagged = false;
    for (i, result) in results.iter().enumerate() {
        let sub = format!("job_{i:02}");
        match result {
            Ok(out) => {
                write_output(&dir.join(&sub), out)?;
                any_flagged |= out.flagged;
                statuses.push(json!({
                    "index": i,
                    "dir": sub,
                    "status": "ok",
                    "flagged": out.flagged,
                    "scenario": sweep.jobs[i].scenario.kind.name(),
                }));
            }
            Err(e) => {
                any_error = true;
                statuses.push(json!({
                    "index": i,
                    "dir": sub,
                    "status": "error",
                    "error": e.to_string(),
                    "scenario": sweep.jobs[i].scenario.kind.name(),
                }));
            }
        }
    }
    fs::create_dir_all(&dir)?;
    let manifest = json!({
        "tool": {"name": "photon-extraction", "version": env!("CARGO_PKG_VERSION")},
        "jobs": statuses,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("sweep_manifest.json"), text)?;
    if any_error {
        return Err(CliError::Config("one or more sweep jobs failed".into()));
    }
    if any_flagged {
        if args.strict {
            return Err(CliError::Config("flagged runs under --strict".into()));
        }
        return Ok(2);
    }
    Ok(0)
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_csv(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Schema("empty CSV".into()))?;
    let columns: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    CliError::Schema(format!("non-numeric cell '{cell}' in row {}", k + 2))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != columns.len() {
            return Err(CliError::Schema(format!("row {} has {} cells", k + 2, row.len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Schema("CSV has a header but no data rows".into()));
    }
    Ok(Table { columns, rows })
}

fn run_plot(args: PlotArgs) -> Result<i32> {
    let table = read_csv(&args.input)?;
    let title = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let svg = match args.kind {
        PlotKind::Line => {
            if table.columns.len() < 2 {
                return Err(CliError::Schema("line plot needs at least two columns".into()));
            }
            let x: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
            let ys: Vec<Vec<f64>> = (1..table.columns.len())
                .map(|c| table.rows.iter().map(|r| r[c]).collect())
                .collect();
            let series: Vec<Series> = table.columns[1..]
                .iter()
                .zip(&ys)
                .map(|(label, y)| Series { label, x: &x, y })
                .collect();
            line_plot(&title, &table.columns[0], "value", &series)?
        }
        PlotKind::Heatmap => {
            if table.columns.len() < 3 {
                return Err(CliError::Schema("heatmap needs at least three columns".into()));
            }
            let mut xs: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
            let mut ys: Vec<f64> = table.rows.iter().map(|r| r[1]).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            ys.sort_by(f64::total_cmp);
            ys.dedup();
            let mut grid = vec![vec![f64::NAN; xs.len()]; ys.len()];
            for row in &table.rows {
                let ix = xs.iter().position(|&x| x == row[0]).unwrap();
                let iy = ys.iter().position(|&y| y == row[1]).unwrap();
                grid[iy][ix] = row[2];
            }
            if grid.iter().flatten().any(|v| v.is_nan()) {
                return Err(CliError::Schema("heatmap grid has missing cells".into()));
            }
            heatmap(&title, &table.columns[0], &table.columns[1], &xs, &ys, &grid)?
        }
    };
    fs::write(&args.out, svg)?;
    Ok(0)
}
