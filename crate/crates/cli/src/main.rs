use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use moby_core::bridge::{serve_bridge, BridgeOptions};
use moby_core::navigation::{inflate_grid, plan_path, Costmap, Goal, NavConfig};
use moby_core::scenario::{
    emit_report, run_scenario, ReportFormat, ScenarioConfig, ScenarioError, DEFAULT_DWELL_BED_S,
    DEFAULT_DWELL_TOILET_S, ROUTINE_NAME,
};
use moby_core::supervisor::{transition, Event};
use moby_core::system::{verify_trajectory_csv, System, SystemConfig, TICK_DT};
use moby_core::world::{load_map, OccupancyGrid, LABEL_BED, LABEL_DOCK, LABEL_TOILET};

#[derive(Parser)]
#[command(
    name = "moby",
    version,
    about = "Mobility robot simulator and scenario runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and report phase timings.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Write the trajectory CSV here.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Serve the live system to bridge clients.
    Serve {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
    },
    /// Check a trajectory file against its stored hash.
    Replay {
        #[arg(long)]
        trajectory: PathBuf,
        /// Also re-run this scenario and compare hashes.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Plan between two labelled poses and print the path length.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
}

/// Failure with a chosen exit status.
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        Exit(1, e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Exit {
    Exit(2, e.into())
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Exit> {
    ScenarioConfig::load(path).map_err(|e| match e {
        ScenarioError::Io { .. } | ScenarioError::Config { .. } | ScenarioError::Invalid(_) => {
            usage(e)
        }
        ScenarioError::Json(_) => usage(e),
        other => Exit(1, other.into()),
    })
}

fn read_map(path: &Path) -> Result<OccupancyGrid> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_map(&text).with_context(|| format!("map {}", path.display()))
}

fn cmd_run(
    config: &Path,
    report_path: Option<&Path>,
    format: Format,
    traj_path: Option<&Path>,
) -> Result<(), Exit> {
    let cfg = load_config(config)?;
    let wall = Instant::now();
    let run = run_scenario(&cfg)?;
    let r = &run.report;
    let fmt = match format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    let text = emit_report(r, fmt);
    match report_path {
        Some(p) => {
            std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("report written to {}", p.display());
        }
        None => println!("{text}"),
    }
    if let Some(p) = traj_path {
        std::fs::write(p, run.trajectory.to_csv())
            .with_context(|| format!("writing {}", p.display()))?;
        eprintln!("trajectory written to {}", p.display());
    }
    eprintln!(
        "total {:.3} s (locomotion {:.3} s), collisions {}, min clearance {:.3} m, {:.1} s wall",
        r.total_s,
        r.locomotion_s,
        r.collision_count,
        r.min_clearance_m,
        wall.elapsed().as_secs_f64()
    );
    if r.passed() {
        Ok(())
    } else {
        let why = r
            .abort_reason
            .clone()
            .unwrap_or_else(|| format!("{} collisions", r.collision_count));
        Err(Exit(1, anyhow!("scenario failed: {why}")))
    }
}

fn cmd_serve(map: &Path, bind: &str, port: u16, seed: u64, time_scale: f64) -> Result<(), Exit> {
    let grid = Arc::new(read_map(map)?);
    let dock = grid
        .named(LABEL_DOCK)
        .ok_or_else(|| anyhow!("map has no DOCK marker"))?;
    let mut sys = System::new(
        grid.clone(),
        dock,
        SystemConfig {
            seed,
            ..SystemConfig::default()
        },
    );
    transition(&mut sys.supervisor, Event::DockReached);
    let dwell = |s: f64| (s / TICK_DT).round() as u64;
    let labels = [
        (LABEL_BED, dwell(DEFAULT_DWELL_BED_S)),
        (LABEL_TOILET, dwell(DEFAULT_DWELL_TOILET_S)),
        (LABEL_BED, 0),
        (LABEL_DOCK, 0),
    ];
    if let Some(goals) = labels
        .iter()
        .map(|&(l, d)| grid.named(l).map(|p| Goal::new(l, p, d)))
        .collect::<Option<Vec<_>>>()
    {
        sys.add_routine(ROUTINE_NAME, goals);
    }
    let handle = serve_bridge(sys, (bind, port), BridgeOptions { time_scale })
        .with_context(|| format!("binding {bind}:{port}"))?;
    eprintln!("bridge listening on {}", handle.local_addr());
    loop {
        std::thread::park();
    }
}

fn cmd_replay(trajectory: &Path, config: Option<&Path>) -> Result<(), Exit> {
    let text = std::fs::read_to_string(trajectory)
        .with_context(|| format!("reading {}", trajectory.display()))
        .map_err(usage)?;
    let check = verify_trajectory_csv(&text)?;
    println!("rows: {}", check.rows);
    println!("stored hash:   {}", check.stored_hash);
    println!("computed hash: {}", check.computed_hash);
    if !check.verified() {
        return Err(Exit(
            1,
            anyhow!("trajectory does not match its stored hash"),
        ));
    }
    if let Some(cfg_path) = config {
        let cfg = load_config(cfg_path)?;
        let run = run_scenario(&cfg)?;
        let rerun = run.trajectory.hash();
        println!("re-run hash:   {rerun}");
        if rerun != check.stored_hash {
            return Err(Exit(1, anyhow!("re-run produced a different trajectory")));
        }
    }
    println!("verified");
    Ok(())
}

fn cmd_plan(map: &Path, from: &str, to: &str) -> Result<(), Exit> {
    let grid = read_map(map)?;
    let pose = |l: &str| {
        grid.named(l)
            .ok_or_else(|| anyhow!("map has no {l} marker"))
    };
    let (a, b) = (pose(from)?, pose(to)?);
    let nav = NavConfig::default();
    let costmap = inflate_grid(&Costmap::from_grid(&grid), nav.inflation_radius);
    let path = plan_path(&costmap, (a.x, a.y), (b.x, b.y))?;
    println!("path length: {:.3} m", path.total_length);
    println!("waypoints: {}", path.waypoints.len());
    println!(
        "grid cost: {} straight + {} diagonal cells",
        path.grid_cost.straight, path.grid_cost.diagonal
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run {
            config,
            report,
            format,
            trajectory,
        } => cmd_run(config, report.as_deref(), *format, trajectory.as_deref()),
        Cmd::Serve {
            map,
            port,
            bind,
            seed,
            time_scale,
        } => cmd_serve(map, bind, *port, *seed, *time_scale),
        Cmd::Replay { trajectory, config } => cmd_replay(trajectory, config.as_deref()),
        Cmd::Plan { map, from, to } => cmd_plan(map, from, to),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
