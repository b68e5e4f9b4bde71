//! Scripted runs of the assembled system and their timing reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::normalize_angle;
use crate::navigation::{Goal, NavConfigError, NavEvent, NavStatus};
use crate::supervisor::{transition, Event};
use crate::system::{Command, System, SystemConfig, Trajectory, TICK_DT};
use crate::world::{load_map, MapError, OccupancyGrid, LABEL_BED, LABEL_DOCK, LABEL_TOILET};

pub const ROUTINE_NAME: &str = "night_routine";
pub const DEFAULT_DWELL_BED_S: f64 = 30.0;
pub const DEFAULT_DWELL_TOILET_S: f64 = 38.0;
/// Ticks run after the last goal so queued mode changes settle.
const SETTLE_TICKS: u64 = 10;
/// Joystick samples are sent every this many ticks (20 Hz).
const JOYSTICK_PERIOD_TICKS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioMode {
    Autonomous,
    ManualScript,
}

/// One joystick segment of a manual script.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub x: f64,
    pub y: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map_path: PathBuf,
    pub seed: u64,
    pub mode: ScenarioMode,
    pub goals: Vec<String>,
    pub dwell_bed_s: f64,
    pub dwell_toilet_s: f64,
    pub speed_level: u8,
    pub noise: bool,
    /// Give up after this much simulated time.
    pub max_duration_s: f64,
    pub script: Vec<ScriptStep>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            map_path: PathBuf::from("maps/living_lab.map"),
            seed: 7,
            mode: ScenarioMode::Autonomous,
            goals: [LABEL_BED, LABEL_TOILET, LABEL_BED, LABEL_DOCK]
                .map(String::from)
                .to_vec(),
            dwell_bed_s: DEFAULT_DWELL_BED_S,
            dwell_toilet_s: DEFAULT_DWELL_TOILET_S,
            speed_level: 1,
            noise: false,
            max_duration_s: 900.0,
            script: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("map {path}")]
    Map { path: PathBuf, source: MapError },
    #[error("map has no {0} marker")]
    UnknownLabel(String),
    #[error(transparent)]
    Nav(#[from] NavConfigError),
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_script(v: &str) -> Result<Vec<ScriptStep>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|seg| {
            let nums: Vec<f64> = seg
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
                .collect::<Result<_, _>>()?;
            match nums[..] {
                [x, y, duration_s] => Ok(ScriptStep { x, y, duration_s }),
                _ => Err(format!("script step {seg:?} needs \"x y seconds\"")),
            }
        })
        .collect()
}

impl ScenarioConfig {
    /// Parses a flat `key = value` file or a JSON object. Relative map paths
    /// are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut cfg = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            Self::parse_kv(text)?
        };
        if cfg.map_path.is_relative() {
            cfg.map_path = base_dir.join(&cfg.map_path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn parse_kv(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| ScenarioError::Config {
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| err(format!("{key}: bad number {v:?}")))
            };
            match key {
                "map" | "map_path" => cfg.map_path = PathBuf::from(value),
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| err(format!("seed: bad integer {value:?}")))?
                }
                "mode" => {
                    cfg.mode = match value {
                        "autonomous" => ScenarioMode::Autonomous,
                        "manual-script" => ScenarioMode::ManualScript,
                        _ => return Err(err(format!("unknown mode {value:?}"))),
                    }
                }
                "goals" => {
                    cfg.goals = value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                }
                "dwell_bed_s" => cfg.dwell_bed_s = num(value)?,
                "dwell_toilet_s" => cfg.dwell_toilet_s = num(value)?,
                "speed_level" => {
                    cfg.speed_level = value
                        .parse()
                        .map_err(|_| err(format!("speed_level: bad integer {value:?}")))?
                }
                "noise" => {
                    cfg.noise = parse_bool(value).ok_or_else(|| err(format!("noise: {value:?}")))?
                }
                "max_duration_s" => cfg.max_duration_s = num(value)?,
                "script" => cfg.script = parse_script(value).map_err(err)?,
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if !(self.dwell_bed_s >= 0.0 && self.dwell_toilet_s >= 0.0) {
            return bad("dwell times must be non-negative");
        }
        if !(1..=3).contains(&self.speed_level) {
            return bad("speed_level must be 1, 2 or 3");
        }
        if self.max_duration_s.is_nan() || self.max_duration_s <= 0.0 {
            return bad("max_duration_s must be positive");
        }
        if self.mode == ScenarioMode::Autonomous && self.goals.is_empty() {
            return bad("autonomous mode needs at least one goal");
        }
        if self.script.iter().any(|s| {
            s.duration_s.is_nan() || s.duration_s < 0.0 || !s.x.is_finite() || !s.y.is_finite()
        }) {
            return bad("script steps need finite axes and non-negative durations");
        }
        Ok(())
    }

    pub fn system_config(&self) -> SystemConfig {
        let mut sc = SystemConfig {
            seed: self.seed,
            ..SystemConfig::default()
        };
        if self.noise {
            sc.lidar = sc.lidar.with_noise(0.01);
        }
        sc
    }
}

fn seconds_to_ticks(s: f64) -> u64 {
    (s / TICK_DT).round() as u64
}

fn round3(v: f64) -> f64 {
    let r = (v * 1000.0).round() / 1000.0;
    // Avoid emitting "-0".
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub name: String,
    pub t_start: f64,
    pub t_end: f64,
    pub tick_start: u64,
    pub tick_end: u64,
    pub dwell: bool,
}

impl PhaseRecord {
    fn new(name: impl Into<String>, tick_start: u64, tick_end: u64, dwell: bool) -> Self {
        Self {
            name: name.into(),
            t_start: round3(tick_start as f64 * TICK_DT),
            t_end: round3(tick_end as f64 * TICK_DT),
            tick_start,
            tick_end,
            dwell,
        }
    }

    pub fn duration_s(&self) -> f64 {
        round3((self.tick_end - self.tick_start) as f64 * TICK_DT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    pub label: String,
    pub t: f64,
    pub position_error_m: f64,
    pub yaw_error_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavSummary {
    pub label: String,
    pub t_start: f64,
    pub t_depart: Option<f64>,
    pub t_arrive: Option<f64>,
    pub path_length: f64,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub phases: Vec<PhaseRecord>,
    pub total_s: f64,
    pub locomotion_s: f64,
    pub dwell_s: f64,
    pub collision_count: u64,
    pub min_clearance_m: f64,
    pub battery_used_wh: f64,
    pub trajectory_hash: String,
    pub completed: bool,
    pub abort_reason: Option<String>,
    pub arrivals: Vec<ArrivalRecord>,
    pub nav: Vec<NavSummary>,
    pub seed: u64,
    pub ticks: u64,
}

impl ScenarioReport {
    pub fn total_ticks(&self) -> u64 {
        self.phases.last().map_or(0, |p| p.tick_end)
    }

    pub fn dwell_ticks(&self) -> u64 {
        self.phases
            .iter()
            .filter(|p| p.dwell)
            .map(|p| p.tick_end - p.tick_start)
            .sum()
    }

    pub fn locomotion_ticks(&self) -> u64 {
        self.total_ticks() - self.dwell_ticks()
    }

    /// Phases start at zero, are back to back and never run backwards.
    pub fn phases_contiguous(&self) -> bool {
        let mut at = 0;
        for p in &self.phases {
            if p.tick_start != at || p.tick_end < p.tick_start {
                return false;
            }
            at = p.tick_end;
        }
        true
    }

    pub fn passed(&self) -> bool {
        self.completed && self.collision_count == 0
    }
}

pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub trajectory: Trajectory,
}

/// Per-goal dwell and the phase names used for the report.
struct LegPlan {
    label: String,
    drive_phase: String,
    dwell_phase: Option<String>,
    dwell_ticks: u64,
}

fn leg_plans(cfg: &ScenarioConfig) -> Vec<LegPlan> {
    let mut bed_seen = false;
    cfg.goals
        .iter()
        .map(|label| {
            let lower = label.to_ascii_lowercase();
            let (drive_phase, dwell_phase, dwell_s) = match label.as_str() {
                LABEL_BED if !bed_seen => {
                    bed_seen = true;
                    ("to_bed".to_string(), Some("board_dwell"), cfg.dwell_bed_s)
                }
                LABEL_BED => ("to_bed_return".to_string(), None, 0.0),
                LABEL_TOILET => (
                    "to_toilet".to_string(),
                    Some("toilet_dwell"),
                    cfg.dwell_toilet_s,
                ),
                LABEL_DOCK => ("re_dock".to_string(), None, 0.0),
                _ => (format!("to_{lower}"), None, 0.0),
            };
            LegPlan {
                label: label.clone(),
                drive_phase,
                dwell_phase: dwell_phase.map(String::from),
                dwell_ticks: seconds_to_ticks(dwell_s),
            }
        })
        .collect()
}

/// Builds and runs the system for `cfg`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let grid =
        load_map(
            &std::fs::read_to_string(&cfg.map_path).map_err(|source| ScenarioError::Io {
                path: cfg.map_path.clone(),
                source,
            })?,
        )
        .map_err(|source| ScenarioError::Map {
            path: cfg.map_path.clone(),
            source,
        })?;
    run_scenario_on(cfg, Arc::new(grid))
}

/// Like [`run_scenario`] with the map already loaded.
pub fn run_scenario_on(
    cfg: &ScenarioConfig,
    grid: Arc<OccupancyGrid>,
) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let sys_cfg = cfg.system_config();
    sys_cfg.nav.validate(sys_cfg.robot.footprint_radius)?;
    let dock = grid
        .named(LABEL_DOCK)
        .ok_or_else(|| ScenarioError::UnknownLabel(LABEL_DOCK.into()))?;
    let mut sys = System::new(grid.clone(), dock, sys_cfg);
    sys.supervisor.speed_level = cfg.speed_level;
    sys.supervisor.refresh_display();
    // The robot starts parked on its charger.
    transition(&mut sys.supervisor, Event::DockReached);
    let max_ticks = seconds_to_ticks(cfg.max_duration_s);

    let (phases, completed, abort_reason) = match cfg.mode {
        ScenarioMode::Autonomous => {
            let legs = leg_plans(cfg);
            let goals = legs
                .iter()
                .map(|l| {
                    grid.named(&l.label)
                        .map(|p| Goal::new(&l.label, p, l.dwell_ticks))
                        .ok_or_else(|| ScenarioError::UnknownLabel(l.label.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            sys.add_routine(ROUTINE_NAME, goals);
            sys.enqueue(Command::StartRoutine(ROUTINE_NAME.into()));
            let finished = sys.run_until(max_ticks, |s| !s.navigator.is_active());
            let status = sys.navigator.status();
            if finished {
                sys.run(SETTLE_TICKS);
            }
            let abort = match status {
                NavStatus::Finished => None,
                NavStatus::Failed => sys.nav_log.iter().rev().find_map(|e| match &e.event {
                    NavEvent::Aborted { reason, .. } => Some(reason.clone()),
                    _ => None,
                }),
                _ => Some(format!("timed out after {:.1} s", cfg.max_duration_s)),
            };
            let phases = autonomous_phases(&sys, &legs);
            (phases, abort.is_none(), abort)
        }
        ScenarioMode::ManualScript => {
            transition(&mut sys.supervisor, Event::Undock);
            sys.enqueue(Command::SetMode(crate::supervisor::DriveMode::Manual));
            for step in &cfg.script {
                let n = seconds_to_ticks(step.duration_s);
                for k in 0..n {
                    if k % JOYSTICK_PERIOD_TICKS == 0 {
                        sys.enqueue(Command::Joystick {
                            x: step.x,
                            y: step.y,
                        });
                    }
                    sys.step();
                }
            }
            let phases = vec![PhaseRecord::new("manual", 0, sys.tick(), false)];
            (phases, true, None)
        }
    };

    let report = build_report(&sys, cfg, phases, completed, abort_reason, &grid);
    Ok(ScenarioRun {
        report,
        trajectory: sys.trajectory().clone(),
    })
}

fn autonomous_phases(sys: &System, legs: &[LegPlan]) -> Vec<PhaseRecord> {
    let records = sys.navigator.records();
    let arrival = |leg: usize| {
        records
            .iter()
            .filter(|r| r.tick_arrive.is_some())
            .nth(leg)
            .and_then(|r| r.tick_arrive)
    };
    let mut phases = Vec::new();
    let first_depart = records.iter().find_map(|r| r.tick_depart);
    let first_arrival = arrival(0);
    // Undocking lasts until the first forward command; an immediate arrival
    // (already at the first goal) ends it at that arrival.
    let undock_end = match (first_depart, first_arrival) {
        (Some(d), Some(a)) => d.min(a),
        (Some(d), None) => d,
        (None, Some(a)) => a,
        (None, None) => return vec![PhaseRecord::new("undock", 0, sys.tick(), false)],
    };
    phases.push(PhaseRecord::new("undock", 0, undock_end, false));
    let mut at = undock_end;
    for (i, leg) in legs.iter().enumerate() {
        match arrival(i) {
            Some(a) => {
                phases.push(PhaseRecord::new(&leg.drive_phase, at, a, false));
                at = a;
                if let Some(name) = &leg.dwell_phase {
                    let end = a + leg.dwell_ticks;
                    // A dwell still running when the run stops is cut short.
                    let end = end.min(sys.tick().max(a));
                    phases.push(PhaseRecord::new(name, a, end, true));
                    at = end;
                }
            }
            None => {
                phases.push(PhaseRecord::new(
                    &leg.drive_phase,
                    at,
                    sys.tick().max(at),
                    false,
                ));
                break;
            }
        }
    }
    phases
}

fn build_report(
    sys: &System,
    cfg: &ScenarioConfig,
    phases: Vec<PhaseRecord>,
    completed: bool,
    abort_reason: Option<String>,
    grid: &OccupancyGrid,
) -> ScenarioReport {
    let t = |tick: u64| round3(tick as f64 * TICK_DT);
    let arrivals = sys
        .nav_log
        .iter()
        .filter_map(|e| match &e.event {
            NavEvent::Arrived { label, tick, pose } => {
                let goal = grid.named(label).unwrap_or(*pose);
                Some(ArrivalRecord {
                    label: label.clone(),
                    t: t(*tick),
                    position_error_m: round3(pose.distance_to(goal.x, goal.y)),
                    yaw_error_rad: round3(normalize_angle(goal.theta - pose.theta).abs()),
                })
            }
            _ => None,
        })
        .collect();
    let nav = sys
        .navigator
        .records()
        .iter()
        .map(|r| NavSummary {
            label: r.label.clone(),
            t_start: t(r.tick_start),
            t_depart: r.tick_depart.map(t),
            t_arrive: r.tick_arrive.map(t),
            path_length: round3(r.path_length),
            aborted: r.aborted.clone(),
        })
        .collect();
    let mut report = ScenarioReport {
        phases,
        total_s: 0.0,
        locomotion_s: 0.0,
        dwell_s: 0.0,
        collision_count: sys.world.collision_count,
        min_clearance_m: round3(sys.min_clearance),
        battery_used_wh: round3(sys.battery_used_wh()),
        trajectory_hash: sys.trajectory().hash(),
        completed,
        abort_reason,
        arrivals,
        nav,
        seed: cfg.seed,
        ticks: sys.tick(),
    };
    report.total_s = t(report.total_ticks());
    report.locomotion_s = t(report.locomotion_ticks());
    report.dwell_s = t(report.dwell_ticks());
    report
}

pub fn report_to_json(r: &ScenarioReport) -> String {
    serde_json::to_string_pretty(r).expect("report serialization cannot fail")
}

pub fn report_from_json(text: &str) -> Result<ScenarioReport, serde_json::Error> {
    serde_json::from_str(text)
}

pub const REPORT_CSV_HEADER: &str = "kind,name,t_start,t_end,duration_s,locomotion_s,collision_count,min_clearance_m,battery_used_wh,trajectory_hash";

/// One row per phase, then a summary row.
pub fn report_to_csv(r: &ScenarioReport) -> String {
    let mut s = String::new();
    s.push_str(REPORT_CSV_HEADER);
    s.push('\n');
    for p in &r.phases {
        let _ = writeln!(
            s,
            "phase,{},{:.3},{:.3},{:.3},,,,,",
            p.name,
            p.t_start,
            p.t_end,
            p.duration_s()
        );
    }
    let _ = writeln!(
        s,
        "summary,total,0.000,{:.3},{:.3},{:.3},{},{:.3},{:.3},{}",
        r.total_s,
        r.total_s,
        r.locomotion_s,
        r.collision_count,
        r.min_clearance_m,
        r.battery_used_wh,
        r.trajectory_hash
    );
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn emit_report(r: &ScenarioReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report_to_json(r),
        ReportFormat::Csv => report_to_csv(r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_config_parses() {
        let text = "# night run\nmap = maps/x.map\nseed = 42\ngoals = BED, DOCK\n\
                    dwell_bed_s = 5\nnoise = on\nspeed_level = 2\n";
        let cfg = ScenarioConfig::parse(text, Path::new("/tmp/base")).unwrap();
        assert_eq!(cfg.map_path, PathBuf::from("/tmp/base/maps/x.map"));
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.goals, vec!["BED", "DOCK"]);
        assert_eq!(cfg.dwell_bed_s, 5.0);
        assert_eq!(cfg.dwell_toilet_s, 38.0);
        assert!(cfg.noise);
        assert_eq!(cfg.speed_level, 2);
    }

    #[test]
    fn json_config_parses() {
        let text = r#"{"map_path": "/abs/m.map", "seed": 3, "mode": "manual-script",
                       "script": [{"x": 0.0, "y": 1.0, "duration_s": 2.0}]}"#;
        let cfg = ScenarioConfig::parse(text, Path::new("/elsewhere")).unwrap();
        assert_eq!(cfg.map_path, PathBuf::from("/abs/m.map"));
        assert_eq!(cfg.mode, ScenarioMode::ManualScript);
        assert_eq!(cfg.script.len(), 1);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = Path::new(".");
        assert!(matches!(
            ScenarioConfig::parse("colour = red", base),
            Err(ScenarioError::Config { line: 1, .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("dwell_bed_s = -1", base),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse("script = 1 2", base),
            Err(ScenarioError::Config { .. })
        ));
    }

    #[test]
    fn script_syntax() {
        let s = parse_script("0 1 5; 0.5 0 1.5;").unwrap();
        assert_eq!(
            s,
            vec![
                ScriptStep {
                    x: 0.0,
                    y: 1.0,
                    duration_s: 5.0
                },
                ScriptStep {
                    x: 0.5,
                    y: 0.0,
                    duration_s: 1.5
                }
            ]
        );
    }

    #[test]
    fn standard_legs_yield_seven_phase_names() {
        let legs = leg_plans(&ScenarioConfig::default());
        let mut names = vec!["undock".to_string()];
        for l in &legs {
            names.push(l.drive_phase.clone());
            names.extend(l.dwell_phase.clone());
        }
        assert_eq!(
            names,
            [
                "undock",
                "to_bed",
                "board_dwell",
                "to_toilet",
                "toilet_dwell",
                "to_bed_return",
                "re_dock"
            ]
        );
        assert_eq!(legs[0].dwell_ticks + legs[1].dwell_ticks, 6800);
    }
}
