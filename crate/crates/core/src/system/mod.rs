//! The assembled robot: drive unit, supervisor, simulated world and
//! navigation stepped together on a fixed 100 Hz schedule.
//!
//! Per tick, in order: deliver bus frames, step the drive unit, step the
//! world, then every second tick the supervisor and every tenth tick the
//! LiDAR and navigation. External commands are queued and only applied at
//! the start of a tick.

mod trajectory;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::drive::{DriveParams, DriveUnit};
use crate::kinematics::{wheel_rpm_to_twist, Pose2D, RobotParams, Twist2D};
use crate::navigation::{
    front_min_range, inflate_grid, Costmap, Goal, NavConfig, NavEvent, Navigator,
};
use crate::protocol::{deserialize_frame, serialize_frame, Frame};
use crate::supervisor::{
    DriveMode, Event, Mode, Supervisor, SupervisorConfig, SupervisorInputs, SupervisorState,
};
use crate::world::{LaserScan, LidarConfig, OccupancyGrid, WorldState};

pub use trajectory::{
    verify_trajectory_csv, Trajectory, TrajectoryCheck, TrajectoryError, TrajectoryRow,
    TRAJECTORY_HEADER,
};

pub const TICK_DT: f64 = 0.01;
/// Loop ticks per supervisor tick.
pub const SUPERVISOR_DIVIDER: u64 = 2;
/// Loop ticks per LiDAR scan and navigation update.
pub const NAV_DIVIDER: u64 = 10;

/// Operator and client inputs, applied at tick boundaries.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Joystick { x: f64, y: f64 },
    FunctionKey(u8),
    Estop,
    EstopReset,
    SetMode(DriveMode),
    StartRoutine(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub robot: RobotParams,
    pub drive: DriveParams,
    pub supervisor: SupervisorConfig,
    pub nav: NavConfig,
    pub lidar: LidarConfig,
    pub seed: u64,
    /// How far past the footprint edge clearance is measured.
    pub clearance_horizon: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            robot: RobotParams::default(),
            drive: DriveParams::default(),
            supervisor: SupervisorConfig::default(),
            nav: NavConfig::default(),
            lidar: LidarConfig::default(),
            seed: 0,
            clearance_horizon: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleCounters {
    pub ticks: u64,
    pub drive_steps: u64,
    pub supervisor_ticks: u64,
    pub lidar_scans: u64,
    pub nav_updates: u64,
    pub commands: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedNavEvent {
    pub tick: u64,
    pub event: NavEvent,
}

pub struct System {
    pub cfg: SystemConfig,
    pub world: WorldState,
    pub drive: DriveUnit,
    pub supervisor: SupervisorState,
    pub navigator: Navigator,
    routines: BTreeMap<String, Vec<Goal>>,
    commands: VecDeque<Command>,
    pending: SupervisorInputs,
    to_drive: Vec<[u8; crate::protocol::WIRE_LEN]>,
    to_supervisor: Vec<Frame>,
    last_scan: Option<LaserScan>,
    trajectory: Trajectory,
    pub counters: ScheduleCounters,
    pub nav_log: Vec<LoggedNavEvent>,
    /// Smallest footprint-to-obstacle gap seen, capped at the horizon.
    pub min_clearance: f64,
    /// Navigation updates that commanded forward motion with an obstacle
    /// inside the stop range ahead. Should stay zero.
    pub safety_violations: u64,
    /// Emitted rows whose footprint overlapped an occupied cell.
    pub penetrations: u64,
    pub bus_errors: u64,
    start_energy_wh: f64,
}

impl System {
    pub fn new(grid: Arc<OccupancyGrid>, start: Pose2D, cfg: SystemConfig) -> Self {
        let costmap = inflate_grid(&Costmap::from_grid(&grid), cfg.nav.inflation_radius);
        let world = WorldState::new(grid, start, cfg.robot, cfg.seed).with_dt(TICK_DT);
        let supervisor = SupervisorState::new(cfg.supervisor.battery.full_v);
        let start_energy_wh = cfg.supervisor.battery.energy_wh(supervisor.battery_v);
        let mut s = Self {
            world,
            drive: DriveUnit::new(cfg.drive),
            supervisor,
            navigator: Navigator::new(Arc::new(costmap), cfg.nav),
            routines: BTreeMap::new(),
            commands: VecDeque::new(),
            pending: SupervisorInputs::default(),
            to_drive: Vec::new(),
            to_supervisor: Vec::new(),
            last_scan: None,
            trajectory: Trajectory::default(),
            counters: ScheduleCounters::default(),
            nav_log: Vec::new(),
            min_clearance: cfg.clearance_horizon,
            safety_violations: 0,
            penetrations: 0,
            bus_errors: 0,
            start_energy_wh,
            cfg,
        };
        s.update_clearance();
        s
    }

    /// Registers a named goal sequence for [`Command::StartRoutine`].
    pub fn add_routine(&mut self, name: impl Into<String>, goals: Vec<Goal>) {
        self.routines.insert(name.into(), goals);
    }

    pub fn routine_names(&self) -> impl Iterator<Item = &str> {
        self.routines.keys().map(String::as_str)
    }

    pub fn enqueue(&mut self, cmd: Command) {
        self.commands.push_back(cmd);
    }

    pub fn tick(&self) -> u64 {
        self.world.tick
    }

    pub fn time(&self) -> f64 {
        self.world.time()
    }

    pub fn mode(&self) -> Mode {
        self.supervisor.mode
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn last_scan(&self) -> Option<&LaserScan> {
        self.last_scan.as_ref()
    }

    /// Body twist realised by the wheels right now.
    pub fn measured_twist(&self) -> Twist2D {
        let (l, r) = self.drive.wheel_rpm();
        wheel_rpm_to_twist(l, r, &self.cfg.robot)
    }

    pub fn battery_used_wh(&self) -> f64 {
        self.start_energy_wh
            - self
                .cfg
                .supervisor
                .battery
                .energy_wh(self.supervisor.battery_v)
    }

    pub fn run(&mut self, n_ticks: u64) {
        for _ in 0..n_ticks {
            self.step();
        }
    }

    /// Steps until `done` holds after a tick or `max_ticks` elapse. Returns
    /// whether `done` was reached.
    pub fn run_until(&mut self, max_ticks: u64, mut done: impl FnMut(&System) -> bool) -> bool {
        for _ in 0..max_ticks {
            self.step();
            if done(self) {
                return true;
            }
        }
        false
    }

    pub fn step(&mut self) {
        self.drain_commands();

        // (1) bus delivery to the drive unit
        let inbox: Vec<Frame> = self
            .to_drive
            .drain(..)
            .filter_map(|b| match deserialize_frame(&b) {
                Ok(f) => Some(f),
                Err(_) => {
                    self.bus_errors += 1;
                    None
                }
            })
            .collect();

        // (2) drive firmware
        let out = self.drive.step(&inbox, TICK_DT);
        self.counters.drive_steps += 1;
        self.to_supervisor.extend(out);

        // (3) plant
        let (l, r) = self.drive.wheel_rpm();
        self.world.sim_step(l, r);
        let tick = self.world.tick;

        // (4) supervisor
        if tick.is_multiple_of(SUPERVISOR_DIVIDER) {
            let mut inputs = std::mem::take(&mut self.pending);
            inputs.rx = std::mem::take(&mut self.to_supervisor);
            let out = Supervisor::tick(
                &mut self.supervisor,
                inputs,
                &self.cfg.robot,
                &self.cfg.supervisor,
            );
            self.to_drive.extend(out.frames.iter().map(serialize_frame));
            self.counters.supervisor_ticks += 1;
        }

        // (5) perception and navigation
        if tick.is_multiple_of(NAV_DIVIDER) {
            self.nav_update(tick);
        }

        self.update_clearance();
        if self.world.footprint_collides() {
            self.penetrations += 1;
        }
        self.trajectory.push(TrajectoryRow {
            tick,
            t: self.world.time(),
            x: self.world.pose.x,
            y: self.world.pose.y,
            theta: self.world.pose.theta,
            mode: self.supervisor.mode,
            battery_v: self.supervisor.battery_v,
            collisions: self.world.collision_count,
        });
        self.counters.ticks += 1;
    }

    fn drain_commands(&mut self) {
        while let Some(cmd) = self.commands.pop_front() {
            self.counters.commands += 1;
            match cmd {
                Command::Joystick { x, y } => self.pending.joystick = Some((x, y)),
                Command::FunctionKey(k) => self.pending.events.push(Event::FunctionKey(k)),
                Command::Estop => self.pending.events.push(Event::EstopPressed),
                Command::EstopReset => self.pending.events.push(Event::EstopReset),
                Command::SetMode(m) => self.pending.events.push(Event::SetMode(m)),
                Command::StartRoutine(name) => {
                    if let Some(goals) = self.routines.get(&name).cloned() {
                        self.navigator.start(goals);
                        if matches!(self.supervisor.mode, Mode::Manual | Mode::Boot) {
                            self.pending.events.push(Event::SetMode(DriveMode::Auto));
                        }
                    }
                }
            }
        }
    }

    fn nav_update(&mut self, tick: u64) {
        let scan = match self.world.scan(&self.cfg.lidar) {
            Ok(s) => {
                self.counters.lidar_scans += 1;
                Some(s)
            }
            Err(_) => None,
        };
        let pose = self.world.pose;
        let out = self
            .navigator
            .update(tick, &pose, self.supervisor.mode, scan.as_ref());
        self.counters.nav_updates += 1;
        if let (Some(cmd), Some(s)) = (out.auto_cmd, scan.as_ref()) {
            let blocked = front_min_range(s, self.cfg.nav.safety_sector)
                .is_some_and(|r| r < self.cfg.nav.safety_stop_range);
            if blocked && cmd.v > 0.0 {
                self.safety_violations += 1;
            }
        }
        if let Some(cmd) = out.auto_cmd {
            self.pending.auto_cmd = Some(cmd);
        }
        self.pending.events.extend(out.events);
        self.nav_log.extend(
            out.nav_events
                .into_iter()
                .map(|event| LoggedNavEvent { tick, event }),
        );
        self.last_scan = scan;
    }

    fn update_clearance(&mut self) {
        if let Some(c) = self.world.clearance(self.cfg.clearance_horizon) {
            self.min_clearance = self.min_clearance.min(c);
        }
    }
}

/// Runs `n_ticks` ticks and returns the full trajectory so far.
pub fn run_loop(system: &mut System, n_ticks: u64) -> Trajectory {
    system.run(n_ticks);
    system.trajectory().clone()
}
