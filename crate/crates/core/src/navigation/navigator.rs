//! Goal sequencing on top of the planner and follower.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::costmap::Costmap;
use super::follower::{pure_pursuit, safety_gate};
use super::planner::{plan_path, Path};
use super::NavConfig;
use crate::kinematics::{normalize_angle, Pose2D, Twist2D};
use crate::supervisor::{DriveMode, Event, Mode};
use crate::world::{LaserScan, LABEL_DOCK};

#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub label: String,
    pub pose: Pose2D,
    /// Hold time after arriving, in simulation ticks.
    pub dwell_ticks: u64,
}

impl Goal {
    pub fn new(label: impl Into<String>, pose: Pose2D, dwell_ticks: u64) -> Self {
        Self {
            label: label.into(),
            pose,
            dwell_ticks,
        }
    }
}

/// One attempt at reaching a goal. A suspended attempt is closed with an
/// abort reason and a fresh record starts when navigation resumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavRecord {
    pub label: String,
    pub tick_start: u64,
    /// First tick with a forward command.
    pub tick_depart: Option<u64>,
    pub tick_arrive: Option<u64>,
    pub path_length: f64,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NavEvent {
    Started {
        label: String,
        tick: u64,
    },
    Arrived {
        label: String,
        tick: u64,
        pose: Pose2D,
    },
    Aborted {
        label: String,
        tick: u64,
        reason: String,
    },
    Completed {
        tick: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavStatus {
    Idle,
    /// A goal is selected but no path is being followed yet.
    Starting,
    Driving,
    Dwelling {
        until: u64,
    },
    Suspended,
    Finished,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NavOutput {
    /// Command for the supervisor's autonomy input, if navigation is active.
    pub auto_cmd: Option<Twist2D>,
    pub events: Vec<Event>,
    pub nav_events: Vec<NavEvent>,
}

pub struct Navigator {
    cfg: NavConfig,
    costmap: Arc<Costmap>,
    goals: Vec<Goal>,
    index: usize,
    status: NavStatus,
    path: Option<Path>,
    records: Vec<NavRecord>,
    /// Updates on which the safety gate zeroed forward motion.
    pub gate_stops: u64,
}

impl Navigator {
    pub fn new(costmap: Arc<Costmap>, cfg: NavConfig) -> Self {
        Self {
            cfg,
            costmap,
            goals: Vec::new(),
            index: 0,
            status: NavStatus::Idle,
            path: None,
            records: Vec::new(),
            gate_stops: 0,
        }
    }

    pub fn config(&self) -> &NavConfig {
        &self.cfg
    }

    pub fn costmap(&self) -> &Costmap {
        &self.costmap
    }

    pub fn status(&self) -> NavStatus {
        self.status
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_ref()
    }

    pub fn records(&self) -> &[NavRecord] {
        &self.records
    }

    pub fn current_goal(&self) -> Option<&Goal> {
        match self.status {
            NavStatus::Idle | NavStatus::Finished => None,
            _ => self.goals.get(self.index),
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(
            self.status,
            NavStatus::Idle | NavStatus::Finished | NavStatus::Failed
        )
    }

    /// Replaces any running sequence with `goals`.
    pub fn start(&mut self, goals: Vec<Goal>) {
        self.goals = goals;
        self.index = 0;
        self.path = None;
        self.status = if self.goals.is_empty() {
            NavStatus::Finished
        } else {
            NavStatus::Starting
        };
    }

    /// One navigation update. `tick` is the simulation tick count and
    /// `pose` the localized pose.
    pub fn update(
        &mut self,
        tick: u64,
        pose: &Pose2D,
        mode: Mode,
        scan: Option<&LaserScan>,
    ) -> NavOutput {
        let mut out = NavOutput::default();
        if let NavStatus::Dwelling { until } = self.status {
            if tick < until {
                out.auto_cmd = Some(Twist2D::ZERO);
                return out;
            }
            self.advance(tick, &mut out);
        }
        if self.status == NavStatus::Suspended && mode == Mode::Automatic {
            self.status = NavStatus::Starting;
        }
        if self.status == NavStatus::Starting {
            self.begin_leg(tick, pose, mode, &mut out);
        }
        if self.status == NavStatus::Driving {
            self.drive(tick, pose, mode, scan, &mut out);
        }
        out
    }

    fn goal(&self) -> &Goal {
        &self.goals[self.index]
    }

    fn arrived(&self, pose: &Pose2D) -> bool {
        let g = &self.goal().pose;
        pose.distance_to(g.x, g.y) <= self.cfg.goal_pos_tol
            && normalize_angle(g.theta - pose.theta).abs() <= self.cfg.goal_yaw_tol
    }

    fn begin_leg(&mut self, tick: u64, pose: &Pose2D, mode: Mode, out: &mut NavOutput) {
        if self.arrived(pose) {
            let label = self.goal().label.clone();
            self.records.push(NavRecord {
                label: label.clone(),
                tick_start: tick,
                tick_depart: None,
                tick_arrive: None,
                path_length: 0.0,
                aborted: None,
            });
            out.nav_events.push(NavEvent::Started { label, tick });
            self.finish_leg(tick, pose, mode, out);
            return;
        }
        match mode {
            Mode::Automatic => {}
            Mode::Docked => {
                out.events.push(Event::Undock);
                return;
            }
            Mode::Boot => {
                out.events.push(Event::SetMode(DriveMode::Auto));
                return;
            }
            Mode::Manual | Mode::Estopped => return,
        }

        let goal = self.goal().clone();
        let planned = plan_path(&self.costmap, (pose.x, pose.y), (goal.pose.x, goal.pose.y));
        let mut record = NavRecord {
            label: goal.label.clone(),
            tick_start: tick,
            tick_depart: None,
            tick_arrive: None,
            path_length: 0.0,
            aborted: None,
        };
        out.nav_events.push(NavEvent::Started {
            label: goal.label.clone(),
            tick,
        });
        match planned {
            Ok(path) => {
                record.path_length = path.total_length;
                self.records.push(record);
                self.path = Some(path.with_goal_yaw(goal.pose.theta));
                self.status = NavStatus::Driving;
            }
            Err(e) => {
                let reason = e.to_string();
                record.aborted = Some(reason.clone());
                self.records.push(record);
                out.nav_events.push(NavEvent::Aborted {
                    label: goal.label,
                    tick,
                    reason,
                });
                out.auto_cmd = Some(Twist2D::ZERO);
                self.path = None;
                self.status = NavStatus::Failed;
            }
        }
    }

    fn drive(
        &mut self,
        tick: u64,
        pose: &Pose2D,
        mode: Mode,
        scan: Option<&LaserScan>,
        out: &mut NavOutput,
    ) {
        if mode != Mode::Automatic {
            let reason = match mode {
                Mode::Estopped => "estop",
                _ => "manual override",
            };
            self.suspend(tick, reason, out);
            return;
        }
        if self.arrived(pose) {
            self.finish_leg(tick, pose, mode, out);
            return;
        }
        let path = self.path.as_ref().expect("driving implies a path");
        let raw = pure_pursuit(pose, path, &self.cfg);
        let cmd = match scan {
            Some(s) => safety_gate(s, raw, &self.cfg),
            None => raw,
        };
        if cmd.v != raw.v {
            self.gate_stops += 1;
        }
        if cmd.v > 0.0 {
            if let Some(r) = self.records.last_mut() {
                r.tick_depart.get_or_insert(tick);
            }
        }
        out.auto_cmd = Some(cmd);
    }

    fn suspend(&mut self, tick: u64, reason: &str, out: &mut NavOutput) {
        let label = self.goal().label.clone();
        if let Some(r) = self.records.last_mut() {
            r.aborted = Some(reason.to_string());
        }
        out.nav_events.push(NavEvent::Aborted {
            label,
            tick,
            reason: reason.to_string(),
        });
        self.path = None;
        self.status = NavStatus::Suspended;
    }

    fn finish_leg(&mut self, tick: u64, pose: &Pose2D, mode: Mode, out: &mut NavOutput) {
        let goal = self.goal().clone();
        if let Some(r) = self.records.last_mut() {
            r.tick_arrive = Some(tick);
        }
        out.nav_events.push(NavEvent::Arrived {
            label: goal.label.clone(),
            tick,
            pose: *pose,
        });
        out.auto_cmd = Some(Twist2D::ZERO);
        if goal.label == LABEL_DOCK && mode != Mode::Docked {
            out.events.push(Event::DockReached);
        }
        self.path = None;
        if goal.dwell_ticks > 0 {
            self.status = NavStatus::Dwelling {
                until: tick + goal.dwell_ticks,
            };
        } else {
            self.advance(tick, out);
        }
    }

    fn advance(&mut self, tick: u64, out: &mut NavOutput) {
        self.index += 1;
        if self.index >= self.goals.len() {
            self.status = NavStatus::Finished;
            out.nav_events.push(NavEvent::Completed { tick });
        } else {
            self.status = NavStatus::Starting;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigation::inflate_grid;
    use crate::world::OccupancyGrid;

    fn nav_on(g: &OccupancyGrid) -> Navigator {
        let cfg = NavConfig::default();
        let cm = inflate_grid(&Costmap::from_grid(g), cfg.inflation_radius);
        Navigator::new(Arc::new(cm), cfg)
    }

    #[test]
    fn dock_from_dock_arrives_immediately() {
        let g = OccupancyGrid::new(60, 60, 0.05);
        let mut nav = nav_on(&g);
        let dock = Pose2D::new(1.5, 1.5, 0.0);
        nav.start(vec![Goal::new(LABEL_DOCK, dock, 0)]);
        let out = nav.update(10, &dock, Mode::Docked, None);
        assert!(out
            .nav_events
            .iter()
            .any(|e| matches!(e, NavEvent::Arrived { tick: 10, .. })));
        assert_eq!(nav.status(), NavStatus::Finished);
        assert!(out.events.is_empty());
    }

    #[test]
    fn undocks_before_driving() {
        let g = OccupancyGrid::new(60, 60, 0.05);
        let mut nav = nav_on(&g);
        let here = Pose2D::new(1.0, 1.0, 0.0);
        nav.start(vec![Goal::new("BED", Pose2D::new(2.0, 1.0, 0.0), 0)]);
        let out = nav.update(10, &here, Mode::Docked, None);
        assert_eq!(out.events, vec![Event::Undock]);
        assert_eq!(out.auto_cmd, None);
        let out = nav.update(20, &here, Mode::Automatic, None);
        let cmd = out.auto_cmd.unwrap();
        assert!(cmd.v > 0.0);
        assert_eq!(nav.records()[0].tick_depart, Some(20));
    }

    #[test]
    fn sealed_corridor_aborts() {
        let mut g = OccupancyGrid::new(80, 40, 0.05);
        g.fill_rect(2.0, 0.0, 2.05, 2.0, true);
        let mut nav = nav_on(&g);
        nav.start(vec![Goal::new("BED", Pose2D::new(3.0, 1.0, 0.0), 0)]);
        let out = nav.update(10, &Pose2D::new(1.0, 1.0, 0.0), Mode::Automatic, None);
        assert!(out.nav_events.iter().any(
            |e| matches!(e, NavEvent::Aborted { reason, .. } if reason.starts_with("no path"))
        ));
        assert_eq!(nav.status(), NavStatus::Failed);
    }

    #[test]
    fn estop_suspends_and_resume_replans() {
        let g = OccupancyGrid::new(60, 60, 0.05);
        let mut nav = nav_on(&g);
        let here = Pose2D::new(1.0, 1.0, 0.0);
        nav.start(vec![Goal::new("BED", Pose2D::new(2.0, 1.0, 0.0), 0)]);
        nav.update(10, &here, Mode::Automatic, None);
        let out = nav.update(20, &here, Mode::Estopped, None);
        assert_eq!(out.auto_cmd, None);
        assert_eq!(nav.status(), NavStatus::Suspended);
        assert_eq!(nav.records()[0].aborted.as_deref(), Some("estop"));
        nav.update(30, &here, Mode::Manual, None);
        assert_eq!(nav.status(), NavStatus::Suspended);
        let out = nav.update(40, &here, Mode::Automatic, None);
        assert!(out.auto_cmd.unwrap().v > 0.0);
        assert_eq!(nav.records().len(), 2);
        assert_eq!(nav.records()[1].tick_start, 40);
    }

    #[test]
    fn dwell_holds_then_advances() {
        let g = OccupancyGrid::new(60, 60, 0.05);
        let mut nav = nav_on(&g);
        let here = Pose2D::new(1.0, 1.0, 0.0);
        nav.start(vec![
            Goal::new("BED", here, 50),
            Goal::new("TOILET", Pose2D::new(2.0, 1.0, 0.0), 0),
        ]);
        nav.update(10, &here, Mode::Automatic, None);
        assert_eq!(nav.status(), NavStatus::Dwelling { until: 60 });
        let out = nav.update(50, &here, Mode::Automatic, None);
        assert_eq!(out.auto_cmd, Some(Twist2D::ZERO));
        let out = nav.update(60, &here, Mode::Automatic, None);
        assert_eq!(nav.status(), NavStatus::Driving);
        assert_eq!(nav.records()[1].tick_start, 60);
        assert!(out.auto_cmd.unwrap().v > 0.0);
    }
}
