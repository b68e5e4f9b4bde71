//! Automatic-mode autonomy: costmap inflation, A* planning, pure-pursuit
//! following, scan gating and goal sequencing.

mod costmap;
mod follower;
mod navigator;
mod planner;

pub use costmap::{inflate_grid, Costmap};
pub use follower::{front_min_range, pure_pursuit, safety_gate};
pub use navigator::{Goal, NavEvent, NavOutput, NavRecord, NavStatus, Navigator};
pub use planner::{
    astar_cells, line_of_sight, move_allowed, octile, plan_path, polyline_length, GridCost, Path,
    PlanError, NEIGHBOURS,
};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavConfig {
    pub inflation_radius: f64,
    pub lookahead: f64,
    pub goal_pos_tol: f64,
    pub goal_yaw_tol: f64,
    pub cruise_v: f64,
    pub safety_stop_range: f64,
    /// Half-width of the forward sector checked by the safety gate.
    pub safety_sector: f64,
    pub max_w: f64,
    /// Vertices turning more than this are driven to and pivoted on.
    pub corner_angle: f64,
    /// Distance at which a vertex counts as reached.
    pub capture_radius: f64,
    /// Heading error below which a pivot ends and driving resumes.
    pub pivot_tol: f64,
    /// Forward speed is capped at this gain times the distance to the next
    /// stop vertex, but never below `approach_v_min`.
    pub approach_gain: f64,
    pub approach_v_min: f64,
    pub rotate_gain: f64,
    pub rotate_w_min: f64,
    pub rotate_w_max: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            inflation_radius: 0.40,
            lookahead: 0.5,
            goal_pos_tol: 0.05,
            goal_yaw_tol: 0.1,
            cruise_v: 0.5,
            safety_stop_range: 0.3,
            safety_sector: 30f64.to_radians(),
            max_w: 2.0,
            corner_angle: 0.1,
            capture_radius: 0.03,
            pivot_tol: 0.05,
            approach_gain: 1.2,
            approach_v_min: 0.04,
            rotate_gain: 1.5,
            rotate_w_min: 0.1,
            rotate_w_max: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NavConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("inflation radius {inflation} is smaller than the footprint radius {footprint}")]
    InflationTooSmall { inflation: f64, footprint: f64 },
}

impl NavConfig {
    pub fn validate(&self, footprint_radius: f64) -> Result<(), NavConfigError> {
        let fields = [
            ("inflation_radius", self.inflation_radius),
            ("lookahead", self.lookahead),
            ("goal_pos_tol", self.goal_pos_tol),
            ("goal_yaw_tol", self.goal_yaw_tol),
            ("cruise_v", self.cruise_v),
            ("safety_stop_range", self.safety_stop_range),
            ("safety_sector", self.safety_sector),
            ("max_w", self.max_w),
            ("capture_radius", self.capture_radius),
            ("pivot_tol", self.pivot_tol),
            ("approach_gain", self.approach_gain),
            ("approach_v_min", self.approach_v_min),
            ("rotate_gain", self.rotate_gain),
            ("rotate_w_min", self.rotate_w_min),
            ("rotate_w_max", self.rotate_w_max),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| v.is_nan() || *v <= 0.0) {
            return Err(NavConfigError::NotPositive(name));
        }
        if self.inflation_radius < footprint_radius {
            return Err(NavConfigError::InflationTooSmall {
                inflation: self.inflation_radius,
                footprint: footprint_radius,
            });
        }
        Ok(())
    }
}
