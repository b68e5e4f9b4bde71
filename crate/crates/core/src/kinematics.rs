//! Differential-drive conversions and exact-arc odometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Body-frame velocity: `v` forward (m/s), `w` counter-clockwise (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2D {
    pub v: f64,
    pub w: f64,
}

impl Twist2D {
    pub const ZERO: Twist2D = Twist2D { v: 0.0, w: 0.0 };

    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn is_zero(&self) -> bool {
        self.v == 0.0 && self.w == 0.0
    }
}

/// Planar pose. `theta` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub wheel_radius: f64,
    pub track_width: f64,
    pub footprint_radius: f64,
    pub mass_kg: f64,
    pub payload_kg: f64,
    pub casters: u32,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            wheel_radius: 0.075,
            track_width: 0.45,
            footprint_radius: 0.35,
            mass_kg: 27.8,
            payload_kg: 100.0,
            casters: 4,
        }
    }
}

impl RobotParams {
    pub fn wheel_circumference(&self) -> f64 {
        2.0 * PI * self.wheel_radius
    }
}

pub fn twist_to_wheel_rpm(t: Twist2D, p: &RobotParams) -> (f64, f64) {
    let half = t.w * p.track_width / 2.0;
    let to_rpm = 60.0 / p.wheel_circumference();
    ((t.v - half) * to_rpm, (t.v + half) * to_rpm)
}

pub fn wheel_rpm_to_twist(left_rpm: f64, right_rpm: f64, p: &RobotParams) -> Twist2D {
    let to_mps = p.wheel_circumference() / 60.0;
    let vl = left_rpm * to_mps;
    let vr = right_rpm * to_mps;
    Twist2D {
        v: (vl + vr) / 2.0,
        w: (vr - vl) / p.track_width,
    }
}

/// Advances `pose` by wheel travel distances using the exact circular-arc
/// model (no integration error for constant wheel speeds over the step).
pub fn integrate_odometry(pose: Pose2D, d_left: f64, d_right: f64, p: &RobotParams) -> Pose2D {
    let dtheta = (d_right - d_left) / p.track_width;
    let dc = (d_left + d_right) / 2.0;
    let (x, y) = if dtheta.abs() < 1e-9 {
        // Second-order term keeps the straight branch continuous with the arc.
        let mid = pose.theta + dtheta / 2.0;
        (pose.x + dc * mid.cos(), pose.y + dc * mid.sin())
    } else {
        let r = dc / dtheta;
        let th1 = pose.theta + dtheta;
        (
            pose.x + r * (th1.sin() - pose.theta.sin()),
            pose.y - r * (th1.cos() - pose.theta.cos()),
        )
    };
    Pose2D {
        x,
        y,
        theta: normalize_angle(pose.theta + dtheta),
    }
}

pub fn ticks_to_distance(delta_ticks: i64, ticks_per_rev: u32, p: &RobotParams) -> f64 {
    delta_ticks as f64 / ticks_per_rev as f64 * p.wheel_circumference()
}
