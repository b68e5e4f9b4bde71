//! Deterministic 2D environment: maps, kinematic plant, collisions, LiDAR.

mod grid;
mod lidar;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use grid::{
    load_map, load_map_with_resolution, MapError, OccupancyGrid, DEFAULT_RESOLUTION, LABEL_BED,
    LABEL_DOCK, LABEL_TOILET,
};
pub use lidar::{lidar_scan, raycast, LaserScan, LidarConfig, SensorError};

use crate::kinematics::{integrate_odometry, Pose2D, RobotParams};

/// Ground-truth state of the simulated robot and its surroundings.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub pose: Pose2D,
    pub wheel_rpm: (f64, f64),
    pub tick: u64,
    pub rng_seed: u64,
    pub collision_count: u64,
    pub grid: Arc<OccupancyGrid>,
    pub params: RobotParams,
    rng: ChaCha8Rng,
    dt: f64,
}

impl WorldState {
    pub fn new(grid: Arc<OccupancyGrid>, pose: Pose2D, params: RobotParams, seed: u64) -> Self {
        Self {
            pose,
            wheel_rpm: (0.0, 0.0),
            tick: 0,
            rng_seed: seed,
            collision_count: 0,
            grid,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            dt: 0.01,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Simulated time, derived from the tick count so it never drifts.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    /// Advances the plant one fixed step. A move whose footprint would
    /// overlap an occupied cell is rejected and counted as a collision.
    pub fn sim_step(&mut self, left_rpm: f64, right_rpm: f64) {
        let per_rpm = 2.0 * PI * self.params.wheel_radius / 60.0 * self.dt;
        let next = integrate_odometry(
            self.pose,
            left_rpm * per_rpm,
            right_rpm * per_rpm,
            &self.params,
        );
        if self
            .grid
            .disc_overlaps(next.x, next.y, self.params.footprint_radius)
        {
            self.collision_count += 1;
        } else {
            self.pose = next;
        }
        self.wheel_rpm = (left_rpm, right_rpm);
        self.tick += 1;
    }

    pub fn scan(&mut self, cfg: &LidarConfig) -> Result<LaserScan, SensorError> {
        let stamp = self.time();
        lidar_scan(&self.grid, &self.pose, cfg, stamp, &mut self.rng)
    }

    /// Gap between the footprint edge and the nearest occupied cell, looking
    /// at most `horizon` beyond the footprint.
    pub fn clearance(&self, horizon: f64) -> Option<f64> {
        let r = self.params.footprint_radius;
        self.grid
            .clearance(self.pose.x, self.pose.y, r + horizon)
            .map(|d| d - r)
    }

    pub fn footprint_collides(&self) -> bool {
        self.grid
            .disc_overlaps(self.pose.x, self.pose.y, self.params.footprint_radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> Arc<OccupancyGrid> {
        let mut g = OccupancyGrid::new(120, 40, 0.05);
        for ix in 0..120 {
            g.set(ix, 0, true);
            g.set(ix, 39, true);
        }
        for iy in 0..40 {
            g.set(119, iy, true);
        }
        Arc::new(g)
    }

    #[test]
    fn zero_rpm_only_advances_time() {
        let mut w = WorldState::new(
            corridor(),
            Pose2D::new(1.0, 1.0, 0.0),
            RobotParams::default(),
            1,
        );
        w.sim_step(0.0, 0.0);
        assert_eq!(w.pose, Pose2D::new(1.0, 1.0, 0.0));
        assert_eq!(w.tick, 1);
        assert!((w.time() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn straight_run_matches_kinematics() {
        let p = RobotParams::default();
        let rpm = 0.5 / (2.0 * PI * p.wheel_radius) * 60.0;
        let mut w = WorldState::new(corridor(), Pose2D::new(1.0, 1.0, 0.0), p, 1);
        for _ in 0..100 {
            w.sim_step(rpm, rpm);
        }
        assert!((w.pose.x - 1.5).abs() < 1e-6);
        assert!((w.pose.y - 1.0).abs() < 1e-12);
        assert_eq!(w.collision_count, 0);
    }

    #[test]
    fn wall_rejects_motion() {
        let p = RobotParams::default();
        let mut w = WorldState::new(corridor(), Pose2D::new(5.0, 1.0, 0.0), p, 1);
        for _ in 0..600 {
            w.sim_step(120.0, 120.0);
        }
        assert!(w.collision_count > 0);
        // Wall face at x = 5.95; the footprint stops short of it.
        assert!(w.pose.x + p.footprint_radius <= 5.95);
        assert!(w.pose.x + p.footprint_radius > 5.90);
        assert!(!w.footprint_collides());
    }
}
