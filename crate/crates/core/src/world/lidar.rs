use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::OccupancyGrid;
use crate::kinematics::Pose2D;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("sensor origin ({x:.3}, {y:.3}) lies inside an occupied cell")]
    OriginOccupied { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarConfig {
    pub angle_min: f64,
    pub angle_max: f64,
    pub beams: usize,
    pub range_max: f64,
    /// Standard deviation of additive range noise; zero disables noise.
    pub noise_sigma: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            angle_min: (-135.0f64).to_radians(),
            angle_max: 135.0f64.to_radians(),
            beams: 360,
            range_max: 30.0,
            noise_sigma: 0.0,
        }
    }
}

impl LidarConfig {
    /// Full-resolution profile of the physical scanner (1081 beams).
    pub fn full_resolution() -> Self {
        Self {
            beams: 1081,
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn angle_increment(&self) -> f64 {
        if self.beams > 1 {
            (self.angle_max - self.angle_min) / (self.beams - 1) as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    pub range_max: f64,
    /// One entry per beam; [`LaserScan::no_return`] marks beams that hit nothing.
    pub ranges: Vec<f64>,
    pub stamp: f64,
}

impl LaserScan {
    pub fn no_return(&self) -> f64 {
        self.range_max + 1.0
    }

    pub fn is_return(&self, r: f64) -> bool {
        r <= self.range_max
    }

    /// Beam angle relative to the sensor heading.
    pub fn beam_angle(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }

    /// Every `stride`-th range, for bandwidth-limited consumers.
    pub fn downsample(&self, count: usize) -> Vec<f64> {
        if count == 0 || self.ranges.is_empty() {
            return Vec::new();
        }
        let stride = (self.ranges.len() / count).max(1);
        self.ranges
            .iter()
            .step_by(stride)
            .take(count)
            .copied()
            .collect()
    }
}

/// Casts one ray through the grid cell by cell. Returns the distance at which
/// the ray enters the first occupied cell, or `None` if it leaves the map or
/// exceeds `max_range` first.
pub fn raycast(grid: &OccupancyGrid, x: f64, y: f64, angle: f64, max_range: f64) -> Option<f64> {
    let res = grid.resolution();
    let (ox, oy) = grid.origin();
    let (dx, dy) = (angle.cos(), angle.sin());
    let (mut ix, mut iy) = grid.cell_of(x, y);
    if grid.is_occupied(ix, iy) {
        return Some(0.0);
    }

    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let boundary = |i: i64, step: i64, o: f64| o + (i + (step > 0) as i64) as f64 * res;
    let mut t_max_x = if dx != 0.0 {
        (boundary(ix, step_x, ox) - x) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        (boundary(iy, step_y, oy) - y) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 {
        res / dx.abs()
    } else {
        f64::INFINITY
    };
    let t_delta_y = if dy != 0.0 {
        res / dy.abs()
    } else {
        f64::INFINITY
    };

    loop {
        let t = if t_max_x < t_max_y {
            ix += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            iy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t > max_range {
            return None;
        }
        match grid.get(ix, iy) {
            None => return None,
            Some(true) => return Some(t.max(0.0)),
            Some(false) => {}
        }
    }
}

pub fn lidar_scan<R: Rng>(
    grid: &OccupancyGrid,
    pose: &Pose2D,
    cfg: &LidarConfig,
    stamp: f64,
    rng: &mut R,
) -> Result<LaserScan, SensorError> {
    if grid.occupied_at_point(pose.x, pose.y) {
        return Err(SensorError::OriginOccupied {
            x: pose.x,
            y: pose.y,
        });
    }
    let inc = cfg.angle_increment();
    let no_return = cfg.range_max + 1.0;
    let noise =
        (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("positive sigma"));
    let ranges = (0..cfg.beams)
        .map(|i| {
            let a = pose.theta + cfg.angle_min + i as f64 * inc;
            match raycast(grid, pose.x, pose.y, a, cfg.range_max) {
                Some(r) => match &noise {
                    Some(n) => (r + n.sample(rng)).clamp(1e-3, cfg.range_max),
                    None => r,
                },
                None => no_return,
            }
        })
        .collect();
    Ok(LaserScan {
        angle_min: cfg.angle_min,
        angle_max: cfg.angle_max,
        angle_increment: inc,
        range_max: cfg.range_max,
        ranges,
        stamp,
    })
}
