//! Pure-pursuit path following and the scan-based forward stop.

use std::f64::consts::FRAC_PI_2;

use super::planner::Path;
use super::NavConfig;
use crate::kinematics::{normalize_angle, Pose2D, Twist2D};
use crate::world::LaserScan;

/// Where the robot is relative to a path.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Progress {
    /// Segment holding the nearest point (index of its first waypoint).
    segment: usize,
    /// Arc length of the nearest point from the path start.
    arc: f64,
}

fn cumulative(points: &[(f64, f64)]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(points.len());
    let mut s = 0.0;
    acc.push(0.0);
    for w in points.windows(2) {
        s += (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        acc.push(s);
    }
    acc
}

fn nearest(points: &[(f64, f64)], cum: &[f64], x: f64, y: f64) -> Progress {
    let mut best = (
        f64::INFINITY,
        Progress {
            segment: 0,
            arc: 0.0,
        },
    );
    for (k, w) in points.windows(2).enumerate() {
        let (ax, ay) = w[0];
        let (bx, by) = w[1];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let u = if len2 > 0.0 {
            (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (ax + u * dx, ay + u * dy);
        let d = (x - px).hypot(y - py);
        // Ties go to the later segment so a robot on a vertex moves on.
        if d <= best.0 + 1e-12 {
            best = (
                d,
                Progress {
                    segment: k,
                    arc: cum[k] + u * len2.sqrt(),
                },
            );
        }
    }
    best.1
}

fn point_at(points: &[(f64, f64)], cum: &[f64], s: f64) -> (f64, f64) {
    let last = points.len() - 1;
    if s >= cum[last] {
        return points[last];
    }
    let k = cum
        .partition_point(|&c| c <= s)
        .saturating_sub(1)
        .min(last - 1);
    let seg = cum[k + 1] - cum[k];
    let u = if seg > 0.0 { (s - cum[k]) / seg } else { 0.0 };
    let (ax, ay) = points[k];
    let (bx, by) = points[k + 1];
    (ax + u * (bx - ax), ay + u * (by - ay))
}

/// Heading change at interior waypoint `i`.
fn turn_angle(points: &[(f64, f64)], i: usize) -> f64 {
    let (a, b, c) = (points[i - 1], points[i], points[i + 1]);
    let h1 = (b.1 - a.1).atan2(b.0 - a.0);
    let h2 = (c.1 - b.1).atan2(c.0 - b.0);
    normalize_angle(h2 - h1).abs()
}

/// Waypoints the robot must stop and pivot at: the start, every vertex
/// turning more than `corner_angle`, and the goal.
fn stop_vertices(points: &[(f64, f64)], corner_angle: f64) -> Vec<usize> {
    let n = points.len();
    let mut stops = vec![0];
    stops.extend((1..n.saturating_sub(1)).filter(|&i| turn_angle(points, i) > corner_angle));
    if n > 1 {
        stops.push(n - 1);
    }
    stops
}

fn rotate_toward(err: f64, cfg: &NavConfig) -> Twist2D {
    let mag = (err.abs() * cfg.rotate_gain).clamp(cfg.rotate_w_min, cfg.rotate_w_max);
    Twist2D::new(0.0, mag.copysign(err))
}

fn align_to_goal(pose: &Pose2D, path: &Path, cfg: &NavConfig) -> Twist2D {
    match path.goal_yaw {
        Some(yaw) => {
            let err = normalize_angle(yaw - pose.theta);
            if err.abs() <= cfg.goal_yaw_tol {
                Twist2D::ZERO
            } else {
                rotate_toward(err, cfg)
            }
        }
        None => Twist2D::ZERO,
    }
}

/// Steers toward the point `lookahead` metres further along the path.
///
/// The lookahead never runs past the next sharp vertex, so the robot drives
/// each straight leg to its end and turns on the spot instead of cutting
/// the corner. Near the goal it aligns to the goal heading and stops.
pub fn pure_pursuit(pose: &Pose2D, path: &Path, cfg: &NavConfig) -> Twist2D {
    let pts = &path.waypoints;
    let goal = path.goal();
    if pts.len() == 1 || pose.distance_to(goal.0, goal.1) <= cfg.goal_pos_tol {
        if pose.distance_to(goal.0, goal.1) <= cfg.goal_pos_tol {
            return align_to_goal(pose, path, cfg);
        }
        // Single-waypoint path but not there yet: head straight for it.
        return pursue_point(pose, goal, goal, true, cfg);
    }

    let cum = cumulative(pts);
    let here = nearest(pts, &cum, pose.x, pose.y);
    let stops = stop_vertices(pts, cfg.corner_angle);

    // A stop vertex counts as reached once the robot is within the capture
    // radius; pivoting happens there.
    let mut at_pivot = false;
    let mut target = pts.len() - 1;
    for &v in &stops {
        let (vx, vy) = pts[v];
        if pose.distance_to(vx, vy) <= cfg.capture_radius {
            at_pivot = v < pts.len() - 1;
            continue;
        }
        if cum[v] > here.arc {
            target = v;
            break;
        }
    }
    if at_pivot {
        // Skip any stop vertex still within capture range of the pivot.
        if let Some(&v) = stops.iter().find(|&&v| {
            cum[v] > here.arc && pose.distance_to(pts[v].0, pts[v].1) > cfg.capture_radius
        }) {
            target = v;
        }
    }

    let s_look = (here.arc + cfg.lookahead).min(cum[target]);
    let look = if here.arc >= cum[target] {
        pts[target]
    } else {
        point_at(pts, &cum, s_look)
    };
    pursue_point(pose, look, pts[target], at_pivot, cfg)
}

fn pursue_point(
    pose: &Pose2D,
    look: (f64, f64),
    stop: (f64, f64),
    at_pivot: bool,
    cfg: &NavConfig,
) -> Twist2D {
    let (dx, dy) = (look.0 - pose.x, look.1 - pose.y);
    let dist = dx.hypot(dy);
    if dist < 1e-9 {
        return Twist2D::ZERO;
    }
    let alpha = normalize_angle(dy.atan2(dx) - pose.theta);
    if alpha.abs() > FRAC_PI_2 || (at_pivot && alpha.abs() > cfg.pivot_tol) {
        return rotate_toward(alpha, cfg);
    }
    let to_stop = pose.distance_to(stop.0, stop.1);
    let v = (cfg.cruise_v * alpha.cos().max(0.2))
        .min((cfg.approach_gain * to_stop).max(cfg.approach_v_min))
        .min(cfg.cruise_v);
    let kappa = 2.0 * alpha.sin() / dist;
    let w = (kappa * v).clamp(-cfg.max_w, cfg.max_w);
    Twist2D::new(v, w)
}

/// Smallest return within the forward sector, if any.
pub fn front_min_range(scan: &LaserScan, sector: f64) -> Option<f64> {
    scan.ranges
        .iter()
        .enumerate()
        .filter(|&(i, &r)| scan.beam_angle(i).abs() <= sector && scan.is_return(r))
        .map(|(_, &r)| r)
        .min_by(|a, b| a.total_cmp(b))
}

/// Zeroes forward motion when something sits inside the stop range ahead.
/// Rotation and reversing pass through.
pub fn safety_gate(scan: &LaserScan, t: Twist2D, cfg: &NavConfig) -> Twist2D {
    match front_min_range(scan, cfg.safety_sector) {
        Some(r) if r < cfg.safety_stop_range && t.v > 0.0 => Twist2D::new(0.0, t.w),
        _ => t,
    }
}
