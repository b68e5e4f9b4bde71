//! A* over the 8-connected cell graph followed by line-of-sight smoothing.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::costmap::Costmap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{which} point ({x:.3}, {y:.3}) is not in free space")]
    InvalidEndpoint { which: &'static str, x: f64, y: f64 },
    #[error("no path from ({0:.3}, {1:.3}) to ({2:.3}, {3:.3})")]
    NoPath(f64, f64, f64, f64),
}

/// Exact grid path cost as counts of straight and diagonal moves. Two costs
/// are equal exactly when both counts match (sqrt 2 is irrational).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GridCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl GridCost {
    pub fn value(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    fn step(self, diagonal: bool) -> Self {
        if diagonal {
            Self {
                diagonal: self.diagonal + 1,
                ..self
            }
        } else {
            Self {
                straight: self.straight + 1,
                ..self
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<(f64, f64)>,
    pub total_length: f64,
    /// Cost of the underlying grid path before smoothing, in cells.
    pub grid_cost: GridCost,
    /// Heading to hold on arrival, if any.
    pub goal_yaw: Option<f64>,
}

impl Path {
    pub fn from_waypoints(waypoints: Vec<(f64, f64)>) -> Self {
        let total_length = polyline_length(&waypoints);
        Self {
            waypoints,
            total_length,
            grid_cost: GridCost::default(),
            goal_yaw: None,
        }
    }

    pub fn with_goal_yaw(mut self, yaw: f64) -> Self {
        self.goal_yaw = Some(yaw);
        self
    }

    pub fn goal(&self) -> (f64, f64) {
        *self.waypoints.last().expect("paths are never empty")
    }
}

pub fn polyline_length(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .sum()
}

/// Neighbour offsets: four cardinal moves then four diagonals.
pub const NEIGHBOURS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Whether the move from `(ix, iy)` by `(dx, dy)` is allowed: target free,
/// and for diagonals both flanking cardinal cells free.
pub fn move_allowed(map: &Costmap, ix: i64, iy: i64, dx: i64, dy: i64) -> bool {
    if !map.is_free(ix + dx, iy + dy) {
        return false;
    }
    dx == 0 || dy == 0 || (map.is_free(ix + dx, iy) && map.is_free(ix, iy + dy))
}

pub fn octile(a: (i64, i64), b: (i64, i64)) -> f64 {
    let dx = (a.0 - b.0).abs();
    let dy = (a.1 - b.1).abs();
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) as f64 + SQRT_2 * lo as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    h: f64,
    node: usize,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, then h, then node index for determinism.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest 8-connected cell path between two cells, with its exact cost.
pub fn astar_cells(
    map: &Costmap,
    start: (i64, i64),
    goal: (i64, i64),
) -> Option<(Vec<(i64, i64)>, GridCost)> {
    if !map.is_free(start.0, start.1) || !map.is_free(goal.0, goal.1) {
        return None;
    }
    let w = map.width() as i64;
    let idx = |c: (i64, i64)| (c.1 * w + c.0) as usize;
    let n = map.width() * map.height();
    let mut g: Vec<Option<GridCost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    g[idx(start)] = Some(GridCost::default());
    let h0 = octile(start, goal);
    open.push(OpenEntry {
        f: h0,
        h: h0,
        node: idx(start),
    });

    while let Some(OpenEntry { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        closed[node] = true;
        let cur = ((node as i64) % w, (node as i64) / w);
        let cur_g = g[node].expect("queued nodes have a cost");
        if cur == goal {
            let mut cells = vec![cur];
            let mut at = node;
            while parent[at] != usize::MAX {
                at = parent[at];
                cells.push(((at as i64) % w, (at as i64) / w));
            }
            cells.reverse();
            return Some((cells, cur_g));
        }
        for &(dx, dy) in &NEIGHBOURS {
            if !move_allowed(map, cur.0, cur.1, dx, dy) {
                continue;
            }
            let next = (cur.0 + dx, cur.1 + dy);
            let ni = idx(next);
            if closed[ni] {
                continue;
            }
            let cand = cur_g.step(dx != 0 && dy != 0);
            if g[ni].is_none_or(|old| cand.value() < old.value()) {
                g[ni] = Some(cand);
                parent[ni] = node;
                let h = octile(next, goal);
                open.push(OpenEntry {
                    f: cand.value() + h,
                    h,
                    node: ni,
                });
            }
        }
    }
    None
}

/// Plans from `start` to `goal` (world coordinates) on the blocked layer.
pub fn plan_path(map: &Costmap, start: (f64, f64), goal: (f64, f64)) -> Result<Path, PlanError> {
    let s = map.cell_of(start.0, start.1);
    let g = map.cell_of(goal.0, goal.1);
    if !map.is_free(s.0, s.1) {
        return Err(PlanError::InvalidEndpoint {
            which: "start",
            x: start.0,
            y: start.1,
        });
    }
    if !map.is_free(g.0, g.1) {
        return Err(PlanError::InvalidEndpoint {
            which: "goal",
            x: goal.0,
            y: goal.1,
        });
    }
    if s == g {
        return Ok(Path {
            waypoints: vec![goal],
            total_length: 0.0,
            grid_cost: GridCost::default(),
            goal_yaw: None,
        });
    }
    let (cells, cost) =
        astar_cells(map, s, g).ok_or(PlanError::NoPath(start.0, start.1, goal.0, goal.1))?;
    let kept = shortcut(map, &cells);
    let mut waypoints: Vec<(f64, f64)> = kept
        .iter()
        .map(|&(ix, iy)| map.cell_center(ix, iy))
        .collect();
    *waypoints.first_mut().expect("non-empty") = start;
    *waypoints.last_mut().expect("non-empty") = goal;
    Ok(Path {
        total_length: polyline_length(&waypoints),
        waypoints,
        grid_cost: cost,
        goal_yaw: None,
    })
}

/// Greedy line-of-sight reduction: from each kept cell jump to the farthest
/// later cell that is visible.
fn shortcut(map: &Costmap, cells: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut kept = vec![cells[0]];
    let mut anchor = 0;
    while anchor < cells.len() - 1 {
        let mut next = anchor + 1;
        for j in (anchor + 2..cells.len()).rev() {
            if line_of_sight(map, cells[anchor], cells[j]) {
                next = j;
                break;
            }
        }
        kept.push(cells[next]);
        anchor = next;
    }
    kept
}

/// Exact visibility test between two cell centers.
///
/// In lattice coordinates cell centers are integer points. Every point of the
/// segment lies on a lattice vertex, on an edge between two vertices, or in
/// the interior of a unit square; the segment is visible when all vertices
/// of every such face it touches are free. That keeps the whole segment as
/// far from lethal cells as the free cell centers themselves.
pub fn line_of_sight(map: &Costmap, a: (i64, i64), b: (i64, i64)) -> bool {
    let (ax, ay) = (a.0 as f64, a.1 as f64);
    let (dx, dy) = ((b.0 - a.0) as f64, (b.1 - a.1) as f64);

    let mut ts = vec![0.0, 1.0];
    let mut crossings = |d: f64, from: i64, to: i64| {
        for k in from.min(to) + 1..from.max(to) {
            ts.push((k - from) as f64 / d);
        }
    };
    crossings(dx, a.0, b.0);
    crossings(dy, a.1, b.1);
    ts.sort_by(|p, q| p.total_cmp(q));
    ts.dedup_by(|p, q| (*p - *q).abs() < 1e-12);

    let face_free = |t: f64| {
        let (u, v) = (ax + dx * t, ay + dy * t);
        let span = |c: f64| {
            let r = c.round();
            if (c - r).abs() < 1e-9 {
                (r as i64, r as i64)
            } else {
                (c.floor() as i64, c.floor() as i64 + 1)
            }
        };
        let (x0, x1) = span(u);
        let (y0, y1) = span(v);
        (y0..=y1).all(|iy| (x0..=x1).all(|ix| map.is_free(ix, iy)))
    };

    ts.windows(2)
        .all(|w| face_free(w[0]) && face_free((w[0] + w[1]) / 2.0))
        && face_free(1.0)
}
