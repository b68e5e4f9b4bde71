use std::collections::BTreeMap;

use thiserror::Error;

use crate::kinematics::Pose2D;

pub const DEFAULT_RESOLUTION: f64 = 0.05;

pub const LABEL_DOCK: &str = "DOCK";
pub const LABEL_BED: &str = "BED";
pub const LABEL_TOILET: &str = "TOILET";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line {line}: row has {found} columns, expected {expected}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: unknown map symbol {symbol:?}")]
    UnknownSymbol {
        line: usize,
        column: usize,
        symbol: char,
    },
    #[error("line {line}, column {column}: duplicate {label} marker")]
    DuplicateMarker {
        line: usize,
        column: usize,
        label: &'static str,
    },
    #[error("required {0} marker missing")]
    MissingMarker(&'static str),
}

/// Binary occupancy map. Cell `(0, 0)` is the bottom-left cell; `origin` is
/// the world position of that cell's lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    cells: Vec<bool>,
    pub named_poses: BTreeMap<String, Pose2D>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self {
            width,
            height,
            resolution,
            origin: (0.0, 0.0),
            cells: vec![false; width * height],
            named_poses: BTreeMap::new(),
        }
    }

    pub fn with_origin(mut self, x: f64, y: f64) -> Self {
        self.origin = (x, y);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    /// Occupancy of a cell; `None` outside the map.
    pub fn get(&self, ix: i64, iy: i64) -> Option<bool> {
        self.in_bounds(ix, iy)
            .then(|| self.cells[self.index(ix as usize, iy as usize)])
    }

    pub fn is_occupied(&self, ix: i64, iy: i64) -> bool {
        self.get(ix, iy).unwrap_or(false)
    }

    /// True for in-bounds free cells only.
    pub fn is_free(&self, ix: i64, iy: i64) -> bool {
        self.get(ix, iy) == Some(false)
    }

    pub fn set(&mut self, ix: usize, iy: usize, occupied: bool) {
        let i = self.index(ix, iy);
        self.cells[i] = occupied;
    }

    /// Marks every cell whose center falls in the axis-aligned box.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, occupied: bool) {
        for iy in 0..self.height {
            for ix in 0..self.width {
                let (cx, cy) = self.cell_center(ix as i64, iy as i64);
                if cx >= x0.min(x1) && cx <= x0.max(x1) && cy >= y0.min(y1) && cy <= y0.max(y1) {
                    self.set(ix, iy, occupied);
                }
            }
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin.0) / self.resolution).floor() as i64,
            ((y - self.origin.1) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, ix: i64, iy: i64) -> (f64, f64) {
        (
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn occupied_at_point(&self, x: f64, y: f64) -> bool {
        let (ix, iy) = self.cell_of(x, y);
        self.is_occupied(ix, iy)
    }

    pub fn named(&self, label: &str) -> Option<Pose2D> {
        self.named_poses.get(label).copied()
    }

    /// Distance from a point to the nearest occupied cell square, searching
    /// at most `max_range` away. Returns `None` if nothing is that close.
    pub fn clearance(&self, x: f64, y: f64, max_range: f64) -> Option<f64> {
        let r = self.resolution;
        let (cx, cy) = self.cell_of(x, y);
        let span = (max_range / r).ceil() as i64 + 1;
        let mut best: Option<f64> = None;
        for iy in (cy - span).max(0)..=(cy + span).min(self.height as i64 - 1) {
            for ix in (cx - span).max(0)..=(cx + span).min(self.width as i64 - 1) {
                if !self.cells[self.index(ix as usize, iy as usize)] {
                    continue;
                }
                let d = self.point_to_cell_distance(x, y, ix, iy);
                if d <= max_range && best.is_none_or(|b| d < b) {
                    best = Some(d);
                }
            }
        }
        best
    }

    pub fn point_to_cell_distance(&self, x: f64, y: f64, ix: i64, iy: i64) -> f64 {
        let r = self.resolution;
        let x0 = self.origin.0 + ix as f64 * r;
        let y0 = self.origin.1 + iy as f64 * r;
        let dx = (x0 - x).max(0.0).max(x - (x0 + r));
        let dy = (y0 - y).max(0.0).max(y - (y0 + r));
        dx.hypot(dy)
    }

    /// True when a disc of `radius` at (x, y) overlaps any occupied cell.
    pub fn disc_overlaps(&self, x: f64, y: f64, radius: f64) -> bool {
        let (x0, y0) = self.cell_of(x - radius, y - radius);
        let (x1, y1) = self.cell_of(x + radius, y + radius);
        for iy in y0.max(0)..=y1.min(self.height as i64 - 1) {
            for ix in x0.max(0)..=x1.min(self.width as i64 - 1) {
                if self.cells[self.index(ix as usize, iy as usize)]
                    && self.point_to_cell_distance(x, y, ix, iy) < radius
                {
                    return true;
                }
            }
        }
        false
    }

    /// Renders the grid in the ASCII map format.
    pub fn to_ascii(&self) -> String {
        let mut markers = BTreeMap::new();
        for (label, pose) in &self.named_poses {
            if let Some(sym) = marker_symbol(label) {
                markers.insert(self.cell_of(pose.x, pose.y), sym);
            }
        }
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for iy in (0..self.height as i64).rev() {
            for ix in 0..self.width as i64 {
                let ch = match markers.get(&(ix, iy)) {
                    Some(&c) => c,
                    None if self.is_occupied(ix, iy) => '#',
                    None => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

fn marker_label(symbol: char) -> Option<&'static str> {
    match symbol {
        'D' => Some(LABEL_DOCK),
        'B' => Some(LABEL_BED),
        'T' => Some(LABEL_TOILET),
        _ => None,
    }
}

fn marker_symbol(label: &str) -> Option<char> {
    match label {
        LABEL_DOCK => Some('D'),
        LABEL_BED => Some('B'),
        LABEL_TOILET => Some('T'),
        _ => None,
    }
}

/// Parses the ASCII map format: `#` occupied, `.` free, `D`/`B`/`T` mark the
/// dock, bedside and toilet poses (free cells, heading 0). The first text
/// line is the top row. Only the dock marker is mandatory.
pub fn load_map(text: &str) -> Result<OccupancyGrid, MapError> {
    load_map_with_resolution(text, DEFAULT_RESOLUTION)
}

pub fn load_map_with_resolution(text: &str, resolution: f64) -> Result<OccupancyGrid, MapError> {
    let rows: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    let rows: Vec<&str> = {
        let end = rows
            .iter()
            .rposition(|r| !r.is_empty())
            .ok_or(MapError::Empty)?;
        rows[..=end].to_vec()
    };
    let width = rows[0].chars().count();
    if width == 0 {
        return Err(MapError::Empty);
    }
    let height = rows.len();
    let mut grid = OccupancyGrid::new(width, height, resolution);
    let mut seen: BTreeMap<&'static str, ()> = BTreeMap::new();

    for (row_idx, row) in rows.iter().enumerate() {
        let line = row_idx + 1;
        let found = row.chars().count();
        if found != width {
            return Err(MapError::Ragged {
                line,
                expected: width,
                found,
            });
        }
        let iy = height - 1 - row_idx;
        for (col_idx, ch) in row.chars().enumerate() {
            let column = col_idx + 1;
            match ch {
                '#' => grid.set(col_idx, iy, true),
                '.' => {}
                _ => match marker_label(ch) {
                    Some(label) => {
                        if seen.insert(label, ()).is_some() {
                            return Err(MapError::DuplicateMarker {
                                line,
                                column,
                                label,
                            });
                        }
                        let (x, y) = grid.cell_center(col_idx as i64, iy as i64);
                        grid.named_poses
                            .insert(label.to_string(), Pose2D::new(x, y, 0.0));
                    }
                    None => {
                        return Err(MapError::UnknownSymbol {
                            line,
                            column,
                            symbol: ch,
                        })
                    }
                },
            }
        }
    }
    if !seen.contains_key(LABEL_DOCK) {
        return Err(MapError::MissingMarker(LABEL_DOCK));
    }
    Ok(grid)
}
