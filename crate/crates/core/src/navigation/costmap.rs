use crate::world::OccupancyGrid;

/// Planning view of a map: the lethal cells from the source grid plus the
/// cells blocked by inflating them. Inflation always starts from the lethal
/// layer, so re-inflating at the same radius changes nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    lethal: OccupancyGrid,
    blocked: Vec<bool>,
    radius: f64,
}

impl Costmap {
    pub fn from_grid(grid: &OccupancyGrid) -> Self {
        let blocked = (0..grid.height() as i64)
            .flat_map(|iy| (0..grid.width() as i64).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| grid.is_occupied(ix, iy))
            .collect();
        Self {
            lethal: grid.clone(),
            blocked,
            radius: 0.0,
        }
    }

    pub fn lethal(&self) -> &OccupancyGrid {
        &self.lethal
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn width(&self) -> usize {
        self.lethal.width()
    }

    pub fn height(&self) -> usize {
        self.lethal.height()
    }

    pub fn resolution(&self) -> f64 {
        self.lethal.resolution()
    }

    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        self.lethal.in_bounds(ix, iy)
    }

    pub fn is_blocked(&self, ix: i64, iy: i64) -> bool {
        !self.is_free(ix, iy)
    }

    /// In-bounds and neither lethal nor inflated.
    pub fn is_free(&self, ix: i64, iy: i64) -> bool {
        self.in_bounds(ix, iy) && !self.blocked[iy as usize * self.width() + ix as usize]
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        self.lethal.cell_of(x, y)
    }

    pub fn cell_center(&self, ix: i64, iy: i64) -> (f64, f64) {
        self.lethal.cell_center(ix, iy)
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|&&b| b).count()
    }

    /// The blocked layer as a plain occupancy grid.
    pub fn to_grid(&self) -> OccupancyGrid {
        let mut g = self.lethal.clone();
        for iy in 0..self.height() {
            for ix in 0..self.width() {
                g.set(ix, iy, self.blocked[iy * self.width() + ix]);
            }
        }
        g
    }
}

impl From<&OccupancyGrid> for Costmap {
    fn from(grid: &OccupancyGrid) -> Self {
        Costmap::from_grid(grid)
    }
}

/// Blocks every cell whose center lies strictly closer than `radius` to the
/// center of a lethal cell.
pub fn inflate_grid(map: &Costmap, radius: f64) -> Costmap {
    let radius = radius.max(0.0);
    let res = map.resolution();
    let reach = (radius / res).ceil() as i64;
    let offsets: Vec<(i64, i64)> = (-reach..=reach)
        .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64).sqrt() * res < radius)
        .collect();

    let (w, h) = (map.width() as i64, map.height() as i64);
    let mut blocked = vec![false; map.width() * map.height()];
    for iy in 0..h {
        for ix in 0..w {
            if !map.lethal.is_occupied(ix, iy) {
                continue;
            }
            blocked[(iy * w + ix) as usize] = true;
            for &(dx, dy) in &offsets {
                let (nx, ny) = (ix + dx, iy + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    blocked[(ny * w + nx) as usize] = true;
                }
            }
        }
    }
    Costmap {
        lethal: map.lethal.clone(),
        blocked,
        radius,
    }
}
