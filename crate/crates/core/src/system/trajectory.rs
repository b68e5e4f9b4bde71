use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::supervisor::Mode;

pub const TRAJECTORY_HEADER: &str = "t,x,y,theta,mode,battery_v,collisions";
const HASH_PREFIX: &str = "# trajectory_hash=";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub mode: Mode,
    pub battery_v: f64,
    pub collisions: u64,
}

impl TrajectoryRow {
    /// Fixed-precision CSV line (no newline). The hash covers exactly this text.
    pub fn csv_line(&self) -> String {
        format!(
            "{:.2},{:.6},{:.6},{:.6},{},{:.4},{}",
            self.t, self.x, self.y, self.theta, self.mode, self.battery_v, self.collisions
        )
    }
}

/// Ordered trajectory rows plus a running SHA-256 over their CSV text.
#[derive(Debug, Clone)]
pub struct Trajectory {
    rows: Vec<TrajectoryRow>,
    hasher: Sha256,
}

impl Default for Trajectory {
    fn default() -> Self {
        let mut hasher = Sha256::new();
        hasher.update(TRAJECTORY_HEADER.as_bytes());
        hasher.update(b"\n");
        Self {
            rows: Vec::new(),
            hasher,
        }
    }
}

impl Trajectory {
    pub fn push(&mut self, row: TrajectoryRow) {
        self.hasher.update(row.csv_line().as_bytes());
        self.hasher.update(b"\n");
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Lowercase hex SHA-256 of the header and all rows.
    pub fn hash(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }

    /// Header, one line per row, then a comment line carrying the hash.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 2));
        s.push_str(TRAJECTORY_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        let _ = writeln!(s, "{HASH_PREFIX}{}", self.hash());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("missing or unexpected header line")]
    BadHeader,
    #[error("line {0}: expected 7 fields")]
    BadRow(usize),
    #[error("missing trajectory hash footer")]
    MissingHash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCheck {
    pub rows: usize,
    pub stored_hash: String,
    pub computed_hash: String,
    /// Final row as text, if any.
    pub last_row: Option<String>,
}

impl TrajectoryCheck {
    pub fn verified(&self) -> bool {
        self.stored_hash == self.computed_hash
    }
}

/// Recomputes the hash of a trajectory CSV and compares it with its footer.
pub fn verify_trajectory_csv(text: &str) -> Result<TrajectoryCheck, TrajectoryError> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(TrajectoryError::BadHeader);
    }
    let mut hasher = Sha256::new();
    hasher.update(TRAJECTORY_HEADER.as_bytes());
    hasher.update(b"\n");
    let mut rows = 0;
    let mut stored = None;
    let mut last_row = None;
    for (i, line) in lines.enumerate() {
        if let Some(h) = line.strip_prefix(HASH_PREFIX) {
            stored = Some(h.trim().to_string());
            break;
        }
        if line.split(',').count() != 7 {
            return Err(TrajectoryError::BadRow(i + 2));
        }
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        rows += 1;
        last_row = Some(line.to_string());
    }
    Ok(TrajectoryCheck {
        rows,
        stored_hash: stored.ok_or(TrajectoryError::MissingHash)?,
        computed_hash: hex::encode(hasher.finalize()),
        last_row,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tick: u64) -> TrajectoryRow {
        TrajectoryRow {
            tick,
            t: tick as f64 * 0.01,
            x: 1.0,
            y: -2.5,
            theta: 0.25,
            mode: Mode::Manual,
            battery_v: 25.5,
            collisions: 0,
        }
    }

    #[test]
    fn csv_round_trip_verifies() {
        let mut t = Trajectory::default();
        for k in 1..=3 {
            t.push(row(k));
        }
        let csv = t.to_csv();
        assert!(csv.contains("\n0.01,1.000000,-2.500000,0.250000,Manual,25.5000,0\n"));
        let check = verify_trajectory_csv(&csv).unwrap();
        assert!(check.verified());
        assert_eq!(check.rows, 3);
        assert_eq!(check.computed_hash, t.hash());
    }

    #[test]
    fn tampering_is_detected() {
        let mut t = Trajectory::default();
        t.push(row(1));
        let csv = t.to_csv().replace("-2.500000", "-2.500001");
        assert!(!verify_trajectory_csv(&csv).unwrap().verified());
        assert_eq!(
            verify_trajectory_csv("x\n"),
            Err(TrajectoryError::BadHeader)
        );
        let no_footer = format!("{TRAJECTORY_HEADER}\n");
        assert_eq!(
            verify_trajectory_csv(&no_footer),
            Err(TrajectoryError::MissingHash)
        );
    }

    #[test]
    fn empty_trajectory_hash_is_stable() {
        assert_eq!(Trajectory::default().hash(), Trajectory::default().hash());
        assert!(Trajectory::default().is_empty());
    }
}
