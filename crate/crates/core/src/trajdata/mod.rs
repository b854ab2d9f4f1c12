//! Trajectory data model: vehicle states, per-vehicle tracks, lane geometry,
//! sample windows and the rigid-transform normalization used by both stages.

mod lanes;
mod transform;
mod window;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

pub use lanes::{distances_to_lines, LaneGeometry, LaneLine, LineDistance, LineKind};
pub use transform::{normalize, prepare, split_indices, PreparedSample, RigidTransform};
pub use window::{expected_window_count, make_windows, Neighbor, NeighborRule, TrajectoryWindow, WindowReport};

/// Sanity bound on highway speeds, m/s.
pub const MAX_SPEED: f64 = 100.0;

/// Position and velocity of one vehicle at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl VehicleState {
    pub const fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn is_valid(&self) -> bool {
        geom::is_finite(self.position) && geom::is_finite(self.velocity) && geom::norm(self.velocity) < MAX_SPEED
    }
}

/// One parsed input row, before grouping into tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub frame: i64,
    pub vehicle_id: u64,
    pub position: Vec2,
    pub velocity: Option<Vec2>,
    pub lane_id: Option<i32>,
    /// 1-based source line, for error messages.
    pub line: usize,
}

/// A gap-free run of frames for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub vehicle_id: u64,
    pub first_frame: i64,
    pub states: Vec<VehicleState>,
    pub lane_ids: Vec<Option<i32>>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_frame(&self) -> i64 {
        self.first_frame + self.states.len() as i64 - 1
    }

    pub fn state_at(&self, frame: i64) -> Option<&VehicleState> {
        let idx = frame.checked_sub(self.first_frame)?;
        usize::try_from(idx).ok().and_then(|i| self.states.get(i))
    }
}

/// Immutable collection of tracks sampled at a fixed frame interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub tracks: Vec<Track>,
    /// Number of frame gaps that split a vehicle into several tracks.
    pub gaps: usize,
}

impl Dataset {
    /// Groups rows by vehicle, splits at frame gaps and fills in velocities.
    ///
    /// Rows of one vehicle must appear with strictly increasing frame numbers.
    /// Velocities are derived by finite differences for any track where at
    /// least one row lacks them.
    pub fn from_rows(rows: Vec<FrameRow>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let mut by_vehicle: BTreeMap<u64, Vec<FrameRow>> = BTreeMap::new();
        for row in rows {
            if !geom::is_finite(row.position) || row.velocity.is_some_and(|v| !geom::is_finite(v)) {
                return Err(Error::Data(format!("line {}: non-finite coordinate", row.line)));
            }
            let rows = by_vehicle.entry(row.vehicle_id).or_default();
            if let Some(prev) = rows.last() {
                if row.frame <= prev.frame {
                    return Err(Error::Data(format!(
                        "line {}: frame {} for vehicle {} does not follow frame {}",
                        row.line, row.frame, row.vehicle_id, prev.frame
                    )));
                }
            }
            rows.push(row);
        }

        let mut tracks = Vec::new();
        let mut gaps = 0;
        for (vehicle_id, rows) in by_vehicle {
            let mut start = 0;
            for i in 1..=rows.len() {
                let split = i == rows.len() || rows[i].frame != rows[i - 1].frame + 1;
                if !split {
                    continue;
                }
                if i < rows.len() {
                    gaps += 1;
                }
                tracks.push(build_track(vehicle_id, &rows[start..i], dt)?);
                start = i;
            }
        }
        Ok(Self { dt, tracks, gaps })
    }

    pub fn vehicle_count(&self) -> usize {
        let mut ids: Vec<u64> = self.tracks.iter().map(|t| t.vehicle_id).collect();
        ids.dedup();
        ids.len()
    }
}

fn build_track(vehicle_id: u64, rows: &[FrameRow], dt: f64) -> Result<Track> {
    let positions: Vec<Vec2> = rows.iter().map(|r| r.position).collect();
    let velocities: Vec<Vec2> = if rows.iter().all(|r| r.velocity.is_some()) {
        rows.iter().filter_map(|r| r.velocity).collect()
    } else {
        finite_difference_velocities(&positions, dt)
    };
    let mut states = Vec::with_capacity(rows.len());
    for (row, (&position, &velocity)) in rows.iter().zip(positions.iter().zip(&velocities)) {
        let state = VehicleState::new(position, velocity);
        if !state.is_valid() {
            return Err(Error::Data(format!(
                "line {}: vehicle {} state fails the speed sanity bound ({} m/s)",
                row.line, vehicle_id, MAX_SPEED
            )));
        }
        states.push(state);
    }
    Ok(Track {
        vehicle_id,
        first_frame: rows[0].frame,
        states,
        lane_ids: rows.iter().map(|r| r.lane_id).collect(),
    })
}

/// Central differences in the interior, one-sided differences at both ends.
/// A single sample gets zero velocity.
pub fn finite_difference_velocities(positions: &[Vec2], dt: f64) -> Vec<Vec2> {
    let n = positions.len();
    match n {
        0 => Vec::new(),
        1 => alloc::vec![[0.0, 0.0]],
        _ => (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
                let span = (hi - lo) as f64 * dt;
                geom::scale(geom::sub(positions[hi], positions[lo]), 1.0 / span)
            })
            .collect(),
    }
}
