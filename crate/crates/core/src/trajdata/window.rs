use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{Dataset, VehicleState};
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

/// Selects interacting vehicles at the last observed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborRule {
    /// Maximum longitudinal separation, m.
    pub longitudinal: f64,
    /// Maximum lateral separation, m. 1.5 lane widths admits the adjacent lane.
    pub lateral: f64,
    pub max_neighbors: usize,
}

impl Default for NeighborRule {
    fn default() -> Self {
        Self {
            longitudinal: 50.0,
            lateral: 1.5 * 3.7,
            max_neighbors: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub vehicle_id: u64,
    /// Observed states over the same frames as the target's observed segment.
    pub observed: Vec<VehicleState>,
}

/// One training or evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub vehicle_id: u64,
    /// Frame number of the first observed state.
    pub start_frame: i64,
    pub observed: Vec<VehicleState>,
    pub future: Vec<VehicleState>,
    /// Present neighbors only, nearest first; padding is done by consumers.
    pub neighbors: Vec<Neighbor>,
    pub lane_ref: u32,
    pub dt: f64,
}

impl TrajectoryWindow {
    pub fn t_obs(&self) -> usize {
        self.observed.len()
    }

    pub fn t_pred(&self) -> usize {
        self.future.len()
    }

    pub fn last_observed(&self) -> &VehicleState {
        self.observed.last().expect("window has an observed segment")
    }

    /// Ground-truth goal: the final future position.
    pub fn goal(&self) -> Vec2 {
        self.future.last().expect("window has a future segment").position
    }

    pub fn future_positions(&self) -> Vec<Vec2> {
        self.future.iter().map(|s| s.position).collect()
    }

    pub fn observed_positions(&self) -> Vec<Vec2> {
        self.observed.iter().map(|s| s.position).collect()
    }

    /// Neighbor positions padded to `slots` with zeroed entries and a
    /// presence mask.
    pub fn padded_neighbors(&self, slots: usize) -> (Vec<Vec<Vec2>>, Vec<bool>) {
        let mut trajectories = Vec::with_capacity(slots);
        let mut mask = Vec::with_capacity(slots);
        for i in 0..slots {
            match self.neighbors.get(i) {
                Some(n) => {
                    trajectories.push(n.observed.iter().map(|s| s.position).collect());
                    mask.push(true);
                }
                None => {
                    trajectories.push(alloc::vec![[0.0, 0.0]; self.t_obs()]);
                    mask.push(false);
                }
            }
        }
        (trajectories, mask)
    }
}

/// Accounting for a windowing pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowReport {
    pub emitted: usize,
    /// Tracks shorter than `t_obs + t_pred`.
    pub skipped_tracks: usize,
    pub skipped_vehicle_ids: Vec<u64>,
}

/// Number of windows a track of `len` frames yields.
pub fn expected_window_count(len: usize, t_obs: usize, t_pred: usize, stride: usize) -> usize {
    let total = t_obs + t_pred;
    if len < total {
        0
    } else {
        (len - total) / stride + 1
    }
}

/// Cuts every track into fixed-length windows and attaches neighbors.
pub fn make_windows(
    dataset: &Dataset,
    t_obs: usize,
    t_pred: usize,
    stride: usize,
    rule: &NeighborRule,
) -> Result<(Vec<TrajectoryWindow>, WindowReport)> {
    if t_obs < 2 || t_pred < 1 || stride < 1 {
        return Err(Error::InvalidArgument(format!(
            "need t_obs >= 2, t_pred >= 1, stride >= 1 (got {t_obs}, {t_pred}, {stride})"
        )));
    }
    let mut by_frame: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (ti, track) in dataset.tracks.iter().enumerate() {
        for f in track.first_frame..=track.last_frame() {
            by_frame.entry(f).or_default().push(ti);
        }
    }

    let total = t_obs + t_pred;
    let mut windows = Vec::new();
    let mut report = WindowReport::default();
    for (ti, track) in dataset.tracks.iter().enumerate() {
        if track.len() < total {
            report.skipped_tracks += 1;
            report.skipped_vehicle_ids.push(track.vehicle_id);
            continue;
        }
        let mut start = 0;
        while start + total <= track.len() {
            let first = track.first_frame + start as i64;
            let last_obs = first + t_obs as i64 - 1;
            let me = track.states[start + t_obs - 1].position;
            let mut candidates: Vec<(f64, u64, usize)> = by_frame
                .get(&last_obs)
                .into_iter()
                .flatten()
                .copied()
                .filter(|&oi| oi != ti)
                .filter_map(|oi| {
                    let other = &dataset.tracks[oi];
                    if other.first_frame > first || other.last_frame() < last_obs {
                        return None;
                    }
                    let p = other.state_at(last_obs)?.position;
                    let d = geom::sub(p, me);
                    let inside = libm::fabs(d[0]) <= rule.longitudinal && libm::fabs(d[1]) <= rule.lateral;
                    inside.then(|| (geom::norm(d), other.vehicle_id, oi))
                })
                .collect();
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            candidates.truncate(rule.max_neighbors);

            let neighbors = candidates
                .into_iter()
                .map(|(_, vehicle_id, oi)| {
                    let other = &dataset.tracks[oi];
                    let off = (first - other.first_frame) as usize;
                    Neighbor {
                        vehicle_id,
                        observed: other.states[off..off + t_obs].to_vec(),
                    }
                })
                .collect();

            windows.push(TrajectoryWindow {
                vehicle_id: track.vehicle_id,
                start_frame: first,
                observed: track.states[start..start + t_obs].to_vec(),
                future: track.states[start + t_obs..start + total].to_vec(),
                neighbors,
                lane_ref: 0,
                dt: dataset.dt,
            });
            report.emitted += 1;
            start += stride;
        }
    }
    Ok((windows, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::FrameRow;

    fn straight(id: u64, frames: i64, y: f64, speed: f64) -> Vec<FrameRow> {
        (0..frames)
            .map(|f| FrameRow {
                frame: f,
                vehicle_id: id,
                position: [speed * 0.1 * f as f64, y],
                velocity: Some([speed, 0.0]),
                lane_id: None,
                line: 0,
            })
            .collect()
    }

    #[test]
    fn single_vehicle_single_window() {
        let ds = Dataset::from_rows(straight(1, 80, 0.0, 20.0), 0.1).unwrap();
        let (w, report) = make_windows(&ds, 30, 50, 80, &NeighborRule::default()).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].neighbors.is_empty());
        assert_eq!(report.emitted, 1);
        assert_eq!(w[0].observed.len(), 30);
        assert_eq!(w[0].future.len(), 50);
        // 80 frames at 10 Hz is an 8 s sample
        assert!(((w[0].t_obs() + w[0].t_pred()) as f64 * w[0].dt - 8.0).abs() < 1e-12);
    }

    #[test]
    fn lateral_neighbors_are_mutual() {
        let mut rows = straight(1, 80, 0.0, 20.0);
        rows.extend(straight(2, 80, 5.0, 20.0));
        let ds = Dataset::from_rows(rows, 0.1).unwrap();
        let (w, _) = make_windows(&ds, 30, 50, 80, &NeighborRule::default()).unwrap();
        assert_eq!(w[0].neighbors[0].vehicle_id, 2);
        assert_eq!(w[1].neighbors[0].vehicle_id, 1);
    }

    #[test]
    fn short_tracks_are_reported() {
        let mut rows = straight(1, 79, 0.0, 20.0);
        rows.extend(straight(2, 200, 20.0, 20.0));
        let ds = Dataset::from_rows(rows, 0.1).unwrap();
        let (w, report) = make_windows(&ds, 30, 50, 10, &NeighborRule::default()).unwrap();
        assert_eq!(report.skipped_tracks, 1);
        assert_eq!(report.skipped_vehicle_ids, vec![1]);
        assert_eq!(w.len(), expected_window_count(200, 30, 50, 10));
        assert_eq!(w.len(), 13);
    }

    #[test]
    fn neighbor_missing_frames_excluded() {
        let mut rows = straight(1, 80, 0.0, 20.0);
        // starts after the observed span begins
        rows.extend(straight(2, 80, 2.0, 20.0).into_iter().filter(|r| r.frame >= 10));
        let ds = Dataset::from_rows(rows, 0.1).unwrap();
        let (w, _) = make_windows(&ds, 30, 50, 80, &NeighborRule::default()).unwrap();
        assert!(w[0].neighbors.is_empty());
    }

    #[test]
    fn padding_masks_empty_slots() {
        let mut rows = straight(1, 80, 0.0, 20.0);
        rows.extend(straight(2, 80, 3.0, 20.0));
        let ds = Dataset::from_rows(rows, 0.1).unwrap();
        let (w, _) = make_windows(&ds, 30, 50, 80, &NeighborRule::default()).unwrap();
        let (trajs, mask) = w[0].padded_neighbors(8);
        assert_eq!(mask.iter().filter(|m| **m).count(), 1);
        assert_eq!(trajs.len(), 8);
        assert!(trajs[3].iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn rejects_bad_lengths() {
        let ds = Dataset::from_rows(straight(1, 80, 0.0, 20.0), 0.1).unwrap();
        assert!(make_windows(&ds, 1, 50, 1, &NeighborRule::default()).is_err());
        assert!(make_windows(&ds, 30, 50, 0, &NeighborRule::default()).is_err());
    }
}
