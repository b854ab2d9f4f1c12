use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LineKind {
    /// Crossable lane divider.
    Center,
    /// Road edge; never crossed.
    Boundary,
}

impl LineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LineKind::Center => "center",
            LineKind::Boundary => "boundary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "center" => Some(LineKind::Center),
            "boundary" => Some(LineKind::Boundary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LaneLine {
    /// Lateral offset in meters.
    pub offset: f64,
    pub kind: LineKind,
}

/// Straight-road lane markings, as lateral offsets sorted ascending.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LaneGeometry {
    lines: Vec<LaneLine>,
    travel_direction: i8,
}

impl LaneGeometry {
    pub fn new(lines: Vec<LaneLine>, travel_direction: i8) -> Result<Self> {
        if travel_direction != 1 && travel_direction != -1 {
            return Err(Error::InvalidArgument(format!(
                "travel direction must be +1 or -1, got {travel_direction}"
            )));
        }
        if lines.iter().any(|l| !l.offset.is_finite()) {
            return Err(Error::InvalidArgument("lane offsets must be finite".into()));
        }
        if lines.windows(2).any(|w| w[1].offset <= w[0].offset) {
            return Err(Error::InvalidArgument(
                "lane offsets must be strictly increasing".into(),
            ));
        }
        let boundaries = lines.iter().filter(|l| l.kind == LineKind::Boundary).count();
        if boundaries < 2 {
            return Err(Error::InvalidArgument(format!(
                "lane geometry needs at least 2 boundary lines, got {boundaries}"
            )));
        }
        let n = lines.len();
        if lines[0].kind != LineKind::Boundary || lines[n - 1].kind != LineKind::Boundary {
            return Err(Error::InvalidArgument(
                "boundary lines must be the extreme lateral offsets".into(),
            ));
        }
        Ok(Self {
            lines,
            travel_direction,
        })
    }

    /// `lane_count` lanes of equal width starting at offset 0.
    pub fn uniform(lane_count: usize, lane_width: f64) -> Result<Self> {
        if lane_count == 0 || !(lane_width > 0.0) {
            return Err(Error::InvalidArgument(
                "need at least one lane of positive width".into(),
            ));
        }
        let lines = (0..=lane_count)
            .map(|i| LaneLine {
                offset: i as f64 * lane_width,
                kind: if i == 0 || i == lane_count {
                    LineKind::Boundary
                } else {
                    LineKind::Center
                },
            })
            .collect();
        Self::new(lines, 1)
    }

    pub fn lines(&self) -> &[LaneLine] {
        &self.lines
    }

    pub fn travel_direction(&self) -> i8 {
        self.travel_direction
    }

    /// Unit lateral direction pointing from line `index` toward the road
    /// interior. Only meaningful for the two outermost boundaries.
    pub(crate) fn inward(&self, index: usize) -> f64 {
        if index == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Maps offsets through `y -> sign * (y - shift)`, re-sorting if flipped.
    pub(crate) fn transformed(&self, shift: f64, flip: bool) -> Self {
        let sign = if flip { -1.0 } else { 1.0 };
        let mut lines: Vec<LaneLine> = self
            .lines
            .iter()
            .map(|l| LaneLine {
                offset: sign * (l.offset - shift),
                kind: l.kind,
            })
            .collect();
        if flip {
            lines.reverse();
        }
        Self {
            lines,
            travel_direction: if flip {
                -self.travel_direction
            } else {
                self.travel_direction
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineDistance {
    pub index: usize,
    pub distance: f64,
    pub kind: LineKind,
}

/// Lateral distance from `position` to every lane line.
pub fn distances_to_lines(position: Vec2, lanes: &LaneGeometry) -> Vec<LineDistance> {
    lanes
        .lines()
        .iter()
        .enumerate()
        .map(|(index, l)| LineDistance {
            index,
            distance: libm::fabs(position[1] - l.offset),
            kind: l.kind,
        })
        .collect()
}
