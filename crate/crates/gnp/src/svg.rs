//! SVG 1.1 figures: intention modes, multimodal predictions and force
//! breakdowns. Output is plain text with fixed number formatting, so equal
//! inputs give identical files.

use std::fmt::Write as _;

use gnp_core::geom::{self, Vec2};
use gnp_core::modes::IntentionModeSet;
use gnp_core::nsf::ForceBreakdown;
use gnp_core::synthgen::Maneuver;
use gnp_core::trajdata::{LaneGeometry, LineKind};

use crate::formats::WindowTrajectories;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;

pub fn maneuver_color(m: Maneuver) -> &'static str {
    match m {
        Maneuver::Straight => "#1f77b4",
        Maneuver::Left => "#2ca02c",
        Maneuver::Right => "#d62728",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// World-to-pixel mapping with y pointing up in the world.
struct Canvas {
    body: String,
    min: Vec2,
    sx: f64,
    sy: f64,
    markers: Vec<&'static str>,
}

impl Canvas {
    /// Fits `points` into the drawing area. With `uniform` both axes share
    /// one scale, so angles and lengths are preserved.
    fn fit(points: &[Vec2], uniform: bool) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points.iter().filter(|p| geom::is_finite(**p)) {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0, 0.0];
            hi = [1.0, 1.0];
        }
        for a in 0..2 {
            if hi[a] - lo[a] < 1.0 {
                let mid = 0.5 * (hi[a] + lo[a]);
                lo[a] = mid - 0.5;
                hi[a] = mid + 0.5;
            }
        }
        let mut sx = (WIDTH - 2.0 * MARGIN) / (hi[0] - lo[0]);
        let mut sy = (HEIGHT - 2.0 * MARGIN) / (hi[1] - lo[1]);
        if uniform {
            let s = sx.min(sy);
            sx = s;
            sy = s;
        }
        Self {
            body: String::new(),
            min: lo,
            sx,
            sy,
            markers: Vec::new(),
        }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.sx,
            HEIGHT - MARGIN - (p[1] - self.min[1]) * self.sy,
        )
    }

    fn polyline(&mut self, points: &[Vec2], style: &str, class: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|p| {
                let (x, y) = self.px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline class="{class}" points="{}" fill="none" {style}/>"#,
            coords.join(" ")
        );
    }

    fn circle(&mut self, at: Vec2, r: f64, fill: &str, class: &str) {
        let (x, y) = self.px(at);
        let _ = writeln!(
            self.body,
            r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#
        );
    }

    fn hline(&mut self, y_world: f64, style: &str, class: &str) {
        let (_, y) = self.px([self.min[0], y_world]);
        let _ = writeln!(
            self.body,
            r#"<line class="{class}" x1="{MARGIN:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" {style}/>"#,
            WIDTH - MARGIN
        );
    }

    fn arrow(&mut self, from: Vec2, vector: Vec2, color: &'static str, class: &str) {
        if !self.markers.contains(&color) {
            self.markers.push(color);
        }
        let (x1, y1) = self.px(from);
        let (x2, y2) = self.px(geom::add(from, vector));
        let _ = writeln!(
            self.body,
            r#"<line class="{class}" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="2" marker-end="url(#arrow-{})"/>"#,
            &color[1..]
        );
    }

    fn text(&mut self, x: f64, y: f64, text: &str, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            escape(text)
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = 16.0 + 14.0 * i as f64;
            let _ = writeln!(
                self.body,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                WIDTH - 170.0,
                y - 4.0,
                WIDTH - 150.0,
                y - 4.0
            );
            self.text(WIDTH - 145.0, y, label, "#000000");
        }
    }

    fn finish(self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(out, "<title>{}</title>", escape(title));
        if !self.markers.is_empty() {
            out.push_str("<defs>\n");
            for color in &self.markers {
                let _ = writeln!(
                    out,
                    r#"<marker id="arrow-{}" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto" markerUnits="userSpaceOnUse"><path d="M0,0 L8,4 L0,8 z" fill="{color}"/></marker>"#,
                    &color[1..]
                );
            }
            out.push_str("</defs>\n");
        }
        let _ = writeln!(out, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
        out.push_str(&self.body);
        let _ = writeln!(
            out,
            r##"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14" fill="#000000">{}</text>"##,
            escape(title)
        );
        out.push_str("</svg>\n");
        out
    }
}

/// Mode centers colored by the maneuver their terminal lateral offset implies.
pub fn modes_svg(modes: &IntentionModeSet, lane_width: f64) -> String {
    let all: Vec<Vec2> = modes.centers().iter().flatten().copied().chain([[0.0, 0.0]]).collect();
    let mut c = Canvas::fit(&all, false);
    for (i, center) in modes.centers().iter().enumerate() {
        let m = Maneuver::classify(modes.endpoint(i)[1], lane_width);
        let mut path = vec![[0.0, 0.0]];
        path.extend_from_slice(center);
        c.polyline(
            &path,
            &format!(r#"stroke="{}" stroke-width="2""#, maneuver_color(m)),
            &format!("mode {}", m.as_str()),
        );
    }
    c.legend(&[
        ("straight", maneuver_color(Maneuver::Straight)),
        ("left change", maneuver_color(Maneuver::Left)),
        ("right change", maneuver_color(Maneuver::Right)),
    ]);
    c.finish(&format!("{} intention modes", modes.len()))
}

/// History, ground truth, the best hypothesis and the other hypotheses.
pub fn multimodal_svg(w: &WindowTrajectories, title: &str) -> String {
    let all: Vec<Vec2> = w
        .history
        .iter()
        .chain(&w.truth)
        .chain(w.hypotheses.iter().flat_map(|h| h.1.iter()))
        .copied()
        .collect();
    let mut c = Canvas::fit(&all, false);
    for (rank, (p, path)) in w.hypotheses.iter().enumerate() {
        if rank != w.best {
            let opacity = (0.3 + 0.7 * p).min(1.0);
            c.polyline(
                path,
                &format!(r##"stroke="#7f7f7f" stroke-width="1.5" stroke-opacity="{opacity:.3}""##),
                "hypothesis",
            );
        }
    }
    c.polyline(&w.history, r##"stroke="#000000" stroke-width="2""##, "history");
    c.polyline(
        &w.truth,
        r##"stroke="#2ca02c" stroke-width="2" stroke-dasharray="6,4""##,
        "truth",
    );
    if let Some((_, best)) = w.hypotheses.get(w.best) {
        c.polyline(best, r##"stroke="#d62728" stroke-width="2.5""##, "best");
    }
    c.legend(&[
        ("history", "#000000"),
        ("ground truth", "#2ca02c"),
        ("best prediction", "#d62728"),
        ("other predictions", "#7f7f7f"),
    ]);
    c.finish(title)
}

const GOAL_COLOR: &str = "#2ca02c";
const VEHICLE_COLOR: &str = "#d62728";
const LINE_COLOR: &str = "#1f77b4";

/// Scene at one rollout step with goal, per-neighbor and per-line force
/// arrows drawn from the target vehicle. All arrows share one scale.
pub fn forces_svg(b: &ForceBreakdown, lanes: &LaneGeometry, title: &str) -> String {
    let span = 25.0;
    let lo = lanes.lines().first().map_or(b.position[1] - 5.0, |l| l.offset);
    let hi = lanes.lines().last().map_or(b.position[1] + 5.0, |l| l.offset);
    let bounds = [[b.position[0] - span, lo - 1.0], [b.position[0] + span, hi + 1.0]];
    let mut c = Canvas::fit(&bounds, true);

    for line in lanes.lines() {
        let style = match line.kind {
            LineKind::Boundary => r##"stroke="#000000" stroke-width="2""##,
            LineKind::Center => r##"stroke="#7f7f7f" stroke-width="1" stroke-dasharray="8,6""##,
        };
        c.hline(line.offset, style, &format!("lane {}", line.kind.as_str()));
    }
    for (_, p) in &b.neighbor_positions {
        c.circle(*p, 6.0, "#7f7f7f", "neighbor");
    }
    c.circle(b.position, 7.0, "#000000", "target");

    let forces = std::iter::once(b.f_goal)
        .chain(b.f_rep_vehicles.iter().map(|f| f.1))
        .chain(b.f_rep_lines.iter().map(|f| f.1));
    let largest = forces.map(geom::norm).fold(0.0, f64::max);
    let scale = if largest > 0.0 { 0.4 * span / largest } else { 1.0 };
    c.arrow(b.position, geom::scale(b.f_goal, scale), GOAL_COLOR, "goal-force");
    for (_, f) in &b.f_rep_vehicles {
        c.arrow(b.position, geom::scale(*f, scale), VEHICLE_COLOR, "vehicle-force");
    }
    for (_, f) in &b.f_rep_lines {
        c.arrow(b.position, geom::scale(*f, scale), LINE_COLOR, "line-force");
    }
    c.legend(&[
        ("goal force", GOAL_COLOR),
        ("vehicle repulsion", VEHICLE_COLOR),
        ("line repulsion", LINE_COLOR),
    ]);
    c.finish(&format!("{title} (step {}, tau {:.3} s)", b.step, b.tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn titles_are_escaped() {
        let w = WindowTrajectories::default();
        let svg = multimodal_svg(&w, "a<b & c");
        assert!(svg.contains("a&lt;b &amp; c"));
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn uniform_canvas_keeps_aspect() {
        let c = Canvas::fit(&[[0.0, 0.0], [100.0, 10.0]], true);
        assert_eq!(c.sx, c.sy);
        let (x0, y0) = c.px([0.0, 0.0]);
        let (x1, y1) = c.px([3.0, 4.0]);
        assert!(((x1 - x0).hypot(y1 - y0) - 5.0 * c.sx).abs() < 1e-9);
    }
}
