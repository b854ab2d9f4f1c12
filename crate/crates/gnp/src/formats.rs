//! CSV and text formats read and written by the command-line tools.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gnp_core::eval::{AblationReport, Evaluation, MetricReport};
use gnp_core::geom::Vec2;
use gnp_core::modes::IntentionModeSet;
use gnp_core::nsf::ForceBreakdown;
use gnp_core::synthgen::Maneuver;
use gnp_core::trajdata::{Dataset, FrameRow, LaneGeometry, LaneLine, LineKind};

use crate::error::{Error, Result};

/// Feet to meters, for NGSIM files.
pub const FEET: f64 = 0.3048;

/// Column layout of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// `frame,vehicle_id,x,y,vx,vy,lane_id` in meters; velocities optional.
    Canonical,
    /// NGSIM: `Vehicle_ID,Frame_ID,Local_X,Local_Y,...,Lane_ID` in feet, 10 Hz.
    /// `Local_Y` runs along the road and becomes x.
    Ngsim,
    /// highD `tracks.csv`: bounding-box corner, size and velocities, 25 Hz.
    Highd,
}

impl Schema {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "canonical" => Some(Schema::Canonical),
            "ngsim" => Some(Schema::Ngsim),
            "highd" => Some(Schema::Highd),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Schema::Canonical => "canonical",
            Schema::Ngsim => "ngsim",
            Schema::Highd => "highd",
        }
    }

    /// Frame interval fixed by the source; canonical files use the configured one.
    pub fn native_dt(self) -> Option<f64> {
        match self {
            Schema::Canonical => None,
            Schema::Ngsim => Some(0.1),
            Schema::Highd => Some(0.04),
        }
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn create_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish<W: Write>(path: &Path, w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

struct Columns {
    path: PathBuf,
    index: BTreeMap<String, usize>,
}

impl Columns {
    fn new(path: &Path, headers: &csv::StringRecord) -> Self {
        let index = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        Self {
            path: path.to_path_buf(),
            index,
        }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn value<T: std::str::FromStr>(&self, rec: &csv::StringRecord, col: usize, line: u64) -> Result<T> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse().map_err(|_| Error::Parse {
            path: self.path.clone(),
            line,
            message: format!("cannot parse `{raw}` in column {}", col + 1),
        })
    }

    fn maybe<T: std::str::FromStr>(&self, rec: &csv::StringRecord, col: Option<usize>, line: u64) -> Result<Option<T>> {
        match col {
            Some(c) if !rec.get(c).unwrap_or("").is_empty() => self.value(rec, c, line).map(Some),
            _ => Ok(None),
        }
    }
}

/// Reads a trajectory file into per-vehicle tracks. `dt` applies to
/// canonical files; the other schemas carry their own frame rate.
pub fn load_trajectories(path: &Path, schema: Schema, dt: f64) -> Result<Dataset> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut rows = Vec::new();
    if !headers.is_empty() {
        let cols = Columns::new(path, &headers);
        let mut record = csv::StringRecord::new();
        match schema {
            Schema::Canonical => {
                let (f, id, x, y) = (
                    cols.require("frame")?,
                    cols.require("vehicle_id")?,
                    cols.require("x")?,
                    cols.require("y")?,
                );
                let (vx, vy, lane) = (cols.optional("vx"), cols.optional("vy"), cols.optional("lane_id"));
                while reader.read_record(&mut record).map_err(|e| csv_error(path, e))? {
                    let line = record.position().map_or(0, |p| p.line());
                    let velocity = match (cols.maybe(&record, vx, line)?, cols.maybe(&record, vy, line)?) {
                        (Some(a), Some(b)) => Some([a, b]),
                        _ => None,
                    };
                    rows.push(FrameRow {
                        frame: cols.value(&record, f, line)?,
                        vehicle_id: cols.value(&record, id, line)?,
                        position: [cols.value(&record, x, line)?, cols.value(&record, y, line)?],
                        velocity,
                        lane_id: cols.maybe(&record, lane, line)?,
                        line: line as usize,
                    });
                }
            }
            Schema::Ngsim => {
                let (f, id) = (cols.require("Frame_ID")?, cols.require("Vehicle_ID")?);
                let (lat, lon) = (cols.require("Local_X")?, cols.require("Local_Y")?);
                let lane = cols.optional("Lane_ID");
                while reader.read_record(&mut record).map_err(|e| csv_error(path, e))? {
                    let line = record.position().map_or(0, |p| p.line());
                    let lat: f64 = cols.value(&record, lat, line)?;
                    let lon: f64 = cols.value(&record, lon, line)?;
                    rows.push(FrameRow {
                        frame: cols.value(&record, f, line)?,
                        vehicle_id: cols.value(&record, id, line)?,
                        position: [lon * FEET, lat * FEET],
                        velocity: None,
                        lane_id: cols.maybe(&record, lane, line)?,
                        line: line as usize,
                    });
                }
            }
            Schema::Highd => {
                let (f, id) = (cols.require("frame")?, cols.require("id")?);
                let (x, y, w, h) = (
                    cols.require("x")?,
                    cols.require("y")?,
                    cols.require("width")?,
                    cols.require("height")?,
                );
                let (vx, vy) = (cols.require("xVelocity")?, cols.require("yVelocity")?);
                let lane = cols.optional("laneId");
                while reader.read_record(&mut record).map_err(|e| csv_error(path, e))? {
                    let line = record.position().map_or(0, |p| p.line());
                    let cx = cols.value::<f64>(&record, x, line)? + cols.value::<f64>(&record, w, line)? / 2.0;
                    let cy = cols.value::<f64>(&record, y, line)? + cols.value::<f64>(&record, h, line)? / 2.0;
                    rows.push(FrameRow {
                        frame: cols.value(&record, f, line)?,
                        vehicle_id: cols.value(&record, id, line)?,
                        position: [cx, cy],
                        velocity: Some([cols.value(&record, vx, line)?, cols.value(&record, vy, line)?]),
                        lane_id: cols.maybe(&record, lane, line)?,
                        line: line as usize,
                    });
                }
            }
        }
    }
    Ok(Dataset::from_rows(rows, schema.native_dt().unwrap_or(dt))?)
}

pub fn write_canonical(path: &Path, rows: &[FrameRow]) -> Result<()> {
    let mut w = create_writer(path)?;
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["frame", "vehicle_id", "x", "y", "vx", "vy", "lane_id"])
        .map_err(err)?;
    for r in rows {
        let (vx, vy) = r
            .velocity
            .map_or((String::new(), String::new()), |v| (v[0].to_string(), v[1].to_string()));
        let lane = r.lane_id.map_or(String::new(), |l| l.to_string());
        w.write_record([
            r.frame.to_string(),
            r.vehicle_id.to_string(),
            r.position[0].to_string(),
            r.position[1].to_string(),
            vx,
            vy,
            lane,
        ])
        .map_err(err)?;
    }
    finish(path, w)
}

/// Lane file: header `offset_m,kind`, one row per line.
pub fn read_lanes(path: &Path) -> Result<LaneGeometry> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = Columns::new(path, &headers);
    let (off, kind) = (cols.require("offset_m")?, cols.require("kind")?);
    let mut lines = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw = rec.get(kind).unwrap_or("");
        let kind = LineKind::parse(raw).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("unknown line kind `{raw}` (expected center or boundary)"),
        })?;
        lines.push(LaneLine {
            offset: cols.value(&rec, off, line)?,
            kind,
        });
    }
    Ok(LaneGeometry::new(lines, 1)?)
}

pub fn write_lanes(path: &Path, lanes: &LaneGeometry) -> Result<()> {
    let mut text = String::from("offset_m,kind\n");
    for l in lanes.lines() {
        text.push_str(&format!("{},{}\n", l.offset, l.kind.as_str()));
    }
    write_text(path, &text)
}

/// Label sidecar: `vehicle_id,maneuver`.
pub fn write_labels(path: &Path, labels: &[(u64, Maneuver)]) -> Result<()> {
    let mut text = String::from("vehicle_id,maneuver\n");
    for (id, m) in labels {
        text.push_str(&format!("{id},{}\n", m.as_str()));
    }
    write_text(path, &text)
}

pub fn read_labels(path: &Path) -> Result<Vec<(u64, Maneuver)>> {
    let mut reader = open_reader(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad("bad vehicle id".into()))?;
        let m = rec.get(1).unwrap_or("");
        out.push((
            id,
            Maneuver::parse(m).ok_or_else(|| bad(format!("unknown maneuver `{m}`")))?,
        ));
    }
    Ok(out)
}

/// Mode sidecar contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ModesMeta {
    pub count: usize,
    pub t_pred: usize,
    /// SHA-256 of the futures the modes were fitted on.
    pub fingerprint: String,
    pub normalization: String,
    pub populations: Vec<usize>,
    pub inertia: f64,
}

/// Writes `mode_index,frame,x,y` rows and a `key = value` sidecar.
pub fn write_modes(csv_path: &Path, meta_path: &Path, modes: &IntentionModeSet, meta: &ModesMeta) -> Result<()> {
    let mut text = String::from("mode_index,frame,x,y\n");
    for (i, c) in modes.centers().iter().enumerate() {
        for (f, p) in c.iter().enumerate() {
            text.push_str(&format!("{i},{f},{},{}\n", p[0], p[1]));
        }
    }
    write_text(csv_path, &text)?;
    let pops: Vec<String> = meta.populations.iter().map(|p| p.to_string()).collect();
    write_text(
        meta_path,
        &format!(
            "modes = {}\nt_pred = {}\nfingerprint = {}\nnormalization = {}\npopulations = {}\ninertia = {}\n",
            meta.count,
            meta.t_pred,
            meta.fingerprint,
            meta.normalization,
            pops.join(","),
            meta.inertia
        ),
    )
}

pub fn read_modes(csv_path: &Path, meta_path: &Path) -> Result<(IntentionModeSet, ModesMeta)> {
    let text = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let kv: BTreeMap<&str, &str> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    let bad = |m: &str| Error::Parse {
        path: meta_path.to_path_buf(),
        line: 0,
        message: m.to_string(),
    };
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
    let populations = get("populations")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad("bad population")))
        .collect::<Result<Vec<usize>>>()?;
    let meta = ModesMeta {
        count: get("modes")?.parse().map_err(|_| bad("bad mode count"))?,
        t_pred: get("t_pred")?.parse().map_err(|_| bad("bad t_pred"))?,
        fingerprint: get("fingerprint")?.to_string(),
        normalization: get("normalization")?.to_string(),
        populations,
        inertia: get("inertia")?.parse().map_err(|_| bad("bad inertia"))?,
    };

    let mut reader = open_reader(csv_path)?;
    let mut centers = vec![vec![[f64::NAN; 2]; meta.t_pred]; meta.count];
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(csv_path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse_err = || Error::Parse {
            path: csv_path.to_path_buf(),
            line,
            message: "bad mode row".into(),
        };
        let i: usize = rec.get(0).unwrap_or("").parse().map_err(|_| parse_err())?;
        let f: usize = rec.get(1).unwrap_or("").parse().map_err(|_| parse_err())?;
        let x: f64 = rec.get(2).unwrap_or("").parse().map_err(|_| parse_err())?;
        let y: f64 = rec.get(3).unwrap_or("").parse().map_err(|_| parse_err())?;
        let slot = centers.get_mut(i).and_then(|c| c.get_mut(f)).ok_or_else(parse_err)?;
        *slot = [x, y];
    }
    if centers.iter().flatten().any(|p| !p[0].is_finite()) {
        return Err(Error::Parse {
            path: csv_path.to_path_buf(),
            line: 0,
            message: "incomplete mode table".into(),
        });
    }
    let pops = if meta.populations.len() == meta.count {
        meta.populations.clone()
    } else {
        vec![0; meta.count]
    };
    let modes = IntentionModeSet::new(centers, pops, meta.normalization.clone())?;
    Ok((modes, meta))
}

/// Per-step totals: `step,fx_goal,fy_goal,fx_rep,fy_rep,tau,v0`.
pub fn write_forces_csv(path: &Path, breakdowns: &[ForceBreakdown]) -> Result<()> {
    let mut text = String::from("step,fx_goal,fy_goal,fx_rep,fy_rep,tau,v0\n");
    for b in breakdowns {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            b.step, b.f_goal[0], b.f_goal[1], b.f_rep[0], b.f_rep[1], b.tau, b.v0
        ));
    }
    write_text(path, &text)
}

/// One JSON object per step with every per-source component.
pub fn write_forces_jsonl(path: &Path, breakdowns: &[ForceBreakdown]) -> Result<()> {
    let mut text = String::new();
    for b in breakdowns {
        text.push_str(&serde_json::to_string(b).map_err(|e| Error::Format(e.to_string()))?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_forces_jsonl(path: &Path) -> Result<Vec<ForceBreakdown>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Trajectories of one window in the normalized frame, as written by `eval`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowTrajectories {
    pub history: Vec<Vec2>,
    pub truth: Vec<Vec2>,
    /// Hypotheses by rank with their renormalized probabilities.
    pub hypotheses: Vec<(f64, Vec<Vec2>)>,
    /// Rank of the minimum-ADE hypothesis.
    pub best: usize,
}

/// Rows `window,kind,rank,probability,step,x,y` with kind one of
/// `history`, `truth`, `hypothesis` or `best`.
pub fn write_predictions(path: &Path, windows: &[(usize, WindowTrajectories)]) -> Result<()> {
    let mut text = String::from("window,kind,rank,probability,step,x,y\n");
    for (w, t) in windows {
        for (s, p) in t.history.iter().enumerate() {
            text.push_str(&format!("{w},history,0,1,{s},{},{}\n", p[0], p[1]));
        }
        for (s, p) in t.truth.iter().enumerate() {
            text.push_str(&format!("{w},truth,0,1,{s},{},{}\n", p[0], p[1]));
        }
        for (r, (prob, traj)) in t.hypotheses.iter().enumerate() {
            let kind = if r == t.best { "best" } else { "hypothesis" };
            for (s, p) in traj.iter().enumerate() {
                text.push_str(&format!("{w},{kind},{r},{prob},{s},{},{}\n", p[0], p[1]));
            }
        }
    }
    write_text(path, &text)
}

pub fn read_predictions(path: &Path, window: usize) -> Result<WindowTrajectories> {
    let mut reader = open_reader(path)?;
    let mut out = WindowTrajectories::default();
    let mut hyps: BTreeMap<usize, (f64, Vec<Vec2>)> = BTreeMap::new();
    let mut found = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line,
            message: "bad prediction row".into(),
        };
        let w: usize = rec.get(0).unwrap_or("").parse().map_err(|_| bad())?;
        if w != window {
            continue;
        }
        found = true;
        let rank: usize = rec.get(2).unwrap_or("").parse().map_err(|_| bad())?;
        let prob: f64 = rec.get(3).unwrap_or("").parse().map_err(|_| bad())?;
        let p = [
            rec.get(5).unwrap_or("").parse().map_err(|_| bad())?,
            rec.get(6).unwrap_or("").parse().map_err(|_| bad())?,
        ];
        match rec.get(1).unwrap_or("") {
            "history" => out.history.push(p),
            "truth" => out.truth.push(p),
            kind @ ("hypothesis" | "best") => {
                if kind == "best" {
                    out.best = rank;
                }
                hyps.entry(rank).or_insert((prob, Vec::new())).1.push(p);
            }
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("unknown kind `{other}`"),
                })
            }
        }
    }
    if !found {
        return Err(Error::Format(format!(
            "window {window} not present in {}",
            path.display()
        )));
    }
    out.hypotheses = hyps.into_values().collect();
    Ok(out)
}

fn horizon_text(h: &[f64]) -> String {
    h.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("/")
}

const METRIC_HEADER: &str = "name,subset,k,samples,ade,fde,rmse,weighted_ade,weighted_fde,weighted_rmse,horizon_rmse";

fn metric_row(name: &str, subset: &str, r: &MetricReport) -> String {
    let h: Vec<String> = r.horizon.iter().map(|v| v.to_string()).collect();
    format!(
        "{name},{subset},{},{},{},{},{},{},{},{},{}\n",
        r.k,
        r.samples,
        r.ade,
        r.fde,
        r.rmse,
        r.weighted_ade,
        r.weighted_fde,
        r.weighted_rmse,
        h.join(";")
    )
}

/// Metric CSV over named evaluations, both subsets each.
pub fn metrics_csv(rows: &[(String, &Evaluation)]) -> String {
    let mut text = format!("{METRIC_HEADER}\n");
    for (name, e) in rows {
        text.push_str(&metric_row(name, "all", &e.all));
        text.push_str(&metric_row(name, "lane_change", &e.lane_change));
    }
    text
}

/// Aligned text table with best-of-K ADE/FDE/RMSE and horizon RMSE.
pub fn metrics_table(rows: &[(String, &Evaluation)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(4).max(4);
    let mut text = format!(
        "{:<width$}  {:<11}  {:>3}  {:>5}  {:<22}  {}\n",
        "name", "subset", "K", "n", "ADE/FDE/RMSE", "RMSE 1s.."
    );
    for (name, e) in rows {
        for (subset, r) in [("all", &e.all), ("lane_change", &e.lane_change)] {
            text.push_str(&format!(
                "{:<width$}  {:<11}  {:>3}  {:>5}  {:<22}  {}\n",
                name,
                subset,
                r.k,
                r.samples,
                format!("{:.3}/{:.3}/{:.3}", r.ade, r.fde, r.rmse),
                horizon_text(&r.horizon)
            ));
        }
    }
    text
}

/// Ablation table in variant order with the IM, F_GOAL and F_REP columns.
pub fn ablation_csv(report: &AblationReport) -> String {
    let mut text =
        String::from("variant,im,f_goal,f_rep,ade,fde,rmse,lane_change_ade,lane_change_fde,lane_change_rmse\n");
    for row in &report.rows {
        let v = row.variant;
        let (a, l) = (&row.evaluation.all, &row.evaluation.lane_change);
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            v.index, v.intention_modes, v.goal_force, v.repulsion, a.ade, a.fde, a.rmse, l.ade, l.fde, l.rmse
        ));
    }
    text
}

pub fn ablation_table(report: &AblationReport) -> String {
    let mark = |b: bool| if b { "x" } else { "-" };
    let mut text = String::from("Variant  IM  F_GOAL  F_REP  ADE/FDE/RMSE           lane-change ADE/FDE/RMSE\n");
    for row in &report.rows {
        let v = row.variant;
        let (a, l) = (&row.evaluation.all, &row.evaluation.lane_change);
        text.push_str(&format!(
            "({})      {}   {}       {}      {:<22} {:.3}/{:.3}/{:.3}\n",
            v.index,
            mark(v.intention_modes),
            mark(v.goal_force),
            mark(v.repulsion),
            format!("{:.3}/{:.3}/{:.3}", a.ade, a.fde, a.rmse),
            l.ade,
            l.fde,
            l.rmse
        ));
    }
    for (name, e) in [("CV", &report.constant_velocity), ("CA", &report.constant_acceleration)] {
        let (a, l) = (&e.all, &e.lane_change);
        text.push_str(&format!(
            "{name}                              {:<22} {:.3}/{:.3}/{:.3}\n",
            format!("{:.3}/{:.3}/{:.3}", a.ade, a.fde, a.rmse),
            l.ade,
            l.fde,
            l.rmse
        ));
    }
    text
}

/// `epoch,<column>...` rows.
pub fn curve_csv(columns: &[(&str, &[f64])]) -> String {
    let mut text = String::from("epoch");
    for (name, _) in columns {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    let n = columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for i in 0..n {
        text.push_str(&i.to_string());
        for (_, v) in columns {
            text.push(',');
            if let Some(x) = v.get(i) {
                text.push_str(&x.to_string());
            }
        }
        text.push('\n');
    }
    text
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
