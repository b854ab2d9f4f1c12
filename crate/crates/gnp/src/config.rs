//! Flat `key = value` run configuration with `#` comments.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gnp_core::goalnet::GoalNetConfig;
use gnp_core::nsf::NsfConfig;
use gnp_core::synthgen::ScenarioSpec;
use gnp_core::trajdata::NeighborRule;

use crate::error::{Error, Result};
use crate::formats::Schema;

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! numeric_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                <$t>::from_str(s).map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

numeric_value!(usize, u64, i8, f64);

impl ConfigValue for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err("expected true or false".into()),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for Schema {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Schema::parse(s).ok_or_else(|| "expected canonical, ngsim or highd".into())
    }
    fn render(&self) -> String {
        self.as_str().to_string()
    }
}

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $key:ident : $t:ty = $default:expr,)*) => {
        /// Every tunable of the command-line pipeline.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $key: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($key: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            fn set(&mut self, key: &str, value: &str) -> Option<std::result::Result<(), String>> {
                match key {
                    $(stringify!($key) => Some(<$t as ConfigValue>::parse_value(value).map(|v| self.$key = v)),)*
                    _ => None,
                }
            }

            /// Canonical text form: every key in declaration order.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(let _ = writeln!(out, "{} = {}", stringify!($key), self.$key.render());)*
                out
            }
        }
    };
}

run_config! {
    /// Trajectory CSV; empty means `trajectories.csv` in the output directory.
    dataset: String = String::new(),
    schema: Schema = Schema::Canonical,
    /// Lane geometry file; empty means `lanes.csv` in the output directory.
    lanes: String = String::new(),
    /// Frame interval of canonical files, s.
    dt: f64 = 0.1,
    t_obs: usize = 30,
    t_pred: usize = 50,
    stride: usize = 10,
    max_neighbors: usize = 8,
    neighbor_longitudinal: f64 = 50.0,
    neighbor_lateral: f64 = 5.55,
    test_fraction: f64 = 0.2,
    vehicles: usize = 200,
    lane_count: usize = 3,
    lane_width: f64 = 3.7,
    duration: f64 = 600.0,
    track_duration: f64 = 8.0,
    mix_straight: f64 = 0.4,
    mix_left: f64 = 0.3,
    mix_right: f64 = 0.3,
    speed_min: f64 = 24.5,
    speed_max: f64 = 25.5,
    change_min: f64 = 4.0,
    change_max: f64 = 6.0,
    change_start_min: f64 = 2.0,
    change_start_max: f64 = 4.0,
    travel_direction: i8 = 1,
    /// Number of intention modes.
    modes: usize = 20,
    /// Goals rolled out per window.
    k: usize = 6,
    d_model: usize = 32,
    heads: usize = 4,
    blocks: usize = 2,
    ffn: usize = 64,
    lambda: f64 = 1.0,
    huber_delta: f64 = 1.0,
    goal_learning_rate: f64 = 1e-3,
    goal_clip: f64 = 5.0,
    goal_epochs: usize = 30,
    goal_batch: usize = 16,
    r_col: f64 = 5.0,
    a: f64 = 5.0,
    eps_line: f64 = 0.1,
    tau_hidden: usize = 32,
    k_hidden: usize = 32,
    k_bias_init: f64 = -3.0,
    nsf_learning_rate: f64 = 1e-3,
    nsf_clip: f64 = 1.0,
    phase1_epochs: usize = 10,
    phase2_epochs: usize = 20,
    nsf_batch: usize = 16,
    joint_phase2: bool = false,
    /// Train the force model toward true endpoints instead of predicted goals.
    oracle_goals: bool = false,
    /// Test window exported for the force breakdown and plots.
    plot_window: usize = 0,
    seed: u64 = 42,
}

impl RunConfig {
    /// Parses and validates `text`, reporting every problem at once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut problems = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", i + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                problems.push(format!("line {}: duplicate key `{key}`", i + 1));
                continue;
            }
            match cfg.set(key, value) {
                None => problems.push(format!("line {}: unknown key `{key}`", i + 1)),
                Some(Err(e)) => problems.push(format!("line {}: `{key}`: {e}", i + 1)),
                Some(Ok(())) => {}
            }
        }
        if problems.is_empty() {
            cfg.validate()?;
            Ok(cfg)
        } else {
            if let Err(Error::Config(more)) = cfg.validate() {
                problems.extend(more);
            }
            Err(Error::Config(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Range checks over every key.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                p.push(msg);
            }
        };
        check(
            self.dt > 0.0 && self.dt.is_finite(),
            format!("dt must be positive (got {})", self.dt),
        );
        check(self.t_obs >= 3, format!("t_obs must be >= 3 (got {})", self.t_obs));
        check(self.t_pred >= 1, format!("t_pred must be >= 1 (got {})", self.t_pred));
        check(self.stride >= 1, "stride must be >= 1".into());
        check(
            self.neighbor_longitudinal > 0.0,
            "neighbor_longitudinal must be positive".into(),
        );
        check(self.neighbor_lateral > 0.0, "neighbor_lateral must be positive".into());
        check(
            self.test_fraction > 0.0 && self.test_fraction < 1.0,
            format!("test_fraction must lie in (0, 1) (got {})", self.test_fraction),
        );
        check(self.vehicles >= 1, "vehicles must be >= 1".into());
        check(self.modes >= 1, "modes must be >= 1".into());
        check(
            self.k >= 1 && self.k <= self.modes,
            format!("k must lie in 1..=modes (got k={}, modes={})", self.k, self.modes),
        );
        check(self.goal_clip > 0.0, "goal_clip must be positive".into());
        check(self.nsf_clip > 0.0, "nsf_clip must be positive".into());
        check(
            self.phase1_epochs + self.phase2_epochs > 0,
            "at least one force-model epoch is needed".into(),
        );
        for (what, r) in [
            ("scenario", self.scenario().validate()),
            ("goal network", self.goalnet().validate()),
            ("force model", self.nsf().validate()),
        ] {
            if let Err(e) = r {
                let text = e.to_string();
                let text = text.strip_prefix("invalid argument: ").unwrap_or(&text).to_string();
                p.extend(text.split("; ").map(|m| format!("{what}: {m}")));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn scenario(&self) -> ScenarioSpec {
        ScenarioSpec {
            lane_count: self.lane_count,
            lane_width: self.lane_width,
            duration: self.duration,
            track_duration: self.track_duration,
            dt: self.dt,
            vehicle_count: self.vehicles,
            maneuver_mix: [self.mix_straight, self.mix_left, self.mix_right],
            speed_range: (self.speed_min, self.speed_max),
            change_duration: (self.change_min, self.change_max),
            change_start: (self.change_start_min, self.change_start_max),
            travel_direction: self.travel_direction,
            seed: self.seed,
        }
    }

    pub fn neighbor_rule(&self) -> NeighborRule {
        NeighborRule {
            longitudinal: self.neighbor_longitudinal,
            lateral: self.neighbor_lateral,
            max_neighbors: self.max_neighbors,
        }
    }

    pub fn goalnet(&self) -> GoalNetConfig {
        GoalNetConfig {
            t_obs: self.t_obs,
            t_pred: self.t_pred,
            d_model: self.d_model,
            heads: self.heads,
            blocks: self.blocks,
            ffn: self.ffn,
            lambda: self.lambda,
            huber_delta: self.huber_delta,
            learning_rate: self.goal_learning_rate,
            clip_norm: self.goal_clip,
            epochs: self.goal_epochs,
            batch_size: self.goal_batch,
            max_neighbors: self.max_neighbors,
            seed: self.seed,
        }
    }

    pub fn nsf(&self) -> NsfConfig {
        NsfConfig {
            r_col: self.r_col,
            a: self.a,
            eps_line: self.eps_line,
            tau_hidden: self.tau_hidden,
            k_hidden: self.k_hidden,
            k_bias_init: self.k_bias_init,
            learning_rate: self.nsf_learning_rate,
            clip_norm: self.nsf_clip,
            phase1_epochs: self.phase1_epochs,
            phase2_epochs: self.phase2_epochs,
            batch_size: self.nsf_batch,
            joint_phase2: self.joint_phase2,
            seed: self.seed,
        }
    }

    pub fn dataset_path(&self, out: &Path) -> PathBuf {
        if self.dataset.is_empty() {
            out.join("trajectories.csv")
        } else {
            PathBuf::from(&self.dataset)
        }
    }

    pub fn lanes_path(&self, out: &Path) -> PathBuf {
        if self.lanes.is_empty() {
            out.join("lanes.csv")
        } else {
            PathBuf::from(&self.lanes)
        }
    }
}
