//! Subcommands. Each reads its prerequisites from the output directory,
//! writes its artifacts there and records them in a manifest.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use gnp_core::eval::{
    baseline_ca, baseline_cv, evaluate_baseline, evaluate_with, nearest_predicted_goal, run_ablation, AblationConfig,
    Evaluation, Predictor,
};
use gnp_core::geom::Vec2;
use gnp_core::goalnet::{train_goalnet, GoalNet, GoalSample};
use gnp_core::modes::{fit_modes, IntentionModeSet};
use gnp_core::nsf::{rollout, train_nsf, ForceNets, NsfSample, RolloutOptions, Scene};
use gnp_core::synthgen::generate;
use gnp_core::trajdata::{make_windows, prepare, split_indices, PreparedSample};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{self, ModesMeta, WindowTrajectories};
use crate::manifest::{sha256_hex, Manifest};
use crate::{store, svg};

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const LANES: &str = "lanes.csv";
pub const LABELS: &str = "labels.csv";
pub const MODES: &str = "modes.csv";
pub const MODES_META: &str = "modes.meta";
pub const MODES_INERTIA: &str = "modes_inertia.csv";
pub const GOAL_CHECKPOINT: &str = "goalnet.ckpt";
pub const GOAL_CURVE: &str = "goal_loss.csv";
pub const NSF_CHECKPOINT: &str = "nsf.ckpt";
pub const NSF_CURVE: &str = "nsf_loss.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_TXT: &str = "metrics.txt";
pub const PREDICTIONS: &str = "predictions.csv";
pub const FORCES_CSV: &str = "forces.csv";
pub const FORCES_JSONL: &str = "forces.jsonl";
pub const FORCE_LANES: &str = "forces_lanes.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_TXT: &str = "ablation.txt";

#[derive(Debug, Parser)]
#[command(name = "gnp", version, about = "Goal-based neural physics trajectory prediction")]
pub struct Cli {
    /// Run configuration (`key = value` lines); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Writes a synthetic highway corpus with lane geometry and labels.
    Generate,
    /// Fits intention modes on the training futures.
    Cluster,
    /// Trains the goal network.
    TrainGoal,
    /// Trains the relaxation and interaction-strength networks.
    TrainNsf,
    /// Scores the full model and the kinematic baselines on the test split.
    Eval,
    /// Trains and scores every ablation variant.
    Ablate,
    /// Renders an SVG figure from existing artifacts.
    Plot {
        kind: PlotKind,
        /// Test window for `multimodal`; defaults to `plot_window`.
        #[arg(long)]
        window: Option<usize>,
        /// Rollout step for `forces`.
        #[arg(long, default_value_t = 0)]
        step: usize,
        /// Output file; defaults to `<kind>.svg` in the artifact directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Modes,
    Multimodal,
    Forces,
}

impl PlotKind {
    fn as_str(self) -> &'static str {
        match self {
            PlotKind::Modes => "modes",
            PlotKind::Multimodal => "multimodal",
            PlotKind::Forces => "forces",
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub manifest_hash: String,
}

/// Loads the configuration named on the command line and applies overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let ctx = Context::new(resolve_config(cli)?, cli.out.clone())?;
    match &cli.command {
        Command::Generate => ctx.generate(),
        Command::Cluster => ctx.cluster(),
        Command::TrainGoal => ctx.train_goal(),
        Command::TrainNsf => ctx.train_nsf(),
        Command::Eval => ctx.eval(),
        Command::Ablate => ctx.ablate(),
        Command::Plot {
            kind,
            window,
            step,
            output,
        } => ctx.plot(*kind, *window, *step, output.clone()),
    }
}

/// Windows of the configured dataset, normalized and split.
pub struct Data {
    pub train: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
}

/// Digest of the training futures, tying modes and checkpoints to the data
/// they were fitted on.
pub fn futures_fingerprint(train: &[PreparedSample]) -> String {
    let mut bytes = Vec::new();
    for s in train {
        for p in s.window.future_positions() {
            bytes.extend_from_slice(&p[0].to_le_bytes());
            bytes.extend_from_slice(&p[1].to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

fn require(path: PathBuf, what: &'static str, command: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Missing { what, path, command })
    }
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Self { cfg, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest(&self, command: &str) -> Result<Manifest> {
        let text = self.cfg.to_text();
        let config_path = self.path(&format!("config-{command}.txt"));
        formats::write_text(&config_path, &text)?;
        let mut m = Manifest::new(command, &text, self.cfg.seed);
        m.output(&config_path)?;
        Ok(m)
    }

    fn finish(&self, m: &mut Manifest, outputs: &[&Path], summary: String) -> Result<Outcome> {
        for p in outputs {
            m.output(p)?;
        }
        Ok(Outcome {
            summary,
            manifest_hash: m.write(&self.out)?,
        })
    }

    pub fn generate(&self) -> Result<Outcome> {
        let mut m = self.manifest("generate")?;
        let corpus = generate(&self.cfg.scenario())?;
        let (traj, lanes, labels) = (self.path(TRAJECTORIES), self.path(LANES), self.path(LABELS));
        formats::write_canonical(&traj, &corpus.rows)?;
        formats::write_lanes(&lanes, &corpus.lanes)?;
        formats::write_labels(&labels, &corpus.labels)?;
        let summary = format!("generated {} vehicles, {} rows", corpus.labels.len(), corpus.rows.len());
        self.finish(&mut m, &[&traj, &lanes, &labels], summary)
    }

    /// Reads, windows, normalizes and splits the dataset.
    pub fn load_data(&self, m: &mut Manifest) -> Result<Data> {
        let cfg = &self.cfg;
        let traj = require(cfg.dataset_path(&self.out), "trajectory file", "generate")?;
        let lanes_path = require(cfg.lanes_path(&self.out), "lane file", "generate")?;
        m.input(&traj)?;
        m.input(&lanes_path)?;
        let dataset = formats::load_trajectories(&traj, cfg.schema, cfg.dt)?;
        let lanes = formats::read_lanes(&lanes_path)?;
        let (windows, _) = make_windows(&dataset, cfg.t_obs, cfg.t_pred, cfg.stride, &cfg.neighbor_rule())?;
        if windows.len() < 2 {
            return Err(Error::Format(format!(
                "{} yields {} windows of {} + {} frames; need at least two",
                traj.display(),
                windows.len(),
                cfg.t_obs,
                cfg.t_pred
            )));
        }
        let samples: Vec<PreparedSample> = windows.iter().map(|w| prepare(w, &lanes)).collect();
        let (train, test) = split_indices(samples.len(), cfg.test_fraction, cfg.seed);
        let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
        let (train, test) = (pick(&train), pick(&test));
        if train.is_empty() || test.is_empty() {
            return Err(Error::Format(format!(
                "test_fraction {} leaves an empty split of {} windows",
                cfg.test_fraction,
                samples.len()
            )));
        }
        Ok(Data { train, test })
    }

    /// Loads the fitted modes and checks they match the current data.
    fn load_modes(&self, m: &mut Manifest, data: &Data) -> Result<(IntentionModeSet, String)> {
        let csv = require(self.path(MODES), "intention modes", "cluster")?;
        let meta_path = require(self.path(MODES_META), "intention modes", "cluster")?;
        m.input(&csv)?;
        m.input(&meta_path)?;
        let (modes, meta) = formats::read_modes(&csv, &meta_path)?;
        if meta.fingerprint != futures_fingerprint(&data.train) {
            return Err(Error::Format(format!(
                "{} was fitted on different data; run `gnp cluster` again",
                csv.display()
            )));
        }
        Ok((modes, meta.fingerprint))
    }

    fn load_goalnet(&self, m: &mut Manifest, fingerprint: &str) -> Result<GoalNet> {
        let path = require(self.path(GOAL_CHECKPOINT), "goal network checkpoint", "train-goal")?;
        m.input(&path)?;
        let (net, modes) = store::load_goalnet(&path)?;
        if modes != fingerprint {
            return Err(Error::Format(format!(
                "{} was trained on other intention modes; run `gnp train-goal` again",
                path.display()
            )));
        }
        Ok(net)
    }

    pub fn cluster(&self) -> Result<Outcome> {
        let mut m = self.manifest("cluster")?;
        let data = self.load_data(&mut m)?;
        let futures: Vec<Vec<Vec2>> = data.train.iter().map(|s| s.window.future_positions()).collect();
        let fit = fit_modes(&futures, self.cfg.modes, self.cfg.seed)?;
        let meta = ModesMeta {
            count: fit.modes.len(),
            t_pred: fit.modes.t_pred(),
            fingerprint: futures_fingerprint(&data.train),
            normalization: fit.modes.normalization_tag.clone(),
            populations: fit.modes.populations().to_vec(),
            inertia: fit.certificate.final_inertia(),
        };
        let (csv, meta_path, inertia) = (self.path(MODES), self.path(MODES_META), self.path(MODES_INERTIA));
        formats::write_modes(&csv, &meta_path, &fit.modes, &meta)?;
        formats::write_text(
            &inertia,
            &formats::curve_csv(&[("inertia", &fit.certificate.inertia_history)]),
        )?;
        let endpoints: Vec<String> = fit
            .modes
            .endpoints()
            .iter()
            .map(|p| format!("({:.2}, {:.2})", p[0], p[1]))
            .collect();
        let summary = format!(
            "{} modes from {} futures in {} iterations; endpoints {}",
            fit.modes.len(),
            futures.len(),
            fit.certificate.iterations,
            endpoints.join(" ")
        );
        self.finish(&mut m, &[&csv, &meta_path, &inertia], summary)
    }

    pub fn train_goal(&self) -> Result<Outcome> {
        let mut m = self.manifest("train-goal")?;
        let data = self.load_data(&mut m)?;
        let (modes, fingerprint) = self.load_modes(&mut m, &data)?;
        let mut net = GoalNet::new(self.cfg.goalnet())?;
        let samples: Vec<GoalSample> = data
            .train
            .iter()
            .map(|s| GoalSample::from_window(&s.window, net.config.max_neighbors))
            .collect();
        let run = train_goalnet(&mut net, &modes, &samples)?;
        let (ckpt, curve) = (self.path(GOAL_CHECKPOINT), self.path(GOAL_CURVE));
        store::save_goalnet(&ckpt, &net, &fingerprint)?;
        let c = &run.curve;
        formats::write_text(
            &curve,
            &formats::curve_csv(&[("total", &c.total), ("goal", &c.goal), ("probability", &c.probability)]),
        )?;
        let mut summary = format!(
            "goal network: {} epochs, final loss {:.4} (goal {:.4}, probability {:.4})",
            c.total.len(),
            c.total.last().copied().unwrap_or(f64::NAN),
            c.goal.last().copied().unwrap_or(f64::NAN),
            c.probability.last().copied().unwrap_or(f64::NAN)
        );
        if let Some(e) = run.diverged_at {
            summary.push_str(&format!("; diverged at epoch {e}, kept the previous epoch"));
        }
        self.finish(&mut m, &[&ckpt, &curve], summary)
    }

    pub fn train_nsf(&self) -> Result<Outcome> {
        let mut m = self.manifest("train-nsf")?;
        let data = self.load_data(&mut m)?;
        let mut samples: Vec<NsfSample> = data.train.iter().map(NsfSample::from_prepared).collect();
        if !self.cfg.oracle_goals {
            let (modes, fingerprint) = self.load_modes(&mut m, &data)?;
            let net = self.load_goalnet(&mut m, &fingerprint)?;
            for (s, p) in samples.iter_mut().zip(&data.train) {
                let input = GoalSample::from_window(&p.window, net.config.max_neighbors);
                s.goal = nearest_predicted_goal(&net, &modes, &input, self.cfg.k, s.goal)?;
            }
        }
        let mut nets = ForceNets::new(self.cfg.nsf())?;
        let run = train_nsf(&mut nets, &samples)?;
        let (ckpt, curve) = (self.path(NSF_CHECKPOINT), self.path(NSF_CURVE));
        store::save_force_nets(&ckpt, &nets)?;
        formats::write_text(
            &curve,
            &formats::curve_csv(&[("phase1", &run.phase1), ("phase2", &run.phase2)]),
        )?;
        let mut summary = format!(
            "force networks: phase 1 loss {:.4}, phase 2 loss {:.4}",
            run.phase1.last().copied().unwrap_or(f64::NAN),
            run.phase2.last().copied().unwrap_or(f64::NAN)
        );
        if let Some((phase, e)) = run.diverged {
            summary.push_str(&format!(
                "; {} diverged at epoch {e}, kept the previous epoch",
                phase.as_str()
            ));
        }
        self.finish(&mut m, &[&ckpt, &curve], summary)
    }

    pub fn eval(&self) -> Result<Outcome> {
        let mut m = self.manifest("eval")?;
        let nsf_path = require(self.path(NSF_CHECKPOINT), "force network checkpoint", "train-nsf")?;
        let data = self.load_data(&mut m)?;
        let (modes, fingerprint) = self.load_modes(&mut m, &data)?;
        let goalnet = self.load_goalnet(&mut m, &fingerprint)?;
        m.input(&nsf_path)?;
        let nets = store::load_force_nets(&nsf_path)?;
        let plot = self.cfg.plot_window;
        if plot >= data.test.len() {
            return Err(Error::Config(vec![format!(
                "plot_window {plot} is out of range; the test split has {} windows",
                data.test.len()
            )]));
        }

        let predictor = Predictor {
            modes: &modes,
            goalnet: &goalnet,
            nets: &nets,
            options: RolloutOptions::FULL,
            k: self.cfg.k,
        };
        let mut exported = Vec::with_capacity(data.test.len());
        let mut plot_goal = [0.0, 0.0];
        let model = evaluate_with(&predictor, &data.test, self.cfg.lane_width, |i, p| {
            let w = &data.test[i].window;
            if i == plot {
                plot_goal = p.goals.goals[p.scores.best];
            }
            let hypotheses = p
                .goals
                .renormalized
                .iter()
                .copied()
                .zip(p.trajectories.iter().cloned())
                .collect();
            exported.push((
                i,
                WindowTrajectories {
                    history: w.observed_positions(),
                    truth: w.future_positions(),
                    hypotheses,
                    best: p.scores.best,
                },
            ));
        })?;
        let cv = evaluate_baseline(&data.test, self.cfg.lane_width, baseline_cv)?;
        let ca = evaluate_baseline(&data.test, self.cfg.lane_width, baseline_ca)?;
        let rows: Vec<(String, &Evaluation)> = vec![
            ("model".into(), &model),
            ("constant_velocity".into(), &cv),
            ("constant_acceleration".into(), &ca),
        ];

        let sample = &data.test[plot];
        let forces = rollout(
            &nets,
            &Scene::from_window(&sample.window, &sample.lanes),
            plot_goal,
            RolloutOptions::FULL,
        )?;
        let paths = [
            self.path(METRICS_CSV),
            self.path(METRICS_TXT),
            self.path(PREDICTIONS),
            self.path(FORCES_CSV),
            self.path(FORCES_JSONL),
            self.path(FORCE_LANES),
        ];
        let table = formats::metrics_table(&rows);
        formats::write_text(&paths[0], &formats::metrics_csv(&rows))?;
        formats::write_text(&paths[1], &table)?;
        formats::write_predictions(&paths[2], &exported)?;
        formats::write_forces_csv(&paths[3], &forces.breakdowns)?;
        formats::write_forces_jsonl(&paths[4], &forces.breakdowns)?;
        formats::write_lanes(&paths[5], &sample.lanes)?;
        let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
        self.finish(&mut m, &refs, table)
    }

    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            goalnet: self.cfg.goalnet(),
            nsf: self.cfg.nsf(),
            modes: self.cfg.modes,
            k: self.cfg.k,
            lane_width: self.cfg.lane_width,
            oracle_goals: self.cfg.oracle_goals,
            seed: self.cfg.seed,
        }
    }

    pub fn ablate(&self) -> Result<Outcome> {
        let mut m = self.manifest("ablate")?;
        let data = self.load_data(&mut m)?;
        let report = run_ablation(&data.train, &data.test, &self.ablation_config())?;
        let (csv, txt) = (self.path(ABLATION_CSV), self.path(ABLATION_TXT));
        let table = formats::ablation_table(&report);
        formats::write_text(&csv, &formats::ablation_csv(&report))?;
        formats::write_text(&txt, &table)?;
        self.finish(&mut m, &[&csv, &txt], table)
    }

    pub fn plot(&self, kind: PlotKind, window: Option<usize>, step: usize, output: Option<PathBuf>) -> Result<Outcome> {
        let mut m = self.manifest(&format!("plot-{}", kind.as_str()))?;
        let target = output.unwrap_or_else(|| self.path(&format!("{}.svg", kind.as_str())));
        let text = match kind {
            PlotKind::Modes => {
                let csv = require(self.path(MODES), "intention modes", "cluster")?;
                let meta = require(self.path(MODES_META), "intention modes", "cluster")?;
                m.input(&csv)?;
                m.input(&meta)?;
                let (modes, _) = formats::read_modes(&csv, &meta)?;
                svg::modes_svg(&modes, self.cfg.lane_width)
            }
            PlotKind::Multimodal => {
                let path = require(self.path(PREDICTIONS), "predictions", "eval")?;
                m.input(&path)?;
                let w = window.unwrap_or(self.cfg.plot_window);
                let traj = formats::read_predictions(&path, w)?;
                svg::multimodal_svg(
                    &traj,
                    &format!("test window {w}: {} predictions", traj.hypotheses.len()),
                )
            }
            PlotKind::Forces => {
                let path = require(self.path(FORCES_JSONL), "force breakdown", "eval")?;
                let lanes_path = require(self.path(FORCE_LANES), "force breakdown", "eval")?;
                m.input(&path)?;
                m.input(&lanes_path)?;
                let breakdowns = formats::read_forces_jsonl(&path)?;
                let b = breakdowns.get(step).ok_or_else(|| {
                    Error::Format(format!(
                        "step {step} is out of range; the rollout has {} steps",
                        breakdowns.len()
                    ))
                })?;
                let lanes = formats::read_lanes(&lanes_path)?;
                svg::forces_svg(b, &lanes, &format!("test window {}", self.cfg.plot_window))
            }
        };
        formats::write_text(&target, &text)?;
        self.finish(&mut m, &[&target], format!("wrote {}", target.display()))
    }
}
