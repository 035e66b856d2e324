//! Task protocols (simple, clutter, held-out shapes), reports and the end-to-end
//! pipeline.
//!
//! Every trial derives its scene and optimizer seeds from the run seed and the trial
//! index, so trials are independent and run concurrently; results are reduced in trial
//! order.

mod report;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GraspError, Result};
use crate::field::{ConstantField, EvaluatorWeights, GraspValueField, LearnedField, OracleField, DEFAULT_TEMPERATURE};
use crate::optimizer::{optimize, slice_values, OptimizeConfig, SliceAxis, SliceGrid};
use crate::scene::{
    apply_outcome, generate_scene_retrying, GraspOracle, GraspOutcome, Scene, SceneGenConfig, SceneKind,
    ShapeMix, SuccessTolerance,
};
use crate::se3::Pose6;
use crate::seed::{derive_seed, rng_from_seed};
use crate::train::{generate_dataset, train_evaluator, TrainConfig};

pub use report::{export_report, load_report, report_table};

/// Clutter episodes stop after this many attempts.
pub const MAX_CLUTTER_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Oracle,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Simple,
    Clutter,
    Heldout,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simple => "simple",
            Task::Clutter => "clutter",
            Task::Heldout => "heldout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub field: FieldKind,
    /// Required for [`FieldKind::Learned`].
    pub weights: Option<PathBuf>,
    /// Simple and held-out trials.
    pub trials: usize,
    /// Clutter episodes.
    pub episodes: usize,
    pub max_attempts: usize,
    pub seed: u64,
    pub optimize: OptimizeConfig,
    pub tolerance: SuccessTolerance,
    /// Oracle field temperature.
    pub temperature: f64,
    pub scenes: SceneGenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            field: FieldKind::Oracle,
            weights: None,
            trials: 100,
            episodes: 20,
            max_attempts: MAX_CLUTTER_ATTEMPTS,
            seed: 0,
            optimize: OptimizeConfig::default(),
            tolerance: SuccessTolerance::default(),
            temperature: DEFAULT_TEMPERATURE,
            scenes: SceneGenConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimize.validate()?;
        self.scenes.workspace.validate()?;
        if !(self.tolerance.translation >= 0.0) || !(self.tolerance.rotation >= 0.0) {
            return Err(GraspError::InvalidConfig("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

/// The field evaluated in every trial, built per scene.
#[derive(Debug, Clone)]
pub enum FieldSource {
    Oracle { temperature: f64 },
    Learned(EvaluatorWeights),
}

impl FieldSource {
    /// Loads the weights file for a learned run.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match (cfg.field, &cfg.weights) {
            (FieldKind::Oracle, _) => FieldSource::Oracle {
                temperature: cfg.temperature,
            },
            (FieldKind::Learned, Some(path)) => FieldSource::Learned(EvaluatorWeights::load(path)?),
            (FieldKind::Learned, None) => {
                return Err(GraspError::InvalidConfig("learned field needs a weights path".into()))
            }
        })
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            FieldSource::Oracle { .. } => FieldKind::Oracle,
            FieldSource::Learned(_) => FieldKind::Learned,
        }
    }

    /// The oracle has nothing to offer on a scene without valid grasps; it then becomes
    /// a constant field and the optimizer returns its first candidate unchanged.
    pub fn build(&self, scene: &Scene) -> Result<Box<dyn GraspValueField>> {
        Ok(match self {
            FieldSource::Oracle { temperature } => match OracleField::new(scene, *temperature) {
                Ok(f) => Box::new(f),
                Err(GraspError::NoGraspableObject) => Box::new(ConstantField(0.0)),
                Err(e) => return Err(e),
            },
            FieldSource::Learned(w) => Box::new(LearnedField::new(w.clone(), scene)?),
        })
    }

    fn digest_tag(&self) -> String {
        match self {
            FieldSource::Oracle { .. } => "oracle".into(),
            FieldSource::Learned(w) => hex(&Sha256::digest(w.to_bytes())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub field: FieldKind,
    /// Trials, or episodes for clutter.
    pub trials: usize,
    pub attempts: usize,
    pub successes: usize,
    /// `successes / attempts`
    pub success_rate: f64,
    /// Mean errors of attempted grasps to the nearest valid grasp; m and rad.
    pub mean_t_err: f64,
    pub mean_r_err: f64,
    /// The same means over successful attempts only; `None` without successes.
    pub mean_t_err_success: Option<f64>,
    pub mean_r_err_success: Option<f64>,
    /// Mean per clutter episode.
    pub cleared: Option<f64>,
    pub dropped: Option<f64>,
    pub config_digest: String,
}

/// One executed grasp.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub pose: Pose6,
    pub value: f64,
    pub outcome: GraspOutcome,
    /// `None` when the scene had no valid grasp.
    pub errors: Option<(f64, f64)>,
}

/// Object counts after one clutter attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClutterStep {
    pub outcome: GraspOutcome,
    pub cleared: usize,
    pub dropped: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub initial: usize,
    pub steps: Vec<ClutterStep>,
    pub attempts: Vec<Attempt>,
}

impl Episode {
    pub fn cleared(&self) -> usize {
        self.steps.last().map_or(0, |s| s.cleared)
    }

    pub fn dropped(&self) -> usize {
        self.steps.last().map_or(0, |s| s.dropped)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the canonical (key-sorted) JSON of the task, the configuration and the
/// field identity.
pub fn config_digest(task: Task, cfg: &RunConfig, field: &FieldSource) -> Result<String> {
    let value = serde_json::to_value(serde_json::json!({
        "task": task,
        "config": cfg,
        "field": field.digest_tag(),
    }))?;
    Ok(hex(&Sha256::digest(serde_json::to_string(&value)?.as_bytes())))
}

fn attempt(field: &FieldSource, scene: &Scene, cfg: &RunConfig, opt_seed: u64) -> Result<Attempt> {
    let f = field.build(scene)?;
    let r = optimize(&f, &scene.workspace, &cfg.optimize, &mut rng_from_seed(opt_seed))?;
    let oracle = GraspOracle::new(scene);
    let errors = match oracle.nearest(&r.best) {
        Ok(n) => Some((n.t_err, n.r_err)),
        Err(GraspError::NoGraspableObject) => None,
        Err(e) => return Err(e),
    };
    Ok(Attempt {
        pose: r.best,
        value: r.best_value,
        outcome: oracle.simulate(&r.best, &cfg.tolerance),
        errors,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(
    task: Task,
    trials: usize,
    attempts: &[&Attempt],
    clutter: Option<(f64, f64)>,
    digest: String,
    field: FieldKind,
) -> TaskReport {
    let successes = attempts.iter().filter(|a| a.outcome.is_success()).count();
    let errs = || attempts.iter().filter_map(|a| a.errors);
    let ok_errs = || attempts.iter().filter(|a| a.outcome.is_success()).filter_map(|a| a.errors);
    TaskReport {
        task,
        field,
        trials,
        attempts: attempts.len(),
        successes,
        success_rate: if attempts.is_empty() {
            0.0
        } else {
            successes as f64 / attempts.len() as f64
        },
        mean_t_err: mean(errs().map(|e| e.0)).unwrap_or(f64::NAN),
        mean_r_err: mean(errs().map(|e| e.1)).unwrap_or(f64::NAN),
        mean_t_err_success: mean(ok_errs().map(|e| e.0)),
        mean_r_err_success: mean(ok_errs().map(|e| e.1)),
        cleared: clutter.map(|c| c.0),
        dropped: clutter.map(|c| c.1),
        config_digest: digest,
    }
}

fn single_object_task(task: Task, cfg: &RunConfig, field: &FieldSource) -> Result<(TaskReport, Vec<Attempt>)> {
    cfg.validate()?;
    if cfg.trials == 0 {
        return Err(GraspError::InvalidConfig("at least one trial is required".into()));
    }
    let mut scenes = cfg.scenes.clone();
    if task == Task::Heldout {
        scenes.shapes = ShapeMix::TShapes;
    }
    let label = task.name();
    let attempts: Vec<Attempt> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let wrap = |e| GraspError::Trial {
                trial: i,
                source: Box::new(e),
            };
            let scene_seed = derive_seed(cfg.seed, &format!("{label}-scene"), i as u64);
            let scene = generate_scene_retrying(&scenes, SceneKind::Simple, scene_seed).map_err(wrap)?;
            attempt(field, &scene, cfg, derive_seed(cfg.seed, &format!("{label}-optimize"), i as u64)).map_err(wrap)
        })
        .collect::<Result<_>>()?;
    let digest = config_digest(task, cfg, field)?;
    let refs: Vec<&Attempt> = attempts.iter().collect();
    Ok((summarize(task, cfg.trials, &refs, None, digest, field.kind()), attempts))
}

/// One grasp per independently seeded simple scene.
pub fn run_simple(cfg: &RunConfig) -> Result<TaskReport> {
    run_simple_with(cfg, &FieldSource::from_config(cfg)?).map(|r| r.0)
}

pub fn run_simple_with(cfg: &RunConfig, field: &FieldSource) -> Result<(TaskReport, Vec<Attempt>)> {
    single_object_task(Task::Simple, cfg, field)
}

/// The simple protocol on T-shape-only scenes.
pub fn run_heldout(cfg: &RunConfig) -> Result<TaskReport> {
    run_heldout_with(cfg, &FieldSource::from_config(cfg)?).map(|r| r.0)
}

pub fn run_heldout_with(cfg: &RunConfig, field: &FieldSource) -> Result<(TaskReport, Vec<Attempt>)> {
    single_object_task(Task::Heldout, cfg, field)
}

/// Runs attempts chosen by `policy` until the scene is empty or `max_attempts` is
/// reached.
pub fn run_episode<P, R>(mut scene: Scene, max_attempts: usize, world: &mut R, mut policy: P) -> Result<Episode>
where
    P: FnMut(&Scene, usize) -> Result<Attempt>,
    R: rand::Rng + ?Sized,
{
    let initial = scene.objects.len();
    let (mut cleared, mut dropped) = (0, 0);
    let mut steps = Vec::new();
    let mut attempts = Vec::new();
    for k in 0..max_attempts {
        if scene.is_empty() {
            break;
        }
        let a = policy(&scene, k)?;
        let applied = apply_outcome(&scene, &a.outcome, world);
        cleared += applied.cleared;
        dropped += applied.dropped;
        scene = applied.scene;
        steps.push(ClutterStep {
            outcome: a.outcome,
            cleared,
            dropped,
            remaining: scene.objects.len(),
        });
        attempts.push(a);
    }
    Ok(Episode {
        initial,
        steps,
        attempts,
    })
}

fn clutter_episode(cfg: &RunConfig, field: &FieldSource, index: usize) -> Result<Episode> {
    let scene = generate_scene_retrying(
        &cfg.scenes,
        SceneKind::Clutter,
        derive_seed(cfg.seed, "clutter-scene", index as u64),
    )?;
    let mut world = rng_from_seed(derive_seed(cfg.seed, "clutter-world", index as u64));
    let opt = derive_seed(cfg.seed, "clutter-optimize", index as u64);
    run_episode(scene, cfg.max_attempts, &mut world, |s, k| {
        attempt(field, s, cfg, derive_seed(opt, "attempt", k as u64))
    })
}

/// Episodes of up to `max_attempts` grasps on a clutter scene; grasped objects are
/// removed and hit objects pushed.
pub fn run_clutter(cfg: &RunConfig) -> Result<TaskReport> {
    run_clutter_with(cfg, &FieldSource::from_config(cfg)?).map(|r| r.0)
}

pub fn run_clutter_with(cfg: &RunConfig, field: &FieldSource) -> Result<(TaskReport, Vec<Episode>)> {
    cfg.validate()?;
    if cfg.episodes == 0 {
        return Err(GraspError::InvalidConfig("at least one episode is required".into()));
    }
    let episodes: Vec<Episode> = (0..cfg.episodes)
        .into_par_iter()
        .map(|i| {
            clutter_episode(cfg, field, i).map_err(|e| GraspError::Trial {
                trial: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let n = episodes.len() as f64;
    let cleared = episodes.iter().map(|e| e.cleared() as f64).sum::<f64>() / n;
    let dropped = episodes.iter().map(|e| e.dropped() as f64).sum::<f64>() / n;
    let all: Vec<&Attempt> = episodes.iter().flat_map(|e| &e.attempts).collect();
    let digest = config_digest(Task::Clutter, cfg, field)?;
    Ok((
        summarize(Task::Clutter, cfg.episodes, &all, Some((cleared, dropped)), digest, field.kind()),
        episodes,
    ))
}

/// Sizes of the end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub train_scenes: usize,
    pub train: TrainConfig,
    /// Learned-field evaluation; `field` and `weights` are ignored.
    pub run: RunConfig,
    pub slice_extent: f64,
    pub slice_resolution: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train_scenes: 128,
            train: TrainConfig::default(),
            run: RunConfig {
                scenes: SceneGenConfig {
                    shapes: ShapeMix::Boxes,
                    ..SceneGenConfig::default()
                },
                ..RunConfig::default()
            },
            slice_extent: 0.05,
            slice_resolution: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub weights: Vec<u8>,
    pub loss_trace: Vec<f64>,
    pub report: TaskReport,
    pub slice: SliceGrid,
}

/// Generate scenes and demonstrations, train, optimize on fresh scenes, grade, and
/// slice the learned field around a demonstration. Every stage seeds from `master_seed`.
pub fn pipeline(master_seed: u64, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let dataset = generate_dataset(
        &cfg.run.scenes,
        &cfg.train,
        cfg.train_scenes,
        derive_seed(master_seed, "pipeline-dataset", 0),
    )?;
    let trained = train_evaluator(
        &dataset,
        &cfg.train,
        &mut rng_from_seed(derive_seed(master_seed, "pipeline-train", 0)),
    )?;
    let run = RunConfig {
        field: FieldKind::Learned,
        weights: None,
        seed: derive_seed(master_seed, "pipeline-run", 0),
        ..cfg.run.clone()
    };
    let field = FieldSource::Learned(trained.weights.clone());
    let (report, _) = single_object_task(Task::Simple, &run, &field)?;
    let scene = generate_scene_retrying(
        &cfg.run.scenes,
        SceneKind::Simple,
        derive_seed(master_seed, "pipeline-slice-scene", 0),
    )?;
    let center = GraspOracle::new(&scene)
        .demonstrate(&mut rng_from_seed(derive_seed(master_seed, "pipeline-slice-demo", 0)))?;
    let learned = LearnedField::new(trained.weights.clone(), &scene)?;
    let slice = slice_values(
        &learned,
        &center,
        [SliceAxis::Tx, SliceAxis::Ty],
        cfg.slice_extent,
        cfg.slice_resolution,
    )?;
    Ok(PipelineOutput {
        weights: trained.weights.to_bytes(),
        loss_trace: trained.loss_trace,
        report,
        slice,
    })
}
