//! Behavior-cloning data and cross-entropy training of the readout network.
//!
//! Each scene contributes one demonstrated grasp (the only positive) plus negatives
//! drawn uniformly over the workspace and near the demonstration. Near negatives can
//! be valid grasps by chance; they are labeled negative anyway.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GraspError, Result};
use crate::field::{EvaluatorWeights, NetworkShape, SceneGeometry};
use crate::optimizer::{random_candidates, AdamState};
use crate::scene::{generate_scene_retrying, GraspOracle, Scene, SceneFile, SceneGenConfig, SceneKind};
use crate::se3::{post_process, random_axis_rotation, Pose6, PoseSet5, RawPose, Vec3};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub pose: Pose6,
    pub label: Label,
    pub scene_id: usize,
}

/// Keeps the learned field smooth enough for gradient ascent; without it the trained
/// value collapses to narrow peaks that the optimizer's first steps jump across.
pub const DEFAULT_WEIGHT_DECAY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_uniform: usize,
    pub negatives_near: usize,
    pub near_sigma_t: f64,
    pub near_sigma_r: f64,
    /// Scenes per update.
    pub batch_size: usize,
    /// Decoupled weight decay applied with every update.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            learning_rate: 1e-4,
            negatives_uniform: 32,
            negatives_near: 8,
            near_sigma_t: 0.02,
            near_sigma_r: 15f64.to_radians(),
            batch_size: 1,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(GraspError::InvalidConfig(
                "training needs epochs > 0, learning_rate > 0 and batch_size > 0".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(GraspError::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if !(self.near_sigma_t >= 0.0) || !(self.near_sigma_r >= 0.0) {
            return Err(GraspError::InvalidConfig("near-negative spreads must be non-negative".into()));
        }
        Ok(())
    }
}

/// The demonstration followed by uniform and then near negatives.
pub fn generate_samples<R: Rng + ?Sized>(
    scene: &Scene,
    scene_id: usize,
    demo: &Pose6,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<TrainingSample>> {
    let ws = &scene.workspace;
    let mut out = Vec::with_capacity(1 + cfg.negatives_uniform + cfg.negatives_near);
    out.push(TrainingSample {
        pose: *demo,
        label: Label::Positive,
        scene_id,
    });
    for pose in random_candidates(ws, cfg.negatives_uniform, rng) {
        out.push(TrainingSample {
            pose,
            label: Label::Negative,
            scene_id,
        });
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for _ in 0..cfg.negatives_near {
        let dt = Vec3::from_fn(|_, _| unit.sample(rng) * cfg.near_sigma_t);
        let angle = (unit.sample(rng) * cfg.near_sigma_r).abs();
        let q = demo.orientation * random_axis_rotation(rng, angle);
        let raw = RawPose {
            position: demo.position + dt,
            quaternion: crate::se3::quat_to_wxyz(&q),
        };
        out.push(TrainingSample {
            pose: post_process(&raw, ws)?,
            label: Label::Negative,
            scene_id,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSamples {
    pub scene: Scene,
    pub samples: Vec<TrainingSample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub scenes: Vec<SceneSamples>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.scenes.iter().map(|s| s.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_file(&self) -> DatasetFile {
        DatasetFile {
            scenes: self
                .scenes
                .iter()
                .map(|s| SceneSamplesRecord {
                    scene: s.scene.to_file(),
                    samples: s
                        .samples
                        .iter()
                        .map(|t| SampleRecord {
                            pose: t.pose.to_params(),
                            label: t.label,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: &DatasetFile) -> Result<Self> {
        let scenes = file
            .scenes
            .iter()
            .enumerate()
            .map(|(id, rec)| {
                let samples = rec
                    .samples
                    .iter()
                    .map(|s| {
                        Ok(TrainingSample {
                            pose: RawPose::from_params(&s.pose).to_pose()?,
                            label: s.label,
                            scene_id: id,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(SceneSamples {
                    scene: Scene::from_file(&rec.scene)?,
                    samples,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { scenes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| GraspError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        serde_json::to_writer(&mut w, &self.to_file())?;
        w.flush().map_err(|e| GraspError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GraspError::io(path, e))?;
        Self::from_file(&serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// `(x, y, z, w, qx, qy, qz)`
    pub pose: [f64; 7],
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSamplesRecord {
    pub scene: SceneFile,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub scenes: Vec<SceneSamplesRecord>,
}

/// `n_scenes` simple scenes, each with one demonstration and its negatives. Scene `i`
/// depends only on `(seed, i)`.
pub fn generate_dataset(scene_cfg: &SceneGenConfig, cfg: &TrainConfig, n_scenes: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let scenes = (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene_retrying(scene_cfg, SceneKind::Simple, derive_seed(seed, "dataset-scene", i as u64))?;
            let mut rng = rng_from_seed(derive_seed(seed, "dataset-samples", i as u64));
            let demo = GraspOracle::new(&scene).demonstrate(&mut rng)?;
            let samples = generate_samples(&scene, i, &demo, cfg, &mut rng)?;
            Ok(SceneSamples { scene, samples })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { scenes })
}

/// Features plus targets, grouped by scene.
struct Prepared {
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
    pos_weight: f64,
}

fn prepare(dataset: &Dataset, template: &PoseSet5) -> Result<Vec<Prepared>> {
    dataset
        .scenes
        .par_iter()
        .map(|s| {
            let geom = SceneGeometry::new(&s.scene);
            let features = s
                .samples
                .iter()
                .map(|t| geom.features(template, &t.pose.to_params()))
                .collect::<Result<Vec<_>>>()?;
            let negatives = s.samples.iter().filter(|t| t.label == Label::Negative).count();
            Ok(Prepared {
                features,
                targets: s.samples.iter().map(|t| t.label.target()).collect(),
                pos_weight: negatives.max(1) as f64,
            })
        })
        .collect()
}

/// Weighted binary cross-entropy of one logit, and its derivative.
fn bce(logit: f64, target: f64, pos_weight: f64) -> (f64, f64) {
    // log(sigmoid(z)) = -softplus(-z), log(1 - sigmoid(z)) = -softplus(z)
    let softplus = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
    let p = 1.0 / (1.0 + (-logit).exp());
    let w = if target > 0.5 { pos_weight } else { 1.0 };
    let loss = w * (target * softplus(-logit) + (1.0 - target) * softplus(logit));
    (loss, w * (p - target))
}

/// Mean weighted loss and parameter gradient of one batch.
fn batch_gradient(weights: &EvaluatorWeights, batch: &[&Prepared]) -> Result<(f64, Vec<f64>)> {
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut targets = Vec::new();
    for p in batch {
        for (f, t) in p.features.iter().zip(&p.targets) {
            rows.push(f);
            targets.push((*t, p.pos_weight));
        }
    }
    let norm: f64 = targets.iter().map(|(t, w)| if *t > 0.5 { *w } else { 1.0 }).sum();
    let pass = weights.forward_batch(&rows)?;
    let mut loss = 0.0;
    let dlogits: Vec<f64> = pass
        .logits
        .iter()
        .zip(&targets)
        .map(|(z, (t, w))| {
            let (l, d) = bce(*z, *t, *w);
            loss += l;
            d / norm
        })
        .collect();
    let mut grad = vec![0.0; weights.params.len()];
    weights.backward_batch(&pass, &dlogits, &mut grad);
    Ok((loss / norm, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub weights: EvaluatorWeights,
    /// Mean batch loss of each epoch, measured before each batch's update.
    pub loss_trace: Vec<f64>,
}

impl TrainResult {
    pub fn loss_trace_text(&self) -> String {
        loss_trace_text(&self.loss_trace)
    }
}

/// One `epoch loss` pair per line.
pub fn loss_trace_text(trace: &[f64]) -> String {
    trace.iter().enumerate().map(|(e, l)| format!("{e} {l:?}\n")).collect()
}

/// Trains from a fresh initialization drawn from `rng`; `rng` also drives the epoch
/// shuffles.
pub fn train_evaluator<R: Rng + ?Sized>(dataset: &Dataset, cfg: &TrainConfig, rng: &mut R) -> Result<TrainResult> {
    let init = EvaluatorWeights::init(NetworkShape::default(), rng);
    train_from(init, dataset, cfg, rng)
}

pub fn train_from<R: Rng + ?Sized>(
    mut weights: EvaluatorWeights,
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainResult> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(GraspError::InvalidConfig("empty training set".into()));
    }
    let prepared = prepare(dataset, &PoseSet5::default_template())?;
    let prepared: Vec<&Prepared> = prepared.iter().filter(|p| !p.features.is_empty()).collect();
    let mut adam = AdamState::new(weights.params.len());
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut inc = vec![0.0; weights.params.len()];
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| prepared[i]).collect();
            let (loss, grad) = batch_gradient(&weights, &batch)?;
            if !loss.is_finite() {
                return Err(GraspError::TrainingDiverged { epoch, loss });
            }
            adam.step_into(&grad, cfg.learning_rate, &mut inc)
                .map_err(|_| GraspError::TrainingDiverged { epoch, loss })?;
            let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
            for (p, d) in weights.params.iter_mut().zip(&inc) {
                *p = *p * shrink - d;
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() || !weights.is_finite() {
            return Err(GraspError::TrainingDiverged { epoch, loss: mean });
        }
        loss_trace.push(mean);
    }
    Ok(TrainResult { weights, loss_trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub auc: f64,
    pub samples: usize,
}

/// Rank-based AUC (ties count one half). Returns 0.5 when a class is missing.
pub fn rank_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    // Sum of average ranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg;
        i = j + 1;
    }
    let np = n_pos as f64;
    (rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64)
}

/// Accuracy at threshold 0.5 and rank AUC over every held-out sample.
pub fn evaluate_classifier(weights: &EvaluatorWeights, heldout: &Dataset) -> Result<ClassifierMetrics> {
    if heldout.is_empty() {
        return Err(GraspError::InvalidConfig("empty held-out set".into()));
    }
    let prepared = prepare(heldout, &PoseSet5::default_template())?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for p in &prepared {
        for (f, t) in p.features.iter().zip(&p.targets) {
            scores.push(weights.forward(f)?.value);
            labels.push(*t > 0.5);
        }
    }
    let correct = scores.iter().zip(&labels).filter(|(s, l)| (**s >= 0.5) == **l).count();
    Ok(ClassifierMetrics {
        accuracy: correct as f64 / scores.len() as f64,
        auc: rank_auc(&scores, &labels),
        samples: scores.len(),
    })
}
