//! Staged gradient ascent on a grasp-value field.
//!
//! Random candidates are optimized independently: a position-only stage, then an
//! orientation-only stage, each with fresh Adam moments and an exponentially decaying
//! learning rate `lr_k = initial_lr * decay^k`. Every step is followed by
//! [`post_process`]. The final pose with the highest value wins; ties go to the lowest
//! candidate index.

mod adam;
mod slice;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GraspError, Result};
use crate::field::GraspValueField;
use crate::se3::{post_process, random_orientation, Pose6, RawPose, Vec3, Workspace};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use slice::{perturb_in_tcp_frame, slice_values, SliceAxis, SliceGrid, SliceMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveDims {
    PositionOnly,
    OrientationOnly,
    Both,
}

impl ActiveDims {
    fn mask(self) -> [bool; 7] {
        match self {
            ActiveDims::PositionOnly => [true, true, true, false, false, false, false],
            ActiveDims::OrientationOnly => [false, false, false, true, true, true, true],
            ActiveDims::Both => [true; 7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub steps: usize,
    pub initial_lr: f64,
    pub decay: f64,
    pub active_dims: ActiveDims,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(GraspError::InvalidConfig(format!(
                "stage needs initial_lr > 0 and 0 < decay <= 1, got {} and {}",
                self.initial_lr, self.decay
            )));
        }
        Ok(())
    }

    pub fn lr(&self, step: usize) -> f64 {
        self.initial_lr * self.decay.powi(step as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub n_candidates: usize,
    pub stages: Vec<StageConfig>,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            n_candidates: 64,
            stages: vec![
                StageConfig {
                    steps: 16,
                    initial_lr: 0.05,
                    decay: 0.9,
                    active_dims: ActiveDims::PositionOnly,
                },
                StageConfig {
                    steps: 16,
                    initial_lr: 0.05,
                    decay: 0.99,
                    active_dims: ActiveDims::OrientationOnly,
                },
            ],
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(GraspError::InvalidConfig("n_candidates must be at least 1".into()));
        }
        self.stages.iter().try_for_each(StageConfig::validate)
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }
}

/// One pose visited by one candidate. `stage` is `None` for the initial pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub candidate: usize,
    pub stage: Option<usize>,
    pub step: usize,
    #[serde(with = "pose_params")]
    pub pose: Pose6,
    pub value: f64,
}

mod pose_params {
    use super::Pose6;
    use crate::se3::RawPose;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Pose6, s: S) -> Result<S::Ok, S::Error> {
        p.to_params().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose6, D::Error> {
        let params = <[f64; 7]>::deserialize(d)?;
        RawPose::from_params(&params).to_pose().map_err(serde::de::Error::custom)
    }
}

/// Every visited pose, grouped by candidate in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeTrace {
    pub records: Vec<TraceRecord>,
    pub best_index: usize,
}

impl OptimizeTrace {
    pub fn candidate(&self, i: usize) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.candidate == i)
    }

    /// Final record of every candidate, in index order.
    pub fn finals(&self) -> Vec<&TraceRecord> {
        let mut out: Vec<&TraceRecord> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some(last) if last.candidate == r.candidate => *last = r,
                _ => out.push(r),
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| GraspError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w).map_err(|e| GraspError::io(path, e))?;
        w.flush().map_err(|e| GraspError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: Pose6,
    pub best_value: f64,
    pub trace: OptimizeTrace,
}

/// Uniform positions in `ws` with uniformly random orientations.
pub fn random_candidates<R: Rng + ?Sized>(ws: &Workspace, n: usize, rng: &mut R) -> Vec<Pose6> {
    (0..n)
        .map(|_| {
            let p = Vec3::from_fn(|i, _| {
                if ws.max[i] > ws.min[i] {
                    rng.random_range(ws.min[i]..ws.max[i])
                } else {
                    ws.min[i]
                }
            });
            Pose6::new(p, random_orientation(rng))
        })
        .collect()
}

fn run_candidate<F: GraspValueField + ?Sized>(
    field: &F,
    ws: &Workspace,
    stages: &[StageConfig],
    index: usize,
    start: Pose6,
) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::with_capacity(1 + stages.iter().map(|s| s.steps).sum::<usize>());
    let mut pose = start;
    records.push(TraceRecord {
        candidate: index,
        stage: None,
        step: 0,
        pose,
        value: field.value_at(&pose)?,
    });
    let mut inc = [0.0; 7];
    for (si, stage) in stages.iter().enumerate() {
        let mask = stage.active_dims.mask();
        let mut adam = AdamState::new(7);
        for k in 0..stage.steps {
            let raw = pose.to_raw();
            let mut g = field.gradient(&raw)?;
            for (gi, active) in g.iter_mut().zip(mask) {
                if !active {
                    *gi = 0.0;
                }
            }
            adam.step_into(&g, stage.lr(k), &mut inc)?;
            let mut params = raw.to_params();
            for (p, (d, active)) in params.iter_mut().zip(inc.iter().zip(mask)) {
                if active {
                    *p += d;
                }
            }
            pose = post_process(&RawPose::from_params(&params), ws)?;
            records.push(TraceRecord {
                candidate: index,
                stage: Some(si),
                step: k + 1,
                pose,
                value: field.value_at(&pose)?,
            });
        }
    }
    Ok(records)
}

/// Optimizes the given starting poses. Candidates run concurrently; the result does
/// not depend on scheduling.
pub fn optimize_from<F: GraspValueField + ?Sized>(
    field: &F,
    ws: &Workspace,
    cfg: &OptimizeConfig,
    candidates: &[Pose6],
) -> Result<OptimizeResult> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(GraspError::InvalidConfig("no candidates".into()));
    }
    let per: Vec<Vec<TraceRecord>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_candidate(field, ws, &cfg.stages, i, *c))
        .collect::<Result<_>>()?;
    let mut best_index = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, recs) in per.iter().enumerate() {
        let v = recs.last().expect("initial record").value;
        if v > best_value {
            best_value = v;
            best_index = i;
        }
    }
    let best = per[best_index].last().expect("initial record").pose;
    Ok(OptimizeResult {
        best,
        best_value,
        trace: OptimizeTrace {
            records: per.into_iter().flatten().collect(),
            best_index,
        },
    })
}

/// Samples `cfg.n_candidates` random candidates from `rng` and optimizes them.
pub fn optimize<F: GraspValueField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    ws: &Workspace,
    cfg: &OptimizeConfig,
    rng: &mut R,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let candidates = random_candidates(ws, cfg.n_candidates, rng);
    optimize_from(field, ws, cfg, &candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstantField, Gradient, OracleField, DEFAULT_TEMPERATURE};
    use crate::scene::{PrismObject, Scene, Shape};
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;

    /// Smooth bump centered at a target position, independent of orientation.
    struct Bump(Vec3);

    impl GraspValueField for Bump {
        fn value(&self, p: &RawPose) -> Result<f64> {
            Ok((-(p.position - self.0).norm_squared() / 0.02).exp())
        }
        fn gradient(&self, p: &RawPose) -> Result<Gradient> {
            let v = self.value(p)?;
            let d = (p.position - self.0) * (-2.0 * v / 0.02);
            Ok([d.x, d.y, d.z, 0.0, 0.0, 0.0, 0.0])
        }
    }

    fn box_scene() -> Scene {
        Scene::new(
            vec![PrismObject::upright(Shape::Box { size: [0.03, 0.06, 0.04] }, 0.02, -0.03, 0.4, 0)],
            Workspace::default(),
            0,
        )
    }

    #[test]
    fn trace_length_and_stage_masking() {
        let field = OracleField::new(&box_scene(), DEFAULT_TEMPERATURE).unwrap();
        let ws = Workspace::default();
        let cfg = OptimizeConfig {
            n_candidates: 6,
            ..Default::default()
        };
        let res = optimize(&field, &ws, &cfg, &mut rng_from_seed(1)).unwrap();
        assert_eq!(res.trace.records.len(), 6 * 33);
        for i in 0..6 {
            let recs: Vec<_> = res.trace.candidate(i).collect();
            let init = recs[0].pose;
            let after_pos = recs[16].pose;
            for r in &recs[1..=16] {
                assert_eq!(r.pose.wxyz().map(f64::to_bits), init.wxyz().map(f64::to_bits));
            }
            for r in &recs[17..] {
                assert_eq!(r.pose.position, after_pos.position);
            }
            for r in &recs {
                assert!(ws.contains(&r.pose.position));
                assert!((r.pose.orientation.into_inner().norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_steps_returns_argmax_of_initial_candidates() {
        let target = Vec3::new(0.05, 0.0, 0.1);
        let cfg = OptimizeConfig {
            n_candidates: 16,
            stages: vec![],
            seed: 0,
        };
        let ws = Workspace::default();
        let cands = random_candidates(&ws, 16, &mut rng_from_seed(2));
        let res = optimize_from(&Bump(target), &ws, &cfg, &cands).unwrap();
        let best = cands
            .iter()
            .enumerate()
            .max_by(|a, b| {
                let va = (-(a.1.position - target).norm_squared()).exp();
                let vb = (-(b.1.position - target).norm_squared()).exp();
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        assert_eq!(res.trace.best_index, best.0);
        assert_eq!(res.best, *best.1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let ws = Workspace::default();
        let res = optimize(&ConstantField(0.5), &ws, &OptimizeConfig::default(), &mut rng_from_seed(3)).unwrap();
        assert_eq!(res.trace.best_index, 0);
    }

    #[test]
    fn climbs_a_bump() {
        let target = Vec3::new(0.05, -0.05, 0.1);
        let ws = Workspace::default();
        let cfg = OptimizeConfig {
            n_candidates: 8,
            ..Default::default()
        };
        let res = optimize(&Bump(target), &ws, &cfg, &mut rng_from_seed(4)).unwrap();
        let init_best = res.trace.records.iter().filter(|r| r.stage.is_none()).map(|r| r.value).fold(0.0, f64::max);
        assert!(res.best_value > init_best);
        assert!(res.trace.finals().iter().all(|r| r.value <= res.best_value));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let field = OracleField::new(&box_scene(), DEFAULT_TEMPERATURE).unwrap();
        let ws = Workspace::default();
        let cfg = OptimizeConfig {
            n_candidates: 5,
            ..Default::default()
        };
        let cands = random_candidates(&ws, 5, &mut rng_from_seed(5));
        let all = optimize_from(&field, &ws, &cfg, &cands).unwrap();
        for (i, c) in cands.iter().enumerate() {
            let one = run_candidate(&field, &ws, &cfg.stages, i, *c).unwrap();
            let from_all: Vec<_> = all.trace.candidate(i).copied().collect();
            assert_eq!(one, from_all);
        }
    }

    #[test]
    fn jsonl_has_one_line_per_record() {
        let ws = Workspace::default();
        let cfg = OptimizeConfig {
            n_candidates: 2,
            ..Default::default()
        };
        let res = optimize(&Bump(Vec3::zeros()), &ws, &cfg, &mut rng_from_seed(6)).unwrap();
        let mut buf = Vec::new();
        res.trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 66);
        let back: TraceRecord = serde_json::from_str(lines[40]).unwrap();
        assert_eq!(back.candidate, 1);
        assert!((back.value - res.trace.records[40].value).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ws = Workspace::default();
        let mut cfg = OptimizeConfig {
            n_candidates: 0,
            ..Default::default()
        };
        assert!(optimize(&ConstantField(0.0), &ws, &cfg, &mut rng_from_seed(0)).is_err());
        cfg.n_candidates = 1;
        cfg.stages[1].decay = 1.5;
        assert!(optimize(&ConstantField(0.0), &ws, &cfg, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn candidate_positions_are_centered() {
        let ws = Workspace::default();
        let c = random_candidates(&ws, 10_000, &mut rng_from_seed(7));
        let mean = c.iter().map(|p| p.position).sum::<Vec3>() / c.len() as f64;
        let ext = ws.extent();
        for i in 0..3 {
            // Uniform variance is extent^2 / 12.
            let sigma = ext[i] / 12f64.sqrt() / (c.len() as f64).sqrt();
            assert!((mean[i] - ws.center()[i]).abs() < 3.0 * sigma);
        }
    }

    proptest! {
        #[test]
        fn candidates_are_post_process_fixpoints(seed in any::<u64>()) {
            let ws = Workspace::default();
            for p in random_candidates(&ws, 8, &mut rng_from_seed(seed)) {
                prop_assert_eq!(post_process(&p.to_raw(), &ws).unwrap(), p);
            }
        }
    }
}
