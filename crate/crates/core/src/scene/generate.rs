use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gripper::MAX_GRASP_WIDTH;
use super::grasps::ValidGraspSet;
use super::{PrismObject, Scene, SceneKind, Shape};
use crate::error::{GraspError, Result};
use crate::se3::Workspace;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMix {
    Boxes,
    TShapes,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGenConfig {
    pub workspace: Workspace,
    pub shapes: ShapeMix,
    /// Object centers are drawn from `[-h, h]^2` around the workspace center.
    pub simple_half_extent: f64,
    pub clutter_half_extent: f64,
    pub max_objects: usize,
    /// Minimum center distance between objects in simple scenes.
    pub min_separation: f64,
    /// Extra horizontal gap between bounding discs in simple scenes.
    pub simple_gap: f64,
    /// Allowed interpenetration between clutter objects.
    pub max_penetration: f64,
    pub placement_tries: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            workspace: Workspace::default(),
            shapes: ShapeMix::Mixed,
            simple_half_extent: 0.18,
            clutter_half_extent: 0.09,
            max_objects: 5,
            min_separation: 0.12,
            simple_gap: 0.01,
            max_penetration: 0.001,
            placement_tries: 400,
        }
    }
}

fn sample_shape<R: Rng + ?Sized>(mix: ShapeMix, rng: &mut R) -> Shape {
    let t_shape = match mix {
        ShapeMix::Boxes => false,
        ShapeMix::TShapes => true,
        ShapeMix::Mixed => rng.random_bool(0.5),
    };
    if t_shape {
        Shape::TShape {
            arm_length: rng.random_range(0.10..=0.14),
            arm_width: rng.random_range(0.02..=0.035),
            stem_length: rng.random_range(0.04..=0.07),
            stem_width: rng.random_range(0.02..=0.035),
            height: rng.random_range(0.02..=0.05),
        }
    } else {
        let short = rng.random_range(0.02..=0.05f64).min(MAX_GRASP_WIDTH);
        let long = rng.random_range(short..=0.08);
        let height = rng.random_range(0.02..=0.06);
        let size = if rng.random_bool(0.5) {
            [short, long, height]
        } else {
            [long, short, height]
        };
        Shape::Box { size }
    }
}

fn fits(kind: SceneKind, cfg: &SceneGenConfig, placed: &[PrismObject], cand: &PrismObject) -> bool {
    placed.iter().all(|o| match kind {
        SceneKind::Simple => {
            let d = (o.center() - cand.center()).xy().norm();
            d >= cfg.min_separation && d >= o.footprint_radius() + cand.footprint_radius() + cfg.simple_gap
        }
        SceneKind::Clutter => o.penetration(cand) <= cfg.max_penetration,
    })
}

/// Draws a scene from `seed`. Simple scenes hold one to `max_objects` well-separated
/// objects; clutter scenes hold exactly `max_objects` objects that may touch.
///
/// Fails if rejection sampling cannot place an object or the result has no valid grasp.
pub fn generate_scene(cfg: &SceneGenConfig, kind: SceneKind, seed: u64) -> Result<Scene> {
    cfg.workspace.validate()?;
    let mut rng = rng_from_seed(seed);
    let count = match kind {
        SceneKind::Simple => rng.random_range(1..=cfg.max_objects),
        SceneKind::Clutter => cfg.max_objects,
    };
    let half = match kind {
        SceneKind::Simple => cfg.simple_half_extent,
        SceneKind::Clutter => cfg.clutter_half_extent,
    };
    let c = cfg.workspace.center();
    let mut objects: Vec<PrismObject> = Vec::with_capacity(count);
    for k in 0..count {
        let mut placed = false;
        for _ in 0..cfg.placement_tries {
            let shape = sample_shape(cfg.shapes, &mut rng);
            let x = c.x + rng.random_range(-half..=half);
            let y = c.y + rng.random_range(-half..=half);
            let yaw = rng.random_range(0.0..std::f64::consts::TAU);
            let cand = PrismObject::upright(shape, x, y, yaw, (k % 8) as u8);
            if fits(kind, cfg, &objects, &cand) {
                objects.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(GraspError::PlacementFailed {
                tries: cfg.placement_tries,
            });
        }
    }
    let scene = Scene::new(objects, cfg.workspace, seed);
    if ValidGraspSet::compute(&scene).is_empty() {
        return Err(GraspError::NoGraspableObject);
    }
    Ok(scene)
}

/// [`generate_scene`] retried with derived seeds until one succeeds.
pub fn generate_scene_retrying(cfg: &SceneGenConfig, kind: SceneKind, seed: u64) -> Result<Scene> {
    const RETRIES: u64 = 64;
    let mut last = None;
    for attempt in 0..RETRIES {
        let s = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, "scene-retry", attempt)
        };
        match generate_scene(cfg, kind, s) {
            Ok(scene) => return Ok(scene),
            Err(e @ (GraspError::PlacementFailed { .. } | GraspError::NoGraspableObject)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}
