//! Procedural tabletop scenes of upright prismatic objects and the grasp oracle.

mod generate;
pub mod gripper;
mod grasps;
mod simulate;

use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{GraspError, Result};
use crate::geometry::Cuboid;
use crate::se3::{normalize_quaternion, quat_to_wxyz, Pose6, Vec3, Workspace};

pub use generate::{generate_scene, generate_scene_retrying, SceneGenConfig, ShapeMix};
pub use grasps::{
    combined_error, demonstrate_grasp, enumerate_valid_grasps, negative_grasp_error, nearest_valid_grasp,
    object_families, GraspFamily, GraspOracle, GraspSegment, NearestGrasp, ValidGraspSet,
    ROTATION_SCALE, TRANSLATION_SCALE,
};
pub use simulate::{
    apply_outcome, perturb_object, simulate_grasp, AppliedOutcome, GraspOutcome,
    SuccessTolerance, PERTURB_MAX_DISPLACEMENT, PERTURB_MAX_YAW,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Simple,
    Clutter,
}

/// Object geometry in its own frame. The frame origin sits at mid-height; for a box
/// it is the box center, for a T-shape the center of the crossbar (the arm runs along
/// `y`, the stem extends toward `-x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box {
        size: [f64; 3],
    },
    TShape {
        arm_length: f64,
        arm_width: f64,
        stem_length: f64,
        stem_width: f64,
        height: f64,
    },
}

impl Shape {
    pub fn height(&self) -> f64 {
        match *self {
            Shape::Box { size } => size[2],
            Shape::TShape { height, .. } => height,
        }
    }

    pub fn dims(&self) -> Vec<f64> {
        match *self {
            Shape::Box { size } => size.to_vec(),
            Shape::TShape {
                arm_length,
                arm_width,
                stem_length,
                stem_width,
                height,
            } => vec![arm_length, arm_width, stem_length, stem_width, height],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Shape::Box { .. } => "box",
            Shape::TShape { .. } => "t_shape",
        }
    }

    fn from_name(name: &str, dims: &[f64]) -> Result<Shape> {
        let bad = |msg: String| Err(GraspError::InvalidScene(msg));
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return bad(format!("dimensions must be positive: {dims:?}"));
        }
        match (name, dims.len()) {
            ("box", 3) => Ok(Shape::Box {
                size: [dims[0], dims[1], dims[2]],
            }),
            ("t_shape", 5) => Ok(Shape::TShape {
                arm_length: dims[0],
                arm_width: dims[1],
                stem_length: dims[2],
                stem_width: dims[3],
                height: dims[4],
            }),
            _ => bad(format!("unknown shape {name:?} with {} dims", dims.len())),
        }
    }

    /// Boxes making up the shape, in the object frame: `(center, half extents)`.
    pub fn local_parts(&self) -> Vec<(Vec3, Vec3)> {
        match *self {
            Shape::Box { size } => vec![(Vec3::zeros(), Vector3::from(size) * 0.5)],
            Shape::TShape {
                arm_length,
                arm_width,
                stem_length,
                stem_width,
                height,
            } => vec![
                (
                    Vec3::zeros(),
                    Vec3::new(0.5 * arm_width, 0.5 * arm_length, 0.5 * height),
                ),
                (
                    Vec3::new(-(0.5 * arm_width + 0.5 * stem_length), 0.0, 0.0),
                    Vec3::new(0.5 * stem_length, 0.5 * stem_width, 0.5 * height),
                ),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrismObject {
    pub shape: Shape,
    pub pose: Pose6,
    pub color_tag: u8,
}

impl PrismObject {
    /// An upright object resting on the ground at `(x, y)` with the given yaw.
    pub fn upright(shape: Shape, x: f64, y: f64, yaw: f64, color_tag: u8) -> Self {
        let position = Vec3::new(x, y, 0.5 * shape.height());
        PrismObject {
            shape,
            pose: Pose6::new(position, UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)),
            color_tag,
        }
    }

    pub fn parts(&self) -> Vec<Cuboid> {
        self.shape
            .local_parts()
            .into_iter()
            .map(|(c, h)| Cuboid::new(self.pose.transform_point(&c), &self.pose.orientation, h))
            .collect()
    }

    pub fn center(&self) -> Vec3 {
        self.pose.position
    }

    /// Radius around the object origin enclosing all material.
    pub fn bounding_radius(&self) -> f64 {
        self.shape
            .local_parts()
            .iter()
            .map(|(c, h)| c.norm() + h.norm())
            .fold(0.0, f64::max)
    }

    /// Horizontal radius around the object origin enclosing the footprint.
    pub fn footprint_radius(&self) -> f64 {
        self.shape
            .local_parts()
            .iter()
            .map(|(c, h)| c.xy().norm() + h.xy().norm())
            .fold(0.0, f64::max)
    }

    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.parts().iter().map(|c| c.sdf(p)).fold(f64::INFINITY, f64::min)
    }

    /// Deepest penetration between any pair of parts (`<= 0` if disjoint).
    pub fn penetration(&self, other: &PrismObject) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for a in self.parts() {
            for b in other.parts() {
                worst = worst.max(a.penetration(&b));
            }
        }
        worst
    }

    pub fn intersects_box(&self, b: &Cuboid) -> bool {
        self.parts().iter().any(|p| p.intersects(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<PrismObject>,
    pub workspace: Workspace,
    pub seed: u64,
}

impl Scene {
    pub fn new(objects: Vec<PrismObject>, workspace: Workspace, seed: u64) -> Self {
        Scene {
            objects,
            workspace,
            seed,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Applies a rigid motion to every object (the workspace is translated only).
    pub fn transformed(&self, motion: &Pose6) -> Scene {
        let objects = self
            .objects
            .iter()
            .map(|o| PrismObject {
                pose: motion.compose(&o.pose),
                ..o.clone()
            })
            .collect();
        Scene {
            objects,
            workspace: self.workspace.translated(&motion.position),
            seed: self.seed,
        }
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            seed: self.seed,
            workspace: self.workspace,
            objects: self
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    shape: o.shape.name().to_string(),
                    dims: o.shape.dims(),
                    position: o.pose.position.into(),
                    quaternion: quat_to_wxyz(&o.pose.orientation),
                    color_tag: o.color_tag,
                })
                .collect(),
        }
    }

    pub fn from_file(file: &SceneFile) -> Result<Scene> {
        file.workspace.validate()?;
        let mut objects = Vec::with_capacity(file.objects.len());
        for rec in &file.objects {
            let norm = rec.quaternion.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= 1e-6) {
                return Err(GraspError::InvalidScene(format!(
                    "quaternion norm {norm} deviates from 1 by more than 1e-6"
                )));
            }
            if rec.position.iter().any(|c| !c.is_finite()) {
                return Err(GraspError::InvalidScene("non-finite position".into()));
            }
            objects.push(PrismObject {
                shape: Shape::from_name(&rec.shape, &rec.dims)?,
                pose: Pose6::new(Vec3::from(rec.position), normalize_quaternion(rec.quaternion)?),
                color_tag: rec.color_tag,
            });
        }
        Ok(Scene::new(objects, file.workspace, file.seed))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text).map_err(|e| GraspError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path).map_err(|e| GraspError::io(path, e))?;
        Scene::from_file(&serde_json::from_str(&text)?)
    }
}

/// On-disk scene document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub seed: u64,
    pub workspace: Workspace,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub shape: String,
    pub dims: Vec<f64>,
    pub position: [f64; 3],
    /// `(w, x, y, z)`
    pub quaternion: [f64; 4],
    pub color_tag: u8,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_scene() -> Scene {
        Scene::new(
            vec![
                PrismObject::upright(Shape::Box { size: [0.03, 0.06, 0.04] }, 0.05, -0.02, 0.3, 1),
                PrismObject::upright(
                    Shape::TShape {
                        arm_length: 0.12,
                        arm_width: 0.03,
                        stem_length: 0.05,
                        stem_width: 0.025,
                        height: 0.03,
                    },
                    -0.1,
                    0.08,
                    -1.1,
                    2,
                ),
            ],
            Workspace::default(),
            42,
        )
    }

    #[test]
    fn scene_file_round_trip() {
        let scene = sample_scene();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        scene.save(&path).unwrap();
        let back = Scene::load(&path).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn loader_rejects_non_unit_quaternion() {
        let mut file = sample_scene().to_file();
        file.objects[0].quaternion = [1.0, 0.0, 0.0, 0.01];
        assert!(matches!(Scene::from_file(&file), Err(GraspError::InvalidScene(_))));
        // Small deviations are renormalized.
        let mut file = sample_scene().to_file();
        file.objects[0].quaternion = [1.0 + 5e-7, 0.0, 0.0, 0.0];
        let s = Scene::from_file(&file).unwrap();
        assert_eq!(s.objects[0].pose.orientation, UnitQuaternion::identity());
    }

    #[test]
    fn loader_rejects_bad_dims() {
        let mut file = sample_scene().to_file();
        file.objects[1].dims.pop();
        assert!(Scene::from_file(&file).is_err());
        let mut file = sample_scene().to_file();
        file.objects[0].dims[0] = 0.0;
        assert!(Scene::from_file(&file).is_err());
    }

    #[test]
    fn upright_objects_rest_on_ground() {
        for o in sample_scene().objects {
            for part in o.parts() {
                let bottom = part.center.z - part.half.z;
                assert!(bottom.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn t_shape_parts_touch_without_overlap() {
        let t = &sample_scene().objects[1];
        let parts = t.parts();
        assert!(parts[0].penetration(&parts[1]).abs() < 1e-12);
    }
}
