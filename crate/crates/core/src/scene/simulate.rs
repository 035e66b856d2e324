//! Tolerance-and-approach grasp outcome model and the clutter scene update.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gripper::{closing_region, swept_fingers};
use super::grasps::{combined_error, GraspOracle};
use super::Scene;
use crate::se3::{Pose6, Vec3};

/// Largest horizontal displacement applied to an object hit during a failed grasp.
pub const PERTURB_MAX_DISPLACEMENT: f64 = 0.03;
/// Largest yaw change applied to an object hit during a failed grasp.
pub const PERTURB_MAX_YAW: f64 = 15.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessTolerance {
    /// meters
    pub translation: f64,
    /// radians
    pub rotation: f64,
}

impl Default for SuccessTolerance {
    fn default() -> Self {
        SuccessTolerance {
            translation: 0.010,
            rotation: 15f64.to_radians(),
        }
    }
}

impl SuccessTolerance {
    pub const ZERO: SuccessTolerance = SuccessTolerance {
        translation: 0.0,
        rotation: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "object_index", rename_all = "snake_case")]
pub enum GraspOutcome {
    Success(usize),
    Miss,
    Collision(usize),
    /// Assigned by the clutter harness, never by [`simulate_grasp`].
    Dropped(usize),
}

impl GraspOutcome {
    pub fn object_index(&self) -> Option<usize> {
        match *self {
            GraspOutcome::Success(i) | GraspOutcome::Collision(i) | GraspOutcome::Dropped(i) => Some(i),
            GraspOutcome::Miss => None,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, GraspOutcome::Success(_))
    }
}

impl GraspOracle {
    /// Valid grasp within tolerance with the smallest combined error, if any.
    pub fn within_tolerance(&self, p: &Pose6, tol: &SuccessTolerance) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, _, t, r) in self.projections(p) {
            if t <= tol.translation && r <= tol.rotation {
                let e = combined_error(t, r);
                if best.is_none_or(|(b, _)| e < b) {
                    best = Some((e, i));
                }
            }
        }
        best.map(|(_, i)| self.grasps().segments[i].object)
    }

    /// Outcome of executing a grasp at `p`.
    ///
    /// Success needs a valid grasp within tolerance and an approach clear of every
    /// other object. Otherwise any contact of the swept fingers or the closing region
    /// with material is a collision (lowest object index reported), and no contact is a
    /// miss.
    pub fn simulate(&self, p: &Pose6, tol: &SuccessTolerance) -> GraspOutcome {
        let scene = self.scene();
        let fingers = swept_fingers(p);
        let finger_hit = |i: usize| fingers.iter().any(|f| scene.objects[i].intersects_box(f));
        if let Some(target) = self.within_tolerance(p, tol) {
            return match (0..scene.objects.len()).find(|&i| i != target && finger_hit(i)) {
                Some(i) => GraspOutcome::Collision(i),
                None => GraspOutcome::Success(target),
            };
        }
        let closing = closing_region(p);
        match (0..scene.objects.len())
            .find(|&i| finger_hit(i) || scene.objects[i].intersects_box(&closing))
        {
            Some(i) => GraspOutcome::Collision(i),
            None => GraspOutcome::Miss,
        }
    }
}

pub fn simulate_grasp(scene: &Scene, p: &Pose6) -> GraspOutcome {
    GraspOracle::new(scene).simulate(p, &SuccessTolerance::default())
}

/// New scene after an attempt, with the bookkeeping the clutter task needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedOutcome {
    pub scene: Scene,
    /// 1 if the grasped object was removed.
    pub cleared: usize,
    /// Objects pushed out of the workspace and removed.
    pub dropped: usize,
}

/// Random upright perturbation of an object hit by the gripper: a horizontal
/// displacement uniform over a disc of radius [`PERTURB_MAX_DISPLACEMENT`] and a yaw
/// change uniform in `±PERTURB_MAX_YAW`.
pub fn perturb_object<R: Rng + ?Sized>(pose: &Pose6, rng: &mut R) -> Pose6 {
    let r = PERTURB_MAX_DISPLACEMENT * rng.random::<f64>().sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let dyaw = rng.random_range(-PERTURB_MAX_YAW..=PERTURB_MAX_YAW);
    let position = pose.position + Vec3::new(r * theta.cos(), r * theta.sin(), 0.0);
    let orientation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), dyaw) * pose.orientation;
    Pose6::new(position, orientation)
}

pub fn apply_outcome<R: Rng + ?Sized>(scene: &Scene, outcome: &GraspOutcome, rng: &mut R) -> AppliedOutcome {
    let mut next = scene.clone();
    let mut cleared = 0;
    let mut dropped = 0;
    match *outcome {
        GraspOutcome::Success(i) => {
            next.objects.remove(i);
            cleared = 1;
        }
        GraspOutcome::Collision(i) => {
            let moved = perturb_object(&next.objects[i].pose, rng);
            if next.workspace.contains_xy(&moved.position) {
                next.objects[i].pose = moved;
            } else {
                next.objects.remove(i);
                dropped = 1;
            }
        }
        GraspOutcome::Dropped(i) => {
            next.objects.remove(i);
            dropped = 1;
        }
        GraspOutcome::Miss => {}
    }
    AppliedOutcome {
        scene: next,
        cleared,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{PrismObject, Shape};
    use crate::se3::{random_orientation, Workspace};
    use crate::seed::rng_from_seed;

    fn box_scene() -> Scene {
        Scene::new(
            vec![
                PrismObject::upright(Shape::Box { size: [0.03, 0.06, 0.04] }, 0.0, 0.0, 0.2, 0),
                PrismObject::upright(Shape::Box { size: [0.04, 0.04, 0.03] }, 0.15, 0.1, -0.7, 1),
            ],
            Workspace::default(),
            3,
        )
    }

    fn t_scene() -> Scene {
        Scene::new(
            vec![PrismObject::upright(
                Shape::TShape {
                    arm_length: 0.12,
                    arm_width: 0.03,
                    stem_length: 0.06,
                    stem_width: 0.03,
                    height: 0.04,
                },
                0.02,
                0.01,
                0.5,
                0,
            )],
            Workspace::default(),
            0,
        )
    }

    #[test]
    fn demonstrations_succeed() {
        for scene in [box_scene(), t_scene()] {
            let oracle = GraspOracle::new(&scene);
            let mut rng = rng_from_seed(2);
            for _ in 0..50 {
                let g = oracle.demonstrate(&mut rng).unwrap();
                assert!(oracle.simulate(&g, &SuccessTolerance::default()).is_success());
            }
        }
    }

    #[test]
    fn enumerated_grasps_succeed() {
        for scene in [box_scene(), t_scene()] {
            let oracle = GraspOracle::new(&scene);
            for (obj, g) in oracle.enumerate(0.005, 0.01).unwrap() {
                assert_eq!(oracle.simulate(&g, &SuccessTolerance::default()), GraspOutcome::Success(obj));
            }
        }
    }

    #[test]
    fn lifted_grasp_misses() {
        let scene = box_scene();
        let oracle = GraspOracle::new(&scene);
        // A top-down grasp (approach = -z) raised by 10 cm.
        let seg = oracle
            .grasps()
            .segments
            .iter()
            .find(|s| (s.orientation * Vec3::z()).z < -0.99)
            .unwrap();
        let g = seg.pose_at(0.5 * seg.length);
        let lifted = Pose6::new(g.position + Vec3::new(0.0, 0.0, 0.1), g.orientation);
        let n = oracle.nearest(&lifted).unwrap();
        assert!(n.t_err > SuccessTolerance::default().translation);
        for part in scene.objects.iter().flat_map(|o| o.parts()) {
            assert!(!part.intersects(&closing_region(&lifted)));
            assert!(swept_fingers(&lifted).iter().all(|f| !part.intersects(f)));
        }
        assert_eq!(oracle.simulate(&lifted, &SuccessTolerance::default()), GraspOutcome::Miss);
    }

    #[test]
    fn t_junction_collides() {
        let scene = t_scene();
        let obj = &scene.objects[0];
        // Top-down across the arm, centered on the junction.
        let arm_grasp = GraspOracle::new(&scene)
            .grasps()
            .segments
            .iter()
            .find(|s| s.length > 0.0)
            .copied()
            .unwrap();
        let p = Pose6::new(obj.center(), arm_grasp.orientation);
        assert_eq!(simulate_grasp(&scene, &p), GraspOutcome::Collision(0));
    }

    #[test]
    fn zero_slack_classification_matches_zero_error() {
        let scene = box_scene();
        let oracle = GraspOracle::new(&scene);
        let mut rng = rng_from_seed(8);
        let mut poses: Vec<Pose6> = (0..1000)
            .map(|_| {
                let ws = scene.workspace;
                let pos = Vec3::from_fn(|i, _| rng.random_range(ws.min[i]..=ws.max[i]));
                Pose6::new(pos, random_orientation(&mut rng))
            })
            .collect();
        poses.extend((0..50).map(|_| oracle.demonstrate(&mut rng).unwrap()));
        for (k, p) in poses.iter().enumerate() {
            let exact = oracle.nearest(p).unwrap();
            let zero = exact.t_err == 0.0 && exact.r_err == 0.0;
            let classified = oracle.within_tolerance(p, &SuccessTolerance::ZERO).is_some();
            assert_eq!(zero, classified, "pose {k}");
            assert_eq!(exact.negative_error() == 0.0, classified);
        }
    }

    #[test]
    fn success_removes_and_miss_keeps() {
        let scene = box_scene();
        let mut rng = rng_from_seed(0);
        let after = apply_outcome(&scene, &GraspOutcome::Success(1), &mut rng);
        assert_eq!(after.scene.objects.len(), 1);
        assert_eq!(after.scene.objects[0], scene.objects[0]);
        assert_eq!(after.cleared, 1);
        let after = apply_outcome(&scene, &GraspOutcome::Miss, &mut rng);
        assert_eq!(after.scene, scene);
    }

    #[test]
    fn collision_near_boundary_drops() {
        let ws = Workspace::default();
        let edge = PrismObject::upright(Shape::Box { size: [0.03, 0.03, 0.03] }, ws.max[0] - 0.001, 0.0, 0.0, 0);
        let scene = Scene::new(vec![edge.clone()], ws, 0);
        let mut saw_drop = false;
        let mut saw_keep = false;
        for seed in 0..64 {
            let mut a = rng_from_seed(seed);
            let mut b = rng_from_seed(seed);
            let moved = perturb_object(&edge.pose, &mut b);
            let res = apply_outcome(&scene, &GraspOutcome::Collision(0), &mut a);
            let d = (moved.position - edge.pose.position).xy().norm();
            assert!(d <= PERTURB_MAX_DISPLACEMENT + 1e-15);
            if ws.contains_xy(&moved.position) {
                assert_eq!(res.dropped, 0);
                assert_eq!(res.scene.objects[0].pose, moved);
                saw_keep = true;
            } else {
                assert_eq!(res.dropped, 1);
                assert!(res.scene.objects.is_empty());
                saw_drop = true;
            }
            assert_eq!(res.scene.objects.len() + res.dropped + res.cleared, 1);
        }
        assert!(saw_drop && saw_keep);
    }

    #[test]
    fn outcome_serializes_with_kind_and_index() {
        let s = serde_json::to_string(&GraspOutcome::Collision(2)).unwrap();
        assert_eq!(s, r#"{"kind":"collision","object_index":2}"#);
        let s = serde_json::to_string(&GraspOutcome::Miss).unwrap();
        assert_eq!(s, r#"{"kind":"miss"}"#);
        assert_eq!(GraspOutcome::Miss.object_index(), None);
    }
}
