//! Valid grasp families and the nearest-valid-grasp oracle.
//!
//! Every object exposes a handful of grasp families: an anchor TCP orientation in the
//! object frame plus an interval the TCP may slide along one object axis, and the two
//! yaw flips of the symmetric gripper. Against a concrete scene each family is cut into
//! [`GraspSegment`]s where the approach is clear of neighbouring objects and the TCP lies
//! inside the workspace. The oracle projects a query pose onto every segment in closed
//! form.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::Rng;

use super::gripper::{swept_fingers, FAMILY_CLEARANCE, FINGER_WIDTH, MAX_GRASP_WIDTH};
use super::{PrismObject, Scene, Shape};
use crate::error::{GraspError, Result};
use crate::se3::{rotation_distance, yaw, Pose6, Vec3};

/// Translation error normalization (meters).
pub const TRANSLATION_SCALE: f64 = 0.10;
/// Rotation error normalization (radians).
pub const ROTATION_SCALE: f64 = FRAC_PI_2;

/// Sampling step used when trimming families against neighbours.
const BLOCK_STEP: f64 = 0.001;

/// A continuous family of grasps in the object frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspFamily {
    pub orientation: UnitQuaternion<f64>,
    pub axis: Vec3,
    pub lo: f64,
    pub hi: f64,
    pub flips: Vec<f64>,
}

impl GraspFamily {
    pub fn interval_length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// TCP orientation whose closing axis is `closing` and approach axis is `approach`.
fn tcp_basis(closing: Vec3, approach: Vec3) -> UnitQuaternion<f64> {
    let y = approach.cross(&closing);
    let m = Matrix3::from_columns(&[closing, y, approach]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

fn family(orientation: UnitQuaternion<f64>, axis: Vec3, lo: f64, hi: f64) -> GraspFamily {
    GraspFamily {
        orientation,
        axis,
        lo,
        hi,
        flips: vec![0.0, PI],
    }
}

/// Grasp families of an object, in its own frame.
pub fn object_families(obj: &PrismObject) -> Vec<GraspFamily> {
    let x = Vec3::x();
    let y = Vec3::y();
    let z = Vec3::z();
    let half_fw = 0.5 * FINGER_WIDTH;
    let mut out = Vec::new();
    match obj.shape {
        Shape::Box { size } => {
            let [a, b, c] = size.map(|s| 0.5 * s);
            let slide = |h: f64| (h - half_fw).max(0.0);
            if size[0] <= MAX_GRASP_WIDTH {
                out.push(family(tcp_basis(x, -z), y, -slide(b), slide(b)));
            }
            if size[1] <= MAX_GRASP_WIDTH {
                out.push(family(tcp_basis(y, -z), x, -slide(a), slide(a)));
            }
            if size[1] <= MAX_GRASP_WIDTH {
                for approach in [x, -x] {
                    out.push(family(tcp_basis(y, approach), z, -slide(c), slide(c)));
                }
            }
            if size[0] <= MAX_GRASP_WIDTH {
                for approach in [y, -y] {
                    out.push(family(tcp_basis(x, approach), z, -slide(c), slide(c)));
                }
            }
        }
        Shape::TShape {
            arm_length,
            arm_width,
            stem_length,
            stem_width,
            ..
        } => {
            let inner = 0.5 * stem_width + half_fw + FAMILY_CLEARANCE;
            let outer = 0.5 * arm_length - half_fw;
            if arm_width <= MAX_GRASP_WIDTH && outer >= inner {
                let top = tcp_basis(x, -z);
                out.push(family(top, y, inner, outer));
                out.push(family(top, y, -outer, -inner));
            }
            let near = -(0.5 * arm_width + half_fw + FAMILY_CLEARANCE);
            let far = -(0.5 * arm_width + stem_length) + half_fw;
            if stem_width <= MAX_GRASP_WIDTH && far <= near {
                out.push(family(tcp_basis(y, -z), x, far, near));
            }
        }
    }
    out
}

/// A straight piece of a grasp family in world coordinates with one fixed orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspSegment {
    pub object: usize,
    pub start: Vec3,
    pub axis: Vec3,
    pub length: f64,
    pub orientation: UnitQuaternion<f64>,
}

impl GraspSegment {
    pub fn point(&self, s: f64) -> Vec3 {
        self.start + self.axis * s
    }

    pub fn pose_at(&self, s: f64) -> Pose6 {
        Pose6::new(self.point(s), self.orientation)
    }

    /// Closest point parameter and translation error.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        let s = (p - self.start).dot(&self.axis).clamp(0.0, self.length);
        (s, (p - self.point(s)).norm())
    }
}

/// The valid grasps of one scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidGraspSet {
    pub segments: Vec<GraspSegment>,
}

/// True if the approach to `pose` on object `target` is blocked by another object's
/// material or the TCP leaves the workspace.
fn blocked(scene: &Scene, target: usize, pose: &Pose6) -> bool {
    if !scene.workspace.contains(&pose.position) {
        return true;
    }
    let fingers = swept_fingers(pose);
    scene.objects.iter().enumerate().any(|(i, o)| {
        i != target && fingers.iter().any(|f| o.intersects_box(f))
    })
}

impl ValidGraspSet {
    pub fn compute(scene: &Scene) -> Self {
        let mut segments = Vec::new();
        for (idx, obj) in scene.objects.iter().enumerate() {
            for fam in object_families(obj) {
                let start = obj.pose.transform_point(&(fam.axis * fam.lo));
                let axis = obj.pose.orientation * fam.axis;
                let base = obj.pose.orientation * fam.orientation;
                let length = fam.interval_length();
                let steps = (length / BLOCK_STEP).ceil() as usize;
                let param = |i: usize| if steps == 0 { 0.0 } else { length * i as f64 / steps as f64 };
                // Flips mirror the fingers onto each other, so blocking is flip-invariant.
                let free: Vec<bool> = (0..=steps)
                    .map(|i| !blocked(scene, idx, &Pose6::new(start + axis * param(i), base)))
                    .collect();
                let mut runs = Vec::new();
                let mut i = 0;
                while i <= steps {
                    if free[i] {
                        let j0 = i;
                        while i < steps && free[i + 1] {
                            i += 1;
                        }
                        runs.push((param(j0), param(i)));
                    }
                    i += 1;
                }
                for &flip in &fam.flips {
                    let orientation = base * yaw(flip);
                    for &(s0, s1) in &runs {
                        segments.push(GraspSegment {
                            object: idx,
                            start: start + axis * s0,
                            axis,
                            length: s1 - s0,
                            orientation,
                        });
                    }
                }
            }
        }
        ValidGraspSet { segments }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn graspable_objects(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.segments.iter().map(|s| s.object).collect();
        v.dedup();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Result of projecting a pose onto the valid grasp set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestGrasp {
    pub pose: Pose6,
    pub object: usize,
    pub segment: usize,
    pub t_err: f64,
    pub r_err: f64,
}

impl NearestGrasp {
    pub fn combined(&self) -> f64 {
        combined_error(self.t_err, self.r_err)
    }

    /// `-(t/t_scale + r/r_scale) / 2`
    pub fn negative_error(&self) -> f64 {
        -0.5 * self.combined()
    }
}

pub fn combined_error(t_err: f64, r_err: f64) -> f64 {
    t_err / TRANSLATION_SCALE + r_err / ROTATION_SCALE
}

/// Scene plus its precomputed valid grasps.
#[derive(Debug, Clone)]
pub struct GraspOracle {
    scene: Scene,
    grasps: ValidGraspSet,
}

impl GraspOracle {
    pub fn new(scene: &Scene) -> Self {
        GraspOracle {
            grasps: ValidGraspSet::compute(scene),
            scene: scene.clone(),
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn grasps(&self) -> &ValidGraspSet {
        &self.grasps
    }

    pub fn is_graspable(&self) -> bool {
        !self.grasps.is_empty()
    }

    /// Projection of `p` onto every segment, as `(segment index, t_err, r_err)`.
    pub(crate) fn projections<'a>(&'a self, p: &'a Pose6) -> impl Iterator<Item = (usize, f64, f64, f64)> + 'a {
        self.grasps.segments.iter().enumerate().map(move |(i, seg)| {
            let (s, t) = seg.project(&p.position);
            (i, s, t, rotation_distance(&p.orientation, &seg.orientation))
        })
    }

    /// Valid grasp minimizing the combined normalized error; the first segment wins ties.
    pub fn nearest(&self, p: &Pose6) -> Result<NearestGrasp> {
        let mut best: Option<(f64, NearestGrasp)> = None;
        for (i, s, t, r) in self.projections(p) {
            let e = combined_error(t, r);
            if best.as_ref().is_none_or(|(b, _)| e < *b) {
                let seg = &self.grasps.segments[i];
                best = Some((
                    e,
                    NearestGrasp {
                        pose: seg.pose_at(s),
                        object: seg.object,
                        segment: i,
                        t_err: t,
                        r_err: r,
                    },
                ));
            }
        }
        best.map(|(_, n)| n).ok_or(GraspError::NoGraspableObject)
    }

    pub fn negative_grasp_error(&self, p: &Pose6) -> Result<f64> {
        Ok(self.nearest(p)?.negative_error())
    }

    /// Discretizes every segment with spacing at most `res_translation`.
    ///
    /// The families carry no continuous rotational freedom, so `res_rotation` only has
    /// to be positive; every allowed orientation is already listed exactly.
    pub fn enumerate(&self, res_translation: f64, res_rotation: f64) -> Result<Vec<(usize, Pose6)>> {
        if !(res_translation > 0.0 && res_rotation > 0.0) {
            return Err(GraspError::InvalidConfig(format!(
                "resolution must be positive, got {res_translation} m / {res_rotation} rad"
            )));
        }
        let mut out = Vec::new();
        for seg in &self.grasps.segments {
            let n = (seg.length / res_translation).ceil() as usize;
            for i in 0..=n {
                let s = if n == 0 { 0.0 } else { seg.length * i as f64 / n as f64 };
                out.push((seg.object, seg.pose_at(s)));
            }
        }
        Ok(out)
    }

    /// Scripted demonstrator: a uniformly chosen graspable object, then a uniformly
    /// chosen segment of it and a uniform point along that segment.
    pub fn demonstrate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Pose6> {
        let objects = self.grasps.graspable_objects();
        if objects.is_empty() {
            return Err(GraspError::NoGraspableObject);
        }
        let obj = objects[rng.random_range(0..objects.len())];
        let segs: Vec<&GraspSegment> = self.grasps.segments.iter().filter(|s| s.object == obj).collect();
        let seg = segs[rng.random_range(0..segs.len())];
        let s = if seg.length > 0.0 {
            rng.random_range(0.0..=seg.length)
        } else {
            0.0
        };
        Ok(seg.pose_at(s))
    }
}

pub fn enumerate_valid_grasps(scene: &Scene, res_translation: f64, res_rotation: f64) -> Result<Vec<Pose6>> {
    Ok(GraspOracle::new(scene)
        .enumerate(res_translation, res_rotation)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

pub fn nearest_valid_grasp(p: &Pose6, scene: &Scene) -> Result<Pose6> {
    Ok(GraspOracle::new(scene).nearest(p)?.pose)
}

pub fn negative_grasp_error(p: &Pose6, scene: &Scene) -> Result<f64> {
    GraspOracle::new(scene).negative_grasp_error(p)
}

pub fn demonstrate_grasp<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Result<Pose6> {
    GraspOracle::new(scene).demonstrate(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::gripper::closing_region;
    use crate::se3::{random_orientation, Workspace};
    use crate::seed::rng_from_seed;

    fn single_box(size: [f64; 3]) -> Scene {
        Scene::new(
            vec![PrismObject::upright(Shape::Box { size }, 0.02, -0.03, 0.4, 0)],
            Workspace::default(),
            0,
        )
    }

    fn t_shape_scene() -> Scene {
        Scene::new(
            vec![PrismObject::upright(
                Shape::TShape {
                    arm_length: 0.12,
                    arm_width: 0.03,
                    stem_length: 0.06,
                    stem_width: 0.03,
                    height: 0.04,
                },
                0.0,
                0.0,
                0.0,
                0,
            )],
            Workspace::default(),
            0,
        )
    }

    #[test]
    fn enumeration_count_matches_family_lengths() {
        let scene = single_box([0.03, 0.06, 0.04]);
        // Closed-form counts: top-down across x slides 0.06 - fw, top-down across y
        // slides 0.03 - fw, four side families slide 0.04 - fw; two flips each.
        let fw = FINGER_WIDTH;
        let res = 0.005;
        let lengths = [0.06 - fw, 0.03 - fw, 0.04 - fw, 0.04 - fw, 0.04 - fw, 0.04 - fw];
        let expected: usize = lengths.iter().map(|l| 2 * ((l / res).ceil() as usize + 1)).sum();
        let grasps = enumerate_valid_grasps(&scene, res, 0.01).unwrap();
        assert_eq!(grasps.len(), expected);
    }

    #[test]
    fn empty_interval_family_contributes_flip_anchors() {
        // Height equal to the finger width: side families have zero slide.
        let scene = Scene::new(
            vec![PrismObject::upright(Shape::Box { size: [0.1, 0.03, FINGER_WIDTH] }, 0.0, 0.0, 0.0, 0)],
            Workspace::default(),
            0,
        );
        let oracle = GraspOracle::new(&scene);
        let side: Vec<_> = oracle.grasps().segments.iter().filter(|s| s.length == 0.0).collect();
        assert_eq!(side.len(), 4);
        let grasps = oracle.enumerate(0.005, 0.01).unwrap();
        let point_poses = grasps
            .iter()
            .filter(|(_, p)| side.iter().any(|s| s.pose_at(0.0) == *p))
            .count();
        assert_eq!(point_poses, 4);
    }

    #[test]
    fn family_poses_straddle_material() {
        for scene in [single_box([0.03, 0.06, 0.04]), single_box([0.05, 0.08, 0.02]), t_shape_scene()] {
            let oracle = GraspOracle::new(&scene);
            for (obj, p) in oracle.enumerate(0.002, 0.01).unwrap() {
                let o = &scene.objects[obj];
                assert!(o.sdf(&p.position) <= 1e-12, "TCP must sit inside material");
                assert!(swept_fingers(&p).iter().all(|f| !o.intersects_box(f)));
                assert!(o.intersects_box(&closing_region(&p)));
            }
        }
    }

    #[test]
    fn nearest_of_valid_grasp_is_itself() {
        let scene = single_box([0.03, 0.06, 0.04]);
        let oracle = GraspOracle::new(&scene);
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let g = oracle.demonstrate(&mut rng).unwrap();
            let n = oracle.nearest(&g).unwrap();
            assert!(n.t_err < 1e-12 && n.r_err == 0.0);
            assert!((n.pose.position - g.position).norm() < 1e-12);
            assert_eq!(oracle.negative_grasp_error(&g).unwrap(), -0.5 * n.t_err / TRANSLATION_SCALE);
        }
    }

    #[test]
    fn sliding_within_interval_keeps_zero_error() {
        let scene = single_box([0.03, 0.06, 0.04]);
        let oracle = GraspOracle::new(&scene);
        let seg = oracle.grasps().segments[0];
        assert!(seg.length > 0.02);
        let p = seg.pose_at(0.01);
        let moved = Pose6::new(p.position + seg.axis * 0.01, p.orientation);
        let n = oracle.nearest(&moved).unwrap();
        assert!(n.t_err < 1e-12);
        assert!((n.pose.position - moved.position).norm() < 1e-12);
    }

    #[test]
    fn rotation_by_scale_gives_minus_half() {
        let scene = single_box([0.03, 0.1, 0.04]);
        let oracle = GraspOracle::new(&scene);
        // Only the top-down family across x exists; pick its middle.
        assert_eq!(oracle.grasps().segments.len(), 2 + 2 * 2);
        let seg = oracle.grasps().segments[0];
        let p = seg.pose_at(0.5 * seg.length);
        // A quarter turn about the approach axis is pi/2 from the top-down family and
        // 2pi/3 from both side families.
        let rotated = Pose6::new(p.position, p.orientation * yaw(ROTATION_SCALE));
        let e = oracle.negative_grasp_error(&rotated).unwrap();
        assert!((e + 0.5).abs() < 1e-12, "{e}");
    }

    #[test]
    fn no_graspable_object_is_an_error() {
        let scene = single_box([0.2, 0.2, 0.05]);
        let oracle = GraspOracle::new(&scene);
        assert!(!oracle.is_graspable());
        assert!(matches!(oracle.nearest(&Pose6::identity()), Err(GraspError::NoGraspableObject)));
        assert!(oracle.demonstrate(&mut rng_from_seed(0)).is_err());
        let empty = Scene::new(vec![], Workspace::default(), 0);
        assert!(negative_grasp_error(&Pose6::identity(), &empty).is_err());
    }

    #[test]
    fn t_shape_arm_slide_is_zero_error() {
        let scene = t_shape_scene();
        let oracle = GraspOracle::new(&scene);
        let seg = oracle
            .grasps()
            .segments
            .iter()
            .find(|s| s.axis.y.abs() > 0.99 && s.start.y > 0.0)
            .copied()
            .unwrap();
        for i in 0..=20 {
            let p = seg.pose_at(seg.length * i as f64 / 20.0);
            assert_eq!(oracle.negative_grasp_error(&p).unwrap(), -0.5 * oracle.nearest(&p).unwrap().t_err / TRANSLATION_SCALE);
            assert!(oracle.nearest(&p).unwrap().t_err < 1e-12);
        }
    }

    #[test]
    fn demonstrate_is_deterministic() {
        let scene = t_shape_scene();
        let a = demonstrate_grasp(&scene, &mut rng_from_seed(9)).unwrap();
        let b = demonstrate_grasp(&scene, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(GraspOracle::new(&scene).nearest(&a).unwrap().object, 0);
    }

    #[test]
    fn neighbours_trim_families() {
        let a = PrismObject::upright(Shape::Box { size: [0.03, 0.03, 0.04] }, 0.0, 0.0, 0.0, 0);
        let alone = GraspOracle::new(&Scene::new(vec![a.clone()], Workspace::default(), 0));
        // A wall right next to the box blocks the finger on that side.
        let wall = PrismObject::upright(Shape::Box { size: [0.01, 0.2, 0.04] }, 0.046, 0.0, 0.0, 1);
        let crowded = GraspOracle::new(&Scene::new(vec![a, wall], Workspace::default(), 0));
        let count = |o: &GraspOracle| o.grasps().segments.iter().filter(|s| s.object == 0).count();
        assert!(count(&crowded) < count(&alone));
        let mut rng = rng_from_seed(4);
        for _ in 0..50 {
            let q = random_orientation(&mut rng);
            let p = Pose6::new(Vec3::new(0.0, 0.0, 0.02), q);
            let e_alone = alone.negative_grasp_error(&p).unwrap();
            let e_crowded = crowded.negative_grasp_error(&p).unwrap();
            assert!(e_crowded <= e_alone + 1e-15);
        }
    }
}
