//! Pose representations and the operations the optimizer relies on.
//!
//! Orientations are unit quaternions stored in `(w, x, y, z)` order. During
//! optimization the quaternion is treated as a raw 4-vector ([`RawPose`]) and only
//! repaired by [`post_process`] after each update.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GraspError, Result};

pub type Vec3 = Vector3<f64>;

/// Norms below this are rejected by [`normalize_quaternion`].
pub const MIN_QUATERNION_NORM: f64 = 1e-12;

/// Axis-aligned workspace bounds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Workspace {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let ws = Workspace { min, max };
        ws.validate()?;
        Ok(ws)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i]);
        if ok {
            Ok(())
        } else {
            Err(GraspError::InvalidWorkspace {
                min: self.min,
                max: self.max,
            })
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_xy(&self, p: &Vec3) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::from_fn(|i, _| self.max[i] - self.min[i])
    }

    pub fn translated(&self, t: &Vec3) -> Workspace {
        Workspace {
            min: [self.min[0] + t.x, self.min[1] + t.y, self.min[2] + t.z],
            max: [self.max[0] + t.x, self.max[1] + t.y, self.max[2] + t.z],
        }
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            min: [-0.25, -0.25, 0.0],
            max: [0.25, 0.25, 0.2],
        }
    }
}

/// A 6-DoF tool-center-point pose with a unit orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6 {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

/// A pose whose orientation is an unconstrained 4-vector `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPose {
    pub position: Vec3,
    pub quaternion: [f64; 4],
}

impl Pose6 {
    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Pose6 {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Pose6::new(Vec3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose6::new(t, UnitQuaternion::identity())
    }

    /// Quaternion components in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        quat_to_wxyz(&self.orientation)
    }

    pub fn to_raw(&self) -> RawPose {
        RawPose {
            position: self.position,
            quaternion: self.wxyz(),
        }
    }

    pub fn to_params(&self) -> [f64; 7] {
        self.to_raw().to_params()
    }

    /// Maps a point from the TCP frame to the world frame.
    pub fn transform_point(&self, local: &Vec3) -> Vec3 {
        self.position + self.orientation * local
    }

    /// Rigid composition `self * other`.
    pub fn compose(&self, other: &Pose6) -> Pose6 {
        Pose6::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }
}

impl RawPose {
    pub fn from_params(p: &[f64; 7]) -> Self {
        RawPose {
            position: Vec3::new(p[0], p[1], p[2]),
            quaternion: [p[3], p[4], p[5], p[6]],
        }
    }

    pub fn to_params(&self) -> [f64; 7] {
        let q = self.quaternion;
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q[0],
            q[1],
            q[2],
            q[3],
        ]
    }

    /// Interprets the raw quaternion as a rotation, normalizing it.
    pub fn to_pose(&self) -> Result<Pose6> {
        Ok(Pose6::new(self.position, normalize_quaternion(self.quaternion)?))
    }
}

pub fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Builds a unit quaternion from `(w, x, y, z)` components that are already unit.
pub fn quat_from_wxyz_unchecked(q: [f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]))
}

/// Scales a quaternion to unit norm.
///
/// Inputs whose norm is already within a few ulps of one are returned unchanged, so
/// applying this twice is bit-identical to applying it once.
pub fn normalize_quaternion(q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let scale = q.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if q.iter().any(|c| !c.is_finite()) {
        return Err(GraspError::DegenerateQuaternion { norm: f64::NAN });
    }
    if scale == 0.0 {
        return Err(GraspError::DegenerateQuaternion { norm: 0.0 });
    }
    // Scale first so that very small or very large inputs do not under/overflow.
    let s: [f64; 4] = q.map(|c| c / scale);
    let norm = s.iter().map(|c| c * c).sum::<f64>().sqrt() * scale;
    if norm <= MIN_QUATERNION_NORM {
        return Err(GraspError::DegenerateQuaternion { norm });
    }
    if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(quat_from_wxyz_unchecked(q));
    }
    let n = norm / scale;
    Ok(quat_from_wxyz_unchecked(s.map(|c| c / n)))
}

/// Componentwise clamp into the workspace.
pub fn clip_position(pos: &Vec3, ws: &Workspace) -> Vec3 {
    Vec3::from_fn(|i, _| pos[i].clamp(ws.min[i], ws.max[i]))
}

/// Repairs a pose after a gradient update: clips the position into the workspace and
/// normalizes the quaternion.
pub fn post_process(p: &RawPose, ws: &Workspace) -> Result<Pose6> {
    let orientation = normalize_quaternion(p.quaternion)?;
    Ok(Pose6::new(clip_position(&p.position, ws), orientation))
}

/// Geodesic angle between two rotations in `[0, pi]`.
///
/// Equal to `2 acos(|<a, b>|)`; evaluated with `atan2` of the chord lengths, which is
/// well conditioned near zero and exactly zero for identical inputs.
pub fn rotation_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let (a, b) = (quat_to_wxyz(a), quat_to_wxyz(b));
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let s = if dot < 0.0 { -1.0 } else { 1.0 };
    let (mut diff, mut sum) = (0.0, 0.0);
    for i in 0..4 {
        diff += (a[i] - s * b[i]).powi(2);
        sum += (a[i] + s * b[i]).powi(2);
    }
    // Half the chordal angle between the unit 4-vectors is a quarter of the rotation angle.
    4.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Rotation about the TCP approach axis (local z).
pub fn yaw(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_orientation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let tau = std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = [
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
        b * (tau * u3).cos(),
    ];
    // Shoemake yields (x, y, z, w); reorder and make exactly unit.
    normalize_quaternion([q[3], q[0], q[1], q[2]]).expect("uniform quaternion has unit norm")
}

/// Rotation of `angle` radians about a uniformly random axis.
pub fn random_axis_rotation<R: Rng + ?Sized>(rng: &mut R, angle: f64) -> UnitQuaternion<f64> {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return UnitQuaternion::from_axis_angle(&Unit::new_unchecked(v / n), angle);
        }
    }
}

/// One position-direction pair of a pose set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSetEntry {
    pub position: Vec3,
    pub direction: Vec3,
}

/// A fixed-size set of 5-DoF samples (position plus unit direction) around the TCP.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSet5 {
    pub entries: Vec<PoseSetEntry>,
}

/// Distance of the off-center probes of the default template from the TCP.
pub const TEMPLATE_REACH: f64 = 0.06;

impl PoseSet5 {
    /// The TCP origin (direction = approach axis), then probes at `TEMPLATE_REACH` along
    /// `-x, +x, -y, +y, -z, +z`. Each probe appears twice, once per perpendicular TCP
    /// axis as its direction, so the alignment features read the surface normal
    /// components across the probe axis.
    pub fn default_template() -> Self {
        Self::axis_probes(TEMPLATE_REACH)
    }

    pub fn axis_probes(reach: f64) -> Self {
        let mut entries = vec![PoseSetEntry {
            position: Vec3::zeros(),
            direction: Vec3::z(),
        }];
        let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        for a in 0..3 {
            for sign in [-1.0, 1.0] {
                for d in (0..3).filter(|d| *d != a) {
                    entries.push(PoseSetEntry {
                        position: axes[a] * (sign * reach),
                        direction: axes[d],
                    });
                }
            }
        }
        PoseSet5 { entries }
    }

    /// The TCP origin followed by the eight corners of a cube, each pointing back toward
    /// the TCP.
    pub fn cube_corners(half_edge: f64) -> Self {
        let mut entries = vec![PoseSetEntry {
            position: Vec3::zeros(),
            direction: Vec3::z(),
        }];
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let position = Vec3::new(sx, sy, sz) * half_edge;
                    entries.push(PoseSetEntry {
                        position,
                        direction: -position.normalize(),
                    });
                }
            }
        }
        PoseSet5 { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for PoseSet5 {
    fn default() -> Self {
        Self::default_template()
    }
}

/// Rigidly moves a TCP-frame template to pose `p`.
pub fn compute_pose_set(p: &Pose6, template: &PoseSet5) -> PoseSet5 {
    let entries = template
        .entries
        .iter()
        .map(|e| PoseSetEntry {
            position: p.transform_point(&e.position),
            direction: p.orientation * e.direction,
        })
        .collect();
    PoseSet5 { entries }
}
