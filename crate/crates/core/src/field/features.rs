//! Geometric pose-set features.
//!
//! For every entry of the pose set the extractor reports six numbers:
//!
//! 0. signed distance to the nearest object surface (m)
//! 1. occupancy, `sigmoid(-sdf / OCCUPANCY_WIDTH)`
//! 2. alignment of the entry direction with the outward surface normal
//! 3. to 5. offset from the entry to the nearest object center, in the TCP frame (m)
//!
//! "Nearest" for the normal and the center offset is a softmin over all object parts
//! by signed distance. The distance itself is a log-sum-exp over parts (see
//! [`ROUNDING`]) and the normal has its edges rounded (see [`NORMAL_ROUNDING`]), so every feature is smooth where the
//! nearest part changes or the exact normal would jump. With a single part, or one part
//! clearly nearest, the distance is the exact one. Everything is written once over [`Real`] so the same code produces exact
//! derivatives with [`Dual`].

use crate::error::{GraspError, Result};
use crate::geometry::{rot_apply, rot_apply_tr, rotation_from_raw, Cuboid, Dual, Real, V3};
use crate::scene::Scene;
use crate::se3::{Pose6, PoseSet5, Vec3, MIN_QUATERNION_NORM};

pub const FEATURES_PER_ENTRY: usize = 6;
/// Softening width of the occupancy indicator (m).
pub const OCCUPANCY_WIDTH: f64 = 0.005;
/// Temperature of the softmin that selects the nearest object (m).
pub const NEAREST_SOFTNESS: f64 = 0.01;
/// Rounding of the creases in the distance where two parts are equally near (m).
pub const ROUNDING: f64 = 0.002;
/// Rounding of the surface normal's edges, and of its turn across a part's interior (m).
pub const NORMAL_ROUNDING: f64 = 0.005;
/// Distance reported when the scene has no objects.
pub const EMPTY_DISTANCE: f64 = 1.0;

/// Object geometry prepared for repeated feature queries.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    objects: Vec<(Vec<Cuboid>, Vec3)>,
}

impl SceneGeometry {
    pub fn new(scene: &Scene) -> Self {
        SceneGeometry {
            objects: scene.objects.iter().map(|o| (o.parts(), o.center())).collect(),
        }
    }

    fn entry<T: Real>(&self, x: &V3<T>, dir: &V3<T>, rot: &[[T; 3]; 3], out: &mut Vec<T>) {
        if self.objects.is_empty() {
            let far = T::cst(EMPTY_DISTANCE);
            out.push(far);
            out.push((-far / OCCUPANCY_WIDTH).sigmoid());
            out.extend([T::cst(0.0); 4]);
            return;
        }
        // Exact distance per part; the nearest-object quantities below blend every
        // part with softmin weights so that they stay smooth where the nearest part
        // or object changes.
        let per_part: Vec<(usize, &Cuboid, T)> = self
            .objects
            .iter()
            .enumerate()
            .flat_map(|(o, (parts, _))| parts.iter().map(move |p| (o, p)))
            .map(|(o, p)| (o, p, p.sdf_normal(x).0))
            .collect();
        let mut nearest = per_part[0].2;
        for (_, _, d) in &per_part[1..] {
            nearest = nearest.min(*d);
        }
        let mut rounded = T::cst(0.0);
        for (_, _, d) in &per_part {
            rounded = rounded + (-(*d - nearest) / ROUNDING).exp();
        }
        let sdf = nearest - rounded.ln() * ROUNDING;
        let weights: Vec<T> = per_part.iter().map(|(_, _, d)| (-(*d - nearest) / NEAREST_SOFTNESS).exp()).collect();
        let mut total = weights[0];
        for w in &weights[1..] {
            total = total + *w;
        }
        let mut align = T::cst(0.0);
        let mut offset = V3([T::cst(0.0); 3]);
        for (w, (o, part, _)) in weights.iter().zip(&per_part) {
            let w = *w / total;
            align = align + w * dir.dot(&part.smooth_normal(x, NORMAL_ROUNDING));
            offset = offset.add(&V3::from_f64(&self.objects[*o].1).sub(x).scale(w));
        }
        let local = rot_apply_tr(rot, &offset);
        out.push(sdf);
        out.push((-sdf / OCCUPANCY_WIDTH).sigmoid());
        out.push(align);
        out.extend(local.0);
    }

    /// Features at raw pose parameters `(x, y, z, w, qx, qy, qz)`.
    pub fn features<T: Real>(&self, template: &PoseSet5, params: &[T; 7]) -> Result<Vec<T>> {
        let q = [params[3], params[4], params[5], params[6]];
        let norm = q.iter().map(|c| c.re() * c.re()).sum::<f64>().sqrt();
        if !(norm > MIN_QUATERNION_NORM) {
            return Err(GraspError::DegenerateQuaternion { norm });
        }
        let rot = rotation_from_raw(q);
        let p = V3([params[0], params[1], params[2]]);
        let mut out = Vec::with_capacity(template.len() * FEATURES_PER_ENTRY);
        for e in &template.entries {
            let x = p.add(&rot_apply(&rot, &V3::from_f64(&e.position)));
            let d = rot_apply(&rot, &V3::from_f64(&e.direction));
            self.entry(&x, &d, &rot, &mut out);
        }
        Ok(out)
    }

    /// Features and their Jacobian (row-major, one 7-vector per feature).
    pub fn features_with_jacobian(&self, template: &PoseSet5, params: &[f64; 7]) -> Result<(Vec<f64>, Vec<[f64; 7]>)> {
        let duals: [Dual; 7] = std::array::from_fn(|i| Dual::variable(params[i], i));
        let f = self.features(template, &duals)?;
        Ok((f.iter().map(|d| d.re).collect(), f.iter().map(|d| d.eps).collect()))
    }
}

/// Feature vector for a pose: `template.len() * FEATURES_PER_ENTRY` values.
pub fn extract_features(scene: &Scene, pose: &Pose6, template: &PoseSet5) -> Vec<f64> {
    SceneGeometry::new(scene)
        .features(template, &pose.to_params())
        .expect("unit orientation")
}

pub fn features_from_params(geometry: &SceneGeometry, template: &PoseSet5, params: &[f64; 7]) -> Result<Vec<f64>> {
    geometry.features(template, params)
}
