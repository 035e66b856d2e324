//! The grasp-value field contract and its implementations.
//!
//! A field maps a pose to a value in `[0, 1]`. Gradients are taken with respect to the
//! raw 7-vector `(x, y, z, w, qx, qy, qz)`: the quaternion part is not constrained to
//! unit norm, fields normalize it internally.

mod features;
mod learned;
mod network;
mod oracle;

use crate::error::Result;
use crate::se3::{Pose6, RawPose};

pub use features::{
    extract_features, features_from_params, SceneGeometry, EMPTY_DISTANCE, FEATURES_PER_ENTRY,
    NEAREST_SOFTNESS, OCCUPANCY_WIDTH,
};
pub use learned::LearnedField;
pub use network::{evaluator_value, BatchPass, EvaluatorWeights, ForwardPass, NetworkShape, FEATURE_SCALE};
pub use oracle::{oracle_value, OracleField, DEFAULT_TEMPERATURE, ORACLE_FD_STEP};

pub type Gradient = [f64; 7];

pub trait GraspValueField: Sync {
    fn value(&self, pose: &RawPose) -> Result<f64>;

    fn gradient(&self, pose: &RawPose) -> Result<Gradient>;

    fn value_at(&self, pose: &Pose6) -> Result<f64> {
        self.value(&pose.to_raw())
    }
}

/// Gradient used by the optimizer's update step.
pub fn field_gradient<F: GraspValueField + ?Sized>(field: &F, pose: &RawPose) -> Result<Gradient> {
    field.gradient(pose)
}

/// Central differences of `f` over the raw 7-vector with step `h`.
pub fn central_difference<F>(f: F, pose: &RawPose, h: f64) -> Result<Gradient>
where
    F: Fn(&RawPose) -> Result<f64>,
{
    let base = pose.to_params();
    let mut g = [0.0; 7];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut plus = base;
        let mut minus = base;
        plus[i] += h;
        minus[i] -= h;
        let fp = f(&RawPose::from_params(&plus))?;
        let fm = f(&RawPose::from_params(&minus))?;
        *gi = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// A field with the same value everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField(pub f64);

impl GraspValueField for ConstantField {
    fn value(&self, _pose: &RawPose) -> Result<f64> {
        Ok(self.0)
    }

    fn gradient(&self, _pose: &RawPose) -> Result<Gradient> {
        Ok([0.0; 7])
    }
}

impl<F: GraspValueField + ?Sized> GraspValueField for &F {
    fn value(&self, pose: &RawPose) -> Result<f64> {
        (**self).value(pose)
    }

    fn gradient(&self, pose: &RawPose) -> Result<Gradient> {
        (**self).gradient(pose)
    }
}

impl<F: GraspValueField + ?Sized> GraspValueField for Box<F> {
    fn value(&self, pose: &RawPose) -> Result<f64> {
        (**self).value(pose)
    }

    fn gradient(&self, pose: &RawPose) -> Result<Gradient> {
        (**self).gradient(pose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_has_zero_gradient() {
        let f = ConstantField(0.3);
        let p = Pose6::identity().to_raw();
        assert_eq!(field_gradient(&f, &p).unwrap(), [0.0; 7]);
        assert_eq!(central_difference(|q| f.value(q), &p, 1e-4).unwrap(), [0.0; 7]);
    }

    #[test]
    fn central_difference_of_quadratic_is_exact() {
        let p = RawPose::from_params(&[0.1, -0.2, 0.3, 1.0, 0.0, 0.5, -0.5]);
        let g = central_difference(
            |q| Ok(q.to_params().iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum()),
            &p,
            1e-3,
        )
        .unwrap();
        for (i, (gi, v)) in g.iter().zip(p.to_params()).enumerate() {
            assert!((gi - 2.0 * (i as f64 + 1.0) * v).abs() < 1e-9);
        }
    }
}
