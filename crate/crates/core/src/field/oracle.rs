use super::{central_difference, Gradient, GraspValueField};
use crate::error::{GraspError, Result};
use crate::scene::{GraspOracle, Scene};
use crate::se3::{Pose6, RawPose};

pub const DEFAULT_TEMPERATURE: f64 = 0.25;
/// Step of the central differences used for the oracle gradient.
pub const ORACLE_FD_STEP: f64 = 1e-4;

/// `exp(negative_grasp_error / temperature)`; exactly 1 on valid grasps.
#[derive(Debug, Clone)]
pub struct OracleField {
    oracle: GraspOracle,
    temperature: f64,
}

impl OracleField {
    pub fn new(scene: &Scene, temperature: f64) -> Result<Self> {
        Self::from_oracle(GraspOracle::new(scene), temperature)
    }

    pub fn from_oracle(oracle: GraspOracle, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(GraspError::InvalidConfig(format!(
                "oracle temperature must be positive, got {temperature}"
            )));
        }
        if !oracle.is_graspable() {
            return Err(GraspError::NoGraspableObject);
        }
        Ok(OracleField { oracle, temperature })
    }

    pub fn oracle(&self) -> &GraspOracle {
        &self.oracle
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

impl GraspValueField for OracleField {
    fn value(&self, pose: &RawPose) -> Result<f64> {
        let e = self.oracle.negative_grasp_error(&pose.to_pose()?)?;
        Ok((e / self.temperature).exp())
    }

    fn gradient(&self, pose: &RawPose) -> Result<Gradient> {
        central_difference(|p| self.value(p), pose, ORACLE_FD_STEP)
    }
}

pub fn oracle_value(p: &Pose6, scene: &Scene, temperature: f64) -> Result<f64> {
    OracleField::new(scene, temperature)?.value_at(p)
}
