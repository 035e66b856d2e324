use super::features::{SceneGeometry, FEATURES_PER_ENTRY};
use super::network::EvaluatorWeights;
use super::{Gradient, GraspValueField};
use crate::error::{GraspError, Result};
use crate::scene::Scene;
use crate::se3::{PoseSet5, RawPose};

/// Grasp value predicted by the trained readout network from pose-set features.
#[derive(Debug, Clone)]
pub struct LearnedField {
    weights: EvaluatorWeights,
    geometry: SceneGeometry,
    template: PoseSet5,
}

impl LearnedField {
    pub fn new(weights: EvaluatorWeights, scene: &Scene) -> Result<Self> {
        Self::with_template(weights, scene, PoseSet5::default_template())
    }

    pub fn with_template(weights: EvaluatorWeights, scene: &Scene, template: PoseSet5) -> Result<Self> {
        let expected = template.len() * FEATURES_PER_ENTRY;
        if weights.shape.feature_len() != expected {
            return Err(GraspError::DimensionMismatch {
                expected,
                actual: weights.shape.feature_len(),
            });
        }
        Ok(LearnedField {
            weights,
            geometry: SceneGeometry::new(scene),
            template,
        })
    }

    pub fn weights(&self) -> &EvaluatorWeights {
        &self.weights
    }
}

impl GraspValueField for LearnedField {
    fn value(&self, pose: &RawPose) -> Result<f64> {
        let f = self.geometry.features(&self.template, &pose.to_params())?;
        Ok(self.weights.forward(&f)?.value)
    }

    fn gradient(&self, pose: &RawPose) -> Result<Gradient> {
        let (f, jac) = self.geometry.features_with_jacobian(&self.template, &pose.to_params())?;
        let pass = self.weights.forward(&f)?;
        // d(value)/d(logit) for the logistic output.
        let dlogit = pass.value * (1.0 - pass.value);
        let df = self.weights.backward(&pass, dlogit, None);
        let mut g = [0.0; 7];
        for (d, row) in df.iter().zip(&jac) {
            for k in 0..7 {
                g[k] += d * row[k];
            }
        }
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(GraspError::NonFiniteGradient { index });
        }
        Ok(g)
    }
}
