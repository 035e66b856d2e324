//! Fixtures shared by the criterion benchmarks.

use gradgrasp::field::{EvaluatorWeights, NetworkShape};
use gradgrasp::scene::{generate_scene_retrying, GraspOracle, SceneGenConfig, SceneKind, ShapeMix};
use gradgrasp::seed::rng_from_seed;
use gradgrasp::se3::Vec3;
use gradgrasp::{Pose6, Scene};

pub fn box_scene(seed: u64) -> Scene {
    let cfg = SceneGenConfig {
        shapes: ShapeMix::Boxes,
        ..SceneGenConfig::default()
    };
    generate_scene_retrying(&cfg, SceneKind::Simple, seed).expect("box scene")
}

pub fn clutter_scene(seed: u64) -> Scene {
    generate_scene_retrying(&SceneGenConfig::default(), SceneKind::Clutter, seed).expect("clutter scene")
}

/// A pose a few centimeters off a demonstrated grasp.
pub fn query_pose(scene: &Scene) -> Pose6 {
    let g = GraspOracle::new(scene).demonstrate(&mut rng_from_seed(1)).expect("graspable");
    Pose6::new(g.position + Vec3::new(0.02, -0.01, 0.015), g.orientation)
}

/// Randomly initialized weights of the default shape.
pub fn weights() -> EvaluatorWeights {
    EvaluatorWeights::init(NetworkShape::default(), &mut rng_from_seed(2))
}
