//! Parallel-jaw gripper volumes in the TCP frame.
//!
//! TCP frame convention: `+z` is the approach direction (pointing into the object),
//! `x` is the closing direction and `y` spans the finger width. The gripper body lies
//! on the `-z` side of the TCP.

use nalgebra::Vector3;

use crate::geometry::Cuboid;
use crate::se3::{Pose6, Vec3};

/// Maximum jaw opening in meters (2F-85 class gripper).
pub const MAX_OPENING: f64 = 0.085;
/// Object material must be at most this wide across the closing axis.
pub const MAX_GRASP_WIDTH: f64 = MAX_OPENING - 0.01;
pub const FINGER_THICKNESS: f64 = 0.008;
pub const FINGER_WIDTH: f64 = 0.016;
pub const FINGER_DEPTH: f64 = 0.04;
/// Length of the straight-line approach swept behind the final pose.
pub const APPROACH_STANDOFF: f64 = 0.06;
/// Extra gap kept between a finger and neighbouring material when defining families.
pub const FAMILY_CLEARANCE: f64 = 0.002;

fn tcp_box(pose: &Pose6, local_center: Vec3, half: Vec3) -> Cuboid {
    Cuboid::new(pose.transform_point(&local_center), &pose.orientation, half)
}

/// Both fingers swept from the pre-grasp standoff to the final pose.
pub fn swept_fingers(pose: &Pose6) -> [Cuboid; 2] {
    let x = 0.5 * MAX_OPENING + 0.5 * FINGER_THICKNESS;
    let half = Vector3::new(
        0.5 * FINGER_THICKNESS,
        0.5 * FINGER_WIDTH,
        0.5 * (FINGER_DEPTH + APPROACH_STANDOFF),
    );
    let z = -0.5 * APPROACH_STANDOFF;
    [
        tcp_box(pose, Vec3::new(x, 0.0, z), half),
        tcp_box(pose, Vec3::new(-x, 0.0, z), half),
    ]
}

/// The volume between the open fingers at the final pose.
pub fn closing_region(pose: &Pose6) -> Cuboid {
    tcp_box(
        pose,
        Vec3::zeros(),
        Vector3::new(0.5 * MAX_OPENING, 0.5 * FINGER_WIDTH, 0.5 * FINGER_DEPTH),
    )
}

/// Radius of a sphere around the TCP containing every gripper volume.
pub fn reach_radius() -> f64 {
    let fingers = swept_fingers(&Pose6::identity());
    fingers[0].center.norm() + fingers[0].half.norm()
}
