//! Implicit grasp evaluation and gradient-based 6-DoF grasp pose optimization.
//!
//! A grasp-value field maps a gripper pose to a scalar in `[0, 1]` that behaves like a
//! grasp success probability. Two fields are provided: an analytic field backed by a
//! scene oracle, and a small readout network over geometric pose-set features trained
//! by behavior cloning from one demonstration per scene. Grasps are found by running a
//! staged first-order optimizer (position first, then orientation) from random
//! candidates and keeping the best final pose.
//!
//! Module map:
//!
//! * [`se3`]: poses, quaternion post-processing, rotation distance, pose-set expansion.
//! * [`scene`]: procedural prismatic scenes, valid grasp families, the oracle and a
//!   tolerance-based grasp outcome model.
//! * [`field`]: the [`GraspValueField`](field::GraspValueField) contract and its
//!   implementations.
//! * [`train`]: dataset generation and cross-entropy training of the evaluator.
//! * [`optimizer`]: Adam, the staged optimizer and value slices.
//! * [`harness`]: task protocols (simple, clutter, held-out) and reports.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod optimizer;
pub mod scene;
pub mod se3;
pub mod seed;
pub mod train;

pub use error::{GraspError, Result};
pub use field::{GraspValueField, LearnedField, OracleField};
pub use scene::{GraspOutcome, PrismObject, Scene, SceneKind, Shape};
pub use se3::{Pose6, PoseSet5, RawPose, Workspace};
