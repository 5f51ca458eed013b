//! Planning discrete shaping actions on plastic material seen through a
//! depth camera.
//!
//! The pipeline works in depth-image space throughout:
//!
//! * [`depthcam`] maps pixels and luminances to 3D points and builds the
//!   radial weight field that turns an image into a normalized image.
//! * [`metric`] compares two normalized images; the result is the mean
//!   distance between same-pixel points of the two visible point clouds.
//! * [`roi`] projects an action's 3D effect box to a pixel rectangle.
//! * [`predict`] learns per-action patch predictors from prior/posterior
//!   pairs.
//! * [`planner`] searches greedily for the action sequence that brings the
//!   current image closest to a target image.
//! * [`simkit`] is a heightmap stand-in for the material and the robot.
//!
//! [`pgm`] and [`dimg`] are the on-disk image formats.

// Checks such as `!(x > 0.0)` are written that way so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depthcam;
pub mod dimg;
pub mod error;
pub mod grid;
pub mod metric;
pub mod pgm;
pub mod planner;
pub mod predict;
pub mod roi;
pub mod simkit;

pub use depthcam::{CameraIntrinsics, DepthImage, NormalizedImage, Point3, WeightField};
pub use error::{Error, Result};
pub use grid::Grid;
