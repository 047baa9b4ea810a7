//! Camera-agnostic multi-view reconstruction from pairwise two-view predictions.
//!
//! The crate turns directed pairwise predictions (per-pixel rays, radial
//! distances, confidences and relative poses) into one globally consistent
//! reconstruction:
//!
//! * [`geom`]: rotations, rigid poses, similarity alignment, angular metrics.
//! * [`camera`]: ray fields for equirectangular, pinhole, equidistant fisheye
//!   and spherical-harmonic camera descriptions.
//! * [`pointmap`]: dense pointmaps built as `ray * radial`.
//! * [`losses`]: reference implementations of the two-view training objectives.
//! * [`scenegraph`]: directed scene graph and the three-stage pruning cascade.
//! * [`align`]: consensus fusion, anchor initialization and ray-conditioned
//!   alternating optimization.
//! * [`simkit`]: analytic synthetic scenes standing in for a two-view network.
//! * [`metrics`]: RRA/RTA/mAA and ATE.
//!
//! Per-pixel and per-edge work runs on rayon when the `parallel` feature is
//! enabled (the default). Every parallel section collects results in input
//! order and reduces sequentially, so outputs are bit-identical with or
//! without the feature and for any thread count.

pub mod align;
pub mod camera;
mod error;
pub mod geom;
pub mod losses;
pub mod metrics;
mod par;
pub mod pointmap;
pub mod scenegraph;
pub mod simkit;

pub use error::{Error, Result};
pub use geom::{Pose, Rotation, SimilarityTransform, Vec3};
