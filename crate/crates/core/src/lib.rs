//! Whole-body parameter regression distilled from part experts, on a small
//! articulated toy model: geometry, kinematics, synthetic data, pseudo-label
//! curation, a hand-differentiated network, EMA training and metrics.
//!
//! Numeric code is generic over [`Real`]; the aliases below fix it to `f64`,
//! which is what the data pipeline uses.

// `!(x > 0)` is deliberate throughout: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body_model;
pub mod curation;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod learn;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod trainer;
pub(crate) mod serde_real;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3 = geometry::Vec3<f64>;
pub type Mat3 = geometry::Mat3<f64>;
pub type AxisAngle = geometry::AxisAngle<f64>;
pub type Camera = geometry::Camera<f64>;
pub type SimilarityTransform = geometry::SimilarityTransform<f64>;
pub type FullBodyParams = body_model::FullBodyParams<f64>;
pub type SkeletonTemplate = body_model::SkeletonTemplate<f64>;
pub type FkResult = body_model::FkResult<f64>;
pub type ModelState = learn::ModelState<f64>;
pub type LossBreakdown = learn::LossBreakdown<f64>;
