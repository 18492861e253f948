//! Rotations, pinhole projection and similarity alignment.

mod align;
mod camera;
pub mod linalg;
mod rotation;

pub use align::{umeyama_align, SimilarityTransform};
pub use camera::{project, Camera};
pub use linalg::{svd3, Mat3, Svd3, Vec3};
pub use rotation::{log_map, rodrigues, rotation_z, AxisAngle};
pub(crate) use rotation::{rodrigues_unchecked, rodrigues_with_jacobian};
