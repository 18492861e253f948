//! Layered full-body model: a body skeleton with face and hand subtrees,
//! splitting into and merging from per-part parameter blocks.

mod dims;
mod fk;
mod params;
pub(crate) mod template;

pub use dims::{ModelDims, ParamLayout, Part, PartCounts, PartTag};
pub use fk::{forward_kinematics, FkResult};
pub use params::{merge, split, BodyParams, FaceParams, FullBodyParams, HandParams, PartParams, Side};
pub use template::{
    Attachment, JointSpec, KeypointAnchor, KeypointSource, MarkerSpec, PoseSource, SkeletonTemplate,
    TEMPLATE_SCHEMA_VERSION,
};
