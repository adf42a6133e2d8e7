//! SE(3) arithmetic, point clouds, spatial indexing, downsampling and
//! trajectory alignment.

mod cloud;
mod kdtree;
mod pose;
mod umeyama;
mod voxel;

pub use cloud::{Label, LabeledCloud};
pub use kdtree::{Neighbor, SpatialIndex};
pub use pose::{
    hat, so3_angle, so3_exp, so3_log, so3_right_jacobian_inv, Point3, Pose6, Tangent6,
};
pub use umeyama::{umeyama_align, umeyama_points};
pub use voxel::{voxel_downsample, voxel_key, VoxelKey};
