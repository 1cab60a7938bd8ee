//! Dense mapping from a rig of fisheye cameras: plane-sweep stereo, outlier
//! filtering, dynamic-object masking and TSDF fusion on a voxel-block hash.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod depth;
pub mod error;
pub mod eval;
pub mod filter;
pub mod geometry;
pub mod image;
pub mod mask;
pub mod pipeline;
pub mod planesweep;
pub mod ply;
pub mod synth;
pub mod tsdf;

pub use depth::DepthMap;
pub use error::{Error, Result};
pub use geometry::{CameraRig, FisheyeCamera, Pixel, Plane, Pose, Vec3};
pub use image::Image;
pub use ply::PointCloud;
