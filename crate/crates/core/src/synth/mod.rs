//! Deterministic synthetic scenes and a fisheye ray tracer that stands in for
//! a real vehicle: images, ground-truth range maps, detections of moving
//! objects, and scripted trajectories.

pub mod presets;
mod render;
mod scene;
mod texture;

pub use render::{
    render_camera, render_frame, script_trajectory, script_trajectory_with, FramePacket,
    RenderedView, TrajectorySpec,
};
pub use scene::{Hit, MovingObject, Primitive, Scene, Shape, Surface};
pub use texture::Texture;
