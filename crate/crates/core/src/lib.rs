//! Adaptive depth-interval separation, uncertainty-weighted feature fusion,
//! KITTI-format I/O, rotated-box IoU and AP@40 evaluation.

pub mod adis;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod kitti_io;
pub mod pipeline;
pub mod png_io;
pub mod pseudolidar;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
