//! Character-level text classification on rendered glyph images.
//!
//! Documents are classified without any vocabulary: each character is
//! rasterized to a 36x36 grayscale image, a small CNN (the character
//! encoder, CE) maps the image to a 128-dim vector, and a strided 1-D
//! convolutional network (CLCNN) classifies the resulting sequence.
//! Everything runs on the reverse-mode autodiff core in [`autodiff`].

pub mod analysis;
pub mod augment;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod glyph;
pub mod gradcheck;
pub mod model;
pub mod train;
pub mod seed;

pub use autodiff::adam::{adam_step, clear_grads, AdamState, Parameter};
pub use autodiff::{Dtype, Scalar, Tensor};
pub use error::{Error, Result};
