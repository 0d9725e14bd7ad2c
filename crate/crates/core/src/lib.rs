//! Defocus blur map estimation from single images, plus the forensic
//! analyses built on top of it.
//!
//! The pipeline runs gray conversion, Canny edges, a two-scale gradient
//! ratio at edge pixels and a dense propagation step (guided filter or
//! matting Laplacian). Around it sit a thin-lens corpus generator
//! ([`synthcam`]), map-level statistics ([`analysis`]), saliency alignment
//! metrics ([`alignment`]) and a small logistic baseline with ROC tooling
//! ([`classify`]).

pub mod alignment;
pub mod analysis;
pub mod classify;
pub mod defocus;
mod error;
pub mod imgcore;
pub mod synthcam;

pub use error::{Error, Result};
