//! Synthetic instances, corruptions and scoring for comparing registration
//! methods against known correspondences.

pub mod experiment;
pub mod record;
pub mod shapes;
pub mod synth;
