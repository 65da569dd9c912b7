//! Joint refinement of pairwise stationary-velocity-field registrations over
//! a spanning tree of latent transforms, for 3D reconstruction of
//! multi-contrast histology stacks against a reference volume.

pub mod error;
pub mod fields;
pub mod graph;
pub mod inference;
#[allow(clippy::needless_range_loop)]
pub mod lp;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
