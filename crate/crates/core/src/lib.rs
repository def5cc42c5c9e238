//! Pixel-level certification of attribution maps.
//!
//! An attribution method is sparsified into a top-K% binary map and
//! smoothed under Gaussian input noise. Pixels whose vote clears the
//! threshold test are certified as important ("1") or unimportant ("0")
//! for every ℓ₂ perturbation below `σ·Φ⁻¹(τ)`; the rest abstain.

pub mod attribution;
pub mod error;
pub mod gridharness;
pub mod metrics;
pub mod render;
pub mod rng;
pub mod smoothing;
pub mod sparsify;
pub mod stats;
pub mod toymodel;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    AttributionMap, CertifiedMap, Correction, ImageTensor, Label, SmoothingConfig, SparsifiedMap,
};
