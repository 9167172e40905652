//! Disentangled attribute axes in a generator's latent space, and steering
//! of latent vectors along them toward text-specified attribute targets.
//!
//! The pipeline: fit raw attribute directions by ridge regression on
//! logit labels ([`linalg::fit_axes`]), orthonormalize them
//! ([`linalg::gram_schmidt`]), classify a description into target values
//! ([`text::classify_text`]) and move latents along the axes
//! ([`steering::steer`]). A synthetic world with known directions
//! ([`world`]) stands in for the generator and image encoder so every
//! step can be checked against ground truth.

pub mod attributes;
pub mod celeba;
pub mod error;
pub mod eval;
pub mod export;
pub mod linalg;
pub mod manifest;
pub mod pipeline;
pub mod rng;
pub mod steering;
pub mod text;
pub mod ttfx;
pub mod world;

pub use error::{Error, ErrorClass, Result};
pub use linalg::{AttributeVector, AxisBasis, AxisMatrix, FeatureAxes, LatentVector};
pub use steering::{AblationGroup, SteeringConfig, TextEmbedding};
pub use world::{SyntheticWorld, WorldSpec};
