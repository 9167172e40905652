//! Glue shared by the CLI, the C ABI and the tests: fitting axes against a
//! world, turning descriptions into targets, and the bundled demo setup.

use crate::attributes::AttributeSet;
use crate::error::Result;
use crate::linalg::{fit_axes, FeatureAxes};
use crate::steering::TextEmbedding;
use crate::text::{classify_text, AttributeLexicon};
use crate::world::{make_world, sample_dataset, SyntheticWorld, WorldSpec};

pub const DEMO_DESCRIPTIONS: &str = include_str!("../assets/demo_descriptions.txt");

pub const DEMO_LATENT_DIM: usize = 8;
pub const DEMO_ATTRIBUTES: [&str; 3] = ["Male", "Smiling", "Young"];
pub const DEMO_RHO: f64 = 0.5;
pub const DEMO_WORLD_SEED: u64 = 7;
pub const DEMO_FIT_SAMPLES: usize = 2000;
pub const DEMO_RIDGE: f64 = 1e-3;
pub const DEMO_FIT_SEED: u64 = 1;
pub const DEMO_N_PER: usize = 10;
pub const DEMO_SEED: u64 = 2024;

pub fn demo_world_spec() -> WorldSpec {
    WorldSpec::new(DEMO_LATENT_DIM, DEMO_ATTRIBUTES.len(), DEMO_RHO, DEMO_WORLD_SEED)
        .expect("3 <= 40")
        .with_attributes(AttributeSet::from_names(&DEMO_ATTRIBUTES).expect("CelebA names"))
}

pub fn demo_world() -> Result<SyntheticWorld> {
    make_world(demo_world_spec())
}

/// Samples `n` labelled latents, fits raw axes and orthonormalizes them in
/// canonical order.
pub fn fit_world_axes(world: &SyntheticWorld, n: usize, ridge: f64, seed: u64) -> Result<FeatureAxes> {
    let data = sample_dataset(world, n, seed)?;
    let mut raw = fit_axes(&data, ridge)?;
    raw.meta.seed = Some(seed);
    FeatureAxes::from_raw(raw)
}

/// Non-empty lines that are not `#` comments.
pub fn parse_descriptions(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Classifies each description and restricts it to `attributes`.
pub fn embed_descriptions(
    descriptions: &[String],
    lexicon: &AttributeLexicon,
    attributes: &AttributeSet,
) -> Result<Vec<(String, TextEmbedding)>> {
    descriptions
        .iter()
        .map(|d| {
            let full = classify_text(d, lexicon).embedding;
            Ok((d.clone(), full.select(attributes)?))
        })
        .collect()
}
