//! Synthetic generator/encoder oracle.
//!
//! Attribute `k` of a latent `z` has probability
//! `sigmoid(κ·⟨z, a_k⟩/√d_z + b_k)`, where the unit columns `a_k` are known.
//! With `ρ = 0` the columns are exactly orthonormal; larger `ρ` pulls every
//! column toward one shared mixing direction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributes::AttributeSet;
use crate::error::{Error, Result};
use crate::linalg::{canonical_order, dot, gram_schmidt, norm, sigmoid, AttributeVector, LatentVector, Matrix};
use crate::rng::{self, CounterRng};
use crate::steering::{AttributeOracle, ImageEmbedding};

pub const DEFAULT_KAPPA: f64 = 4.0;

const MIXING_STREAM: u64 = 1;
const NOISE_SALT: u64 = 0x6e6f_6973_655f_7631;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub d_z: usize,
    pub n_attr: usize,
    /// Entanglement in `[0, 1)`.
    pub rho: f64,
    pub kappa: f64,
    pub bias: Vec<f64>,
    /// Standard deviation of logit noise.
    pub sigma: f64,
    pub seed: u64,
    pub attributes: AttributeSet,
    #[serde(default = "default_rng_name")]
    pub rng: String,
}

fn default_rng_name() -> String {
    rng::ALGORITHM.to_string()
}

impl WorldSpec {
    /// Unbiased, noiseless world over the first `n_attr` CelebA attributes.
    pub fn new(d_z: usize, n_attr: usize, rho: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            d_z,
            n_attr,
            rho,
            kappa: DEFAULT_KAPPA,
            bias: vec![0.0; n_attr],
            sigma: 0.0,
            seed,
            attributes: AttributeSet::celeba_prefix(n_attr)?,
            rng: default_rng_name(),
        })
    }

    pub fn with_attributes(mut self, attributes: AttributeSet) -> Self {
        self.n_attr = attributes.len();
        self.bias.resize(self.n_attr, 0.0);
        self.attributes = attributes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d_z == 0 || self.n_attr == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.n_attr > self.d_z {
            return bad(format!("n_attr ({}) must not exceed d_z ({})", self.n_attr, self.d_z));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must be in [0, 1), got {}", self.rho));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if self.bias.len() != self.n_attr || self.bias.iter().any(|b| !b.is_finite()) {
            return bad(format!("bias must hold {} finite values", self.n_attr));
        }
        if self.attributes.len() != self.n_attr {
            return bad(format!(
                "{} attribute names given for n_attr = {}",
                self.attributes.len(),
                self.n_attr
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    spec: WorldSpec,
    directions: Matrix,
}

impl SyntheticWorld {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    /// The `d_z × n_attr` matrix of true attribute directions.
    pub fn directions(&self) -> &Matrix {
        &self.directions
    }

    pub fn attributes(&self) -> &AttributeSet {
        &self.spec.attributes
    }

    /// Reassembles a world from stored parts (used by the file loader).
    pub fn from_parts(spec: WorldSpec, directions: Matrix) -> Result<Self> {
        spec.validate()?;
        if directions.rows() != spec.d_z || directions.cols() != spec.n_attr {
            return Err(Error::Format(format!(
                "direction matrix is {}x{}, spec says {}x{}",
                directions.rows(),
                directions.cols(),
                spec.d_z,
                spec.n_attr
            )));
        }
        Ok(Self { spec, directions })
    }
}

pub fn make_world(spec: WorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let (d, n) = (spec.d_z, spec.n_attr);
    let mut rng = CounterRng::new(spec.seed, 0);
    let gaussian = Matrix::from_col_major(d, n, rng.normal_vec(d * n))?;
    let q = gram_schmidt(&gaussian, &canonical_order(n))?;
    let directions = if spec.rho == 0.0 {
        q.matrix().clone()
    } else {
        let mut mix = CounterRng::new(spec.seed, MIXING_STREAM).normal_vec(d);
        let mn = norm(&mix);
        mix.iter_mut().for_each(|v| *v /= mn);
        let mut a = Matrix::zeros(d, n);
        for k in 0..n {
            let col: Vec<f64> = q
                .axis(k)
                .iter()
                .zip(&mix)
                .map(|(qv, mv)| (1.0 - spec.rho) * qv + spec.rho * mv)
                .collect();
            let cn = norm(&col);
            if cn <= crate::linalg::ZERO_NORM_TOL {
                return Err(Error::AxisCollinear(k));
            }
            for (dst, v) in a.column_mut(k).iter_mut().zip(&col) {
                *dst = v / cn;
            }
        }
        a
    };
    Ok(SyntheticWorld { spec, directions })
}

fn latent_hash(z: &[f64]) -> u64 {
    // FNV-1a over the raw bits
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in z {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Attribute probabilities at `z`. Logit noise, when enabled, is a pure
/// function of the world seed and the bits of `z`.
pub fn encode(world: &SyntheticWorld, z: &LatentVector) -> Result<ImageEmbedding> {
    let spec = &world.spec;
    if z.dim() != spec.d_z {
        return Err(Error::DimensionMismatch {
            expected: spec.d_z,
            got: z.dim(),
        });
    }
    let scale = spec.kappa / (spec.d_z as f64).sqrt();
    let mut noise = (spec.sigma > 0.0).then(|| CounterRng::new(spec.seed ^ NOISE_SALT, latent_hash(z.as_slice())));
    let values = (0..spec.n_attr)
        .map(|k| {
            let mut logit = scale * dot(z.as_slice(), world.directions.column(k)) + spec.bias[k];
            if let Some(rng) = noise.as_mut() {
                logit += spec.sigma * rng.next_normal();
            }
            sigmoid(logit).clamp(0.0, 1.0)
        })
        .collect();
    ImageEmbedding::new(values)
}

impl AttributeOracle for SyntheticWorld {
    fn predict(&self, z: &LatentVector) -> Result<ImageEmbedding> {
        encode(self, z)
    }
}

/// Standard-normal latent for `(seed, stream)`.
pub fn sample_latent(seed: u64, stream: u64, d_z: usize) -> LatentVector {
    LatentVector::new(CounterRng::new(seed, stream).normal_vec(d_z)).expect("normal draws are finite")
}

/// `n` i.i.d. standard-normal latents with their oracle labels. Sample `i`
/// always comes from stream `i`, so output is independent of parallelism.
pub fn sample_dataset(world: &SyntheticWorld, n: usize, seed: u64) -> Result<Vec<(LatentVector, AttributeVector)>> {
    if n == 0 {
        return Err(Error::InvalidConfig("dataset size must be at least 1".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let z = sample_latent(seed, i, world.spec.d_z);
            let p = encode(world, &z)?;
            Ok((z, AttributeVector::new(p.values().to_vec())?))
        })
        .collect()
}

pub fn true_axis(world: &SyntheticWorld, k: usize) -> Result<&[f64]> {
    if k >= world.spec.n_attr {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: world.spec.n_attr,
        });
    }
    Ok(world.directions.column(k))
}
