//! Latent manipulation: differentiation, nonlinear reweighting, movement
//! along the feature axes with optional feature lock, and L1
//! renormalization after every move.

use std::f64::consts::FRAC_PI_3;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attributes::AttributeSet;
use crate::error::{Error, Result};
use crate::linalg::{canonical_order, AttributeVector, AxisBasis, FeatureAxes, LatentVector, ZERO_NORM_TOL};

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Target attribute values from a text description (`l_trg`) plus the mask
/// of attributes the text actually mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    values: AttributeVector,
    mask: Vec<bool>,
}

impl TextEmbedding {
    pub fn new(values: AttributeVector, mask: Vec<bool>) -> Result<Self> {
        check_len(values.len(), mask.len())?;
        if let Some(i) = mask.iter().zip(values.as_slice()).position(|(m, v)| !m && *v != 0.0) {
            return Err(Error::InvalidConfig(format!(
                "unspecified attribute {i} must have value 0"
            )));
        }
        Ok(Self { values, mask })
    }

    pub fn unspecified(len: usize) -> Self {
        Self {
            values: AttributeVector::zeros(len),
            mask: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn specified_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn specified_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Re-indexes a full 40-attribute embedding onto `set`. Mentions of
    /// attributes outside `set` are dropped.
    pub fn select(&self, set: &AttributeSet) -> Result<TextEmbedding> {
        check_len(crate::attributes::CELEBA_ATTRIBUTES.len(), self.len())?;
        let idx = set.celeba_indices();
        let values = idx.iter().map(|&i| self.values()[i]).collect();
        let mask = idx.iter().map(|&i| self.mask[i]).collect();
        TextEmbedding::new(AttributeVector::new(values)?, mask)
    }
}

/// Attribute probabilities predicted for the current latent (`l_org`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageEmbedding(AttributeVector);

impl ImageEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        AttributeVector::new(values).map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl From<AttributeVector> for ImageEmbedding {
    fn from(v: AttributeVector) -> Self {
        Self(v)
    }
}

/// Signed movement demand per attribute, `l_trg − l_org` on specified
/// attributes and exactly zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEmbedding {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl DiffEmbedding {
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        check_len(values.len(), mask.len())?;
        for (i, (&v, &m)) in values.iter().zip(&mask).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            if !(-1.0..=1.0).contains(&v) || (!m && v != 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "difference entry {i} = {v} violates range/mask"
                )));
            }
        }
        Ok(Self { values, mask })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// How the latent is renormalized after each move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Divide by the L1 norm, leaving a unit-L1 vector.
    StrictUnitL1,
    /// Rescale to the L1 norm the latent had before the first move.
    PreserveInitialL1,
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict_unit_l1" | "strict" => Ok(Self::StrictUnitL1),
            "preserve_initial_l1" | "preserve" => Ok(Self::PreserveInitialL1),
            _ => Err(Error::InvalidConfig(format!("unknown normalization mode `{s}`"))),
        }
    }
}

pub const DEFAULT_STEP_SIZE: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub step_size: f64,
    pub enable_differentiation: bool,
    pub enable_reweight: bool,
    pub enable_normalization: bool,
    pub enable_feature_lock: bool,
    pub normalization_mode: NormalizationMode,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        AblationGroup::A.config()
    }
}

impl SteeringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_size > 0.0 && self.step_size.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.step_size
            )))
        }
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }
}

/// The five operation subsets compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationGroup {
    /// All four operations.
    A,
    /// Reweighting, differentiation and normalization.
    B,
    /// Reweighting and differentiation.
    C,
    /// Reweighting only.
    D,
    /// Blank: raw masked targets as weights.
    E,
}

impl AblationGroup {
    pub const ALL: [AblationGroup; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];

    pub fn config(self) -> SteeringConfig {
        let (diff, rew, norm, lock) = match self {
            Self::A => (true, true, true, true),
            Self::B => (true, true, true, false),
            Self::C => (true, true, false, false),
            Self::D => (false, true, false, false),
            Self::E => (false, false, false, false),
        };
        SteeringConfig {
            step_size: DEFAULT_STEP_SIZE,
            enable_differentiation: diff,
            enable_reweight: rew,
            enable_normalization: norm,
            enable_feature_lock: lock,
            normalization_mode: NormalizationMode::PreserveInitialL1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
            Self::E => "E",
        }
    }
}

impl fmt::Display for AblationGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AblationGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            "E" => Ok(Self::E),
            _ => Err(Error::InvalidConfig(format!("unknown group `{s}` (expected A-E)"))),
        }
    }
}

/// Predicts attribute probabilities for a latent; the composition of
/// generator and image encoder.
pub trait AttributeOracle: Sync {
    fn predict(&self, z: &LatentVector) -> Result<ImageEmbedding>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub attribute: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub attribute: usize,
    /// Difference (or raw target) value that drove the move.
    pub signal: f64,
    pub weight: f64,
    /// L1 norm right after the move, before normalization.
    pub l1_before: f64,
    /// L1 norm after normalization; absent when normalization is off.
    pub l1_after: Option<f64>,
    /// Oracle probabilities once this step (move + normalization) is done.
    pub oracle: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SteeringTrace {
    pub entries: Vec<TraceEntry>,
    /// Gram–Schmidt order of the axes the moves used.
    pub axis_order: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    sample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<&'a str>,
    #[serde(flatten)]
    entry: &'a TraceEntry,
}

impl SteeringTrace {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One JSON object per move, newline terminated.
    pub fn to_jsonl(&self, sample: Option<usize>, names: Option<&AttributeSet>) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            let line = TraceLine {
                sample,
                name: names.and_then(|n| n.names().get(entry.attribute)).map(String::as_str),
                entry,
            };
            out.push_str(&serde_json::to_string(&line).expect("trace entries serialize"));
            out.push('\n');
        }
        out
    }
}

/// `l_diff = l_trg − l_org` on specified attributes; unspecified stay 0.
pub fn differentiate(trg: &TextEmbedding, org: &ImageEmbedding) -> Result<DiffEmbedding> {
    check_len(trg.len(), org.len())?;
    let values = trg
        .values()
        .iter()
        .zip(org.values())
        .zip(trg.mask())
        .map(|((t, o), &m)| if m { t - o } else { 0.0 })
        .collect();
    DiffEmbedding::new(values, trg.mask().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reweighted {
    pub values: Vec<f64>,
    /// Indices whose input lay outside `[-1, 1]` and was clamped.
    pub clamped: Vec<usize>,
}

/// `tan(d·π/3)` per entry, mapping `[-1, 1]` onto `[-√3, √3]`.
pub fn reweight(values: &[f64]) -> Reweighted {
    let mut clamped = Vec::new();
    let values = values
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let c = if d.is_nan() { 0.0 } else { d.clamp(-1.0, 1.0) };
            if c != d {
                clamped.push(i);
            }
            if c == 0.0 {
                0.0
            } else {
                (c * FRAC_PI_3).tan()
            }
        })
        .collect();
    Reweighted { values, clamped }
}

/// `ẑ = z + W·l`. Zero weights leave coordinates untouched.
pub fn apply_move(z: &LatentVector, basis: &AxisBasis, weights: &[f64]) -> Result<LatentVector> {
    check_len(basis.latent_dim(), z.dim())?;
    check_len(basis.attr_count(), weights.len())?;
    let mut out = z.as_slice().to_vec();
    for (k, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            add_scaled(&mut out, basis.axis(k), w);
        }
    }
    LatentVector::new(out)
}

fn add_scaled(out: &mut [f64], axis: &[f64], w: f64) {
    for (o, a) in out.iter_mut().zip(axis) {
        *o += w * a;
    }
}

pub fn l1_normalize(x: &LatentVector, mode: NormalizationMode, reference_norm: f64) -> Result<LatentVector> {
    let l1 = x.l1_norm();
    if l1 <= ZERO_NORM_TOL {
        return Err(Error::ZeroVector);
    }
    let values = match mode {
        NormalizationMode::StrictUnitL1 => x.as_slice().iter().map(|v| v / l1).collect(),
        NormalizationMode::PreserveInitialL1 => {
            if !(reference_norm > 0.0 && reference_norm.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "reference norm must be positive, got {reference_norm}"
                )));
            }
            let s = reference_norm / l1;
            x.as_slice().iter().map(|v| v * s).collect()
        }
    };
    LatentVector::new(values)
}

/// Ordered moves: one per specified attribute with a nonzero weight,
/// strongest `|diff|` first, ties by ascending index.
pub fn plan_moves(diff: &DiffEmbedding, config: &SteeringConfig) -> Vec<Move> {
    let post = if config.enable_reweight {
        reweight(diff.values()).values
    } else {
        diff.values().to_vec()
    };
    let mut idx: Vec<usize> = (0..post.len()).filter(|&i| diff.mask()[i] && post[i] != 0.0).collect();
    idx.sort_by(|&a, &b| {
        diff.values()[b]
            .abs()
            .total_cmp(&diff.values()[a].abs())
            .then(a.cmp(&b))
    });
    idx.into_iter()
        .map(|attribute| Move {
            attribute,
            weight: config.step_size * post[attribute],
        })
        .collect()
}

/// Runs the whole manipulation pipeline for one latent.
///
/// `org` is the prediction at `z`; `oracle`, when given, is queried after
/// every step so the trace can show how earlier attributes hold up.
pub fn steer(
    z: &LatentVector,
    trg: &TextEmbedding,
    org: &ImageEmbedding,
    axes: &FeatureAxes,
    config: &SteeringConfig,
    oracle: Option<&dyn AttributeOracle>,
) -> Result<(LatentVector, SteeringTrace)> {
    config.validate()?;
    check_len(axes.latent_dim(), z.dim())?;
    check_len(axes.attr_count(), trg.len())?;
    check_len(axes.attr_count(), org.len())?;

    let diff = if config.enable_differentiation {
        differentiate(trg, org)?
    } else {
        DiffEmbedding::new(trg.values().to_vec(), trg.mask().to_vec())?
    };
    let mut trace = SteeringTrace::default();
    let plan = plan_moves(&diff, config);

    let locked;
    let basis = if config.enable_feature_lock {
        let moved: Vec<usize> = plan.iter().map(|m| m.attribute).collect();
        let rest = canonical_order(axes.attr_count())
            .into_iter()
            .filter(|k| !moved.contains(k));
        let order: Vec<usize> = moved.iter().copied().chain(rest).collect();
        locked = axes.raw.orthonormalize(&order)?;
        &locked
    } else {
        &axes.basis
    };
    trace.axis_order = basis.order().to_vec();

    let reference_norm = z.l1_norm();
    let mut current = z.clone();
    for (step, mv) in plan.iter().enumerate() {
        let mut moved = current.as_slice().to_vec();
        add_scaled(&mut moved, basis.axis(mv.attribute), mv.weight);
        let moved = LatentVector::new(moved)?;
        let l1_before = moved.l1_norm();
        let (next, l1_after) = if config.enable_normalization {
            let n = l1_normalize(&moved, config.normalization_mode, reference_norm)?;
            let l1 = n.l1_norm();
            (n, Some(l1))
        } else {
            (moved, None)
        };
        let oracle_values = match oracle {
            Some(o) => Some(o.predict(&next)?.values().to_vec()),
            None => None,
        };
        trace.entries.push(TraceEntry {
            step,
            attribute: mv.attribute,
            signal: diff.values()[mv.attribute],
            weight: mv.weight,
            l1_before,
            l1_after,
            oracle: oracle_values,
        });
        current = next;
    }
    Ok((current, trace))
}
