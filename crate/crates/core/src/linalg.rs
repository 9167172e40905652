//! Dense vectors and matrices, the latent-to-attribute regression fit and
//! Gram–Schmidt orthonormalization of the fitted directions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LATENT_DIM: usize = 512;
pub const DEFAULT_ATTR_COUNT: usize = 40;

/// Labels are clamped to `[LABEL_CLAMP, 1 - LABEL_CLAMP]` before the logit.
pub const LABEL_CLAMP: f64 = 1e-6;
/// Residual norm (relative to the input column norm, floored at 1) below
/// which a column is considered to lie in the span of earlier axes.
pub const COLLINEAR_TOL: f64 = 1e-8;
/// Norms at or below this are treated as zero.
pub const ZERO_NORM_TOL: f64 = 1e-12;

const FIT_CHUNK: usize = 1024;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// A point in the generator's latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_norm(&self) -> f64 {
        l1_norm(&self.0)
    }
}

/// Per-attribute probabilities, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(Vec<f64>);

impl AttributeVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfUnitRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            check_len(rows, c.len())?;
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn column_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows.max(1)).take(self.cols)
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols, x.len())?;
        let mut out = vec![0.0; self.rows];
        for (col, &xj) in self.columns().zip(x) {
            if xj != 0.0 {
                for (o, c) in out.iter_mut().zip(col) {
                    *o += xj * c;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn transpose_mul(&self, other: &Matrix) -> Result<Matrix> {
        check_len(self.rows, other.rows)?;
        let mut out = Matrix::zeros(self.cols, other.cols);
        for j in 0..other.cols {
            for i in 0..self.cols {
                out.set(i, j, dot(self.column(i), other.column(j)));
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// How an [`AxisMatrix`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub method: String,
    pub seed: Option<u64>,
    pub samples: usize,
    pub ridge: f64,
}

/// Raw regression directions, one column per attribute (`d_z × n_attr`).
#[derive(Debug, Clone, PartialEq)]
pub struct AxisMatrix {
    matrix: Matrix,
    pub meta: FitMetadata,
}

impl AxisMatrix {
    pub fn new(matrix: Matrix, meta: FitMetadata) -> Result<Self> {
        if let Some(i) = matrix.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { matrix, meta })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn latent_dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn attr_count(&self) -> usize {
        self.matrix.cols
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        self.matrix.column(k)
    }

    pub fn orthonormalize(&self, order: &[usize]) -> Result<AxisBasis> {
        gram_schmidt(&self.matrix, order)
    }
}

/// Column-orthonormal axes. Columns sit at canonical attribute positions;
/// `order` is the sequence in which they were orthogonalized.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBasis {
    matrix: Matrix,
    order: Vec<usize>,
}

impl AxisBasis {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn latent_dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn attr_count(&self) -> usize {
        self.matrix.cols
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        self.matrix.column(k)
    }

    /// Rebuilds a basis from stored parts, checking orthonormality.
    pub fn from_parts(matrix: Matrix, order: Vec<usize>) -> Result<Self> {
        check_permutation(&order, matrix.cols)?;
        let gram = matrix.transpose_mul(&matrix)?;
        let dev = max_abs_deviation_from_identity(&gram);
        if dev.is_nan() || dev > 1e-9 {
            return Err(Error::Format(format!(
                "stored basis is not orthonormal (max |WᵀW - I| = {dev:e})"
            )));
        }
        Ok(Self { matrix, order })
    }
}

/// Raw fitted directions together with their canonical-order orthonormal
/// basis. Feature lock re-orthogonalizes from `raw`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAxes {
    pub raw: AxisMatrix,
    pub basis: AxisBasis,
}

impl FeatureAxes {
    pub fn from_raw(raw: AxisMatrix) -> Result<Self> {
        let order = canonical_order(raw.attr_count());
        let basis = raw.orthonormalize(&order)?;
        Ok(Self { raw, basis })
    }

    pub fn latent_dim(&self) -> usize {
        self.raw.latent_dim()
    }

    pub fn attr_count(&self) -> usize {
        self.raw.attr_count()
    }
}

pub fn canonical_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub fn max_abs_deviation_from_identity(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.cols {
        for i in 0..m.rows {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = (m.get(i, j) - target).abs();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidPermutation(n));
    }
    let mut seen = vec![false; n];
    for &k in order {
        if k >= n || std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidPermutation(n));
        }
    }
    Ok(())
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(LABEL_CLAMP, 1.0 - LABEL_CLAMP);
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Accumulated upper triangle of `XᵀX` and the full `XᵀT` for one chunk.
struct NormalParts {
    gram: Vec<f64>,
    cross: Vec<f64>,
}

fn accumulate(chunk: &[(LatentVector, AttributeVector)], d: usize, m: usize) -> NormalParts {
    let mut gram = vec![0.0; d * d];
    let mut cross = vec![0.0; d * m];
    let mut targets = vec![0.0; m];
    for (x, y) in chunk {
        let x = x.as_slice();
        for (t, &p) in targets.iter_mut().zip(y.as_slice()) {
            *t = logit(p);
        }
        for j in 0..d {
            let xj = x[j];
            let col = &mut gram[j * d..j * d + j + 1];
            for (g, &xi) in col.iter_mut().zip(&x[..=j]) {
                *g += xi * xj;
            }
        }
        for (k, &t) in targets.iter().enumerate() {
            let col = &mut cross[k * d..(k + 1) * d];
            for (c, &xi) in col.iter_mut().zip(x) {
                *c += xi * t;
            }
        }
    }
    NormalParts { gram, cross }
}

/// Closed-form ridge regression of logit-transformed labels on latents.
///
/// Minimizes `Σ‖logit(y_i) − x_iᵀB‖² + ridge·‖B‖²` via the normal equations
/// and a Cholesky solve. Partial sums are formed over fixed-size chunks and
/// combined in chunk order, so the result does not depend on thread count.
pub fn fit_axes(samples: &[(LatentVector, AttributeVector)], ridge: f64) -> Result<AxisMatrix> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "ridge must be finite and >= 0, got {ridge}"
        )));
    }
    let Some((x0, y0)) = samples.first() else {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    };
    let (d, m) = (x0.dim(), y0.len());
    if samples.len() < d {
        return Err(Error::TooFewSamples {
            needed: d,
            got: samples.len(),
        });
    }
    for (x, y) in samples {
        check_len(d, x.dim())?;
        check_len(m, y.len())?;
    }

    let partials: Vec<NormalParts> = samples
        .par_chunks(FIT_CHUNK)
        .map(|chunk| accumulate(chunk, d, m))
        .collect();
    let mut gram = vec![0.0; d * d];
    let mut cross = vec![0.0; d * m];
    for p in &partials {
        for (a, b) in gram.iter_mut().zip(&p.gram) {
            *a += b;
        }
        for (a, b) in cross.iter_mut().zip(&p.cross) {
            *a += b;
        }
    }
    // mirror the upper triangle
    for j in 0..d {
        for i in 0..j {
            gram[i * d + j] = gram[j * d + i];
        }
        gram[j * d + j] += ridge;
    }

    let gram = Matrix::from_col_major(d, d, gram)?;
    let rhs = Matrix::from_col_major(d, m, cross)?;
    let solution = solve_spd(gram, rhs)?;
    AxisMatrix::new(
        solution,
        FitMetadata {
            method: "ridge-normal-equations/logit".into(),
            seed: None,
            samples: samples.len(),
            ridge,
        },
    )
}

/// Solves `A·X = R` for symmetric positive definite `A` by Cholesky.
#[allow(clippy::needless_range_loop)]
fn solve_spd(mut a: Matrix, mut rhs: Matrix) -> Result<Matrix> {
    let n = a.rows;
    let max_diag = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let pivot_floor = max_diag * 1e-13;
    // lower-triangular factor overwrites the lower half of `a`
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= a.get(j, k) * a.get(j, k);
        }
        if diag.is_nan() || diag <= pivot_floor {
            return Err(Error::SingularSystem);
        }
        let ljj = diag.sqrt();
        a.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= a.get(i, k) * a.get(j, k);
            }
            a.set(i, j, s / ljj);
        }
    }
    for c in 0..rhs.cols {
        let b = rhs.column_mut(c);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= a.get(i, k) * b[k];
            }
            b[i] = s / a.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= a.get(k, i) * b[k];
            }
            b[i] = s / a.get(i, i);
        }
    }
    Ok(rhs)
}

/// Orthogonal projection of `v` onto `span{u}`: `(⟨v,u⟩/⟨u,u⟩)·u`.
pub fn project(v: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len(u.len(), v.len())?;
    let uu = dot(u, u);
    if uu.sqrt() <= ZERO_NORM_TOL {
        return Err(Error::ZeroReferenceAxis);
    }
    let c = dot(v, u) / uu;
    Ok(u.iter().map(|x| c * x).collect())
}

fn subtract_projection(v: &mut [f64], u: &[f64]) -> Result<()> {
    let p = project(v, u)?;
    for (a, b) in v.iter_mut().zip(&p) {
        *a -= b;
    }
    Ok(())
}

/// Modified Gram–Schmidt over the columns of `b`, visited in `order`.
///
/// Each column has its projections onto every previously accepted column
/// removed and is then scaled to unit length. The output keeps columns at
/// their original indices. A second subtraction sweep is applied after
/// normalizing, which keeps `WᵀW` at machine precision for
/// ill-conditioned inputs.
pub fn gram_schmidt(b: &Matrix, order: &[usize]) -> Result<AxisBasis> {
    check_permutation(order, b.cols)?;
    let mut out = Matrix::zeros(b.rows, b.cols);
    let mut accepted: Vec<usize> = Vec::with_capacity(b.cols);
    for &k in order {
        let source = b.column(k);
        let scale = norm(source).max(1.0);
        let mut u = source.to_vec();
        for &j in &accepted {
            subtract_projection(&mut u, out.column(j))?;
        }
        let residual = norm(&u);
        if residual.is_nan() || residual <= COLLINEAR_TOL * scale {
            return Err(Error::AxisCollinear(k));
        }
        u.iter_mut().for_each(|x| *x /= residual);
        if !accepted.is_empty() {
            for &j in &accepted {
                subtract_projection(&mut u, out.column(j))?;
            }
            let n = norm(&u);
            u.iter_mut().for_each(|x| *x /= n);
        }
        out.column_mut(k).copy_from_slice(&u);
        accepted.push(k);
    }
    Ok(AxisBasis {
        matrix: out,
        order: order.to_vec(),
    })
}

/// `⟨a,b⟩ / (‖a‖·‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    if na <= ZERO_NORM_TOL || nb <= ZERO_NORM_TOL {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
