//! Dense complex operator algebra for small multipartite systems.
//!
//! Operators carry an ordered list of named subsystems; all subsystem
//! bookkeeping (tensor products, partial traces, embeddings, bipartite
//! matricization) is done against those names. The first subsystem is the
//! most significant index, matching Kronecker-product order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{DIM_CAP, HERMITICITY_TOL, RANK_TOL};

pub type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("matrix is {rows}x{cols}, expected square of dimension {expected}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("matrix deviates from Hermitian by {deviation:.3e} (tolerance {tol:.3e})")]
    NotHermitian { deviation: f64, tol: f64 },
    #[error("total dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("labels must be unique and match dims ({labels} labels, {dims} dims)")]
    BadLabels { labels: usize, dims: usize },
    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),
    #[error("operand dimensions differ: {0:?} vs {1:?}")]
    DimMismatch(Vec<usize>, Vec<usize>),
    #[error("negative eigenvalue {value:.3e} below -{tol:.3e}; operator is not PSD")]
    NotPsd { value: f64, tol: f64 },
    #[error("state norm {0} exceeds 1 (subnormalized states only)")]
    NormExceeded(f64),
    #[error("bipartition must be a proper nonempty subset of the subsystems")]
    InvalidBipartition,
    #[error("duplicate subsystem label `{0}` in tensor product")]
    DuplicateLabel(String),
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Row-major strides: the first subsystem is the most significant.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Flat offsets of every multi-index over the axes `axes` of a space with
/// the given dims. Offsets come out in lexicographic order of the selected
/// axes' multi-indices.
fn axis_offsets(dims: &[usize], axes: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut offsets = vec![0usize];
    for &ax in axes {
        let mut next = Vec::with_capacity(offsets.len() * dims[ax]);
        for &base in &offsets {
            for k in 0..dims[ax] {
                next.push(base + k * st[ax]);
            }
        }
        offsets = next;
    }
    offsets
}

/// A dense Hermitian operator tagged with named subsystem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: DMatrix<C64>,
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl HermitianOperator {
    pub fn new<S: Into<String> + Clone>(
        mat: DMatrix<C64>,
        dims: &[usize],
        labels: &[S],
    ) -> Result<Self, OperatorError> {
        let d: usize = dims.iter().product();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(OperatorError::ShapeMismatch {
                rows: mat.nrows(),
                cols: mat.ncols(),
                expected: d,
            });
        }
        if d > DIM_CAP {
            return Err(OperatorError::DimensionCap { dim: d, cap: DIM_CAP });
        }
        let labels: Vec<String> = labels.iter().cloned().map(Into::into).collect();
        if labels.len() != dims.len()
            || (1..labels.len()).any(|i| labels[..i].contains(&labels[i]))
        {
            return Err(OperatorError::BadLabels {
                labels: labels.len(),
                dims: dims.len(),
            });
        }
        let scale = max_abs(&mat);
        let dev = max_abs(&(&mat - mat.adjoint()));
        let tol = HERMITICITY_TOL * scale.max(1.0);
        if dev > tol {
            return Err(OperatorError::NotHermitian { deviation: dev, tol });
        }
        Ok(Self {
            mat,
            dims: dims.to_vec(),
            labels,
        })
    }

    /// Wraps a computed matrix, symmetrizing away floating-point drift.
    /// Intended for results of operations that are Hermitian by construction.
    pub(crate) fn from_computed(mat: DMatrix<C64>, dims: Vec<usize>, labels: Vec<String>) -> Self {
        let sym = (&mat + mat.adjoint()) * Complex::new(0.5, 0.0);
        Self {
            mat: sym,
            dims,
            labels,
        }
    }

    pub fn zeros<S: Into<String> + Clone>(dims: &[usize], labels: &[S]) -> Self {
        let d: usize = dims.iter().product();
        Self {
            mat: DMatrix::zeros(d, d),
            dims: dims.to_vec(),
            labels: labels.iter().cloned().map(Into::into).collect(),
        }
    }

    pub fn identity<S: Into<String> + Clone>(dims: &[usize], labels: &[S]) -> Self {
        let d: usize = dims.iter().product();
        Self {
            mat: DMatrix::identity(d, d),
            dims: dims.to_vec(),
            labels: labels.iter().cloned().map(Into::into).collect(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> Vec<&str> {
        self.labels.iter().map(|s| s.as_str()).collect()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dim_of(&self, labels: &[&str]) -> Result<usize, OperatorError> {
        let mut d = 1usize;
        for l in labels {
            let pos = self.position_of(l)?;
            d *= self.dims[pos];
        }
        Ok(d)
    }

    fn position_of(&self, label: &str) -> Result<usize, OperatorError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| OperatorError::UnknownSubsystem(label.to_string()))
    }

    /// Positions of `subset` in this operator's subsystem order, sorted by
    /// original position.
    fn positions_sorted(&self, subset: &[&str]) -> Result<Vec<usize>, OperatorError> {
        let mut pos: Vec<usize> = subset
            .iter()
            .map(|l| self.position_of(l))
            .collect::<Result<_, _>>()?;
        pos.sort_unstable();
        pos.dedup();
        if pos.len() != subset.len() {
            return Err(OperatorError::BadLabels {
                labels: subset.len(),
                dims: pos.len(),
            });
        }
        Ok(pos)
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.mat)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mat: &self.mat * Complex::new(factor, 0.0),
            dims: self.dims.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, OperatorError> {
        if self.dims != other.dims {
            return Err(OperatorError::DimMismatch(
                self.dims.clone(),
                other.dims.clone(),
            ));
        }
        Ok(Self {
            mat: &self.mat + &other.mat,
            dims: self.dims.clone(),
            labels: self.labels.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, OperatorError> {
        Ok(self.add(&other.scaled(-1.0))?)
    }

    /// Kronecker product; `dims(result) = dims(self) ++ dims(other)`.
    pub fn tensor(&self, other: &Self) -> Result<Self, OperatorError> {
        for l in &other.labels {
            if self.labels.contains(l) {
                return Err(OperatorError::DuplicateLabel(l.clone()));
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let d: usize = dims.iter().product();
        if d > DIM_CAP {
            return Err(OperatorError::DimensionCap { dim: d, cap: DIM_CAP });
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            mat: self.mat.kronecker(&other.mat),
            dims,
            labels,
        })
    }

    /// Traces out every subsystem not named in `keep`. The result's
    /// subsystems are the kept ones, in their original order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self, OperatorError> {
        let keep_pos = self.positions_sorted(keep)?;
        let traced_pos: Vec<usize> = (0..self.dims.len())
            .filter(|p| !keep_pos.contains(p))
            .collect();
        let keep_off = axis_offsets(&self.dims, &keep_pos);
        let traced_off = axis_offsets(&self.dims, &traced_pos);
        let dk = keep_off.len();
        let mut out = DMatrix::<C64>::zeros(dk, dk);
        for (i, &oi) in keep_off.iter().enumerate() {
            for (j, &oj) in keep_off.iter().enumerate() {
                let mut acc = Complex::new(0.0, 0.0);
                for &ot in &traced_off {
                    acc += self.mat[(oi + ot, oj + ot)];
                }
                out[(i, j)] = acc;
            }
        }
        let dims: Vec<usize> = keep_pos.iter().map(|&p| self.dims[p]).collect();
        let labels: Vec<String> = keep_pos.iter().map(|&p| self.labels[p].clone()).collect();
        Ok(Self::from_computed(out, dims, labels))
    }

    /// Embeds this operator into a larger space by tensoring identities on
    /// the subsystems it does not act on. Subsystem order and dimensions come
    /// from `dims`/`labels` of the target space; matching is by label.
    pub fn embed_into(
        &self,
        dims: &[usize],
        labels: &[String],
    ) -> Result<Self, OperatorError> {
        let mut own_pos = Vec::with_capacity(self.labels.len());
        for l in &self.labels {
            let p = labels
                .iter()
                .position(|t| t == l)
                .ok_or_else(|| OperatorError::UnknownSubsystem(l.clone()))?;
            if dims[p] != self.dims[self.position_of(l)?] {
                return Err(OperatorError::DimMismatch(
                    self.dims.clone(),
                    dims.to_vec(),
                ));
            }
            own_pos.push(p);
        }
        // The operator's own axis order must be respected: axis k of self maps
        // to target axis own_pos[k]. axis_offsets iterates lexicographically in
        // the order given, which reproduces self's index order.
        let rest_pos: Vec<usize> = (0..dims.len()).filter(|p| !own_pos.contains(p)).collect();
        let own_off = axis_offsets(dims, &own_pos);
        let rest_off = axis_offsets(dims, &rest_pos);
        let dfull: usize = dims.iter().product();
        let mut out = DMatrix::<C64>::zeros(dfull, dfull);
        for (i, &oi) in own_off.iter().enumerate() {
            for (j, &oj) in own_off.iter().enumerate() {
                let v = self.mat[(i, j)];
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                for &or in &rest_off {
                    out[(oi + or, oj + or)] = v;
                }
            }
        }
        Ok(Self {
            mat: out,
            dims: dims.to_vec(),
            labels: labels.to_vec(),
        })
    }

    /// Hermitian eigendecomposition with eigenvalues sorted descending.
    ///
    /// Deterministic: ties keep the solver's order, near-degenerate clusters
    /// are re-orthonormalized by ordered Gram-Schmidt, and each eigenvector's
    /// phase is fixed by making its largest-modulus entry real positive.
    /// Downstream code must only rely on eigenprojectors of degenerate
    /// clusters, never on individual degenerate eigenvectors.
    pub fn eig(&self) -> Eig {
        let se = self.mat.clone().symmetric_eigen();
        let n = self.mat.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            se.eigenvalues[b]
                .partial_cmp(&se.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let mut vectors = DMatrix::<C64>::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            vectors.set_column(k, &se.eigenvectors.column(i));
        }
        let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let cluster_tol = 1e-10 * scale;
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && (values[end - 1] - values[end]).abs() <= cluster_tol {
                end += 1;
            }
            if end - start > 1 {
                gram_schmidt_columns(&mut vectors, start, end);
            }
            start = end;
        }
        for k in 0..n {
            let col = vectors.column(k);
            let mut best = 0usize;
            let mut best_norm = 0.0f64;
            for (r, z) in col.iter().enumerate() {
                let nr = z.norm();
                if nr > best_norm + 1e-12 {
                    best_norm = nr;
                    best = r;
                }
            }
            let z = vectors[(best, k)];
            if z.norm() > 0.0 {
                let phase = z / z.norm();
                let fix = phase.conj();
                for r in 0..n {
                    vectors[(r, k)] *= fix;
                }
            }
        }
        Eig { values, vectors }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self
            .eig()
            .values
            .first()
            .expect("operators are at least 1x1")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self
            .eig()
            .values
            .last()
            .expect("operators are at least 1x1")
    }

    /// Applies a spectral function with the global rank-cutoff convention:
    /// eigenvalues at or below `rank_tol * lambda_max` map to zero.
    pub fn psd_transform(&self, kind: PsdFn, rank_tol: f64) -> Result<Self, OperatorError> {
        let eig = self.eig();
        let scale = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let cutoff = rank_tol * scale;
        if let Some(&worst) = eig
            .values
            .iter()
            .filter(|&&v| v < -cutoff)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            return Err(OperatorError::NotPsd {
                value: worst,
                tol: cutoff,
            });
        }
        let mapped: Vec<f64> = eig
            .values
            .iter()
            .map(|&v| {
                if v <= cutoff {
                    0.0
                } else {
                    match kind {
                        PsdFn::GenInverse => 1.0 / v,
                        PsdFn::Sqrt => v.sqrt(),
                        PsdFn::InvSqrt => 1.0 / v.sqrt(),
                    }
                }
            })
            .collect();
        Ok(Self::from_computed(
            eig.recompose(&mapped),
            self.dims.clone(),
            self.labels.clone(),
        ))
    }

    /// Projector onto the span of eigenvectors above the rank cutoff.
    pub fn support_projector(&self, rank_tol: f64) -> Result<Self, OperatorError> {
        let eig = self.eig();
        let scale = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let cutoff = rank_tol * scale;
        let mapped: Vec<f64> = eig
            .values
            .iter()
            .map(|&v| if v > cutoff { 1.0 } else { 0.0 })
            .collect();
        Ok(Self::from_computed(
            eig.recompose(&mapped),
            self.dims.clone(),
            self.labels.clone(),
        ))
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        let eig = self.eig();
        let scale = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        eig.values.iter().filter(|&&v| v > rank_tol * scale).count()
    }

    /// Half the trace norm of the difference, `½‖a − b‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64, OperatorError> {
        let diff = self.sub(other)?;
        Ok(0.5 * diff.eig().values.iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Purification with a reference system of dimension `rank(self)`.
    pub fn purify(&self, ref_label: &str) -> Result<PureState, OperatorError> {
        let eig = self.eig();
        let scale = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let cutoff = RANK_TOL * scale;
        if let Some(&worst) = eig
            .values
            .iter()
            .filter(|&&v| v < -cutoff)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            return Err(OperatorError::NotPsd {
                value: worst,
                tol: cutoff,
            });
        }
        let rank = eig.values.iter().filter(|&&v| v > cutoff).count().max(1);
        let d = self.dim();
        let mut amps = DVector::<C64>::zeros(d * rank);
        for k in 0..rank.min(eig.values.len()) {
            let lam = eig.values[k].max(0.0);
            if lam <= cutoff {
                continue;
            }
            let w = lam.sqrt();
            for r in 0..d {
                // reference index is least significant: |v_k> ⊗ |k>_ref
                amps[r * rank + k] = eig.vectors[(r, k)] * Complex::new(w, 0.0);
            }
        }
        let mut dims = self.dims.clone();
        dims.push(rank);
        let mut labels = self.labels.clone();
        labels.push(ref_label.to_string());
        PureState::new_unchecked(amps, dims, labels)
    }
}

/// Spectral functions applied on the support of a PSD operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdFn {
    GenInverse,
    Sqrt,
    InvSqrt,
}

/// Result of a Hermitian eigendecomposition: `values` descending,
/// `vectors` orthonormal columns in matching order.
pub struct Eig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Eig {
    /// Rebuilds `V diag(f) V†` for replacement eigenvalues `f`.
    pub fn recompose(&self, values: &[f64]) -> DMatrix<C64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::<C64>::zeros(n, n);
        for (k, &v) in values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let col = self.vectors.column(k);
            for i in 0..n {
                let vi = col[i] * Complex::new(v, 0.0);
                if vi.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vi * col[j].conj();
                }
            }
        }
        out
    }
}

fn gram_schmidt_columns(m: &mut DMatrix<C64>, start: usize, end: usize) {
    let n = m.nrows();
    for k in start..end {
        for prev in start..k {
            let mut overlap = Complex::new(0.0, 0.0);
            for r in 0..n {
                overlap += m[(r, prev)].conj() * m[(r, k)];
            }
            for r in 0..n {
                let sub = overlap * m[(r, prev)];
                m[(r, k)] -= sub;
            }
        }
        let norm: f64 = (0..n).map(|r| m[(r, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for r in 0..n {
                m[(r, k)] /= Complex::new(norm, 0.0);
            }
        }
    }
}

/// A (sub)normalized pure state over named subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: DVector<C64>,
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl PureState {
    pub fn new<S: Into<String> + Clone>(
        amps: DVector<C64>,
        dims: &[usize],
        labels: &[S],
    ) -> Result<Self, OperatorError> {
        let labels: Vec<String> = labels.iter().cloned().map(Into::into).collect();
        Self::new_unchecked(amps, dims.to_vec(), labels)
    }

    fn new_unchecked(
        amps: DVector<C64>,
        dims: Vec<usize>,
        labels: Vec<String>,
    ) -> Result<Self, OperatorError> {
        let d: usize = dims.iter().product();
        if amps.len() != d {
            return Err(OperatorError::ShapeMismatch {
                rows: amps.len(),
                cols: 1,
                expected: d,
            });
        }
        let norm = amps.norm();
        if norm > 1.0 + 1e-12 {
            return Err(OperatorError::NormExceeded(norm));
        }
        Ok(Self { amps, dims, labels })
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> Vec<&str> {
        self.labels.iter().map(|s| s.as_str()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn density(&self) -> HermitianOperator {
        let mat = &self.amps * self.amps.adjoint();
        HermitianOperator::from_computed(mat, self.dims.clone(), self.labels.clone())
    }

    /// Reduced density operator on `keep`, computed through the bipartite
    /// matricization Gram product rather than a full density matrix.
    pub fn reduced_density(&self, keep: &[&str]) -> Result<HermitianOperator, OperatorError> {
        if keep.len() == self.dims.len() {
            return Ok(self.density());
        }
        let m = matricize(&self.amps, &self.dims, &self.labels, keep)?;
        let gram = &m * m.adjoint();
        let pos = positions_of(&self.labels, keep)?;
        let dims: Vec<usize> = pos.iter().map(|&p| self.dims[p]).collect();
        let labels: Vec<String> = pos.iter().map(|&p| self.labels[p].clone()).collect();
        Ok(HermitianOperator::from_computed(gram, dims, labels))
    }

    /// Schmidt decomposition across the cut `side_a` | rest.
    pub fn schmidt_decompose(&self, side_a: &[&str]) -> Result<Schmidt, OperatorError> {
        if side_a.is_empty() || side_a.len() >= self.dims.len() {
            return Err(OperatorError::InvalidBipartition);
        }
        schmidt_of_vector(&self.amps, &self.dims, &self.labels, side_a)
    }
}

/// Positions of the subset labels within `labels`, in original order.
pub(crate) fn positions_of(
    labels: &[String],
    subset: &[&str],
) -> Result<Vec<usize>, OperatorError> {
    let mut pos = Vec::with_capacity(subset.len());
    for l in subset {
        match labels.iter().position(|t| t == l) {
            Some(p) => pos.push(p),
            None => return Err(OperatorError::UnknownSubsystem(l.to_string())),
        }
    }
    pos.sort_unstable();
    pos.dedup();
    if pos.len() != subset.len() {
        return Err(OperatorError::BadLabels {
            labels: subset.len(),
            dims: pos.len(),
        });
    }
    Ok(pos)
}

/// Reshapes a state vector into the matrix with rows indexed by `row_labels`
/// (in original subsystem order) and columns by the remaining subsystems.
pub(crate) fn matricize(
    amps: &DVector<C64>,
    dims: &[usize],
    labels: &[String],
    row_labels: &[&str],
) -> Result<DMatrix<C64>, OperatorError> {
    let row_pos = positions_of(labels, row_labels)?;
    let col_pos: Vec<usize> = (0..dims.len()).filter(|p| !row_pos.contains(p)).collect();
    let row_off = axis_offsets(dims, &row_pos);
    let col_off = axis_offsets(dims, &col_pos);
    let mut m = DMatrix::<C64>::zeros(row_off.len(), col_off.len());
    for (i, &oi) in row_off.iter().enumerate() {
        for (j, &oj) in col_off.iter().enumerate() {
            m[(i, j)] = amps[oi + oj];
        }
    }
    Ok(m)
}

/// Inverse of [`matricize`] for the same bipartition.
pub(crate) fn unmatricize(
    m: &DMatrix<C64>,
    dims: &[usize],
    labels: &[String],
    row_labels: &[&str],
) -> Result<DVector<C64>, OperatorError> {
    let row_pos = positions_of(labels, row_labels)?;
    let col_pos: Vec<usize> = (0..dims.len()).filter(|p| !row_pos.contains(p)).collect();
    let row_off = axis_offsets(dims, &row_pos);
    let col_off = axis_offsets(dims, &col_pos);
    let d: usize = dims.iter().product();
    let mut amps = DVector::<C64>::zeros(d);
    for (i, &oi) in row_off.iter().enumerate() {
        for (j, &oj) in col_off.iter().enumerate() {
            amps[oi + oj] = m[(i, j)];
        }
    }
    Ok(amps)
}

/// Applies a matrix acting on the `subset` subsystems to a raw state vector.
pub(crate) fn apply_on_subset(
    amps: &DVector<C64>,
    dims: &[usize],
    labels: &[String],
    subset: &[&str],
    op: &DMatrix<C64>,
) -> Result<DVector<C64>, OperatorError> {
    let m = matricize(amps, dims, labels, subset)?;
    let out = op * m;
    unmatricize(&out, dims, labels, subset)
}

/// Schmidt data across a bipartition: `coefficients` descending nonnegative,
/// `vectors_a`/`vectors_b` orthonormal columns pairing with them.
pub struct Schmidt {
    pub coefficients: Vec<f64>,
    pub vectors_a: DMatrix<C64>,
    pub vectors_b: DMatrix<C64>,
}

/// Schmidt decomposition through the Gram matrix of the smaller side, reusing
/// the deterministic Hermitian eigensolver. Columns for (numerically) zero
/// coefficients are completed to an orthonormal set.
pub(crate) fn schmidt_of_vector(
    amps: &DVector<C64>,
    dims: &[usize],
    labels: &[String],
    side_a: &[&str],
) -> Result<Schmidt, OperatorError> {
    let m = matricize(amps, dims, labels, side_a)?;
    let (da, db) = (m.nrows(), m.ncols());
    let a_small = da <= db;
    let gram = if a_small {
        &m * m.adjoint()
    } else {
        m.adjoint() * &m
    };
    let gdims = vec![gram.nrows()];
    let glabels = vec!["g".to_string()];
    let eig = HermitianOperator::from_computed(gram, gdims, glabels).eig();
    let k = eig.values.len();
    let lam_max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = (RANK_TOL * lam_max).max(f64::MIN_POSITIVE);
    let coefficients: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let small_vecs = eig.vectors;
    // Writing the vector as sum_k s_k a_k ⊗ b_k means M = sum_k s_k a_k b_k^T
    // (transpose, no conjugation). With left/right singular pairs (u_k, v_k)
    // this reads a_k = u_k and b_k = conj(v_k).
    let other_dim = if a_small { db } else { da };
    let mut other = DMatrix::<C64>::zeros(other_dim, k);
    for j in 0..k {
        if eig.values[j] > cutoff {
            let s = coefficients[j];
            let u = small_vecs.column(j);
            let w = if a_small {
                // small side holds u_k; partner b_k = conj(M† u_k)/s_k
                (m.adjoint() * u).map(|z| z.conj())
            } else {
                // small side holds v_k; partner a_k = M v_k / s_k
                &m * u
            };
            other.set_column(j, &(w / Complex::new(s, 0.0)));
        }
    }
    complete_orthonormal(&mut other, eig.values.iter().map(|&v| v > cutoff).collect());
    let (vectors_a, vectors_b) = if a_small {
        (small_vecs, other)
    } else {
        // returned b-vectors are the Schmidt partners conj(v_k)
        (other, small_vecs.map(|z| z.conj()))
    };
    Ok(Schmidt {
        coefficients,
        vectors_a,
        vectors_b,
    })
}

/// Fills the columns flagged `false` with vectors completing the flagged
/// `true` columns to an orthonormal system, by Gram-Schmidt over the
/// standard basis in order.
fn complete_orthonormal(m: &mut DMatrix<C64>, have: Vec<bool>) {
    let n = m.nrows();
    let k = m.ncols();
    let basis: Vec<DVector<C64>> = (0..k)
        .filter(|&j| have[j])
        .map(|j| m.column(j).into_owned())
        .collect();
    let mut fill = Vec::new();
    let mut e = 0usize;
    while basis.len() + fill.len() < k && e < n {
        let mut v = DVector::<C64>::zeros(n);
        v[e] = Complex::new(1.0, 0.0);
        for b in basis.iter().chain(fill.iter()) {
            let ov = b.dotc(&v);
            v -= b * ov;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            fill.push(v / Complex::new(norm, 0.0));
        }
        e += 1;
    }
    let mut it = fill.into_iter();
    for j in 0..k {
        if !have[j] {
            if let Some(v) = it.next() {
                m.set_column(j, &v);
            }
        }
    }
}

/// JSON wire form for operators: `{dims, labels, re, im}` with `re`/`im`
/// row-major matrices.
#[derive(Serialize, Deserialize)]
pub struct OperatorJson {
    pub dims: Vec<usize>,
    pub labels: Vec<String>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&HermitianOperator> for OperatorJson {
    fn from(op: &HermitianOperator) -> Self {
        let d = op.dim();
        let re = (0..d)
            .map(|i| (0..d).map(|j| op.mat[(i, j)].re).collect())
            .collect();
        let im = (0..d)
            .map(|i| (0..d).map(|j| op.mat[(i, j)].im).collect())
            .collect();
        OperatorJson {
            dims: op.dims.clone(),
            labels: op.labels.clone(),
            re,
            im,
        }
    }
}

impl TryFrom<OperatorJson> for HermitianOperator {
    type Error = OperatorError;

    fn try_from(j: OperatorJson) -> Result<Self, OperatorError> {
        let d: usize = j.dims.iter().product();
        let mut mat = DMatrix::<C64>::zeros(d, d);
        for i in 0..d {
            for jj in 0..d {
                let re = j.re.get(i).and_then(|r| r.get(jj)).copied().unwrap_or(0.0);
                let im = j.im.get(i).and_then(|r| r.get(jj)).copied().unwrap_or(0.0);
                mat[(i, jj)] = Complex::new(re, im);
            }
        }
        HermitianOperator::new(mat, &j.dims, &j.labels)
    }
}

impl Serialize for HermitianOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        OperatorJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = OperatorJson::deserialize(d)?;
        HermitianOperator::try_from(j).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_projector, random_pure, test_rng};

    fn c(re: f64, im: f64) -> C64 {
        Complex::new(re, im)
    }

    fn diag(entries: &[f64], label: &str) -> HermitianOperator {
        let d = entries.len();
        let mut m = DMatrix::<C64>::zeros(d, d);
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = c(v, 0.0);
        }
        HermitianOperator::new(m, &[d], &[label]).unwrap()
    }

    #[test]
    fn tensor_identity_case() {
        let id2 = HermitianOperator::identity(&[2], &["A"]);
        let id2b = HermitianOperator::identity(&[2], &["B"]);
        let t = id2.tensor(&id2b).unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        let id4 = DMatrix::<C64>::identity(4, 4);
        assert!(max_abs(&(t.matrix() - id4)) == 0.0);
    }

    #[test]
    fn tensor_basis_projectors() {
        let a = diag(&[1.0, 0.0], "A");
        let b = diag(&[0.0, 1.0], "B");
        let t = a.tensor(&b).unwrap();
        let expect = [0.0, 1.0, 0.0, 0.0];
        for (i, &v) in expect.iter().enumerate() {
            assert!((t.matrix()[(i, i)].re - v).abs() < 1e-15);
        }
    }

    #[test]
    fn tensor_flip_on_both_qubits() {
        let sx = HermitianOperator::new(
            DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            &[2],
            &["A"],
        )
        .unwrap();
        let sx_b = HermitianOperator::new(sx.matrix().clone(), &[2], &["B"]).unwrap();
        let xx = sx.tensor(&sx_b).unwrap();
        let mut v00 = DVector::<C64>::zeros(4);
        v00[0] = c(1., 0.);
        let out = xx.matrix() * v00;
        assert!((out[3].re - 1.0).abs() < 1e-15);
        assert!(out[0].norm() + out[1].norm() + out[2].norm() < 1e-15);
    }

    #[test]
    fn partial_trace_bell_state() {
        let inv = 1.0 / 2f64.sqrt();
        let mut amps = DVector::<C64>::zeros(4);
        amps[0] = c(inv, 0.0);
        amps[3] = c(inv, 0.0);
        let bell = PureState::new(amps, &[2, 2], &["A", "B"]).unwrap();
        let rho_a = bell.density().partial_trace(&["A"]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((rho_a.matrix()[(i, j)] - c(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn partial_trace_product_state() {
        let mut rng = test_rng(11);
        let a = random_density(&mut rng, &[3], &["A"]);
        let b = random_density(&mut rng, &[2], &["B"]).scaled(0.7);
        let ab = a.tensor(&b).unwrap();
        let back = ab.partial_trace(&["A"]).unwrap();
        let expect = a.scaled(b.trace());
        assert!(max_abs(&(back.matrix() - expect.matrix())) < 1e-10);
    }

    #[test]
    fn partial_trace_preserves_trace() {
        let mut rng = test_rng(12);
        let rho = random_density(&mut rng, &[2, 2, 2], &["A", "B", "C"]);
        let reduced = rho.partial_trace(&["A"]).unwrap();
        assert!((reduced.trace() - rho.trace()).abs() < 1e-12);
        assert!(rho.partial_trace(&["Z"]).is_err());
    }

    #[test]
    fn eig_pauli_z_spectrum() {
        let sz = diag(&[1.0, -1.0], "A");
        let e = sz.eig();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] + 1.0).abs() < 1e-14);
        let id3 = HermitianOperator::identity(&[3], &["A"]);
        let e3 = id3.eig();
        assert!(e3.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    /// Independent oracle: eigenvalues of a 4x4 Hermitian matrix via roots of
    /// the characteristic polynomial, found on the companion matrix by
    /// bisection on sign changes of det(M - x I).
    #[test]
    fn eig_matches_characteristic_polynomial_roots() {
        let mut rng = test_rng(13);
        let rho = random_density(&mut rng, &[4], &["A"]);
        let e = rho.eig();
        let det = |x: f64| {
            let d = rho.matrix().clone() - DMatrix::<C64>::identity(4, 4) * c(x, 0.0);
            d.determinant().re
        };
        // scan for sign changes over a safe interval
        let mut roots = Vec::new();
        let (lo, hi) = (-2.0f64, 2.0f64);
        let steps = 400_000;
        let mut prev = det(lo);
        for i in 1..=steps {
            let x = lo + (hi - lo) * i as f64 / steps as f64;
            let cur = det(x);
            if prev == 0.0 {
                roots.push(lo + (hi - lo) * (i - 1) as f64 / steps as f64);
            } else if prev.signum() != cur.signum() {
                let (mut a, mut b) = (x - (hi - lo) / steps as f64, x);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if det(a).signum() == det(mid).signum() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = cur;
        }
        assert_eq!(roots.len(), 4, "expected four simple roots");
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in e.values.iter().zip(roots.iter()) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        // reconstruction bound
        let rec = e.recompose(&e.values);
        let scale = e.values.iter().map(|v| v.abs()).fold(1.0, f64::max);
        assert!(max_abs(&(rec - rho.matrix().clone())) <= 1e-10 * scale);
    }

    #[test]
    fn psd_transform_examples() {
        let g = diag(&[2.0, 0.0], "A");
        let inv = g.psd_transform(PsdFn::GenInverse, RANK_TOL).unwrap();
        assert!((inv.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!(inv.matrix()[(1, 1)].norm() < 1e-14);

        let s = diag(&[4.0, 9.0], "A");
        let sq = s.psd_transform(PsdFn::Sqrt, RANK_TOL).unwrap();
        assert!((sq.matrix()[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((sq.matrix()[(1, 1)].re - 3.0).abs() < 1e-14);

        let neg = diag(&[1.0, -0.5], "A");
        assert!(neg.psd_transform(PsdFn::Sqrt, RANK_TOL).is_err());
    }

    #[test]
    fn inv_sqrt_composed_with_sqrt_recovers_gen_inverse() {
        let mut rng = test_rng(14);
        let rho = random_density(&mut rng, &[4], &["A"]);
        let isq = rho.psd_transform(PsdFn::InvSqrt, RANK_TOL).unwrap();
        let composed = HermitianOperator::from_computed(
            isq.matrix() * isq.matrix(),
            vec![4],
            vec!["A".to_string()],
        );
        let gen = rho.psd_transform(PsdFn::GenInverse, RANK_TOL).unwrap();
        assert!(max_abs(&(composed.matrix() - gen.matrix())) < 1e-8 * gen.max_abs_entry());
    }

    #[test]
    fn trace_distance_examples() {
        let mut rng = test_rng(15);
        let rho = random_density(&mut rng, &[3], &["A"]);
        assert!(rho.trace_distance(&rho).unwrap() < 1e-14);

        let p0 = diag(&[1.0, 0.0], "A");
        let p1 = diag(&[0.0, 1.0], "A");
        assert!((p0.trace_distance(&p1).unwrap() - 1.0).abs() < 1e-14);

        // |0><0| vs |+><+| : distance sin(pi/4)
        let plus = HermitianOperator::new(
            DMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0.5, 0.), c(0.5, 0.), c(0.5, 0.)]),
            &[2],
            &["A"],
        )
        .unwrap();
        let d = p0.trace_distance(&plus).unwrap();
        assert!((d - (std::f64::consts::FRAC_PI_4).sin()).abs() < 1e-12);

        let other = diag(&[1.0, 0.0, 0.0], "A");
        assert!(p0.trace_distance(&other).is_err());
    }

    #[test]
    fn purify_round_trips() {
        let max_mixed = diag(&[0.5, 0.5], "A");
        let psi = max_mixed.purify("R").unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let back = psi.reduced_density(&["A"]).unwrap();
        assert!(max_abs(&(back.matrix() - max_mixed.matrix())) < 1e-10);

        // rank-1 input: reference dimension 1
        let pure = diag(&[1.0, 0.0], "A");
        let psi1 = pure.purify("R").unwrap();
        assert_eq!(psi1.dims(), &[2, 1]);

        let mut rng = test_rng(16);
        // random rank-3 state on d=4
        let mut rho = HermitianOperator::zeros(&[4], &["A"]);
        for _ in 0..3 {
            let v = random_pure(&mut rng, &[4], &["A"]);
            rho = rho.add(&v.density().scaled(1.0 / 3.0)).unwrap();
        }
        let rho = rho.scaled(1.0 / rho.trace());
        let psi3 = rho.purify("R").unwrap();
        assert_eq!(psi3.dims().last().copied().unwrap(), rho.rank(RANK_TOL));
        let back3 = psi3.reduced_density(&["A"]).unwrap();
        assert!(max_abs(&(back3.matrix() - rho.matrix())) < 1e-10);
    }

    #[test]
    fn schmidt_examples() {
        let inv = 1.0 / 2f64.sqrt();
        let mut amps = DVector::<C64>::zeros(4);
        amps[0] = c(inv, 0.0);
        amps[3] = c(inv, 0.0);
        let bell = PureState::new(amps, &[2, 2], &["A", "B"]).unwrap();
        let s = bell.schmidt_decompose(&["A"]).unwrap();
        assert!((s.coefficients[0] - inv).abs() < 1e-12);
        assert!((s.coefficients[1] - inv).abs() < 1e-12);

        // product state: single coefficient 1
        let mut amps = DVector::<C64>::zeros(4);
        amps[1] = c(1.0, 0.0); // |0>|1>
        let prod = PureState::new(amps, &[2, 2], &["A", "B"]).unwrap();
        let s = prod.schmidt_decompose(&["A"]).unwrap();
        assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
        assert!(s.coefficients[1].abs() < 1e-12);

        assert!(prod.schmidt_decompose(&[]).is_err());
        assert!(prod.schmidt_decompose(&["A", "B"]).is_err());
    }

    #[test]
    fn schmidt_coefficients_match_marginal_spectrum() {
        let mut rng = test_rng(17);
        let psi = random_pure(&mut rng, &[2, 3], &["A", "B"]);
        let s = psi.schmidt_decompose(&["A"]).unwrap();
        let marg = psi.reduced_density(&["A"]).unwrap();
        let eig = marg.eig();
        for (coef, lam) in s.coefficients.iter().zip(eig.values.iter()) {
            assert!((coef * coef - lam).abs() < 1e-9);
        }
        let total: f64 = s.coefficients.iter().map(|x| x * x).sum();
        assert!((total - psi.norm().powi(2)).abs() < 1e-10);
        // orthonormality both sides
        let ga = s.vectors_a.adjoint() * &s.vectors_a;
        let gb = s.vectors_b.adjoint() * &s.vectors_b;
        let id = DMatrix::<C64>::identity(2, 2);
        assert!(max_abs(&(ga - id.clone())) < 1e-10);
        assert!(max_abs(&(gb - id)) < 1e-10);
    }

    #[test]
    fn partial_trace_of_tensor_is_scaled_factor() {
        let mut rng = test_rng(18);
        for _ in 0..20 {
            let a = random_density(&mut rng, &[2, 2], &["A1", "A2"]).scaled(0.9);
            let b = random_density(&mut rng, &[3], &["B"]).scaled(0.8);
            let ab = a.tensor(&b).unwrap();
            let got = ab.partial_trace(&["A1", "A2"]).unwrap();
            let want = a.scaled(b.trace());
            assert!(max_abs(&(got.matrix() - want.matrix())) < 1e-10);
        }
    }

    #[test]
    fn gentle_measurement_bound() {
        let mut rng = test_rng(19);
        for _ in 0..40 {
            let rho = random_density(&mut rng, &[2, 2, 2], &["A", "B", "C"]).scaled(0.95);
            let q = random_projector(&mut rng, &[2], &["B"], 1);
            let qf = q
                .embed_into(rho.dims(), &["A".into(), "B".into(), "C".into()])
                .unwrap();
            let qrq = HermitianOperator::from_computed(
                qf.matrix() * rho.matrix() * qf.matrix(),
                rho.dims().to_vec(),
                vec!["A".into(), "B".into(), "C".into()],
            );
            let lhs = rho.trace_distance(&qrq).unwrap();
            let tr_q2 = (qf.matrix() * qf.matrix() * rho.matrix()).trace().re;
            let rhs = (rho.trace() - tr_q2).max(0.0).sqrt();
            assert!(lhs <= rhs + 1e-9, "gentle measurement violated: {lhs} > {rhs}");
        }
    }

    #[test]
    fn psd_spectra_are_nonnegative() {
        let mut rng = test_rng(20);
        for _ in 0..25 {
            let rho = random_density(&mut rng, &[2, 3], &["A", "B"]);
            assert!(rho.min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn embed_matches_kron_for_suffix_and_prefix() {
        let mut rng = test_rng(21);
        let op = random_density(&mut rng, &[2], &["B"]);
        let full_dims = [3usize, 2];
        let full_labels = ["A".to_string(), "B".to_string()];
        let emb = op.embed_into(&full_dims, &full_labels).unwrap();
        let expect = DMatrix::<C64>::identity(3, 3).kronecker(op.matrix());
        assert!(max_abs(&(emb.matrix() - expect)) < 1e-14);

        let emb2 = op
            .embed_into(&[2, 3], &["B".to_string(), "A".to_string()])
            .unwrap();
        let expect2 = op.matrix().kronecker(&DMatrix::<C64>::identity(3, 3));
        assert!(max_abs(&(emb2.matrix() - expect2)) < 1e-14);
    }

    #[test]
    fn operator_json_round_trip() {
        let mut rng = test_rng(22);
        let op = random_density(&mut rng, &[2, 2], &["A", "B"]);
        let text = serde_json::to_string(&op).unwrap();
        let back: HermitianOperator = serde_json::from_str(&text).unwrap();
        assert!(max_abs(&(back.matrix() - op.matrix())) < 1e-15);
        assert_eq!(back.labels(), op.labels());
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(matches!(
            HermitianOperator::new(m, &[2], &["A"]),
            Err(OperatorError::NotHermitian { .. })
        ));
        assert!(HermitianOperator::new(DMatrix::identity(4, 4), &[2], &["A"]).is_err());
        let too_big = vec![2usize; 9];
        let labels: Vec<String> = (0..9).map(|i| format!("S{i}")).collect();
        assert!(matches!(
            HermitianOperator::new(DMatrix::identity(512, 512), &too_big, &labels),
            Err(OperatorError::DimensionCap { .. })
        ));
        let v = DVector::from_element(2, c(1.0, 0.0));
        assert!(matches!(
            PureState::new(v, &[2], &["A"]),
            Err(OperatorError::NormExceeded(_))
        ));
    }
}
