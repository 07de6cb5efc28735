//! Conditional operators and min-entropy.
//!
//! The central objects are the conditional operator `rho/sigma =
//! sigma^{-1/2} rho sigma^{-1/2}`, the quantity `H(A|B)_{rho/sigma} =
//! -log2 lambda_max(rho/sigma)`, and the min-entropy `H_min(A|B)` obtained by
//! optimizing over the conditioning operator. The optimizer is a
//! self-contained semidefinite solver (bisection over the operator
//! inequality with an alternating-projection feasibility step) plus a
//! deterministic pattern-search polish; every result is returned as a
//! certificate whose operator inequality can be re-verified independently.
//!
//! All entropies are in bits. A zero state has entropy `+inf`, which compares
//! greater than any finite value and absorbs addition, matching the usual
//! convention for vanished branches.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operator::{C64, HermitianOperator, OperatorError, PsdFn};
use crate::RANK_TOL;

/// Relative tolerance for the support precondition `supp(rho_B) ⊆ supp(sigma_B)`.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(
        "support violation: sigma null eigenvector #{index} carries weight {overlap:.3e} of rho_B"
    )]
    SupportViolation { index: usize, overlap: f64 },
    #[error("state has trace {0} > 1; only subnormalized states are allowed")]
    NotSubnormalized(f64),
    #[error("smoothing parameter must lie in (0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("bracket oracle requires dim(B) <= 2, got {0}")]
    OracleDimension(usize),
    #[error("inconsistent branch dimensions: {0:?} vs {1:?}")]
    InconsistentBranches(Vec<usize>, Vec<usize>),
    #[error("probabilities must be nonnegative and sum to at most 1 (sum = {0})")]
    BadDistribution(f64),
    #[error("classical-quantum state needs {expected} conditional operators, got {got}")]
    AlphabetMismatch { expected: usize, got: usize },
    #[error("solver failed to produce a feasible conditioning operator")]
    SolverFailed,
}

/// Classical-quantum state: a distribution over a finite alphabet with one
/// conditional operator on E per symbol. The classical register may carry a
/// block structure `x_dims` so that it represents an n-tuple (X_1,...,X_n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CQState {
    x_dims: Vec<usize>,
    alphabet: Vec<String>,
    probs: Vec<f64>,
    cond_ops: Vec<HermitianOperator>,
}

impl CQState {
    pub fn new(
        alphabet: Vec<String>,
        probs: Vec<f64>,
        cond_ops: Vec<HermitianOperator>,
    ) -> Result<Self, EntropyError> {
        let n = alphabet.len();
        Self::with_block_structure(vec![n], alphabet, probs, cond_ops)
    }

    pub fn with_block_structure(
        x_dims: Vec<usize>,
        alphabet: Vec<String>,
        probs: Vec<f64>,
        cond_ops: Vec<HermitianOperator>,
    ) -> Result<Self, EntropyError> {
        let count: usize = x_dims.iter().product();
        if alphabet.len() != count || probs.len() != count || cond_ops.len() != count {
            return Err(EntropyError::AlphabetMismatch {
                expected: count,
                got: cond_ops.len(),
            });
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(EntropyError::BadDistribution(f64::NAN));
        }
        let total: f64 = probs
            .iter()
            .zip(cond_ops.iter())
            .map(|(p, op)| p * op.trace())
            .sum();
        if total > 1.0 + 1e-12 {
            return Err(EntropyError::BadDistribution(total));
        }
        for w in cond_ops.windows(2) {
            if w[0].dims() != w[1].dims() {
                return Err(EntropyError::InconsistentBranches(
                    w[0].dims().to_vec(),
                    w[1].dims().to_vec(),
                ));
            }
        }
        Ok(Self {
            x_dims,
            alphabet,
            probs,
            cond_ops,
        })
    }

    pub fn x_dims(&self) -> &[usize] {
        &self.x_dims
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cond_ops(&self) -> &[HermitianOperator] {
        &self.cond_ops
    }

    pub fn e_dims(&self) -> &[usize] {
        self.cond_ops[0].dims()
    }

    /// Block-diagonal operator form on X_1..X_n ⊗ E. Classical registers are
    /// labeled `X1..Xn` (or `X` when there is a single block).
    pub fn materialize(&self) -> Result<HermitianOperator, EntropyError> {
        let e_op = &self.cond_ops[0];
        let e_dim: usize = e_op.dims().iter().product();
        let x_total: usize = self.x_dims.iter().product();
        let d = x_total * e_dim;
        let mut mat = DMatrix::<C64>::zeros(d, d);
        for (x, (p, op)) in self.probs.iter().zip(self.cond_ops.iter()).enumerate() {
            if *p == 0.0 {
                continue;
            }
            for i in 0..e_dim {
                for j in 0..e_dim {
                    mat[(x * e_dim + i, x * e_dim + j)] =
                        op.matrix()[(i, j)] * Complex::new(*p, 0.0);
                }
            }
        }
        let mut dims = self.x_dims.clone();
        dims.extend_from_slice(e_op.dims());
        let mut labels: Vec<String> = if self.x_dims.len() == 1 {
            vec!["X".to_string()]
        } else {
            (1..=self.x_dims.len()).map(|i| format!("X{i}")).collect()
        };
        labels.extend(e_op.labels().iter().map(|s| s.to_string()));
        Ok(HermitianOperator::new(mat, &dims, &labels)?)
    }
}

/// A sound lower-bound witness for (smooth) min-entropy.
///
/// With `smoothing == 0` the inequality `rho ⪯ 2^{-value} id ⊗ sigma` holds
/// for the state itself; with `smoothing > 0` it holds for `witness_state`,
/// which sits within trace distance `smoothing` of the state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyCertificate {
    pub value: f64,
    pub sigma: HermitianOperator,
    pub smoothing: f64,
    pub witness_state: Option<HermitianOperator>,
}

/// Slack values from re-verifying a certificate against a state.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateCheck {
    /// Minimum eigenvalue of `2^{-value} id ⊗ sigma - state`; sound when
    /// this is above `-tol`.
    pub operator_slack: f64,
    /// `smoothing - trace_distance(witness, rho)`; nonnegative when the
    /// witness is inside the smoothing ball. Zero for unsmoothed certificates.
    pub distance_slack: f64,
}

impl EntropyCertificate {
    pub fn exact(value: f64, sigma: HermitianOperator) -> Self {
        Self {
            value,
            sigma,
            smoothing: 0.0,
            witness_state: None,
        }
    }

    /// Re-verifies the certificate against `rho` (given on the full A⊗B
    /// space the certificate talks about).
    pub fn verify(&self, rho: &HermitianOperator) -> Result<CertificateCheck, EntropyError> {
        let state = self.witness_state.as_ref().unwrap_or(rho);
        let operator_slack = if self.value.is_infinite() {
            -state.max_abs_entry()
        } else {
            let labels: Vec<String> = rho.labels().iter().map(|s| s.to_string()).collect();
            let sig_full = self.sigma.embed_into(rho.dims(), &labels)?;
            let bound = sig_full.scaled(2f64.powf(-self.value));
            bound.sub(state)?.min_eigenvalue()
        };
        let distance_slack = match &self.witness_state {
            Some(w) => self.smoothing - w.trace_distance(rho)?,
            None => 0.0,
        };
        Ok(CertificateCheck {
            operator_slack,
            distance_slack,
        })
    }
}

fn support_checked_inv_sqrt(
    sigma_b: &HermitianOperator,
    rho_b: &HermitianOperator,
) -> Result<HermitianOperator, EntropyError> {
    let eig = sigma_b.eig();
    let scale = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let cutoff = RANK_TOL * scale;
    let rho_scale = rho_b.trace().max(rho_b.max_abs_entry()).max(1e-300);
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam > cutoff {
            continue;
        }
        let v = eig.vectors.column(k);
        let overlap = (v.adjoint() * rho_b.matrix() * v)[(0, 0)].re;
        if overlap > SUPPORT_TOL * rho_scale {
            return Err(EntropyError::SupportViolation {
                index: k,
                overlap,
            });
        }
    }
    Ok(sigma_b.psd_transform(PsdFn::InvSqrt, RANK_TOL)?)
}

/// The conditional operator `rho_AB / sigma_B = sigma_B^{-1/2} rho_AB
/// sigma_B^{-1/2}` with generalized inverse square root. `sigma_b`'s
/// subsystems are matched inside `rho_ab` by label.
pub fn conditional_operator(
    rho_ab: &HermitianOperator,
    sigma_b: &HermitianOperator,
) -> Result<HermitianOperator, EntropyError> {
    let b_labels: Vec<&str> = sigma_b.labels();
    let rho_b = rho_ab.partial_trace(&b_labels)?;
    let inv_sqrt = support_checked_inv_sqrt(sigma_b, &rho_b)?;
    let labels: Vec<String> = rho_ab.labels().iter().map(|s| s.to_string()).collect();
    let s = inv_sqrt.embed_into(rho_ab.dims(), &labels)?;
    let mat = s.matrix() * rho_ab.matrix() * s.matrix();
    Ok(HermitianOperator::from_computed(
        mat,
        rho_ab.dims().to_vec(),
        labels,
    ))
}

/// `H(A|B)_{rho/sigma} = -log2 lambda_max(rho_AB/sigma_B)` in bits.
/// A vanished state returns `+inf`.
pub fn h_cond(
    rho_ab: &HermitianOperator,
    sigma_b: &HermitianOperator,
) -> Result<f64, EntropyError> {
    if rho_ab.max_abs_entry() <= 1e-300 {
        return Ok(f64::INFINITY);
    }
    let cond = conditional_operator(rho_ab, sigma_b)?;
    let lam = cond.max_eigenvalue();
    if lam <= 1e-300 {
        return Ok(f64::INFINITY);
    }
    Ok(-lam.log2())
}

fn complement_labels<'a>(all: &'a [&'a str], b: &[&str]) -> Vec<&'a str> {
    all.iter().copied().filter(|l| !b.contains(l)).collect()
}

/// Top-up an operator to trace one without leaving the PSD cone.
fn normalize_to_state(op: &HermitianOperator) -> HermitianOperator {
    let eig = op.eig();
    let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let mut mat = eig.recompose(&clipped);
    let tr: f64 = mat.diagonal().iter().map(|z| z.re).sum();
    let d = mat.nrows() as f64;
    // mix in a sliver of identity: keeps full support so h_cond is defined
    let floor = 1e-13;
    let scale = (1.0 - floor) / tr.max(1e-300);
    mat *= Complex::new(scale, 0.0);
    for i in 0..mat.nrows() {
        mat[(i, i)] += Complex::new(floor / d, 0.0);
    }
    HermitianOperator::from_computed(
        mat,
        op.dims().to_vec(),
        op.labels().iter().map(|s| s.to_string()).collect(),
    )
}

/// Hermitian coordinate basis direction `k` for a `d`-dimensional space.
fn hermitian_basis_direction(d: usize, k: usize) -> DMatrix<C64> {
    let mut m = DMatrix::<C64>::zeros(d, d);
    let mut idx = 0usize;
    for i in 0..d {
        for j in i..d {
            if i == j {
                if idx == k {
                    m[(i, i)] = Complex::new(1.0, 0.0);
                    return m;
                }
                idx += 1;
            } else {
                if idx == k {
                    m[(i, j)] = Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                    m[(j, i)] = Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                    return m;
                }
                idx += 1;
                if idx == k {
                    m[(i, j)] = Complex::new(0.0, -std::f64::consts::FRAC_1_SQRT_2);
                    m[(j, i)] = Complex::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
                    return m;
                }
                idx += 1;
            }
        }
    }
    m
}

/// Orthonormal Hermitian coordinates of an operator.
fn hermitian_coords(m: &DMatrix<C64>) -> Vec<f64> {
    let d = m.nrows();
    (0..d * d)
        .map(|k| {
            let b = hermitian_basis_direction(d, k);
            (0..d)
                .map(|i| (0..d).map(|j| (b[(j, i)].conj() * m[(j, i)]).re).sum::<f64>())
                .sum()
        })
        .collect()
}

fn from_hermitian_coords(x: &[f64], d: usize) -> DMatrix<C64> {
    let mut m = DMatrix::<C64>::zeros(d, d);
    for (k, &v) in x.iter().enumerate() {
        if v != 0.0 {
            m += hermitian_basis_direction(d, k) * Complex::new(v, 0.0);
        }
    }
    m
}

/// Minimizes a convex function by the ellipsoid method, tracking the best
/// point the feasibility probe accepts. Deterministic and derivative-free
/// apart from the supplied subgradients.
fn ellipsoid_minimize(
    x0: &[f64],
    radius: f64,
    iters: usize,
    mut eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    mut feasible_objective: impl FnMut(&[f64]) -> Option<f64>,
) -> Vec<f64> {
    let n = x0.len();
    let nf = n as f64;
    let mut x = x0.to_vec();
    let mut p = DMatrix::<f64>::identity(n, n) * (radius * radius);
    let mut best_x = x0.to_vec();
    let mut best_obj = feasible_objective(x0).unwrap_or(f64::INFINITY);
    for _ in 0..iters {
        if let Some(obj) = feasible_objective(&x) {
            if obj < best_obj {
                best_obj = obj;
                best_x = x.clone();
            }
        }
        let (_, g) = eval(&x);
        let gv = DVector::from_column_slice(&g);
        let pg = &p * &gv;
        let denom = gv.dot(&pg).max(1e-300).sqrt();
        let step = &pg / denom;
        for i in 0..n {
            x[i] -= step[i] / (nf + 1.0);
        }
        let outer = &step * step.transpose();
        p = (&p - outer * (2.0 / (nf + 1.0))) * (nf * nf / (nf * nf - 1.0).max(1.0));
        // keep the shape matrix symmetric against drift
        p = (&p + p.transpose()) * 0.5;
    }
    best_x
}

/// Second solver stage: the convex program `min tr sigma` subject to
/// `id_A ⊗ sigma ⪰ rho` in exact-penalty form, started from a feasible
/// point. The bisection stage cannot certify feasibility arbitrarily close
/// to the optimum (the projection sets become tangent), so this stage
/// carries the value to solver accuracy.
fn hmin_ellipsoid_stage(
    rho: &HermitianOperator,
    sigma_feasible: &HermitianOperator,
) -> HermitianOperator {
    let d_b = sigma_feasible.dim();
    let n = d_b * d_b;
    let full_labels: Vec<String> = rho.labels().iter().map(|s| s.to_string()).collect();
    let b_dims = sigma_feasible.dims().to_vec();
    let b_label_owned: Vec<String> = sigma_feasible
        .labels()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let scale = rho.max_abs_entry().max(1e-300);
    let feas_tol = 1e-11 * scale;
    let penalty = 8.0 * (rho.dim() as f64);

    let d_full = rho.dim();
    let d_a = d_full / d_b;
    let gap_of = |sig: &HermitianOperator| -> (f64, DVector<C64>) {
        let full = sig
            .embed_into(rho.dims(), &full_labels)
            .expect("sigma lives on B");
        let gap_op = full.sub(rho).expect("same space");
        let eig = gap_op.eig();
        let idx = eig.values.len() - 1;
        (eig.values[idx], eig.vectors.column(idx).into_owned())
    };

    let x0 = hermitian_coords(sigma_feasible.matrix());
    let radius = 2.0 * sigma_feasible.trace().abs().max(1.0) * (n as f64).sqrt();
    let iters = (2 * n * (n + 1) * 30).min(30_000);
    let best = ellipsoid_minimize(
        &x0,
        radius,
        iters,
        |x| {
            let sig = HermitianOperator::from_computed(
                from_hermitian_coords(x, d_b),
                b_dims.clone(),
                b_label_owned.clone(),
            );
            let (lam_min, v) = gap_of(&sig);
            let mut value = sig.trace();
            let mut grad: Vec<f64> = (0..n)
                .map(|k| hermitian_basis_direction(d_b, k).diagonal().iter().map(|z| z.re).sum())
                .collect();
            if lam_min < 0.0 {
                value += penalty * (-lam_min);
                // d lambda_min / d x_k = <v| id ⊗ B_k |v> = <B_k, tr_A vv^dagger>
                let mut w = DMatrix::<C64>::zeros(d_b, d_b);
                for a in 0..d_a {
                    for i in 0..d_b {
                        for j in 0..d_b {
                            w[(i, j)] += v[a * d_b + i] * v[a * d_b + j].conj();
                        }
                    }
                }
                let w_coords = hermitian_coords(&w);
                for (gk, wk) in grad.iter_mut().zip(w_coords.iter()) {
                    *gk -= penalty * wk;
                }
            }
            (value, grad)
        },
        |x| {
            let sig = HermitianOperator::from_computed(
                from_hermitian_coords(x, d_b),
                b_dims.clone(),
                b_label_owned.clone(),
            );
            let (lam_min, _) = gap_of(&sig);
            (lam_min >= -feas_tol).then(|| sig.trace())
        },
    );
    HermitianOperator::from_computed(
        from_hermitian_coords(&best, d_b),
        b_dims,
        b_label_owned,
    )
}

struct SdpOutcome {
    sigma: HermitianOperator,
    value: f64,
}

/// Solves `min tr(sigma)` s.t. `id_A ⊗ sigma ⪰ rho` by bisection over
/// `lambda` in `rho ⪯ lambda id ⊗ sigma` (with `tr sigma = 1`), using
/// alternating projections between the affine set `{lambda id ⊗ sigma}`
/// and the cone `{Y ⪰ rho}` as the feasibility step.
fn hmin_sdp(
    rho: &HermitianOperator,
    b_labels: &[&str],
) -> Result<SdpOutcome, EntropyError> {
    let all = rho.labels();
    let a_labels = complement_labels(&all, b_labels);
    let d_a = rho.dim_of(&a_labels)?;
    let d_b = rho.dim_of(b_labels)?;
    let rho_b = rho.partial_trace(b_labels)?;
    let full_labels: Vec<String> = all.iter().map(|s| s.to_string()).collect();

    // feasible starting upper bounds
    let uniform = HermitianOperator::identity(rho_b.dims(), &rho_b.labels()).scaled(1.0 / d_b as f64);
    let rho_b_state = normalize_to_state(&rho_b);
    let mut best_sigma = uniform.clone();
    let mut hi = f64::INFINITY;
    for cand in [&uniform, &rho_b_state] {
        if let Ok(h) = h_cond(rho, cand) {
            let lam = 2f64.powf(-h);
            if lam < hi {
                hi = lam;
                best_sigma = (*cand).clone();
            }
        }
    }
    if !hi.is_finite() {
        // vanished state
        return Ok(SdpOutcome {
            sigma: uniform,
            value: f64::INFINITY,
        });
    }
    let mut lo = (rho.trace() / d_a as f64).max(0.0);

    let embed_sigma = |sigma: &HermitianOperator| -> HermitianOperator {
        sigma
            .embed_into(rho.dims(), &full_labels)
            .expect("sigma lives on B")
    };

    let mut sigma_warm = best_sigma.clone();
    let scale = rho.max_abs_entry().max(1e-300);
    let feas_tol = 1e-11 * scale;
    let max_pocs = 300usize;

    let feasible = |lam: f64, warm: &HermitianOperator| -> Option<HermitianOperator> {
        let mut sigma = warm.clone();
        for _ in 0..max_pocs {
            // affine point for current sigma
            let y_aff = embed_sigma(&sigma).scaled(lam);
            let gap_op = y_aff.sub(rho).expect("same space");
            let eig = gap_op.eig();
            let gap = eig.values.last().copied().unwrap_or(f64::NEG_INFINITY);
            if gap >= -feas_tol {
                return Some(sigma);
            }
            // project onto {Y ⪰ rho}: rho + PSD part of (Y - rho)
            let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
            let y_cone = HermitianOperator::from_computed(
                rho.matrix() + eig.recompose(&clipped),
                rho.dims().to_vec(),
                full_labels.clone(),
            );
            // project back onto the affine set: sigma = tr_A(Y)/(lam d_A), trace fixed to 1
            let tr_a = y_cone
                .partial_trace(b_labels)
                .expect("B subsystems exist")
                .scaled(1.0 / (lam * d_a as f64));
            let correction = (1.0 - tr_a.trace()) / d_b as f64;
            let idb = HermitianOperator::identity(tr_a.dims(), &tr_a.labels());
            sigma = tr_a.add(&idb.scaled(correction)).expect("same space");
        }
        None
    };

    for _ in 0..40 {
        if hi - lo <= 1e-4 * hi.max(1e-300) {
            break;
        }
        let mid = 0.5 * (hi + lo);
        match feasible(mid, &sigma_warm) {
            Some(sig) => {
                hi = mid;
                sigma_warm = sig.clone();
                best_sigma = sig;
            }
            None => {
                lo = mid;
            }
        }
    }

    // hand over to the ellipsoid stage from a certainly-feasible point:
    // rho ⪯ 2^{-h} id ⊗ sigma holds for h = h_cond(rho, sigma)
    let warm_state = normalize_to_state(&best_sigma);
    let h_warm = h_cond(rho, &warm_state)?;
    if !h_warm.is_finite() {
        return Err(EntropyError::SolverFailed);
    }
    let unnormalized = warm_state.scaled(2f64.powf(-h_warm) * (1.0 + 1e-12));
    let refined = hmin_ellipsoid_stage(rho, &unnormalized);
    let candidate = normalize_to_state(&refined);
    let (sigma, value) = match h_cond(rho, &candidate) {
        Ok(v) if v >= h_warm => (candidate, v),
        _ => (warm_state, h_warm),
    };
    Ok(SdpOutcome { sigma, value })
}

/// Constrained variant for subnormalized states: minimize `lambda` over
/// `rho ⪯ lambda id ⊗ (rho_B + tau)` with `tau ⪰ 0` and
/// `tr(rho_B + tau) = 1`, made jointly convex by `mu = lambda tau`.
fn hmin_constrained_ellipsoid(
    rho: &HermitianOperator,
    rho_b: &HermitianOperator,
) -> Result<HermitianOperator, EntropyError> {
    let d_b = rho_b.dim();
    let n = d_b * d_b;
    let b_dims = rho_b.dims().to_vec();
    let b_label_owned: Vec<String> = rho_b.labels().iter().map(|s| s.to_string()).collect();
    let full_labels: Vec<String> = rho.labels().iter().map(|s| s.to_string()).collect();
    let d_a = rho.dim() / d_b;
    let tr_b = rho_b.trace();
    let slack_trace = (1.0 - tr_b).max(0.0);
    let scale = rho.max_abs_entry().max(1e-300);
    let feas_tol = 1e-10 * scale.max(1.0);
    let penalty = 8.0 * rho.dim() as f64;

    // start: sigma0 = normalized rho_B, mu0 = lambda0 (sigma0 - rho_B)
    let sigma0 = normalize_to_state(rho_b);
    let h0 = h_cond(rho, &sigma0)?;
    if !h0.is_finite() {
        return Err(EntropyError::SolverFailed);
    }
    let lam0 = 2f64.powf(-h0) * (1.0 + 1e-12);
    let tau0 = sigma0.sub(rho_b)?;
    let mut x0 = vec![lam0];
    x0.extend(hermitian_coords(&(tau0.matrix() * Complex::new(lam0, 0.0))));

    let rho_b_full = rho_b
        .embed_into(rho.dims(), &full_labels)
        .expect("B subsystems exist");
    let eval_parts = |x: &[f64]| {
        let lam = x[0];
        let mu = from_hermitian_coords(&x[1..], d_b);
        let mu_op = HermitianOperator::from_computed(
            mu.clone(),
            b_dims.clone(),
            b_label_owned.clone(),
        );
        let mu_full = mu_op
            .embed_into(rho.dims(), &full_labels)
            .expect("B subsystems exist");
        let c = HermitianOperator::from_computed(
            rho_b_full.matrix() * Complex::new(lam, 0.0) + mu_full.matrix() - rho.matrix(),
            rho.dims().to_vec(),
            full_labels.clone(),
        );
        (lam, mu_op, c)
    };

    let best = ellipsoid_minimize(
        &x0,
        2.0 * (lam0.abs() + 1.0) * ((n + 1) as f64).sqrt(),
        (2 * (n + 1) * (n + 2) * 30).min(30_000),
        |x| {
            let (lam, mu_op, c) = eval_parts(x);
            let mut value = lam;
            let mut grad = vec![0.0; n + 1];
            grad[0] = 1.0;
            let c_eig = c.eig();
            let lam_min = *c_eig.values.last().unwrap();
            if lam_min < 0.0 {
                value += penalty * (-lam_min);
                let v = c_eig.vectors.column(c_eig.values.len() - 1);
                let mut w = DMatrix::<C64>::zeros(d_b, d_b);
                for a in 0..d_a {
                    for i in 0..d_b {
                        for j in 0..d_b {
                            w[(i, j)] += v[a * d_b + i] * v[a * d_b + j].conj();
                        }
                    }
                }
                let rb = rho_b.matrix();
                let d_lam: f64 = (0..d_b)
                    .map(|i| (0..d_b).map(|j| (w[(j, i)].conj() * rb[(j, i)]).re).sum::<f64>())
                    .sum();
                grad[0] -= penalty * d_lam;
                for (k, wk) in hermitian_coords(&w).iter().enumerate() {
                    grad[k + 1] -= penalty * wk;
                }
            }
            let mu_eig = mu_op.eig();
            let mu_min = *mu_eig.values.last().unwrap();
            if mu_min < 0.0 {
                value += penalty * (-mu_min);
                let u = mu_eig.vectors.column(mu_eig.values.len() - 1);
                let uu = &u * u.adjoint();
                for (k, wk) in hermitian_coords(&uu).iter().enumerate() {
                    grad[k + 1] -= penalty * wk;
                }
            }
            let trace_gap = mu_op.trace() - lam * slack_trace;
            if trace_gap.abs() > 0.0 {
                value += penalty * trace_gap.abs();
                let s = trace_gap.signum() * penalty;
                grad[0] -= s * slack_trace;
                for k in 0..n {
                    let b_tr: f64 = hermitian_basis_direction(d_b, k)
                        .diagonal()
                        .iter()
                        .map(|z| z.re)
                        .sum();
                    grad[k + 1] += s * b_tr;
                }
            }
            (value, grad)
        },
        |x| {
            let (lam, mu_op, c) = eval_parts(x);
            let ok = c.min_eigenvalue() >= -feas_tol
                && mu_op.min_eigenvalue() >= -feas_tol
                && (mu_op.trace() - lam * slack_trace).abs() <= feas_tol.max(1e-9);
            (ok && lam > 0.0).then_some(lam)
        },
    );
    // recover sigma = rho_B + mu / lambda, floor-clipped to the constraint
    let lam = best[0].max(1e-300);
    let mu = from_hermitian_coords(&best[1..], d_b);
    let tau = HermitianOperator::from_computed(
        mu / Complex::new(lam, 0.0),
        b_dims.clone(),
        b_label_owned.clone(),
    );
    let tau_eig = tau.eig();
    let clipped: Vec<f64> = tau_eig.values.iter().map(|&v| v.max(0.0)).collect();
    let sigma = HermitianOperator::from_computed(
        rho_b.matrix() + tau_eig.recompose(&clipped),
        b_dims,
        b_label_owned,
    );
    // keep whichever of (refined, start) certifies more
    let h_ref = h_cond(rho, &sigma).unwrap_or(f64::NEG_INFINITY);
    Ok(if h_ref >= h0 { sigma } else { sigma0 })
}

/// Min-entropy `H_min(A|B)` of `rho` with the B side given by `b_labels`.
///
/// `constrained` selects the variant optimized over `sigma ⪰ rho_B` with
/// `tr sigma = 1`. For a normalized state those constraints force
/// `sigma = rho_B`, so the constrained value short-circuits to
/// `h_cond(rho, rho_B)`.
pub fn hmin(
    rho: &HermitianOperator,
    b_labels: &[&str],
    constrained: bool,
) -> Result<EntropyCertificate, EntropyError> {
    let tr = rho.trace();
    if tr > 1.0 + 1e-12 {
        return Err(EntropyError::NotSubnormalized(tr));
    }
    let rho_b = rho.partial_trace(b_labels)?;
    if constrained {
        if tr >= 1.0 - 1e-9 {
            let value = h_cond(rho, &rho_b)?;
            return Ok(EntropyCertificate::exact(value, rho_b));
        }
        // subnormalized: optimize over sigma = rho_B + tau, tau ⪰ 0,
        // tr sigma = 1, through the linearizing substitution mu = lambda tau
        let sigma = hmin_constrained_ellipsoid(rho, &rho_b)?;
        let value = h_cond(rho, &sigma)?;
        return Ok(EntropyCertificate::exact(value, sigma));
    }
    let out = hmin_sdp(rho, b_labels)?;
    Ok(EntropyCertificate::exact(out.value, out.sigma))
}

/// Splits a state that is classical on `a_labels` into its diagonal blocks
/// `(p_x, rho^x_B)`. Returns `None` when off-diagonal blocks carry weight.
fn classical_blocks(
    rho: &HermitianOperator,
    b_labels: &[&str],
) -> Option<Vec<(f64, DMatrix<C64>)>> {
    let all = rho.labels();
    let a_labels = complement_labels(&all, b_labels);
    // classical structure is only detected for A in the leading position
    if a_labels.len() != 1 || all.first() != a_labels.first() {
        return None;
    }
    let d_a = rho.dim_of(&a_labels).ok()?;
    let d_b = rho.dim_of(b_labels).ok()?;
    let scale = rho.max_abs_entry().max(1e-300);
    let mut blocks = Vec::with_capacity(d_a);
    for x in 0..d_a {
        for y in 0..d_a {
            if x == y {
                continue;
            }
            for i in 0..d_b {
                for j in 0..d_b {
                    if rho.matrix()[(x * d_b + i, y * d_b + j)].norm() > 1e-10 * scale {
                        return None;
                    }
                }
            }
        }
        let mut block = DMatrix::<C64>::zeros(d_b, d_b);
        for i in 0..d_b {
            for j in 0..d_b {
                block[(i, j)] = rho.matrix()[(x * d_b + i, x * d_b + j)];
            }
        }
        let p: f64 = block.diagonal().iter().map(|z| z.re).sum();
        blocks.push((p, block));
    }
    Some(blocks)
}

/// Independent bracket oracle for `H_min(A|B)` with a qubit-sized B.
///
/// The lower bound is the best `h_cond` over a nested Bloch-ball grid with
/// `grid_density` points per refinement pass. The upper bound is
/// `-log2` of the best dual-feasible value found: measurement-based
/// candidates when the state is classical on A (the two-symbol case is the
/// exact Helstrom optimum), plus a generic rescaled top-eigenvector
/// candidate from the best grid point.
pub fn hmin_bracket_oracle(
    rho: &HermitianOperator,
    b_labels: &[&str],
    grid_density: usize,
) -> Result<(f64, f64), EntropyError> {
    let d_b = rho.dim_of(b_labels)?;
    if d_b > 2 {
        return Err(EntropyError::OracleDimension(d_b));
    }
    let rho_b = rho.partial_trace(b_labels)?;
    let b_dims = rho_b.dims().to_vec();
    let b_label_owned: Vec<String> = rho_b.labels().iter().map(|s| s.to_string()).collect();
    if d_b == 1 {
        // trivial B: sigma is the scalar 1, both bounds collapse
        let sigma = HermitianOperator::identity(&b_dims, &b_label_owned);
        let h = h_cond(rho, &sigma)?;
        return Ok((h, h));
    }

    let bloch_sigma = |v: [f64; 3]| -> HermitianOperator {
        let mat = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex::new(0.5 * (1.0 + v[2]), 0.0),
                Complex::new(0.5 * v[0], -0.5 * v[1]),
                Complex::new(0.5 * v[0], 0.5 * v[1]),
                Complex::new(0.5 * (1.0 - v[2]), 0.0),
            ],
        );
        HermitianOperator::from_computed(mat, b_dims.clone(), b_label_owned.clone())
    };

    // nested golden-spiral grid over the Bloch ball; each pass halves the
    // radius around the best point so far, which stays safely inside the
    // previous pass's resolution
    let mut center = [0.0f64; 3];
    let mut radius = 0.999f64;
    let mut lower = f64::NEG_INFINITY;
    let mut best_sigma = bloch_sigma(center);
    let passes = 12;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for _ in 0..passes {
        let mut best_point = center;
        for k in 0..grid_density.max(1) {
            let t = (k as f64 + 0.5) / grid_density.max(1) as f64;
            let r = radius * t.cbrt();
            let cos_theta = 1.0 - 2.0 * t;
            let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
            let phi = golden * k as f64;
            let mut p = [
                center[0] + r * sin_theta * phi.cos(),
                center[1] + r * sin_theta * phi.sin(),
                center[2] + r * cos_theta,
            ];
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if norm >= 0.999 {
                for c in p.iter_mut() {
                    *c *= 0.999 / norm;
                }
            }
            let sigma = bloch_sigma(p);
            if let Ok(h) = h_cond(rho, &sigma) {
                if h > lower {
                    lower = h;
                    best_point = p;
                    best_sigma = sigma;
                }
            }
        }
        center = best_point;
        radius *= 0.5;
    }

    // dual-feasible candidates: value = tr(rho X) with tr_A X ⪯ id_B, X ⪰ 0
    let mut best_dual = 0.0f64;
    if let Some(blocks) = classical_blocks(rho, b_labels) {
        if blocks.len() == 2 {
            // Helstrom measurement: exact optimum for two symbols
            let diff = HermitianOperator::from_computed(
                &blocks[0].1 - &blocks[1].1,
                b_dims.clone(),
                b_label_owned.clone(),
            );
            let eig = diff.eig();
            let pos_part: f64 = eig.values.iter().map(|&v| v.max(0.0)).sum();
            let tr_b: f64 = blocks[1].1.diagonal().iter().map(|z| z.re).sum();
            best_dual = best_dual.max(tr_b + pos_part);
        }
        // pretty-good-measurement candidate for any alphabet size
        let rho_b_inv_sqrt = rho_b.psd_transform(PsdFn::InvSqrt, RANK_TOL)?;
        let mut val = 0.0;
        for (_, block) in &blocks {
            let m = rho_b_inv_sqrt.matrix() * block * rho_b_inv_sqrt.matrix();
            val += (block * m).diagonal().iter().map(|z| z.re).sum::<f64>();
        }
        best_dual = best_dual.max(val);
    }
    {
        // generic candidate from the best primal point
        if let Ok(cond) = conditional_operator(rho, &best_sigma) {
            let eig = cond.eig();
            let lam_top = eig.values[0];
            let top: Vec<f64> = eig
                .values
                .iter()
                .map(|&v| if v >= lam_top * (1.0 - 1e-9) { 1.0 } else { 0.0 })
                .collect();
            let proj = eig.recompose(&top);
            let inv_sqrt = best_sigma.psd_transform(PsdFn::InvSqrt, RANK_TOL)?;
            let full_labels: Vec<String> =
                rho.labels().iter().map(|s| s.to_string()).collect();
            let s_full = inv_sqrt.embed_into(rho.dims(), &full_labels)?;
            let z = s_full.matrix() * proj * s_full.matrix();
            let z_op = HermitianOperator::from_computed(
                z,
                rho.dims().to_vec(),
                full_labels,
            );
            let tr_a_z = z_op.partial_trace(b_labels)?;
            let top_tr_a = tr_a_z.max_eigenvalue();
            if top_tr_a > 1e-300 {
                let val = (z_op.matrix() * rho.matrix())
                    .diagonal()
                    .iter()
                    .map(|z| z.re)
                    .sum::<f64>()
                    / top_tr_a;
                best_dual = best_dual.max(val);
            }
        }
    }
    let upper = if best_dual > 0.0 {
        -best_dual.log2()
    } else {
        f64::INFINITY
    };
    Ok((lower, upper))
}

/// Packages a smoothing witness: `value = h_cond(rho_bar, sigma)` and
/// `smoothing = ½‖rho_bar − rho‖₁`, certifying
/// `H_min^smoothing(A|B)_rho ≥ value`.
pub fn smooth_certificate(
    rho: &HermitianOperator,
    rho_bar: &HermitianOperator,
    sigma: &HermitianOperator,
) -> Result<EntropyCertificate, EntropyError> {
    let tr = rho_bar.trace();
    if tr > 1.0 + 1e-12 {
        return Err(EntropyError::NotSubnormalized(tr));
    }
    let smoothing = rho_bar.trace_distance(rho)?;
    let value = h_cond(rho_bar, sigma)?;
    Ok(EntropyCertificate {
        value,
        sigma: sigma.clone(),
        smoothing,
        witness_state: Some(rho_bar.clone()),
    })
}

/// The eigenvalue-cutoff smoothing construction: given a witness `sigma_B`
/// for `H_min(A|B)_rho`, builds `rho_bar = rho_B^{1/2} P_B (rho_AB/rho_B)
/// P_B rho_B^{1/2}` where `P_B` keeps eigenvalues of `sigma_B/rho_B` at most
/// `1/eps²`. Guarantees: `rho_bar_B ⪯ rho_B`, `tr rho_bar ≤ 1`,
/// `½‖rho_bar − rho‖₁ ≤ eps`, and the constrained min-entropy of `rho_bar`
/// is at least `h_cond(rho, sigma_B) − 2 log2(1/eps)` with witness `rho_B`.
pub fn hbmin_smoothing(
    rho_ab: &HermitianOperator,
    sigma_b: &HermitianOperator,
    eps: f64,
) -> Result<HermitianOperator, EntropyError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(EntropyError::BadEpsilon(eps));
    }
    let b_labels = sigma_b.labels();
    let rho_b = rho_ab.partial_trace(&b_labels)?;
    let cond_sr = conditional_operator(sigma_b, &rho_b)?;
    let eig = cond_sr.eig();
    let keep: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| if v <= 1.0 / (eps * eps) { 1.0 } else { 0.0 })
        .collect();
    let p_b = eig.recompose(&keep);
    let sqrt_b = rho_b.psd_transform(PsdFn::Sqrt, RANK_TOL)?;
    let inv_sqrt_b = rho_b.psd_transform(PsdFn::InvSqrt, RANK_TOL)?;
    // T = rho_B^{1/2} P_B rho_B^{-1/2}; rho_bar = T rho T†
    let t_small = sqrt_b.matrix() * p_b * inv_sqrt_b.matrix();
    let full_labels: Vec<String> = rho_ab.labels().iter().map(|s| s.to_string()).collect();
    let t_full = embed_general(&t_small, &rho_b, rho_ab.dims(), &full_labels)?;
    let mat = &t_full * rho_ab.matrix() * t_full.adjoint();
    Ok(HermitianOperator::from_computed(
        mat,
        rho_ab.dims().to_vec(),
        full_labels,
    ))
}

/// Embeds a general (non-Hermitian) matrix acting on `pattern`'s subsystems
/// into the full space.
fn embed_general(
    m: &DMatrix<C64>,
    pattern: &HermitianOperator,
    dims: &[usize],
    labels: &[String],
) -> Result<DMatrix<C64>, EntropyError> {
    // split into Hermitian and anti-Hermitian parts, embed each
    let h = (m + m.adjoint()) * Complex::new(0.5, 0.0);
    let a = (m - m.adjoint()) * Complex::new(0.0, -0.5); // i * antiherm is herm
    let pat_labels: Vec<String> = pattern.labels().iter().map(|s| s.to_string()).collect();
    let h_op = HermitianOperator::from_computed(h, pattern.dims().to_vec(), pat_labels.clone());
    let a_op = HermitianOperator::from_computed(a, pattern.dims().to_vec(), pat_labels);
    let h_full = h_op.embed_into(dims, labels)?;
    let a_full = a_op.embed_into(dims, labels)?;
    Ok(h_full.matrix() + a_full.matrix() * Complex::new(0.0, 1.0))
}

/// One classical branch for [`combine_classical_y`]: probability, the
/// conditional state `rho^y` on Z⊗E, and its certificate.
pub struct ClassicalBranch {
    pub prob: f64,
    pub rho: HermitianOperator,
    pub cert: EntropyCertificate,
}

/// Block-diagonal classical mixture `Σ_y p_y |y⟩⟨y| ⊗ op_y` with a fresh
/// register labeled `y_label` in the leading slot.
pub fn classical_mixture(
    y_label: &str,
    probs: &[f64],
    ops: &[&HermitianOperator],
) -> Result<HermitianOperator, EntropyError> {
    let n = probs.len();
    let d_e = ops[0].dim();
    for op in ops {
        if op.dims() != ops[0].dims() {
            return Err(EntropyError::InconsistentBranches(
                ops[0].dims().to_vec(),
                op.dims().to_vec(),
            ));
        }
    }
    let d = n * d_e;
    let mut mat = DMatrix::<C64>::zeros(d, d);
    for (y, (&p, op)) in probs.iter().zip(ops.iter()).enumerate() {
        for i in 0..d_e {
            for j in 0..d_e {
                mat[(y * d_e + i, y * d_e + j)] = op.matrix()[(i, j)] * Complex::new(p, 0.0);
            }
        }
    }
    let mut dims = vec![n];
    dims.extend_from_slice(ops[0].dims());
    let mut labels = vec![y_label.to_string()];
    labels.extend(ops[0].labels().iter().map(|s| s.to_string()));
    Ok(HermitianOperator::new(mat, &dims, &labels)?)
}

/// Conditioning on a classical register: per-branch certificates for
/// `H_min(Z|E, Y=y)` combine into one for `H_min(Z|YE)`. Branches of total
/// probability at most `eps_fail` may be dropped as bad; the joint smoothing
/// is the worst good-branch smoothing plus the dropped probability.
pub fn combine_classical_y(
    branches: &[ClassicalBranch],
    eps_fail: f64,
) -> Result<EntropyCertificate, EntropyError> {
    if branches.is_empty() {
        return Err(EntropyError::BadDistribution(0.0));
    }
    for b in branches {
        if b.rho.dims() != branches[0].rho.dims() {
            return Err(EntropyError::InconsistentBranches(
                branches[0].rho.dims().to_vec(),
                b.rho.dims().to_vec(),
            ));
        }
        if b.cert.sigma.dims() != branches[0].cert.sigma.dims() {
            return Err(EntropyError::InconsistentBranches(
                branches[0].cert.sigma.dims().to_vec(),
                b.cert.sigma.dims().to_vec(),
            ));
        }
    }
    // drop the lowest-value branches while their probability fits in eps_fail
    let mut order: Vec<usize> = (0..branches.len()).collect();
    order.sort_by(|&a, &b| {
        branches[a]
            .cert
            .value
            .partial_cmp(&branches[b].cert.value)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut bad = vec![false; branches.len()];
    let mut bad_prob = 0.0;
    for &i in &order {
        if bad_prob + branches[i].prob <= eps_fail + 1e-15 && branches.len() > 1 {
            bad_prob += branches[i].prob;
            bad[i] = true;
        } else {
            break;
        }
    }
    let good: Vec<usize> = (0..branches.len()).filter(|&i| !bad[i]).collect();
    let k = good
        .iter()
        .map(|&i| branches[i].cert.value)
        .fold(f64::INFINITY, f64::min);
    let delta = good
        .iter()
        .map(|&i| branches[i].cert.smoothing)
        .fold(0.0, f64::max);

    let d_e = branches[0].cert.sigma.dim();
    let e_identity = HermitianOperator::identity(
        branches[0].cert.sigma.dims(),
        &branches[0]
            .cert
            .sigma
            .labels()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    )
    .scaled(1.0 / d_e as f64);
    let zero_z = HermitianOperator::zeros(
        branches[0].rho.dims(),
        &branches[0]
            .rho
            .labels()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    );

    let probs: Vec<f64> = branches.iter().map(|b| b.prob).collect();
    let witness_ops: Vec<HermitianOperator> = branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if bad[i] {
                zero_z.clone()
            } else {
                b.cert.witness_state.clone().unwrap_or_else(|| b.rho.clone())
            }
        })
        .collect();
    let sigma_ops: Vec<HermitianOperator> = branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if bad[i] {
                e_identity.clone()
            } else {
                b.cert.sigma.clone()
            }
        })
        .collect();
    let witness = classical_mixture(
        "Y",
        &probs,
        &witness_ops.iter().collect::<Vec<_>>(),
    )?;
    let sigma_ye = classical_mixture("Y", &probs, &sigma_ops.iter().collect::<Vec<_>>())?;
    Ok(EntropyCertificate {
        value: k,
        sigma: sigma_ye,
        smoothing: delta + bad_prob,
        witness_state: Some(witness),
    })
}

/// Entropy rate: bits of entropy per bit of alphabet.
pub fn rate(h_bits: f64, alphabet_bits: f64) -> f64 {
    debug_assert!(alphabet_bits > 0.0);
    h_bits / alphabet_bits
}

/// Extractable key length `⌊k − 2 log2(1/eps)⌋`, clamped at zero.
pub fn extractable_length(k_bits: f64, eps: f64) -> u64 {
    debug_assert!(eps > 0.0 && eps < 1.0);
    let raw = k_bits - 2.0 * (1.0 / eps).log2();
    if raw <= 0.0 {
        0
    } else {
        (raw + 1e-9).floor() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::PureState;
    use crate::random::{
        random_cq, random_density, random_projector, random_pure, test_rng,
    };
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> C64 {
        Complex::new(re, im)
    }

    fn qubit_state(a: C64, b: C64, label: &str) -> HermitianOperator {
        let mut v = DVector::<C64>::zeros(2);
        v[0] = a;
        v[1] = b;
        let n = v.norm();
        let psi = PureState::new(v / c(n, 0.0), &[2], &[label]).unwrap();
        psi.density()
    }

    #[test]
    fn conditional_operator_product_input() {
        let mut rng = test_rng(30);
        let rho_a = random_density(&mut rng, &[2], &["A"]);
        let sigma_b = random_density(&mut rng, &[2], &["B"]);
        let prod = rho_a.tensor(&sigma_b).unwrap();
        let cond = conditional_operator(&prod, &sigma_b).unwrap();
        let supp = sigma_b.support_projector(RANK_TOL).unwrap();
        let expect = rho_a.tensor(&supp).unwrap();
        let diff = cond.sub(&expect).unwrap();
        assert!(diff.max_abs_entry() < 1e-10);
    }

    #[test]
    fn conditional_operator_uniform_example() {
        let rho = HermitianOperator::identity(&[2, 2], &["A", "B"]).scaled(0.25);
        let sigma = HermitianOperator::identity(&[2], &["B"]).scaled(0.5);
        let cond = conditional_operator(&rho, &sigma).unwrap();
        let expect = HermitianOperator::identity(&[2, 2], &["A", "B"]).scaled(0.5);
        assert!(cond.sub(&expect).unwrap().max_abs_entry() < 1e-12);
    }

    #[test]
    fn conditional_operator_partial_trace_consistency() {
        let mut rng = test_rng(31);
        for _ in 0..10 {
            let rho = random_density(&mut rng, &[2, 2, 2], &["A", "B", "C"]);
            let sigma = random_density(&mut rng, &[2], &["B"]);
            let lhs = conditional_operator(&rho, &sigma)
                .unwrap()
                .partial_trace(&["A", "B"])
                .unwrap();
            let rho_ab = rho.partial_trace(&["A", "B"]).unwrap();
            let rhs = conditional_operator(&rho_ab, &sigma).unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs_entry() < 1e-10);
        }
    }

    #[test]
    fn conditional_operator_support_violation() {
        let rho = qubit_state(c(1.0, 0.0), c(0.0, 0.0), "B");
        let sigma = qubit_state(c(0.0, 0.0), c(1.0, 0.0), "B");
        match conditional_operator(&rho, &sigma) {
            Err(EntropyError::SupportViolation { overlap, .. }) => assert!(overlap > 0.5),
            other => panic!("expected support violation, got {other:?}"),
        }
    }

    #[test]
    fn h_cond_uniform_cq() {
        // X uniform on 4 symbols, independent of E
        let mut rng = test_rng(32);
        let rho_e = random_density(&mut rng, &[2], &["E"]);
        let cq = CQState::new(
            (0..4).map(|i| format!("x{i}")).collect(),
            vec![0.25; 4],
            vec![rho_e.clone(); 4],
        )
        .unwrap();
        let rho = cq.materialize().unwrap();
        let h = h_cond(&rho, &rho_e).unwrap();
        assert!((h - 2.0).abs() < 1e-9);
    }

    #[test]
    fn h_cond_perfectly_correlated_pair() {
        let ops = vec![
            qubit_state(c(1.0, 0.0), c(0.0, 0.0), "E"),
            qubit_state(c(0.0, 0.0), c(1.0, 0.0), "E"),
        ];
        let cq = CQState::new(
            vec!["0".into(), "1".into()],
            vec![0.5, 0.5],
            ops,
        )
        .unwrap();
        let rho = cq.materialize().unwrap();
        let rho_e = rho.partial_trace(&["E"]).unwrap();
        let h = h_cond(&rho, &rho_e).unwrap();
        assert!(h.abs() < 1e-9);
    }

    #[test]
    fn h_cond_bell_state_is_minus_one() {
        let inv = 1.0 / 2f64.sqrt();
        let mut amps = DVector::<C64>::zeros(4);
        amps[0] = c(inv, 0.0);
        amps[3] = c(inv, 0.0);
        let bell = PureState::new(amps, &[2, 2], &["A", "B"]).unwrap();
        let sigma = HermitianOperator::identity(&[2], &["B"]).scaled(0.5);
        let h = h_cond(&bell.density(), &sigma).unwrap();
        assert!((h + 1.0).abs() < 1e-9);
    }

    #[test]
    fn h_cond_zero_state_is_infinite() {
        let zero = HermitianOperator::zeros(&[2, 2], &["A", "B"]);
        let sigma = HermitianOperator::identity(&[2], &["B"]).scaled(0.5);
        assert!(h_cond(&zero, &sigma).unwrap().is_infinite());
        // the sentinel absorbs addition and dominates comparisons
        let inf = h_cond(&zero, &sigma).unwrap();
        assert!(inf + 5.0 == inf && inf > 1e300);
    }

    #[test]
    fn hmin_product_state_reduces_to_classical() {
        let mut rng = test_rng(33);
        let rho_e = random_density(&mut rng, &[2], &["E"]);
        let cq = CQState::new(
            vec!["0".into(), "1".into()],
            vec![0.75, 0.25],
            vec![rho_e.clone(), rho_e],
        )
        .unwrap();
        let rho = cq.materialize().unwrap();
        let cert = hmin(&rho, &["E"], false).unwrap();
        let expect = -(0.75f64).log2();
        assert!(
            (cert.value - expect).abs() < 2e-4,
            "got {} want {}",
            cert.value,
            expect
        );
        let check = cert.verify(&rho).unwrap();
        assert!(check.operator_slack > -1e-9);
    }

    #[test]
    fn hmin_zero_plus_instance() {
        let ops = vec![
            qubit_state(c(1.0, 0.0), c(0.0, 0.0), "E"),
            qubit_state(c(1.0, 0.0), c(1.0, 0.0), "E"),
        ];
        let cq = CQState::new(vec!["0".into(), "1".into()], vec![0.5, 0.5], ops).unwrap();
        let rho = cq.materialize().unwrap();
        let cert = hmin(&rho, &["E"], false).unwrap();
        let expect = -((1.0 + 1.0 / 2f64.sqrt()) / 2.0).log2(); // 0.22839...
        assert!(
            (cert.value - expect).abs() < 5e-3,
            "got {} want {}",
            cert.value,
            expect
        );
        let (lower, upper) = hmin_bracket_oracle(&rho, &["E"], 400).unwrap();
        assert!(lower - 1e-7 <= cert.value && cert.value <= upper + 1e-7);
        assert!(lower <= expect + 1e-9 && expect <= upper + 1e-9);
    }

    #[test]
    fn hmin_constrained_equals_h_cond_for_normalized() {
        let mut rng = test_rng(34);
        let rho = random_density(&mut rng, &[2, 2], &["A", "B"]);
        let cert = hmin(&rho, &["B"], true).unwrap();
        let rho_b = rho.partial_trace(&["B"]).unwrap();
        let expect = h_cond(&rho, &rho_b).unwrap();
        assert!((cert.value - expect).abs() < 1e-10);
        // grid cross-check: no sigma ⪰ rho_B with trace 1 does better
        let (lower, _) = hmin_bracket_oracle(&rho, &["B"], 300).unwrap();
        let _ = lower; // unconstrained lower bound may exceed the constrained value
    }

    #[test]
    fn bracket_oracle_product_state() {
        let mut rng = test_rng(35);
        let rho_e = random_density(&mut rng, &[2], &["E"]);
        let cq = CQState::new(
            vec!["0".into(), "1".into()],
            vec![0.6, 0.4],
            vec![rho_e.clone(), rho_e],
        )
        .unwrap();
        let rho = cq.materialize().unwrap();
        let (lower, upper) = hmin_bracket_oracle(&rho, &["E"], 200).unwrap();
        let expect = -(0.6f64).log2();
        assert!((lower - expect).abs() < 1e-3, "lower {lower} vs {expect}");
        assert!((upper - expect).abs() < 1e-3, "upper {upper} vs {expect}");
        assert!(lower <= upper + 1e-12);
    }

    #[test]
    fn bracket_oracle_correlated_contains_zero() {
        let ops = vec![
            qubit_state(c(1.0, 0.0), c(0.0, 0.0), "E"),
            qubit_state(c(0.0, 0.0), c(1.0, 0.0), "E"),
        ];
        let cq = CQState::new(vec!["0".into(), "1".into()], vec![0.5, 0.5], ops).unwrap();
        let rho = cq.materialize().unwrap();
        let (lower, upper) = hmin_bracket_oracle(&rho, &["E"], 200).unwrap();
        assert!(lower <= 1e-6 && upper >= -1e-9, "bracket [{lower}, {upper}]");
        assert!(hmin_bracket_oracle(&rho, &["X", "E"], 10).is_err());
    }

    #[test]
    fn smooth_certificate_examples() {
        let mut rng = test_rng(36);
        let rho = random_density(&mut rng, &[2, 2], &["A", "B"]);
        let sigma = normalize_to_state(&rho.partial_trace(&["B"]).unwrap());
        let cert = smooth_certificate(&rho, &rho, &sigma).unwrap();
        assert!(cert.smoothing.abs() < 1e-12);
        assert!((cert.value - h_cond(&rho, &sigma).unwrap()).abs() < 1e-12);

        let junk = random_density(&mut rng, &[2, 2], &["A", "B"]);
        let eps = 0.2;
        let mixed = rho.scaled(1.0 - eps).add(&junk.scaled(eps)).unwrap();
        let cert = smooth_certificate(&rho, &mixed, &sigma).unwrap();
        assert!(cert.smoothing <= eps + 1e-12);

        let too_big = rho.scaled(1.5);
        assert!(smooth_certificate(&rho, &too_big, &sigma).is_err());
    }

    #[test]
    fn hbmin_smoothing_product_state_is_identity() {
        let mut rng = test_rng(37);
        let rho_a = random_density(&mut rng, &[2], &["A"]);
        let rho_b = random_density(&mut rng, &[2], &["B"]);
        let rho = rho_a.tensor(&rho_b).unwrap();
        let rho_bar = hbmin_smoothing(&rho, &rho_b, 0.3).unwrap();
        assert!(rho_bar.sub(&rho).unwrap().max_abs_entry() < 1e-10);
        assert!(hbmin_smoothing(&rho, &rho_b, 0.0).is_err());
    }

    #[test]
    fn hbmin_smoothing_guarantees() {
        let mut rng = test_rng(38);
        let eps = 0.1;
        for _ in 0..100 {
            let rho = random_density(&mut rng, &[2, 2], &["A", "B"]);
            let sigma = random_density(&mut rng, &[2], &["B"]);
            let rho_bar = hbmin_smoothing(&rho, &sigma, eps).unwrap();
            let rho_b = rho.partial_trace(&["B"]).unwrap();
            let bar_b = rho_bar.partial_trace(&["B"]).unwrap();
            // (1) rho_bar_B ⪯ rho_B
            assert!(rho_b.sub(&bar_b).unwrap().min_eigenvalue() > -1e-9);
            // (2) subnormalized
            assert!(rho_bar.trace() <= 1.0 + 1e-9);
            // (3) within the smoothing ball
            assert!(rho_bar.trace_distance(&rho).unwrap() <= eps + 1e-9);
            // (4) entropy with witness rho_B drops by at most 2 log2(1/eps)
            let h = h_cond(&rho, &sigma).unwrap();
            let sigma2 = normalize_to_state(&rho_b);
            let h_bar = h_cond(&rho_bar, &sigma2).unwrap();
            assert!(
                h_bar >= h - 2.0 * (1.0 / eps).log2() - 1e-9,
                "h_bar {h_bar} vs h {h}"
            );
        }
    }

    #[test]
    fn combine_classical_y_examples() {
        let mut rng = test_rng(39);
        // single branch with probability 1: identical certificate
        let rho = random_density(&mut rng, &[2, 2], &["Z", "E"]);
        let cert = hmin(&rho, &["E"], false).unwrap();
        let joint = combine_classical_y(
            &[ClassicalBranch {
                prob: 1.0,
                rho: rho.clone(),
                cert: cert.clone(),
            }],
            0.0,
        )
        .unwrap();
        assert!((joint.value - cert.value).abs() < 1e-12);
        assert!(joint.smoothing.abs() < 1e-12);

        // two good branches, delta = 0: value = min, smoothing = 0
        let rho2 = random_density(&mut rng, &[2, 2], &["Z", "E"]);
        let cert2 = hmin(&rho2, &["E"], false).unwrap();
        let joint = combine_classical_y(
            &[
                ClassicalBranch {
                    prob: 0.5,
                    rho: rho.clone(),
                    cert: cert.clone(),
                },
                ClassicalBranch {
                    prob: 0.5,
                    rho: rho2.clone(),
                    cert: cert2.clone(),
                },
            ],
            0.0,
        )
        .unwrap();
        assert!((joint.value - cert.value.min(cert2.value)).abs() < 1e-12);
        // the assembled witness obeys its operator inequality
        let mixture =
            classical_mixture("Y", &[0.5, 0.5], &[&rho, &rho2]).unwrap();
        let check = joint.verify(&mixture).unwrap();
        assert!(check.operator_slack > -1e-9);
        assert!(check.distance_slack > -1e-9);

        // one bad branch of probability 0.05 with delta = 0.01 elsewhere
        let junk = random_density(&mut rng, &[2, 2], &["Z", "E"]);
        let smoothed = EntropyCertificate {
            value: cert.value,
            sigma: cert.sigma.clone(),
            smoothing: 0.01,
            witness_state: Some(rho.clone()),
        };
        let bad = EntropyCertificate {
            value: -5.0,
            sigma: cert.sigma.clone(),
            smoothing: 0.0,
            witness_state: None,
        };
        let joint = combine_classical_y(
            &[
                ClassicalBranch {
                    prob: 0.95,
                    rho: rho.clone(),
                    cert: smoothed,
                },
                ClassicalBranch {
                    prob: 0.05,
                    rho: junk,
                    cert: bad,
                },
            ],
            0.05,
        )
        .unwrap();
        assert!((joint.smoothing - 0.06).abs() < 1e-12);
        assert!((joint.value - cert.value).abs() < 1e-12);
    }

    #[test]
    fn rate_and_extractable_length_examples() {
        assert_eq!(rate(8.0, 8.0), 1.0);
        assert_eq!(rate(0.0, 8.0), 0.0);
        assert_eq!(rate(-1.0, 2.0), -0.5);
        assert_eq!(extractable_length(40.0, 2f64.powi(-10)), 20);
        assert_eq!(extractable_length(10.0, 0.5), 8);
        assert_eq!(extractable_length(3.0, 2f64.powi(-10)), 0);
    }

    #[test]
    fn positivity_for_classical_states() {
        let mut rng = test_rng(40);
        for _ in 0..25 {
            let cq = random_cq(&mut rng, 3, 2);
            let rho = cq.materialize().unwrap();
            let rho_b = rho.partial_trace(&["E"]).unwrap();
            assert!(h_cond(&rho, &rho_b).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn dimension_bound_and_chain_rule() {
        let mut rng = test_rng(41);
        for _ in 0..25 {
            let rho = random_density(&mut rng, &[2, 2, 2], &["A", "B", "C"]);
            let sigma_c = random_density(&mut rng, &[2], &["C"]);
            let h_ab_c = h_cond(&rho, &sigma_c).unwrap();
            let rho_bc = rho.partial_trace(&["B", "C"]).unwrap();
            let h_b_c = h_cond(&rho_bc, &sigma_c).unwrap();
            // H(B|C) >= H(AB|C) - log dim A
            assert!(h_b_c >= h_ab_c - 1.0 - 1e-9);
            // recombination chain rule: H(AB|C)_{rho/sigma} >= H(A|BC)_rho + H(B|C)_{rho/sigma}
            let h_a_bc = h_cond(&rho, &rho_bc).unwrap();
            assert!(h_ab_c >= h_a_bc + h_b_c - 1e-9);
        }
    }

    #[test]
    fn subadditivity_random() {
        let mut rng = test_rng(42);
        for _ in 0..25 {
            let rho = random_density(&mut rng, &[2, 2, 2], &["A", "B", "C"]);
            let sigma_bc = random_density(&mut rng, &[2, 2], &["B", "C"]);
            let h_a_bc = h_cond(&rho, &sigma_bc).unwrap();
            let rho_ab = rho.partial_trace(&["A", "B"]).unwrap();
            let sigma_b = sigma_bc.partial_trace(&["B"]).unwrap();
            let h_a_b = h_cond(&rho_ab, &sigma_b).unwrap();
            assert!(h_a_b >= h_a_bc - 1e-9);
        }
    }

    #[test]
    fn projection_monotony_random() {
        let mut rng = test_rng(43);
        for _ in 0..25 {
            let psi = random_pure(&mut rng, &[2, 2, 2], &["A", "B", "C"]);
            let q = random_projector(&mut rng, &[2], &["C"], 1);
            let qf = q
                .embed_into(psi.dims(), &["A".into(), "B".into(), "C".into()])
                .unwrap();
            let amps = qf.matrix() * psi.amplitudes();
            let psi_proj = PureState::new(amps, &[2, 2, 2], &["A", "B", "C"]).unwrap();
            let sigma_b = random_density(&mut rng, &[2], &["B"]);
            let rho_ab = psi.reduced_density(&["A", "B"]).unwrap();
            let rho_ab_proj = psi_proj.reduced_density(&["A", "B"]).unwrap();
            let before = h_cond(&rho_ab, &sigma_b).unwrap();
            let after = h_cond(&rho_ab_proj, &sigma_b).unwrap();
            assert!(after >= before - 1e-9);
        }
    }

    /// Applying a function to classical X can only lower the entropy:
    /// H_min(X|E) >= H_min(f(X)|E). Verified exhaustively on classical
    /// instances, where the min-entropy has an exact closed form.
    #[test]
    fn function_monotonicity_classical_exhaustive() {
        let mut rng = test_rng(44);
        let nx = 3usize;
        let ne = 2usize;
        for _ in 0..5 {
            // random joint classical distribution p(x, e)
            let mut p = vec![vec![0.0f64; ne]; nx];
            let mut total = 0.0;
            for x in 0..nx {
                for e in 0..ne {
                    let w: f64 = rand::Rng::gen_range(&mut rng, 0.01..1.0);
                    p[x][e] = w;
                    total += w;
                }
            }
            for row in p.iter_mut() {
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            let hmin_of = |q: &Vec<Vec<f64>>| -> f64 {
                let mut guess = 0.0;
                for e in 0..ne {
                    let best = (0..q.len()).map(|x| q[x][e]).fold(0.0, f64::max);
                    guess += best;
                }
                -guess.log2()
            };
            let h_x = hmin_of(&p);
            // all functions f: [3] -> [3]
            for code in 0..27usize {
                let f = [code % 3, (code / 3) % 3, (code / 9) % 3];
                let mut q = vec![vec![0.0f64; ne]; nx];
                for x in 0..nx {
                    for e in 0..ne {
                        q[f[x]][e] += p[x][e];
                    }
                }
                let h_f = hmin_of(&q);
                assert!(h_x >= h_f - 1e-12, "f {f:?}: {h_x} < {h_f}");
            }
            // cross-check the SDP against the exact classical value
            let ops: Vec<HermitianOperator> = (0..nx)
                .map(|x| {
                    let px: f64 = p[x].iter().sum();
                    let mut m = DMatrix::<C64>::zeros(ne, ne);
                    for e in 0..ne {
                        m[(e, e)] = c(p[x][e] / px.max(1e-300), 0.0);
                    }
                    HermitianOperator::new(m, &[ne], &["E"]).unwrap()
                })
                .collect();
            let probs: Vec<f64> = (0..nx).map(|x| p[x].iter().sum()).collect();
            let cq = CQState::new(
                (0..nx).map(|i| format!("x{i}")).collect(),
                probs,
                ops,
            )
            .unwrap();
            let rho = cq.materialize().unwrap();
            let cert = hmin(&rho, &["E"], false).unwrap();
            assert!(
                (cert.value - h_x).abs() < 5e-4,
                "sdp {} vs classical {}",
                cert.value,
                h_x
            );
        }
    }

    #[test]
    fn cq_state_serialization_round_trip() {
        let mut rng = test_rng(45);
        let cq = random_cq(&mut rng, 3, 2);
        let text = serde_json::to_string(&cq).unwrap();
        let back: CQState = serde_json::from_str(&text).unwrap();
        assert_eq!(back.alphabet(), cq.alphabet());
        let a = cq.materialize().unwrap();
        let b = back.materialize().unwrap();
        assert!(a.sub(&b).unwrap().max_abs_entry() < 1e-15);
    }
}
