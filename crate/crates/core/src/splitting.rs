//! Entropy splitting, split trees, λ-good paths and recombination.
//!
//! A purification is decomposed into `m` mutually orthogonal subnormalized
//! components by partitioning the spectrum of a conditional operator into
//! half-open intervals. Applied recursively block by block this yields an
//! m-ary depth-n split tree whose edges carry conditional entropies; summing
//! selected leaves back together produces recombined states that are close to
//! the original whenever the selected leaf set carries most of the leaf
//! weight, while keeping a large conditional entropy on the selected blocks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::entropy::{h_cond, EntropyCertificate, EntropyError};
use crate::operator::{
    apply_on_subset, matricize, positions_of, schmidt_of_vector, unmatricize, C64,
    HermitianOperator, OperatorError, PsdFn, PureState,
};
use crate::report::Check;
use crate::RANK_TOL;

/// Schmidt components with squared coefficient below this fraction of the
/// largest are treated as numerically vanished and excluded from the split
/// projectors.
const SPLIT_KEEP_TOL: f64 = 1e-12;

/// Norm below which a branch state counts as vanished.
pub const ZERO_STATE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SplittingError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("subsystem sets must be disjoint and cover the state")]
    BadPartition,
    #[error("split count m must be at least 1")]
    BadM,
    #[error("grid must be monotone with h[0] = H(B|C) and h[m] = H(AB|C) - H(A|BC); {0}")]
    BadGrid(String),
    #[error("tree would have {leaves} leaves, over the {cap} cap; reduce m or n")]
    BudgetExceeded { leaves: usize, cap: usize },
    #[error("good set was built from a different tree shape")]
    ForeignGoodSet,
}

/// Projector onto a subspace of the named subsystems, stored as an
/// orthonormal basis of its range.
#[derive(Debug, Clone)]
pub struct SubspaceProjector {
    basis: DMatrix<C64>,
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl SubspaceProjector {
    pub fn zero(dims: Vec<usize>, labels: Vec<String>) -> Self {
        let d: usize = dims.iter().product();
        Self {
            basis: DMatrix::zeros(d, 0),
            dims,
            labels,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.labels.iter().map(|s| s.as_str()).collect()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Materialized projector matrix `V V†` on the subsystems it acts on.
    pub fn to_operator(&self) -> HermitianOperator {
        let mat = &self.basis * self.basis.adjoint();
        HermitianOperator::from_computed(mat, self.dims.clone(), self.labels.clone())
    }

    /// Applies the projector to a raw state vector on a larger space.
    pub fn apply(
        &self,
        amps: &DVector<C64>,
        dims: &[usize],
        labels: &[String],
    ) -> Result<DVector<C64>, OperatorError> {
        let subset: Vec<&str> = self.labels.iter().map(|s| s.as_str()).collect();
        if self.rank() == 0 {
            return Ok(DVector::zeros(amps.len()));
        }
        let m = matricize(amps, dims, labels, &subset)?;
        let coeff = self.basis.adjoint() * &m;
        let out = &self.basis * coeff;
        unmatricize(&out, dims, labels, &subset)
    }
}

/// One branch of a single splitting step.
pub struct SplitPart {
    /// Subnormalized component on the full input space.
    pub state: DVector<C64>,
    /// Projector on A∪D realizing this component by a single projection.
    pub q_ad: SubspaceProjector,
    /// Matching spectral-interval projector on B∪C.
    pub p_bc: SubspaceProjector,
}

fn owned_labels(labels: &[&str]) -> Vec<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

/// Splits a pure state on A∪B∪C∪D into `m` orthogonal components along the
/// spectrum of the conditional operator `rho_BC / sigma_C`.
///
/// `a` is the block being split off, `b` the remaining blocks (may be
/// empty), `sigma_c` fixes C by its labels, and D is everything else. With
/// `grid = None` the spectrum is cut into `m` equal entropy intervals
/// between `H(B|C)_{rho/sigma}` and `H(AB|C)_{rho/sigma} - H(A|BC)_rho`.
pub fn split_once(
    psi: &PureState,
    a: &[&str],
    b: &[&str],
    sigma_c: &HermitianOperator,
    m: usize,
    grid: Option<&[f64]>,
) -> Result<Vec<SplitPart>, SplittingError> {
    if m == 0 {
        return Err(SplittingError::BadM);
    }
    let dims = psi.dims().to_vec();
    let labels = owned_labels(&psi.labels());
    let c: Vec<&str> = sigma_c.labels();
    // partition sanity: a, b, c disjoint and present
    let mut seen: Vec<&str> = Vec::new();
    for l in a.iter().chain(b.iter()).chain(c.iter()) {
        if seen.contains(l) || !labels.iter().any(|t| t == l) {
            return Err(SplittingError::BadPartition);
        }
        seen.push(l);
    }
    if a.is_empty() {
        return Err(SplittingError::BadPartition);
    }
    let ad: Vec<&str> = labels
        .iter()
        .map(|s| s.as_str())
        .filter(|l| !b.contains(l) && !c.contains(l))
        .collect();
    let bc: Vec<&str> = labels
        .iter()
        .map(|s| s.as_str())
        .filter(|l| b.contains(l) || c.contains(l))
        .collect();
    let ad_pos = positions_of(&labels, &ad)?;
    let ad_dims: Vec<usize> = ad_pos.iter().map(|&p| dims[p]).collect();
    let ad_labels: Vec<String> = ad_pos.iter().map(|&p| labels[p].clone()).collect();
    let bc_pos = positions_of(&labels, &bc)?;
    let bc_dims: Vec<usize> = bc_pos.iter().map(|&p| dims[p]).collect();
    let bc_labels: Vec<String> = bc_pos.iter().map(|&p| labels[p].clone()).collect();

    if psi.norm() <= ZERO_STATE_TOL {
        return Ok((0..m)
            .map(|_| SplitPart {
                state: DVector::zeros(psi.amplitudes().len()),
                q_ad: SubspaceProjector::zero(ad_dims.clone(), ad_labels.clone()),
                p_bc: SubspaceProjector::zero(bc_dims.clone(), bc_labels.clone()),
            })
            .collect());
    }

    // grid endpoints
    let abc: Vec<&str> = labels
        .iter()
        .map(|s| s.as_str())
        .filter(|l| a.contains(l) || b.contains(l) || c.contains(l))
        .collect();
    let rho_abc = psi.reduced_density(&abc)?;
    let rho_bc = psi.reduced_density(&bc)?;
    let h_ab_c = h_cond(&rho_abc, sigma_c)?;
    let h_a_bc = h_cond(&rho_abc, &rho_bc)?;
    let h0 = h_cond(&rho_bc, sigma_c)?;
    let hm = h_ab_c - h_a_bc;
    let grid_vals: Vec<f64> = match grid {
        Some(g) => {
            if g.len() != m + 1 {
                return Err(SplittingError::BadGrid(format!(
                    "expected {} grid values, got {}",
                    m + 1,
                    g.len()
                )));
            }
            if g.windows(2).any(|w| w[1] < w[0] - 1e-12) {
                return Err(SplittingError::BadGrid("not monotone".into()));
            }
            let tol = 1e-9 * (1.0 + h0.abs().max(hm.abs()));
            if (g[0] - h0).abs() > tol || (g[m] - hm).abs() > tol {
                return Err(SplittingError::BadGrid(format!(
                    "endpoints ({}, {}) do not match ({h0}, {hm})",
                    g[0], g[m]
                )));
            }
            g.to_vec()
        }
        None => {
            let delta = (hm - h0).max(0.0);
            (0..=m)
                .map(|alpha| h0 + alpha as f64 * delta / m as f64)
                .collect()
        }
    };

    // conditional state sigma_C^{-1/2}|psi> and its Schmidt data across AD|BC
    let inv_sqrt = sigma_c.psd_transform(PsdFn::InvSqrt, RANK_TOL)?;
    let sqrt_c = sigma_c.psd_transform(PsdFn::Sqrt, RANK_TOL)?;
    let phi = apply_on_subset(psi.amplitudes(), &dims, &labels, &c, inv_sqrt.matrix())?;
    let schmidt = schmidt_of_vector(&phi, &dims, &labels, &ad)?;

    // interval boundaries mu_alpha = 2^{-h_alpha}, mu_0 = inf, mu_m = -inf
    let mut mu = vec![f64::INFINITY];
    for alpha in 1..m {
        mu.push(2f64.powf(-grid_vals[alpha]));
    }
    mu.push(f64::NEG_INFINITY);

    // cluster near-equal Schmidt eigenvalues so degenerate subspaces are
    // never torn across an interval boundary
    let lams: Vec<f64> = schmidt.coefficients.iter().map(|s| s * s).collect();
    let lam_max = lams.first().copied().unwrap_or(0.0);
    let keep_cut = SPLIT_KEEP_TOL * lam_max;
    let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
    for (k, &lam) in lams.iter().enumerate() {
        if lam <= keep_cut {
            continue;
        }
        match clusters.last_mut() {
            Some((v, idxs)) if (*v - lam).abs() <= 1e-12 * lam_max => idxs.push(k),
            _ => clusters.push((lam, vec![k])),
        }
    }

    // assign each cluster to the interval ]mu_alpha, mu_{alpha-1}]; an exact
    // tie with a boundary goes to the smaller-eigenvalue side (closed end)
    let mut interval_members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (v, idxs) in &clusters {
        let mut alpha = m; // default: last interval
        for (cand, mu_cand) in mu.iter().enumerate().skip(1) {
            let tie_tol = 1e-12 * v.abs().max(if mu_cand.is_finite() { mu_cand.abs() } else { 0.0 });
            if *v > mu_cand + tie_tol {
                alpha = cand;
                break;
            }
        }
        interval_members[alpha - 1].extend_from_slice(idxs);
    }

    let mut parts = Vec::with_capacity(m);
    for members in interval_members.iter() {
        let rank = members.len();
        let mut qb = DMatrix::<C64>::zeros(schmidt.vectors_a.nrows(), rank);
        let mut pb = DMatrix::<C64>::zeros(schmidt.vectors_b.nrows(), rank);
        for (col, &k) in members.iter().enumerate() {
            qb.set_column(col, &schmidt.vectors_a.column(k));
            pb.set_column(col, &schmidt.vectors_b.column(k));
        }
        let q_ad = SubspaceProjector {
            basis: qb,
            dims: ad_dims.clone(),
            labels: ad_labels.clone(),
        };
        let p_bc = SubspaceProjector {
            basis: pb,
            dims: bc_dims.clone(),
            labels: bc_labels.clone(),
        };
        let state = q_ad.apply(psi.amplitudes(), &dims, &labels)?;
        parts.push(SplitPart { state, q_ad, p_bc });
    }
    let _ = sqrt_c; // alternative-expression form is exercised in tests
    Ok(parts)
}

/// Evaluates the alternative expression `sigma_C^{1/2} P_BC sigma_C^{-1/2}
/// |psi>` for a split part; used to confirm both definitions agree.
pub fn split_part_alternative(
    psi: &PureState,
    part: &SplitPart,
    sigma_c: &HermitianOperator,
) -> Result<DVector<C64>, SplittingError> {
    let dims = psi.dims().to_vec();
    let labels = owned_labels(&psi.labels());
    let c: Vec<&str> = sigma_c.labels();
    let inv_sqrt = sigma_c.psd_transform(PsdFn::InvSqrt, RANK_TOL)?;
    let sqrt_c = sigma_c.psd_transform(PsdFn::Sqrt, RANK_TOL)?;
    let phi = apply_on_subset(psi.amplitudes(), &dims, &labels, &c, inv_sqrt.matrix())?;
    let projected = part.p_bc.apply(&phi, &dims, &labels)?;
    Ok(apply_on_subset(
        &projected,
        &dims,
        &labels,
        &c,
        sqrt_c.matrix(),
    )?)
}

/// One node of the split tree: the state at path `alpha^j`, the projector
/// that produces it from the root, and its edge entropy
/// `H(X_j | X_{>j} E)` (infinite for vanished branches).
pub struct SplitNode {
    pub path: Vec<usize>,
    pub state: DVector<C64>,
    pub q: SubspaceProjector,
    pub edge_entropy: f64,
    pub norm_sq: f64,
}

/// m-ary depth-n split tree over a classical-quantum state on X^n ⊗ E,
/// purified by a reference system R.
pub struct SplitTree {
    root: PureState,
    sigma_e: HermitianOperator,
    pub m: usize,
    pub n: usize,
    pub x_dim: usize,
    pub alphabet_bits: f64,
    levels: Vec<Vec<SplitNode>>,
    leaf_h_e: Vec<f64>,
    /// `H(X^n|E)_{rho/sigma}` at the root.
    pub h_root: f64,
    /// `H(E)_{rho/sigma}` at the root.
    pub h_e_root: f64,
}

pub const LEAF_BUDGET: usize = 4096;

/// Flat index of a path at its level: alpha_1 is the most significant digit.
pub fn path_to_index(path: &[usize], m: usize) -> usize {
    path.iter().fold(0, |acc, &a| acc * m + a)
}

pub fn index_to_path(mut idx: usize, m: usize, level: usize) -> Vec<usize> {
    let mut path = vec![0usize; level];
    for slot in (0..level).rev() {
        path[slot] = idx % m;
        idx /= m;
    }
    path
}

impl SplitTree {
    pub fn root(&self) -> &PureState {
        &self.root
    }

    pub fn sigma(&self) -> &HermitianOperator {
        &self.sigma_e
    }

    pub fn node(&self, level: usize, path: &[usize]) -> &SplitNode {
        &self.levels[level - 1][path_to_index(path, self.m)]
    }

    pub fn level(&self, level: usize) -> &[SplitNode] {
        &self.levels[level - 1]
    }

    pub fn leaves(&self) -> &[SplitNode] {
        &self.levels[self.n - 1]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Leaf weight `omega(alpha^n) = tr |Psi^{alpha^n}><Psi^{alpha^n}|`.
    pub fn omega(&self, leaf: usize) -> f64 {
        self.leaves()[leaf].norm_sq
    }

    pub fn omega_total(&self) -> f64 {
        self.leaves().iter().map(|n| n.norm_sq).sum()
    }

    /// `H(E)_{rho^{alpha^n}/sigma}` for a leaf.
    pub fn leaf_h_e(&self, leaf: usize) -> f64 {
        self.leaf_h_e[leaf]
    }

    pub fn e_labels(&self) -> Vec<&str> {
        self.sigma_e.labels()
    }

    /// S-restricted path weight `H(E)_{rho^{alpha^n}/sigma} +
    /// sum_{j in S} H(X_j|X_{>j}E)_{rho^{alpha^j}}` for a leaf path.
    pub fn path_weight(&self, subset_s: &[usize], path: &[usize]) -> f64 {
        let mut w = self.leaf_h_e[path_to_index(path, self.m)];
        for &j in subset_s {
            w += self.node(j, &path[..j]).edge_entropy;
        }
        w
    }

    /// Edge entropies of every root-to-leaf path, normalized by the
    /// alphabet size: the row matrix fed to the sampler machinery.
    pub fn beta_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.leaf_count())
            .map(|leaf| {
                let path = index_to_path(leaf, self.m, self.n);
                (1..=self.n)
                    .map(|j| {
                        let e = self.node(j, &path[..j]).edge_entropy;
                        if e.is_infinite() {
                            1.0
                        } else {
                            (e / self.alphabet_bits).clamp(0.0, 1.0)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Diagnostic dump: per-node norms, entropies, and the leaf
    /// distribution omega.
    pub fn json_dump(&self) -> serde_json::Value {
        let levels: Vec<Vec<serde_json::Value>> = self
            .levels
            .iter()
            .map(|nodes| {
                nodes
                    .iter()
                    .map(|n| {
                        serde_json::json!({
                            "path": n.path.iter().map(|a| a + 1).collect::<Vec<_>>(),
                            "norm_sq": n.norm_sq,
                            "edge_entropy": if n.edge_entropy.is_finite() {
                                serde_json::json!(n.edge_entropy)
                            } else {
                                serde_json::json!("inf")
                            },
                        })
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({
            "m": self.m,
            "n": self.n,
            "alphabet_bits": self.alphabet_bits,
            "h_root": self.h_root,
            "h_e_root": self.h_e_root,
            "levels": levels,
            "omega": (0..self.leaf_count()).map(|l| self.omega(l)).collect::<Vec<_>>(),
        })
    }
}

/// Builds the split tree of a classical-quantum state: block `X_1` is split
/// off first, then `X_2` within every branch, and so on.
pub fn build_split_tree(
    rho_xne: &crate::entropy::CQState,
    sigma_e: &HermitianOperator,
    m: usize,
) -> Result<SplitTree, SplittingError> {
    if m == 0 {
        return Err(SplittingError::BadM);
    }
    let n = rho_xne.x_dims().len();
    let leaves = m.checked_pow(n as u32).unwrap_or(usize::MAX);
    if leaves > LEAF_BUDGET {
        return Err(SplittingError::BudgetExceeded {
            leaves,
            cap: LEAF_BUDGET,
        });
    }
    let x_dim = rho_xne.x_dims()[0];
    let rho = rho_xne.materialize()?;
    let root = rho.purify("R")?;
    let dims = root.dims().to_vec();
    let labels = owned_labels(&root.labels());
    let e_labels: Vec<String> = sigma_e.labels().iter().map(|s| s.to_string()).collect();
    let e_refs: Vec<&str> = e_labels.iter().map(|s| s.as_str()).collect();

    let h_root = h_cond(&rho, sigma_e)?;
    let rho_e = rho.partial_trace(&e_refs)?;
    let h_e_root = h_cond(&rho_e, sigma_e)?;

    let x_labels: Vec<String> = (1..=n).map(|j| format!("X{j}")).collect();
    let mut levels: Vec<Vec<SplitNode>> = Vec::with_capacity(n);
    for j in 1..=n {
        let a = vec![x_labels[j - 1].as_str()];
        let b: Vec<&str> = x_labels[j..].iter().map(|s| s.as_str()).collect();
        let parent_count = if j == 1 { 1 } else { levels[j - 2].len() };
        let mut nodes = Vec::with_capacity(parent_count * m);
        for parent_idx in 0..parent_count {
            let (parent_amps, parent_path): (&DVector<C64>, Vec<usize>) = if j == 1 {
                (root.amplitudes(), Vec::new())
            } else {
                let p = &levels[j - 2][parent_idx];
                (&p.state, p.path.clone())
            };
            let parent_state = PureState::new(parent_amps.clone(), &dims, &labels)
                .expect("children of a subnormalized state stay subnormalized");
            let parts = split_once(&parent_state, &a, &b, sigma_e, m, None)?;
            for (alpha, part) in parts.into_iter().enumerate() {
                let mut path = parent_path.clone();
                path.push(alpha);
                let norm_sq = part.state.norm_squared();
                let edge_entropy = if norm_sq <= ZERO_STATE_TOL * ZERO_STATE_TOL {
                    f64::INFINITY
                } else {
                    // H(X_j | X_{>j} E) of the child state
                    let mut head = vec![x_labels[j - 1].clone()];
                    head.extend(((j + 1)..=n).map(|i| format!("X{i}")));
                    head.extend(e_labels.iter().cloned());
                    let head_refs: Vec<&str> = head.iter().map(|s| s.as_str()).collect();
                    let child = PureState::new(part.state.clone(), &dims, &labels)
                        .expect("subnormalized");
                    let rho_head = child.reduced_density(&head_refs)?;
                    let tail_refs: Vec<&str> =
                        head_refs.iter().copied().skip(1).collect();
                    let rho_tail = rho_head.partial_trace(&tail_refs)?;
                    h_cond(&rho_head, &rho_tail)?
                };
                nodes.push(SplitNode {
                    path,
                    state: part.state,
                    q: part.q_ad,
                    edge_entropy,
                    norm_sq,
                });
            }
        }
        levels.push(nodes);
    }

    // leaf-side H(E)_{rho^{alpha^n}/sigma}
    let mut leaf_h_e = Vec::with_capacity(levels[n - 1].len());
    for leaf in &levels[n - 1] {
        if leaf.norm_sq <= ZERO_STATE_TOL * ZERO_STATE_TOL {
            leaf_h_e.push(f64::INFINITY);
        } else {
            let st = PureState::new(leaf.state.clone(), &dims, &labels).expect("subnormalized");
            let rho_e_leaf = st.reduced_density(&e_refs)?;
            leaf_h_e.push(h_cond(&rho_e_leaf, sigma_e)?);
        }
    }

    Ok(SplitTree {
        root,
        sigma_e: sigma_e.clone(),
        m,
        n,
        x_dim,
        alphabet_bits: (x_dim as f64).log2(),
        levels,
        leaf_h_e,
        h_root,
        h_e_root,
    })
}

/// Per-path verification report for a tree-level theorem.
#[derive(Debug, Serialize)]
pub struct TheoremReport {
    pub checks: Vec<Check>,
    /// Smallest observed slack (observed − bound) over all checks.
    pub worst_slack: f64,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn from_checks(checks: Vec<Check>) -> Self {
        let worst_slack = checks
            .iter()
            .map(|c| c.observed - c.bound)
            .fold(f64::INFINITY, f64::min);
        TheoremReport {
            checks,
            worst_slack,
        }
    }
}

/// Verifies, for every leaf path, that the telescoped edge entropies plus the
/// leaf's E-entropy dominate the root entropy up to `n log2|X| / m`.
pub fn splitting_theorem_check(tree: &SplitTree) -> TheoremReport {
    let bound = tree.h_root - tree.n as f64 * tree.alphabet_bits / tree.m as f64;
    let all: Vec<usize> = (1..=tree.n).collect();
    let mut checks = Vec::with_capacity(tree.leaf_count());
    for leaf in 0..tree.leaf_count() {
        let path = index_to_path(leaf, tree.m, tree.n);
        let observed = tree.path_weight(&all, &path);
        checks.push(Check {
            name: format!("splitting path {path:?}"),
            bound,
            observed,
            pass: observed >= bound - 1e-8,
        });
    }
    TheoremReport::from_checks(checks)
}

/// The set of λ-good leaf paths for a block subset S (1-based indices).
#[derive(Debug, Clone)]
pub struct GoodSet {
    pub lambda: f64,
    pub subset_s: Vec<usize>,
    pub members: Vec<usize>,
    pub shape: (usize, usize),
}

pub fn lambda_good_set(tree: &SplitTree, subset_s: &[usize], lambda: f64) -> GoodSet {
    let threshold = lambda * subset_s.len() as f64 * tree.alphabet_bits;
    let members = (0..tree.leaf_count())
        .filter(|&leaf| {
            let path = index_to_path(leaf, tree.m, tree.n);
            tree.path_weight(subset_s, &path) >= threshold
        })
        .collect();
    GoodSet {
        lambda,
        subset_s: subset_s.to_vec(),
        members,
        shape: (tree.m, tree.n),
    }
}

impl GoodSet {
    pub fn omega_weight(&self, tree: &SplitTree) -> f64 {
        self.members.iter().map(|&l| tree.omega(l)).sum()
    }
}

/// A recombined state with its per-node intermediate states.
pub struct Recombination {
    pub amps: DVector<C64>,
    pub dims: Vec<usize>,
    pub labels: Vec<String>,
    /// `levels[j-1][idx]` is the intermediate recombined vector at path
    /// `alpha^j` (zero vector where no good leaf passes through).
    pub intermediates: Vec<Vec<DVector<C64>>>,
    pub omega_gamma: f64,
    /// Worst deviation of the recursion `Q^{alpha^j} psi-hat^{alpha^{j-1}} =
    /// psi-hat^{alpha^j}` over all nodes.
    pub recursion_residual: f64,
    /// Exact `½‖rho_bar − rho‖₁` on the full purified space.
    pub distance: f64,
    /// The bound `sqrt(1 − omega(Γ))`.
    pub distance_bound: f64,
}

impl Recombination {
    /// Marginal of the recombined state on the given subsystems.
    pub fn density_on(&self, keep: &[&str]) -> Result<HermitianOperator, OperatorError> {
        let st = PureState::new(self.amps.clone(), &self.dims, &self.labels)?;
        st.reduced_density(keep)
    }
}

/// Exact trace distance between (sub)normalized pure-state densities,
/// computed inside the two-dimensional span of the vectors.
pub fn pure_trace_distance(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    let na2 = a.norm_squared();
    if na2 <= f64::MIN_POSITIVE {
        return 0.5 * b.norm_squared();
    }
    let na = na2.sqrt();
    let e1 = a / Complex::new(na, 0.0);
    let c1 = e1.dotc(b);
    let res = b - &e1 * c1;
    let c2 = res.norm();
    // difference matrix in the {e1, e2} basis
    let m11 = na2 - c1.norm_sqr();
    let m12 = -c1 * Complex::new(c2, 0.0);
    let m22 = -c2 * c2;
    let tr = m11 + m22;
    let det = m11 * m22 - m12.norm_sqr();
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    0.5 * (l1.abs() + l2.abs())
}

/// Sums the good leaves back together, tracking every intermediate state and
/// verifying the recursion and the gentle-measurement distance bound.
pub fn recombine(tree: &SplitTree, good: &GoodSet) -> Result<Recombination, SplittingError> {
    if good.shape != (tree.m, tree.n) {
        return Err(SplittingError::ForeignGoodSet);
    }
    let dims = tree.root.dims().to_vec();
    let labels = owned_labels(&tree.root.labels());
    let d = tree.root.amplitudes().len();
    let member_flags: Vec<bool> = {
        let mut f = vec![false; tree.leaf_count()];
        for &l in &good.members {
            f[l] = true;
        }
        f
    };

    // leaves first, then sum children upward
    let mut intermediates: Vec<Vec<DVector<C64>>> = vec![Vec::new(); tree.n];
    intermediates[tree.n - 1] = (0..tree.leaf_count())
        .map(|leaf| {
            if member_flags[leaf] {
                tree.leaves()[leaf].state.clone()
            } else {
                DVector::zeros(d)
            }
        })
        .collect();
    for j in (1..tree.n).rev() {
        let count = tree.level(j).len();
        intermediates[j - 1] = (0..count)
            .map(|idx| {
                let mut acc = DVector::<C64>::zeros(d);
                for child in 0..tree.m {
                    acc += &intermediates[j][idx * tree.m + child];
                }
                acc
            })
            .collect();
    }
    let mut amps = DVector::<C64>::zeros(d);
    for idx in 0..tree.level(1).len() {
        amps += &intermediates[0][idx];
    }

    // recursion residual: Q^{alpha^j} psi-hat^{alpha^{j-1}} = psi-hat^{alpha^j}
    let mut recursion_residual = 0.0f64;
    for j in 1..=tree.n {
        for (idx, node) in tree.level(j).iter().enumerate() {
            let parent = if j == 1 {
                &amps
            } else {
                &intermediates[j - 2][idx / tree.m]
            };
            let projected = node.q.apply(parent, &dims, &labels)?;
            let diff = (&projected - &intermediates[j - 1][idx]).norm();
            recursion_residual = recursion_residual.max(diff);
        }
    }

    let omega_gamma = good.omega_weight(tree);
    let distance = pure_trace_distance(tree.root.amplitudes(), &amps);
    let distance_bound = (1.0 - omega_gamma).max(0.0).sqrt();
    Ok(Recombination {
        amps,
        dims,
        labels,
        intermediates,
        omega_gamma,
        recursion_residual,
        distance,
        distance_bound,
    })
}

/// Conditional entropy `H(X_A | E)_{state/sigma}` of a raw vector on the
/// tree's space, where `blocks` are 1-based block indices (empty = E only).
pub fn vector_block_entropy(
    tree: &SplitTree,
    amps: &DVector<C64>,
    blocks: &[usize],
) -> Result<f64, SplittingError> {
    let dims = tree.root.dims().to_vec();
    let labels = owned_labels(&tree.root.labels());
    if amps.norm() <= ZERO_STATE_TOL {
        return Ok(f64::INFINITY);
    }
    let st = PureState::new(amps.clone(), &dims, &labels).expect("subnormalized");
    let mut keep: Vec<String> = blocks.iter().map(|j| format!("X{j}")).collect();
    keep.extend(tree.sigma_e.labels().iter().map(|s| s.to_string()));
    let keep_refs: Vec<&str> = keep.iter().map(|s| s.as_str()).collect();
    let rho = st.reduced_density(&keep_refs)?;
    Ok(h_cond(&rho, &tree.sigma_e)?)
}

/// Verifies the recombining bounds and returns the certificate carried by
/// the recombined state: entropy rate at least `lambda − 2n log2 m /
/// (|S| log2|X|)` on the sampled blocks, no loss on the E side, and distance
/// at most `sqrt(1 − omega(Γ))`.
pub fn recombining_theorem_check(
    tree: &SplitTree,
    good: &GoodSet,
) -> Result<(EntropyCertificate, TheoremReport), SplittingError> {
    let rec = recombine(tree, good)?;
    let s_bits = good.subset_s.len() as f64 * tree.alphabet_bits;
    let h_xs = vector_block_entropy(tree, &rec.amps, &good.subset_s)?;
    let rate_bound = good.lambda - 2.0 * tree.n as f64 * (tree.m as f64).log2() / s_bits;
    let h_e_bar = vector_block_entropy(tree, &rec.amps, &[])?;

    let mut checks = vec![
        Check {
            name: "recombined entropy rate".into(),
            bound: rate_bound,
            observed: h_xs / s_bits,
            pass: h_xs / s_bits >= rate_bound - 1e-8,
        },
        Check {
            name: "E-side entropy preserved".into(),
            bound: tree.h_e_root,
            observed: h_e_bar,
            pass: h_e_bar >= tree.h_e_root - 1e-8,
        },
        Check {
            name: "distance within sqrt(1 - omega)".into(),
            bound: rec.distance_bound,
            observed: rec.distance,
            pass: rec.distance <= rec.distance_bound + 1e-8,
        },
        Check {
            name: "recombination recursion".into(),
            bound: 1e-8,
            observed: rec.recursion_residual,
            pass: rec.recursion_residual <= 1e-8,
        },
    ];
    // certificate for downstream smoothing
    let mut keep: Vec<String> = good.subset_s.iter().map(|j| format!("X{j}")).collect();
    keep.extend(tree.sigma_e.labels().iter().map(|s| s.to_string()));
    let keep_refs: Vec<&str> = keep.iter().map(|s| s.as_str()).collect();
    let witness = rec.density_on(&keep_refs)?;
    let cert = EntropyCertificate {
        value: h_xs,
        sigma: tree.sigma_e.clone(),
        smoothing: rec.distance,
        witness_state: Some(witness),
    };
    checks.push(Check {
        name: "smoothing within bound".into(),
        bound: rec.distance_bound,
        observed: cert.smoothing,
        pass: cert.smoothing <= rec.distance_bound + 1e-8,
    });
    Ok((cert, TheoremReport::from_checks(checks)))
}

/// `X_{>j ∩ S}` as 1-based block indices.
fn tail_in_s(subset_s: &[usize], j: usize, n: usize) -> Vec<usize> {
    (j + 1..=n).filter(|i| subset_s.contains(i)).collect()
}

/// Value of the intermediate tree `T_j` under the subadditive weighting of
/// the recombined states:
/// `min_{alpha^j} [ H(X_{>j∩S}|E) + sum_{i<=j, i in S} H(X_i|X_{>i∩S}E) ]`.
/// `j = 0` gives `H(X_S|E)` of the fully recombined state; `j = n` is the
/// leaf-level weighting.
pub fn intermediate_tree_value(
    tree: &SplitTree,
    rec: &Recombination,
    subset_s: &[usize],
    j: usize,
) -> Result<f64, SplittingError> {
    let node_vec = |lvl: usize, idx: usize| -> &DVector<C64> {
        if lvl == 0 {
            &rec.amps
        } else {
            &rec.intermediates[lvl - 1][idx]
        }
    };
    let count = if j == 0 {
        1
    } else {
        tree.level(j).len()
    };
    let mut best = f64::INFINITY;
    for idx in 0..count {
        let mut total = 0.0f64;
        // conditional tail term at level j
        let tail = tail_in_s(subset_s, j, tree.n);
        let v = node_vec(j, idx);
        total += block_cond_entropy(tree, v, &tail)?;
        // edge terms along the path for i <= j, i in S
        if j > 0 {
            let path = index_to_path(idx, tree.m, j);
            for i in 1..=j {
                if !subset_s.contains(&i) {
                    continue;
                }
                let anc_idx = path_to_index(&path[..i], tree.m);
                let anc = node_vec(i, anc_idx);
                let tail_i = tail_in_s(subset_s, i, tree.n);
                total += single_block_cond_entropy(tree, anc, i, &tail_i)?;
            }
        }
        best = best.min(total);
    }
    Ok(best)
}

/// `H(X_blocks | E)_{v/sigma}`, blocks possibly empty.
fn block_cond_entropy(
    tree: &SplitTree,
    v: &DVector<C64>,
    blocks: &[usize],
) -> Result<f64, SplittingError> {
    vector_block_entropy(tree, v, blocks)
}

/// `H(X_i | X_tail E)_v` with sigma equal to the state's own marginal.
fn single_block_cond_entropy(
    tree: &SplitTree,
    v: &DVector<C64>,
    i: usize,
    tail: &[usize],
) -> Result<f64, SplittingError> {
    if v.norm() <= ZERO_STATE_TOL {
        return Ok(f64::INFINITY);
    }
    let dims = tree.root.dims().to_vec();
    let labels = owned_labels(&tree.root.labels());
    let st = PureState::new(v.clone(), &dims, &labels).expect("subnormalized");
    let mut keep: Vec<String> = vec![format!("X{i}")];
    keep.extend(tail.iter().map(|t| format!("X{t}")));
    keep.extend(tree.sigma_e.labels().iter().map(|s| s.to_string()));
    let keep_refs: Vec<&str> = keep.iter().map(|s| s.as_str()).collect();
    let rho = st.reduced_density(&keep_refs)?;
    let cond_refs: Vec<&str> = keep_refs.iter().copied().skip(1).collect();
    let rho_tail = rho.partial_trace(&cond_refs)?;
    Ok(h_cond(&rho, &rho_tail)?)
}

/// Leaf-level weighting `v̂_S`: E-entropy of the recombined leaf plus the
/// plain (non-subadditive) edge entropies of the recombined ancestors.
pub fn recombined_leaf_weighting(
    tree: &SplitTree,
    rec: &Recombination,
    subset_s: &[usize],
) -> Result<f64, SplittingError> {
    let mut best = f64::INFINITY;
    for leaf in 0..tree.leaf_count() {
        let path = index_to_path(leaf, tree.m, tree.n);
        let mut total = vector_block_entropy(tree, &rec.intermediates[tree.n - 1][leaf], &[])?;
        for &j in subset_s {
            let idx = path_to_index(&path[..j], tree.m);
            let v = &rec.intermediates[j - 1][idx];
            let tail: Vec<usize> = (j + 1..=tree.n).collect();
            total += single_block_cond_entropy(tree, v, j, &tail)?;
        }
        best = best.min(total);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_block_cq, random_density, random_pure, test_rng};

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    }

    #[test]
    fn split_once_m1_reproduces_state() {
        let mut rng = test_rng(50);
        let psi = random_pure(&mut rng, &[2, 2, 2, 2], &["A", "B", "C", "D"]);
        let sigma_c = random_density(&mut rng, &[2], &["C"]);
        let parts = split_once(&psi, &["A"], &["B"], &sigma_c, 1, None).unwrap();
        assert_eq!(parts.len(), 1);
        let diff = (&parts[0].state - psi.amplitudes()).norm();
        assert!(diff < 1e-9, "m=1 split should reproduce the state: {diff}");
    }

    #[test]
    fn split_once_full_checks_random_states() {
        let mut rng = test_rng(51);
        for trial in 0..10 {
            let psi = random_pure(&mut rng, &[2, 2, 2, 2], &["A", "B", "C", "D"]);
            let sigma_c = if trial % 2 == 0 {
                psi.reduced_density(&["C"]).unwrap()
            } else {
                random_density(&mut rng, &[2], &["C"])
            };
            let m = 3;
            let parts = split_once(&psi, &["A"], &["B"], &sigma_c, m, None).unwrap();

            // (a) resolution of the state
            let mut sum = DVector::<C64>::zeros(psi.amplitudes().len());
            for p in &parts {
                sum += &p.state;
            }
            assert!((sum - psi.amplitudes()).norm() < 1e-8);

            // orthogonality of siblings
            for i in 0..m {
                for j in (i + 1)..m {
                    let ov = parts[i]
                        .state
                        .dotc(&parts[j].state)
                        .norm();
                    assert!(ov < 1e-9, "siblings {i},{j} overlap {ov}");
                }
            }

            // grid endpoints
            let rho_abc = psi.reduced_density(&["A", "B", "C"]).unwrap();
            let rho_bc = psi.reduced_density(&["B", "C"]).unwrap();
            let h_ab_c = h_cond(&rho_abc, &sigma_c).unwrap();
            let h_a_bc = h_cond(&rho_abc, &rho_bc).unwrap();
            let h0 = h_cond(&rho_bc, &sigma_c).unwrap();
            let delta = (h_ab_c - h_a_bc - h0).max(0.0);

            let dims = psi.dims().to_vec();
            let labels: Vec<String> = psi.labels().iter().map(|s| s.to_string()).collect();
            for (alpha, part) in parts.iter().enumerate() {
                let h_alpha = h0 + (alpha + 1) as f64 * delta / m as f64;
                let h_alpha_prev = h0 + alpha as f64 * delta / m as f64;
                let norm = part.state.norm();
                if norm <= ZERO_STATE_TOL {
                    continue;
                }
                let child = PureState::new(part.state.clone(), &dims, &labels).unwrap();
                let c_abc = child.reduced_density(&["A", "B", "C"]).unwrap();
                let c_bc = child.reduced_density(&["B", "C"]).unwrap();
                // (b) H(A|BC)_{rho^alpha} >= H(AB|C)_{rho/sigma} - h_alpha
                let lhs = h_cond(&c_abc, &c_bc).unwrap();
                assert!(
                    lhs >= h_ab_c - h_alpha - 1e-8,
                    "splitABC failed at alpha={alpha}: {lhs} < {}",
                    h_ab_c - h_alpha
                );
                // (c) H(B|C)_{rho^alpha/sigma} >= h_{alpha-1}
                let lhs2 = h_cond(&c_bc, &sigma_c).unwrap();
                assert!(
                    lhs2 >= h_alpha_prev - 1e-8,
                    "splitBC failed at alpha={alpha}: {lhs2} < {h_alpha_prev}"
                );
                // (d) both expressions for the split state agree
                let alt = split_part_alternative(&psi, part, &sigma_c).unwrap();
                assert!(
                    (&alt - &part.state).norm() < 1e-8,
                    "alternative expression deviates at alpha={alpha}"
                );
            }
        }
    }

    #[test]
    fn split_once_rejects_bad_grids() {
        let mut rng = test_rng(52);
        let psi = random_pure(&mut rng, &[2, 2, 2, 2], &["A", "B", "C", "D"]);
        let sigma_c = random_density(&mut rng, &[2], &["C"]);
        let bad = vec![0.0, -1.0, 0.5];
        assert!(matches!(
            split_once(&psi, &["A"], &["B"], &sigma_c, 2, Some(&bad)),
            Err(SplittingError::BadGrid(_))
        ));
        assert!(matches!(
            split_once(&psi, &["A"], &["B"], &sigma_c, 2, Some(&[0.0, 0.5, 9.0])),
            Err(SplittingError::BadGrid(_))
        ));
        assert!(split_once(&psi, &[], &["B"], &sigma_c, 2, None).is_err());
    }

    #[test]
    fn classical_input_stays_classical() {
        // classical on A and B: mixture of computational basis states
        let mut rng = test_rng(53);
        let mut amps = DVector::<C64>::zeros(16);
        // |a b c d> superposition classical in a,b after tracing: build a
        // state sum_ab sqrt(p_ab) |a>|b>|phi_ab>_{CD}
        for a in 0..2usize {
            for b in 0..2usize {
                let p: f64 = rand::Rng::gen_range(&mut rng, 0.05..1.0);
                let phi = rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU);
                let c_idx = (a + b) % 2;
                let d_idx = a;
                let flat = ((a * 2 + b) * 2 + c_idx) * 2 + d_idx;
                amps[flat] = Complex::from_polar(p.sqrt(), phi);
            }
        }
        let n = amps.norm();
        let psi = PureState::new(amps / Complex::new(n, 0.0), &[2, 2, 2, 2], &["A", "B", "C", "D"])
            .unwrap();
        let sigma_c = psi.reduced_density(&["C"]).unwrap();
        let parts = split_once(&psi, &["A"], &["B"], &sigma_c, 2, None).unwrap();
        for part in &parts {
            if part.state.norm() <= ZERO_STATE_TOL {
                continue;
            }
            let dims = psi.dims().to_vec();
            let labels: Vec<String> = psi.labels().iter().map(|s| s.to_string()).collect();
            let child = PureState::new(part.state.clone(), &dims, &labels).unwrap();
            let rho_ab = child.reduced_density(&["A", "B"]).unwrap();
            // off-diagonal blocks in the AB computational basis must vanish
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert!(
                            rho_ab.matrix()[(i, j)].norm() < 1e-9,
                            "classicality broken at ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn tree_invariants_small_instance() {
        let mut rng = test_rng(54);
        let cq = random_block_cq(&mut rng, 3, 2, 2);
        let rho = cq.materialize().unwrap();
        let sigma_e = rho.partial_trace(&["E"]).unwrap();
        let tree = build_split_tree(&cq, &sigma_e, 2).unwrap();
        assert_eq!(tree.leaf_count(), 8);

        // leaves resolve the root
        let mut sum = DVector::<C64>::zeros(tree.root().amplitudes().len());
        for leaf in tree.leaves() {
            sum += &leaf.state;
        }
        assert!((sum - tree.root().amplitudes()).norm() < 1e-8);

        // omega sums to the trace
        assert_close(tree.omega_total(), 1.0, 1e-8, "omega total");

        // per-level orthogonality via the Gram matrix
        for j in 1..=tree.n {
            let nodes = tree.level(j);
            for x in 0..nodes.len() {
                for y in (x + 1)..nodes.len() {
                    let ov = nodes[x].state.dotc(&nodes[y].state).norm();
                    assert!(ov < 1e-9, "level {j} nodes {x},{y} overlap {ov}");
                }
            }
        }

        // single projection from the root reproduces each node
        let dims = tree.root().dims().to_vec();
        let labels: Vec<String> = tree.root().labels().iter().map(|s| s.to_string()).collect();
        for j in 1..=tree.n {
            for node in tree.level(j) {
                let direct = node
                    .q
                    .apply(tree.root().amplitudes(), &dims, &labels)
                    .unwrap();
                assert!(
                    (&direct - &node.state).norm() < 1e-8,
                    "single-projection property failed at level {j} path {:?}",
                    node.path
                );
            }
        }

        // E-side entropy never drops below the root's under splitting
        for leaf in 0..tree.leaf_count() {
            assert!(tree.leaf_h_e(leaf) >= tree.h_e_root - 1e-8);
        }

        // projector refinement along each path
        for leaf in 0..tree.leaf_count() {
            let path = index_to_path(leaf, tree.m, tree.n);
            for j in 2..=tree.n {
                let child = tree.node(j, &path[..j]);
                let parent = tree.node(j - 1, &path[..j - 1]);
                // Q_child applied after Q_parent equals Q_child on the root
                let a = child
                    .q
                    .apply(tree.root().amplitudes(), &dims, &labels)
                    .unwrap();
                let b_inner = parent
                    .q
                    .apply(tree.root().amplitudes(), &dims, &labels)
                    .unwrap();
                let b = child.q.apply(&b_inner, &dims, &labels).unwrap();
                assert!((a - b).norm() < 1e-8, "refinement failed at {path:?} j={j}");
            }
        }
    }

    #[test]
    fn splitting_theorem_on_random_instance() {
        let mut rng = test_rng(55);
        let cq = random_block_cq(&mut rng, 3, 2, 2);
        let rho = cq.materialize().unwrap();
        let sigma_e = rho.partial_trace(&["E"]).unwrap();
        for m in [1usize, 2] {
            let tree = build_split_tree(&cq, &sigma_e, m).unwrap();
            let report = splitting_theorem_check(&tree);
            assert!(report.all_pass(), "worst slack {}", report.worst_slack);
        }
    }

    #[test]
    fn good_set_extremes() {
        let mut rng = test_rng(56);
        let cq = random_block_cq(&mut rng, 2, 2, 2);
        let rho = cq.materialize().unwrap();
        let sigma_e = rho.partial_trace(&["E"]).unwrap();
        let tree = build_split_tree(&cq, &sigma_e, 2).unwrap();
        let all = lambda_good_set(&tree, &[1, 2], -1e6);
        assert_eq!(all.members.len(), tree.leaf_count());
        let none = lambda_good_set(&tree, &[1, 2], 1e6);
        for &leaf in &none.members {
            assert!(tree.omega(leaf) <= 1e-12, "only vanished leaves can pass");
        }
    }

    #[test]
    fn recombine_all_paths_gives_back_state() {
        let mut rng = test_rng(57);
        let cq = random_block_cq(&mut rng, 2, 2, 2);
        let rho = cq.materialize().unwrap();
        let sigma_e = rho.partial_trace(&["E"]).unwrap();
        let tree = build_split_tree(&cq, &sigma_e, 2).unwrap();
        let all = lambda_good_set(&tree, &[1, 2], -1e6);
        let rec = recombine(&tree, &all).unwrap();
        assert!(rec.distance < 1e-8);
        assert!(rec.recursion_residual < 1e-8);
        assert_close(rec.omega_gamma, 1.0, 1e-8, "omega(all)");

        let empty = GoodSet {
            lambda: 1e9,
            subset_s: vec![1, 2],
            members: vec![],
            shape: (tree.m, tree.n),
        };
        let rec0 = recombine(&tree, &empty).unwrap();
        assert!(rec0.amps.norm() < 1e-12);
        assert!(rec0.distance <= 1.0 + 1e-12 && rec0.distance_bound >= 1.0 - 1e-12);
    }

    #[test]
    fn recombining_theorem_random_instance() {
        let mut rng = test_rng(58);
        let cq = random_block_cq(&mut rng, 3, 2, 2);
        let rho = cq.materialize().unwrap();
        let sigma_e = rho.partial_trace(&["E"]).unwrap();
        let tree = build_split_tree(&cq, &sigma_e, 2).unwrap();
        for subset in [vec![1usize, 3], vec![2], vec![1, 2, 3]] {
            // lambda low enough that a healthy share of leaves is good
            let lambda = 0.2;
            let good = lambda_good_set(&tree, &subset, lambda);
            let (cert, report) = recombining_theorem_check(&tree, &good).unwrap();
            assert!(report.all_pass(), "subset {subset:?}: {:?}", report.checks);
            // the certificate's witness satisfies its inequality
            let mut keep: Vec<String> = subset.iter().map(|j| format!("X{j}")).collect();
            keep.push("E".into());
            let keep_refs: Vec<&str> = keep.iter().map(|s| s.as_str()).collect();
            let marginal = {
                let st = tree.root().reduced_density(&keep_refs).unwrap();
                st
            };
            let check = cert.verify(&marginal).unwrap();
            assert!(check.operator_slack > -1e-9);
            assert!(check.distance_slack > -1e-9);
        }
    }

    #[test]
    fn tree_value_chain_and_step_recombination() {
        let mut rng = test_rng(59);
        let cq = random_block_cq(&mut rng, 3, 2, 2);
        let rho = cq.materialize().unwrap();
        let sigma_e = rho.partial_trace(&["E"]).unwrap();
        let tree = build_split_tree(&cq, &sigma_e, 2).unwrap();
        let subset = vec![1usize, 3];
        let good = lambda_good_set(&tree, &subset, 0.25);
        let rec = recombine(&tree, &good).unwrap();

        // w-hat chain: each substitution step loses at most 2 log2 m
        let log2m = (tree.m as f64).log2();
        let mut values = Vec::new();
        for j in (0..=tree.n).rev() {
            values.push(intermediate_tree_value(&tree, &rec, &subset, j).unwrap());
        }
        // values[k] is T_{n-k}; check T_{j-1} >= T_j - 2 log m
        for w in values.windows(2) {
            assert!(
                w[1] >= w[0] - 2.0 * log2m - 1e-8,
                "intermediate tree chain violated: {} -> {}",
                w[0],
                w[1]
            );
        }
        // and cumulatively: T_0 >= T_n - 2 n log m
        let t_n = values[0];
        let t_0 = *values.last().unwrap();
        assert!(t_0 >= t_n - 2.0 * tree.n as f64 * log2m - 1e-8);

        // w-hat >= v-hat at the leaf level
        let v_n = recombined_leaf_weighting(&tree, &rec, &subset).unwrap();
        assert!(t_n >= v_n - 1e-8, "subadditive weighting must dominate");

        // step recombination at each level and each ancestor, A = subset
        for j in 1..=tree.n {
            let parent_count = if j == 1 { 1 } else { tree.level(j - 1).len() };
            for idx in 0..parent_count {
                let parent = if j == 1 {
                    rec.amps.clone()
                } else {
                    rec.intermediates[j - 2][idx].clone()
                };
                let mut min_child = f64::INFINITY;
                for child in 0..tree.m {
                    let cv = &rec.intermediates[j - 1][idx * tree.m + child];
                    min_child =
                        min_child.min(vector_block_entropy(&tree, cv, &subset).unwrap());
                }
                let parent_h = vector_block_entropy(&tree, &parent, &subset).unwrap();
                assert!(
                    min_child - 2.0 * log2m <= parent_h + 1e-8,
                    "step recombination violated at level {j}"
                );
            }
        }

        // recombined-node edge entropies dominate the split ones
        for j in 1..=tree.n {
            for (idx, node) in tree.level(j).iter().enumerate() {
                let tail: Vec<usize> = (j + 1..=tree.n).collect();
                let rec_h =
                    single_block_cond_entropy(&tree, &rec.intermediates[j - 1][idx], j, &tail)
                        .unwrap();
                assert!(
                    rec_h >= node.edge_entropy - 1e-8
                        || (rec_h.is_infinite() && node.edge_entropy.is_infinite()),
                    "recombined node entropy dropped at level {j} path {:?}",
                    node.path
                );
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = test_rng(60);
        let cq = random_block_cq(&mut rng, 3, 2, 2);
        assert!(matches!(
            build_split_tree(&cq, &random_density(&mut rng, &[2], &["E"]), 17),
            Err(SplittingError::BudgetExceeded { .. })
        ));
    }
}
