//! Deterministic random instance generators for the verification suites.
//!
//! All randomness flows from an explicit 64-bit seed through ChaCha12,
//! so identical seeds reproduce identical instances on every platform.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::entropy::CQState;
use crate::operator::{C64, HermitianOperator, PureState};

pub type SeededRng = ChaCha12Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the experiment seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(any(test, feature = "internal-testing"))]
pub fn test_rng(seed: u64) -> SeededRng {
    seeded_rng(seed)
}

fn gaussian_pair(rng: &mut SeededRng) -> (f64, f64) {
    // Box-Muller; avoids pulling in rand_distr for two lines of math.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (-2.0 * u1.ln()).sqrt();
    (r * u2.cos(), r * u2.sin())
}

pub fn random_complex_gaussian(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let (re, im) = gaussian_pair(rng);
        Complex::new(re, im)
    })
}

pub fn random_pure<S: Into<String> + Clone>(
    rng: &mut SeededRng,
    dims: &[usize],
    labels: &[S],
) -> PureState {
    let d: usize = dims.iter().product();
    let g = random_complex_gaussian(rng, d, 1);
    let v = DVector::from_column_slice(g.as_slice());
    let n = v.norm();
    PureState::new(v / Complex::new(n, 0.0), dims, labels).expect("normalized state")
}

/// Ginibre-induced random density operator, trace one.
pub fn random_density<S: Into<String> + Clone>(
    rng: &mut SeededRng,
    dims: &[usize],
    labels: &[S],
) -> HermitianOperator {
    let d: usize = dims.iter().product();
    let g = random_complex_gaussian(rng, d, d);
    let psd = &g * g.adjoint();
    let tr: f64 = psd.diagonal().iter().map(|z| z.re).sum();
    let mat = psd / Complex::new(tr, 0.0);
    HermitianOperator::new(mat, dims, labels).expect("normalized Ginibre state")
}

/// Random PSD operator with unit largest eigenvalue (not a state).
pub fn random_psd<S: Into<String> + Clone>(
    rng: &mut SeededRng,
    dims: &[usize],
    labels: &[S],
) -> HermitianOperator {
    let d: usize = dims.iter().product();
    let g = random_complex_gaussian(rng, d, d);
    let psd = &g * g.adjoint();
    let op = HermitianOperator::new(psd, dims, labels).expect("PSD construction");
    let top = op.max_eigenvalue().max(f64::MIN_POSITIVE);
    op.scaled(1.0 / top)
}

/// Random rank-`rank` projector.
pub fn random_projector<S: Into<String> + Clone>(
    rng: &mut SeededRng,
    dims: &[usize],
    labels: &[S],
    rank: usize,
) -> HermitianOperator {
    let d: usize = dims.iter().product();
    let rank = rank.min(d);
    let g = random_complex_gaussian(rng, d, rank);
    // orthonormalize columns
    let mut q = g;
    for k in 0..rank {
        for p in 0..k {
            let overlap = q.column(p).dotc(&q.column(k));
            let sub = q.column(p) * overlap;
            let col = q.column(k) - sub;
            q.set_column(k, &col);
        }
        let n = q.column(k).norm();
        let col = q.column(k) / Complex::new(n, 0.0);
        q.set_column(k, &col);
    }
    let proj = &q * q.adjoint();
    HermitianOperator::new(proj, dims, labels).expect("projector construction")
}

/// Random contraction `0 ⪯ K ⪯ id`.
pub fn random_contraction<S: Into<String> + Clone>(
    rng: &mut SeededRng,
    dims: &[usize],
    labels: &[S],
) -> HermitianOperator {
    let psd = random_psd(rng, dims, labels);
    // eigenvalues already in [0, 1] after normalization
    psd.scaled(rng.gen_range(0.1..1.0))
}

/// Random classical-quantum state with `symbols` classical values on a
/// `e_dim`-dimensional quantum side, trace one.
pub fn random_cq(rng: &mut SeededRng, symbols: usize, e_dim: usize) -> CQState {
    let mut probs: Vec<f64> = (0..symbols).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let cond_ops: Vec<HermitianOperator> = (0..symbols)
        .map(|_| random_density(rng, &[e_dim], &["E"]))
        .collect();
    let alphabet: Vec<String> = (0..symbols).map(|x| format!("x{x}")).collect();
    CQState::new(alphabet, probs, cond_ops).expect("valid cq state")
}

/// Random cq state on an n-fold classical register, each block over an
/// alphabet of size `x_dim`, quantum side of dimension `e_dim`.
pub fn random_block_cq(rng: &mut SeededRng, n: usize, x_dim: usize, e_dim: usize) -> CQState {
    let count = x_dim.pow(n as u32);
    let mut probs: Vec<f64> = (0..count).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let cond_ops: Vec<HermitianOperator> = (0..count)
        .map(|_| random_density(rng, &[e_dim], &["E"]))
        .collect();
    let alphabet: Vec<String> = (0..count).map(|x| format!("x{x}")).collect();
    CQState::with_block_structure(vec![x_dim; n], alphabet, probs, cond_ops)
        .expect("valid block cq state")
}
