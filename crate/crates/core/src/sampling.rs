//! Averaging samplers, parallel samplers, and the end-to-end parameter
//! calculators for min-entropy-rate preservation under sampling.
//!
//! Base conventions: the Hoeffding-type subset-sampler bound stays in
//! natural e; entropy-rate losses (kappa, Delta) are in log2. Each function
//! documents its base.

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::random::SeededRng;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("beta entries must lie in [0,1]; row {row} column {col} is {value}")]
    BetaOutOfRange { row: usize, col: usize, value: f64 },
    #[error("sample size r={r} must satisfy 0 < r <= n={n}")]
    BadSampleSize { r: usize, n: usize },
    #[error("kappa = {0} exceeds 0.15; the optimized-m form does not apply, pass m explicitly")]
    KappaTooLarge(f64),
    #[error("ones = {ones} exceeds population n = {n}")]
    BadOnes { ones: usize, n: usize },
}

/// Plain averaging-sampler parameters `(n, r, xi, eps)`. For the uniform
/// r-subset sampler, `eps = exp(-r xi^2 / 2)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub n: usize,
    pub r: usize,
    pub xi: f64,
    pub eps: f64,
}

impl SamplerSpec {
    /// The uniform r-subset sampler with its Hoeffding failure probability.
    pub fn subset(n: usize, r: usize, xi: f64) -> Result<Self, SamplingError> {
        if r == 0 || r > n {
            return Err(SamplingError::BadSampleSize { r, n });
        }
        Ok(SamplerSpec {
            n,
            r,
            xi,
            eps: subset_sampler_epsilon(r, xi),
        })
    }
}

/// Parallel-sampler parameters `(n, xi, delta, eps)`: with probability at
/// least `1 - eps` over the subset, the bad rows of any `[0,1]` matrix carry
/// weight below `delta`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParallelSpec {
    pub n: usize,
    pub xi: f64,
    pub delta: f64,
    pub eps: f64,
}

/// Failure probability `exp(-r xi^2 / 2)` of the uniform r-subset sampler.
/// Natural exponential.
pub fn subset_sampler_epsilon(r: usize, xi: f64) -> f64 {
    (-(r as f64) * xi * xi / 2.0).exp()
}

/// A plain sampler is a `(n, xi, sqrt(eps), sqrt(eps))`-parallel sampler.
pub fn parallel_from_plain(spec: &SamplerSpec) -> ParallelSpec {
    let root = spec.eps.sqrt();
    ParallelSpec {
        n: spec.n,
        xi: spec.xi,
        delta: root,
        eps: root,
    }
}

/// Exact probability, over uniform r-subsets of a 0/1 population with `ones`
/// ones, that the sample mean falls short of the population mean by more
/// than `xi`. Exact equality at the boundary does not count as a shortfall
/// (a zero-accuracy query against an all-ones population returns 0).
/// Hypergeometric summation in log space.
pub fn hypergeometric_tail(
    n: usize,
    ones: usize,
    r: usize,
    xi: f64,
) -> Result<f64, SamplingError> {
    if ones > n {
        return Err(SamplingError::BadOnes { ones, n });
    }
    if r == 0 || r > n {
        return Err(SamplingError::BadSampleSize { r, n });
    }
    // threshold: count k of ones in the sample with k/r < ones/n - xi,
    // resolved in exact integer-scaled form k*n < ones*r - xi*r*n
    let scale = (ones as f64) * (r as f64) - xi * (r as f64) * (n as f64);
    let tie_tol = 1e-12 * (r as f64) * (n as f64);
    let mut total = 0.0f64;
    let lo = r.saturating_sub(n - ones);
    for k in lo..=r.min(ones) {
        let lhs = (k as f64) * (n as f64);
        if lhs < scale - tie_tol {
            total += hypergeom_pmf(n, ones, r, k);
        }
    }
    Ok(total.min(1.0))
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn hypergeom_pmf(n: usize, ones: usize, r: usize, k: usize) -> f64 {
    if k > ones || r - k > n - ones {
        return 0.0;
    }
    (ln_binomial(ones, k) + ln_binomial(n - ones, r - k) - ln_binomial(n, r)).exp()
}

/// Rows of `beta` whose S-average falls short of their full average by at
/// least `xi`. Entries must lie in [0,1]: callers feeding entropies must
/// normalize by log2 of the alphabet size first.
pub fn bad_set(
    beta: &[Vec<f64>],
    subset_s: &[usize],
    xi: f64,
) -> Result<Vec<usize>, SamplingError> {
    for (row, values) in beta.iter().enumerate() {
        for (col, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(SamplingError::BetaOutOfRange { row, col, value: v });
            }
        }
    }
    let mut out = Vec::new();
    for (row, values) in beta.iter().enumerate() {
        let n = values.len() as f64;
        let full = values.iter().sum::<f64>() / n;
        let s_avg = subset_s.iter().map(|&i| values[i]).sum::<f64>() / subset_s.len() as f64;
        if s_avg <= full - xi {
            out.push(row);
        }
    }
    Ok(out)
}

/// The λ threshold of the sampling theorem:
/// `h_root/(n c) + (n-r) h_E / (r n c) - (1/m + xi)` with `c` the alphabet
/// size in bits.
pub fn sampling_theorem_lambda(
    h_root: f64,
    h_e: f64,
    n: usize,
    r: usize,
    alphabet_bits: f64,
    m: usize,
    xi: f64,
) -> f64 {
    let nf = n as f64;
    let rf = r as f64;
    h_root / (nf * alphabet_bits) + (nf - rf) * h_e / (rf * nf * alphabet_bits)
        - (1.0 / m as f64 + xi)
}

/// Smallest integer m in `[ln2/(2 kappa), 1/(2 kappa)]`, which guarantees
/// `1/m + 2 kappa log2 m <= 2 kappa log2(1/kappa)`. Requires
/// `kappa <= 0.15`; above that the interval may contain no integer.
pub fn choose_m(kappa: f64) -> Result<usize, SamplingError> {
    if !(kappa > 0.0) || kappa > 0.15 {
        return Err(SamplingError::KappaTooLarge(kappa));
    }
    let lo = std::f64::consts::LN_2 / (2.0 * kappa);
    let hi = 1.0 / (2.0 * kappa);
    let m = lo.ceil() as usize;
    debug_assert!((m as f64) <= hi + 1e-9);
    let _ = hi;
    Ok(m.max(1))
}

/// Inputs of the main rate-loss bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MainBoundParams {
    /// Number of blocks.
    pub n: usize,
    /// Sample size `|S|`.
    pub r: usize,
    /// Alphabet size in bits, `c = log2 |X|`.
    pub alphabet_bits: f64,
    /// Sampler accuracy.
    pub xi: f64,
    /// Theorem form: parallel-sampler `(delta, eps)`; corollary form: plain
    /// sampler `eps` with `delta` unused.
    pub delta: f64,
    pub eps: f64,
    /// Theorem form only; the corollary pins `theta = 2^{-xi n c}`.
    pub theta: f64,
    /// Smoothing of the input state's entropy.
    pub tau: f64,
}

impl MainBoundParams {
    pub fn kappa(&self) -> f64 {
        self.n as f64 / (self.r as f64 * self.alphabet_bits)
    }
}

/// Rate loss and output smoothing of the main theorem:
/// `Delta = xi + 2 log2(1/theta)/(n c) + 2 kappa log2(1/kappa)` and
/// smoothing `2 sqrt(delta) + eps + 2 theta + tau`.
pub fn main_bound_theorem(p: &MainBoundParams) -> Result<(f64, f64), SamplingError> {
    let kappa = p.kappa();
    if kappa > 0.15 {
        return Err(SamplingError::KappaTooLarge(kappa));
    }
    let nc = p.n as f64 * p.alphabet_bits;
    let delta_loss = p.xi + 2.0 * (1.0 / p.theta).log2() / nc + 2.0 * kappa * (1.0 / kappa).log2();
    let smoothing = 2.0 * p.delta.sqrt() + p.eps + 2.0 * p.theta + p.tau;
    Ok((delta_loss, smoothing))
}

/// Corollary form for a plain `(n, xi, eps)`-sampler:
/// `Delta = 3 xi + 2 kappa log2(1/kappa)` and
/// `eps' = 2·2^{-xi n c} + 3 eps^{1/4} + tau`.
pub fn main_bound_corollary(p: &MainBoundParams) -> Result<(f64, f64), SamplingError> {
    let kappa = p.kappa();
    if kappa > 0.15 {
        return Err(SamplingError::KappaTooLarge(kappa));
    }
    let nc = p.n as f64 * p.alphabet_bits;
    let delta_loss = 3.0 * p.xi + 2.0 * kappa * (1.0 / kappa).log2();
    let smoothing = 2.0 * 2f64.powf(-p.xi * nc) + 3.0 * p.eps.powf(0.25) + p.tau;
    Ok((delta_loss, smoothing))
}

/// Draws a uniform r-subset of [n] by a Fisher-Yates prefix on a
/// deterministic counter-based stream; returns sorted indices.
pub fn draw_subset(rng: &mut SeededRng, n: usize, r: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..r {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut s = pool[..r].to_vec();
    s.sort_unstable();
    s
}

/// Monte Carlo estimate of the one-sided deviation probability for the
/// first row of `beta` (single-row input) or of the expected bad-row weight
/// (multi-row input), over `trials` independently drawn r-subsets.
pub fn estimate_tail(
    beta: &[Vec<f64>],
    r: usize,
    xi: f64,
    trials: usize,
    seed: u64,
) -> Result<f64, SamplingError> {
    let n = beta.first().map(|row| row.len()).unwrap_or(0);
    if r == 0 || r > n {
        return Err(SamplingError::BadSampleSize { r, n });
    }
    let weight = 1.0 / beta.len() as f64;
    let mut acc = 0.0f64;
    for trial in 0..trials {
        let mut rng = crate::random::substream(seed, trial as u64);
        let subset = draw_subset(&mut rng, n, r);
        let bad = bad_set(beta, &subset, xi)?;
        acc += bad.len() as f64 * weight;
    }
    Ok(acc / trials as f64)
}

/// Exact binomial coefficient, arbitrary precision.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// All r-subsets of [n] in lexicographic order of their sorted tuples;
/// intended for exact small-n enumeration.
pub fn enumerate_subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..r).collect();
    if r == 0 || r > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        // advance
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - r {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..r {
            cur[j] = cur[j - 1] + 1;
        }
    }
}
