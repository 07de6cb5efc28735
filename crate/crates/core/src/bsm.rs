//! Bounded-storage-model sampling protocols: single-round block sampling,
//! recursive resampling composed into a single pass, parameter planning,
//! and end-to-end sample-and-hash key expansion.
//!
//! Lengths are restricted per round to `L = 2^{4k}` so the block size
//! `t = L^{3/4} / r` and block count `n = L / t = r L^{1/4}` are exact
//! integers (`r` must be a power of two); the planner truncates inputs to
//! the nearest valid length and reports the truncation. Seed bits are read
//! big-endian and reduced modulo the subset count, trading a recorded,
//! exactly-computed statistical bias for deterministic seed consumption.

use std::io::Read;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::extractable_length;
use crate::extractor::{privacy_amplify, BitString, ExtractorError, KeyMaterial, ToeplitzSeed};

#[derive(Debug, Error)]
pub enum BsmError {
    #[error("seed exhausted: needed {needed} more bits")]
    SeedExhausted { needed: u64 },
    #[error("subset index {index} out of range (< {count} required)")]
    IndexOutOfRange { index: BigUint, count: BigUint },
    #[error("invalid length {l_bits} bits: {reason}")]
    BadLength { l_bits: u64, reason: String },
    #[error("r = {0} must be a power of two, at least 16 (strict mode)")]
    BadR(usize),
    #[error("no feasible round count for r = {r} starting from 2^{exp} bits")]
    InfeasiblePlan { r: usize, exp: u32 },
    #[error("parameters give no extractable key (k = {k:.3} bits after loss)")]
    NoKey { k: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
}

/// Big-endian bit reader over seed bytes, with exact consumption tracking.
pub struct BitReader<'a> {
    bytes: &'a [u8],
    cursor: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, cursor: 0 }
    }

    pub fn consumed(&self) -> u64 {
        self.cursor
    }

    pub fn remaining(&self) -> u64 {
        (self.bytes.len() as u64 * 8).saturating_sub(self.cursor)
    }

    /// Reads `count` bits, most significant first, as a big integer.
    pub fn read_big(&mut self, count: u64) -> Result<BigUint, BsmError> {
        if count > self.remaining() {
            return Err(BsmError::SeedExhausted {
                needed: count - self.remaining(),
            });
        }
        let mut acc = BigUint::zero();
        for _ in 0..count {
            let byte = self.bytes[(self.cursor / 8) as usize];
            let bit = (byte >> (7 - (self.cursor % 8))) & 1;
            acc = (acc << 1u8) + BigUint::from(bit);
            self.cursor += 1;
        }
        Ok(acc)
    }
}

/// Exact binomial coefficient with a 64-bit population.
pub fn binomial_u64(n: u64, k: usize) -> BigUint {
    if (k as u64) > n {
        return BigUint::zero();
    }
    let k = (k as u64).min(n - k as u64) as usize;
    let mut acc = BigUint::one();
    for i in 0..k as u64 {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `ceil(log2 x)` for `x >= 1`.
pub fn ceil_log2(x: &BigUint) -> u64 {
    if x <= &BigUint::one() {
        return 0;
    }
    (x - BigUint::one()).bits()
}

/// The `index`-th r-subset of `[n]` in colexicographic order
/// (combinatorial number system): the subset `{c_1 < ... < c_r}` has rank
/// `sum_i C(c_i, i)`.
pub fn subset_unrank(index: &BigUint, n: u64, r: usize) -> Result<Vec<u64>, BsmError> {
    let count = binomial_u64(n, r);
    if index >= &count {
        return Err(BsmError::IndexOutOfRange {
            index: index.clone(),
            count,
        });
    }
    let mut remaining = index.clone();
    let mut out = vec![0u64; r];
    let mut upper = n; // exclusive bound for the next (largest-first) element
    for i in (1..=r).rev() {
        // largest c < upper with C(c, i) <= remaining
        let mut lo = (i - 1) as u64;
        let mut hi = upper - 1;
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if binomial_u64(mid, i) <= remaining {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        out[i - 1] = lo;
        remaining -= binomial_u64(lo, i);
        upper = lo;
    }
    Ok(out)
}

/// Inverse of [`subset_unrank`]: elements must be strictly increasing.
pub fn subset_rank(subset: &[u64]) -> BigUint {
    subset
        .iter()
        .enumerate()
        .map(|(i, &c)| binomial_u64(c, i + 1))
        .sum()
}

/// Options controlling validation strictness. Relaxed mode waives the
/// entropy-side requirement `L >= r^4` (and allows `r = n`), keeping only
/// the integrality constraints; the streaming machinery is unaffected.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampOptions {
    pub relaxed: bool,
}

/// Parameters of one sampling round over an `L`-bit string.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampParams {
    pub l_bits: u64,
    pub r: usize,
    pub t_bits: u64,
    pub n_blocks: u64,
    pub seed_bits: u64,
    /// Exact statistical distance of the modular-reduced subset index from
    /// uniform over all subsets.
    pub index_bias: f64,
}

impl SampParams {
    pub fn new(l_bits: u64, r: usize, opts: SampOptions) -> Result<Self, BsmError> {
        if r == 0 || !r.is_power_of_two() || (!opts.relaxed && r < 16) {
            return Err(BsmError::BadR(r));
        }
        if l_bits == 0 || !l_bits.is_power_of_two() {
            return Err(BsmError::BadLength {
                l_bits,
                reason: "length must be a power of two".into(),
            });
        }
        let a = l_bits.trailing_zeros();
        if a % 4 != 0 {
            return Err(BsmError::BadLength {
                l_bits,
                reason: "exponent must be a multiple of 4 so t and n are integers".into(),
            });
        }
        let k = a / 4;
        let j = r.trailing_zeros();
        if 3 * k < j + 3 {
            return Err(BsmError::BadLength {
                l_bits,
                reason: format!("block size 2^{} bits is below one byte", 3 * k as i64 - j as i64),
            });
        }
        let t_bits = 1u64 << (3 * k - j);
        let n_blocks = l_bits / t_bits;
        if (r as u64) > n_blocks {
            return Err(BsmError::BadLength {
                l_bits,
                reason: format!("r = {r} exceeds the block count {n_blocks}"),
            });
        }
        if !opts.relaxed {
            if k < j {
                return Err(BsmError::BadLength {
                    l_bits,
                    reason: format!("L = 2^{a} is below r^4 = 2^{}", 4 * j),
                });
            }
            if (r as u64) == n_blocks {
                return Err(BsmError::BadLength {
                    l_bits,
                    reason: "full sample r = n is only allowed in relaxed mode".into(),
                });
            }
        }
        let count = binomial_u64(n_blocks, r);
        let seed_bits = ceil_log2(&count);
        let index_bias = modular_reduction_bias(&count, seed_bits);
        Ok(SampParams {
            l_bits,
            r,
            t_bits,
            n_blocks,
            seed_bits,
            index_bias,
        })
    }

    pub fn output_bits(&self) -> u64 {
        self.t_bits * self.r as u64
    }
}

/// Exact total-variation distance from uniform of an `m`-bit string reduced
/// modulo `count`.
fn modular_reduction_bias(count: &BigUint, m_bits: u64) -> f64 {
    if count.is_one() || m_bits == 0 {
        return 0.0;
    }
    let q = BigUint::one() << m_bits;
    let k = &q % count; // residues getting the extra draw
    // TV = k (count - k) / (q count)
    let num = &k * (count - &k);
    let den = &q * count;
    ratio_to_f64(&num, &den)
}

fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits().saturating_sub(60);
    let n = (num >> shift).to_f64().unwrap_or(0.0);
    let d = (den >> shift).to_f64().unwrap_or(f64::MAX);
    n / d
}

/// Sorted, disjoint bit ranges in the source stream; each range is
/// byte-aligned by construction.
type Ranges = Vec<(u64, u64)>; // (start_bit, len_bits)

fn select_blocks(params: &SampParams, seed: &mut BitReader) -> Result<Vec<u64>, BsmError> {
    let raw = seed.read_big(params.seed_bits)?;
    let count = binomial_u64(params.n_blocks, params.r);
    let index = raw % &count;
    subset_unrank(&index, params.n_blocks, params.r)
}

/// Copies the given source ranges out of a sequential reader in one pass.
/// Ranges must be sorted, disjoint, and byte-aligned.
fn stream_ranges(reader: &mut impl Read, ranges: &Ranges) -> Result<Vec<u8>, BsmError> {
    let total_bytes: u64 = ranges.iter().map(|&(_, len)| len / 8).sum();
    let mut out = Vec::with_capacity(total_bytes as usize);
    let mut pos_bytes = 0u64;
    let mut scratch = vec![0u8; 1 << 16];
    for &(start_bit, len_bits) in ranges {
        let start = start_bit / 8;
        let len = len_bits / 8;
        let mut to_skip = start - pos_bytes;
        while to_skip > 0 {
            let chunk = to_skip.min(scratch.len() as u64) as usize;
            reader.read_exact(&mut scratch[..chunk])?;
            to_skip -= chunk as u64;
        }
        let at = out.len();
        out.resize(at + len as usize, 0);
        reader.read_exact(&mut out[at..])?;
        pos_bytes = start + len;
    }
    Ok(out)
}

/// Largest valid round length `2^{4k}` not exceeding `raw_bits`; zero when
/// the input is shorter than 16 bits.
pub fn valid_length_bits(raw_bits: u64) -> u64 {
    if raw_bits < 16 {
        return 0;
    }
    let a = 63 - raw_bits.leading_zeros() as u64;
    1u64 << (a - a % 4)
}

/// Single sampling round over a stream of exactly `l_bits` bits: consumes
/// `ceil(log2 C(n, r))` seed bits, picks the corresponding r-subset of
/// blocks, and returns their concatenation in ascending block order.
pub fn samp(
    reader: &mut impl Read,
    l_bits: u64,
    r: usize,
    seed: &mut BitReader,
    opts: SampOptions,
) -> Result<(Vec<u8>, SampParams), BsmError> {
    let params = SampParams::new(l_bits, r, opts)?;
    let blocks = select_blocks(&params, seed)?;
    let ranges: Ranges = blocks
        .iter()
        .map(|&b| (b * params.t_bits, params.t_bits))
        .collect();
    let out = stream_ranges(reader, &ranges)?;
    Ok((out, params))
}

/// Low-level sampling round with an explicit block partition. This is the
/// test-mode entry: it admits degenerate choices such as the full sample
/// `r = n`, which the spec-shaped block-size formula cannot reach.
pub fn samp_with_block_size(
    reader: &mut impl Read,
    t_bits: u64,
    n_blocks: u64,
    r: usize,
    seed: &mut BitReader,
) -> Result<Vec<u8>, BsmError> {
    if t_bits == 0 || t_bits % 8 != 0 {
        return Err(BsmError::BadLength {
            l_bits: t_bits,
            reason: "block size must be a positive multiple of 8 bits".into(),
        });
    }
    if r == 0 || (r as u64) > n_blocks {
        return Err(BsmError::BadR(r));
    }
    let count = binomial_u64(n_blocks, r);
    let seed_bits = ceil_log2(&count);
    let raw = seed.read_big(seed_bits)?;
    let index = raw % &count;
    let blocks = subset_unrank(&index, n_blocks, r)?;
    let ranges: Ranges = blocks.iter().map(|&b| (b * t_bits, t_bits)).collect();
    stream_ranges(reader, &ranges)
}

/// Working-set accounting for the streaming pipeline, in bits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampAccounting {
    pub seed_bits_used: u64,
    /// Sum of the per-round exact index biases.
    pub bias_bound: f64,
    /// Output buffer + range bookkeeping + skip scratch, at their maxima.
    pub peak_working_bits: u64,
}

/// Recursive sampling plan: per-round lengths as exponents (`L = 2^a`),
/// seed budget, and the analytic rate-loss and smoothing bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampPlan {
    pub r: usize,
    pub f: usize,
    /// Exponents of `L^(0) .. L^(f)`; `L^(i)` is the (possibly truncated)
    /// input of round i+1, `L^(f)` the final output length.
    pub length_exponents: Vec<u32>,
    /// Bits dropped from the raw input to reach `L^(0)`, if any.
    pub input_truncated_bits: Option<u64>,
    /// True when any intermediate round input was truncated to keep the
    /// exponent a multiple of 4.
    pub intermediate_truncation: bool,
    pub total_seed_bits: u64,
    /// False when the seed budget had to fall back to the `r log2 L`
    /// analytic bound because the binomial is astronomically large.
    pub seed_bits_exact: bool,
    /// `5 f log2(r) / r^{1/4}`.
    pub rate_loss_bound: f64,
    /// `5 f 2^{-sqrt(r)/8}`.
    pub gamma: f64,
    /// Set when the rate-loss bound is at least 1 and therefore says
    /// nothing at this scale.
    pub vacuous: bool,
}

/// Planning target: an explicit input length or the `L = 2^r` regime.
pub enum PlanTarget {
    Bits(u64),
    /// `L = 2^r`, run as many rounds as feasible.
    AutoLr,
}

/// Chain of per-round length exponents starting from `2^a0` bits. Each
/// round's input is truncated down to an exponent divisible by 4; the
/// output exponent is `3k` for input exponent `4k`. Without an `f_cap`
/// (planning mode) rounds stop before the output would drop below `r^4`;
/// with a cap (execution mode) exactly `f_cap` rounds are attempted.
fn round_exponents(r: usize, a0: u64, f_cap: Option<usize>, relaxed: bool) -> (Vec<u32>, bool) {
    let j = r.trailing_zeros() as u64;
    let mut exps: Vec<u32> = vec![a0 as u32];
    let mut truncated = false;
    loop {
        if exps.len() > f_cap.unwrap_or(64) {
            break;
        }
        let a = *exps.last().unwrap() as u64;
        let a_in = a - a % 4;
        let k = a_in / 4;
        let feasible = 3 * k >= j + 3 && (relaxed || k >= j) && a_in >= 4;
        if !feasible {
            break;
        }
        let a_out = 3 * k;
        if !relaxed && f_cap.is_none() && a_out < 4 * j {
            break;
        }
        if a_in != a {
            truncated = true;
            *exps.last_mut().unwrap() = a_in as u32;
        }
        exps.push(a_out as u32);
    }
    (exps, truncated)
}

/// Seed bits for one round with population `n = 2^{n_exp} * r / r = r *
/// 2^{k}` blocks, exact when tractable.
fn round_seed_bits(n_blocks_exp: u64, r: usize) -> (u64, bool) {
    // n = 2^{n_blocks_exp}
    if n_blocks_exp <= 40 {
        let n = 1u64 << n_blocks_exp;
        let count = binomial_u64(n, r);
        (ceil_log2(&count), true)
    } else if (r as u64) * n_blocks_exp <= 1 << 22 {
        let n = BigUint::one() << n_blocks_exp;
        let mut acc = BigUint::one();
        for i in 0u64..r as u64 {
            acc = acc * (&n - BigUint::from(i)) / BigUint::from(i + 1);
        }
        (ceil_log2(&acc), true)
    } else {
        // ceil(log2 C(n, r)) <= r log2(n e / r)
        let bound = r as f64
            * (n_blocks_exp as f64 - (r as f64).log2() + std::f64::consts::E.log2());
        (bound.ceil() as u64, false)
    }
}

/// Builds the resampling plan for `r` over the given target. Strict-mode
/// feasibility keeps every round's output at or above `r^4` bits; the
/// bounds are reported honestly, with `vacuous` set whenever the rate-loss
/// bound reaches 1.
pub fn plan(r: usize, target: PlanTarget) -> Result<SampPlan, BsmError> {
    if r < 16 || !r.is_power_of_two() {
        return Err(BsmError::BadR(r));
    }
    let (a0_raw, truncated_input): (u64, Option<u64>) = match target {
        PlanTarget::AutoLr => (r as u64, None),
        PlanTarget::Bits(bits) => {
            if bits < 16 {
                return Err(BsmError::BadLength {
                    l_bits: bits,
                    reason: "input too short".into(),
                });
            }
            let a = 63 - bits.leading_zeros() as u64;
            let a = a - a % 4;
            let kept = 1u64 << a;
            (a, if kept < bits { Some(bits - kept) } else { None })
        }
    };
    let (exps, intermediate_truncation) = round_exponents(r, a0_raw, None, false);
    let f = exps.len() - 1;
    if f == 0 {
        return Err(BsmError::InfeasiblePlan {
            r,
            exp: a0_raw as u32,
        });
    }
    let j = r.trailing_zeros() as u64;
    let mut total_seed_bits = 0u64;
    let mut seed_bits_exact = true;
    for i in 0..f {
        let k = exps[i] as u64 / 4;
        let (bits, exact) = round_seed_bits(j + k, r);
        total_seed_bits += bits;
        seed_bits_exact &= exact;
    }
    let rf = r as f64;
    let rate_loss_bound = 5.0 * f as f64 * rf.log2() / rf.powf(0.25);
    let gamma = 5.0 * f as f64 * 2f64.powf(-rf.sqrt() / 8.0);
    Ok(SampPlan {
        r,
        f,
        length_exponents: exps,
        input_truncated_bits: truncated_input,
        intermediate_truncation,
        total_seed_bits,
        seed_bits_exact,
        rate_loss_bound,
        gamma,
        vacuous: rate_loss_bound >= 1.0,
    })
}

/// Recursive sampling: `f` rounds of [`samp`] composed into a single pass.
/// All subset indices are resolved before the stream is touched, so no
/// intermediate substring is ever materialized; only the final blocks are
/// buffered.
pub fn resamp(
    reader: &mut impl Read,
    l_bits: u64,
    f: usize,
    r: usize,
    seed: &mut BitReader,
    opts: SampOptions,
) -> Result<(Vec<u8>, SampPlan, SampAccounting), BsmError> {
    if r == 0 || !r.is_power_of_two() || (!opts.relaxed && r < 16) {
        return Err(BsmError::BadR(r));
    }
    if l_bits == 0 {
        return Err(BsmError::BadLength {
            l_bits,
            reason: "empty input".into(),
        });
    }
    // executable exponent chain with per-round truncation
    let a_raw = 63 - l_bits.leading_zeros() as u64;
    let a0 = a_raw - a_raw % 4;
    let input_truncated = l_bits - (1u64 << a0);
    let (exps, intermediate_truncation) = round_exponents(r, a0, Some(f), opts.relaxed);
    if exps.len() <= f {
        return Err(BsmError::InfeasiblePlan {
            r,
            exp: a0 as u32,
        });
    }
    let exps = exps[..=f].to_vec();

    let seed_start = seed.consumed();
    let mut bias_bound = 0.0f64;
    let mut peak_ranges = 0usize;
    // current selection as source ranges; starts as the truncated prefix
    let mut ranges: Ranges = vec![(0, 1u64 << exps[0])];
    let mut params_per_round = Vec::with_capacity(f);
    for i in 0..f {
        let l_in = 1u64 << exps[i];
        let cur_len: u64 = ranges.iter().map(|&(_, l)| l).sum();
        // truncate the virtual string to this round's valid input length
        if cur_len > l_in {
            let mut keep = l_in;
            let mut cut = Vec::new();
            for &(s, l) in &ranges {
                if keep == 0 {
                    break;
                }
                let take = l.min(keep);
                cut.push((s, take));
                keep -= take;
            }
            ranges = cut;
        }
        let params = SampParams::new(l_in, r, opts)?;
        let blocks = select_blocks(&params, seed)?;
        bias_bound += params.index_bias;
        // map each selected virtual block to its (single, contiguous)
        // source range
        let mut next: Ranges = Vec::with_capacity(blocks.len());
        for &b in &blocks {
            let want = b * params.t_bits;
            let mut acc = 0u64;
            for &(s, l) in &ranges {
                if want < acc + l {
                    let off = want - acc;
                    debug_assert!(off + params.t_bits <= l);
                    next.push((s + off, params.t_bits));
                    break;
                }
                acc += l;
            }
        }
        peak_ranges = peak_ranges.max(ranges.len() + next.len());
        ranges = next;
        params_per_round.push(params);
    }

    let out = stream_ranges(reader, &ranges)?;
    let seed_bits_used = seed.consumed() - seed_start;
    let plan = SampPlan {
        r,
        f,
        length_exponents: exps,
        input_truncated_bits: if input_truncated > 0 {
            Some(input_truncated)
        } else {
            None
        },
        intermediate_truncation,
        total_seed_bits: seed_bits_used,
        seed_bits_exact: true,
        rate_loss_bound: 5.0 * f as f64 * (r as f64).log2() / (r as f64).powf(0.25),
        gamma: 5.0 * f as f64 * 2f64.powf(-(r as f64).sqrt() / 8.0),
        vacuous: 5.0 * f as f64 * (r as f64).log2() / (r as f64).powf(0.25) >= 1.0,
    };
    let accounting = SampAccounting {
        seed_bits_used,
        bias_bound,
        peak_working_bits: out.len() as u64 * 8 + peak_ranges as u64 * 128 + (1 << 19),
    };
    Ok((out, plan, accounting))
}

/// Reference implementation of [`resamp`] that materializes every
/// intermediate substring; the streaming path must match it bit for bit.
pub fn resamp_materializing(
    input: &[u8],
    l_bits: u64,
    f: usize,
    r: usize,
    seed: &mut BitReader,
    opts: SampOptions,
) -> Result<Vec<u8>, BsmError> {
    let a_raw = 63 - l_bits.leading_zeros() as u64;
    let a0 = a_raw - a_raw % 4;
    let mut cur = input[..((1u64 << a0) / 8) as usize].to_vec();
    let mut cur_bits = 1u64 << a0;
    for _ in 0..f {
        let a = 63 - cur_bits.leading_zeros() as u64;
        let a_in = a - a % 4;
        cur.truncate(((1u64 << a_in) / 8) as usize);
        let mut cursor = std::io::Cursor::new(&cur);
        let (next, _) = samp(&mut cursor, 1u64 << a_in, r, seed, opts)?;
        cur = next;
        cur_bits = cur.len() as u64 * 8;
    }
    Ok(cur)
}

/// How the sampling rate loss enters the key-length computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossModel {
    /// Subtract the analytic `5 f log2 r / r^{1/4}` bound (honest but
    /// vacuous at small r).
    Bound,
    /// Trust `rate_assumed` as the post-sampling rate. For demonstrations
    /// and golden vectors; recorded in the report.
    Ignore,
}

/// Everything [`expand_key`] produced, with full provenance.
#[derive(Debug, Serialize)]
pub struct ExpandOutcome {
    pub key: KeyMaterial,
    pub plan: SampPlan,
    pub accounting: SampAccounting,
    pub k_bits: f64,
    pub hash_seed_bits: u64,
    pub loss_bound_applied: bool,
}

/// Sample-and-hash key expansion: recursive sampling followed by Toeplitz
/// privacy amplification, with the `eps` budget split evenly between the
/// sampling smoothing and the hashing error.
#[allow(clippy::too_many_arguments)]
pub fn expand_key(
    reader: &mut impl Read,
    l_bits: u64,
    r: usize,
    f: usize,
    eps: f64,
    rate_assumed: f64,
    seed: &mut BitReader,
    opts: SampOptions,
    loss: LossModel,
) -> Result<ExpandOutcome, BsmError> {
    let (sampled, plan, accounting) = resamp(reader, l_bits, f, r, seed, opts)?;
    let out_bits = sampled.len() as f64 * 8.0;
    let effective_rate = match loss {
        LossModel::Bound => (rate_assumed - plan.rate_loss_bound).max(0.0),
        LossModel::Ignore => rate_assumed,
    };
    let k = effective_rate * out_bits;
    let lout = extractable_length(k, eps / 2.0);
    if k <= 0.0 || lout == 0 {
        return Err(BsmError::NoKey { k });
    }
    let nin = sampled.len() * 8;
    let hash_seed_bits = (nin + lout as usize - 1) as u64;
    let raw = seed.read_big(hash_seed_bits)?;
    let seed_bytes = raw.to_bytes_le();
    let mut padded = seed_bytes;
    padded.resize((hash_seed_bits as usize).div_ceil(8), 0);
    let toeplitz = ToeplitzSeed::from_bytes(&padded, hash_seed_bits as usize);
    let x = BitString::from_bytes(&sampled, nin);
    let key = privacy_amplify(
        &x,
        &toeplitz,
        k,
        eps / 2.0,
        "randomizer",
        "expand-key-seed",
    )?;
    let mut accounting = accounting;
    accounting.seed_bits_used += hash_seed_bits;
    Ok(ExpandOutcome {
        key,
        plan,
        accounting,
        k_bits: k,
        hash_seed_bits,
        loss_bound_applied: loss == LossModel::Bound,
    })
}
