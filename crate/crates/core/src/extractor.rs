//! Two-universal hashing over GF(2) with the Toeplitz family, exact
//! extractor-property evaluation at enumerable sizes, and privacy
//! amplification.
//!
//! Bit conventions (fixed for cross-implementation reproducibility): bit 0
//! of a byte is the least significant; bit vectors are little-endian in bit
//! index. The Toeplitz matrix for input length `nin` and output length
//! `lout` is defined by a seed of exactly `nin + lout - 1` bits through
//! `T[i][j] = seed[i - j + nin - 1]`, and `y_i = XOR_j T[i][j] x_j`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::extractable_length;

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error("seed length {got} does not match nin + lout - 1 = {expected}")]
    SeedLength { got: usize, expected: usize },
    #[error("exact enumeration capped at nin <= {max_nin}, lout <= {max_lout}")]
    TooLarge { max_nin: usize, max_lout: usize },
    #[error("insufficient entropy budget: extractable length is zero")]
    NoKey,
    #[error("source distribution must have 2^nin = {expected} entries, got {got}")]
    SourceSize { expected: usize, got: usize },
}

/// Packed little-endian bit vector: bit `k` lives in word `k / 64` at
/// position `k % 64`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// Interprets raw bytes with bit 0 of each byte as the least
    /// significant; a trailing partial byte is zero-padded.
    pub fn from_bytes(bytes: &[u8], len_bits: usize) -> Self {
        let mut out = Self::zeros(len_bits);
        for (i, &b) in bytes.iter().enumerate() {
            if i * 8 >= len_bits {
                break;
            }
            out.words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        // mask the tail
        if len_bits % 64 != 0 {
            if let Some(last) = out.words.last_mut() {
                *last &= (1u64 << (len_bits % 64)) - 1;
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len.div_ceil(8))
            .map(|i| ((self.words[i / 8] >> (8 * (i % 8))) & 0xff) as u8)
            .collect()
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (k, &b) in bits.iter().enumerate() {
            if b {
                out.set(k, true);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        (self.words[k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn set(&mut self, k: usize, v: bool) {
        if v {
            self.words[k / 64] |= 1u64 << (k % 64);
        } else {
            self.words[k / 64] &= !(1u64 << (k % 64));
        }
    }

    pub fn xor(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len, other.len);
        BitString {
            words: self
                .words
                .iter()
                .zip(other.words.iter())
                .map(|(a, b)| a ^ b)
                .collect(),
            len: self.len,
        }
    }

    pub fn to_hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Word of 64 bits starting at bit offset `start` (zero-padded past the
    /// end).
    fn word_at(&self, start: usize) -> u64 {
        let w = start / 64;
        let off = start % 64;
        if w >= self.words.len() {
            return 0;
        }
        let lo = self.words[w] >> off;
        if off == 0 {
            lo
        } else {
            let hi = self.words.get(w + 1).copied().unwrap_or(0);
            lo | (hi << (64 - off))
        }
    }
}

/// Seed defining a Toeplitz matrix by its diagonals; exactly
/// `nin + lout - 1` bits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToeplitzSeed {
    pub bits: BitString,
}

impl ToeplitzSeed {
    pub fn new(bits: BitString) -> Self {
        ToeplitzSeed { bits }
    }

    pub fn from_bytes(bytes: &[u8], len_bits: usize) -> Self {
        ToeplitzSeed {
            bits: BitString::from_bytes(bytes, len_bits),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// `y_i = XOR_j seed[i - j + nin - 1] x_j`, evaluated 64 bits at a time:
/// output bit `i` is the parity of the seed window starting at `i` ANDed
/// with the reversed input. Identical to the naive matrix product.
pub fn toeplitz_hash(
    x: &BitString,
    seed: &ToeplitzSeed,
    lout: usize,
) -> Result<BitString, ExtractorError> {
    let nin = x.len();
    let expected = nin + lout - 1;
    if seed.len() != expected {
        return Err(ExtractorError::SeedLength {
            got: seed.len(),
            expected,
        });
    }
    // reverse x once: bit j of x becomes bit (nin-1-j) of rx, so that
    // seed[i - j + nin - 1] x_j = (seed >> i)[nin-1-j] * rx[nin-1-j]
    let mut rx = BitString::zeros(nin);
    for j in 0..nin {
        if x.get(j) {
            rx.set(nin - 1 - j, true);
        }
    }
    let mut y = BitString::zeros(lout);
    let words = nin.div_ceil(64);
    for i in 0..lout {
        let mut acc = 0u64;
        for w in 0..words {
            let s = seed.bits.word_at(i + 64 * w);
            let mask = if w == words - 1 && nin % 64 != 0 {
                (1u64 << (nin % 64)) - 1
            } else {
                u64::MAX
            };
            acc ^= s & rx.words[w] & mask;
        }
        if acc.count_ones() % 2 == 1 {
            y.set(i, true);
        }
    }
    Ok(y)
}

/// Reference evaluation straight from the definition; quadratic, used to
/// pin the word-sliced path.
pub fn toeplitz_hash_naive(
    x: &BitString,
    seed: &ToeplitzSeed,
    lout: usize,
) -> Result<BitString, ExtractorError> {
    let nin = x.len();
    let expected = nin + lout - 1;
    if seed.len() != expected {
        return Err(ExtractorError::SeedLength {
            got: seed.len(),
            expected,
        });
    }
    let mut y = BitString::zeros(lout);
    for i in 0..lout {
        let mut bit = false;
        for j in 0..nin {
            if x.get(j) && seed.bits.get((i + nin - 1) - j) {
                bit = !bit;
            }
        }
        y.set(i, bit);
    }
    Ok(y)
}

const MAX_EXACT_NIN: usize = 12;
const MAX_EXACT_LOUT: usize = 6;

fn hash_compact(x: u64, seed: u64, nin: usize, lout: usize) -> u64 {
    // reversed x, then parity of each seed window
    let mut rx = 0u64;
    for j in 0..nin {
        if (x >> j) & 1 == 1 {
            rx |= 1 << (nin - 1 - j);
        }
    }
    let mask = (1u64 << nin) - 1;
    let mut y = 0u64;
    for i in 0..lout {
        let window = (seed >> i) & mask;
        if (window & rx).count_ones() % 2 == 1 {
            y |= 1 << i;
        }
    }
    y
}

/// Worst-case collision probability `max_{x != x'} Pr_seed[hash(x) =
/// hash(x')]` by full seed enumeration. By GF(2) linearity the collision
/// event for a pair depends only on the difference `z = x XOR x'`, so the
/// maximum runs over nonzero differences.
pub fn collision_probability_exact(nin: usize, lout: usize) -> Result<f64, ExtractorError> {
    if nin > MAX_EXACT_NIN || lout > MAX_EXACT_LOUT || nin == 0 || lout == 0 {
        return Err(ExtractorError::TooLarge {
            max_nin: MAX_EXACT_NIN,
            max_lout: MAX_EXACT_LOUT,
        });
    }
    let seed_bits = nin + lout - 1;
    let seeds = 1u64 << seed_bits;
    let mut worst = 0.0f64;
    for z in 1u64..(1 << nin) {
        let mut collisions = 0u64;
        for seed in 0..seeds {
            if hash_compact(z, seed, nin, lout) == 0 {
                collisions += 1;
            }
        }
        worst = worst.max(collisions as f64 / seeds as f64);
    }
    Ok(worst)
}

/// Collision probability scanned pairwise, without the linearity reduction;
/// tiny sizes only. This is the cross-check for
/// [`collision_probability_exact`].
pub fn collision_probability_pairs(nin: usize, lout: usize) -> Result<f64, ExtractorError> {
    if nin > 6 || lout > 4 {
        return Err(ExtractorError::TooLarge {
            max_nin: 6,
            max_lout: 4,
        });
    }
    let seed_bits = nin + lout - 1;
    let seeds = 1u64 << seed_bits;
    let mut worst = 0.0f64;
    for x in 0u64..(1 << nin) {
        for x2 in (x + 1)..(1 << nin) {
            let mut collisions = 0u64;
            for seed in 0..seeds {
                if hash_compact(x, seed, nin, lout) == hash_compact(x2, seed, nin, lout) {
                    collisions += 1;
                }
            }
            worst = worst.max(collisions as f64 / seeds as f64);
        }
    }
    Ok(worst)
}

/// Exact distance `½‖P_{Ext(X,Y)Y} − U_Z × U_Y‖₁` of the hashed source from
/// uniform, jointly with the seed, by full enumeration. `probs[x]` is the
/// source distribution over `2^nin` points.
pub fn extractor_distance_exact(
    probs: &[f64],
    nin: usize,
    lout: usize,
) -> Result<f64, ExtractorError> {
    if nin > MAX_EXACT_NIN || lout > 12 || lout == 0 {
        return Err(ExtractorError::TooLarge {
            max_nin: MAX_EXACT_NIN,
            max_lout: 12,
        });
    }
    if probs.len() != 1 << nin {
        return Err(ExtractorError::SourceSize {
            expected: 1 << nin,
            got: probs.len(),
        });
    }
    let support: Vec<(u64, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(x, &p)| (x as u64, p))
        .collect();
    let seed_bits = nin + lout - 1;
    let seeds = 1u64 << seed_bits;
    let uniform = 1.0 / (1u64 << lout) as f64;
    let mut total = 0.0f64;
    let mut hist = vec![0.0f64; 1 << lout];
    for seed in 0..seeds {
        hist.iter_mut().for_each(|h| *h = 0.0);
        for &(x, p) in &support {
            hist[hash_compact(x, seed, nin, lout) as usize] += p;
        }
        let dist: f64 = hist.iter().map(|&h| (h - uniform).abs()).sum::<f64>() * 0.5;
        total += dist;
    }
    Ok(total / seeds as f64)
}

/// Extracted key bits plus the claim they were extracted under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub bits: BitString,
    pub provenance: Provenance,
}

/// The (k, eps) claim a key was produced under. The quantum-side security
/// of two-universal hashing is carried as a documented assumption of the
/// sampling analysis, not re-verified at extraction time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub seed_id: String,
    pub eps_budget: f64,
    pub k_assumed: f64,
}

/// Hash-then-truncate privacy amplification: the key length is
/// `⌊k − 2 log2(1/eps)⌋` and the seed must cover that output length.
pub fn privacy_amplify(
    x: &BitString,
    seed: &ToeplitzSeed,
    k_assumed: f64,
    eps: f64,
    source_id: &str,
    seed_id: &str,
) -> Result<KeyMaterial, ExtractorError> {
    let lout = extractable_length(k_assumed, eps) as usize;
    if lout == 0 {
        return Err(ExtractorError::NoKey);
    }
    let bits = toeplitz_hash(x, seed, lout)?;
    Ok(KeyMaterial {
        bits,
        provenance: Provenance {
            source_id: source_id.to_string(),
            seed_id: seed_id.to_string(),
            eps_budget: eps,
            k_assumed,
        },
    })
}
