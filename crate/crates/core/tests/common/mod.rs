//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use tokcom::semmap::Matrix;

/// Bitwise long division for CRC-16/CCITT-FALSE over bytes.
pub fn crc_oracle(data: &[u8]) -> u16 {
    let mut reg: u32 = 0xFFFF;
    for &byte in data {
        reg ^= (byte as u32) << 8;
        for _ in 0..8 {
            reg <<= 1;
            if reg & 0x1_0000 != 0 {
                reg ^= 0x1_1021;
            }
        }
    }
    reg as u16
}

/// Convolutional encoding as a direct sum over taps: output `j` at time `t`
/// is the parity of `g_j[K-1-i] · u[t-i]` for `i` in `0..K`.
pub fn conv_oracle(msg: &[bool], k: usize, gens: [u32; 2]) -> Vec<bool> {
    let mut u = msg.to_vec();
    u.extend(std::iter::repeat_n(false, k - 1));
    let mut out = Vec::with_capacity(2 * u.len());
    for t in 0..u.len() {
        for g in gens {
            let mut bit = false;
            for i in 0..k {
                if t >= i && (g >> (k - 1 - i)) & 1 == 1 {
                    bit ^= u[t - i];
                }
            }
            out.push(bit);
        }
    }
    out
}

pub struct Codebook {
    pub messages: Vec<Vec<bool>>,
    pub codewords: Vec<Vec<bool>>,
}

pub fn exhaustive_codebook(len: usize, k: usize, gens: [u32; 2]) -> Codebook {
    let messages: Vec<Vec<bool>> =
        (0..1u32 << len).map(|m| (0..len).map(|i| (m >> (len - 1 - i)) & 1 == 1).collect()).collect();
    let codewords = messages.iter().map(|m| conv_oracle(m, k, gens)).collect();
    Codebook { messages, codewords }
}

/// Message whose codeword maximizes `Σ ±llr` (+ for a 0 bit).
pub fn ml_decode(book: &Codebook, llrs: &[f64]) -> Vec<bool> {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, cw) in book.codewords.iter().enumerate() {
        let score: f64 = cw.iter().zip(llrs).map(|(&c, &l)| if c { -l } else { l }).sum();
        if score > best.0 {
            best = (score, i);
        }
    }
    book.messages[best.1].clone()
}

/// `Q(x)` by composite Simpson integration of the Gaussian density.
pub fn q_oracle(x: f64) -> f64 {
    let upper = x + 14.0;
    let steps = 200_000;
    let h = (upper - x) / steps as f64;
    let f = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(x) + f(upper);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(x + i as f64 * h);
    }
    s * h / 3.0
}

/// Order-1 chain that stays with probability `stay` and otherwise moves
/// uniformly; started from its stationary (uniform) law.
pub struct StickyChain {
    pub q: usize,
    pub stay: f64,
}

impl StickyChain {
    /// `P(x_{t+k} = y | x_t = x)` from the spectral form of the matrix.
    pub fn k_step(&self, k: usize, x: usize, y: usize) -> f64 {
        let other = (1.0 - self.stay) / (self.q - 1) as f64;
        let lambda = (self.stay - other).powi(k as i32);
        let base = (1.0 - lambda) / self.q as f64;
        if x == y {
            lambda + base
        } else {
            base
        }
    }

    /// Exact posterior of position `i` given the known entries.
    pub fn posterior(&self, known: &[Option<u32>], i: usize) -> Vec<f64> {
        let left = (0..i).rev().find_map(|j| known[j].map(|v| (i - j, v as usize)));
        let right = (i + 1..known.len()).find_map(|j| known[j].map(|v| (j - i, v as usize)));
        let weights: Vec<f64> = (0..self.q)
            .map(|x| {
                let l = left.map_or(1.0, |(d, a)| self.k_step(d, a, x));
                let r = right.map_or(1.0, |(d, b)| self.k_step(d, x, b));
                l * r
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    /// Per-position argmax of the exact posterior given the known entries;
    /// known entries are returned unchanged. Ties go to the lowest id.
    pub fn posterior_argmax(&self, known: &[Option<u32>]) -> Vec<u32> {
        (0..known.len())
            .map(|i| {
                if let Some(v) = known[i] {
                    return v;
                }
                let mut best = (f64::NEG_INFINITY, 0u32);
                for (x, p) in self.posterior(known, i).into_iter().enumerate() {
                    if p > best.0 {
                        best = (p, x as u32);
                    }
                }
                best.1
            })
            .collect()
    }
}

/// Minimum of `Σ_t p_t Σ_{u≠t} C[π_t, π_u] d_tu` over all permutations by
/// Heap's algorithm.
pub fn permutation_oracle_min(conf: &Matrix<f64>, dist: &Matrix<f64>, prior: &[f64]) -> f64 {
    let m = prior.len();
    let value = |pi: &[usize]| {
        let mut total = 0.0;
        for t in 0..m {
            for u in 0..m {
                if u != t {
                    total += prior[t] * conf.get(pi[t], pi[u]) * dist.get(t, u);
                }
            }
        }
        total
    };
    let mut pi: Vec<usize> = (0..m).collect();
    let mut c = vec![0usize; m];
    let mut best = value(&pi);
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                pi.swap(0, i);
            } else {
                pi.swap(c[i], i);
            }
            best = best.min(value(&pi));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}
