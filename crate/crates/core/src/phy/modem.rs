//! Gray-labelled square QAM, AWGN and max-log LLR demodulation.

use num_complex::Complex;
use rand_distr::{Distribution, StandardNormal};

use super::PhyError;
use crate::rng::{substream, Purpose};
use crate::scalar::Real;

pub const LLR_CLAMP: f64 = 50.0;

/// Unit-energy constellation with a bit labelling.
///
/// `points[label]` is the point carrying the `log2(M)`-bit label, bits read
/// MSB first. For M ≥ 4 the high half of the label selects the in-phase level
/// and the low half the quadrature level, each Gray coded.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<F> {
    points: Vec<Complex<F>>,
    bits: usize,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl<F: Real> Constellation<F> {
    pub fn new(order: usize) -> Result<Self, PhyError> {
        let bits = match order {
            2 => 1,
            4 => 2,
            16 => 4,
            64 => 6,
            _ => return Err(PhyError::UnsupportedOrder(order)),
        };
        let mut points = vec![Complex::new(F::zero(), F::zero()); order];
        if order == 2 {
            points[0] = Complex::new(F::one(), F::zero());
            points[1] = Complex::new(-F::one(), F::zero());
            return Ok(Self { points, bits });
        }
        let side = 1usize << (bits / 2);
        let energy = 2.0 * ((side * side) as f64 - 1.0) / 3.0;
        let scale = F::lit(energy.sqrt().recip());
        // level index 0 is the most positive amplitude
        let amp = |i: usize| F::lit((side as f64 - 1.0) - 2.0 * i as f64) * scale;
        for i in 0..side {
            for q in 0..side {
                let label = (gray(i) << (bits / 2)) | gray(q);
                points[label] = Complex::new(amp(i), amp(q));
            }
        }
        Ok(Self { points, bits })
    }

    /// Same point set with labels permuted: label `l` is sent on the point that
    /// previously carried `assignment[l]`.
    pub fn relabeled(&self, assignment: &[usize]) -> Result<Self, PhyError> {
        let m = self.order();
        let mut seen = vec![false; m];
        if assignment.len() != m {
            return Err(PhyError::BadAssignment);
        }
        for &a in assignment {
            if a >= m || std::mem::replace(&mut seen[a], true) {
                return Err(PhyError::BadAssignment);
            }
        }
        let points = assignment.iter().map(|&a| self.points[a]).collect();
        Ok(Self { points, bits: self.bits })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    pub fn points(&self) -> &[Complex<F>] {
        &self.points
    }

    pub fn mean_energy(&self) -> F {
        let total = self.points.iter().fold(F::zero(), |acc, p| acc + p.norm_sqr());
        total / F::lit(self.order() as f64)
    }

    /// Maps bits to symbols, zero padding the tail. Returns the pad length.
    pub fn modulate(&self, bits: &[bool]) -> (Vec<Complex<F>>, usize) {
        let m = self.bits;
        let pad = (m - bits.len() % m) % m;
        let symbols = bits
            .chunks(m)
            .map(|chunk| {
                let label = (0..m).fold(0usize, |acc, i| (acc << 1) | chunk.get(i).copied().unwrap_or(false) as usize);
                self.points[label]
            })
            .collect();
        (symbols, pad)
    }

    /// Label of the nearest point.
    pub fn slice(&self, y: Complex<F>) -> usize {
        let mut best = 0;
        let mut best_d = F::infinity();
        for (label, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    pub fn hard_bits(&self, received: &[Complex<F>]) -> Vec<bool> {
        let m = self.bits;
        received
            .iter()
            .flat_map(|&y| {
                let label = self.slice(y);
                (0..m).rev().map(move |i| (label >> i) & 1 == 1)
            })
            .collect()
    }

    /// Max-log LLRs `log P(0)/P(1)` for every bit of every symbol, clamped to
    /// `±LLR_CLAMP`. `noise_var` is the complex noise variance N0.
    pub fn demod_llr(&self, received: &[Complex<F>], noise_var: F) -> Vec<F> {
        let m = self.bits;
        let clamp = F::lit(LLR_CLAMP);
        let mut out = Vec::with_capacity(received.len() * m);
        let mut d0 = vec![F::infinity(); m];
        let mut d1 = vec![F::infinity(); m];
        for &y in received {
            d0.iter_mut().chain(d1.iter_mut()).for_each(|d| *d = F::infinity());
            for (label, p) in self.points.iter().enumerate() {
                let d = (y - p).norm_sqr();
                for i in 0..m {
                    let slot = if (label >> (m - 1 - i)) & 1 == 1 { &mut d1[i] } else { &mut d0[i] };
                    if d < *slot {
                        *slot = d;
                    }
                }
            }
            out.extend((0..m).map(|i| ((d1[i] - d0[i]) / noise_var).max(-clamp).min(clamp)));
        }
        out
    }

    /// CSV rows `i,q,bit_label` for each symbol produced from `bits`.
    pub fn write_trace<W: std::io::Write>(&self, bits: &[bool], mut w: W) -> std::io::Result<()> {
        let (symbols, _) = self.modulate(bits);
        writeln!(w, "i,q,bit_label")?;
        for (k, s) in symbols.iter().enumerate() {
            let label: String = (0..self.bits)
                .map(|i| if bits.get(k * self.bits + i).copied().unwrap_or(false) { '1' } else { '0' })
                .collect();
            writeln!(w, "{},{},{}", s.re.to_f64_lossy(), s.im.to_f64_lossy(), label)?;
        }
        Ok(())
    }
}

/// Complex noise variance N0 for unit-energy symbols at `snr_db` Es/N0.
pub fn noise_var<F: Real>(snr_db: F) -> F {
    F::lit(10.0).powf(-snr_db / F::lit(10.0))
}

/// Adds circular complex Gaussian noise with variance `noise_var` (N0/2 per
/// component) drawn from the channel stream `(seed, index)`.
pub fn awgn<F: Real>(symbols: &[Complex<F>], noise_var: F, seed: u64, index: u64) -> Vec<Complex<F>> {
    let mut rng = substream(seed, Purpose::Channel, index);
    let sigma = (noise_var / F::lit(2.0)).sqrt();
    symbols
        .iter()
        .map(|s| {
            let ni: f64 = StandardNormal.sample(&mut rng);
            let nq: f64 = StandardNormal.sample(&mut rng);
            Complex::new(s.re + sigma * F::lit(ni), s.im + sigma * F::lit(nq))
        })
        .collect()
}
