//! Closed-form efficiency and latency accounting.
//!
//! Everything here is generic over [`Scalar`], so the same formulas run in
//! `f64`, `f32` or exact rationals.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tokens::bits_for;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("packet error rate must lie in [0, 1), got {0}")]
    BadPer(String),
    #[error("retransmission count must be at least 1, got {0}")]
    BadRetx(String),
    #[error("invalid parameter {0}")]
    BadParam(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams<S> {
    pub h: u64,
    pub w: u64,
    /// Tokens per item.
    pub n: u64,
    /// Codebook size.
    pub q: u64,
    pub code_rate: S,
    pub mod_order: u32,
    pub bandwidth_hz: S,
    pub tokens_per_packet: u64,
}

impl<S: Scalar> SystemParams<S> {
    /// 256×256 image, 256 tokens from a 1024 codebook, rate-1/2 16-QAM over
    /// 50 kHz, 4 tokens per packet.
    pub fn paper() -> Self {
        Self {
            h: 256,
            w: 256,
            n: 256,
            q: 1024,
            code_rate: S::one() / S::from_u64_exact(2),
            mod_order: 16,
            bandwidth_hz: S::from_u64_exact(50_000),
            tokens_per_packet: 4,
        }
    }

    /// 128 tokens from an 8192 codebook, otherwise as [`SystemParams::paper`].
    pub fn titok() -> Self {
        Self { n: 128, q: 8192, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let zero = S::zero();
        if self.h == 0 || self.w == 0 {
            return Err(MetricsError::BadParam("h, w"));
        }
        if self.n == 0 {
            return Err(MetricsError::BadParam("n"));
        }
        if self.q < 2 {
            return Err(MetricsError::BadParam("q"));
        }
        if !(self.code_rate > zero && self.code_rate <= S::one()) {
            return Err(MetricsError::BadParam("code_rate"));
        }
        if self.mod_order < 2 || !self.mod_order.is_power_of_two() {
            return Err(MetricsError::BadParam("mod_order"));
        }
        if !(self.bandwidth_hz > zero) {
            return Err(MetricsError::BadParam("bandwidth_hz"));
        }
        if self.tokens_per_packet == 0 {
            return Err(MetricsError::BadParam("tokens_per_packet"));
        }
        Ok(())
    }

    pub fn pixels(&self) -> S {
        S::from_u64_exact(self.h * self.w)
    }

    /// `log2 Q`, exact for powers of two.
    pub fn log2_q(&self) -> S {
        if self.q.is_power_of_two() {
            S::from_u64_exact(self.q.trailing_zeros() as u64)
        } else {
            S::from_f64_lossy((self.q as f64).log2())
        }
    }

    /// Serialized bits per token, `⌈log2 Q⌉`.
    pub fn bits_per_token(&self) -> u64 {
        bits_for(self.q.min(u32::MAX as u64) as u32) as u64
    }

    pub fn bits_per_symbol(&self) -> u64 {
        self.mod_order.trailing_zeros() as u64
    }

    pub fn packets(&self) -> u64 {
        self.n.div_ceil(self.tokens_per_packet)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeProfile<S> {
    pub workload_tflops: S,
    pub device_tops: S,
    /// TOPS per TFLOP: 24 for FP4, 12 for INT8.
    pub precision_factor: S,
}

impl<S: Scalar> ComputeProfile<S> {
    pub fn fp4_1000tops() -> Self {
        Self {
            workload_tflops: S::from_u64_exact(8) / S::from_u64_exact(10),
            device_tops: S::from_u64_exact(1000),
            precision_factor: S::from_u64_exact(24),
        }
    }

    pub fn int8_275tops() -> Self {
        Self {
            workload_tflops: S::from_u64_exact(8) / S::from_u64_exact(10),
            device_tops: S::from_u64_exact(275),
            precision_factor: S::from_u64_exact(12),
        }
    }
}

fn check_t<S: Scalar>(t: &S) -> Result<(), MetricsError> {
    if *t < S::one() {
        return Err(MetricsError::BadRetx(format!("{t:?}")));
    }
    Ok(())
}

/// Pixels delivered per transmitted bit, `h·w / (T·N·log2 Q)`.
pub fn tce<S: Scalar>(params: &SystemParams<S>, t: S) -> Result<S, MetricsError> {
    check_t(&t)?;
    Ok(params.pixels() / (t * S::from_u64_exact(params.n) * params.log2_q()))
}

/// Bits per pixel, the reciprocal of [`tce`].
pub fn bpp<S: Scalar>(params: &SystemParams<S>, t: S) -> Result<S, MetricsError> {
    Ok(S::one() / tce(params, t)?)
}

/// Mean transmissions per packet under retransmit-until-success, `1/(1−PER)`.
pub fn expected_retx<S: Scalar>(per: S) -> Result<S, MetricsError> {
    if per < S::zero() || per >= S::one() {
        return Err(MetricsError::BadPer(format!("{per:?}")));
    }
    Ok(S::one() / (S::one() - per))
}

/// Per-packet framing added on top of the token bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overhead {
    pub crc_bits: u64,
    pub constraint_length: u64,
}

/// Air time of one item: `T · info_bits / (code_rate · log2 M) / B`.
pub fn comm_time<S: Scalar>(params: &SystemParams<S>, t: S, overhead: Option<Overhead>) -> Result<S, MetricsError> {
    check_t(&t)?;
    let mut info_bits = params.n * params.bits_per_token();
    if let Some(o) = overhead {
        info_bits += params.packets() * (o.crc_bits + o.constraint_length.saturating_sub(1));
    }
    let symbols = S::from_u64_exact(info_bits) / (params.code_rate.clone() * S::from_u64_exact(params.bits_per_symbol()));
    Ok(t * symbols / params.bandwidth_hz.clone())
}

/// Seconds of inference: `workload · factor / TOPS`.
pub fn compute_time<S: Scalar>(profile: &ComputeProfile<S>) -> S {
    profile.workload_tflops.clone() * profile.precision_factor.clone() / profile.device_tops.clone()
}

/// Measured link quantities fed into [`report`].
#[derive(Debug, Clone, PartialEq)]
pub struct Measured<S> {
    pub per: S,
    pub ter_before: S,
    pub ter_after: S,
    pub t_avg: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow<S> {
    pub per: S,
    pub ter_before: S,
    pub ter_after: S,
    pub t_avg: S,
    pub tce: S,
    pub bpp: S,
    pub comm_time_s: S,
    pub comm_time_overhead_s: S,
    pub compute_time_s: S,
    /// Air time retransmissions would cost at this PER beyond one shot.
    pub retx_time_s: S,
    /// Prediction is faster than the retransmissions it replaces.
    pub crossover: bool,
}

pub fn report<S: Scalar>(
    measured: &Measured<S>,
    params: &SystemParams<S>,
    profile: &ComputeProfile<S>,
    overhead: Overhead,
) -> Result<ReportRow<S>, MetricsError> {
    let t = measured.t_avg.clone();
    let once = comm_time(params, S::one(), None)?;
    let arq = comm_time(params, expected_retx(measured.per.clone())?, None)?;
    let retx_time_s = arq - once;
    let compute_time_s = compute_time(profile);
    Ok(ReportRow {
        per: measured.per.clone(),
        ter_before: measured.ter_before.clone(),
        ter_after: measured.ter_after.clone(),
        t_avg: t.clone(),
        tce: tce(params, t.clone())?,
        bpp: bpp(params, t.clone())?,
        comm_time_s: comm_time(params, t.clone(), None)?,
        comm_time_overhead_s: comm_time(params, t, Some(overhead))?,
        crossover: compute_time_s < retx_time_s,
        compute_time_s,
        retx_time_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type R = Ratio<i64>;

    #[test]
    fn tce_is_exact_in_rationals() {
        let p = SystemParams::<R>::paper();
        let v = tce(&p, R::from_integer(1)).unwrap();
        assert_eq!(v, R::new(128, 5));
        assert_eq!(v * R::from_integer(256 * 10), R::from_integer(65536));
        assert_eq!(tce(&p, R::from_integer(2)).unwrap(), R::new(64, 5));
        assert_eq!(bpp(&SystemParams::<R>::titok(), R::from_integer(1)).unwrap(), R::new(128 * 13, 65536));
    }

    #[test]
    fn retx() {
        assert_eq!(expected_retx(0.0f64).unwrap(), 1.0);
        assert_eq!(expected_retx(R::new(1, 2)).unwrap(), R::from_integer(2));
        assert!(expected_retx(1.0f64).is_err());
        assert!(tce(&SystemParams::<f64>::paper(), 0.5).is_err());
    }

    #[test]
    fn comm_time_baseline_and_monotonicity() {
        let p = SystemParams::<R>::paper();
        assert_eq!(comm_time(&p, R::from_integer(1), None).unwrap(), R::new(256, 10_000));
        let mut narrow = p.clone();
        narrow.bandwidth_hz = R::from_integer(25_000);
        assert!(comm_time(&narrow, R::from_integer(1), None).unwrap() > comm_time(&p, R::from_integer(1), None).unwrap());
        let o = Overhead { crc_bits: 16, constraint_length: 7 };
        // 64 packets × 22 extra bits
        let with = comm_time(&p, R::from_integer(1), Some(o)).unwrap();
        assert_eq!(with, R::new(2560 + 64 * 22, 2 * 50_000));
    }

    #[test]
    fn compute_time_profiles() {
        assert_eq!(compute_time(&ComputeProfile::<R>::fp4_1000tops()), R::new(192, 10_000));
        assert_eq!(compute_time(&ComputeProfile::<R>::int8_275tops()), R::new(96, 10 * 275));
        let zero = ComputeProfile { workload_tflops: 0.0f64, device_tops: 1.0, precision_factor: 12.0 };
        assert_eq!(compute_time(&zero), 0.0);
    }

    #[test]
    fn crossover_flag() {
        let p = SystemParams::<f64>::paper();
        let prof = ComputeProfile::fp4_1000tops();
        let o = Overhead { crc_bits: 16, constraint_length: 7 };
        let row = |per: f64| {
            let m = Measured { per, ter_before: 0.1, ter_after: 0.01, t_avg: 1.0 };
            report(&m, &p, &prof, o).unwrap()
        };
        assert!(!row(0.0).crossover);
        assert!(!row(0.4).crossover);
        assert!(row(0.44).crossover);
        let r = row(0.123_456_789);
        assert_eq!(r.per, 0.123_456_789);
        assert_eq!(r.tce, 25.6);
    }

    #[test]
    fn single_precision() {
        let p = SystemParams::<f32>::paper();
        assert!((tce(&p, 1.0).unwrap() - 25.6).abs() < 1e-5);
    }
}
