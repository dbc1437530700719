use super::LinkError;
use crate::phy::ConvCode;

/// Modulation order plus convolutional code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct McsEntry {
    pub order: usize,
    pub code: ConvCode,
}

impl McsEntry {
    pub fn new(order: usize, code: ConvCode) -> Self {
        Self { order, code }
    }

    pub fn qpsk() -> Self {
        Self::new(4, ConvCode::k7())
    }

    pub fn qam16() -> Self {
        Self::new(16, ConvCode::k7())
    }

    pub fn qam64() -> Self {
        Self::new(64, ConvCode::k7())
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Information bits per channel symbol.
    pub fn throughput(&self) -> f64 {
        self.bits_per_symbol() as f64 / 2.0
    }

    pub fn name(&self) -> String {
        let m = match self.order {
            2 => "bpsk".to_string(),
            4 => "qpsk".to_string(),
            o => format!("qam{o}"),
        };
        format!("{m}-k{}", self.code.constraint_length())
    }
}

/// Lookup from (SNR band, predictability band) to an entry.
///
/// Bands are split at ascending edges: a value `v` falls in band `i` where
/// `i` counts the edges `≤ v`.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    snr_edges: Vec<f64>,
    r_edges: Vec<f64>,
    entries: Vec<Vec<McsEntry>>,
}

fn ascending(edges: &[f64]) -> bool {
    edges.iter().all(|e| e.is_finite()) && edges.windows(2).all(|w| w[0] < w[1])
}

impl McsTable {
    pub fn new(snr_edges: Vec<f64>, r_edges: Vec<f64>, entries: Vec<Vec<McsEntry>>) -> Result<Self, LinkError> {
        if !ascending(&snr_edges) || !ascending(&r_edges) {
            return Err(LinkError::BadMcs("band edges must be finite and strictly ascending".into()));
        }
        if entries.len() != snr_edges.len() + 1 || entries.iter().any(|row| row.len() != r_edges.len() + 1) {
            return Err(LinkError::BadMcs("table shape does not match the band edges".into()));
        }
        for row in &entries {
            if row.iter().any(|e| ![2, 4, 16, 64].contains(&e.order)) {
                return Err(LinkError::BadMcs("unsupported modulation order".into()));
            }
            if row.windows(2).any(|w| w[1].throughput() < w[0].throughput()) {
                return Err(LinkError::BadMcs("throughput must not fall as predictability rises".into()));
            }
        }
        Ok(Self { snr_edges, r_edges, entries })
    }

    pub fn select(&self, snr_db: f64, r: f64) -> &McsEntry {
        let band = |edges: &[f64], v: f64| edges.iter().take_while(|&&e| e <= v).count();
        &self.entries[band(&self.snr_edges, snr_db)][band(&self.r_edges, r)]
    }

    pub fn entries(&self) -> &[Vec<McsEntry>] {
        &self.entries
    }
}

impl Default for McsTable {
    /// SNR bands split at 6 and 10 dB, predictability bands at 0.5 and 0.8.
    fn default() -> Self {
        let (a, b, c) = (McsEntry::qpsk(), McsEntry::qam16(), McsEntry::qam64());
        Self::new(vec![6.0, 10.0], vec![0.5, 0.8], vec![vec![a, a, b], vec![a, b, c], vec![b, c, c]])
            .expect("default table is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum McsPolicy {
    Fixed(McsEntry),
    Adaptive(McsTable),
}

impl McsPolicy {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Self::Adaptive(_))
    }
}

impl Default for McsPolicy {
    fn default() -> Self {
        Self::Fixed(McsEntry::qam16())
    }
}

pub fn mcs_select(policy: &McsPolicy, snr_db: f64, r: f64) -> &McsEntry {
    match policy {
        McsPolicy::Fixed(e) => e,
        McsPolicy::Adaptive(t) => t.select(snr_db, r),
    }
}
