//! Probability models over token positions and iterative masked filling.
//!
//! A [`ProbModel`] returns a distribution over the codebook for one position
//! given the other slots of a [`MaskedSequence`]. Causal models additionally
//! answer next-token queries from a plain prefix, which is what the entropy
//! coder and [`cross_entropy`] need.

mod bridge;
mod models;

use rand::Rng;
use thiserror::Error;

use crate::rng::{sample_discrete, substream, Purpose};
use crate::tokens::{MaskedSequence, SideInfo, Slot, TokenSequence, TokensError};

pub use bridge::{
    run_conformance, serve_connection, BridgeModel, BridgeRequest, BridgeResponse, ConformanceCheck, DistEntry,
};
pub use models::{
    bidirectional_combine, train_markov, train_markov_conditional, train_unigram, Bidirectional, ClassConditional,
    MarkovModel, SourceModel, UniformModel, UnigramModel,
};

/// Tolerance on "sums to one" for model outputs.
pub const PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("no masked positions to predict")]
    NoMaskedPositions,
    #[error("model codebook size {model} does not match sequence codebook size {seq}")]
    CodebookMismatch { model: u32, seq: u32 },
    #[error("model does not support causal (next-token) queries")]
    NotCausal,
    #[error("model is not bidirectional")]
    NotBidirectional,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("smoothing must be positive and finite, got {0}")]
    BadSmoothing(f64),
    #[error("invalid fill schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid model file: {0}")]
    ModelFile(String),
    #[error("bridge: {0}")]
    Bridge(String),
    #[error(transparent)]
    Tokens(#[from] TokensError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub causal: bool,
    pub bidirectional: bool,
    pub uses_side_info: bool,
}

/// Distribution at one slot plus whether a degenerate fallback was used.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPrediction {
    pub probs: Vec<f64>,
    pub fallback: bool,
}

impl SlotPrediction {
    pub fn plain(probs: Vec<f64>) -> Self {
        Self { probs, fallback: false }
    }
}

pub trait ProbModel: Send + Sync {
    /// Codebook size.
    fn q(&self) -> u32;

    fn capabilities(&self) -> Capabilities;

    /// Distribution of the token at `pos`. Whatever `slots[pos]` holds is
    /// ignored, so this also serves leave-one-out queries.
    fn predict_slot(&self, slots: &[Slot], pos: usize, side: &SideInfo) -> Result<SlotPrediction, PredictError>;

    /// `P(x_n | prefix)` where `n = prefix.len()`.
    fn next_token(&self, _prefix: &[u32], _side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        Err(PredictError::NotCausal)
    }

    /// Context-free token distribution.
    fn marginal(&self, side: &SideInfo) -> Result<Vec<f64>, PredictError>;

    /// Number of preceding tokens a causal prediction depends on, if bounded.
    fn context_window(&self) -> Option<usize> {
        None
    }

    /// Whether the causal context of `pos` is present in `slots`.
    fn has_left_context(&self, slots: &[Slot], pos: usize) -> bool {
        self.context_window() == Some(0) || (pos > 0 && !slots[pos - 1].is_masked())
    }

    /// Batched [`ProbModel::predict_slot`]; remote models override this to
    /// answer in one round trip.
    fn predict_many(
        &self,
        slots: &[Slot],
        positions: &[usize],
        side: &SideInfo,
    ) -> Result<Vec<SlotPrediction>, PredictError> {
        positions.iter().map(|&p| self.predict_slot(slots, p, side)).collect()
    }
}

/// Full distribution, or the top entries plus the unlisted residual mass.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Full(Vec<f64>),
    TopK { ids: Vec<u32>, probs: Vec<f64>, residual: f64 },
}

impl Distribution {
    /// Top `k` entries, sorted by descending probability then ascending id.
    pub fn top_k(full: &[f64], k: usize) -> Self {
        let order = ranked(full);
        let k = k.min(full.len());
        let ids: Vec<u32> = order[..k].iter().map(|&i| i as u32).collect();
        let probs: Vec<f64> = ids.iter().map(|&i| full[i as usize]).collect();
        let residual = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        Distribution::TopK { ids, probs, residual }
    }

    /// Expands to a full distribution, spreading residual mass uniformly over
    /// the unlisted ids.
    pub fn to_full(&self, q: u32) -> Vec<f64> {
        match self {
            Distribution::Full(p) => p.clone(),
            Distribution::TopK { ids, probs, residual } => {
                let q = q as usize;
                let unlisted = q - ids.len();
                let fill = if unlisted > 0 { residual / unlisted as f64 } else { 0.0 };
                let mut out = vec![fill; q];
                for (&i, &p) in ids.iter().zip(probs) {
                    out[i as usize] = p;
                }
                out
            }
        }
    }

    /// Most likely id; ties go to the lowest id.
    pub fn argmax(&self) -> (u32, f64) {
        match self {
            Distribution::Full(p) => {
                let i = argmax(p);
                (i as u32, p[i])
            }
            Distribution::TopK { ids, probs, .. } => (ids[0], probs[0]),
        }
    }
}

/// Index order by descending value, ties by ascending index.
pub(crate) fn ranked(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    order
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionPrediction {
    pub pos: usize,
    pub dist: Distribution,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub positions: Vec<PositionPrediction>,
}

fn check_codebook(model: &dyn ProbModel, q: u32) -> Result<(), PredictError> {
    if model.q() != q {
        return Err(PredictError::CodebookMismatch { model: model.q(), seq: q });
    }
    Ok(())
}

/// Predicts every masked position independently given the known slots.
pub fn predict(
    model: &dyn ProbModel,
    masked: &MaskedSequence,
    side: &SideInfo,
    top_k: Option<usize>,
) -> Result<PredictionResult, PredictError> {
    check_codebook(model, masked.q())?;
    let positions = masked.masked_positions();
    if positions.is_empty() {
        return Err(PredictError::NoMaskedPositions);
    }
    let preds = model.predict_many(masked.slots(), &positions, side)?;
    let positions = positions
        .into_iter()
        .zip(preds)
        .map(|(pos, sp)| PositionPrediction {
            pos,
            dist: match top_k {
                Some(k) => Distribution::top_k(&sp.probs, k),
                None => Distribution::Full(sp.probs),
            },
            fallback: sp.fallback,
        })
        .collect();
    Ok(PredictionResult { positions })
}

/// Cumulative reveal fractions for iterative filling.
#[derive(Debug, Clone, PartialEq)]
pub struct FillSchedule {
    cumulative: Vec<f64>,
}

impl FillSchedule {
    pub fn new(cumulative: Vec<f64>) -> Result<Self, PredictError> {
        if cumulative.is_empty() {
            return Err(PredictError::InvalidSchedule("no iterations".into()));
        }
        let mut prev = 0.0;
        for &f in &cumulative {
            if !(f > 0.0 && f <= 1.0) || f < prev {
                return Err(PredictError::InvalidSchedule(format!("fraction {f} after {prev}")));
            }
            prev = f;
        }
        if prev != 1.0 {
            return Err(PredictError::InvalidSchedule("final fraction must be 1".into()));
        }
        Ok(Self { cumulative })
    }

    /// Everything in one pass.
    pub fn single() -> Self {
        Self { cumulative: vec![1.0] }
    }

    /// `iterations` steps with cumulative fraction `1 - cos(π/2 · j/I)`.
    pub fn cosine(iterations: usize) -> Result<Self, PredictError> {
        if iterations == 0 {
            return Err(PredictError::InvalidSchedule("no iterations".into()));
        }
        let mut c: Vec<f64> = (1..=iterations)
            .map(|j| 1.0 - (std::f64::consts::FRAC_PI_2 * j as f64 / iterations as f64).cos())
            .collect();
        *c.last_mut().unwrap() = 1.0;
        Self::new(c)
    }

    pub fn iterations(&self) -> usize {
        self.cumulative.len()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Cumulative commit targets for `masked` initial masks.
    pub fn targets(&self, masked: usize) -> Vec<usize> {
        self.cumulative.iter().map(|&f| ((f * masked as f64 - 1e-9).ceil().max(0.0) as usize).min(masked)).collect()
    }
}

impl Default for FillSchedule {
    fn default() -> Self {
        Self::cosine(8).expect("valid default schedule")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillMode {
    Argmax,
    Sample(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillOutput {
    pub sequence: TokenSequence,
    /// Committed probability at filled positions; `None` where the slot was known.
    pub confidence: Vec<Option<f64>>,
    pub commits_per_iteration: Vec<usize>,
}

/// Fills masked slots over the schedule, committing the most confident
/// predictions first at each iteration.
pub fn fill(
    model: &dyn ProbModel,
    masked: &MaskedSequence,
    side: &SideInfo,
    schedule: &FillSchedule,
    mode: FillMode,
) -> Result<FillOutput, PredictError> {
    check_codebook(model, masked.q())?;
    let mut slots = masked.slots().to_vec();
    let mut confidence = vec![None; slots.len()];
    let total = masked.masked_count();
    let mut rng = match mode {
        FillMode::Sample(seed) => Some(substream(seed, Purpose::Fill, 0)),
        FillMode::Argmax => None,
    };
    let mut committed = 0;
    let mut commits_per_iteration = Vec::with_capacity(schedule.iterations());

    for target in schedule.targets(total) {
        let want = target - committed;
        if want == 0 {
            commits_per_iteration.push(0);
            continue;
        }
        let open: Vec<usize> = slots.iter().enumerate().filter(|(_, s)| s.is_masked()).map(|(i, _)| i).collect();
        let preds = model.predict_many(&slots, &open, side)?;
        let mut picks: Vec<(usize, u32, f64)> = open
            .iter()
            .zip(&preds)
            .map(|(&pos, sp)| {
                let id = match rng.as_mut() {
                    Some(r) => sample_with(r, &sp.probs),
                    None => argmax(&sp.probs),
                };
                (pos, id as u32, sp.probs[id])
            })
            .collect();
        picks.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        for &(pos, id, p) in picks.iter().take(want) {
            slots[pos] = Slot::Known(id);
            confidence[pos] = Some(p);
        }
        committed = target;
        commits_per_iteration.push(want);
    }

    let ids = slots.iter().map(|s| s.known().expect("all slots filled")).collect();
    Ok(FillOutput { sequence: TokenSequence::new(masked.q(), ids)?, confidence, commits_per_iteration })
}

fn sample_with<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    sample_discrete(rng, probs)
}

/// Average code length `-(1/N) Σ log2 P(x_i | x_<i)` in bits per token.
pub fn cross_entropy(model: &dyn ProbModel, seq: &TokenSequence, side: &SideInfo) -> Result<f64, PredictError> {
    check_codebook(model, seq.q())?;
    if !model.capabilities().causal {
        return Err(PredictError::NotCausal);
    }
    let ids = seq.ids();
    let mut bits = 0.0;
    for i in 0..ids.len() {
        let p = model.next_token(&ids[..i], side)?[ids[i] as usize];
        bits -= p.log2();
    }
    Ok(bits / ids.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens::MarkovSource;

    fn masked_of(q: u32, ids: &[i64]) -> MaskedSequence {
        MaskedSequence::new(q, ids.iter().map(|&i| if i < 0 { Slot::Masked } else { Slot::Known(i as u32) }).collect())
            .unwrap()
    }

    #[test]
    fn predict_requires_a_mask() {
        let m = UniformModel::new(4).unwrap();
        let seq = masked_of(4, &[0, 1, 2]);
        assert!(matches!(predict(&m, &seq, &SideInfo::None, None), Err(PredictError::NoMaskedPositions)));
    }

    #[test]
    fn predict_checks_codebook() {
        let m = UniformModel::new(4).unwrap();
        let seq = masked_of(8, &[0, -1]);
        assert!(matches!(predict(&m, &seq, &SideInfo::None, None), Err(PredictError::CodebookMismatch { .. })));
    }

    #[test]
    fn uniform_model_predicts_uniform() {
        let m = UniformModel::new(5).unwrap();
        let r = predict(&m, &masked_of(5, &[1, -1, 3, -1]), &SideInfo::None, None).unwrap();
        assert_eq!(r.positions.iter().map(|p| p.pos).collect::<Vec<_>>(), vec![1, 3]);
        for p in &r.positions {
            assert_eq!(p.dist.to_full(5), vec![0.2; 5]);
        }
    }

    #[test]
    fn top_k_is_sorted_with_residual() {
        let d = Distribution::top_k(&[0.1, 0.4, 0.1, 0.4], 3);
        match &d {
            Distribution::TopK { ids, probs, residual } => {
                assert_eq!(ids, &[1, 3, 0]);
                assert_eq!(probs, &[0.4, 0.4, 0.1]);
                assert!((residual - 0.1).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        let full = d.to_full(4);
        assert!((full[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(FillSchedule::new(vec![]).is_err());
        assert!(FillSchedule::new(vec![0.5, 0.4, 1.0]).is_err());
        assert!(FillSchedule::new(vec![0.5, 0.9]).is_err());
        assert!(FillSchedule::new(vec![0.0, 1.0]).is_err());
        let c = FillSchedule::cosine(8).unwrap();
        assert_eq!(c.iterations(), 8);
        assert_eq!(*c.cumulative().last().unwrap(), 1.0);
        assert_eq!(FillSchedule::new(vec![0.5, 1.0]).unwrap().targets(4), vec![2, 4]);
    }

    #[test]
    fn fill_commits_follow_schedule() {
        let m = UniformModel::new(3).unwrap();
        let masked = masked_of(3, &[-1, 0, -1, -1, 2, -1]);
        let sched = FillSchedule::new(vec![0.5, 1.0]).unwrap();
        let out = fill(&m, &masked, &SideInfo::None, &sched, FillMode::Argmax).unwrap();
        assert_eq!(out.commits_per_iteration, vec![2, 2]);
        assert_eq!(out.sequence.ids(), &[0, 0, 0, 0, 2, 0]);
        assert_eq!(out.confidence[1], None);
        assert!((out.confidence[0].unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_mask_fill_equals_predict_argmax() {
        let src = MarkovSource::sticky(6, 0.7).unwrap();
        let model = SourceModel::bidirectional(&src).unwrap();
        let masked = masked_of(6, &[2, 2, -1, 4, 4]);
        let r = predict(&model, &masked, &SideInfo::None, None).unwrap();
        let (id, p) = r.positions[0].dist.argmax();
        let out = fill(&model, &masked, &SideInfo::None, &FillSchedule::single(), FillMode::Argmax).unwrap();
        assert_eq!(out.sequence.ids()[2], id);
        assert_eq!(out.confidence[2], Some(p));
    }

    #[test]
    fn sample_fill_is_pure_in_seed() {
        let m = UniformModel::new(50).unwrap();
        let masked = masked_of(50, &[-1; 40]);
        let s = FillSchedule::default();
        let a = fill(&m, &masked, &SideInfo::None, &s, FillMode::Sample(1)).unwrap();
        let b = fill(&m, &masked, &SideInfo::None, &s, FillMode::Sample(1)).unwrap();
        let c = fill(&m, &masked, &SideInfo::None, &s, FillMode::Sample(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.sequence, c.sequence);
    }

    #[test]
    fn cross_entropy_of_uniform_and_point_mass() {
        let u = UniformModel::new(1024).unwrap();
        let seq = MarkovSource::uniform(1024).unwrap().generate(300, &SideInfo::None, 3).unwrap();
        assert!((cross_entropy(&u, &seq, &SideInfo::None).unwrap() - 10.0).abs() < 1e-12);

        let mut probs = vec![0.0; 4];
        probs[2] = 1.0;
        let src = MarkovSource::iid(probs).unwrap();
        let model = SourceModel::new(&src).unwrap();
        let seq = src.generate(100, &SideInfo::None, 0).unwrap();
        assert_eq!(cross_entropy(&model, &seq, &SideInfo::None).unwrap(), 0.0);
    }
}
