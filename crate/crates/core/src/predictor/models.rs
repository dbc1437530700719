use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Capabilities, PredictError, ProbModel, SlotPrediction};
use crate::tokens::{Codebook, MarkovSource, MarkovTable, SideInfo, Slot, TokenSequence, TokensError};

fn known_window(slots: &[Slot], start: usize, end: usize) -> Option<Vec<u32>> {
    slots[start..end].iter().map(|s| s.known()).collect()
}

fn check_alpha(alpha: f64) -> Result<(), PredictError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PredictError::BadSmoothing(alpha));
    }
    Ok(())
}

fn check_corpus(corpus: &[TokenSequence]) -> Result<u32, PredictError> {
    let first = corpus.first().ok_or(PredictError::EmptyCorpus)?;
    let q = first.q();
    if let Some(s) = corpus.iter().find(|s| s.q() != q) {
        return Err(PredictError::CodebookMismatch { model: q, seq: s.q() });
    }
    Ok(q)
}

/// Every token equally likely, everywhere.
#[derive(Debug, Clone)]
pub struct UniformModel {
    q: u32,
}

impl UniformModel {
    pub fn new(q: u32) -> Result<Self, PredictError> {
        Codebook::new(q)?;
        Ok(Self { q })
    }

    fn dist(&self) -> Vec<f64> {
        vec![1.0 / self.q as f64; self.q as usize]
    }
}

impl ProbModel for UniformModel {
    fn q(&self) -> u32 {
        self.q
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { causal: true, bidirectional: true, uses_side_info: false }
    }

    fn predict_slot(&self, _: &[Slot], _: usize, _: &SideInfo) -> Result<SlotPrediction, PredictError> {
        Ok(SlotPrediction::plain(self.dist()))
    }

    fn next_token(&self, _: &[u32], _: &SideInfo) -> Result<Vec<f64>, PredictError> {
        Ok(self.dist())
    }

    fn marginal(&self, _: &SideInfo) -> Result<Vec<f64>, PredictError> {
        Ok(self.dist())
    }

    fn context_window(&self) -> Option<usize> {
        Some(0)
    }
}

/// Context-free smoothed token frequencies.
#[derive(Debug, Clone)]
pub struct UnigramModel {
    probs: Vec<f64>,
}

impl UnigramModel {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// `P(id) = (count(id) + α) / (total + α·Q)`.
pub fn train_unigram(corpus: &[TokenSequence], alpha: f64) -> Result<UnigramModel, PredictError> {
    check_alpha(alpha)?;
    let q = check_corpus(corpus)?;
    let mut counts = vec![0u64; q as usize];
    for s in corpus {
        for &id in s.ids() {
            counts[id as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + alpha * q as f64;
    Ok(UnigramModel { probs: counts.iter().map(|&c| (c as f64 + alpha) / denom).collect() })
}

impl ProbModel for UnigramModel {
    fn q(&self) -> u32 {
        self.probs.len() as u32
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { causal: true, bidirectional: true, uses_side_info: false }
    }

    fn predict_slot(&self, _: &[Slot], _: usize, _: &SideInfo) -> Result<SlotPrediction, PredictError> {
        Ok(SlotPrediction::plain(self.probs.clone()))
    }

    fn next_token(&self, _: &[u32], _: &SideInfo) -> Result<Vec<f64>, PredictError> {
        Ok(self.probs.clone())
    }

    fn marginal(&self, _: &SideInfo) -> Result<Vec<f64>, PredictError> {
        Ok(self.probs.clone())
    }

    fn context_window(&self) -> Option<usize> {
        Some(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    counts: Vec<u32>,
    total: u64,
}

/// Causal order-`k` model with additive smoothing and unigram backoff for
/// unseen or incomplete contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    q: u32,
    order: usize,
    alpha: f64,
    unigram_counts: Vec<u64>,
    unigram: Vec<f64>,
    contexts: HashMap<u64, ContextCounts>,
}

fn context_key(q: u32, ctx: &[u32]) -> u64 {
    ctx.iter().fold(0u64, |acc, &id| acc * q as u64 + id as u64)
}

fn context_of_key(q: u32, order: usize, mut key: u64) -> Vec<u32> {
    let mut ctx = vec![0u32; order];
    for slot in ctx.iter_mut().rev() {
        *slot = (key % q as u64) as u32;
        key /= q as u64;
    }
    ctx
}

/// Trains a causal order-`k` model on `corpus`.
pub fn train_markov(corpus: &[TokenSequence], order: usize, alpha: f64) -> Result<MarkovModel, PredictError> {
    check_alpha(alpha)?;
    let q = check_corpus(corpus)?;
    if order == 0 {
        return Err(PredictError::ModelFile("order must be at least 1".into()));
    }
    if (q as f64).powi(order as i32) >= u64::MAX as f64 {
        return Err(PredictError::ModelFile(format!("order {order} too large for q={q}")));
    }
    if !corpus.iter().any(|s| s.len() > order) {
        return Err(PredictError::EmptyCorpus);
    }
    let mut unigram_counts = vec![0u64; q as usize];
    let mut contexts: HashMap<u64, ContextCounts> = HashMap::new();
    for s in corpus {
        let ids = s.ids();
        for &id in ids {
            unigram_counts[id as usize] += 1;
        }
        for i in order..ids.len() {
            let e = contexts
                .entry(context_key(q, &ids[i - order..i]))
                .or_insert_with(|| ContextCounts { counts: vec![0; q as usize], total: 0 });
            e.counts[ids[i] as usize] += 1;
            e.total += 1;
        }
    }
    Ok(MarkovModel::from_counts(q, order, alpha, unigram_counts, contexts))
}

/// One Markov model per class label, trained on that label's corpus.
pub fn train_markov_conditional(
    corpora: &BTreeMap<u32, Vec<TokenSequence>>,
    order: usize,
    alpha: f64,
) -> Result<ClassConditional, PredictError> {
    let mut models: BTreeMap<u32, Arc<dyn ProbModel>> = BTreeMap::new();
    for (&label, corpus) in corpora {
        models.insert(label, Arc::new(train_markov(corpus, order, alpha)?));
    }
    ClassConditional::new(models)
}

impl MarkovModel {
    fn from_counts(
        q: u32,
        order: usize,
        alpha: f64,
        unigram_counts: Vec<u64>,
        contexts: HashMap<u64, ContextCounts>,
    ) -> Self {
        let total: u64 = unigram_counts.iter().sum();
        let denom = total as f64 + alpha * q as f64;
        let unigram = unigram_counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
        Self { q, order, alpha, unigram_counts, unigram, contexts }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smoothed conditional for a full context, or the unigram backoff.
    pub fn conditional(&self, ctx: Option<&[u32]>) -> Vec<f64> {
        let Some(ctx) = ctx else { return self.unigram.clone() };
        match self.contexts.get(&context_key(self.q, ctx)) {
            Some(c) => {
                let denom = c.total as f64 + self.alpha * self.q as f64;
                c.counts.iter().map(|&n| (n as f64 + self.alpha) / denom).collect()
            }
            None => self.unigram.clone(),
        }
    }

    /// Serializes counts in the canonical JSON model-file layout.
    pub fn to_json(&self) -> String {
        let mut keys: Vec<&u64> = self.contexts.keys().collect();
        keys.sort();
        let file = MarkovModelFile {
            format: MODEL_FORMAT.into(),
            version: 1,
            q: self.q,
            order: self.order,
            alpha: self.alpha,
            unigram: self.unigram_counts.clone(),
            contexts: keys
                .into_iter()
                .map(|k| {
                    let c = &self.contexts[k];
                    ContextEntry {
                        context: context_of_key(self.q, self.order, *k),
                        counts: c
                            .counts
                            .iter()
                            .enumerate()
                            .filter(|(_, &n)| n > 0)
                            .map(|(i, &n)| (i as u32, n as u64))
                            .collect(),
                    }
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        let f: MarkovModelFile = serde_json::from_str(text).map_err(|e| PredictError::ModelFile(e.to_string()))?;
        if f.format != MODEL_FORMAT || f.version != 1 {
            return Err(PredictError::ModelFile(format!("unsupported format {} v{}", f.format, f.version)));
        }
        Codebook::new(f.q)?;
        check_alpha(f.alpha)?;
        if f.order == 0 || f.unigram.len() != f.q as usize {
            return Err(PredictError::ModelFile("bad order or unigram length".into()));
        }
        let mut contexts = HashMap::new();
        for e in f.contexts {
            if e.context.len() != f.order || e.context.iter().any(|&id| id >= f.q) {
                return Err(PredictError::ModelFile("bad context".into()));
            }
            let mut counts = vec![0u32; f.q as usize];
            let mut total = 0;
            for (id, n) in e.counts {
                if id >= f.q || n > u32::MAX as u64 {
                    return Err(PredictError::ModelFile("bad count entry".into()));
                }
                counts[id as usize] = n as u32;
                total += n;
            }
            contexts.insert(context_key(f.q, &e.context), ContextCounts { counts, total });
        }
        Ok(Self::from_counts(f.q, f.order, f.alpha, f.unigram, contexts))
    }
}

const MODEL_FORMAT: &str = "tokcom-markov";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkovModelFile {
    format: String,
    version: u32,
    q: u32,
    order: usize,
    alpha: f64,
    unigram: Vec<u64>,
    contexts: Vec<ContextEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextEntry {
    context: Vec<u32>,
    counts: Vec<(u32, u64)>,
}

impl ProbModel for MarkovModel {
    fn q(&self) -> u32 {
        self.q
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { causal: true, bidirectional: false, uses_side_info: false }
    }

    fn predict_slot(&self, slots: &[Slot], pos: usize, _: &SideInfo) -> Result<SlotPrediction, PredictError> {
        let ctx = if pos >= self.order { known_window(slots, pos - self.order, pos) } else { None };
        Ok(SlotPrediction::plain(self.conditional(ctx.as_deref())))
    }

    fn next_token(&self, prefix: &[u32], _: &SideInfo) -> Result<Vec<f64>, PredictError> {
        let n = prefix.len();
        Ok(self.conditional((n >= self.order).then(|| &prefix[n - self.order..])))
    }

    fn marginal(&self, _: &SideInfo) -> Result<Vec<f64>, PredictError> {
        Ok(self.unigram.clone())
    }

    fn context_window(&self) -> Option<usize> {
        Some(self.order)
    }

    fn has_left_context(&self, slots: &[Slot], pos: usize) -> bool {
        pos >= self.order && slots[pos - self.order..pos].iter().all(|s| !s.is_masked())
    }
}

/// The exact causal law of a [`MarkovSource`].
#[derive(Debug, Clone)]
pub struct SourceModel {
    source: MarkovSource,
    marginals: BTreeMap<Option<u32>, Vec<f64>>,
}

impl SourceModel {
    pub fn new(source: &MarkovSource) -> Result<Self, PredictError> {
        let q = source.q() as usize;
        let token_marginal = |side: &SideInfo| -> Result<Vec<f64>, PredictError> {
            let table = source.table(side)?;
            if source.order() == 0 {
                return Ok(table.transition().to_vec());
            }
            let pi = source.stationary(side)?;
            let mut m = vec![0.0; q];
            for (ctx, w) in pi.iter().enumerate() {
                m[ctx % q] += w;
            }
            Ok(m)
        };
        let mut marginals = BTreeMap::new();
        if source.is_class_conditional() {
            for label in source.class_labels() {
                let side = SideInfo::ClassLabel { label, bits: 32 };
                marginals.insert(Some(label), token_marginal(&side)?);
            }
        } else {
            marginals.insert(None, token_marginal(&SideInfo::None)?);
        }
        Ok(Self { source: source.clone(), marginals })
    }

    /// Forward exact model combined with the exact time-reversed model.
    pub fn bidirectional(source: &MarkovSource) -> Result<Bidirectional, PredictError> {
        let fwd = Arc::new(SourceModel::new(source)?);
        let bwd = Arc::new(SourceModel::new(&source.reversed()?)?);
        bidirectional_combine(fwd, bwd)
    }

    pub fn source(&self) -> &MarkovSource {
        &self.source
    }

    fn marginal_for(&self, side: &SideInfo) -> Result<&Vec<f64>, PredictError> {
        let key = if self.source.is_class_conditional() {
            Some(side.label().ok_or(TokensError::MissingClassLabel)?)
        } else {
            None
        };
        self.marginals.get(&key).ok_or_else(|| TokensError::UnknownClassLabel(key.unwrap_or(0)).into())
    }

    /// Conditional given the first `prefix.len() < order` tokens, from the
    /// initial prefix law.
    fn initial_conditional(&self, table: &MarkovTable, prefix: &[u32]) -> Option<Vec<f64>> {
        let q = self.source.q() as usize;
        let k = self.source.order();
        let j = prefix.len();
        let block = q.pow((k - j) as u32);
        let sub = block / q;
        let base = prefix.iter().fold(0usize, |a, &id| a * q + id as usize) * block;
        let init = table.initial();
        let mut out: Vec<f64> = (0..q).map(|x| init[base + x * sub..base + (x + 1) * sub].iter().sum()).collect();
        let total: f64 = out.iter().sum();
        if total <= 0.0 {
            return None;
        }
        out.iter_mut().for_each(|v| *v /= total);
        Some(out)
    }

    fn causal(&self, window: Option<&[u32]>, pos: usize, side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        let table = self.source.table(side)?;
        let k = self.source.order();
        if k == 0 {
            return Ok(table.transition().to_vec());
        }
        match window {
            Some(ctx) if pos >= k => Ok(self.source.row(table, ctx).to_vec()),
            Some(prefix) => {
                Ok(self.initial_conditional(table, prefix).map_or_else(|| self.marginal_for(side).cloned(), Ok)?)
            }
            None => Ok(self.marginal_for(side)?.clone()),
        }
    }
}

impl ProbModel for SourceModel {
    fn q(&self) -> u32 {
        self.source.q()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { causal: true, bidirectional: false, uses_side_info: self.source.is_class_conditional() }
    }

    fn predict_slot(&self, slots: &[Slot], pos: usize, side: &SideInfo) -> Result<SlotPrediction, PredictError> {
        let start = pos.saturating_sub(self.source.order());
        let window = known_window(slots, start, pos);
        self.causal(window.as_deref(), pos, side).map(SlotPrediction::plain)
    }

    fn next_token(&self, prefix: &[u32], side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        let n = prefix.len();
        let start = n.saturating_sub(self.source.order());
        self.causal(Some(&prefix[start..]), n, side)
    }

    fn marginal(&self, side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        self.marginal_for(side).cloned()
    }

    fn context_window(&self) -> Option<usize> {
        Some(self.source.order())
    }

    fn has_left_context(&self, slots: &[Slot], pos: usize) -> bool {
        let k = self.source.order();
        k == 0 || (pos > 0 && slots[pos.saturating_sub(k)..pos].iter().all(|s| !s.is_masked()))
    }
}

/// Masked-position model from a forward causal model and a model trained on
/// reversed sequences.
///
/// With both contexts present the result is
/// `normalize(P_fwd(x | left) · P_bwd(x | right) / P(x))`, where `P(x)` is the
/// backward model's marginal. For a Markov chain built from its true forward
/// and reversed laws this is the exact posterior given both neighbours; when
/// the marginal is uniform it reduces to the plain product.
#[derive(Clone)]
pub struct Bidirectional {
    fwd: Arc<dyn ProbModel>,
    bwd: Arc<dyn ProbModel>,
}

pub fn bidirectional_combine(fwd: Arc<dyn ProbModel>, bwd: Arc<dyn ProbModel>) -> Result<Bidirectional, PredictError> {
    if fwd.q() != bwd.q() {
        return Err(PredictError::CodebookMismatch { model: fwd.q(), seq: bwd.q() });
    }
    if !fwd.capabilities().causal || !bwd.capabilities().causal {
        return Err(PredictError::NotCausal);
    }
    Ok(Bidirectional { fwd, bwd })
}

impl std::fmt::Debug for Bidirectional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bidirectional").field("q", &self.fwd.q()).finish()
    }
}

impl ProbModel for Bidirectional {
    fn q(&self) -> u32 {
        self.fwd.q()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            causal: true,
            bidirectional: true,
            uses_side_info: self.fwd.capabilities().uses_side_info || self.bwd.capabilities().uses_side_info,
        }
    }

    fn predict_slot(&self, slots: &[Slot], pos: usize, side: &SideInfo) -> Result<SlotPrediction, PredictError> {
        let n = slots.len();
        let end = match self.bwd.context_window() {
            Some(w) => (pos + 1 + w).min(n),
            None => n,
        };
        let mut rev: Vec<Slot> = slots[pos + 1..end].iter().rev().copied().collect();
        rev.push(Slot::Masked);
        let rpos = rev.len() - 1;

        let left_ok = self.fwd.has_left_context(slots, pos);
        let right_ok = pos + 1 < n && self.bwd.has_left_context(&rev, rpos);
        match (left_ok, right_ok) {
            (true, false) | (false, false) => self.fwd.predict_slot(slots, pos, side),
            (false, true) => self.bwd.predict_slot(&rev, rpos, side),
            (true, true) => {
                let f = self.fwd.predict_slot(slots, pos, side)?.probs;
                let b = self.bwd.predict_slot(&rev, rpos, side)?.probs;
                let m = self.bwd.marginal(side)?;
                let mut out: Vec<f64> = f
                    .iter()
                    .zip(&b)
                    .zip(&m)
                    .map(|((&x, &y), &z)| if z > 0.0 { x * y / z } else { 0.0 })
                    .collect();
                let total: f64 = out.iter().sum();
                if total > 0.0 && total.is_finite() {
                    out.iter_mut().for_each(|v| *v /= total);
                    Ok(SlotPrediction::plain(out))
                } else {
                    let avg = f.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                    Ok(SlotPrediction { probs: avg, fallback: true })
                }
            }
        }
    }

    fn next_token(&self, prefix: &[u32], side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        self.fwd.next_token(prefix, side)
    }

    fn marginal(&self, side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        self.fwd.marginal(side)
    }

    fn context_window(&self) -> Option<usize> {
        self.fwd.context_window()
    }

    fn has_left_context(&self, slots: &[Slot], pos: usize) -> bool {
        self.fwd.has_left_context(slots, pos)
    }
}

/// Dispatches to one model per class label.
#[derive(Clone)]
pub struct ClassConditional {
    q: u32,
    models: BTreeMap<u32, Arc<dyn ProbModel>>,
}

impl std::fmt::Debug for ClassConditional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClassConditional").field("q", &self.q).field("labels", &self.models.keys()).finish()
    }
}

impl ClassConditional {
    pub fn new(models: BTreeMap<u32, Arc<dyn ProbModel>>) -> Result<Self, PredictError> {
        let q = models.values().next().ok_or(PredictError::EmptyCorpus)?.q();
        if let Some(m) = models.values().find(|m| m.q() != q) {
            return Err(PredictError::CodebookMismatch { model: q, seq: m.q() });
        }
        Ok(Self { q, models })
    }

    fn pick(&self, side: &SideInfo) -> Result<&Arc<dyn ProbModel>, PredictError> {
        let label = side.label().ok_or(TokensError::MissingClassLabel)?;
        self.models.get(&label).ok_or_else(|| TokensError::UnknownClassLabel(label).into())
    }
}

impl ProbModel for ClassConditional {
    fn q(&self) -> u32 {
        self.q
    }

    fn capabilities(&self) -> Capabilities {
        let mut caps = Capabilities { causal: true, bidirectional: true, uses_side_info: true };
        for m in self.models.values() {
            let c = m.capabilities();
            caps.causal &= c.causal;
            caps.bidirectional &= c.bidirectional;
        }
        caps
    }

    fn predict_slot(&self, slots: &[Slot], pos: usize, side: &SideInfo) -> Result<SlotPrediction, PredictError> {
        self.pick(side)?.predict_slot(slots, pos, side)
    }

    fn next_token(&self, prefix: &[u32], side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        self.pick(side)?.next_token(prefix, side)
    }

    fn marginal(&self, side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        self.pick(side)?.marginal(side)
    }

    fn context_window(&self) -> Option<usize> {
        self.models.values().map(|m| m.context_window()).try_fold(0usize, |a, w| w.map(|w| a.max(w)))
    }

    fn has_left_context(&self, slots: &[Slot], pos: usize) -> bool {
        self.models.values().all(|m| m.has_left_context(slots, pos))
    }
}
