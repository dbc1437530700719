//! Token alphabets, sequences, masking and reproducible token sources.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng::{sample_discrete, substream, Purpose};

/// Tolerance for "sums to one" checks on source tables.
pub const DIST_TOLERANCE: f64 = 1e-9;

const CORPUS_MAGIC: &[u8; 4] = b"TOKC";
const CORPUS_VERSION: u16 = 1;

/// Largest dense table (contexts × q) a source may hold.
const MAX_TABLE_ENTRIES: usize = 1 << 26;

#[derive(Debug, Error)]
pub enum TokensError {
    #[error("codebook size must be at least 2, got {0}")]
    CodebookTooSmall(u32),
    #[error("invalid embedding table: {0}")]
    BadEmbeddings(String),
    #[error("token id {id} out of range for codebook of size {q}")]
    IdOutOfRange { id: u32, q: u32 },
    #[error("sequence must contain at least one token")]
    EmptySequence,
    #[error("class label {label} does not fit in {bits} bits")]
    LabelTooWide { label: u32, bits: u32 },
    #[error("source is class conditional; a known class label is required")]
    MissingClassLabel,
    #[error("no transition table for class label {0}")]
    UnknownClassLabel(u32),
    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),
    #[error("chain has no unique stationary distribution")]
    NonErgodic,
    #[error("operation requires an order-1 source")]
    UnsupportedOrder,
    #[error("sequences in a corpus must share one codebook (saw q={0} and q={1})")]
    MixedCodebooks(u32, u32),
    #[error("bad corpus magic")]
    BadMagic,
    #[error("unsupported corpus version {0}")]
    BadVersion(u16),
    #[error("corpus file truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Number of bits used to serialize one token of a `q`-ary alphabet.
pub fn bits_for(q: u32) -> u32 {
    debug_assert!(q >= 2);
    32 - (q - 1).leading_zeros()
}

/// Token alphabet of size `q` with optional embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    size_q: u32,
    bits_per_token: u32,
    embeddings: Option<Vec<Vec<f64>>>,
}

impl Codebook {
    pub fn new(size_q: u32) -> Result<Self, TokensError> {
        if size_q < 2 {
            return Err(TokensError::CodebookTooSmall(size_q));
        }
        Ok(Self { size_q, bits_per_token: bits_for(size_q), embeddings: None })
    }

    /// Attaches one embedding row per token. Rows must share a dimension, be
    /// finite and have nonzero norm.
    pub fn with_embeddings(size_q: u32, rows: Vec<Vec<f64>>) -> Result<Self, TokensError> {
        let mut cb = Self::new(size_q)?;
        if rows.len() != size_q as usize {
            return Err(TokensError::BadEmbeddings(format!("expected {size_q} rows, got {}", rows.len())));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(TokensError::BadEmbeddings("zero dimension".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(TokensError::BadEmbeddings(format!("row {i} has dimension {}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(TokensError::BadEmbeddings(format!("row {i} is not finite")));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(TokensError::BadEmbeddings(format!("row {i} has zero norm")));
            }
        }
        cb.embeddings = Some(rows);
        Ok(cb)
    }

    pub fn size(&self) -> u32 {
        self.size_q
    }

    pub fn bits_per_token(&self) -> u32 {
        self.bits_per_token
    }

    pub fn embeddings(&self) -> Option<&[Vec<f64>]> {
        self.embeddings.as_deref()
    }
}

/// A non-empty sequence of token ids over a codebook of size `q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    q: u32,
    ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(q: u32, ids: Vec<u32>) -> Result<Self, TokensError> {
        if q < 2 {
            return Err(TokensError::CodebookTooSmall(q));
        }
        if ids.is_empty() {
            return Err(TokensError::EmptySequence);
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= q) {
            return Err(TokensError::IdOutOfRange { id, q });
        }
        Ok(Self { q, ids })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Known(u32),
    Masked,
}

impl Slot {
    pub fn known(self) -> Option<u32> {
        match self {
            Slot::Known(id) => Some(id),
            Slot::Masked => None,
        }
    }

    pub fn is_masked(self) -> bool {
        matches!(self, Slot::Masked)
    }
}

/// Token positions, each either known or masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    q: u32,
    slots: Vec<Slot>,
}

impl MaskedSequence {
    pub fn new(q: u32, slots: Vec<Slot>) -> Result<Self, TokensError> {
        if q < 2 {
            return Err(TokensError::CodebookTooSmall(q));
        }
        if slots.is_empty() {
            return Err(TokensError::EmptySequence);
        }
        for s in &slots {
            if let Slot::Known(id) = *s {
                if id >= q {
                    return Err(TokensError::IdOutOfRange { id, q });
                }
            }
        }
        Ok(Self { q, slots })
    }

    pub fn from_sequence(seq: &TokenSequence) -> Self {
        Self { q: seq.q, slots: seq.ids.iter().map(|&id| Slot::Known(id)).collect() }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn mask(&mut self, pos: usize) {
        self.slots[pos] = Slot::Masked;
    }

    pub fn set(&mut self, pos: usize, id: u32) -> Result<(), TokensError> {
        if id >= self.q {
            return Err(TokensError::IdOutOfRange { id, q: self.q });
        }
        self.slots[pos] = Slot::Known(id);
        Ok(())
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_masked()).map(|(i, _)| i).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_masked()).count()
    }

    /// Converts to a sequence if no slot is masked.
    pub fn to_sequence(&self) -> Option<TokenSequence> {
        let ids: Option<Vec<u32>> = self.slots.iter().map(|s| s.known()).collect();
        ids.map(|ids| TokenSequence { q: self.q, ids })
    }
}

/// Out-of-band conditioning signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SideInfo {
    #[default]
    None,
    ClassLabel { label: u32, bits: u32 },
}

impl SideInfo {
    pub fn class_label(label: u32, bits: u32) -> Result<Self, TokensError> {
        if bits == 0 || bits > 31 || label >= (1u32 << bits) {
            return Err(TokensError::LabelTooWide { label, bits });
        }
        Ok(SideInfo::ClassLabel { label, bits })
    }

    pub fn label(&self) -> Option<u32> {
        match *self {
            SideInfo::None => None,
            SideInfo::ClassLabel { label, .. } => Some(label),
        }
    }
}

/// Transition and initial law of one Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTable {
    /// Row-major, `q^order` rows of `q` probabilities.
    transition: Vec<f64>,
    /// Distribution over the `q^order` length-`order` prefixes.
    initial: Vec<f64>,
}

impl MarkovTable {
    pub fn new(transition: Vec<f64>, initial: Vec<f64>) -> Self {
        Self { transition, initial }
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tables {
    Single(MarkovTable),
    PerClass(BTreeMap<u32, MarkovTable>),
}

/// Order-`k` Markov token source, optionally with one table per class label.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSource {
    q: u32,
    order: usize,
    tables: Tables,
}

fn check_dist(probs: &[f64], what: &str) -> Result<(), TokensError> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(TokensError::MalformedDistribution(format!("{what}: negative or non-finite entry")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > DIST_TOLERANCE {
        return Err(TokensError::MalformedDistribution(format!("{what}: sums to {sum}")));
    }
    Ok(())
}

fn entropy_bits(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

impl MarkovSource {
    fn validate_table(q: u32, order: usize, table: &MarkovTable) -> Result<(), TokensError> {
        let contexts = Self::context_count(q, order)?;
        let q = q as usize;
        if table.transition.len() != contexts * q {
            return Err(TokensError::MalformedDistribution(format!(
                "transition table has {} entries, expected {}",
                table.transition.len(),
                contexts * q
            )));
        }
        if table.initial.len() != contexts {
            return Err(TokensError::MalformedDistribution(format!(
                "initial table has {} entries, expected {contexts}",
                table.initial.len()
            )));
        }
        for (c, row) in table.transition.chunks(q).enumerate() {
            check_dist(row, &format!("transition row {c}"))?;
        }
        check_dist(&table.initial, "initial distribution")
    }

    fn context_count(q: u32, order: usize) -> Result<usize, TokensError> {
        let mut n: usize = 1;
        for _ in 0..order {
            n = n.checked_mul(q as usize).filter(|&n| n * q as usize <= MAX_TABLE_ENTRIES).ok_or_else(|| {
                TokensError::MalformedDistribution(format!("order {order} table over q={q} is too large"))
            })?;
        }
        Ok(n)
    }

    pub fn new(q: u32, order: usize, table: MarkovTable) -> Result<Self, TokensError> {
        Codebook::new(q)?;
        Self::validate_table(q, order, &table)?;
        Ok(Self { q, order, tables: Tables::Single(table) })
    }

    /// One table per class label; generation then requires a matching label.
    pub fn class_conditional(q: u32, order: usize, tables: BTreeMap<u32, MarkovTable>) -> Result<Self, TokensError> {
        Codebook::new(q)?;
        if tables.is_empty() {
            return Err(TokensError::MalformedDistribution("no class tables".into()));
        }
        for t in tables.values() {
            Self::validate_table(q, order, t)?;
        }
        Ok(Self { q, order, tables: Tables::PerClass(tables) })
    }

    /// I.i.d. tokens drawn from `probs`.
    pub fn iid(probs: Vec<f64>) -> Result<Self, TokensError> {
        let q = u32::try_from(probs.len()).map_err(|_| TokensError::MalformedDistribution("too many symbols".into()))?;
        Self::new(q, 0, MarkovTable::new(probs, vec![1.0]))
    }

    pub fn uniform(q: u32) -> Result<Self, TokensError> {
        Codebook::new(q)?;
        Self::iid(vec![1.0 / q as f64; q as usize])
    }

    /// Order-1 chain that repeats the previous token with probability `stay`
    /// and otherwise moves to one of the other `q - 1` tokens uniformly.
    /// Starts from the uniform distribution, which is also stationary.
    pub fn sticky(q: u32, stay: f64) -> Result<Self, TokensError> {
        Codebook::new(q)?;
        if !(0.0..=1.0).contains(&stay) {
            return Err(TokensError::MalformedDistribution(format!("stay probability {stay}")));
        }
        let qs = q as usize;
        let other = (1.0 - stay) / (qs - 1) as f64;
        let mut transition = vec![other; qs * qs];
        for s in 0..qs {
            transition[s * qs + s] = stay;
        }
        Self::new(q, 1, MarkovTable::new(transition, vec![1.0 / qs as f64; qs]))
    }

    /// Deterministic cycle `0 → 1 → … → q-1 → 0`.
    pub fn cycle(q: u32) -> Result<Self, TokensError> {
        Codebook::new(q)?;
        let qs = q as usize;
        let mut transition = vec![0.0; qs * qs];
        for s in 0..qs {
            transition[s * qs + (s + 1) % qs] = 1.0;
        }
        Self::new(q, 1, MarkovTable::new(transition, vec![1.0 / qs as f64; qs]))
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_class_conditional(&self) -> bool {
        matches!(self.tables, Tables::PerClass(_))
    }

    pub fn class_labels(&self) -> Vec<u32> {
        match &self.tables {
            Tables::Single(_) => Vec::new(),
            Tables::PerClass(m) => m.keys().copied().collect(),
        }
    }

    /// Table used under `side`. Single-table sources ignore side info.
    pub fn table(&self, side: &SideInfo) -> Result<&MarkovTable, TokensError> {
        match &self.tables {
            Tables::Single(t) => Ok(t),
            Tables::PerClass(m) => {
                let label = side.label().ok_or(TokensError::MissingClassLabel)?;
                m.get(&label).ok_or(TokensError::UnknownClassLabel(label))
            }
        }
    }

    /// Index of a length-`order` context; the most recent token is last.
    pub fn context_index(&self, context: &[u32]) -> usize {
        debug_assert_eq!(context.len(), self.order);
        context.iter().fold(0usize, |acc, &id| acc * self.q as usize + id as usize)
    }

    /// Transition row for a full context.
    pub fn row<'a>(&self, table: &'a MarkovTable, context: &[u32]) -> &'a [f64] {
        let q = self.q as usize;
        let c = self.context_index(context);
        &table.transition[c * q..(c + 1) * q]
    }

    /// Draws `n` tokens. Pure function of its arguments.
    pub fn generate(&self, n: usize, side: &SideInfo, seed: u64) -> Result<TokenSequence, TokensError> {
        if n == 0 {
            return Err(TokensError::EmptySequence);
        }
        let table = self.table(side)?;
        let mut rng = substream(seed, Purpose::Source, 0);
        let q = self.q as usize;
        let k = self.order;
        let mut ids = Vec::with_capacity(n.max(k));

        let prefix = sample_discrete(&mut rng, &table.initial);
        for j in (0..k).rev() {
            ids.push(((prefix / q.pow(j as u32)) % q) as u32);
        }
        let mut ctx = prefix;
        let contexts = q.pow(k as u32);
        while ids.len() < n {
            let row = &table.transition[ctx * q..(ctx + 1) * q];
            let x = sample_discrete(&mut rng, row);
            ids.push(x as u32);
            if k > 0 {
                ctx = (ctx * q + x) % contexts;
            }
        }
        ids.truncate(n);
        Ok(TokenSequence { q: self.q, ids })
    }

    /// Entropy rate in bits per token.
    ///
    /// Exact for order 0 and for higher orders whose lifted context chain
    /// stays small (stationary law by power iteration on the lazy chain);
    /// otherwise estimated from a 10^6-token sample.
    pub fn entropy_rate(&self, side: &SideInfo) -> Result<f64, TokensError> {
        let table = self.table(side)?;
        if self.order == 0 {
            return Ok(entropy_bits(&table.transition));
        }
        let q = self.q as usize;
        let states = q.pow(self.order as u32);
        if states * q > (1 << 22) {
            return self.sampled_entropy_rate(side, 1_000_000);
        }
        let pi = self.stationary_of(table)?;
        Ok(table
            .transition
            .chunks(q)
            .zip(&pi)
            .map(|(row, &w)| if w > 0.0 { w * entropy_bits(row) } else { 0.0 })
            .sum())
    }

    fn sampled_entropy_rate(&self, side: &SideInfo, n: usize) -> Result<f64, TokensError> {
        let table = self.table(side)?;
        let seq = self.generate(n, side, 0)?;
        let k = self.order;
        let ids = seq.ids();
        let bits: f64 = (k..n).map(|i| -self.row(table, &ids[i - k..i])[ids[i] as usize].log2()).sum();
        Ok(bits / (n - k) as f64)
    }

    /// Stationary distribution over length-`order` contexts.
    pub fn stationary(&self, side: &SideInfo) -> Result<Vec<f64>, TokensError> {
        let table = self.table(side)?;
        if self.order == 0 {
            return Ok(vec![1.0]);
        }
        self.stationary_of(table)
    }

    fn stationary_of(&self, table: &MarkovTable) -> Result<Vec<f64>, TokensError> {
        let q = self.q as usize;
        let states = q.pow(self.order as u32);
        let succ = |s: usize, x: usize| (s * q + x) % states;
        if closed_class_count(states, q, |s, x| table.transition[s * q + x] > 0.0, succ) != 1 {
            return Err(TokensError::NonErgodic);
        }
        let mut pi = vec![1.0 / states as f64; states];
        let mut next = vec![0.0; states];
        for _ in 0..2_000_000 {
            next.iter_mut().zip(&pi).for_each(|(n, &p)| *n = 0.5 * p);
            for s in 0..states {
                let w = 0.5 * pi[s];
                if w == 0.0 {
                    continue;
                }
                for x in 0..q {
                    let p = table.transition[s * q + x];
                    if p > 0.0 {
                        next[succ(s, x)] += w * p;
                    }
                }
            }
            let total: f64 = next.iter().sum();
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a / total - b).abs()).sum();
            for (p, n) in pi.iter_mut().zip(&next) {
                *p = n / total;
            }
            if delta < 1e-12 {
                return Ok(pi);
            }
        }
        Err(TokensError::NonErgodic)
    }

    /// Time reversal of a stationary order-1 chain: `R[r][x] = π(x)·A[x][r]/π(r)`.
    /// The reversed chain starts from the stationary law. An i.i.d. source is
    /// its own reversal.
    pub fn reversed(&self) -> Result<MarkovSource, TokensError> {
        if self.order == 0 {
            return Ok(self.clone());
        }
        if self.order != 1 {
            return Err(TokensError::UnsupportedOrder);
        }
        let rev = |t: &MarkovTable| -> Result<MarkovTable, TokensError> {
            let q = self.q as usize;
            let pi = self.stationary_of(t)?;
            let mut transition = vec![0.0; q * q];
            for r in 0..q {
                if pi[r] <= 0.0 {
                    // transient state: any valid row
                    transition[r * q + r] = 1.0;
                    continue;
                }
                let row = &mut transition[r * q..(r + 1) * q];
                for (x, v) in row.iter_mut().enumerate() {
                    *v = pi[x] * t.transition[x * q + r] / pi[r];
                }
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            Ok(MarkovTable::new(transition, pi))
        };
        let tables = match &self.tables {
            Tables::Single(t) => Tables::Single(rev(t)?),
            Tables::PerClass(m) => {
                Tables::PerClass(m.iter().map(|(&l, t)| rev(t).map(|r| (l, r))).collect::<Result<_, _>>()?)
            }
        };
        Ok(MarkovSource { q: self.q, order: 1, tables })
    }
}

/// Counts the closed communicating classes (sink SCCs) of a graph with
/// `states` nodes and up to `fanout` successors each.
fn closed_class_count(
    states: usize,
    fanout: usize,
    has_edge: impl Fn(usize, usize) -> bool,
    succ: impl Fn(usize, usize) -> usize,
) -> usize {
    // iterative Tarjan
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; states];
    let mut low = vec![0usize; states];
    let mut on_stack = vec![false; states];
    let mut comp = vec![UNVISITED; states];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut comps = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..states {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge == 0 && index[v] == UNVISITED {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let mut descended = false;
            while *edge < fanout {
                let x = *edge;
                *edge += 1;
                if !has_edge(v, x) {
                    continue;
                }
                let w = succ(v, x);
                if index[w] == UNVISITED {
                    call.push((w, 0));
                    descended = true;
                    break;
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            }
            if descended {
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp[w] = comps;
                    if w == v {
                        break;
                    }
                }
                comps += 1;
            }
        }
    }

    let mut closed = vec![true; comps];
    for v in 0..states {
        for x in 0..fanout {
            if has_edge(v, x) && comp[succ(v, x)] != comp[v] {
                closed[comp[v]] = false;
            }
        }
    }
    closed.iter().filter(|&&c| c).count()
}

/// Writes a corpus in the `TOKC` format.
pub fn write_corpus<W: Write>(mut w: W, q: u32, seqs: &[TokenSequence]) -> Result<(), TokensError> {
    Codebook::new(q)?;
    if let Some(s) = seqs.iter().find(|s| s.q != q) {
        return Err(TokensError::MixedCodebooks(q, s.q));
    }
    w.write_all(CORPUS_MAGIC)?;
    w.write_all(&CORPUS_VERSION.to_le_bytes())?;
    w.write_all(&q.to_le_bytes())?;
    w.write_all(&(seqs.len() as u32).to_le_bytes())?;
    for s in seqs {
        w.write_all(&(s.ids.len() as u32).to_le_bytes())?;
        for &id in &s.ids {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), TokensError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TokensError::Truncated,
        _ => TokensError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TokensError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a `TOKC` corpus, returning its codebook size and sequences.
pub fn read_corpus<R: Read>(mut r: R) -> Result<(u32, Vec<TokenSequence>), TokensError> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut magic)?;
    if &magic != CORPUS_MAGIC {
        return Err(TokensError::BadMagic);
    }
    let mut v = [0u8; 2];
    read_exact_or_truncated(&mut r, &mut v)?;
    let version = u16::from_le_bytes(v);
    if version != CORPUS_VERSION {
        return Err(TokensError::BadVersion(version));
    }
    let q = read_u32(&mut r)?;
    Codebook::new(q)?;
    let count = read_u32(&mut r)?;
    let mut seqs = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut ids = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            ids.push(read_u32(&mut r)?);
        }
        seqs.push(TokenSequence::new(q, ids)?);
    }
    Ok((q, seqs))
}

pub fn save_corpus(path: impl AsRef<Path>, q: u32, seqs: &[TokenSequence]) -> Result<(), TokensError> {
    write_corpus(BufWriter::new(File::create(path)?), q, seqs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<(u32, Vec<TokenSequence>), TokensError> {
    read_corpus(BufReader::new(File::open(path)?))
}
