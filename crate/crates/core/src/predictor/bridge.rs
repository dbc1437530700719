//! Newline-delimited JSON bridge to an external predictor.
//!
//! ```text
//! → {"type":"hello","q":1024,"side_info_bits":7}
//! ← {"type":"ready","name":"...","top_k_max":64}
//! → {"type":"predict","tokens":[5,-1,9],"side_info":3,"top_k":16}
//! ← {"type":"dist","positions":[{"pos":1,"ids":[...],"probs":[...]}]}
//! ← {"type":"error","msg":"..."}
//! ```
//!
//! `-1` marks a masked slot. One request is in flight per connection.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{predict, Capabilities, Distribution, PredictError, ProbModel, SlotPrediction};
use crate::tokens::{MaskedSequence, SideInfo, Slot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BridgeRequest {
    Hello { q: u32, side_info_bits: u32 },
    Predict { tokens: Vec<i64>, side_info: Option<u32>, top_k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BridgeResponse {
    Ready { name: String, top_k_max: usize },
    Dist { positions: Vec<DistEntry> },
    Error { msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistEntry {
    pub pos: usize,
    pub ids: Vec<u32>,
    pub probs: Vec<f64>,
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Connection {
    fn round_trip(&mut self, line: &str) -> Result<BridgeResponse, PredictError> {
        let io = |e: std::io::Error| PredictError::Bridge(e.to_string());
        self.writer.write_all(line.as_bytes()).map_err(io)?;
        self.writer.write_all(b"\n").map_err(io)?;
        self.writer.flush().map_err(io)?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(io)? == 0 {
            return Err(PredictError::Bridge("connection closed".into()));
        }
        serde_json::from_str(&reply).map_err(|e| PredictError::Bridge(format!("bad response: {e}")))
    }
}

/// A [`ProbModel`] answered by a remote predictor.
pub struct BridgeModel {
    q: u32,
    side_info_bits: u32,
    name: String,
    top_k_max: usize,
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for BridgeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeModel").field("q", &self.q).field("name", &self.name).finish()
    }
}

impl BridgeModel {
    /// Performs the handshake over an established byte stream.
    pub fn from_streams(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
        q: u32,
        side_info_bits: u32,
    ) -> Result<Self, PredictError> {
        Self::handshake(Connection { reader: Box::new(reader), writer: Box::new(writer), child: None }, q, side_info_bits)
    }

    pub fn connect_tcp(addr: &str, q: u32, side_info_bits: u32) -> Result<Self, PredictError> {
        let stream = TcpStream::connect(addr).map_err(|e| PredictError::Bridge(format!("{addr}: {e}")))?;
        stream.set_nodelay(true).map_err(|e| PredictError::Bridge(e.to_string()))?;
        let read = stream.try_clone().map_err(|e| PredictError::Bridge(e.to_string()))?;
        Self::from_streams(BufReader::new(read), stream, q, side_info_bits)
    }

    /// Launches `program` and talks to it over its stdin/stdout.
    pub fn spawn(program: &str, args: &[String], q: u32, side_info_bits: u32) -> Result<Self, PredictError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| PredictError::Bridge(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let conn = Connection { reader: Box::new(BufReader::new(stdout)), writer: Box::new(stdin), child: Some(child) };
        Self::handshake(conn, q, side_info_bits)
    }

    fn handshake(mut conn: Connection, q: u32, side_info_bits: u32) -> Result<Self, PredictError> {
        let hello = serde_json::to_string(&BridgeRequest::Hello { q, side_info_bits }).expect("serializable");
        match conn.round_trip(&hello)? {
            BridgeResponse::Ready { name, top_k_max } if top_k_max > 0 => {
                Ok(Self { q, side_info_bits, name, top_k_max, conn: Mutex::new(conn) })
            }
            BridgeResponse::Error { msg } => Err(PredictError::Bridge(format!("handshake rejected: {msg}"))),
            other => Err(PredictError::Bridge(format!("unexpected handshake reply {other:?}"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn top_k_max(&self) -> usize {
        self.top_k_max
    }

    fn query(&self, tokens: Vec<i64>, side: &SideInfo) -> Result<Vec<DistEntry>, PredictError> {
        let top_k = self.top_k_max.min(self.q as usize);
        let side_info = side.label();
        if let Some(l) = side_info {
            if self.side_info_bits < 32 && l >= (1 << self.side_info_bits) {
                return Err(PredictError::Bridge(format!("label {l} exceeds {} bits", self.side_info_bits)));
            }
        }
        let req = serde_json::to_string(&BridgeRequest::Predict { tokens, side_info, top_k }).expect("serializable");
        let mut conn = self.conn.lock().map_err(|_| PredictError::Bridge("connection poisoned".into()))?;
        match conn.round_trip(&req)? {
            BridgeResponse::Dist { positions } => Ok(positions),
            BridgeResponse::Error { msg } => Err(PredictError::Bridge(msg)),
            other => Err(PredictError::Bridge(format!("unexpected reply {other:?}"))),
        }
    }

    fn to_prediction(&self, e: &DistEntry) -> Result<SlotPrediction, PredictError> {
        if e.ids.len() != e.probs.len() || e.ids.iter().any(|&i| i >= self.q) {
            return Err(PredictError::Bridge(format!("malformed distribution at position {}", e.pos)));
        }
        let residual = (1.0 - e.probs.iter().sum::<f64>()).max(0.0);
        let dist = Distribution::TopK { ids: e.ids.clone(), probs: e.probs.clone(), residual };
        Ok(SlotPrediction::plain(dist.to_full(self.q)))
    }
}

impl Drop for BridgeModel {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if let Some(child) = conn.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

impl ProbModel for BridgeModel {
    fn q(&self) -> u32 {
        self.q
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { causal: false, bidirectional: true, uses_side_info: true }
    }

    fn predict_slot(&self, slots: &[Slot], pos: usize, side: &SideInfo) -> Result<SlotPrediction, PredictError> {
        Ok(self.predict_many(slots, &[pos], side)?.remove(0))
    }

    fn marginal(&self, side: &SideInfo) -> Result<Vec<f64>, PredictError> {
        self.predict_slot(&[Slot::Masked], 0, side).map(|p| p.probs)
    }

    fn predict_many(
        &self,
        slots: &[Slot],
        positions: &[usize],
        side: &SideInfo,
    ) -> Result<Vec<SlotPrediction>, PredictError> {
        let mut tokens: Vec<i64> = slots.iter().map(|s| s.known().map_or(-1, i64::from)).collect();
        // a requested position is predicted as if masked
        for &p in positions {
            tokens[p] = -1;
        }
        let entries = self.query(tokens, side)?;
        positions
            .iter()
            .map(|&p| {
                let e = entries
                    .iter()
                    .find(|e| e.pos == p)
                    .ok_or_else(|| PredictError::Bridge(format!("no distribution for position {p}")))?;
                self.to_prediction(e)
            })
            .collect()
    }
}

/// Answers bridge requests for `model` on one connection until EOF.
///
/// Protocol violations get an error response and the connection stays open.
pub fn serve_connection(
    model: &dyn ProbModel,
    name: &str,
    top_k_max: usize,
    reader: impl BufRead,
    mut writer: impl Write,
) -> std::io::Result<()> {
    let mut side_info_bits: Option<u32> = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<BridgeRequest>(&line) {
            Err(e) => BridgeResponse::Error { msg: format!("bad request: {e}") },
            Ok(BridgeRequest::Hello { q, side_info_bits: bits }) => {
                if q != model.q() {
                    BridgeResponse::Error { msg: format!("codebook size mismatch: expected {}, got {q}", model.q()) }
                } else {
                    side_info_bits = Some(bits);
                    BridgeResponse::Ready { name: name.to_string(), top_k_max }
                }
            }
            Ok(BridgeRequest::Predict { tokens, side_info, top_k }) => match side_info_bits {
                None => BridgeResponse::Error { msg: "predict before hello".into() },
                Some(bits) => answer(model, top_k_max, bits, tokens, side_info, top_k),
            },
        };
        writeln!(writer, "{}", serde_json::to_string(&reply).expect("serializable"))?;
        writer.flush()?;
    }
    Ok(())
}

fn answer(
    model: &dyn ProbModel,
    top_k_max: usize,
    bits: u32,
    tokens: Vec<i64>,
    side_info: Option<u32>,
    top_k: usize,
) -> BridgeResponse {
    let q = model.q();
    if top_k == 0 || top_k > top_k_max {
        return BridgeResponse::Error { msg: format!("top_k must be in 1..={top_k_max}") };
    }
    let mut slots = Vec::with_capacity(tokens.len());
    for t in tokens {
        match t {
            -1 => slots.push(Slot::Masked),
            t if t >= 0 && t < q as i64 => slots.push(Slot::Known(t as u32)),
            t => return BridgeResponse::Error { msg: format!("token id {t} out of range") },
        }
    }
    let side = match side_info {
        None => SideInfo::None,
        Some(l) => match SideInfo::class_label(l, bits.clamp(1, 31)) {
            Ok(s) => s,
            Err(e) => return BridgeResponse::Error { msg: e.to_string() },
        },
    };
    let masked = match MaskedSequence::new(q, slots) {
        Ok(m) => m,
        Err(e) => return BridgeResponse::Error { msg: e.to_string() },
    };
    match predict(model, &masked, &side, Some(top_k)) {
        Ok(r) => BridgeResponse::Dist {
            positions: r
                .positions
                .into_iter()
                .map(|p| match p.dist {
                    Distribution::TopK { ids, probs, .. } => DistEntry { pos: p.pos, ids, probs },
                    Distribution::Full(probs) => {
                        DistEntry { pos: p.pos, ids: (0..probs.len() as u32).collect(), probs }
                    }
                })
                .collect(),
        },
        Err(e) => BridgeResponse::Error { msg: e.to_string() },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Drives the protocol conformance suite against a predictor.
///
/// Each malformed request must produce `{"type":"error"}` without closing
/// the connection; a well-formed request afterwards must still succeed.
pub fn run_conformance(
    mut reader: impl BufRead,
    mut writer: impl Write,
    q: u32,
    side_info_bits: u32,
) -> std::io::Result<Vec<ConformanceCheck>> {
    let mut send = |line: &str| -> std::io::Result<Option<serde_json::Value>> {
        writeln!(writer, "{line}")?;
        writer.flush()?;
        let mut reply = String::new();
        if reader.read_line(&mut reply)? == 0 {
            return Ok(None);
        }
        Ok(serde_json::from_str(&reply).ok())
    };
    let kind = |v: &Option<serde_json::Value>| -> String {
        v.as_ref().and_then(|v| v.get("type")).and_then(|t| t.as_str()).unwrap_or("<none>").to_string()
    };

    let mut checks = Vec::new();
    let mut expect = |name: &'static str, reply: Option<serde_json::Value>, want: &str| {
        let got = kind(&reply);
        checks.push(ConformanceCheck { name, passed: got == want, detail: format!("got {got}") });
        reply
    };

    let r = send(&format!("{{\"type\":\"hello\",\"q\":{},\"side_info_bits\":{side_info_bits}}}", q + 1))?;
    expect("mismatched hello", r, "error");
    let r = send(&format!("{{\"type\":\"hello\",\"q\":{q},\"side_info_bits\":{side_info_bits}}}"))?;
    let ready = expect("hello", r, "ready");
    let top_k_max = ready.as_ref().and_then(|v| v.get("top_k_max")).and_then(|v| v.as_u64()).unwrap_or(1);

    let r = send("{\"type\":\"predict\",\"tokens\":[0,-1")?;
    expect("malformed json", r, "error");
    let r = send("{\"type\":\"frobnicate\"}")?;
    expect("unknown type", r, "error");
    let r = send(&format!("{{\"type\":\"predict\",\"tokens\":[0,-1],\"side_info\":null,\"top_k\":{}}}", top_k_max + 1))?;
    expect("oversized top_k", r, "error");
    let r = send(&format!("{{\"type\":\"predict\",\"tokens\":[{q},-1],\"side_info\":null,\"top_k\":1}}"))?;
    expect("out-of-range token", r, "error");
    let r = send("{\"type\":\"predict\",\"tokens\":[0,-1],\"side_info\":null,\"top_k\":1}")?;
    let ok = expect("valid predict after errors", r.clone(), "dist");
    if let Some(v) = ok {
        let single = v["positions"][0]["ids"].as_array().map(|a| a.len()) == Some(1)
            && v["positions"][0]["probs"][0].as_f64().is_some_and(|p| p <= 1.0 + 1e-6);
        checks.push(ConformanceCheck {
            name: "top_k=1 shape",
            passed: single,
            detail: v["positions"].to_string(),
        });
    }
    Ok(checks)
}
