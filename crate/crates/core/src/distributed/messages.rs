//! Inter-BS messages and the ordered event log they are recorded in.
//!
//! The log serializes to JSON lines, one envelope per line:
//!
//! ```text
//! {"seq":0,"round":0,"message":{"kind":"broadcast_w","from":0,"w":{"dim":2,"re":[..],"im":[..]}}}
//! {"seq":1,"round":1,"message":{"kind":"error","from":1,"to":0}}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::json_error;
use crate::linalg::{hermitian_defect, hermitian_eigen, CMatrix, C64};

/// Dense Hermitian matrix in row-major real/imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMatrix {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl WireMatrix {
    pub fn from_matrix(w: &CMatrix) -> Self {
        let n = w.nrows();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                re.push(w[(i, j)].re);
                im.push(w[(i, j)].im);
            }
        }
        Self { dim: n, re, im }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.dim;
        let len = n.checked_mul(n).ok_or_else(|| Error::ShapeMismatch("matrix dimension overflows".into()))?;
        if self.re.len() != len || self.im.len() != len {
            return Err(Error::ShapeMismatch(format!("{n}x{n} matrix needs {len} entries per part")));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| C64::new(self.re[i * n + j], self.im[i * n + j])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    /// BS `from` announces `W = ΦΦᴴ` (a proposal until an `Update` follows).
    BroadcastW { from: usize, w: WireMatrix },
    /// BS `from` vetoes the pending proposal of BS `to`.
    Error { from: usize, to: usize },
    /// BS `from` commits its pending proposal.
    Update { from: usize },
    /// BS `from` reports its copy of the interference bound from BS `n` onto user `(m, k)`.
    BetaExchange { from: usize, k: usize, m: usize, n: usize, value: f64 },
}

impl Message {
    pub fn sender(&self) -> usize {
        match self {
            Message::BroadcastW { from, .. }
            | Message::Error { from, .. }
            | Message::Update { from }
            | Message::BetaExchange { from, .. } => *from,
        }
    }

    /// Checks value invariants: finite Hermitian PSD `W` with trace at most
    /// `budget(from)`, non-negative `β̂`.
    pub fn check(&self, cells: usize, budget: impl Fn(usize) -> Option<f64>) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidProgram(s));
        if self.sender() >= cells {
            return bad(format!("sender {} out of range", self.sender()));
        }
        match self {
            Message::BroadcastW { from, w } => {
                let m = w.to_matrix()?;
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return bad("non-finite W entry".into());
                }
                let scale = 1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if hermitian_defect(&m) > 1e-9 * scale {
                    return bad("W is not Hermitian".into());
                }
                if m.nrows() > 0 && hermitian_eigen(&m).0[0] < -1e-9 * scale {
                    return bad("W is not positive semidefinite".into());
                }
                if let Some(p) = budget(*from) {
                    let tr: f64 = (0..m.nrows()).map(|i| m[(i, i)].re).sum();
                    if tr > p * (1.0 + 1e-6) {
                        return bad(format!("trace(W) = {tr} exceeds the budget {p}"));
                    }
                }
            }
            Message::Error { to, .. } if *to >= cells => return bad(format!("recipient {to} out of range")),
            Message::BetaExchange { m, n, value, .. } => {
                if *m >= cells || *n >= cells || m == n {
                    return bad("beta exchange names an invalid link".into());
                }
                if !(*value >= 0.0) || !value.is_finite() {
                    return bad(format!("beta value {value} must be finite and non-negative"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub seq: u64,
    pub round: usize,
    pub message: Message,
}

/// Totally ordered, lossless message log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<Envelope>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, round: usize, message: Message) {
        let seq = self.entries.len() as u64;
        self.entries.push(Envelope { seq, round, message });
    }

    pub fn entries(&self) -> &[Envelope] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("envelopes always serialize"));
            s.push('\n');
        }
        s
    }

    /// Parses JSON lines; blank lines are skipped. Sequence numbers must be
    /// consecutive from zero. Errors carry the byte offset of the bad line.
    pub fn from_json_lines(text: &str) -> Result<Self> {
        let mut log = Self::new();
        let mut offset = 0usize;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                let lead = line.len() - line.trim_start().len();
                let env: Envelope = serde_json::from_str(trimmed).map_err(|e| match json_error(trimmed, &e) {
                    Error::Parse { offset: o, message } => Error::Parse { offset: offset + lead + o, message },
                    other => other,
                })?;
                if env.seq != log.entries.len() as u64 {
                    return Err(Error::Parse { offset, message: format!("expected seq {}, found {}", log.entries.len(), env.seq) });
                }
                log.entries.push(env);
            }
            offset += line.len();
        }
        Ok(log)
    }

    /// Validates every message against `cells` and the per-cell budgets.
    pub fn check(&self, cells: usize, budgets: &[f64]) -> Result<()> {
        for e in &self.entries {
            e.message.check(cells, |m| budgets.get(m).copied())?;
        }
        Ok(())
    }

    /// Proposals in log order. Vetoes and commits count toward the most
    /// recent proposal of the BS they address.
    pub fn proposals(&self) -> Vec<Proposal> {
        let mut out: Vec<Proposal> = Vec::new();
        for e in &self.entries {
            match &e.message {
                Message::BroadcastW { from, .. } => out.push(Proposal { from: *from, seq: e.seq, round: e.round, vetoes: 0, commits: 0 }),
                Message::Error { to, .. } => {
                    if let Some(p) = out.iter_mut().rev().find(|p| p.from == *to) {
                        p.vetoes += 1;
                    }
                }
                Message::Update { from } => {
                    if let Some(p) = out.iter_mut().rev().find(|p| p.from == *from) {
                        p.commits += 1;
                    }
                }
                Message::BetaExchange { .. } => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub from: usize,
    pub seq: u64,
    pub round: usize,
    pub vetoes: usize,
    pub commits: usize,
}
