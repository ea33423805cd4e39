//! Global persistent state `K`, per-object projections, pending effects and
//! the pair-chain log encoding.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::dispatch::atoms;
use crate::sexpr::{Nat, SExpr};

/// One entry of `K`: `receiver` got `message` from `caller`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LogEntry {
    pub receiver: Nat,
    pub caller: Nat,
    pub message: SExpr,
}

impl LogEntry {
    pub fn new(receiver: impl Into<Nat>, caller: impl Into<Nat>, message: SExpr) -> LogEntry {
        LogEntry {
            receiver: receiver.into(),
            caller: caller.into(),
            message,
        }
    }

    /// `[receiver,[caller,message]]`, used by digests and the wire format.
    pub fn to_sexpr(&self) -> SExpr {
        SExpr::pair(
            SExpr::nat(self.receiver.clone()),
            SExpr::pair(SExpr::nat(self.caller.clone()), self.message.clone()),
        )
    }
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.receiver, self.caller, self.message)
    }
}

/// A fire-and-forget send to the outside world, queued in `Ξ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExternalSend {
    pub sender: Nat,
    pub target: SExpr,
    pub message: SExpr,
}

/// Outcome of a transaction. `Abort` is not an s-expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TxResult {
    Value(SExpr),
    Abort,
}

impl TxResult {
    pub fn is_abort(&self) -> bool {
        matches!(self, TxResult::Abort)
    }

    pub fn value(&self) -> Option<&SExpr> {
        match self {
            TxResult::Value(v) => Some(v),
            TxResult::Abort => None,
        }
    }

    /// Canonical text, with `ABORT` for the abort marker.
    pub fn to_text(&self) -> String {
        match self {
            TxResult::Value(v) => v.print(),
            TxResult::Abort => "ABORT".to_owned(),
        }
    }

    pub fn from_text(text: &str) -> Result<TxResult, crate::sexpr::ParseError> {
        if text == "ABORT" {
            Ok(TxResult::Abort)
        } else {
            SExpr::parse_canonical(text).map(TxResult::Value)
        }
    }
}

impl fmt::Display for TxResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// A row of `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxRecord {
    pub tx: SExpr,
    pub result: TxResult,
    /// Always empty when `result` is `Abort`.
    pub externals: Vec<ExternalSend>,
}

/// The append-only sequence `K`.
///
/// The receiver index and the object registry are caches derived from
/// `entries`; [`KernelState::from_entries`] rebuilds them from scratch.
#[derive(Clone, Default)]
pub struct KernelState {
    entries: Vec<LogEntry>,
    by_receiver: HashMap<Nat, Vec<usize>>,
    objects: HashSet<Nat>,
}

impl KernelState {
    pub fn new() -> KernelState {
        KernelState::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LogEntry>) -> KernelState {
        let mut k = KernelState::new();
        k.extend(entries);
        k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Appends committed entries. The only mutation `K` admits.
    pub fn extend(&mut self, delta: impl IntoIterator<Item = LogEntry>) {
        for entry in delta {
            let pos = self.entries.len();
            if entry.receiver.is(atoms::KERNEL) {
                if let SExpr::Atom(id) = &entry.message {
                    if !id.is(atoms::KERNEL) {
                        self.objects.insert(id.clone());
                    }
                }
            }
            self.by_receiver
                .entry(entry.receiver.clone())
                .or_default()
                .push(pos);
            self.entries.push(entry);
        }
    }

    pub fn view(&self) -> StateView<'_> {
        StateView {
            k: self,
            effects: None,
        }
    }

    pub fn log_of(&self, n: &Nat) -> Vec<(Nat, SExpr)> {
        self.view().log_of(n)
    }

    pub fn exists(&self, n: &Nat) -> bool {
        self.view().exists(n)
    }

    pub fn program_of(&self, n: &Nat) -> Option<SExpr> {
        self.view().program_of(n)
    }

    /// Identities of every created object, in creation order.
    pub fn objects(&self) -> Vec<Nat> {
        self.log_of(&Nat::small(atoms::KERNEL))
            .into_iter()
            .filter_map(|(_, m)| m.as_atom().cloned())
            .collect()
    }

    /// Canonical serialisation of the whole state, one entry per line.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_sexpr().print());
            out.push('\n');
        }
        out
    }
}

impl PartialEq for KernelState {
    fn eq(&self, other: &KernelState) -> bool {
        self.entries == other.entries
    }
}

impl Eq for KernelState {}

impl fmt::Debug for KernelState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter()).finish()
    }
}

/// Transaction-private pending effects `Δ` and `Ξ`. Grow-only; an aborted
/// transaction drops the whole buffer.
#[derive(Debug, Clone, Default)]
pub struct Effects {
    delta: Vec<LogEntry>,
    xi: Vec<ExternalSend>,
    by_receiver: HashMap<Nat, Vec<usize>>,
    created: HashSet<Nat>,
}

impl Effects {
    pub fn new() -> Effects {
        Effects::default()
    }

    pub fn delta(&self) -> &[LogEntry] {
        &self.delta
    }

    pub fn xi(&self) -> &[ExternalSend] {
        &self.xi
    }

    pub fn push_entry(&mut self, entry: LogEntry) {
        if entry.receiver.is(atoms::KERNEL) {
            if let SExpr::Atom(id) = &entry.message {
                if !id.is(atoms::KERNEL) {
                    self.created.insert(id.clone());
                }
            }
        }
        self.by_receiver
            .entry(entry.receiver.clone())
            .or_default()
            .push(self.delta.len());
        self.delta.push(entry);
    }

    pub fn push_external(&mut self, send: ExternalSend) {
        self.xi.push(send);
    }

    pub fn into_parts(self) -> (Vec<LogEntry>, Vec<ExternalSend>) {
        (self.delta, self.xi)
    }
}

/// Read-only view of `K`, or of `K ++ Δ` during a transaction.
#[derive(Clone, Copy)]
pub struct StateView<'a> {
    k: &'a KernelState,
    effects: Option<&'a Effects>,
}

impl<'a> StateView<'a> {
    pub fn with_effects(k: &'a KernelState, effects: &'a Effects) -> StateView<'a> {
        StateView {
            k,
            effects: Some(effects),
        }
    }

    /// `log(n, view)`: entries addressed to `n`, oldest first.
    pub fn log_of(&self, n: &Nat) -> Vec<(Nat, SExpr)> {
        let mut out = Vec::new();
        if let Some(positions) = self.k.by_receiver.get(n) {
            out.extend(positions.iter().map(|&i| {
                let e = &self.k.entries[i];
                (e.caller.clone(), e.message.clone())
            }));
        }
        if let Some(eff) = self.effects {
            if let Some(positions) = eff.by_receiver.get(n) {
                out.extend(positions.iter().map(|&i| {
                    let e = &eff.delta[i];
                    (e.caller.clone(), e.message.clone())
                }));
            }
        }
        out
    }

    pub fn log_len(&self, n: &Nat) -> usize {
        let committed = self.k.by_receiver.get(n).map_or(0, Vec::len);
        let pending = self
            .effects
            .and_then(|e| e.by_receiver.get(n))
            .map_or(0, Vec::len);
        committed + pending
    }

    /// `exists(n, view)`: `n` is not the kernel and the kernel's log holds a
    /// creation record naming `n`.
    pub fn exists(&self, n: &Nat) -> bool {
        if n.is(atoms::KERNEL) {
            return false;
        }
        self.k.objects.contains(n) || self.effects.is_some_and(|e| e.created.contains(n))
    }

    /// `program(n, view)`: the message of `n`'s birth record, or `None` when
    /// `n` does not exist.
    pub fn program_of(&self, n: &Nat) -> Option<SExpr> {
        if !self.exists(n) {
            return None;
        }
        if let Some(&first) = self.k.by_receiver.get(n).and_then(|p| p.first()) {
            return Some(self.k.entries[first].message.clone());
        }
        let eff = self.effects?;
        let &first = eff.by_receiver.get(n)?.first()?;
        Some(eff.delta[first].message.clone())
    }

    /// Number of entries on the kernel registry, `|log(0, view)|`.
    pub fn registry_len(&self) -> usize {
        self.log_len(&Nat::small(atoms::KERNEL))
    }
}

/// Pair-chain encoding: `⌈ε⌉ = 0`, `⌈(a,b).t⌉ = [[a,b],⌈t⌉]`.
pub fn encode_log(entries: &[(Nat, SExpr)]) -> SExpr {
    entries.iter().rev().fold(SExpr::ZERO, |acc, (c, m)| {
        SExpr::pair(SExpr::pair(SExpr::nat(c.clone()), m.clone()), acc)
    })
}

/// Inverse of [`encode_log`] on well-formed chains.
pub fn decode_log(encoded: &SExpr) -> Option<Vec<(Nat, SExpr)>> {
    let mut out = Vec::new();
    let mut cur = encoded;
    loop {
        match cur {
            SExpr::Atom(n) if n.is(0) => return Some(out),
            SExpr::Atom(_) => return None,
            SExpr::Pair(_) => {
                let (entry, rest) = cur.as_pair()?;
                let (c, m) = entry.as_pair()?;
                out.push((c.as_atom()?.clone(), m.clone()));
                cur = rest;
            }
        }
    }
}
