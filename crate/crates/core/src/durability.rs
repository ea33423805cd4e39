//! Durable storage of `T` and the committed deltas, crash recovery, replay
//! verification and at-least-once external dispatch.
//!
//! # Store layout
//!
//! A store is one append-only file of frames. Each frame is
//!
//! ```text
//! <len> <crc32:8 lowercase hex> <json>\n
//! ```
//!
//! where `<len>` is the decimal byte length of `<json>` and the checksum is
//! CRC-32 (IEEE) of the `<json>` bytes. The first frame is the header:
//!
//! ```json
//! {"format":1,"allocator":"seq","salt":"","budget":1000000}
//! ```
//!
//! (`salt` is hex; it is empty for the sequential allocator.) Every later
//! frame is one transaction record:
//!
//! ```json
//! {"seq":1,"tx":"[p,i]","result":"15","delta":[["0","1","14"],…],
//!  "xi":[["14","[7,5]","8"]],"k_len_after":4}
//! ```
//!
//! with all s-expressions in canonical text and `result` either canonical
//! text or `ABORT`. JSON text never contains a raw newline.
//!
//! A *torn tail* is a final frame cut short by a crash: the bytes after the
//! last complete frame contain no newline. It is discarded on recovery. Any
//! other framing, checksum, parse or sequencing failure is corruption.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::Allocator;
use crate::sexpr::{Nat, SExpr};
use crate::state::{ExternalSend, KernelState, LogEntry, TxRecord, TxResult};
use crate::txn::{execute, Execution, KernelConfig, SystemState, Transaction};

pub const FORMAT_VERSION: u32 = 1;

/// Parameters pinned at store creation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreHeader {
    pub format: u32,
    pub allocator: String,
    pub salt: String,
    pub budget: u64,
}

impl StoreHeader {
    pub fn from_config(config: &KernelConfig) -> StoreHeader {
        let salt = match &config.allocator {
            Allocator::Sequential => String::new(),
            Allocator::Hash { salt } => hex::encode(salt),
        };
        StoreHeader {
            format: FORMAT_VERSION,
            allocator: config.allocator.kind().to_owned(),
            salt,
            budget: config.budget,
        }
    }

    pub fn to_config(&self) -> Result<KernelConfig, StoreError> {
        if self.format != FORMAT_VERSION {
            return Err(StoreError::Header(format!("unsupported format {}", self.format)));
        }
        let allocator = match self.allocator.as_str() {
            "seq" if self.salt.is_empty() => Allocator::Sequential,
            "hash" => Allocator::Hash {
                salt: hex::decode(&self.salt)
                    .map_err(|e| StoreError::Header(format!("bad salt: {e}")))?,
            },
            other => return Err(StoreError::Header(format!("unknown allocator {other:?}"))),
        };
        Ok(KernelConfig::new(allocator, self.budget))
    }
}

/// One durability unit: a transaction, its outcome, and the resulting `|K|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurableRecord {
    pub seq: u64,
    pub tx: SExpr,
    pub result: TxResult,
    pub delta: Vec<LogEntry>,
    pub xi: Vec<ExternalSend>,
    pub k_len_after: u64,
}

impl DurableRecord {
    pub fn new(seq: u64, tx: &Transaction, exec: &Execution, k_len_after: u64) -> DurableRecord {
        DurableRecord {
            seq,
            tx: tx.to_sexpr(),
            result: exec.result.clone(),
            delta: exec.delta.clone(),
            xi: exec.externals.clone(),
            k_len_after,
        }
    }

    pub fn to_tx_record(&self) -> TxRecord {
        TxRecord {
            tx: self.tx.clone(),
            result: self.result.clone(),
            externals: self.xi.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordJson {
    seq: u64,
    tx: String,
    result: String,
    delta: Vec<[String; 3]>,
    xi: Vec<[String; 3]>,
    k_len_after: u64,
}

impl From<&DurableRecord> for RecordJson {
    fn from(r: &DurableRecord) -> RecordJson {
        RecordJson {
            seq: r.seq,
            tx: r.tx.print(),
            result: r.result.to_text(),
            delta: r
                .delta
                .iter()
                .map(|e| [e.receiver.to_string(), e.caller.to_string(), e.message.print()])
                .collect(),
            xi: r
                .xi
                .iter()
                .map(|x| [x.sender.to_string(), x.target.print(), x.message.print()])
                .collect(),
            k_len_after: r.k_len_after,
        }
    }
}

fn atom_text(s: &str) -> Result<Nat, String> {
    match SExpr::parse_canonical(s).map_err(|e| e.to_string())? {
        SExpr::Atom(n) => Ok(n),
        SExpr::Pair(_) => Err(format!("expected an atom, found {s}")),
    }
}

fn sexpr_text(s: &str) -> Result<SExpr, String> {
    SExpr::parse_canonical(s).map_err(|e| e.to_string())
}

impl TryFrom<RecordJson> for DurableRecord {
    type Error = String;

    fn try_from(j: RecordJson) -> Result<DurableRecord, String> {
        let delta = j
            .delta
            .iter()
            .map(|[r, c, m]| Ok(LogEntry::new(atom_text(r)?, atom_text(c)?, sexpr_text(m)?)))
            .collect::<Result<Vec<_>, String>>()?;
        let xi = j
            .xi
            .iter()
            .map(|[s, t, m]| {
                Ok(ExternalSend {
                    sender: atom_text(s)?,
                    target: sexpr_text(t)?,
                    message: sexpr_text(m)?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(DurableRecord {
            seq: j.seq,
            tx: sexpr_text(&j.tx)?,
            result: TxResult::from_text(&j.result).map_err(|e| e.to_string())?,
            delta,
            xi,
            k_len_after: j.k_len_after,
        })
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt store at byte {offset} (frame {frame}): {reason}")]
    Corruption {
        offset: u64,
        frame: usize,
        reason: String,
    },
    #[error("bad store header: {0}")]
    Header(String),
    #[error("store {0} already exists")]
    Exists(PathBuf),
    #[error("store is unusable after an earlier write failure")]
    Poisoned,
}

/// Encodes one frame.
pub fn frame(json: &str) -> Vec<u8> {
    let crc = crc32fast::hash(json.as_bytes());
    format!("{} {:08x} {}\n", json.len(), crc, json).into_bytes()
}

pub fn encode_record(r: &DurableRecord) -> Vec<u8> {
    frame(&serde_json::to_string(&RecordJson::from(r)).expect("records serialize"))
}

pub fn encode_header(h: &StoreHeader) -> Vec<u8> {
    frame(&serde_json::to_string(h).expect("headers serialize"))
}

enum Framed<'a> {
    Complete { json: &'a str, next: usize },
    Torn,
}

fn read_frame(bytes: &[u8], start: usize, index: usize) -> Result<Framed<'_>, StoreError> {
    let rest = &bytes[start..];
    let corrupt = |reason: String| StoreError::Corruption {
        offset: start as u64,
        frame: index,
        reason,
    };
    let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
        return Ok(Framed::Torn);
    };
    let line = &rest[..nl];
    let space = line
        .iter()
        .position(|&b| b == b' ')
        .ok_or_else(|| corrupt("missing length".into()))?;
    let len_text = std::str::from_utf8(&line[..space]).map_err(|_| corrupt("bad length".into()))?;
    if len_text.is_empty() || !len_text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(corrupt(format!("bad length {len_text:?}")));
    }
    let len: usize = len_text.parse().map_err(|_| corrupt("length overflow".into()))?;
    let crc_start = space + 1;
    if line.len() < crc_start + 9 || line[crc_start + 8] != b' ' {
        return Err(corrupt("bad checksum field".into()));
    }
    let crc_text = std::str::from_utf8(&line[crc_start..crc_start + 8])
        .map_err(|_| corrupt("bad checksum field".into()))?;
    if !crc_text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(corrupt("bad checksum field".into()));
    }
    let crc = u32::from_str_radix(crc_text, 16).map_err(|_| corrupt("bad checksum field".into()))?;
    let body = &line[crc_start + 9..];
    if body.len() != len {
        return Err(corrupt(format!("length {len} but body has {} bytes", body.len())));
    }
    if crc32fast::hash(body) != crc {
        return Err(corrupt("checksum mismatch".into()));
    }
    let json = std::str::from_utf8(body).map_err(|_| corrupt("body is not UTF-8".into()))?;
    Ok(Framed::Complete {
        json,
        next: start + nl + 1,
    })
}

/// Everything read from a store file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreContents {
    /// `None` for an empty file or one whose header frame is torn.
    pub header: Option<StoreHeader>,
    pub records: Vec<DurableRecord>,
    /// Byte length of the intact prefix.
    pub intact_len: u64,
    /// Bytes past the intact prefix (a torn final frame).
    pub torn_bytes: u64,
}

/// Parses a store image. Sequencing is not validated here.
pub fn parse_store(bytes: &[u8]) -> Result<StoreContents, StoreError> {
    let mut pos = 0;
    let mut header = None;
    let mut records = Vec::new();
    let mut index = 0;
    while pos < bytes.len() {
        let (json, next) = match read_frame(bytes, pos, index)? {
            Framed::Torn => break,
            Framed::Complete { json, next } => (json, next),
        };
        let corrupt = |reason: String| StoreError::Corruption {
            offset: pos as u64,
            frame: index,
            reason,
        };
        if index == 0 {
            let h: StoreHeader =
                serde_json::from_str(json).map_err(|e| corrupt(format!("header: {e}")))?;
            h.to_config()?;
            header = Some(h);
        } else {
            let j: RecordJson =
                serde_json::from_str(json).map_err(|e| corrupt(format!("record: {e}")))?;
            records.push(DurableRecord::try_from(j).map_err(corrupt)?);
        }
        pos = next;
        index += 1;
    }
    Ok(StoreContents {
        header,
        records,
        intact_len: pos as u64,
        torn_bytes: (bytes.len() - pos) as u64,
    })
}

pub fn read_store(path: &Path) -> Result<StoreContents, StoreError> {
    parse_store(&fs::read(path)?)
}

/// The state reconstructed from a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovered {
    pub header: Option<StoreHeader>,
    pub sys: SystemState,
    pub intact_len: u64,
    pub torn_bytes: u64,
}

/// Rebuilds `(K, T)` by concatenating committed deltas in sequence order.
/// Nothing is re-executed.
pub fn recover_contents(contents: &StoreContents) -> Result<Recovered, StoreError> {
    let mut sys = SystemState::new();
    for (i, r) in contents.records.iter().enumerate() {
        let corrupt = |reason: String| StoreError::Corruption {
            offset: 0,
            frame: i + 1,
            reason,
        };
        if r.seq != i as u64 + 1 {
            return Err(corrupt(format!("sequence {} where {} was expected", r.seq, i + 1)));
        }
        if r.result.is_abort() && (!r.delta.is_empty() || !r.xi.is_empty()) {
            return Err(corrupt("aborted record carries effects".into()));
        }
        let expected = sys.k.len() as u64 + r.delta.len() as u64;
        if r.k_len_after != expected {
            return Err(corrupt(format!(
                "k_len_after {} but deltas give {expected}",
                r.k_len_after
            )));
        }
        sys.k.extend(r.delta.iter().cloned());
        sys.t.push(r.to_tx_record());
    }
    Ok(Recovered {
        header: contents.header.clone(),
        sys,
        intact_len: contents.intact_len,
        torn_bytes: contents.torn_bytes,
    })
}

/// Reads and recovers a store without modifying it.
pub fn recover(path: &Path) -> Result<Recovered, StoreError> {
    recover_contents(&read_store(path)?)
}

/// When to fsync.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncPolicy {
    /// After every record (and every batch).
    EveryCommit,
    /// After every `n` records, and at the end of every batch.
    Group(usize),
    /// Only when [`Store::sync`] is called.
    Never,
}

/// An open store positioned for appending.
#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    file: File,
    header: StoreHeader,
    next_seq: u64,
    k_len: u64,
    policy: SyncPolicy,
    unsynced: usize,
    poisoned: bool,
}

impl Store {
    /// Creates a new store; fails if a non-empty file exists.
    pub fn create(path: &Path, header: StoreHeader) -> Result<Store, StoreError> {
        if fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false) {
            return Err(StoreError::Exists(path.to_owned()));
        }
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        file.write_all(&encode_header(&header))?;
        file.sync_all()?;
        Ok(Store {
            path: path.to_owned(),
            file,
            header,
            next_seq: 1,
            k_len: 0,
            policy: SyncPolicy::EveryCommit,
            unsynced: 0,
            poisoned: false,
        })
    }

    /// Opens an existing store, recovering its state and truncating a torn
    /// tail. A store whose header frame never became durable is rewritten
    /// with `fallback`.
    pub fn open(path: &Path, fallback: &StoreHeader) -> Result<(Store, Recovered), StoreError> {
        let contents = read_store(path)?;
        let recovered = recover_contents(&contents)?;
        let Some(header) = contents.header.clone() else {
            fs::remove_file(path)?;
            let store = Store::create(path, fallback.clone())?;
            return Ok((store, recovered));
        };
        let file = OpenOptions::new().write(true).open(path)?;
        if contents.torn_bytes > 0 {
            file.set_len(contents.intact_len)?;
            file.sync_all()?;
        }
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.flush()?;
        let store = Store {
            path: path.to_owned(),
            file,
            header,
            next_seq: recovered.sys.t.len() as u64 + 1,
            k_len: recovered.sys.k.len() as u64,
            policy: SyncPolicy::EveryCommit,
            unsynced: 0,
            poisoned: false,
        };
        Ok((store, recovered))
    }

    /// Opens `path` if it holds a store, creating it with `header` otherwise.
    pub fn open_or_create(
        path: &Path,
        header: &StoreHeader,
    ) -> Result<(Store, Recovered, bool), StoreError> {
        if fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false) {
            let (s, r) = Store::open(path, header)?;
            Ok((s, r, false))
        } else {
            let s = Store::create(path, header.clone())?;
            let r = Recovered {
                header: Some(header.clone()),
                sys: SystemState::new(),
                intact_len: 0,
                torn_bytes: 0,
            };
            Ok((s, r, true))
        }
    }

    pub fn with_policy(mut self, policy: SyncPolicy) -> Store {
        self.policy = policy;
        self
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Appends records for consecutive executions and makes them durable as
    /// one group. On failure the store is poisoned; nothing further may be
    /// appended, and recovery will drop any partial frame.
    pub fn append_group(&mut self, items: &[(&Transaction, &Execution)]) -> Result<(), StoreError> {
        if self.poisoned {
            return Err(StoreError::Poisoned);
        }
        let mut buf = Vec::new();
        let mut seq = self.next_seq;
        let mut k_len = self.k_len;
        for (tx, exec) in items {
            k_len += exec.delta.len() as u64;
            buf.extend(encode_record(&DurableRecord::new(seq, tx, exec, k_len)));
            seq += 1;
        }
        let write = self.file.write_all(&buf).and_then(|_| {
            self.unsynced += items.len();
            let due = match self.policy {
                SyncPolicy::EveryCommit => true,
                SyncPolicy::Group(_) => true,
                SyncPolicy::Never => false,
            };
            if due {
                self.unsynced = 0;
                self.file.sync_data()
            } else {
                Ok(())
            }
        });
        match write {
            Ok(()) => {
                self.next_seq = seq;
                self.k_len = k_len;
                Ok(())
            }
            Err(e) => {
                self.poisoned = true;
                Err(e.into())
            }
        }
    }

    /// Appends one record. Under [`SyncPolicy::Group`] the fsync happens every
    /// `n` records.
    pub fn append(&mut self, tx: &Transaction, exec: &Execution) -> Result<(), StoreError> {
        if let SyncPolicy::Group(n) = self.policy {
            if self.poisoned {
                return Err(StoreError::Poisoned);
            }
            let k_len = self.k_len + exec.delta.len() as u64;
            let bytes = encode_record(&DurableRecord::new(self.next_seq, tx, exec, k_len));
            let res = self.file.write_all(&bytes).and_then(|_| {
                self.unsynced += 1;
                if self.unsynced >= n.max(1) {
                    self.unsynced = 0;
                    self.file.sync_data()
                } else {
                    Ok(())
                }
            });
            return match res {
                Ok(()) => {
                    self.next_seq += 1;
                    self.k_len = k_len;
                    Ok(())
                }
                Err(e) => {
                    self.poisoned = true;
                    Err(e.into())
                }
            };
        }
        self.append_group(&[(tx, exec)])
    }

    pub fn sync(&mut self) -> Result<(), StoreError> {
        self.unsynced = 0;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Which part of a record disagreed with re-execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DivergenceKind {
    SeqGap { expected: u64, found: u64 },
    Transaction,
    Result { recorded: String, replayed: String },
    Delta,
    Externals,
    KLen { recorded: u64, replayed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub seq: u64,
    pub kind: DivergenceKind,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            DivergenceKind::SeqGap { expected, found } => {
                write!(f, "sequence gap: expected {expected}, found {found}")
            }
            DivergenceKind::Transaction => write!(f, "seq {}: transaction is not a pair", self.seq),
            DivergenceKind::Result { recorded, replayed } => write!(
                f,
                "seq {}: result recorded {recorded}, replay gives {replayed}",
                self.seq
            ),
            DivergenceKind::Delta => write!(f, "seq {}: delta differs from replay", self.seq),
            DivergenceKind::Externals => write!(f, "seq {}: externals differ from replay", self.seq),
            DivergenceKind::KLen { recorded, replayed } => write!(
                f,
                "seq {}: k_len_after recorded {recorded}, replay gives {replayed}",
                self.seq
            ),
        }
    }
}

/// Outcome of replay verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub transactions: u64,
    pub divergence: Option<Divergence>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Re-executes every recorded transaction from the empty state with `config`
/// and compares each record with the replay.
pub fn replay_records(records: &[DurableRecord], config: &KernelConfig) -> VerifyReport {
    let mut k = KernelState::new();
    for (i, r) in records.iter().enumerate() {
        let expected = i as u64 + 1;
        let diverged = |kind| VerifyReport {
            transactions: i as u64,
            divergence: Some(Divergence { seq: r.seq, kind }),
        };
        if r.seq != expected {
            return diverged(DivergenceKind::SeqGap {
                expected,
                found: r.seq,
            });
        }
        let Some(tx) = Transaction::from_sexpr(&r.tx) else {
            return diverged(DivergenceKind::Transaction);
        };
        let exec = execute(&k, &tx, config);
        if exec.result != r.result {
            return diverged(DivergenceKind::Result {
                recorded: r.result.to_text(),
                replayed: exec.result.to_text(),
            });
        }
        if exec.delta != r.delta {
            return diverged(DivergenceKind::Delta);
        }
        if exec.externals != r.xi {
            return diverged(DivergenceKind::Externals);
        }
        k.extend(exec.delta);
        if k.len() as u64 != r.k_len_after {
            return diverged(DivergenceKind::KLen {
                recorded: r.k_len_after,
                replayed: k.len() as u64,
            });
        }
    }
    VerifyReport {
        transactions: records.len() as u64,
        divergence: None,
    }
}

/// Why a store failed verification.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("store ends in a torn frame of {0} bytes; run recovery first")]
    TornTail(u64),
    #[error("store has no header")]
    NoHeader,
}

/// Audits a store: strict parse, then replay under the header's parameters.
pub fn replay_verify(path: &Path) -> Result<VerifyReport, VerifyError> {
    let contents = read_store(path)?;
    if contents.torn_bytes > 0 {
        return Err(VerifyError::TornTail(contents.torn_bytes));
    }
    let header = contents.header.as_ref().ok_or(VerifyError::NoHeader)?;
    let config = header.to_config()?;
    Ok(replay_records(&contents.records, &config))
}

/// Dedup tag of an external send: `(seq, index within the record's Ξ)`.
pub type DeliveryTag = (u64, usize);

/// Receiver of external sends.
pub trait Sink {
    fn deliver(&mut self, tag: DeliveryTag, send: &ExternalSend) -> Result<(), String>;
}

impl<F: FnMut(DeliveryTag, &ExternalSend) -> Result<(), String>> Sink for F {
    fn deliver(&mut self, tag: DeliveryTag, send: &ExternalSend) -> Result<(), String> {
        self(tag, send)
    }
}

/// Location of the dispatch cursor for a store.
pub fn cursor_path(store: &Path) -> PathBuf {
    let mut p = store.as_os_str().to_owned();
    p.push(".cursor");
    PathBuf::from(p)
}

/// The last sequence number whose externals were all delivered (0 if none).
pub fn read_cursor(store: &Path) -> Result<u64, StoreError> {
    match fs::read_to_string(cursor_path(store)) {
        Ok(s) => s.trim().parse().map_err(|_| StoreError::Corruption {
            offset: 0,
            frame: 0,
            reason: format!("bad cursor file contents {s:?}"),
        }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(e.into()),
    }
}

/// Persists the cursor atomically (write to a temporary file, then rename).
pub fn write_cursor(store: &Path, cursor: u64) -> Result<(), StoreError> {
    let target = cursor_path(store);
    let mut tmp = target.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        writeln!(f, "{cursor}")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(())
}

/// Result of a dispatch pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchOutcome {
    pub cursor: u64,
    pub delivered: usize,
    /// Set when the sink refused a delivery; the cursor stops before it.
    pub error: Option<String>,
}

/// Delivers the externals of every record after `cursor`, in order. The
/// cursor advances past a record only after all of its sends were accepted;
/// `persist` is called with each new cursor value.
pub fn dispatch_records(
    records: &[DurableRecord],
    cursor: u64,
    sink: &mut dyn Sink,
    persist: &mut dyn FnMut(u64) -> Result<(), StoreError>,
) -> Result<DispatchOutcome, StoreError> {
    let mut current = cursor;
    let mut delivered = 0;
    for r in records.iter().filter(|r| r.seq > cursor) {
        for (i, send) in r.xi.iter().enumerate() {
            if let Err(e) = sink.deliver((r.seq, i), send) {
                return Ok(DispatchOutcome {
                    cursor: current,
                    delivered,
                    error: Some(e),
                });
            }
            delivered += 1;
        }
        current = r.seq;
        persist(current)?;
    }
    Ok(DispatchOutcome {
        cursor: current,
        delivered,
        error: None,
    })
}

/// Delivers pending externals of the durable records of `store`, tracking
/// progress in the store's cursor file. Delivery is at-least-once: a crash
/// after delivering but before the cursor is persisted redelivers the same
/// tags.
pub fn dispatch_externals(store: &Path, sink: &mut dyn Sink) -> Result<DispatchOutcome, StoreError> {
    let contents = read_store(store)?;
    let cursor = read_cursor(store)?;
    dispatch_records(&contents.records, cursor, sink, &mut |c| write_cursor(store, c))
}
