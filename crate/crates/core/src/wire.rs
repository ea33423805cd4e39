//! JSON shapes exchanged between the service and its clients. Every
//! s-expression travels as canonical text.

use serde::{Deserialize, Serialize};

use crate::durability::DurableRecord;
use crate::kernel::Outcome;
use crate::state::{ExternalSend, TxRecord, TxResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoDto {
    pub allocator: String,
    pub salt: String,
    pub budget: u64,
    pub transactions: usize,
    pub k_len: usize,
    pub objects: usize,
    pub store: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    /// Transactions `[p,i]`, each admitted only if all of them parse.
    pub transactions: Vec<String>,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeDto {
    pub seq: u64,
    pub committed: bool,
    pub result: String,
    pub abort_reason: Option<String>,
    pub steps: u64,
    pub externals: usize,
}

impl From<&Outcome> for OutcomeDto {
    fn from(o: &Outcome) -> OutcomeDto {
        OutcomeDto {
            seq: o.seq,
            committed: o.execution.committed(),
            result: o.execution.result.to_text(),
            abort_reason: o.execution.abort.as_ref().map(|a| a.to_string()),
            steps: o.execution.steps,
            externals: o.execution.externals.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub outcomes: Vec<OutcomeDto>,
    pub rounds: usize,
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalDto {
    pub seq: u64,
    pub index: usize,
    pub sender: String,
    pub target: String,
    pub message: String,
}

impl ExternalDto {
    pub fn new(seq: u64, index: usize, x: &ExternalSend) -> ExternalDto {
        ExternalDto {
            seq,
            index,
            sender: x.sender.to_string(),
            target: x.target.print(),
            message: x.message.print(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecordDto {
    pub seq: u64,
    pub tx: String,
    pub result: String,
    pub externals: Vec<ExternalDto>,
}

impl TxRecordDto {
    pub fn new(seq: u64, r: &TxRecord) -> TxRecordDto {
        TxRecordDto {
            seq,
            tx: r.tx.print(),
            result: r.result.to_text(),
            externals: r
                .externals
                .iter()
                .enumerate()
                .map(|(i, x)| ExternalDto::new(seq, i, x))
                .collect(),
        }
    }
}

impl From<&DurableRecord> for TxRecordDto {
    fn from(r: &DurableRecord) -> TxRecordDto {
        TxRecordDto::new(r.seq, &r.to_tx_record())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryDto {
    pub caller: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogDto {
    pub object: String,
    pub entries: Vec<EntryDto>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyDto {
    pub ok: bool,
    pub transactions: u64,
    /// Why verification failed: a divergence, corruption or a torn tail.
    pub problem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverDto {
    pub transactions: usize,
    pub k_len: usize,
    pub torn_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoDto {
    pub name: String,
    pub passed: bool,
    pub workers: usize,
    pub table: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposeRequest {
    pub topology: String,
    pub scenario: String,
    /// Directory that relative store paths in the topology resolve against.
    #[serde(default)]
    pub base_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposeDto {
    pub lines: Vec<String>,
    pub mismatches: usize,
    pub dead_letters: usize,
}

/// Error categories, each with a fixed HTTP status and CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Malformed input; nothing was submitted.
    Parse,
    /// A request that cannot apply (no store configured, unknown fixture).
    Usage,
    NotFound,
    /// The store is damaged or does not match its replay.
    Corruption,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDto {
    pub kind: ErrorKind,
    pub message: String,
    /// 0-based index of the offending transaction, for parse errors.
    #[serde(default)]
    pub index: Option<usize>,
}

/// Result text as printed in machine-readable output.
pub fn status_text(result: &TxResult) -> &'static str {
    if result.is_abort() {
        "ABORT"
    } else {
        "COMMIT"
    }
}
