//! Transaction execution and the sequential system loop.
//!
//! A transaction is a pair `[p, i]`. It runs unprivileged: the top-level
//! context is `[p, i, 1, 0, 1]`, so it sees the external principal as both
//! self and caller and an empty log. Either every pending entry commits or
//! none does.

use std::fmt;
use std::sync::Arc;

use crate::dispatch::{atoms, Allocator, Builtins, StandardBuiltins};
use crate::interpreter::{seed_context, Abort, Machine, Probe, DEFAULT_BUDGET};
use crate::sexpr::SExpr;
use crate::state::{encode_log, ExternalSend, KernelState, LogEntry, TxRecord, TxResult};

/// A submitted `[program, input]` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub program: SExpr,
    pub input: SExpr,
}

impl Transaction {
    pub fn new(program: SExpr, input: SExpr) -> Transaction {
        Transaction { program, input }
    }

    /// Any pair is a well-formed submission; an atom is not.
    pub fn from_sexpr(tx: &SExpr) -> Option<Transaction> {
        tx.as_pair().map(|(p, i)| Transaction::new(p.clone(), i.clone()))
    }

    pub fn to_sexpr(&self) -> SExpr {
        SExpr::pair(self.program.clone(), self.input.clone())
    }
}

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexpr())
    }
}

/// Deployment parameters that fix the transition function. They are pinned
/// in the store header so replay uses the same ones.
#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub allocator: Allocator,
    pub budget: u64,
    pub builtins: Arc<dyn Builtins>,
}

impl KernelConfig {
    pub fn new(allocator: Allocator, budget: u64) -> KernelConfig {
        KernelConfig {
            allocator,
            budget,
            builtins: Arc::new(StandardBuiltins),
        }
    }

    pub fn sequential() -> KernelConfig {
        KernelConfig::new(Allocator::Sequential, DEFAULT_BUDGET)
    }

    pub fn hash(salt: impl Into<Vec<u8>>) -> KernelConfig {
        KernelConfig::new(Allocator::Hash { salt: salt.into() }, DEFAULT_BUDGET)
    }

    /// Replaces the built-in functions. Only fault-injection harnesses do this.
    pub fn with_builtins(mut self, builtins: Arc<dyn Builtins>) -> KernelConfig {
        self.builtins = builtins;
        self
    }
}

impl Default for KernelConfig {
    fn default() -> KernelConfig {
        KernelConfig::sequential()
    }
}

/// Everything one `execute` produced, committed or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub result: TxResult,
    /// Pending entries; empty on abort.
    pub delta: Vec<LogEntry>,
    /// Pending external sends; empty on abort.
    pub externals: Vec<ExternalSend>,
    /// Interpreter transitions taken.
    pub steps: u64,
    /// Why the transaction aborted, if it did.
    pub abort: Option<Abort>,
}

impl Execution {
    pub fn committed(&self) -> bool {
        !self.result.is_abort()
    }
}

/// `execute(K, [p, i])` without modifying `k`; the caller commits `delta`.
pub fn execute(k: &KernelState, tx: &Transaction, config: &KernelConfig) -> Execution {
    execute_inner(k, tx, config, None)
}

/// As [`execute`], reporting every dispatch and projection to `probe`.
pub fn execute_probed(
    k: &KernelState,
    tx: &Transaction,
    config: &KernelConfig,
    probe: &mut dyn Probe,
) -> Execution {
    execute_inner(k, tx, config, Some(probe))
}

fn execute_inner(
    k: &KernelState,
    tx: &Transaction,
    config: &KernelConfig,
    probe: Option<&mut dyn Probe>,
) -> Execution {
    let mut machine = Machine::new(k, &config.allocator, config.builtins.as_ref(), config.budget);
    if let Some(probe) = probe {
        machine = machine.with_probe(probe);
    }
    let ext = SExpr::atom(atoms::EXTERNAL);
    let ctx = seed_context(
        tx.program.clone(),
        tx.input.clone(),
        ext.clone(),
        encode_log(&[]),
        ext,
    );
    let outcome = machine.run(ctx, tx.program.clone());
    let steps = machine.steps();
    match outcome {
        Ok(value) => {
            let (delta, externals) = machine.into_effects().into_parts();
            Execution {
                result: TxResult::Value(value),
                delta,
                externals,
                steps,
                abort: None,
            }
        }
        Err(reason) => Execution {
            result: TxResult::Abort,
            delta: Vec::new(),
            externals: Vec::new(),
            steps,
            abort: Some(reason),
        },
    }
}

/// `(K, T)`: the committed state and one record per submission.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SystemState {
    pub k: KernelState,
    pub t: Vec<TxRecord>,
}

impl SystemState {
    pub fn new() -> SystemState {
        SystemState::default()
    }

    /// Applies an execution produced against the current `k` and records it.
    pub fn apply(&mut self, tx: &Transaction, exec: &Execution) {
        self.k.extend(exec.delta.iter().cloned());
        self.t.push(TxRecord {
            tx: tx.to_sexpr(),
            result: exec.result.clone(),
            externals: exec.externals.clone(),
        });
    }

    /// Executes `tx` against the committed head and appends exactly one
    /// record, whatever the outcome.
    pub fn submit(&mut self, tx: &Transaction, config: &KernelConfig) -> Execution {
        let exec = execute(&self.k, tx, config);
        self.apply(tx, &exec);
        exec
    }

    pub fn submit_all<'a>(
        &mut self,
        txs: impl IntoIterator<Item = &'a Transaction>,
        config: &KernelConfig,
    ) -> Vec<Execution> {
        txs.into_iter().map(|tx| self.submit(tx, config)).collect()
    }

    pub fn results(&self) -> Vec<TxResult> {
        self.t.iter().map(|r| r.result.clone()).collect()
    }
}
