//! Conflict-serializable concurrent execution of a batch.
//!
//! Serial order is the batch order. Execution is optimistic and proceeds in
//! rounds: every remaining transaction of the round's window executes in
//! parallel against the same committed snapshot, then a single commit stage
//! walks the window in order and commits each execution whose footprint is
//! untouched by the commits made earlier in the round. The first conflicting
//! transaction ends the round; it and everything after it re-execute against
//! the new head. The first transaction of every round always commits, so the
//! batch always finishes, and re-executions never produce records.
//!
//! Write-write conflicts (a common receiver in both `Δ`s) are not enough on
//! their own, because an execution can depend on state it never writes:
//! an aborted execution writes nothing but may have read a log, a send to a
//! not-yet-existing atom depends on whether it gets created, and allocation
//! depends on the registry length. The footprint therefore also records log
//! and program projections, existence probes and registry reads.

use std::collections::{BTreeSet, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::dispatch::atoms;
use crate::interpreter::{Probe, Projection};
use crate::sexpr::Nat;
use crate::state::{KernelState, LogEntry};
use crate::txn::{execute, execute_probed, Execution, KernelConfig, SystemState, Transaction};

/// Persistent objects whose logs gained an entry, derived from `Δ`. Includes
/// the kernel atom 0 for creating transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriteSet(pub BTreeSet<Nat>);

impl WriteSet {
    pub fn from_delta(delta: &[LogEntry]) -> WriteSet {
        WriteSet(delta.iter().map(|e| e.receiver.clone()).collect())
    }

    pub fn of<I: IntoIterator<Item = u64>>(ids: I) -> WriteSet {
        WriteSet(ids.into_iter().map(Nat::small).collect())
    }

    pub fn contains(&self, n: &Nat) -> bool {
        self.0.contains(n)
    }
}

/// Two transactions conflict iff they append to a common object.
pub fn conflicts(a: &WriteSet, b: &WriteSet) -> bool {
    a.0.intersection(&b.0).next().is_some()
}

/// Everything an execution's outcome depends on or changes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Footprint {
    /// Objects whose log or program was projected.
    pub reads: HashSet<Nat>,
    /// Atoms whose registry membership was tested.
    pub probes: HashSet<Nat>,
    /// Whether allocation read the registry length.
    pub registry: bool,
    /// Receivers of the committed `Δ`.
    pub writes: WriteSet,
    /// Identities created by the committed `Δ`.
    pub created: HashSet<Nat>,
}

impl Footprint {
    fn record_effects(&mut self, exec: &Execution) {
        self.writes = WriteSet::from_delta(&exec.delta);
        self.created = exec
            .delta
            .iter()
            .filter(|e| e.receiver.is(atoms::KERNEL))
            .filter_map(|e| e.message.as_atom().cloned())
            .collect();
    }
}

#[derive(Default)]
struct FootprintProbe {
    fp: Footprint,
}

impl Probe for FootprintProbe {
    fn projection(&mut self, projection: &Projection) {
        match projection {
            Projection::Log(n) | Projection::Program(n) => {
                self.fp.reads.insert(n.clone());
            }
            Projection::Exists(n) => {
                self.fp.probes.insert(n.clone());
            }
            Projection::RegistryLen => self.fp.registry = true,
        }
    }
}

/// Executes `tx` and records its footprint.
pub fn execute_traced(k: &KernelState, tx: &Transaction, config: &KernelConfig) -> (Execution, Footprint) {
    let mut probe = FootprintProbe::default();
    let exec = execute_probed(k, tx, config, &mut probe);
    let mut fp = probe.fp;
    fp.record_effects(&exec);
    (exec, fp)
}

/// Union of the effects committed so far in a round.
#[derive(Debug, Default)]
struct Committed {
    writes: HashSet<Nat>,
    created: HashSet<Nat>,
}

impl Committed {
    fn invalidates(&self, fp: &Footprint) -> bool {
        fp.writes.0.iter().any(|n| self.writes.contains(n))
            || fp.reads.iter().any(|n| self.writes.contains(n))
            || fp.probes.iter().any(|n| self.created.contains(n))
            || (fp.registry && !self.created.is_empty())
    }

    fn add(&mut self, fp: &Footprint) {
        self.writes.extend(fp.writes.0.iter().cloned());
        self.created.extend(fp.created.iter().cloned());
    }
}

/// Counters describing how a batch was scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleStats {
    pub rounds: usize,
    /// Executions performed, including discarded ones.
    pub executions: usize,
    /// Executions discarded because of a conflict.
    pub retries: usize,
}

/// Submits `batch` in order, executing with up to `workers` threads.
/// The resulting state is identical to submitting sequentially.
pub fn run_concurrent(
    sys: &mut SystemState,
    batch: &[Transaction],
    workers: usize,
    config: &KernelConfig,
) -> ScheduleStats {
    run_concurrent_observed(sys, batch, workers, config, |_, _| {})
}

/// As [`run_concurrent`], calling `on_commit(seq_index, execution)` after
/// each commit (used for durable group commit).
pub fn run_concurrent_observed(
    sys: &mut SystemState,
    batch: &[Transaction],
    workers: usize,
    config: &KernelConfig,
    mut on_commit: impl FnMut(usize, &Execution),
) -> ScheduleStats {
    let mut stats = ScheduleStats::default();
    if workers <= 1 {
        for (i, tx) in batch.iter().enumerate() {
            let exec = execute(&sys.k, tx, config);
            sys.apply(tx, &exec);
            on_commit(i, &exec);
            stats.rounds += 1;
            stats.executions += 1;
        }
        return stats;
    }
    let window = workers * 4;
    let mut next = 0;
    while next < batch.len() {
        let end = (next + window).min(batch.len());
        let slice = &batch[next..end];
        let outcomes = execute_parallel(&sys.k, slice, workers, config);
        stats.rounds += 1;
        stats.executions += outcomes.len();
        let mut committed = Committed::default();
        let mut done = 0;
        for (j, (exec, fp)) in outcomes.iter().enumerate() {
            if j > 0 && committed.invalidates(fp) {
                break;
            }
            sys.apply(&slice[j], exec);
            on_commit(next + j, exec);
            committed.add(fp);
            done += 1;
        }
        stats.retries += outcomes.len() - done;
        next += done;
    }
    stats
}

fn execute_parallel(
    k: &KernelState,
    txs: &[Transaction],
    workers: usize,
    config: &KernelConfig,
) -> Vec<(Execution, Footprint)> {
    let cursor = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<(Execution, Footprint)>>> =
        txs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(txs.len()) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= txs.len() {
                    break;
                }
                let out = execute_traced(k, &txs[i], config);
                *slots[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot poisoned")
                .expect("every transaction executed")
        })
        .collect()
}
