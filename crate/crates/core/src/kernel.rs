//! A running kernel instance: committed state, configuration and an optional
//! durable store. A submission returns only after its record is durable.

use std::path::Path;

use thiserror::Error;

use crate::durability::{Recovered, Store, StoreError, StoreHeader, SyncPolicy};
use crate::scheduler::{run_concurrent_observed, ScheduleStats};
use crate::txn::{execute, Execution, KernelConfig, SystemState, Transaction};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("store was created with {stored}, but {requested} was requested")]
    ConfigMismatch { stored: String, requested: String },
}

/// How [`Kernel::open`] found its store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenReport {
    pub created: bool,
    pub transactions: usize,
    pub k_len: usize,
    pub torn_bytes: u64,
}

/// One committed submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    /// 1-based position in `T`.
    pub seq: u64,
    pub execution: Execution,
}

pub struct Kernel {
    sys: SystemState,
    config: KernelConfig,
    store: Option<Store>,
}

impl Kernel {
    pub fn in_memory(config: KernelConfig) -> Kernel {
        Kernel {
            sys: SystemState::new(),
            config,
            store: None,
        }
    }

    /// Opens (recovering) or creates the store at `path`. An existing store
    /// keeps its own allocator, salt and budget; if `requested` disagrees the
    /// open fails rather than silently changing identities.
    pub fn open(path: &Path, requested: KernelConfig) -> Result<(Kernel, OpenReport), KernelError> {
        let wanted = StoreHeader::from_config(&requested);
        let (kernel, report) = Kernel::open_adopting(path, requested)?;
        let stored = StoreHeader::from_config(&kernel.config);
        if stored != wanted {
            return Err(KernelError::ConfigMismatch {
                stored: describe(&stored),
                requested: describe(&wanted),
            });
        }
        Ok((kernel, report))
    }

    /// Opens the store at `path` with whatever parameters it was created
    /// with, creating it with `fallback` if it does not exist.
    pub fn open_adopting(path: &Path, fallback: KernelConfig) -> Result<(Kernel, OpenReport), KernelError> {
        let wanted = StoreHeader::from_config(&fallback);
        let (store, Recovered { sys, torn_bytes, .. }, created) = Store::open_or_create(path, &wanted)?;
        let config = KernelConfig { builtins: fallback.builtins, ..store.header().to_config()? };
        let report = OpenReport {
            created,
            transactions: sys.t.len(),
            k_len: sys.k.len(),
            torn_bytes,
        };
        Ok((
            Kernel {
                sys,
                config,
                store: Some(store),
            },
            report,
        ))
    }

    pub fn with_sync_policy(mut self, policy: SyncPolicy) -> Kernel {
        self.store = self.store.map(|s| s.with_policy(policy));
        self
    }

    pub fn state(&self) -> &SystemState {
        &self.sys
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn store_path(&self) -> Option<&Path> {
        self.store.as_ref().map(|s| s.path())
    }

    /// Executes and commits one transaction. With a store, the record is
    /// written and flushed before the in-memory state advances; a storage
    /// failure leaves the state unchanged.
    pub fn submit(&mut self, tx: &Transaction) -> Result<Outcome, KernelError> {
        let exec = execute(&self.sys.k, tx, &self.config);
        if let Some(store) = &mut self.store {
            store.append(tx, &exec)?;
        }
        self.sys.apply(tx, &exec);
        Ok(Outcome {
            seq: self.sys.t.len() as u64,
            execution: exec,
        })
    }

    /// Commits a batch in order through the concurrent scheduler, then makes
    /// all of its records durable as one group. On a storage failure none of
    /// the batch is applied.
    pub fn submit_batch(
        &mut self,
        batch: &[Transaction],
        workers: usize,
    ) -> Result<(Vec<Outcome>, ScheduleStats), KernelError> {
        let base = self.sys.t.len() as u64;
        let mut next = self.sys.clone();
        let mut execs = Vec::with_capacity(batch.len());
        let stats = run_concurrent_observed(&mut next, batch, workers, &self.config, |_, exec| {
            execs.push(exec.clone())
        });
        if let Some(store) = &mut self.store {
            let items: Vec<_> = batch.iter().zip(&execs).collect();
            store.append_group(&items)?;
        }
        self.sys = next;
        let outcomes = execs
            .into_iter()
            .enumerate()
            .map(|(i, execution)| Outcome {
                seq: base + i as u64 + 1,
                execution,
            })
            .collect();
        Ok((outcomes, stats))
    }
}

fn describe(h: &StoreHeader) -> String {
    if h.salt.is_empty() {
        format!("allocator {} budget {}", h.allocator, h.budget)
    } else {
        format!("allocator {} salt {} budget {}", h.allocator, h.salt, h.budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::durability::{recover, replay_verify};
    use crate::patterns::fixtures;

    #[test]
    fn durable_kernel_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.store");
        let fixture = fixtures::auction();
        let (mut k, report) = Kernel::open(&path, KernelConfig::sequential()).unwrap();
        assert!(report.created);
        for tx in fixture.transactions() {
            k.submit(&tx).unwrap();
        }
        let expected = fixture.execute();
        assert_eq!(k.state(), &expected);
        drop(k);
        let (k, report) = Kernel::open(&path, KernelConfig::sequential()).unwrap();
        assert!(!report.created);
        assert_eq!(report.transactions, expected.t.len());
        assert_eq!(k.state(), &expected);
        assert_eq!(recover(&path).unwrap().sys, expected);
        assert!(replay_verify(&path).unwrap().ok());
    }

    #[test]
    fn batch_matches_sequential_and_is_durable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.store");
        let fixture = fixtures::clone_and_bootloader();
        let (mut k, _) = Kernel::open(&path, KernelConfig::sequential()).unwrap();
        let (outcomes, _) = k.submit_batch(&fixture.transactions(), 4).unwrap();
        assert_eq!(outcomes.len(), fixture.rows.len());
        assert_eq!(outcomes.last().unwrap().seq, fixture.rows.len() as u64);
        assert_eq!(k.state(), &fixture.execute());
        assert_eq!(recover(&path).unwrap().sys, fixture.execute());
    }

    #[test]
    fn reopening_with_other_parameters_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.store");
        Kernel::open(&path, KernelConfig::hash(b"a".to_vec())).unwrap();
        let err = Kernel::open(&path, KernelConfig::hash(b"b".to_vec())).err().unwrap();
        assert!(matches!(err, KernelError::ConfigMismatch { .. }));
        assert!(Kernel::open(&path, KernelConfig::hash(b"a".to_vec())).is_ok());
    }
}
