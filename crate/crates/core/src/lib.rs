//! A deterministic object-coordination kernel.
//!
//! All state is one append-only sequence of `(receiver, caller, message)`
//! entries over s-expressions. Objects interact only by sending messages; the
//! kernel classifies every send target into one of six structural cases and
//! sets the caller of each log entry itself, so provenance can never be forged
//! by a program. Transactions commit all of their pending entries or none.

pub mod compose;
pub mod dispatch;
pub mod durability;
pub mod interpreter;
pub mod kernel;
pub mod patterns;
pub mod scheduler;
pub mod sexpr;
pub mod state;
pub mod txn;
pub mod wire;
pub mod workload;

pub use dispatch::{Allocator, Builtins, DispatchCase, StandardBuiltins};
pub use durability::{replay_verify, DurableRecord, Store, StoreHeader, SyncPolicy, VerifyReport};
pub use interpreter::{Abort, Machine, Probe, Projection, StepBudget, DEFAULT_BUDGET};
pub use kernel::{Kernel, KernelError, OpenReport, Outcome};
pub use sexpr::{Nat, ParseError, SExpr};
pub use state::{Effects, ExternalSend, KernelState, LogEntry, StateView, TxRecord, TxResult};
pub use txn::{execute, execute_probed, Execution, KernelConfig, SystemState, Transaction};
