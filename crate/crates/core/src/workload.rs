//! Seeded random workloads for property suites, fault injection and
//! benchmarks. Every generator is a pure function of its seed.

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use crate::dispatch::{atoms, Allocator};
use crate::patterns::asm::{fail_code, pass_code};
use crate::patterns::fixtures::{create_tx, delegate_program, echo_caller_program, proxy_program, send_tx};
use crate::patterns::{Asm, Slot};
use crate::sexpr::{Nat, SExpr};
use crate::state::LogEntry;
use crate::txn::{Execution, KernelConfig, SystemState, Transaction};

/// Step budget for generated workloads.
///
/// Generated programs can recurse through their own object without bound.
/// Every persistent dispatch materialises the receiver's whole encoded log,
/// so host time for such a transaction grows with the square of the steps it
/// takes; under the default budget one of them runs for minutes before
/// aborting. A small budget keeps them cheap and still exercises exhaustion.
pub const BUDGET: u64 = 20_000;

/// Sequential allocation under [`BUDGET`].
pub fn sequential_config() -> KernelConfig {
    KernelConfig::new(Allocator::Sequential, BUDGET)
}

/// Hash allocation under [`BUDGET`].
pub fn hash_config(salt: impl Into<Vec<u8>>) -> KernelConfig {
    KernelConfig::new(Allocator::Hash { salt: salt.into() }, BUDGET)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// A small random s-expression over atoms below 20.
pub fn message(rng: &mut StdRng, depth: usize) -> SExpr {
    if depth == 0 || rng.random_bool(0.5) {
        SExpr::atom(rng.random_range(0..20))
    } else {
        SExpr::pair(message(rng, depth - 1), message(rng, depth - 1))
    }
}

/// Identities created by a committed execution.
pub fn created(exec: &Execution) -> Vec<Nat> {
    exec.delta
        .iter()
        .filter(|e| e.receiver.is(atoms::KERNEL))
        .filter_map(|e| e.message.as_atom().cloned())
        .collect()
}

/// Returns `[message, birth entry]` of the receiver.
fn history_program() -> SExpr {
    let mut a = Asm::new();
    let birth = a.head(Asm::LOG);
    let r = a.pair(Asm::MESSAGE, birth);
    a.ret(r)
}

/// FAILs on message 13, otherwise returns the message.
fn picky_program() -> SExpr {
    let mut a = Asm::new();
    let t = a.equal(Asm::MESSAGE, 13);
    a.if_else(t, fail_code(), pass_code(), Asm::MESSAGE);
    a.ret(Asm::MESSAGE)
}

/// Creates an echo object and returns its identity.
fn creator_program() -> SExpr {
    let mut a = Asm::new();
    let id = a.send(0, echo_caller_program());
    a.ret(id)
}

/// Straight-line code over the context with up to `ops` random operations,
/// some of them sends to `targets`.
pub fn straight_line(rng: &mut StdRng, targets: &[Nat], ops: usize) -> SExpr {
    let mut a = Asm::new();
    let mut slots: Vec<Slot> = vec![Asm::MESSAGE, Asm::SELF, Asm::CALLER];
    for _ in 0..rng.random_range(1..=ops) {
        let x = *slots.choose(rng).expect("slots");
        let y = *slots.choose(rng).expect("slots");
        let s = match rng.random_range(0..10) {
            0 => a.push(SExpr::atom(rng.random_range(0..20))),
            1 => a.head(x),
            2 => a.tail(x),
            3 => a.inc(SExpr::atom(rng.random_range(0..100))),
            4 | 5 => a.pair(x, y),
            6 => a.equal(x, y),
            _ => match targets.choose(rng) {
                Some(t) => a.send(SExpr::nat(t.clone()), x),
                None => a.pair(y, x),
            },
        };
        slots.push(s);
    }
    let r = *slots.choose(rng).expect("slots");
    a.ret(r)
}

/// A random object program drawn from a fixed repertoire.
pub fn object_program(rng: &mut StdRng, known: &[Nat]) -> SExpr {
    match rng.random_range(0..8) {
        0 => echo_caller_program(),
        1 => proxy_program(),
        2 => match known.choose(rng) {
            Some(t) => {
                let mut a = Asm::new();
                let r = a.send(SExpr::nat(t.clone()), Asm::MESSAGE);
                a.ret(r)
            }
            None => echo_caller_program(),
        },
        3 => {
            let mut code = Asm::new();
            let r = code.pair(Asm::CALLER, Asm::MESSAGE);
            delegate_program(code.ret(r))
        }
        4 => history_program(),
        5 => picky_program(),
        6 => creator_program(),
        _ => straight_line(rng, known, 6),
    }
}

/// A random transaction against the objects in `known`.
pub fn transaction(rng: &mut StdRng, known: &[Nat]) -> Transaction {
    let target = |rng: &mut StdRng| known.choose(rng).cloned();
    match rng.random_range(0..20) {
        0..=5 => {
            let programs: Vec<SExpr> = (0..rng.random_range(1..=3)).map(|_| object_program(rng, known)).collect();
            create_tx(&programs)
        }
        6..=12 => match target(rng) {
            Some(t) => send_tx(SExpr::nat(t), message(rng, 3)),
            None => create_tx(&[echo_caller_program()]),
        },
        13..=14 => match (target(rng), target(rng)) {
            (Some(p), Some(t)) => send_tx(SExpr::nat(p), SExpr::pair(SExpr::nat(t), message(rng, 2))),
            _ => create_tx(&[proxy_program()]),
        },
        15..=17 => Transaction::new(straight_line(rng, known, 10), message(rng, 2)),
        18 => {
            // Effects followed by a FAIL.
            let mut a = Asm::new();
            for t in known.iter().take(3) {
                a.send(SExpr::nat(t.clone()), Asm::MESSAGE);
            }
            a.send(SExpr::pair(SExpr::atom(atoms::EXTERNAL_TAG), SExpr::atom(3)), Asm::MESSAGE);
            Transaction::new(a.fail(), message(rng, 2))
        }
        _ => send_tx(
            SExpr::atom(rng.random_range(20..1000) + known.len() as u64 * 1000),
            message(rng, 1),
        ),
    }
}

/// A random sequence of `len` transactions. The sequence is generated
/// against a live execution so later transactions address objects created
/// by earlier ones.
pub fn sequence(seed: u64, len: usize, config: &KernelConfig) -> Vec<Transaction> {
    let mut rng = rng(seed);
    let mut sys = SystemState::new();
    let mut known = Vec::new();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let tx = transaction(&mut rng, &known);
        let exec = sys.submit(&tx, config);
        known.extend(created(&exec));
        out.push(tx);
    }
    out
}

/// One hop of a relay chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Hop {
    /// A persistent relay object.
    Object(Nat),
    /// The relay code itself, sent as an ephemeral target.
    Code,
}

/// Message: `[next, rest]`. Sends `rest` to `next` and returns the reply.
pub fn relay_code() -> SExpr {
    let mut a = Asm::new();
    let next = a.head(Asm::MESSAGE);
    let rest = a.tail(Asm::MESSAGE);
    let r = a.send(next, rest);
    a.ret(r)
}

/// A send topology ending at an echo object, with its provenance oracle.
#[derive(Debug, Clone)]
pub struct Topology {
    pub hops: Vec<Hop>,
    pub echo: Nat,
    pub payload: SExpr,
}

impl Topology {
    /// The transaction that walks the chain.
    pub fn transaction(&self) -> Transaction {
        let mut route = SExpr::pair(SExpr::nat(self.echo.clone()), self.payload.clone());
        for hop in self.hops.iter().rev() {
            let t = match hop {
                Hop::Object(n) => SExpr::nat(n.clone()),
                Hop::Code => relay_code(),
            };
            route = SExpr::pair(t, route);
        }
        let mut a = Asm::new();
        let next = a.head(Asm::MESSAGE);
        let rest = a.tail(Asm::MESSAGE);
        let r = a.send(next, rest);
        Transaction::new(a.ret(r), route)
    }

    /// The exact `Δ` the kernel must produce: one entry per persistent hop,
    /// in completion order (innermost first), each with the caller set to
    /// the nearest enclosing persistent frame, or 1 at top level.
    pub fn expected_delta(&self) -> Vec<LogEntry> {
        let mut caller = Nat::small(atoms::EXTERNAL);
        let mut message = self.transaction().input;
        let mut entries = Vec::new();
        for hop in &self.hops {
            let rest = message.tail().expect("route").clone();
            if let Hop::Object(n) = hop {
                entries.push(LogEntry::new(n.clone(), caller.clone(), rest.clone()));
                caller = n.clone();
            }
            message = rest;
        }
        let (_, at_echo) = message.as_pair().expect("route");
        entries.push(LogEntry::new(self.echo.clone(), caller, at_echo.clone()));
        entries.reverse();
        entries
    }

    /// The echo's reply: `[expected caller, payload]`.
    pub fn expected_result(&self) -> SExpr {
        let delta = self.expected_delta();
        SExpr::pair(SExpr::nat(delta[0].caller.clone()), delta[0].message.clone())
    }
}

/// A state with `relays` relay objects and one echo object, under `config`.
pub fn relay_world(relays: usize, config: &KernelConfig) -> (SystemState, Vec<Nat>, Nat) {
    let mut sys = SystemState::new();
    let mut programs = vec![relay_code(); relays];
    programs.push(echo_caller_program());
    let exec = sys.submit(&create_tx(&programs), config);
    let mut ids = created(&exec);
    let echo = ids.pop().expect("echo created");
    (sys, ids, echo)
}

/// A random chain of 1..=`max_hops` hops over `relays`, mixing persistent
/// and ephemeral intermediaries.
pub fn topology(rng: &mut StdRng, relays: &[Nat], echo: &Nat, max_hops: usize) -> Topology {
    let hops = (0..rng.random_range(1..=max_hops))
        .map(|_| {
            if rng.random_bool(0.4) {
                Hop::Code
            } else {
                Hop::Object(relays.choose(rng).expect("relays").clone())
            }
        })
        .collect();
    Topology {
        hops,
        echo: echo.clone(),
        payload: message(rng, 2),
    }
}

/// Relay objects for fault injection: each records the message with a side
/// object and emits an external send, then obeys the head step of its
/// message `[[next, action], rest]` with action 0 = continue, 1 = FAIL,
/// 2 = FAIL inside ephemeral code.
pub fn fault_relay_program(side: &Nat) -> SExpr {
    let mut a = Asm::new();
    a.send(SExpr::nat(side.clone()), Asm::MESSAGE);
    a.send(
        SExpr::pair(SExpr::atom(atoms::EXTERNAL_TAG), SExpr::atom(9)),
        Asm::MESSAGE,
    );
    let step = a.head(Asm::MESSAGE);
    let action = a.tail(step);
    let rest = a.tail(Asm::MESSAGE);

    let mut fail_ephemeral = Asm::new();
    fail_ephemeral.send(fail_code(), 0);
    let fail_ephemeral = fail_ephemeral.halt();

    let mut forward = Asm::new();
    let step = forward.head(Asm::MESSAGE);
    let next = forward.head(step);
    let r = forward.send(next, Asm::MESSAGE);
    let forward = forward.ret(r);

    let mut go_on = Asm::new();
    go_on.if_else(Asm::MESSAGE, pass_code(), forward, Asm::MESSAGE);
    let go_on = go_on.halt();

    let is_fail = a.equal(action, 1);
    let is_ephemeral_fail = a.equal(action, 2);
    let then_fail = a.select(is_fail, fail_code(), go_on);
    let chosen = a.select(is_ephemeral_fail, fail_ephemeral, then_fail);
    let r = a.send(chosen, rest);
    a.ret(r)
}

/// A fault-injection chain: `[[r1, a1], [[r2, a2], ... 0]]`.
pub fn fault_chain(relays: &[Nat], actions: &[u64]) -> SExpr {
    let mut m = SExpr::ZERO;
    for (r, a) in relays.iter().zip(actions).rev() {
        m = SExpr::pair(SExpr::pair(SExpr::nat(r.clone()), SExpr::atom(*a)), m);
    }
    m
}

/// Sends `chain` to the first relay of the chain.
pub fn fault_tx(chain: &SExpr) -> Transaction {
    let mut a = Asm::new();
    let step = a.head(Asm::MESSAGE);
    let first = a.head(step);
    let r = a.send(first, Asm::MESSAGE);
    Transaction::new(a.ret(r), chain.clone())
}
