//! The checkpoint transform for fold-structured programs.
//!
//! A program `P` whose response is `use(fold(step, σ0, history), m)` rescans
//! its whole log on every call. The transformed program `P'` self-sends
//! `[CHECKPOINT, σ]` on each call, and later calls start from the newest
//! checkpoint instead of `σ0`. Responses are identical; the log grows by one
//! extra entry per call.
//!
//! Fragment conventions (both run ephemerally inside the object):
//! - `step` receives `[σ, [caller, message]]` and returns the next state;
//! - `use` receives `[σ, message]` and returns the response.

use crate::patterns::asm::{const_code, fold, safe_head_code, Asm};
use crate::patterns::tags;
use crate::sexpr::{Nat, SExpr};

/// Host-side reference model of a fold, used as a test oracle and to build
/// synthetic histories.
pub type HostStep = fn(&SExpr, &Nat, &SExpr) -> SExpr;
pub type HostUse = fn(&SExpr, &SExpr) -> SExpr;

/// `(σ0, step, use)` plus its host reference model.
#[derive(Debug, Clone)]
pub struct FoldSpec {
    pub name: &'static str,
    pub sigma0: SExpr,
    pub step: SExpr,
    pub use_: SExpr,
    pub host_step: HostStep,
    pub host_use: HostUse,
}

/// The naive program: fold `step` over every entry after the birth record,
/// then apply `use`.
pub fn naive_program(spec: &FoldSpec) -> SExpr {
    let mut a = Asm::new();
    let entries = a.tail(Asm::LOG);
    let sigma = fold(&mut a, &spec.step, &spec.sigma0, entries);
    let arg = a.pair(sigma, Asm::MESSAGE);
    let r = a.send(&spec.use_, arg);
    a.ret(r)
}

/// Atom 0 iff the message is a pair tagged with the checkpoint tag.
fn is_checkpoint_code() -> SExpr {
    let mut a = Asm::new();
    let tag = a.send(safe_head_code(), Asm::MESSAGE);
    a.equal(tag, tags::CHECKPOINT);
    a.halt()
}

/// Scan step over `[[σ, pending], [caller, message]]`: a self-sent checkpoint
/// resets the state and clears pending entries; anything else is queued.
fn scan_code() -> SExpr {
    let mut push = Asm::new();
    let acc = push.head(Asm::MESSAGE);
    let entry = push.tail(Asm::MESSAGE);
    let sigma = push.head(acc);
    let pending = push.tail(acc);
    let pending2 = push.pair(entry, pending);
    let r = push.pair(sigma, pending2);
    let push = push.ret(r);

    let mut reset = Asm::new();
    let entry = reset.tail(Asm::MESSAGE);
    let m = reset.tail(entry);
    let sigma = reset.tail(m);
    let r = reset.pair(sigma, 0);
    let reset = reset.ret(r);

    let mut from_self = Asm::new();
    let entry = from_self.tail(Asm::MESSAGE);
    let m = from_self.tail(entry);
    let flag = from_self.send(is_checkpoint_code(), m);
    from_self.if_else(flag, reset, push.clone(), Asm::MESSAGE);
    let from_self = from_self.halt();

    let mut a = Asm::new();
    let entry = a.tail(Asm::MESSAGE);
    let caller = a.head(entry);
    let t = a.equal(caller, Asm::SELF);
    a.if_else(t, from_self, push, Asm::MESSAGE);
    a.halt()
}

/// `[acc, x] -> [x, acc]`: reversing a pair-chain by folding.
fn cons_code() -> SExpr {
    let mut a = Asm::new();
    let acc = a.head(Asm::MESSAGE);
    let x = a.tail(Asm::MESSAGE);
    let r = a.pair(x, acc);
    a.ret(r)
}

/// The transformed program.
///
/// A checkpoint-tagged message is accepted only from the object itself and
/// answers atom 0; from anyone else it FAILs, so the log never holds a
/// forged checkpoint.
pub fn checkpoint_transform(spec: &FoldSpec) -> SExpr {
    let mut ck = Asm::new();
    ck.assert_equal(Asm::CALLER, Asm::SELF);
    let ck = ck.ret(0);

    let mut normal = Asm::new();
    let entries = normal.tail(Asm::LOG);
    let init = normal.pair(&spec.sigma0, 0);
    let st = fold(&mut normal, scan_code(), init, entries);
    let sigma = normal.head(st);
    let pending = normal.tail(st);
    let forward = fold(&mut normal, cons_code(), 0, pending);
    let sigma2 = fold(&mut normal, &spec.step, sigma, forward);
    let note = normal.pair(tags::CHECKPOINT, sigma2);
    normal.send(Asm::SELF, note);
    let arg = normal.pair(sigma2, Asm::MESSAGE);
    let r = normal.send(&spec.use_, arg);
    let normal = normal.ret(r);

    let mut a = Asm::new();
    let flag = a.send(is_checkpoint_code(), Asm::MESSAGE);
    a.if_else(flag, ck, normal, Asm::MESSAGE);
    a.halt()
}

fn counter_step(sigma: &SExpr, _caller: &Nat, _m: &SExpr) -> SExpr {
    SExpr::nat(sigma.as_atom().expect("counter state is an atom").succ())
}

fn counter_use(sigma: &SExpr, _m: &SExpr) -> SExpr {
    sigma.clone()
}

/// Counts the messages received before the current one.
pub fn counter_spec() -> FoldSpec {
    let mut step = Asm::new();
    let sigma = step.head(Asm::MESSAGE);
    let r = step.inc(sigma);
    let step = step.ret(r);

    let mut use_ = Asm::new();
    let sigma = use_.head(Asm::MESSAGE);
    let use_ = use_.ret(sigma);

    FoldSpec {
        name: "counter",
        sigma0: SExpr::ZERO,
        step,
        use_,
        host_step: counter_step,
        host_use: counter_use,
    }
}

fn tag_of(m: &SExpr) -> Option<u64> {
    m.head().and_then(SExpr::as_atom).and_then(Nat::as_u64)
}

fn kv_step(sigma: &SExpr, _caller: &Nat, m: &SExpr) -> SExpr {
    match (tag_of(m), m.tail()) {
        (Some(tags::KV_PUT), Some(kv)) => SExpr::pair(kv.clone(), sigma.clone()),
        _ => sigma.clone(),
    }
}

fn kv_use(sigma: &SExpr, m: &SExpr) -> SExpr {
    if tag_of(m) != Some(tags::KV_GET) {
        return SExpr::ZERO;
    }
    let key = m.tail().expect("tagged messages are pairs");
    let mut cursor = sigma;
    while let Some((entry, rest)) = cursor.as_pair() {
        if let Some((k, v)) = entry.as_pair() {
            if k == key {
                return v.clone();
            }
        }
        cursor = rest;
    }
    SExpr::ZERO
}

/// Looks `key` up in an association chain, newest binding first. Message:
/// `[key, chain]`; answers 0 when absent.
fn lookup_code() -> SExpr {
    // FOUND / NEXT receive [lookup, [key, [[k, v], rest]]]
    let mut found = Asm::new();
    let inner = found.tail(Asm::MESSAGE);
    let chain = found.tail(inner);
    let entry = found.head(chain);
    let v = found.tail(entry);
    let found = found.ret(v);

    let mut next = Asm::new();
    let lookup = next.head(Asm::MESSAGE);
    let inner = next.tail(Asm::MESSAGE);
    let key = next.head(inner);
    let chain = next.tail(inner);
    let rest = next.tail(chain);
    let msg = next.pair(key, rest);
    let r = next.send(lookup, msg);
    let next = next.ret(r);

    let mut check = Asm::new();
    let inner = check.tail(Asm::MESSAGE);
    let key = check.head(inner);
    let chain = check.tail(inner);
    let entry = check.head(chain);
    let k = check.head(entry);
    let t = check.equal(k, key);
    check.if_else(t, found, next, Asm::MESSAGE);
    let check = check.halt();

    let mut a = Asm::new();
    let chain = a.tail(Asm::MESSAGE);
    let arg = a.pair(Asm::PROGRAM, Asm::MESSAGE);
    a.if_else(chain, const_code(0), check, arg);
    a.halt()
}

/// A key-value store: `[PUT,[k,v]]` binds, `[GET,k]` answers the newest
/// binding or 0. Every other message answers 0.
pub fn kv_spec() -> FoldSpec {
    let mut put = Asm::new();
    let sigma = put.head(Asm::MESSAGE);
    let entry = put.tail(Asm::MESSAGE);
    let m = put.tail(entry);
    let kv = put.tail(m);
    let r = put.pair(kv, sigma);
    let put = put.ret(r);

    let mut keep = Asm::new();
    let sigma = keep.head(Asm::MESSAGE);
    let keep = keep.ret(sigma);

    let mut step = Asm::new();
    let entry = step.tail(Asm::MESSAGE);
    let m = step.tail(entry);
    let tag = step.send(safe_head_code(), m);
    let t = step.equal(tag, tags::KV_PUT);
    step.if_else(t, put, keep, Asm::MESSAGE);
    let step = step.halt();

    let mut get = Asm::new();
    let sigma = get.head(Asm::MESSAGE);
    let m = get.tail(Asm::MESSAGE);
    let key = get.tail(m);
    let q = get.pair(key, sigma);
    let r = get.send(lookup_code(), q);
    let get = get.ret(r);

    let mut use_ = Asm::new();
    let m = use_.tail(Asm::MESSAGE);
    let tag = use_.send(safe_head_code(), m);
    let t = use_.equal(tag, tags::KV_GET);
    use_.if_else(t, get, const_code(0), Asm::MESSAGE);
    let use_ = use_.halt();

    FoldSpec {
        name: "kv",
        sigma0: SExpr::ZERO,
        step,
        use_,
        host_step: kv_step,
        host_use: kv_use,
    }
}

/// Host evaluation of `P`'s response to `m` after `history` (callers and
/// messages received so far, oldest first).
pub fn host_response(spec: &FoldSpec, history: &[(Nat, SExpr)], m: &SExpr) -> SExpr {
    let sigma = history
        .iter()
        .fold(spec.sigma0.clone(), |s, (c, msg)| (spec.host_step)(&s, c, msg));
    (spec.host_use)(&sigma, m)
}

/// The log `P'` would have after answering `messages` (all from `caller`):
/// birth, then per call a checkpoint followed by the message itself.
pub fn synthetic_checkpoint_log(
    spec: &FoldSpec,
    object: &Nat,
    creator: &Nat,
    caller: &Nat,
    messages: &[SExpr],
) -> Vec<(Nat, SExpr)> {
    let program = checkpoint_transform(spec);
    let mut log = Vec::with_capacity(1 + 2 * messages.len());
    log.push((creator.clone(), program));
    let mut sigma = spec.sigma0.clone();
    let mut previous: Option<&SExpr> = None;
    for m in messages {
        if let Some(p) = previous {
            sigma = (spec.host_step)(&sigma, caller, p);
        }
        log.push((
            object.clone(),
            SExpr::pair(SExpr::atom(tags::CHECKPOINT), sigma.clone()),
        ));
        log.push((caller.clone(), m.clone()));
        previous = Some(m);
    }
    log
}
