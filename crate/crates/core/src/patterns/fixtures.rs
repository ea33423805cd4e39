//! Executable scenarios with expected traces.
//!
//! Every fixture is a list of plain transactions submitted through the
//! public API to a fresh kernel with the sequential allocator, so identities
//! are predictable and programs can name them as literals. Message shapes are
//! fixture conventions: nullary messages are `[TAG,0]`, unary ones
//! `[TAG,x]`, binary ones `[TAG,[x,y]]`.
//!
//! A *proxy* (see [`proxy_program`]) stands in for an external principal: it
//! forwards `[target, message]` so the target sees the proxy's identity as
//! its caller.

use std::fmt;

use crate::patterns::asm::{fail_code, fold, greater_code, pass_code, safe_head_code, Asm};
use crate::patterns::tags;
use crate::sexpr::{Nat, SExpr};
use crate::state::TxResult;
use crate::sx;
use crate::txn::{KernelConfig, SystemState, Transaction};

/// A transaction that creates one object per program, in order, and returns
/// the last identity.
pub fn create_tx(programs: &[SExpr]) -> Transaction {
    let mut a = Asm::new();
    for p in programs {
        a.send(0, p);
    }
    Transaction::new(a.halt(), SExpr::ZERO)
}

/// A transaction that sends its input to `target` and returns the reply.
pub fn send_tx(target: impl Into<SExpr>, message: SExpr) -> Transaction {
    let mut a = Asm::new();
    a.send(target.into(), Asm::MESSAGE);
    Transaction::new(a.halt(), message)
}

/// A transaction that makes `proxy` forward `message` to `target`.
pub fn via_tx(proxy: u64, target: u64, message: SExpr) -> Transaction {
    send_tx(proxy, SExpr::pair(SExpr::atom(target), message))
}

/// Forwards `[target, message]` and returns the target's reply.
pub fn proxy_program() -> SExpr {
    let mut a = Asm::new();
    let target = a.head(Asm::MESSAGE);
    let msg = a.tail(Asm::MESSAGE);
    let r = a.send(target, msg);
    a.ret(r)
}

/// Returns `[caller, message]`.
pub fn echo_caller_program() -> SExpr {
    let mut a = Asm::new();
    let r = a.pair(Asm::CALLER, Asm::MESSAGE);
    a.ret(r)
}

/// Sends the message to `target` and returns the reply.
pub fn forward_program(target: u64) -> SExpr {
    let mut a = Asm::new();
    let r = a.send(target, Asm::MESSAGE);
    a.ret(r)
}

/// Sends the message to the (ephemeral) code `delegate` and returns the reply.
pub fn delegate_program(delegate: SExpr) -> SExpr {
    let mut a = Asm::new();
    let r = a.send(delegate, Asm::MESSAGE);
    a.ret(r)
}

/// What a fixture row must produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    Value(SExpr),
    Abort,
    /// Any committed value.
    Commit,
}

impl Expect {
    pub fn matches(&self, r: &TxResult) -> bool {
        match (self, r) {
            (Expect::Value(v), TxResult::Value(x)) => v == x,
            (Expect::Abort, TxResult::Abort) => true,
            (Expect::Commit, TxResult::Value(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expect::Value(v) => write!(f, "{v}"),
            Expect::Abort => f.write_str("ABORT"),
            Expect::Commit => f.write_str("(commit)"),
        }
    }
}

/// One submitted transaction of a fixture.
#[derive(Debug, Clone)]
pub struct Row {
    pub action: String,
    pub tx: Transaction,
    pub expect: Expect,
}

type CheckFn = Box<dyn Fn(&SystemState) -> Result<(), String> + Send + Sync>;

/// A property of the final state.
pub struct Check {
    pub what: String,
    verify: CheckFn,
}

impl fmt::Debug for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Check").field("what", &self.what).finish()
    }
}

/// A named scenario.
#[derive(Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

/// Outcome of one row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowReport {
    pub seq: usize,
    pub action: String,
    pub result: TxResult,
    pub expected: Expect,
    pub ok: bool,
}

/// Outcome of running a fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureReport {
    pub name: String,
    pub rows: Vec<RowReport>,
    pub checks: Vec<(String, Result<(), String>)>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.ok) && self.checks.iter().all(|(_, r)| r.is_ok())
    }

    /// Human table: one row per transaction, then one line per check.
    pub fn table(&self) -> String {
        let aw = self.rows.iter().map(|r| r.action.len()).max().unwrap_or(6).max(6);
        let rw = self
            .rows
            .iter()
            .map(|r| r.result.to_text().len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = format!("fixture {}\n", self.name);
        out += &format!("{:>3}  {:aw$}  {:rw$}  {}\n", "Tx", "Action", "Result", "Check");
        for r in &self.rows {
            let status = if r.ok {
                "ok".to_owned()
            } else {
                format!("MISMATCH (expected {})", r.expected)
            };
            out += &format!(
                "{:>3}  {:aw$}  {:rw$}  {}\n",
                r.seq,
                r.action,
                r.result.to_text(),
                status
            );
        }
        for (what, res) in &self.checks {
            match res {
                Ok(()) => out += &format!("check {what}: ok\n"),
                Err(e) => out += &format!("check {what}: FAILED: {e}\n"),
            }
        }
        out
    }

    /// Machine lines: `seq result` per transaction.
    pub fn lines(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("{} {}\n", r.seq, r.result.to_text()))
            .collect()
    }
}

impl Fixture {
    fn new(name: &'static str) -> Fixture {
        Fixture {
            name,
            rows: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn row(&mut self, action: impl Into<String>, tx: Transaction, expect: Expect) {
        self.rows.push(Row {
            action: action.into(),
            tx,
            expect,
        });
    }

    fn check(
        &mut self,
        what: impl Into<String>,
        verify: impl Fn(&SystemState) -> Result<(), String> + Send + Sync + 'static,
    ) {
        self.checks.push(Check {
            what: what.into(),
            verify: Box::new(verify),
        });
    }

    pub fn config(&self) -> KernelConfig {
        KernelConfig::sequential()
    }

    pub fn transactions(&self) -> Vec<Transaction> {
        self.rows.iter().map(|r| r.tx.clone()).collect()
    }

    /// Submits every row in order to a fresh system.
    pub fn execute(&self) -> SystemState {
        let mut sys = SystemState::new();
        let cfg = self.config();
        for r in &self.rows {
            sys.submit(&r.tx, &cfg);
        }
        sys
    }

    /// Compares a final state (however it was produced) with the expected
    /// trace and checks.
    pub fn evaluate(&self, sys: &SystemState) -> FixtureReport {
        let mut rows = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let result = sys.t.get(i).map(|r| r.result.clone()).unwrap_or(TxResult::Abort);
            let tx_ok = sys.t.get(i).map(|r| r.tx == row.tx.to_sexpr()).unwrap_or(false);
            rows.push(RowReport {
                seq: i + 1,
                action: row.action.clone(),
                ok: tx_ok && row.expect.matches(&result),
                result,
                expected: row.expect.clone(),
            });
        }
        let mut checks: Vec<(String, Result<(), String>)> = Vec::new();
        checks.push((
            "one record per submission".to_owned(),
            if sys.t.len() == self.rows.len() {
                Ok(())
            } else {
                Err(format!("{} records for {} rows", sys.t.len(), self.rows.len()))
            },
        ));
        checks.push(("identities below tag range".to_owned(), below_tags(sys)));
        for c in &self.checks {
            checks.push((c.what.clone(), (c.verify)(sys)));
        }
        FixtureReport {
            name: self.name.to_owned(),
            rows,
            checks,
        }
    }

    pub fn run(&self) -> FixtureReport {
        self.evaluate(&self.execute())
    }
}

fn below_tags(sys: &SystemState) -> Result<(), String> {
    match sys.k.objects().into_iter().find(|n| n.as_u64().is_none_or(|v| v >= tags::FLOOR)) {
        Some(n) => Err(format!("identity {n} collides with the tag range")),
        None => Ok(()),
    }
}

/// Callers of `object`'s log entries, oldest first.
pub fn log_callers(sys: &SystemState, object: u64) -> Vec<u64> {
    sys.k
        .log_of(&Nat::small(object))
        .iter()
        .map(|(c, _)| c.as_u64().unwrap_or(u64::MAX))
        .collect()
}

fn expect_eq<T: PartialEq + fmt::Debug>(got: T, want: T) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("got {got:?}, expected {want:?}"))
    }
}

fn a(n: u64) -> SExpr {
    SExpr::atom(n)
}

/// All fixture names accepted by [`by_name`].
pub const NAMES: [&str; 5] = ["delegation", "auction", "auction-withdrawal", "escrow", "clone-bootloader"];

pub fn by_name(name: &str) -> Option<Fixture> {
    match name {
        "delegation" => Some(delegation()),
        "auction" => Some(auction()),
        "auction-withdrawal" => Some(auction_withdrawal()),
        "escrow" => Some(escrow()),
        "clone-bootloader" => Some(clone_and_bootloader()),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Delegation: ephemeral delegates keep the delegator's identity, persistent
// delegates substitute their own.

/// `A(14)`, `B(15)`, `A'(16)`, `C(17)`, `A''(18)`.
pub fn delegation() -> Fixture {
    let b = echo_caller_program();
    // P: ephemeral delegate that sends the message on to B.
    let p = forward_program(15);
    // P': ephemeral delegate that wraps the message as [42, msg] first.
    let mut wrap = Asm::new();
    let w = wrap.pair(42, Asm::MESSAGE);
    let r = wrap.send(15, w);
    let p_prime = wrap.ret(r);

    let mut f = Fixture::new("delegation");
    f.row(
        "Create A(14), B(15)",
        create_tx(&[delegate_program(p), b]),
        Expect::Value(a(15)),
    );
    f.row(
        "Send 100 to A -> P -> B",
        send_tx(14, a(100)),
        Expect::Value(sx!(14, 100)),
    );
    f.row(
        "Create A'(16)",
        create_tx(&[delegate_program(p_prime)]),
        Expect::Value(a(16)),
    );
    f.row(
        "Send 200 to A' -> P' -> B",
        send_tx(16, a(200)),
        Expect::Value(sx!(16, 42, 200)),
    );
    f.row(
        "Create C(17), A''(18)",
        create_tx(&[forward_program(15), forward_program(17)]),
        Expect::Value(a(18)),
    );
    f.row(
        "Send 300 to A'' -> C -> B",
        send_tx(18, a(300)),
        Expect::Value(sx!(17, 300)),
    );
    f.check("B sees callers 14, 16, 17 after its birth record", |sys| {
        expect_eq(log_callers(sys, 15), vec![1, 14, 16, 17])
    });
    f
}

// ---------------------------------------------------------------------------
// Sealed-bid auction.

/// The canonical bid-object program.
///
/// - `[INIT, β]` is accepted once, straight after birth, from the creator;
/// - `[STORE, bid]` is accepted once, from the β bound by INIT;
/// - `[REVEAL, 0]` is accepted from the creator and answers the bid, or
///   FAILs when no bid was stored;
/// - anything else FAILs.
///
/// The creator is the caller of the birth record; β is read back from the
/// INIT entry. All state is derived from the object's own log.
pub fn bid_program() -> SExpr {
    let mut init = Asm::new();
    let birth = init.head(Asm::LOG);
    let creator = init.head(birth);
    init.assert_equal(Asm::CALLER, creator);
    let rest = init.tail(Asm::LOG);
    init.assert_atom(rest);
    let init = init.ret(0);

    let mut store = Asm::new();
    let rest = store.tail(Asm::LOG);
    let init_entry = store.head(rest);
    let init_msg = store.tail(init_entry);
    let beta = store.tail(init_msg);
    store.assert_equal(Asm::CALLER, beta);
    let after_init = store.tail(rest);
    store.assert_atom(after_init);
    let store = store.ret(0);

    let mut read_bid = Asm::new();
    let entry = read_bid.head(Asm::MESSAGE);
    let m = read_bid.tail(entry);
    let bid = read_bid.tail(m);
    let read_bid = read_bid.ret(bid);

    let mut reveal = Asm::new();
    let birth = reveal.head(Asm::LOG);
    let creator = reveal.head(birth);
    reveal.assert_equal(Asm::CALLER, creator);
    let rest = reveal.tail(Asm::LOG);
    let after_init = reveal.tail(rest);
    let r = reveal.if_else(after_init, fail_code(), read_bid, after_init);
    let reveal = reveal.ret(r);

    let mut a = Asm::new();
    let tag = a.send(safe_head_code(), Asm::MESSAGE);
    a.switch(
        tag,
        vec![
            (SExpr::atom(tags::INIT), init),
            (SExpr::atom(tags::STORE), store),
            (SExpr::atom(tags::REVEAL), reveal),
        ],
        fail_code(),
        Asm::MESSAGE,
    );
    a.halt()
}

/// Fold step for REVEAL_ALL over `[[best_bidder, best_bid], [caller, msg]]`.
fn reveal_scan_code() -> SExpr {
    let mut keep = Asm::new();
    let acc = keep.head(Asm::MESSAGE);
    let keep = keep.ret(acc);

    let mut reveal_one = Asm::new();
    let acc = reveal_one.head(Asm::MESSAGE);
    let entry = reveal_one.tail(Asm::MESSAGE);
    let m = reveal_one.tail(entry);
    let binding = reveal_one.tail(m);
    let beta = reveal_one.head(binding);
    let bid_object = reveal_one.tail(binding);
    let bid = reveal_one.send(bid_object, sx!(tags::REVEAL, 0));
    let best = reveal_one.tail(acc);
    let cmp = reveal_one.pair(bid, best);
    let gt = reveal_one.send(greater_code(), cmp);
    let candidate = reveal_one.pair(beta, bid);
    let r = reveal_one.select(gt, candidate, acc);
    let reveal_one = reveal_one.ret(r);

    let mut from_self = Asm::new();
    let entry = from_self.tail(Asm::MESSAGE);
    let m = from_self.tail(entry);
    let tag = from_self.send(safe_head_code(), m);
    let t = from_self.equal(tag, tags::TRACK);
    from_self.if_else(t, reveal_one, keep.clone(), Asm::MESSAGE);
    let from_self = from_self.halt();

    let mut a = Asm::new();
    let entry = a.tail(Asm::MESSAGE);
    let caller = a.head(entry);
    let t = a.equal(caller, Asm::SELF);
    a.if_else(t, from_self, keep, Asm::MESSAGE);
    a.halt()
}

/// The auctioneer program.
///
/// - `[REGISTER, 0]` from β: create a bid object, send it `[INIT, β]`,
///   self-send `[TRACK, [β, B]]`, answer B;
/// - `[TRACK, _]` is accepted only from the auctioneer itself;
/// - `[REVEAL_ALL, 0]`: walk the own log for self-sent TRACK entries, REVEAL
///   each bid object and answer the bidder with the highest bid (the earlier
///   bidder wins ties; 0 when nobody registered).
pub fn auctioneer_program() -> SExpr {
    let mut register = Asm::new();
    let beta = register.load(Asm::CALLER);
    let b = register.send(0, bid_program());
    let init = register.pair(tags::INIT, beta);
    register.send(b, init);
    let binding = register.pair(beta, b);
    let track = register.pair(tags::TRACK, binding);
    register.send(Asm::SELF, track);
    let register = register.ret(b);

    let mut track = Asm::new();
    track.assert_equal(Asm::CALLER, Asm::SELF);
    let track = track.ret(0);

    let mut reveal_all = Asm::new();
    let entries = reveal_all.tail(Asm::LOG);
    let best = fold(&mut reveal_all, reveal_scan_code(), sx!(0, 0), entries);
    let winner = reveal_all.head(best);
    let reveal_all = reveal_all.ret(winner);

    let mut a = Asm::new();
    let tag = a.send(safe_head_code(), Asm::MESSAGE);
    a.switch(
        tag,
        vec![
            (SExpr::atom(tags::REGISTER), register),
            (SExpr::atom(tags::TRACK), track),
            (SExpr::atom(tags::REVEAL_ALL), reveal_all),
        ],
        fail_code(),
        Asm::MESSAGE,
    );
    a.halt()
}

/// Entry `index` of `object`'s log as `[caller, message]`.
pub fn log_entry(sys: &SystemState, object: u64, index: usize) -> Option<SExpr> {
    sys.k
        .log_of(&Nat::small(object))
        .get(index)
        .map(|(c, m)| SExpr::pair(SExpr::nat(c.clone()), m.clone()))
}

/// Auctioneer A(14), proxies β1(15), β2(16); bid objects B1(17), B2(18).
pub fn auction() -> Fixture {
    let mut f = Fixture::new("auction");
    f.row(
        "Setup: create A(14), b1(15), b2(16)",
        create_tx(&[auctioneer_program(), proxy_program(), proxy_program()]),
        Expect::Value(a(16)),
    );
    f.row(
        "b1 sends [REGISTER] to A",
        via_tx(15, 14, sx!(tags::REGISTER, 0)),
        Expect::Value(a(17)),
    );
    f.row(
        "b1 sends [STORE,100] to B1",
        via_tx(15, 17, sx!(tags::STORE, 100)),
        Expect::Value(a(0)),
    );
    f.row(
        "b2 sends [REGISTER] to A",
        via_tx(16, 14, sx!(tags::REGISTER, 0)),
        Expect::Value(a(18)),
    );
    f.row(
        "b2 sends [STORE,150] to B2",
        via_tx(16, 18, sx!(tags::STORE, 150)),
        Expect::Value(a(0)),
    );
    f.row(
        "REVEAL_ALL to A",
        send_tx(14, sx!(tags::REVEAL_ALL, 0)),
        Expect::Value(a(16)),
    );
    f.row(
        "b2 sends [STORE,999] to B1 (forged storer)",
        via_tx(16, 17, sx!(tags::STORE, 999)),
        Expect::Abort,
    );
    f.row(
        "b1 sends [REVEAL] to B2 (not the auctioneer)",
        via_tx(15, 18, sx!(tags::REVEAL, 0)),
        Expect::Abort,
    );
    f.row(
        "b1 sends [STORE,50] to B1 again",
        via_tx(15, 17, sx!(tags::STORE, 50)),
        Expect::Abort,
    );
    f.row(
        "b1 sends [TRACK,[15,17]] to A (forged binding)",
        via_tx(15, 14, sx!(tags::TRACK, 15, 17)),
        Expect::Abort,
    );
    f.check("B1 log: birth by A, INIT b1, [b1,[STORE,100]]", |sys| {
        expect_eq(log_callers(sys, 17)[..3].to_vec(), vec![14, 14, 15])?;
        expect_eq(log_entry(sys, 17, 1), Some(sx!(14, tags::INIT, 15)))?;
        expect_eq(log_entry(sys, 17, 2), Some(sx!(15, tags::STORE, 100)))
    });
    f.check("B2 log: [b2,[STORE,150]]", |sys| {
        expect_eq(log_entry(sys, 18, 2), Some(sx!(16, tags::STORE, 150)))
    });
    f.check("no bid object holds an entry from a foreign storer", |sys| {
        let stores = |obj| {
            sys.k
                .log_of(&Nat::small(obj))
                .iter()
                .filter(|(_, m)| m.head().is_some_and(|h| h.is_atom_value(tags::STORE)))
                .map(|(c, _)| c.as_u64().unwrap_or(0))
                .collect::<Vec<_>>()
        };
        expect_eq((stores(17), stores(18)), (vec![15], vec![16]))
    });
    f
}

/// As [`auction`], plus a third bidder who registers but never bids: the
/// REVEAL_ALL transaction aborts and no log changes.
pub fn auction_withdrawal() -> Fixture {
    let mut f = Fixture::new("auction-withdrawal");
    f.row(
        "Setup: create A(14), b1(15), b2(16), b3(17)",
        create_tx(&[
            auctioneer_program(),
            proxy_program(),
            proxy_program(),
            proxy_program(),
        ]),
        Expect::Value(a(17)),
    );
    f.row("b1 registers", via_tx(15, 14, sx!(tags::REGISTER, 0)), Expect::Value(a(18)));
    f.row("b1 bids 100", via_tx(15, 18, sx!(tags::STORE, 100)), Expect::Value(a(0)));
    f.row("b2 registers", via_tx(16, 14, sx!(tags::REGISTER, 0)), Expect::Value(a(19)));
    f.row("b2 bids 150", via_tx(16, 19, sx!(tags::STORE, 150)), Expect::Value(a(0)));
    f.row("b3 registers", via_tx(17, 14, sx!(tags::REGISTER, 0)), Expect::Value(a(20)));
    f.row(
        "REVEAL_ALL to A (B3 has no bid)",
        send_tx(14, sx!(tags::REVEAL_ALL, 0)),
        Expect::Abort,
    );
    f.check("the aborted reveal left every log unchanged", |sys| {
        // Replaying the committed prefix must give the same K.
        let mut prefix = SystemState::new();
        let cfg = KernelConfig::sequential();
        for r in &sys.t[..sys.t.len() - 1] {
            let tx = Transaction::from_sexpr(&r.tx).ok_or("atom transaction")?;
            prefix.submit(&tx, &cfg);
        }
        expect_eq(prefix.k.len(), sys.k.len())
    });
    f.check("exactly one abort recorded", |sys| {
        expect_eq(sys.t.iter().filter(|r| r.result.is_abort()).count(), 1)
    });
    f
}

// ---------------------------------------------------------------------------
// Escrow: the phase is the length of the escrow's own log.

/// Phase 0 accepts only `buyer`, phase 1 only `seller`; from phase 2 on every
/// message answers COMPLETE.
pub fn escrow_program(buyer: u64, seller: u64) -> SExpr {
    let mut phase0 = Asm::new();
    phase0.assert_equal(Asm::CALLER, buyer);
    let phase0 = phase0.ret(0);

    let mut phase1 = Asm::new();
    phase1.assert_equal(Asm::CALLER, seller);
    let phase1 = phase1.ret(0);

    let mut later = Asm::new();
    let rest = later.tail(Asm::LOG);
    let rest2 = later.tail(rest);
    let complete = later.select(rest2, phase1, crate::patterns::asm::const_code(tags::COMPLETE));
    let r = later.send(complete, Asm::MESSAGE);
    let later = later.ret(r);

    let mut a = Asm::new();
    let rest = a.tail(Asm::LOG);
    a.if_else(rest, phase0, later, Asm::MESSAGE);
    a.halt()
}

/// Buyer proxy 14, seller proxy 15, escrow 16.
pub fn escrow() -> Fixture {
    let mut f = Fixture::new("escrow");
    f.row(
        "Setup: create buyer(14), seller(15), escrow(16)",
        create_tx(&[proxy_program(), proxy_program(), escrow_program(14, 15)]),
        Expect::Value(a(16)),
    );
    f.row(
        "seller deposits in phase 0",
        via_tx(15, 16, sx!(tags::DEPOSIT, 500)),
        Expect::Abort,
    );
    f.row(
        "buyer deposits in phase 0",
        via_tx(14, 16, sx!(tags::DEPOSIT, 500)),
        Expect::Value(a(0)),
    );
    f.row(
        "buyer deposits again in phase 1",
        via_tx(14, 16, sx!(tags::DEPOSIT, 500)),
        Expect::Abort,
    );
    f.row(
        "seller confirms in phase 1",
        via_tx(15, 16, sx!(tags::CONFIRM, 0)),
        Expect::Value(a(0)),
    );
    f.row(
        "query in phase 2",
        send_tx(16, sx!(tags::QUERY, 0)),
        Expect::Value(a(tags::COMPLETE)),
    );
    f.check("escrow log callers: birth, buyer, seller, query", |sys| {
        expect_eq(log_callers(sys, 16), vec![1, 14, 15, 1])
    });
    f
}

// ---------------------------------------------------------------------------
// Clone and bootloader.

/// `[SPAWN, 0]` creates a child running this very program (recall 0, send to
/// the kernel) and answers its identity; anything else is echoed back.
pub fn clone_program() -> SExpr {
    let mut spawn = Asm::new();
    let program = spawn.head(Asm::MESSAGE);
    let child = spawn.send(0, program);
    let spawn = spawn.ret(child);

    let mut echo = Asm::new();
    let m = echo.tail(Asm::MESSAGE);
    let echo = echo.ret(m);

    let mut a = Asm::new();
    let t = a.equal(Asm::MESSAGE, sx!(tags::SPAWN, 0));
    let arg = a.pair(Asm::PROGRAM, Asm::MESSAGE);
    a.if_else(t, spawn, echo, arg);
    a.halt()
}

/// `[DEPOSIT, code]` is accepted only from the creator (the birth-record
/// caller). Any other message runs the newest deposited code ephemerally;
/// with nothing deposited it FAILs.
pub fn bootloader_program() -> SExpr {
    let mut deposit = Asm::new();
    let birth = deposit.head(Asm::LOG);
    let creator = deposit.head(birth);
    deposit.assert_equal(Asm::CALLER, creator);
    let deposit = deposit.ret(0);

    // fold step over [code, [caller, msg]]: newest DEPOSIT wins
    let mut take = Asm::new();
    let entry = take.tail(Asm::MESSAGE);
    let m = take.tail(entry);
    let code = take.tail(m);
    let take = take.ret(code);

    let mut keep = Asm::new();
    let acc = keep.head(Asm::MESSAGE);
    let keep = keep.ret(acc);

    let mut pick = Asm::new();
    let entry = pick.tail(Asm::MESSAGE);
    let m = pick.tail(entry);
    let tag = pick.send(safe_head_code(), m);
    let t = pick.equal(tag, tags::DEPOSIT);
    pick.if_else(t, take, keep, Asm::MESSAGE);
    let pick = pick.halt();

    let mut dispatch = Asm::new();
    let entries = dispatch.tail(Asm::LOG);
    let code = fold(&mut dispatch, pick, fail_code(), entries);
    let r = dispatch.send(code, Asm::MESSAGE);
    let dispatch = dispatch.ret(r);

    let mut a = Asm::new();
    let tag = a.send(safe_head_code(), Asm::MESSAGE);
    let t = a.equal(tag, tags::DEPOSIT);
    a.if_else(t, deposit, dispatch, Asm::MESSAGE);
    a.halt()
}

/// Returns its message incremented.
pub fn increment_code() -> SExpr {
    let mut a = Asm::new();
    let r = a.inc(Asm::MESSAGE);
    a.ret(r)
}

/// Clone parent 14 and child 15; bootloader 16 and a stranger proxy 17.
pub fn clone_and_bootloader() -> Fixture {
    let mut f = Fixture::new("clone-bootloader");
    f.row("Create clone parent(14)", create_tx(&[clone_program()]), Expect::Value(a(14)));
    f.row("Send [SPAWN] to 14", send_tx(14, sx!(tags::SPAWN, 0)), Expect::Value(a(15)));
    f.row("Send 77 to parent 14", send_tx(14, a(77)), Expect::Value(a(77)));
    f.row("Send 77 to child 15", send_tx(15, a(77)), Expect::Value(a(77)));
    f.row(
        "Create bootloader(16), stranger(17)",
        create_tx(&[bootloader_program(), proxy_program()]),
        Expect::Value(a(17)),
    );
    f.row("Send 5 before any deposit", send_tx(16, a(5)), Expect::Abort);
    f.row(
        "Deposit echo code",
        send_tx(16, SExpr::pair(a(tags::DEPOSIT), pass_code())),
        Expect::Value(a(0)),
    );
    f.row("Send 5", send_tx(16, a(5)), Expect::Value(a(5)));
    f.row(
        "Deposit increment code",
        send_tx(16, SExpr::pair(a(tags::DEPOSIT), increment_code())),
        Expect::Value(a(0)),
    );
    f.row("Send 5", send_tx(16, a(5)), Expect::Value(a(6)));
    f.row(
        "Stranger deposits failing code",
        via_tx(17, 16, SExpr::pair(a(tags::DEPOSIT), fail_code())),
        Expect::Abort,
    );
    f.row("Send 5", send_tx(16, a(5)), Expect::Value(a(6)));
    f.check("child runs the parent's program", |sys| {
        expect_eq(sys.k.program_of(&Nat::small(15)), sys.k.program_of(&Nat::small(14)))
    });
    f.check("child was created by the parent", |sys| {
        expect_eq(log_callers(sys, 15)[0], 14)
    });
    f
}
