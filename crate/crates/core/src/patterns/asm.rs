//! A small assembler that emits programs for the five-instruction interpreter.
//!
//! The assembler tracks the context depth statically, so every intermediate
//! value is addressed by the [`Slot`] it was pushed to. Control flow is built
//! from the BRANCH built-in: [`Asm::select`] picks one of two values, and
//! [`Asm::if_else`] picks one of two code blocks and sends it a message,
//! running it ephemerally in the current object's context.

use crate::dispatch::atoms;
use crate::sexpr::SExpr;

/// A context position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot(pub usize);

/// An operand: either an earlier context position or a literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Val {
    Slot(Slot),
    Lit(SExpr),
}

impl From<Slot> for Val {
    fn from(s: Slot) -> Val {
        Val::Slot(s)
    }
}

impl From<u64> for Val {
    fn from(n: u64) -> Val {
        Val::Lit(SExpr::atom(n))
    }
}

impl From<SExpr> for Val {
    fn from(d: SExpr) -> Val {
        Val::Lit(d)
    }
}

impl From<&SExpr> for Val {
    fn from(d: &SExpr) -> Val {
        Val::Lit(d.clone())
    }
}

#[derive(Debug, Clone)]
enum Op {
    Push(SExpr),
    Quote(SExpr),
    Recall(usize),
    Send,
}

/// Returns its message unchanged.
pub fn pass_code() -> SExpr {
    crate::sx!(atoms::RECALL, 1, 0)
}

/// Aborts with FAIL when run.
pub fn fail_code() -> SExpr {
    crate::sx!(0, atoms::FAIL)
}

/// Returns a constant when run.
pub fn const_code(v: impl Into<SExpr>) -> SExpr {
    let mut a = Asm::new();
    a.push(v.into());
    a.halt()
}

/// Instruction-sequence builder. Starts at depth 5 (the seeded context).
#[derive(Debug, Clone)]
pub struct Asm {
    ops: Vec<Op>,
    depth: usize,
}

impl Default for Asm {
    fn default() -> Asm {
        Asm::new()
    }
}

impl Asm {
    pub const PROGRAM: Slot = Slot(0);
    pub const MESSAGE: Slot = Slot(1);
    pub const SELF: Slot = Slot(2);
    pub const LOG: Slot = Slot(3);
    pub const CALLER: Slot = Slot(4);

    pub fn new() -> Asm {
        Asm {
            ops: Vec::new(),
            depth: 5,
        }
    }

    /// Current context length.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn top(&self) -> Slot {
        Slot(self.depth - 1)
    }

    fn grow(&mut self, op: Op) -> Slot {
        self.ops.push(op);
        self.depth += 1;
        self.top()
    }

    /// Pushes `d`, quoting it when it would otherwise read as an instruction.
    pub fn push(&mut self, d: impl Into<SExpr>) -> Slot {
        let d = d.into();
        let needs_quote = matches!(
            d.as_atom().and_then(|n| n.as_u64()),
            Some(atoms::SEND | atoms::RECALL | atoms::QUOTE)
        );
        if needs_quote {
            self.quote(d)
        } else {
            self.grow(Op::Push(d))
        }
    }

    pub fn quote(&mut self, d: impl Into<SExpr>) -> Slot {
        self.grow(Op::Quote(d.into()))
    }

    pub fn recall(&mut self, s: Slot) -> Slot {
        assert!(s.0 < self.depth, "recall of slot {} at depth {}", s.0, self.depth);
        self.grow(Op::Recall(s.0))
    }

    /// Puts `v` on top of the context.
    pub fn load(&mut self, v: impl Into<Val>) -> Slot {
        match v.into() {
            Val::Slot(s) => self.recall(s),
            Val::Lit(d) => self.push(d),
        }
    }

    /// Sends the second-from-top to the top.
    pub fn send_top(&mut self) -> Slot {
        assert!(self.depth >= 2);
        self.grow(Op::Send)
    }

    /// Sends `msg` to `target` and yields the reply's slot.
    pub fn send(&mut self, target: impl Into<Val>, msg: impl Into<Val>) -> Slot {
        self.load(msg);
        self.load(target);
        self.send_top()
    }

    pub fn head(&mut self, x: impl Into<Val>) -> Slot {
        self.send(atoms::HEAD, x)
    }

    pub fn tail(&mut self, x: impl Into<Val>) -> Slot {
        self.send(atoms::TAIL, x)
    }

    pub fn inc(&mut self, x: impl Into<Val>) -> Slot {
        self.send(atoms::INCREMENT, x)
    }

    /// `[h, t]` via the PAIR closure.
    pub fn pair(&mut self, h: impl Into<Val>, t: impl Into<Val>) -> Slot {
        let closure = self.send(atoms::PAIR, h);
        self.send(closure, t)
    }

    /// `[a,[b,[c,…,0]]]`.
    pub fn list(&mut self, items: Vec<Val>) -> Slot {
        let mut acc = Val::Lit(SExpr::ZERO);
        for item in items.into_iter().rev() {
            acc = Val::Slot(self.pair(item, acc));
        }
        self.load(acc)
    }

    /// Atom 0 when equal, the pair `[a,b]` otherwise.
    pub fn equal(&mut self, a: impl Into<Val>, b: impl Into<Val>) -> Slot {
        let p = self.pair(a, b);
        self.send(atoms::EQUAL, p)
    }

    /// `x` when `t` is an atom, `y` when it is a pair.
    pub fn select(&mut self, t: impl Into<Val>, x: impl Into<Val>, y: impl Into<Val>) -> Slot {
        let l = self.list(vec![t.into(), x.into(), y.into()]);
        self.send(atoms::BRANCH, l)
    }

    /// Runs `then_code` when `t` is an atom and `else_code` when it is a pair,
    /// sending `arg` to the chosen block.
    pub fn if_else(
        &mut self,
        t: impl Into<Val>,
        then_code: impl Into<Val>,
        else_code: impl Into<Val>,
        arg: impl Into<Val>,
    ) -> Slot {
        let code = self.select(t, then_code, else_code);
        self.send(code, arg)
    }

    /// FAILs unless `t` is an atom.
    pub fn assert_atom(&mut self, t: impl Into<Val>) -> Slot {
        self.if_else(t, pass_code(), fail_code(), 0)
    }

    /// FAILs unless `a` equals `b`.
    pub fn assert_equal(&mut self, a: impl Into<Val>, b: impl Into<Val>) -> Slot {
        let t = self.equal(a, b);
        self.assert_atom(t)
    }

    /// Multi-way dispatch on equality of `key` with each case tag; sends
    /// `arg` to the matching block, or to `default` when none matches.
    pub fn switch(
        &mut self,
        key: impl Into<Val>,
        cases: Vec<(SExpr, SExpr)>,
        default: SExpr,
        arg: impl Into<Val>,
    ) -> Slot {
        let key = self.load(key);
        let mut chosen = Val::Lit(default);
        for (tag, code) in cases.into_iter().rev() {
            let t = self.equal(key, tag);
            chosen = Val::Slot(self.select(t, code, chosen));
        }
        self.send(chosen, arg)
    }

    fn emit(self, terminal: SExpr) -> SExpr {
        let mut program = terminal;
        for op in self.ops.into_iter().rev() {
            program = match op {
                Op::Push(d) => SExpr::pair(d, program),
                Op::Quote(d) => SExpr::pair(
                    SExpr::atom(atoms::QUOTE),
                    SExpr::pair(d, program),
                ),
                Op::Recall(j) => SExpr::pair(
                    SExpr::atom(atoms::RECALL),
                    SExpr::pair(SExpr::atom(j as u64), program),
                ),
                Op::Send => SExpr::pair(SExpr::atom(atoms::SEND), program),
            };
        }
        program
    }

    /// Terminates, returning the top of the context.
    pub fn halt(self) -> SExpr {
        self.emit(SExpr::ZERO)
    }

    /// Terminates, returning `v`.
    pub fn ret(mut self, v: impl Into<Val>) -> SExpr {
        self.load(v);
        self.halt()
    }

    /// Terminates with FAIL.
    pub fn fail(self) -> SExpr {
        self.emit(SExpr::atom(atoms::FAIL))
    }
}

/// A program that returns `head(m)` for pair messages and atom 0 for atoms.
pub fn safe_head_code() -> SExpr {
    let mut a = Asm::new();
    let mut h = Asm::new();
    let head = h.head(Asm::MESSAGE);
    let head_code = h.ret(head);
    a.if_else(Asm::MESSAGE, const_code(0), head_code, Asm::MESSAGE);
    a.halt()
}

/// Generic left fold as an ephemeral recursive program. Message:
/// `[f, [acc, list]]`; `f` receives `[acc, item]` and returns the next
/// accumulator. `list` is a pair-chain ended by any atom.
pub fn fold_code() -> SExpr {
    // DONE: message [fold, [f, [acc, list]]] -> acc
    let mut done = Asm::new();
    let inner = done.tail(Asm::MESSAGE);
    let rest = done.tail(inner);
    let acc = done.head(rest);
    let done = done.ret(acc);

    // STEP: message [fold, [f, [acc, [x, xs]]]]
    let mut step = Asm::new();
    let fold = step.head(Asm::MESSAGE);
    let inner = step.tail(Asm::MESSAGE);
    let f = step.head(inner);
    let rest = step.tail(inner);
    let acc = step.head(rest);
    let list = step.tail(rest);
    let x = step.head(list);
    let xs = step.tail(list);
    let item = step.pair(acc, x);
    let acc2 = step.send(f, item);
    let state = step.pair(acc2, xs);
    let next = step.pair(f, state);
    let r = step.send(fold, next);
    let step = step.ret(r);

    let mut a = Asm::new();
    let inner = a.tail(Asm::MESSAGE);
    let list = a.tail(inner);
    let arg = a.pair(Asm::PROGRAM, Asm::MESSAGE);
    a.if_else(list, done, step, arg);
    a.halt()
}

/// Emits `fold(f, acc, list)` inline and yields the result slot.
pub fn fold(a: &mut Asm, f: impl Into<Val>, acc: impl Into<Val>, list: impl Into<Val>) -> Slot {
    let state = a.pair(acc, list);
    let msg = a.pair(f, state);
    a.send(fold_code(), msg)
}

/// A program computing `a > b` for atoms by counting up from 0: returns
/// atom 0 when true and a pair when false. Message: `[a, b]`.
pub fn greater_code() -> SExpr {
    // LOOP message: [loop, [k, [a, b]]]
    // HIT_B (k == b): a > b iff a != b
    let mut hit_b = Asm::new();
    let inner = hit_b.tail(Asm::MESSAGE);
    let ab = hit_b.tail(inner);
    let av = hit_b.head(ab);
    let bv = hit_b.tail(ab);
    let eq = hit_b.equal(av, bv);
    // equal -> false (a pair), different -> true (atom 0)
    hit_b.if_else(eq, const_code(crate::sx!(1, 1)), const_code(0), 0);
    let hit_b = hit_b.halt();

    // CHECK_A: k != b; if k == a then false else recurse with k+1
    let mut recurse = Asm::new();
    let lp = recurse.head(Asm::MESSAGE);
    let inner = recurse.tail(Asm::MESSAGE);
    let k = recurse.head(inner);
    let ab = recurse.tail(inner);
    let k1 = recurse.inc(k);
    let state = recurse.pair(k1, ab);
    let next = recurse.pair(lp, state);
    let r = recurse.send(lp, next);
    let recurse = recurse.ret(r);

    let mut check_a = Asm::new();
    let inner = check_a.tail(Asm::MESSAGE);
    let k = check_a.head(inner);
    let ab = check_a.tail(inner);
    let av = check_a.head(ab);
    let eq = check_a.equal(k, av);
    check_a.if_else(eq, const_code(crate::sx!(1, 1)), recurse, Asm::MESSAGE);
    let check_a = check_a.halt();

    let mut lp = Asm::new();
    let inner = lp.tail(Asm::MESSAGE);
    let k = lp.head(inner);
    let ab = lp.tail(inner);
    let bv = lp.tail(ab);
    let eq = lp.equal(k, bv);
    lp.if_else(eq, hit_b, check_a, Asm::MESSAGE);
    let lp = lp.halt();

    let mut a = Asm::new();
    let state = a.pair(0, Asm::MESSAGE);
    let msg = a.pair(lp.clone(), state);
    a.send(lp, msg);
    a.halt()
}
