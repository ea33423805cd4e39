//! The five-instruction program interpreter and the send engine it drives.
//!
//! A program is an s-expression read as a linked list of instructions:
//!
//! | instruction     | action                                             |
//! |-----------------|----------------------------------------------------|
//! | `4`             | abort                                              |
//! | any other atom  | return the top of the context                      |
//! | `[2,k]`         | send `L[-2]` to `L[-1]`, push the result, run `k`  |
//! | `[3,[j,k]]`     | push `L[j]` (`j` an atom below `|L|`), run `k`     |
//! | `[5,[d,k]]`     | push `d` verbatim, run `k`                         |
//! | `[d,k]`         | push `d`, run `k`                                  |
//!
//! Nested sends never recurse on the host stack: every persistent or
//! ephemeral sub-send pushes a heap frame, so nesting depth is bounded only by
//! the step budget.

use std::fmt;

use thiserror::Error;

use crate::dispatch::{self, atoms, Allocator, Builtins, DispatchCase};
use crate::sexpr::{Nat, SExpr};
use crate::state::{encode_log, Effects, ExternalSend, KernelState, LogEntry, StateView};

/// Default number of interpreter transitions allowed per transaction.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Why a computation produced the abort result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum Abort {
    #[error("program executed FAIL")]
    Fail,
    #[error("malformed recall instruction")]
    MalformedRecall,
    #[error("malformed quote instruction")]
    MalformedQuote,
    #[error("built-in undefined on its argument")]
    BuiltinUndefined,
    #[error("send to a target matching no dispatch case")]
    InvalidTarget,
    #[error("step budget exhausted")]
    BudgetExhausted,
    #[error("context has no atom self/caller at positions 2 and 4")]
    MalformedContext,
}

/// Deterministic count of remaining interpreter transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepBudget {
    remaining: u64,
}

impl StepBudget {
    pub fn new(steps: u64) -> StepBudget {
        StepBudget { remaining: steps }
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    fn take(&mut self) -> Result<(), Abort> {
        if self.remaining == 0 {
            return Err(Abort::BudgetExhausted);
        }
        self.remaining -= 1;
        Ok(())
    }
}

/// A projection of `K ++ Δ` made by the engine.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    /// `log(n, ·)` of a persistent object.
    Log(Nat),
    /// `program(n, ·)` of a persistent object.
    Program(Nat),
    /// Registry membership test for `n`, made while classifying a target.
    Exists(Nat),
    /// Registry length, read by allocation.
    RegistryLen,
}

/// Observer hooks for instrumentation. All methods default to no-ops.
///
/// Events arrive in execution order. Projections are reported between the
/// `dispatch` event of the send that performed them and the next `dispatch`.
pub trait Probe {
    fn dispatch(&mut self, _case: DispatchCase, _target: &SExpr, _sender: &Nat, _depth: usize) {}
    fn projection(&mut self, _projection: &Projection) {}
    /// A persistent frame completed and its receiver entry was appended.
    fn appended(&mut self, _entry: &LogEntry, _depth: usize) {}
}

/// The seeded context `[program, message, self, log, caller]`.
pub fn seed_context(
    program: SExpr,
    message: SExpr,
    self_id: SExpr,
    log: SExpr,
    caller: SExpr,
) -> Vec<SExpr> {
    vec![program, message, self_id, log, caller]
}

struct Frame {
    ctx: Vec<SExpr>,
    instr: SExpr,
    /// Set for persistent frames: the entry appended when the frame returns.
    pending: Option<LogEntry>,
}

enum Dispatched {
    Value(SExpr),
    Enter(Frame),
}

/// One transaction's worth of execution over a fixed committed state.
pub struct Machine<'a> {
    k: &'a KernelState,
    effects: Effects,
    budget: StepBudget,
    steps: u64,
    allocator: &'a Allocator,
    builtins: &'a dyn Builtins,
    probe: Option<&'a mut dyn Probe>,
}

impl<'a> Machine<'a> {
    pub fn new(
        k: &'a KernelState,
        allocator: &'a Allocator,
        builtins: &'a dyn Builtins,
        budget: u64,
    ) -> Machine<'a> {
        Machine {
            k,
            effects: Effects::new(),
            budget: StepBudget::new(budget),
            steps: 0,
            allocator,
            builtins,
            probe: None,
        }
    }

    pub fn with_effects(mut self, effects: Effects) -> Machine<'a> {
        self.effects = effects;
        self
    }

    pub fn with_probe(mut self, probe: &'a mut dyn Probe) -> Machine<'a> {
        self.probe = Some(probe);
        self
    }

    pub fn effects(&self) -> &Effects {
        &self.effects
    }

    pub fn into_effects(self) -> Effects {
        self.effects
    }

    /// Interpreter transitions taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn budget(&self) -> StepBudget {
        self.budget
    }

    pub fn view(&self) -> StateView<'_> {
        StateView::with_effects(self.k, &self.effects)
    }

    /// `run(L, i)`: interprets `instr` over the context `ctx`.
    pub fn run(&mut self, ctx: Vec<SExpr>, instr: SExpr) -> Result<SExpr, Abort> {
        if ctx.len() < 5 || !ctx[2].is_atom() || !ctx[4].is_atom() {
            return Err(Abort::MalformedContext);
        }
        let mut frames = vec![Frame {
            ctx,
            instr,
            pending: None,
        }];
        self.drive(&mut frames)
    }

    /// `send(t, m, s, l, c)`: one dispatch, running the target to completion
    /// when it is persistent or ephemeral.
    pub fn send(
        &mut self,
        target: &SExpr,
        message: &SExpr,
        sender: &Nat,
        log: &SExpr,
        caller: &Nat,
    ) -> Result<SExpr, Abort> {
        match self.dispatch(target, message, sender, log, caller, 0)? {
            Dispatched::Value(v) => Ok(v),
            Dispatched::Enter(frame) => {
                let mut frames = vec![frame];
                self.drive(&mut frames)
            }
        }
    }

    fn drive(&mut self, frames: &mut Vec<Frame>) -> Result<SExpr, Abort> {
        loop {
            self.budget.take()?;
            self.steps += 1;
            let depth = frames.len();
            let frame = frames.last_mut().expect("drive with no frames");
            let (head, next) = match &frame.instr {
                SExpr::Atom(n) if n.is(atoms::FAIL) => return Err(Abort::Fail),
                SExpr::Atom(_) => {
                    let value = frame.ctx.last().cloned().expect("context never empty");
                    let done = frames.pop().expect("frame present");
                    if let Some(entry) = done.pending {
                        if let Some(p) = self.probe.as_deref_mut() {
                            p.appended(&entry, depth);
                        }
                        self.effects.push_entry(entry);
                    }
                    match frames.last_mut() {
                        Some(parent) => {
                            parent.ctx.push(value);
                            continue;
                        }
                        None => return Ok(value),
                    }
                }
                SExpr::Pair(_) => {
                    let (h, k) = frame.instr.as_pair().expect("pair");
                    (h.clone(), k.clone())
                }
            };
            match head.as_atom().and_then(Nat::as_u64) {
                Some(atoms::SEND) => {
                    let len = frame.ctx.len();
                    let target = frame.ctx[len - 1].clone();
                    let message = frame.ctx[len - 2].clone();
                    let sender = frame.ctx[2].as_atom().cloned().ok_or(Abort::MalformedContext)?;
                    let caller = frame.ctx[4].as_atom().cloned().ok_or(Abort::MalformedContext)?;
                    let log = frame.ctx[3].clone();
                    frame.instr = next;
                    match self.dispatch(&target, &message, &sender, &log, &caller, depth)? {
                        Dispatched::Value(v) => {
                            frames.last_mut().expect("frame present").ctx.push(v);
                        }
                        Dispatched::Enter(child) => frames.push(child),
                    }
                }
                Some(atoms::RECALL) => {
                    let (j, k) = next.as_pair().ok_or(Abort::MalformedRecall)?;
                    let j = j
                        .as_atom()
                        .and_then(Nat::as_u64)
                        .and_then(|j| usize::try_from(j).ok())
                        .filter(|&j| j < frame.ctx.len())
                        .ok_or(Abort::MalformedRecall)?;
                    let v = frame.ctx[j].clone();
                    let k = k.clone();
                    frame.ctx.push(v);
                    frame.instr = k;
                }
                Some(atoms::QUOTE) => {
                    let (d, k) = next.as_pair().ok_or(Abort::MalformedQuote)?;
                    let (d, k) = (d.clone(), k.clone());
                    frame.ctx.push(d);
                    frame.instr = k;
                }
                _ => {
                    frame.ctx.push(head);
                    frame.instr = next;
                }
            }
        }
    }

    fn project(&mut self, p: Projection) {
        if let Some(probe) = self.probe.as_deref_mut() {
            probe.projection(&p);
        }
    }

    fn dispatch(
        &mut self,
        target: &SExpr,
        message: &SExpr,
        sender: &Nat,
        log: &SExpr,
        caller: &Nat,
        depth: usize,
    ) -> Result<Dispatched, Abort> {
        let case = match target {
            SExpr::Atom(n) if !atoms::is_builtin(n) && !n.is(atoms::KERNEL) => {
                let case = dispatch::classify(target, &self.view());
                if let Some(probe) = self.probe.as_deref_mut() {
                    probe.dispatch(case, target, sender, depth);
                    probe.projection(&Projection::Exists(n.clone()));
                }
                case
            }
            _ => {
                let case = dispatch::classify(target, &self.view());
                if let Some(probe) = self.probe.as_deref_mut() {
                    probe.dispatch(case, target, sender, depth);
                }
                case
            }
        };
        match case {
            DispatchCase::Builtin => {
                let n = target.as_atom().expect("builtin targets are atoms");
                self.builtins
                    .apply(n, message)
                    .map(Dispatched::Value)
                    .ok_or(Abort::BuiltinUndefined)
            }
            DispatchCase::Kernel => {
                self.project(Projection::RegistryLen);
                let id = self.allocator.alloc(&self.view());
                self.effects.push_entry(LogEntry {
                    receiver: Nat::small(atoms::KERNEL),
                    caller: sender.clone(),
                    message: SExpr::nat(id.clone()),
                });
                self.effects.push_entry(LogEntry {
                    receiver: id.clone(),
                    caller: sender.clone(),
                    message: message.clone(),
                });
                Ok(Dispatched::Value(SExpr::nat(id)))
            }
            DispatchCase::Persistent => {
                let t = target.as_atom().expect("persistent targets are atoms").clone();
                self.project(Projection::Program(t.clone()));
                let program = self
                    .view()
                    .program_of(&t)
                    .expect("classified persistent implies a birth record");
                self.project(Projection::Log(t.clone()));
                let history = encode_log(&self.view().log_of(&t));
                let ctx = seed_context(
                    program.clone(),
                    message.clone(),
                    SExpr::nat(t.clone()),
                    history,
                    SExpr::nat(sender.clone()),
                );
                Ok(Dispatched::Enter(Frame {
                    ctx,
                    instr: program,
                    pending: Some(LogEntry {
                        receiver: t,
                        caller: sender.clone(),
                        message: message.clone(),
                    }),
                }))
            }
            DispatchCase::PairForm => Ok(Dispatched::Value(
                dispatch::pair_form(target, message).expect("classified pair form"),
            )),
            DispatchCase::External => {
                self.effects.push_external(ExternalSend {
                    sender: sender.clone(),
                    target: target.clone(),
                    message: message.clone(),
                });
                Ok(Dispatched::Value(SExpr::atom(atoms::EXTERNAL)))
            }
            DispatchCase::Ephemeral => {
                let ctx = seed_context(
                    target.clone(),
                    message.clone(),
                    SExpr::nat(sender.clone()),
                    log.clone(),
                    SExpr::nat(caller.clone()),
                );
                Ok(Dispatched::Enter(Frame {
                    ctx,
                    instr: target.clone(),
                    pending: None,
                }))
            }
            DispatchCase::Invalid => Err(Abort::InvalidTarget),
        }
    }
}

impl fmt::Debug for Machine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine")
            .field("committed", &self.k.len())
            .field("pending", &self.effects.delta().len())
            .field("steps", &self.steps)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::StandardBuiltins;
    use crate::sx;

    fn a(n: u64) -> SExpr {
        SExpr::atom(n)
    }

    fn top_ctx(p: &SExpr, i: SExpr) -> Vec<SExpr> {
        seed_context(p.clone(), i, a(1), a(0), a(1))
    }

    fn run_on(k: &KernelState, p: SExpr, i: SExpr) -> (Result<SExpr, Abort>, Effects, u64) {
        let alloc = Allocator::Sequential;
        let mut m = Machine::new(k, &alloc, &StandardBuiltins, DEFAULT_BUDGET);
        let r = m.run(top_ctx(&p, i), p);
        let steps = m.steps();
        (r, m.into_effects(), steps)
    }

    #[test]
    fn push_then_halt_returns_top() {
        // push 42; atom 0 terminates returning the top
        let (r, eff, steps) = run_on(&KernelState::new(), sx!(42, 0), a(7));
        assert_eq!(r, Ok(a(42)));
        assert!(eff.delta().is_empty());
        assert_eq!(steps, 2);
    }

    #[test]
    fn recall_caller_under_top_level() {
        let (r, _, _) = run_on(&KernelState::new(), sx!(3, 4, 0), a(7));
        assert_eq!(r, Ok(a(1)));
    }

    #[test]
    fn any_non_fail_atom_terminates() {
        for t in [0, 2, 3, 5, 99] {
            let (r, _, _) = run_on(&KernelState::new(), sx!(42, t), a(7));
            assert_eq!(r, Ok(a(42)));
        }
    }

    #[test]
    fn fail_aborts() {
        let (r, _, _) = run_on(&KernelState::new(), a(4), a(7));
        assert_eq!(r, Err(Abort::Fail));
        let (r, _, _) = run_on(&KernelState::new(), sx!(42, 4), a(7));
        assert_eq!(r, Err(Abort::Fail));
    }

    #[test]
    fn quote_pushes_data_uninterpreted() {
        let (r, eff, _) = run_on(&KernelState::new(), sx!(5, sx!(2, 0), 0), a(7));
        assert_eq!(r, Ok(sx!(2, 0)));
        assert!(eff.delta().is_empty());
    }

    #[test]
    fn malformed_recall_and_quote() {
        let k = KernelState::new();
        assert_eq!(run_on(&k, sx!(3, 5, 0), a(0)).0, Err(Abort::MalformedRecall));
        assert_eq!(run_on(&k, sx!(3, 99, 0), a(0)).0, Err(Abort::MalformedRecall));
        assert_eq!(
            run_on(&k, sx!(3, sx!(1, 1), 0), a(0)).0,
            Err(Abort::MalformedRecall)
        );
        assert_eq!(run_on(&k, sx!(3, 7), a(0)).0, Err(Abort::MalformedRecall));
        assert_eq!(run_on(&k, sx!(5, 7), a(0)).0, Err(Abort::MalformedQuote));
        // recall of the last valid index
        assert_eq!(run_on(&k, sx!(3, 4, 0), a(0)).0, Ok(a(1)));
    }

    #[test]
    fn create_object_program() {
        let prog = sx!(42, 0);
        let p = sx!(5, prog.clone(), 0, 2, 0);
        let (r, eff, _) = run_on(&KernelState::new(), p, a(0));
        assert_eq!(r, Ok(a(14)));
        assert_eq!(
            eff.delta(),
            &[
                LogEntry::new(0u64, 1u64, a(14)),
                LogEntry::new(14u64, 1u64, prog)
            ]
        );
    }

    #[test]
    fn send_direct_cases() {
        let k = KernelState::new();
        let alloc = Allocator::Sequential;
        let mut m = Machine::new(&k, &alloc, &StandardBuiltins, DEFAULT_BUDGET);
        let one = Nat::small(1);
        let prog_b = sx!(3, 1, 0);
        assert_eq!(m.send(&a(0), &prog_b, &one, &a(0), &one), Ok(a(14)));
        assert_eq!(
            m.effects().delta(),
            &[
                LogEntry::new(0u64, 1u64, a(14)),
                LogEntry::new(14u64, 1u64, prog_b)
            ]
        );
        assert_eq!(m.send(&sx!(6, 3), &a(9), &one, &a(0), &one), Ok(sx!(3, 9)));
        let s14 = Nat::small(14);
        assert_eq!(m.send(&sx!(7, 5), &a(8), &s14, &a(0), &one), Ok(a(1)));
        assert_eq!(
            m.effects().xi(),
            &[ExternalSend {
                sender: s14.clone(),
                target: sx!(7, 5),
                message: a(8)
            }]
        );
        assert_eq!(m.effects().delta().len(), 2);
        assert_eq!(m.send(&a(1), &a(8), &one, &a(0), &one), Err(Abort::InvalidTarget));
        assert_eq!(m.send(&a(13), &sx!(1, 2), &one, &a(0), &one), Err(Abort::BuiltinUndefined));
    }

    #[test]
    fn persistent_send_appends_after_return() {
        // B echoes [caller, msg]
        let echo = sx!(3, 1, 3, 4, 10, 2, 3, 5, 3, 8, 2, 0);
        let setup = KernelState::from_entries([
            LogEntry::new(0u64, 1u64, a(14)),
            LogEntry::new(14u64, 1u64, a(0)),
            LogEntry::new(0u64, 1u64, a(15)),
            LogEntry::new(15u64, 1u64, echo.clone()),
        ]);
        let alloc = Allocator::Sequential;
        let mut m = Machine::new(&setup, &alloc, &StandardBuiltins, DEFAULT_BUDGET);
        let r = m.send(&a(15), &a(100), &Nat::small(14), &a(0), &Nat::small(1));
        assert_eq!(r, Ok(sx!(14, 100)));
        assert_eq!(m.effects().delta(), &[LogEntry::new(15u64, 14u64, a(100))]);
    }

    #[test]
    fn budget_exhaustion_is_deterministic() {
        // a program that loops forever: ephemeral self-send via recall 0
        let looping = sx!(3, 1, 3, 0, 2, 0);
        let k = KernelState::new();
        let alloc = Allocator::Sequential;
        for budget in [0, 1, 10, 1000] {
            let mut m = Machine::new(&k, &alloc, &StandardBuiltins, budget);
            assert_eq!(m.run(top_ctx(&looping, a(0)), looping.clone()), Err(Abort::BudgetExhausted));
            assert_eq!(m.steps(), budget);
        }
    }

    #[test]
    fn deep_ephemeral_nesting_uses_heap_frames() {
        // counts down by nesting ephemeral sends 200k deep
        let looping = sx!(3, 1, 3, 0, 2, 0);
        let k = KernelState::new();
        let alloc = Allocator::Sequential;
        let mut m = Machine::new(&k, &alloc, &StandardBuiltins, 1_000_000);
        assert_eq!(m.run(top_ctx(&looping, a(0)), looping.clone()), Err(Abort::BudgetExhausted));
    }

    #[test]
    fn malformed_context_rejected() {
        let k = KernelState::new();
        let alloc = Allocator::Sequential;
        let mut m = Machine::new(&k, &alloc, &StandardBuiltins, 10);
        assert_eq!(m.run(vec![a(0); 4], a(0)), Err(Abort::MalformedContext));
        let ctx = seed_context(a(0), a(0), sx!(1, 1), a(0), a(1));
        assert_eq!(m.run(ctx, a(0)), Err(Abort::MalformedContext));
    }
}
