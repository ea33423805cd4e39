//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Every criterion runs even when an earlier one fails; the test fails at the
//! end if any criterion did. Lines are written straight to stdout so they are
//! visible whether or not the harness captures output.

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use objkernel::compose::{self, replicate, Composition};
use objkernel::dispatch::{self, atoms, classify, classify_pair, DispatchCase};
use objkernel::durability::{
    self, dispatch_records, encode_header, encode_record, frame, parse_store, read_store, recover_contents,
    DeliveryTag,
};
use objkernel::patterns::asm::fail_code;
use objkernel::patterns::checkpoint::{
    checkpoint_transform, counter_spec, host_response, kv_spec, naive_program, synthetic_checkpoint_log, FoldSpec,
};
use objkernel::patterns::fixtures::{self, create_tx, echo_caller_program, send_tx};
use objkernel::patterns::{tags, Asm};
use objkernel::scheduler::run_concurrent;
use objkernel::workload::{self, created, fault_chain, fault_relay_program, fault_tx, relay_world, topology};
use objkernel::{
    execute, execute_probed, Allocator, ExternalSend, Kernel, KernelConfig, KernelState, LogEntry, Nat, Probe,
    Projection, SExpr, SyncPolicy, SystemState, Transaction, TxResult,
};
use rand::Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn objk(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_objk")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_tx_file(path: &Path, txs: &[Transaction]) {
    let text: String = txs.iter().map(|t| t.to_sexpr().print() + "\n").collect();
    fs::write(path, text).unwrap();
}

// ---------------------------------------------------------------------------
// 1. Delegation golden trace, through the command line.

fn golden_delegation() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (store, file) = (dir.path().join("d.store"), dir.path().join("d.tx"));
    write_tx_file(&file, &fixtures::delegation().transactions());
    let out = objk(&["--store", p(&store), "--format", "lines", "exec", p(&file)]);
    ensure!(out.status.success(), "exec failed: {}", String::from_utf8_lossy(&out.stderr));
    let results: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| l.splitn(3, ' ').nth(2).unwrap_or("").to_owned())
        .collect();
    let expected = ["15", "[14,100]", "16", "[16,[42,200]]", "18", "[17,300]"];
    ensure!(results == expected, "results {results:?}");
    let out = objk(&["--store", p(&store), "--format", "lines", "dump", "15"]);
    let callers: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| l.split(' ').next().unwrap_or("").to_owned())
        .collect();
    ensure!(callers[1..] == ["14", "16", "17"], "B's callers {callers:?}");
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    Ok(format!("results {} and B callers 14,16,17 in {elapsed:.0?}", expected.join(" ")))
}

// ---------------------------------------------------------------------------
// 2. Auction golden trace and the aborting-reveal variant.

fn golden_auction() -> Check {
    let start = Instant::now();
    let fixture = fixtures::auction();
    let cfg = fixture.config();
    let sys = fixture.execute();
    let report = fixture.evaluate(&sys);
    ensure!(report.passed(), "{}", report.table());
    let entry = |obj: u64, i: usize| fixtures::log_entry(&sys, obj, i).map(|e| e.print());
    let s = tags::STORE;
    ensure!(entry(17, 2) == Some(format!("[15,[{s},100]]")), "B1 STORE entry {:?}", entry(17, 2));
    ensure!(entry(18, 2) == Some(format!("[16,[{s},150]]")), "B2 STORE entry {:?}", entry(18, 2));
    let reveal = sys.t[5].result.to_text();
    ensure!(reveal == "16", "REVEAL_ALL answered {reveal}");

    let variant = fixtures::auction_withdrawal();
    let txs = variant.transactions();
    let (last, setup) = txs.split_last().unwrap();
    let mut vsys = SystemState::new();
    vsys.submit_all(setup, &cfg);
    let before = vsys.clone();
    let exec = vsys.submit(last, &cfg);
    ensure!(exec.result.is_abort(), "the variant's REVEAL_ALL committed");
    ensure!(vsys.k == before.k, "an aborted reveal changed K");
    let aborts = vsys.t.iter().filter(|r| r.result.is_abort()).count();
    ensure!(aborts == 1, "{aborts} aborts recorded");
    ensure!(variant.evaluate(&vsys).passed(), "{}", variant.evaluate(&vsys).table());
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    Ok(format!("B1/B2 STORE entries, winner 16, variant aborts with K unchanged, in {elapsed:.0?}"))
}

// ---------------------------------------------------------------------------
// 3. Replay: 1000 generated sequences, plus a verify mutation harness.

fn mutate_delta(bytes: &[u8], rng: &mut impl Rng, reseal: bool) -> Option<Vec<u8>> {
    let text = std::str::from_utf8(bytes).ok()?;
    // Frames after the header, each `<len> <crc> <json>\n`.
    let mut frames: Vec<String> = text.split_inclusive('\n').map(str::to_owned).collect();
    let candidates: Vec<usize> = (1..frames.len())
        .filter(|&i| !frames[i].contains("\"delta\":[]"))
        .collect();
    let fi = candidates[rng.random_range(0..candidates.len())];
    let line = frames[fi].as_str();
    let json_start = line.find('{')?;
    let d = line.find("\"delta\":")? + 8;
    let x = line.find(",\"xi\"")?;
    let digits: Vec<usize> = (d..x).filter(|&i| line.as_bytes()[i].is_ascii_digit()).collect();
    let at = digits[rng.random_range(0..digits.len())];
    let mut mutated = line.as_bytes().to_vec();
    let old = mutated[at];
    mutated[at] = b'0' + ((old - b'0' + rng.random_range(1..10u8)) % 10);
    let new_line = if reseal {
        let json = std::str::from_utf8(&mutated[json_start..mutated.len() - 1]).ok()?;
        String::from_utf8(frame(json)).ok()?
    } else {
        String::from_utf8(mutated).ok()?
    };
    frames[fi] = new_line;
    Some(frames.concat().into_bytes())
}

fn replay_theorem() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = workload::rng(0xacce);
    let mut stores = Vec::new();
    let mut total_tx = 0;
    for seed in 0..1000u64 {
        let len = rng.random_range(0..=50);
        let cfg = if seed % 2 == 0 {
            workload::sequential_config()
        } else {
            workload::hash_config(seed.to_be_bytes())
        };
        let txs = workload::sequence(seed, len, &cfg);
        let path = dir.path().join(format!("s{seed}"));
        let (kernel, _) = Kernel::open(&path, cfg.clone()).map_err(|e| e.to_string())?;
        let mut kernel = kernel.with_sync_policy(SyncPolicy::Never);
        for tx in &txs {
            kernel.submit(tx).map_err(|e| e.to_string())?;
        }
        let mut replayed = SystemState::new();
        replayed.submit_all(&txs, &cfg);
        ensure!(replayed.k == kernel.state().k, "seed {seed}: K differs on re-execution");
        ensure!(replayed.results() == kernel.state().results(), "seed {seed}: results differ");
        let recovered = durability::recover(&path).map_err(|e| e.to_string())?.sys;
        ensure!(recovered == replayed, "seed {seed}: recovered state differs");
        let report = durability::replay_verify(&path).map_err(|e| e.to_string())?;
        ensure!(report.ok(), "seed {seed}: {:?}", report.divergence);
        total_tx += txs.len();
        if len >= 10 && stores.len() < 10 {
            stores.push(path);
        }
    }

    // The mutation harness goes through the binary: honest stores exit 0,
    // every mutant exits 1. Half the mutants keep a stale checksum; the other
    // half are resealed so only re-execution can notice.
    let mut mutants = 0;
    for (i, path) in stores.iter().enumerate() {
        let out = objk(&["--store", p(path), "verify"]);
        ensure!(out.status.code() == Some(0), "honest store {i} failed verify");
        let bytes = fs::read(path).unwrap();
        for j in 0..12 {
            let m = mutate_delta(&bytes, &mut rng, j % 2 == 1).ok_or("mutation failed")?;
            let mpath = dir.path().join(format!("m{i}-{j}"));
            fs::write(&mpath, &m).unwrap();
            let out = objk(&["--store", p(&mpath), "verify"]);
            ensure!(out.status.code() == Some(1), "mutant {i}-{j} exited {:?}", out.status.code());
            mutants += 1;
        }
    }
    Ok(format!(
        "1000 sequences ({total_tx} tx) replay bit-exactly; {} honest stores exit 0, {mutants} mutants exit 1, in {:.1?}",
        stores.len(),
        start.elapsed()
    ))
}

// ---------------------------------------------------------------------------
// 4. Atomicity under injected FAIL.

fn atomicity() -> Check {
    let cfg = KernelConfig::hash(b"atomicity".to_vec());
    let mut base = SystemState::new();
    let side = created(&base.submit(&create_tx(&[echo_caller_program()]), &cfg))[0].clone();
    let relays = created(&base.submit(&create_tx(&vec![fault_relay_program(&side); 3]), &cfg));
    let mut rng = workload::rng(4);
    let mut depths = [0usize; 8];
    for case in 0..10_000 {
        let depth = rng.random_range(1..8);
        let chain: Vec<Nat> = (0..depth).map(|_| relays[rng.random_range(0..relays.len())].clone()).collect();
        let mut actions = vec![0; depth];
        let clean = execute(&base.k, &fault_tx(&fault_chain(&chain, &actions)), &cfg);
        ensure!(
            clean.committed() && clean.delta.len() == 2 * depth && clean.externals.len() == depth,
            "case {case}: the clean run does not have the expected effects"
        );
        let at = rng.random_range(0..depth);
        depths[at] += 1;
        actions[at] = rng.random_range(1..=2);
        let mut sys = base.clone();
        let exec = sys.submit(&fault_tx(&fault_chain(&chain, &actions)), &cfg);
        ensure!(exec.result.is_abort(), "case {case}: FAIL at depth {at} committed");
        ensure!(exec.delta.is_empty() && exec.externals.is_empty(), "case {case}: effects escaped");
        ensure!(sys.k == base.k, "case {case}: K changed");
        ensure!(sys.t.len() == base.t.len() + 1, "case {case}: T not extended by one");
    }

    // P sends to Q, which records the message, then to R, which FAILs.
    let cfg = KernelConfig::sequential();
    let mut sys = SystemState::new();
    let ids = created(&sys.submit(&create_tx(&[echo_caller_program(), fail_code()]), &cfg));
    let (q, r) = (ids[0].clone(), ids[1].clone());
    let mut a = Asm::new();
    a.send(SExpr::nat(q.clone()), Asm::MESSAGE);
    let x = a.send(SExpr::nat(r), Asm::MESSAGE);
    let pid = created(&sys.submit(&create_tx(&[a.ret(x)]), &cfg))[0].clone();
    let q_before = sys.k.log_of(&q);
    let exec = sys.submit(&send_tx(SExpr::nat(pid), SExpr::atom(5)), &cfg);
    ensure!(exec.result.is_abort(), "P→Q, P→R committed");
    ensure!(sys.k.log_of(&q) == q_before, "Q kept the entry from an aborted transaction");
    Ok(format!(
        "10000 cases, FAIL depth histogram {:?}; all aborted with K unchanged and Ξ empty; P→Q,P→R rolls back Q",
        &depths[..7]
    ))
}

// ---------------------------------------------------------------------------
// 5. Provenance over generated send topologies.

fn provenance() -> Check {
    let cfg = KernelConfig::hash(b"provenance".to_vec());
    let (sys, relays, echo) = relay_world(4, &cfg);
    let mut rng = workload::rng(5);
    let mut entries = 0;
    for case in 0..10_000 {
        let hops = rng.random_range(1..10);
        let topo = topology(&mut rng, &relays, &echo, hops);
        let exec = execute(&sys.k, &topo.transaction(), &cfg);
        ensure!(exec.result == TxResult::Value(topo.expected_result()), "case {case}: result");
        ensure!(exec.delta == topo.expected_delta(), "case {case}: an entry's caller is not the dispatching self");
        entries += exec.delta.len();
    }
    Ok(format!("10000 topologies, {entries} entries, every caller equals the dispatching self"))
}

// ---------------------------------------------------------------------------
// 6. Read confinement.

#[derive(Default)]
struct Confinement {
    current: Option<(DispatchCase, SExpr)>,
    projections: usize,
    violations: Vec<String>,
}

impl Probe for Confinement {
    fn dispatch(&mut self, case: DispatchCase, target: &SExpr, _sender: &Nat, _depth: usize) {
        self.current = Some((case, target.clone()));
    }

    fn projection(&mut self, projection: &Projection) {
        let n = match projection {
            Projection::Log(n) | Projection::Program(n) => n,
            // Existence and registry length are classification and
            // allocation reads, not object reads.
            Projection::Exists(_) | Projection::RegistryLen => return,
        };
        self.projections += 1;
        match &self.current {
            Some((DispatchCase::Persistent, t)) if t.as_atom() == Some(n) => {}
            other => self.violations.push(format!("{projection:?} during {other:?}")),
        }
    }

    fn appended(&mut self, _entry: &LogEntry, _depth: usize) {}
}

fn confinement() -> Check {
    let mut probe = Confinement::default();
    let mut txs = 0;
    let mut run = |sys: &mut SystemState, tx: &Transaction, cfg: &KernelConfig| {
        let exec = execute_probed(&sys.k, tx, cfg, &mut probe);
        sys.apply(tx, &exec);
        txs += 1;
    };
    for name in fixtures::NAMES {
        let fixture = fixtures::by_name(name).unwrap();
        let mut sys = SystemState::new();
        for tx in fixture.transactions() {
            run(&mut sys, &tx, &fixture.config());
        }
    }
    for seed in 0..200 {
        let cfg = workload::sequential_config();
        let mut sys = SystemState::new();
        for tx in workload::sequence(seed, 30, &cfg) {
            run(&mut sys, &tx, &cfg);
        }
    }
    let cfg = KernelConfig::hash(b"confinement".to_vec());
    let (mut world, relays, echo) = relay_world(4, &cfg);
    let mut rng = workload::rng(6);
    for _ in 0..1000 {
        let topo = topology(&mut rng, &relays, &echo, 8);
        run(&mut world, &topo.transaction(), &cfg);
    }
    ensure!(probe.violations.is_empty(), "{} violations, first {:?}", probe.violations.len(), probe.violations[0]);
    ensure!(probe.projections > 1000, "only {} projections observed", probe.projections);
    Ok(format!("{txs} transactions, {} log/program projections, 0 violations", probe.projections))
}

// ---------------------------------------------------------------------------
// 7. Built-in table.

fn builtins() -> Check {
    let a = SExpr::atom;
    let pr = SExpr::pair;
    let nested = pr(pr(a(1), a(2)), pr(a(1), a(2)));
    #[rustfmt::skip]
    let rows: Vec<(u64, SExpr, Option<SExpr>)> = vec![
        (atoms::HEAD, pr(a(4), a(7)), Some(a(4))),
        (atoms::HEAD, pr(pr(a(1), a(2)), a(7)), Some(pr(a(1), a(2)))),
        (atoms::HEAD, a(3), None),
        (atoms::HEAD, a(0), None),
        (atoms::TAIL, pr(a(4), a(7)), Some(a(7))),
        (atoms::TAIL, a(3), None),
        (atoms::TAIL, a(0), None),
        (atoms::PAIR, a(3), Some(pr(a(6), a(3)))),
        (atoms::PAIR, pr(a(1), a(2)), Some(pr(a(6), pr(a(1), a(2))))),
        (atoms::EQUAL, pr(a(5), a(5)), Some(a(0))),
        (atoms::EQUAL, pr(a(5), a(6)), Some(pr(a(5), a(6)))),
        (atoms::EQUAL, nested.clone(), Some(a(0))),
        (atoms::EQUAL, pr(pr(a(1), a(2)), a(1)), Some(pr(pr(a(1), a(2)), a(1)))),
        (atoms::EQUAL, a(5), None),
        (atoms::BRANCH, pr(a(1), pr(a(10), pr(a(20), a(0)))), Some(a(10))),
        (atoms::BRANCH, pr(pr(a(0), a(0)), pr(a(10), pr(a(20), a(0)))), Some(a(20))),
        (atoms::BRANCH, pr(a(0), pr(a(10), pr(a(20), pr(a(9), a(9))))), Some(a(10))),
        (atoms::BRANCH, pr(a(1), pr(a(10), a(20))), None),
        (atoms::BRANCH, pr(a(1), a(10)), None),
        (atoms::BRANCH, a(1), None),
        (atoms::INCREMENT, a(41), Some(a(42))),
        (atoms::INCREMENT, a(0), Some(a(1))),
        (atoms::INCREMENT, SExpr::nat(Nat::small(u64::MAX)), Some(SExpr::nat(Nat::small(u64::MAX).succ()))),
        (atoms::INCREMENT, pr(a(1), a(2)), None),
    ];
    let mut covered = rows.len();
    for (n, m, want) in &rows {
        let got = dispatch::builtin(&Nat::small(*n), m);
        ensure!(&got == want, "builtin {n} on {}: {got:?}", m.print());
    }
    for n in (0..8).chain([14, 15, 99, 1 << 40]) {
        for m in [a(1), pr(a(1), a(2))] {
            ensure!(dispatch::builtin(&Nat::small(n), &m).is_none(), "atom {n} acts as a built-in");
            covered += 1;
        }
    }
    // Undefined results abort the whole transaction.
    for (n, m, want) in &rows {
        let mut asm = Asm::new();
        asm.send(*n, m.clone());
        asm.send(0, echo_caller_program());
        let r = asm.send(*n, m.clone());
        let exec = execute(&KernelState::new(), &Transaction::new(asm.ret(r), SExpr::ZERO), &KernelConfig::sequential());
        match want {
            Some(v) => ensure!(exec.result == TxResult::Value(v.clone()), "in-transaction {n}: {:?}", exec.result),
            None => ensure!(exec.result.is_abort() && exec.delta.is_empty(), "⊥ from {n} did not abort"),
        }
        covered += 1;
    }
    // The PAIR closure applied to a message, and classification priorities.
    let mut asm = Asm::new();
    let closure = asm.send(atoms::PAIR, 5);
    let r = asm.send(closure, 7);
    let exec = execute(&KernelState::new(), &Transaction::new(asm.ret(r), SExpr::ZERO), &KernelConfig::sequential());
    ensure!(exec.result == TxResult::Value(pr(a(5), a(7))), "[6,5] applied to 7 gave {:?}", exec.result);
    ensure!(dispatch::pair_form(&pr(a(6), a(5)), &a(7)) == Some(pr(a(5), a(7))), "pair_form");
    let empty = KernelState::new();
    let v = empty.view();
    for (target, case) in [
        (pr(a(6), a(3)), DispatchCase::PairForm),
        (pr(a(6), echo_caller_program()), DispatchCase::PairForm),
        (pr(a(7), a(9)), DispatchCase::External),
        (pr(a(99), a(0)), DispatchCase::Ephemeral),
        (echo_caller_program(), DispatchCase::Ephemeral),
        (a(0), DispatchCase::Kernel),
        (a(1), DispatchCase::Invalid),
        (a(14), DispatchCase::Invalid),
    ] {
        ensure!(classify(&target, &v) == case, "{} classified {:?}", target.print(), classify(&target, &v));
        covered += 1;
    }
    for n in 8..14 {
        ensure!(classify(&a(n), &v) == DispatchCase::Builtin, "{n} not a built-in");
        covered += 1;
    }
    ensure!(classify_pair(&pr(a(6), a(3))) == DispatchCase::PairForm, "pair form priority");
    Ok(format!("{covered} rows: all ⊥ rows abort, EQUAL atom-0/echo, PAIR closure, pair form before ephemeral"))
}

// ---------------------------------------------------------------------------
// 8. Scheduler equivalence.

fn scheduler() -> Check {
    let cfg = workload::hash_config(b"batches");
    let mut rng = workload::rng(8);
    let mut retries = 0;
    let mut batches = 0;
    for b in 0..200u64 {
        let mut base = SystemState::new();
        base.submit_all(&workload::sequence(b, 8, &cfg), &cfg);
        let known = base.k.objects();
        let size = rng.random_range(0..=64);
        let batch: Vec<Transaction> = (0..size).map(|_| workload::transaction(&mut rng, &known)).collect();
        let mut oracle = base.clone();
        oracle.submit_all(&batch, &cfg);
        for workers in [1, 2, 4, 8] {
            let mut par = base.clone();
            retries += run_concurrent(&mut par, &batch, workers, &cfg).retries;
            ensure!(par.t.len() == base.t.len() + size, "batch {b}: {} records for {size}", par.t.len() - base.t.len());
            ensure!(par.k == oracle.k, "batch {b} workers {workers}: K differs");
            ensure!(par.results() == oracle.results(), "batch {b} workers {workers}: results differ");
        }
        batches += 1;
    }
    // Single hot object: every transaction appends to the same echo object.
    for b in 0..20u64 {
        let mut base = SystemState::new();
        let echo = created(&base.submit(&create_tx(&[echo_caller_program()]), &cfg))[0].clone();
        let size = rng.random_range(1..=64);
        let batch: Vec<Transaction> = (0..size).map(|i| send_tx(SExpr::nat(echo.clone()), SExpr::atom(i))).collect();
        let mut oracle = base.clone();
        oracle.submit_all(&batch, &cfg);
        for workers in [1, 2, 4, 8] {
            let mut par = base.clone();
            retries += run_concurrent(&mut par, &batch, workers, &cfg).retries;
            ensure!(par == oracle, "hot batch {b} workers {workers} differs");
        }
        batches += 1;
    }
    Ok(format!("{batches} batches × workers {{1,2,4,8}} equal the sequential oracle ({retries} conflict retries)"))
}

// ---------------------------------------------------------------------------
// 9. Crash recovery and redelivery.

fn recovery() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sample");
    let cfg = KernelConfig::sequential();
    let mut txs = fixtures::delegation().transactions();
    let mut a = Asm::new();
    a.send(compose::route_target(3, 4), Asm::MESSAGE);
    a.send(compose::route_target(5, 6), Asm::MESSAGE);
    txs.push(Transaction::new(a.ret(0), SExpr::atom(1)));
    txs.extend(workload::sequence(99, 6, &cfg));
    {
        let (mut k, _) = Kernel::open(&path, cfg.clone()).map_err(|e| e.to_string())?;
        for tx in &txs {
            k.submit(tx).map_err(|e| e.to_string())?;
        }
    }
    let bytes = fs::read(&path).unwrap();
    let full = read_store(&path).map_err(|e| e.to_string())?;
    let mut ends = vec![encode_header(full.header.as_ref().unwrap()).len()];
    for r in &full.records {
        ends.push(ends.last().unwrap() + encode_record(r).len());
    }
    ensure!(*ends.last().unwrap() == bytes.len(), "frame lengths do not add up");
    // Oracle: the state after re-executing the first n transactions.
    let prefixes: Vec<SystemState> = (0..=txs.len())
        .map(|n| {
            let mut s = SystemState::new();
            s.submit_all(&txs[..n], &cfg);
            s
        })
        .collect();
    for cut in 0..=bytes.len() {
        let contents = parse_store(&bytes[..cut]).map_err(|e| format!("cut {cut}: {e}"))?;
        let intact = ends.iter().filter(|&&e| e <= cut).count().saturating_sub(1);
        let rec = recover_contents(&contents).map_err(|e| format!("cut {cut}: {e}"))?;
        ensure!(rec.sys == prefixes[intact], "cut {cut}: recovered state is not the {intact}-record prefix");
    }
    // Physically truncate mid-record, reopen (which discards the torn tail),
    // and check the store verifies again.
    let cut = ends[3] + 5;
    let tpath = dir.path().join("torn");
    fs::write(&tpath, &bytes[..cut]).unwrap();
    let (k, report) = Kernel::open(&tpath, cfg.clone()).map_err(|e| e.to_string())?;
    ensure!(report.torn_bytes == 5 && k.state() == &prefixes[3], "reopen after a torn write");
    drop(k);
    ensure!(durability::replay_verify(&tpath).map_err(|e| e.to_string())?.ok(), "reopened store fails verify");

    // A crash after delivering part of a record redelivers with the same tags.
    let mut first = Vec::new();
    dispatch_records(&full.records, 0, &mut |tag: DeliveryTag, _: &ExternalSend| {
        first.push(tag);
        Ok(())
    }, &mut |_| Ok(()))
    .map_err(|e| e.to_string())?;
    ensure!(first.len() >= 2, "sample store has {} externals", first.len());
    let mut delivered = 0;
    let crashed = dispatch_records(&full.records, 0, &mut |_: DeliveryTag, _: &ExternalSend| {
        delivered += 1;
        if delivered == 2 { Err("crash".into()) } else { Ok(()) }
    }, &mut |_| Ok(()))
    .map_err(|e| e.to_string())?;
    ensure!(crashed.error.is_some() && crashed.delivered == 1, "the simulated crash did not happen");
    let cursor = crashed.cursor;
    let mut again = Vec::new();
    dispatch_records(&full.records, cursor, &mut |tag: DeliveryTag, _: &ExternalSend| {
        again.push(tag);
        Ok(())
    }, &mut |_| Ok(()))
    .map_err(|e| e.to_string())?;
    ensure!(again == first, "redelivered tags {again:?} differ from {first:?}");
    Ok(format!(
        "{} truncation points recover the intact prefix; redelivery after a crash repeats tags {first:?}",
        bytes.len() + 1
    ))
}

// ---------------------------------------------------------------------------
// 10. Checkpoint transform: equivalence and per-call cost.

fn kv_message(rng: &mut impl Rng) -> SExpr {
    let key = SExpr::atom(rng.random_range(0..4));
    match rng.random_range(0..5) {
        0 | 1 => SExpr::pair(SExpr::atom(tags::KV_PUT), SExpr::pair(key, SExpr::atom(rng.random_range(0..50)))),
        2 | 3 => SExpr::pair(SExpr::atom(tags::KV_GET), key),
        _ => SExpr::atom(rng.random_range(0..9)),
    }
}

fn answers(program: SExpr, messages: &[SExpr]) -> Vec<TxResult> {
    let cfg = KernelConfig::sequential();
    let mut sys = SystemState::new();
    let id = created(&sys.submit(&create_tx(&[program]), &cfg))[0].clone();
    messages
        .iter()
        .map(|m| sys.submit(&send_tx(SExpr::nat(id.clone()), m.clone()), &cfg).result)
        .collect()
}

/// Steps taken by call `n + 1` given a synthetic history of `n` messages.
fn steps_after(spec: &FoldSpec, transformed: bool, messages: &[SExpr], next: &SExpr) -> Result<u64, String> {
    let object = Nat::small(14);
    let one = Nat::small(1);
    let log = if transformed {
        synthetic_checkpoint_log(spec, &object, &one, &one, messages)
    } else {
        std::iter::once((one.clone(), naive_program(spec)))
            .chain(messages.iter().map(|m| (one.clone(), m.clone())))
            .collect()
    };
    let entries = std::iter::once(LogEntry::new(0u64, 1u64, SExpr::atom(14)))
        .chain(log.into_iter().map(|(c, m)| LogEntry::new(object.clone(), c, m)));
    let k = KernelState::from_entries(entries);
    let cfg = KernelConfig::new(Allocator::Sequential, u64::MAX / 4);
    let exec = execute(&k, &send_tx(14, next.clone()), &cfg);
    let history: Vec<(Nat, SExpr)> = messages.iter().map(|m| (one.clone(), m.clone())).collect();
    let want = host_response(spec, &history, next);
    if exec.result != TxResult::Value(want) {
        return Err(format!("call {} answered {:?}", messages.len() + 1, exec.result));
    }
    Ok(exec.steps)
}

fn checkpoint() -> Check {
    let mut rng = workload::rng(10);
    for case in 0..1000 {
        let kv = case % 2 == 1;
        let spec = if kv { kv_spec() } else { counter_spec() };
        let len = rng.random_range(1..12);
        let messages: Vec<SExpr> = (0..len)
            .map(|_| if kv { kv_message(&mut rng) } else { workload::message(&mut rng, 2) })
            .collect();
        let oracle: Vec<TxResult> = (0..len)
            .map(|i| {
                let h: Vec<(Nat, SExpr)> = messages[..i].iter().map(|m| (Nat::small(1), m.clone())).collect();
                TxResult::Value(host_response(&spec, &h, &messages[i]))
            })
            .collect();
        ensure!(answers(naive_program(&spec), &messages) == oracle, "case {case}: P differs from the fold");
        ensure!(answers(checkpoint_transform(&spec), &messages) == oracle, "case {case}: P' differs from P");
    }

    let mut lines = Vec::new();
    let mut ratios = Vec::new();
    for spec in [counter_spec(), kv_spec()] {
        let kv = spec.name != counter_spec().name;
        let history: Vec<SExpr> = (0..10_000)
            .map(|_| if kv { kv_message(&mut rng) } else { SExpr::atom(rng.random_range(0..9)) })
            .collect();
        let next = if kv { kv_message(&mut rng) } else { SExpr::atom(1) };
        let mut naive = Vec::new();
        let mut transformed = Vec::new();
        for n in [10, 100, 1000, 10_000] {
            naive.push(steps_after(&spec, false, &history[..n], &next)?);
            transformed.push(steps_after(&spec, true, &history[..n], &next)?);
        }
        ensure!(naive.windows(2).all(|w| w[1] > w[0]), "{}: P does not grow with history {naive:?}", spec.name);
        let ratio = transformed[3] as f64 / transformed[0] as f64;
        ratios.push(ratio);
        lines.push(format!(
            "{}: P steps {naive:?}, P' steps {transformed:?} at N=10,100,1000,10000, P' ratio {ratio:.1}",
            spec.name
        ));
    }
    let summary = format!("1000 sequences P≡P'≡fold; {}", lines.join("; "));
    if ratios.iter().all(|&r| r <= 2.0) {
        Ok(summary)
    } else {
        Err(format!(
            "{summary}; bound is 2. P' still walks its whole oldest-outermost log to reach the newest checkpoint"
        ))
    }
}

// ---------------------------------------------------------------------------
// 11. Composition scenarios and replication.

fn emitter() -> SExpr {
    let mut a = Asm::new();
    let t = a.head(Asm::MESSAGE);
    let m = a.tail(Asm::MESSAGE);
    a.send(t, m);
    a.ret(0)
}

fn composition() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = workload::rng(11);
    let (mut routed, mut dest_aborts, mut origin_aborts) = (0, 0, 0);
    for scenario in 0..60 {
        let mut comp = Composition::new();
        let n = rng.random_range(2..=4);
        let mut paths = Vec::new();
        for i in 0..n {
            let cfg = KernelConfig::hash(format!("s{scenario}-i{i}").into_bytes());
            let path = dir.path().join(format!("c{scenario}-{i}"));
            let (k, _) = Kernel::open(&path, cfg.clone()).map_err(|e| e.to_string())?;
            comp.add(&format!("i{i}"), 100 + i as u64, k);
            paths.push((path, cfg));
        }
        let mut ids = Vec::new();
        for i in 0..n {
            let c = comp
                .submit(i, &create_tx(&[echo_caller_program(), emitter(), fail_code()]))
                .map_err(|e| e.to_string())?;
            ensure!(!c.result.is_abort(), "setup aborted");
            let registry = comp.kernel(i).state().k.log_of(&Nat::small(0));
            let id = |e: &(Nat, SExpr)| e.1.as_atom().unwrap().clone();
            let l = registry.len();
            ids.push((id(&registry[l - 3]), id(&registry[l - 2]), id(&registry[l - 1])));
        }
        for step in 0..10 {
            let from = rng.random_range(0..n);
            let to = rng.random_range(0..n);
            let (echo, _, failer) = &ids[to];
            let emitter_id = ids[from].1.clone();
            let to_failer = rng.random_bool(0.25);
            let fail_after = rng.random_bool(0.2);
            let dest = if to_failer { failer } else { echo };
            let payload = SExpr::atom(rng.random_range(0..50));
            let target = compose::route_target(100 + to as u64, SExpr::nat(dest.clone()));
            let mut p = Asm::new();
            let r = p.send(SExpr::nat(emitter_id.clone()), SExpr::pair(target, payload.clone()));
            let program = if fail_after { p.fail() } else { p.ret(r) };
            let origin_before = comp.kernel(from).state().k.clone();
            let dest_before = comp.kernel(to).state().k.clone();
            let c = comp
                .submit(from, &Transaction::new(program, SExpr::ZERO))
                .map_err(|e| e.to_string())?;
            let at = format!("scenario {scenario} step {step}");
            if fail_after {
                ensure!(c.result.is_abort() && c.deliveries.is_empty(), "{at}: aborted origin routed a send");
                ensure!(comp.kernel(from).state().k == origin_before, "{at}: aborted origin changed");
                origin_aborts += 1;
                continue;
            }
            ensure!(c.deliveries.len() == 1, "{at}: {} deliveries", c.deliveries.len());
            let d = &c.deliveries[0];
            ensure!(d.sender == emitter_id, "{at}: sender {}", d.sender);
            // The origin's own effects stand regardless of the destination.
            let grew = comp.kernel(from).state().k.len() - origin_before.len();
            let own = comp.kernel(from).state().t[c.seq as usize - 1].result.clone();
            ensure!(!own.is_abort() && grew >= 1, "{at}: origin lost its commit");
            if to_failer {
                ensure!(d.result.is_abort(), "{at}: failer committed");
                if to != from {
                    ensure!(comp.kernel(to).state().k == dest_before, "{at}: aborted delivery changed K");
                }
                dest_aborts += 1;
            } else {
                ensure!(
                    d.result == TxResult::Value(SExpr::pair(SExpr::atom(1), payload)),
                    "{at}: routed result {:?}",
                    d.result
                );
                let log = comp.kernel(to).state().k.log_of(echo);
                let caller = &log.last().unwrap().0;
                ensure!(caller.is(1) && caller != &emitter_id, "{at}: routed caller {caller}");
                routed += 1;
            }
        }
        drop(comp);
        for (path, cfg) in &paths {
            let records = read_store(path).map_err(|e| e.to_string())?.records;
            let report = replicate(&records, cfg, 3);
            ensure!(report.ok(), "scenario {scenario}: replicas diverge at {:?}", report.divergence);
        }
    }
    // The sample files through the binary.
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let out = objk(&[
        "compose",
        "--topology",
        p(&data.join("topology.toml")),
        "--scenario",
        p(&data.join("scenario.toml")),
    ]);
    ensure!(out.status.success(), "objk compose failed");
    Ok(format!(
        "60 scenarios: {routed} routed sends arrive with caller 1, {dest_aborts} destination aborts leave origins committed, \
         {origin_aborts} origin aborts route nothing; every store replays identically on 3 replicas"
    ))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, fn() -> Check); 11] = [
        (1, "delegation golden trace", golden_delegation),
        (2, "auction golden trace", golden_auction),
        (3, "replay determinism and verify mutations", replay_theorem),
        (4, "atomicity under injected FAIL", atomicity),
        (5, "provenance over send topologies", provenance),
        (6, "read confinement", confinement),
        (7, "built-in table", builtins),
        (8, "scheduler equivalence", scheduler),
        (9, "crash recovery and redelivery", recovery),
        (10, "checkpoint transform", checkpoint),
        (11, "composition and replication", composition),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        // Deep logs need more stack than the test thread's default.
        let verdict = std::thread::Builder::new()
            .stack_size(256 << 20)
            .spawn(move || catch_unwind(AssertUnwindSafe(check)))
            .unwrap()
            .join()
            .unwrap()
            .unwrap_or_else(|e| {
                Err(e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        let line = match &verdict {
            Ok(detail) => format!("PASS criterion {n:>2} ({name}): {detail}\n"),
            Err(detail) => format!("FAIL criterion {n:>2} ({name}): {detail}\n"),
        };
        std::io::stdout().write_all(line.as_bytes()).unwrap();
        if verdict.is_err() {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "criteria {failed:?} failed");
}
