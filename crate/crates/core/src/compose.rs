//! Composition of independent kernel instances.
//!
//! Each instance is a [`Kernel`] with its own identity space (distinct hash
//! salts). An external send whose target has the shape
//! `[7,[key, payload]]` is routed by the deployment layer: `key` selects a
//! route, and the route's template program is submitted as a new transaction
//! on the destination instance with input `[payload, [message, sender]]`.
//! The destination therefore sees the kernel-assigned caller 1 (the external
//! identity), never the originating object. Anything else is a dead letter.
//!
//! There is no cross-instance atomicity: every routed submission commits or
//! aborts on its own, after its origin has already committed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::dispatch::{atoms, Builtins, StandardBuiltins};
use crate::durability::DurableRecord;
use crate::kernel::{Kernel, KernelError};
use crate::patterns::Asm;
use crate::sexpr::{Nat, SExpr};
use crate::state::{ExternalSend, KernelState, LogEntry, TxResult};
use crate::txn::{execute, KernelConfig, Transaction};

pub const DEFAULT_MAX_HOPS: usize = 16;

/// Input `[payload, [message, sender]]`: sends `message` to `payload` and
/// returns the reply.
pub fn forward_template() -> SExpr {
    let mut a = Asm::new();
    let dest = a.head(Asm::MESSAGE);
    let rest = a.tail(Asm::MESSAGE);
    let msg = a.head(rest);
    let r = a.send(dest, msg);
    a.ret(r)
}

/// The routing target `[7,[key, payload]]`.
pub fn route_target(key: impl Into<SExpr>, payload: impl Into<SExpr>) -> SExpr {
    SExpr::pair(
        SExpr::atom(atoms::EXTERNAL_TAG),
        SExpr::pair(key.into(), payload.into()),
    )
}

/// Splits a routing target into `(key, payload)`.
pub fn parse_route_target(target: &SExpr) -> Option<(Nat, SExpr)> {
    let (tag, rest) = target.as_pair()?;
    if !tag.is_atom_value(atoms::EXTERNAL_TAG) {
        return None;
    }
    let (key, payload) = rest.as_pair()?;
    Some((key.as_atom()?.clone(), payload.clone()))
}

/// The transaction a route submits for one external send.
pub fn translate(template: &SExpr, payload: &SExpr, send: &ExternalSend) -> Transaction {
    Transaction::new(
        template.clone(),
        SExpr::pair(
            payload.clone(),
            SExpr::pair(send.message.clone(), SExpr::nat(send.sender.clone())),
        ),
    )
}

#[derive(Debug, Clone)]
pub struct Route {
    pub instance: usize,
    pub template: SExpr,
}

pub struct Instance {
    pub name: String,
    pub kernel: Kernel,
}

/// Where an external send went.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub origin: usize,
    pub origin_seq: u64,
    pub index: usize,
    pub sender: Nat,
    pub destination: usize,
    pub destination_seq: u64,
    pub hop: usize,
    pub tx: Transaction,
    pub result: TxResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadLetter {
    pub origin: usize,
    pub origin_seq: u64,
    pub index: usize,
    pub send: ExternalSend,
    pub reason: String,
}

/// Everything caused by one top-level submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cascade {
    pub instance: usize,
    pub seq: u64,
    pub result: TxResult,
    pub deliveries: Vec<Delivery>,
    pub dead_letters: Vec<DeadLetter>,
}

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("instance {0}: {1}")]
    Kernel(String, #[source] KernelError),
    #[error("topology: {0}")]
    Topology(String),
    #[error("scenario: {0}")]
    Scenario(String),
}

/// A set of instances and the routing table between them.
pub struct Composition {
    pub instances: Vec<Instance>,
    pub routes: BTreeMap<Nat, Route>,
    pub max_hops: usize,
}

impl Composition {
    pub fn new() -> Composition {
        Composition {
            instances: Vec::new(),
            routes: BTreeMap::new(),
            max_hops: DEFAULT_MAX_HOPS,
        }
    }

    /// Adds an instance reachable under `key` through the forwarding
    /// template, returning its index.
    pub fn add(&mut self, name: &str, key: u64, kernel: Kernel) -> usize {
        let index = self.instances.len();
        self.instances.push(Instance {
            name: name.to_owned(),
            kernel,
        });
        self.add_route(key, index, forward_template());
        index
    }

    pub fn add_route(&mut self, key: u64, instance: usize, template: SExpr) {
        self.routes.insert(Nat::small(key), Route { instance, template });
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.name == name)
    }

    pub fn kernel(&self, instance: usize) -> &Kernel {
        &self.instances[instance].kernel
    }

    fn submit_on(&mut self, instance: usize, tx: &Transaction) -> Result<(u64, crate::txn::Execution), ComposeError> {
        let inst = &mut self.instances[instance];
        let out = inst
            .kernel
            .submit(tx)
            .map_err(|e| ComposeError::Kernel(inst.name.clone(), e))?;
        Ok((out.seq, out.execution))
    }

    /// Submits `tx` on `instance` and routes the resulting externals, and
    /// theirs in turn, breadth first until none remain or the hop limit is
    /// reached.
    pub fn submit(&mut self, instance: usize, tx: &Transaction) -> Result<Cascade, ComposeError> {
        let (seq, exec) = self.submit_on(instance, tx)?;
        let mut cascade = Cascade {
            instance,
            seq,
            result: exec.result.clone(),
            deliveries: Vec::new(),
            dead_letters: Vec::new(),
        };
        let mut queue = VecDeque::from([(instance, seq, exec.externals, 0usize)]);
        while let Some((origin, origin_seq, externals, hop)) = queue.pop_front() {
            for (index, send) in externals.into_iter().enumerate() {
                let dead = |reason: &str| DeadLetter {
                    origin,
                    origin_seq,
                    index,
                    send: send.clone(),
                    reason: reason.to_owned(),
                };
                let Some((key, payload)) = parse_route_target(&send.target) else {
                    cascade.dead_letters.push(dead("target is not [7,[key,payload]]"));
                    continue;
                };
                let Some(route) = self.routes.get(&key) else {
                    cascade.dead_letters.push(dead(&format!("no route for key {key}")));
                    continue;
                };
                if hop >= self.max_hops {
                    cascade.dead_letters.push(dead("hop limit reached"));
                    continue;
                }
                let destination = route.instance;
                let routed = translate(&route.template, &payload, &send);
                let (destination_seq, exec) = self.submit_on(destination, &routed)?;
                cascade.deliveries.push(Delivery {
                    origin,
                    origin_seq,
                    index,
                    sender: send.sender.clone(),
                    destination,
                    destination_seq,
                    hop: hop + 1,
                    tx: routed,
                    result: exec.result.clone(),
                });
                queue.push_back((destination, destination_seq, exec.externals, hop + 1));
            }
        }
        Ok(cascade)
    }
}

impl Default for Composition {
    fn default() -> Composition {
        Composition::new()
    }
}

/// Topology file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    #[serde(default)]
    pub max_hops: Option<usize>,
    #[serde(rename = "instance", default)]
    pub instances: Vec<InstanceSpec>,
    #[serde(rename = "route", default)]
    pub routes: Vec<RouteSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub name: String,
    /// Routing key of the default forwarding route to this instance.
    pub key: u64,
    /// Hash-allocator salt; instances must use distinct salts.
    pub salt: String,
    /// Store file, relative to the topology file. In memory if absent.
    #[serde(default)]
    pub store: Option<PathBuf>,
    #[serde(default)]
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub key: u64,
    pub instance: String,
    /// Program template; the forwarding template if absent.
    #[serde(default)]
    pub template: Option<String>,
}

impl TopologyFile {
    pub fn parse(text: &str) -> Result<TopologyFile, ComposeError> {
        toml::from_str(text).map_err(|e| ComposeError::Topology(e.to_string()))
    }

    /// Opens every instance. Store paths are resolved against `base`.
    pub fn build(&self, base: &Path) -> Result<Composition, ComposeError> {
        let mut comp = Composition::new();
        if let Some(h) = self.max_hops {
            comp.max_hops = h;
        }
        let mut salts = BTreeSet::new();
        for spec in &self.instances {
            if !salts.insert(spec.salt.as_str()) {
                return Err(ComposeError::Topology(format!(
                    "salt {:?} is shared; identity spaces must be disjoint",
                    spec.salt
                )));
            }
            if comp.index_of(&spec.name).is_some() {
                return Err(ComposeError::Topology(format!("duplicate instance {:?}", spec.name)));
            }
            let mut config = KernelConfig::hash(spec.salt.as_bytes().to_vec());
            if let Some(b) = spec.budget {
                config.budget = b;
            }
            let kernel = match &spec.store {
                None => Kernel::in_memory(config),
                Some(p) => {
                    Kernel::open(&base.join(p), config)
                        .map_err(|e| ComposeError::Kernel(spec.name.clone(), e))?
                        .0
                }
            };
            comp.add(&spec.name, spec.key, kernel);
        }
        for r in &self.routes {
            let instance = comp
                .index_of(&r.instance)
                .ok_or_else(|| ComposeError::Topology(format!("route to unknown instance {:?}", r.instance)))?;
            let template = match &r.template {
                None => forward_template(),
                Some(t) => SExpr::parse(t)
                    .map_err(|e| ComposeError::Topology(format!("route {}: {e}", r.key)))?,
            };
            comp.add_route(r.key, instance, template);
        }
        Ok(comp)
    }
}

/// Scenario file: top-level submissions in order.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "step", default)]
    pub steps: Vec<StepSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub instance: String,
    /// The transaction `[p,i]`.
    pub tx: String,
    /// Expected result text (`ABORT` or an s-expression).
    #[serde(default)]
    pub expect: Option<String>,
}

/// A parsed, checked scenario step.
#[derive(Debug, Clone)]
pub struct Step {
    pub instance: usize,
    pub tx: Transaction,
    pub expect: Option<TxResult>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<ScenarioFile, ComposeError> {
        toml::from_str(text).map_err(|e| ComposeError::Scenario(e.to_string()))
    }

    /// Resolves instance names and parses every step before anything runs.
    pub fn resolve(&self, comp: &Composition) -> Result<Vec<Step>, ComposeError> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let err = |m: String| ComposeError::Scenario(format!("step {}: {m}", i + 1));
                let instance = comp
                    .index_of(&s.instance)
                    .ok_or_else(|| err(format!("unknown instance {:?}", s.instance)))?;
                let tx = SExpr::parse(&s.tx).map_err(|e| err(e.to_string()))?;
                let tx = Transaction::from_sexpr(&tx).ok_or_else(|| err("transaction must be a pair".into()))?;
                let expect = s
                    .expect
                    .as_deref()
                    .map(|t| {
                        if t == "ABORT" {
                            Ok(TxResult::Abort)
                        } else {
                            SExpr::parse(t).map(TxResult::Value).map_err(|e| err(e.to_string()))
                        }
                    })
                    .transpose()?;
                Ok(Step { instance, tx, expect })
            })
            .collect()
    }
}

/// The outcome of a scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub names: Vec<String>,
    pub steps: Vec<(Step, Cascade)>,
}

impl ScenarioReport {
    pub fn mismatches(&self) -> usize {
        self.steps
            .iter()
            .filter(|(s, c)| s.expect.as_ref().is_some_and(|e| *e != c.result))
            .count()
    }

    pub fn dead_letters(&self) -> usize {
        self.steps.iter().map(|(_, c)| c.dead_letters.len()).sum()
    }

    /// One line per submission and per routed delivery or dead letter.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, (step, c)) in self.steps.iter().enumerate() {
            let check = match &step.expect {
                Some(e) if *e != c.result => format!(" MISMATCH (expected {})", e.to_text()),
                _ => String::new(),
            };
            out.push(format!(
                "step {} {} seq {} {} {}{check}",
                i + 1,
                self.names[c.instance],
                c.seq,
                status(&c.result),
                c.result.to_text()
            ));
            for d in &c.deliveries {
                out.push(format!(
                    "  route {}#{}.{} from {} -> {} seq {} hop {} {} {}",
                    self.names[d.origin],
                    d.origin_seq,
                    d.index,
                    d.sender,
                    self.names[d.destination],
                    d.destination_seq,
                    d.hop,
                    status(&d.result),
                    d.result.to_text()
                ));
            }
            for d in &c.dead_letters {
                out.push(format!(
                    "  dead-letter {}#{}.{} target {}: {}",
                    self.names[d.origin],
                    d.origin_seq,
                    d.index,
                    d.send.target.print(),
                    d.reason
                ));
            }
        }
        out
    }
}

fn status(r: &TxResult) -> &'static str {
    if r.is_abort() {
        "ABORT"
    } else {
        "COMMIT"
    }
}

/// Runs resolved steps in order.
pub fn run_scenario(comp: &mut Composition, steps: Vec<Step>) -> Result<ScenarioReport, ComposeError> {
    let mut report = ScenarioReport {
        names: comp.instances.iter().map(|i| i.name.clone()).collect(),
        steps: Vec::new(),
    };
    for step in steps {
        let cascade = comp.submit(step.instance, &step.tx)?;
        report.steps.push((step, cascade));
    }
    Ok(report)
}

/// Outcome of feeding one `T` to several fresh replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicationReport {
    pub replicas: usize,
    pub transactions: usize,
    /// `(replica, seq)` of the first replica state that differs from replica 0.
    pub divergence: Option<(usize, u64)>,
}

impl ReplicationReport {
    pub fn ok(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Applies `txs` in order to one fresh instance per configuration and
/// compares each replica's result and delta with replica 0 at every step.
pub fn replicate_with(txs: &[Transaction], configs: &[KernelConfig]) -> ReplicationReport {
    let mut states: Vec<KernelState> = configs.iter().map(|_| KernelState::new()).collect();
    let mut divergence = None;
    'outer: for (i, tx) in txs.iter().enumerate() {
        let mut reference: Option<(TxResult, Vec<LogEntry>)> = None;
        for (r, (k, cfg)) in states.iter_mut().zip(configs).enumerate() {
            let exec = execute(k, tx, cfg);
            let this = (exec.result.clone(), exec.delta.clone());
            k.extend(exec.delta);
            match &reference {
                None => reference = Some(this),
                Some(reference) if *reference != this => {
                    divergence = Some((r, i as u64 + 1));
                    break 'outer;
                }
                Some(_) => {}
            }
        }
    }
    if divergence.is_none() {
        if let Some(first) = states.first() {
            let text = first.canonical_text();
            divergence = states
                .iter()
                .position(|k| k.canonical_text() != text)
                .map(|r| (r, txs.len() as u64));
        }
    }
    ReplicationReport {
        replicas: configs.len(),
        transactions: txs.len(),
        divergence,
    }
}

/// Replays the recorded `T` of a store on `replicas` fresh instances.
pub fn replicate(records: &[DurableRecord], config: &KernelConfig, replicas: usize) -> ReplicationReport {
    let txs: Vec<Transaction> = records.iter().filter_map(|r| Transaction::from_sexpr(&r.tx)).collect();
    replicate_with(&txs, &vec![config.clone(); replicas])
}

/// Fault-injection built-ins: INCREMENT adds two. Used to show that
/// replication detects a replica whose primitives differ.
#[derive(Debug, Clone, Copy, Default)]
pub struct SkewedIncrement;

impl Builtins for SkewedIncrement {
    fn apply(&self, n: &Nat, m: &SExpr) -> Option<SExpr> {
        let r = StandardBuiltins.apply(n, m)?;
        if n.is(atoms::INCREMENT) {
            r.as_atom().map(|a| SExpr::nat(a.succ()))
        } else {
            Some(r)
        }
    }
}

/// The part of `k` that belongs to `objects`: their logs and their
/// registry entries in the kernel log.
pub fn project(k: &KernelState, objects: &BTreeSet<Nat>) -> KernelState {
    KernelState::from_entries(k.entries().iter().filter(|e| {
        objects.contains(&e.receiver)
            || (e.receiver.is(atoms::KERNEL) && e.message.as_atom().is_some_and(|n| objects.contains(n)))
    }).cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::fixtures::{create_tx, echo_caller_program, send_tx};

    fn two_instances() -> (Composition, Nat, Nat) {
        let mut comp = Composition::new();
        comp.add("alpha", 1001, Kernel::in_memory(KernelConfig::hash(b"alpha".to_vec())));
        comp.add("beta", 1002, Kernel::in_memory(KernelConfig::hash(b"beta".to_vec())));
        let a = comp.submit(0, &create_tx(&[emitter_program()])).unwrap();
        let b = comp.submit(1, &create_tx(&[echo_caller_program()])).unwrap();
        let a = a.result.value().unwrap().as_atom().unwrap().clone();
        let b = b.result.value().unwrap().as_atom().unwrap().clone();
        (comp, a, b)
    }

    /// Message `[target, message]`: emits an external send to `target` and
    /// returns 0.
    fn emitter_program() -> SExpr {
        let mut a = Asm::new();
        let t = a.head(Asm::MESSAGE);
        let m = a.tail(Asm::MESSAGE);
        a.send(t, m);
        a.ret(0)
    }

    fn emit(obj: &Nat, key: u64, payload: &Nat, msg: u64) -> Transaction {
        send_tx(
            SExpr::nat(obj.clone()),
            SExpr::pair(route_target(key, SExpr::nat(payload.clone())), SExpr::atom(msg)),
        )
    }

    #[test]
    fn routed_send_arrives_from_external_identity() {
        let (mut comp, a, b) = two_instances();
        let c = comp.submit(0, &emit(&a, 1002, &b, 77)).unwrap();
        assert_eq!(c.deliveries.len(), 1);
        let d = &c.deliveries[0];
        assert_eq!(d.sender, a);
        assert_eq!(d.destination, 1);
        assert_eq!(d.result, TxResult::Value(SExpr::pair(SExpr::atom(1), SExpr::atom(77))));
        let log = comp.kernel(1).state().k.log_of(&b);
        assert_eq!(log.last().unwrap().0, Nat::small(1));
    }

    #[test]
    fn abort_at_origin_routes_nothing() {
        let (mut comp, a, b) = two_instances();
        let mut p = Asm::new();
        p.send(SExpr::nat(a.clone()), SExpr::pair(route_target(1002, SExpr::nat(b)), SExpr::atom(1)));
        let c = comp.submit(0, &Transaction::new(p.fail(), SExpr::ZERO)).unwrap();
        assert!(c.result.is_abort());
        assert!(c.deliveries.is_empty() && c.dead_letters.is_empty());
    }

    #[test]
    fn unknown_key_is_a_dead_letter() {
        let (mut comp, a, b) = two_instances();
        let c = comp.submit(0, &emit(&a, 4242, &b, 1)).unwrap();
        assert!(c.deliveries.is_empty());
        assert_eq!(c.dead_letters.len(), 1);
    }

    #[test]
    fn self_routed_send_is_a_new_transaction_on_the_origin() {
        let (mut comp, a, _) = two_instances();
        let echo = comp.submit(0, &create_tx(&[echo_caller_program()])).unwrap();
        let echo = echo.result.value().unwrap().as_atom().unwrap().clone();
        let before = comp.kernel(0).state().t.len();
        let c = comp.submit(0, &emit(&a, 1001, &echo, 5)).unwrap();
        assert_eq!(c.deliveries[0].destination, 0);
        assert_eq!(comp.kernel(0).state().t.len(), before + 2);
        assert_eq!(comp.kernel(0).state().k.log_of(&echo).last().unwrap().0, Nat::small(1));
    }

    #[test]
    fn ping_pong_stops_at_hop_limit() {
        // An object that re-emits every message to itself through the router.
        let mut comp = Composition::new();
        comp.max_hops = 5;
        comp.add("solo", 7, Kernel::in_memory(KernelConfig::sequential()));
        let mut p = Asm::new();
        let self_target = p.pair(7, Asm::SELF);
        let t = p.pair(atoms::EXTERNAL_TAG, self_target);
        p.send(t, Asm::MESSAGE);
        let looping = p.ret(0);
        let id = comp.submit(0, &create_tx(&[looping])).unwrap();
        let id = id.result.value().unwrap().clone();
        let c = comp.submit(0, &send_tx(id, SExpr::atom(3))).unwrap();
        assert_eq!(c.deliveries.len(), 5);
        assert_eq!(c.dead_letters.len(), 1);
        assert_eq!(c.dead_letters[0].reason, "hop limit reached");
    }

    #[test]
    fn replicas_agree_unless_a_builtin_differs() {
        let txs: Vec<Transaction> = crate::patterns::fixtures::clone_and_bootloader().transactions();
        let cfg = KernelConfig::sequential();
        assert!(replicate_with(&txs, &vec![cfg.clone(); 3]).ok());
        assert!(replicate_with(&txs, &[cfg.clone()]).ok());
        let skewed = cfg.clone().with_builtins(std::sync::Arc::new(SkewedIncrement));
        let report = replicate_with(&txs, &[cfg.clone(), cfg, skewed]);
        assert_eq!(report.divergence.map(|d| d.0), Some(2));
    }

    #[test]
    fn topology_and_scenario_files() {
        let topo = TopologyFile::parse(
            r#"
            [[instance]]
            name = "alpha"
            key = 1001
            salt = "a"

            [[instance]]
            name = "beta"
            key = 1002
            salt = "b"
            "#,
        )
        .unwrap();
        let mut comp = topo.build(Path::new(".")).unwrap();
        let tx = Transaction::new(echo_caller_program(), SExpr::atom(9));
        let scenario = ScenarioFile::parse(&format!(
            "[[step]]\ninstance = \"beta\"\ntx = \"{}\"\nexpect = \"[1,9]\"\n",
            tx.to_sexpr().print()
        ))
        .unwrap();
        let steps = scenario.resolve(&comp).unwrap();
        let report = run_scenario(&mut comp, steps).unwrap();
        assert_eq!(report.steps.len(), 1);
        assert_eq!(report.mismatches(), 0);
        assert!(TopologyFile::parse("[[instance]]\nname='x'\nkey=1\nsalt='s'\n[[instance]]\nname='y'\nkey=2\nsalt='s'\n")
            .unwrap()
            .build(Path::new("."))
            .is_err());
    }
}
