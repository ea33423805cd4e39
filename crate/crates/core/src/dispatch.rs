//! Send-target classification, the pure built-ins, pair-form dispatch and
//! identity allocation.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::sexpr::{Nat, SExpr};
use crate::state::StateView;

/// Reserved atoms. Everything below [`atoms::FIRST_IDENTITY`] is fixed and
/// never handed out by an allocator.
pub mod atoms {
    pub const KERNEL: u64 = 0;
    pub const EXTERNAL: u64 = 1;
    pub const SEND: u64 = 2;
    pub const RECALL: u64 = 3;
    pub const FAIL: u64 = 4;
    pub const QUOTE: u64 = 5;
    pub const PAIR_TAG: u64 = 6;
    pub const EXTERNAL_TAG: u64 = 7;
    pub const HEAD: u64 = 8;
    pub const TAIL: u64 = 9;
    pub const PAIR: u64 = 10;
    pub const EQUAL: u64 = 11;
    pub const BRANCH: u64 = 12;
    pub const INCREMENT: u64 = 13;
    pub const FIRST_IDENTITY: u64 = 14;

    /// `true` for the built-in range `[8, 14)`.
    pub fn is_builtin(n: &crate::sexpr::Nat) -> bool {
        n.as_u64().is_some_and(|v| (HEAD..FIRST_IDENTITY).contains(&v))
    }
}

/// Which of the send cases applies to a target. First match wins, in
/// declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DispatchCase {
    Builtin,
    Kernel,
    Persistent,
    PairForm,
    External,
    Ephemeral,
    Invalid,
}

impl DispatchCase {
    pub const ALL: [DispatchCase; 7] = [
        DispatchCase::Builtin,
        DispatchCase::Kernel,
        DispatchCase::Persistent,
        DispatchCase::PairForm,
        DispatchCase::External,
        DispatchCase::Ephemeral,
        DispatchCase::Invalid,
    ];
}

impl fmt::Display for DispatchCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DispatchCase::Builtin => "BUILTIN",
            DispatchCase::Kernel => "KERNEL",
            DispatchCase::Persistent => "PERSISTENT",
            DispatchCase::PairForm => "PAIR_FORM",
            DispatchCase::External => "EXTERNAL",
            DispatchCase::Ephemeral => "EPHEMERAL",
            DispatchCase::Invalid => "INVALID",
        };
        f.write_str(s)
    }
}

/// Classifies a send target against a state view.
pub fn classify(target: &SExpr, view: &StateView<'_>) -> DispatchCase {
    match target {
        SExpr::Atom(n) => {
            if atoms::is_builtin(n) {
                DispatchCase::Builtin
            } else if n.is(atoms::KERNEL) {
                DispatchCase::Kernel
            } else if view.exists(n) {
                DispatchCase::Persistent
            } else {
                DispatchCase::Invalid
            }
        }
        SExpr::Pair(_) => classify_pair(target),
    }
}

/// Classification of pair targets; independent of state.
pub fn classify_pair(target: &SExpr) -> DispatchCase {
    match target.head() {
        Some(h) if h.is_atom_value(atoms::PAIR_TAG) => DispatchCase::PairForm,
        Some(h) if h.is_atom_value(atoms::EXTERNAL_TAG) => DispatchCase::External,
        Some(_) => DispatchCase::Ephemeral,
        None => DispatchCase::Invalid,
    }
}

/// Pair-form dispatch: `[6,a]` applied to `m` is `[a,m]`.
pub fn pair_form(target: &SExpr, message: &SExpr) -> Option<SExpr> {
    match target.as_pair() {
        Some((h, a)) if h.is_atom_value(atoms::PAIR_TAG) => {
            Some(SExpr::pair(a.clone(), message.clone()))
        }
        _ => None,
    }
}

/// The standard built-in table. `None` is the undefined result, which aborts
/// the enclosing transaction.
pub fn builtin(n: &Nat, m: &SExpr) -> Option<SExpr> {
    match n.as_u64()? {
        atoms::HEAD => m.head().cloned(),
        atoms::TAIL => m.tail().cloned(),
        atoms::PAIR => Some(SExpr::pair(SExpr::atom(atoms::PAIR_TAG), m.clone())),
        atoms::EQUAL => {
            let (a, b) = m.as_pair()?;
            if a.equal(b) {
                Some(SExpr::ZERO)
            } else {
                Some(m.clone())
            }
        }
        atoms::BRANCH => {
            let (t, rest) = m.as_pair()?;
            let (x, rest) = rest.as_pair()?;
            let (y, _) = rest.as_pair()?;
            Some(if t.is_atom() { x.clone() } else { y.clone() })
        }
        atoms::INCREMENT => m.as_atom().map(|k| SExpr::nat(k.succ())),
        _ => None,
    }
}

/// The behaviour behind the built-in atoms. Membership of the built-in range
/// is fixed; only the functions may be swapped (replica fault injection uses
/// this).
pub trait Builtins: Send + Sync + fmt::Debug {
    fn apply(&self, n: &Nat, m: &SExpr) -> Option<SExpr>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StandardBuiltins;

impl Builtins for StandardBuiltins {
    fn apply(&self, n: &Nat, m: &SExpr) -> Option<SExpr> {
        builtin(n, m)
    }
}

/// Identity allocation policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Allocator {
    /// `14 + |log(0, K ++ Δ)|`.
    Sequential,
    /// SHA-256 of the salt and the registry length, offset past the reserved
    /// range.
    Hash { salt: Vec<u8> },
}

const HASH_DOMAIN: &[u8] = b"objkernel/alloc/sha256/v1";

impl Allocator {
    pub fn alloc(&self, view: &StateView<'_>) -> Nat {
        match self {
            Allocator::Sequential => alloc_sequential(view),
            Allocator::Hash { salt } => alloc_hash(view, salt),
        }
    }

    /// Short name used in store headers and on the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Allocator::Sequential => "seq",
            Allocator::Hash { .. } => "hash",
        }
    }
}

impl Default for Allocator {
    fn default() -> Allocator {
        Allocator::Sequential
    }
}

pub fn alloc_sequential(view: &StateView<'_>) -> Nat {
    Nat::small(atoms::FIRST_IDENTITY).checked_add_u64(view.registry_len() as u64)
}

pub fn alloc_hash(view: &StateView<'_>, salt: &[u8]) -> Nat {
    let registry_len = view.registry_len() as u64;
    let mut nonce = 0u64;
    loop {
        let id = hash_identity(salt, registry_len, nonce);
        if !view.exists(&id) {
            return id;
        }
        nonce += 1;
    }
}

fn hash_identity(salt: &[u8], registry_len: u64, nonce: u64) -> Nat {
    let mut h = Sha256::new();
    h.update(HASH_DOMAIN);
    h.update((salt.len() as u64).to_be_bytes());
    h.update(salt);
    h.update(registry_len.to_be_bytes());
    h.update(nonce.to_be_bytes());
    let digest = h.finalize();
    let n = num_bigint::BigUint::from_bytes_be(&digest[..]) + atoms::FIRST_IDENTITY;
    Nat::from_biguint(n)
}
