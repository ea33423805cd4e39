//! The universal datum: s-expressions over the natural numbers.
//!
//! Every value the kernel touches (programs, messages, identities, encoded
//! logs) is an [`SExpr`]. Atoms are arbitrary-precision naturals; pairs are
//! immutable and shared through `Arc`, so cloning is cheap and values may be
//! handed across threads freely.
//!
//! Logs are long right-nested chains, so nothing in this module recurses on
//! the host stack: equality, hashing, printing, parsing and even `Drop` all
//! run over explicit worklists.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// An unbounded natural number.
///
/// Values that fit in a `u64` are stored inline; larger values (for example
/// hash-allocated identities) fall back to a shared `BigUint`. The
/// representation is normalised, so derived equality and ordering are exact.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nat(Repr);

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Repr {
    Small(u64),
    Big(Arc<BigUint>),
}

impl Nat {
    pub const fn small(n: u64) -> Nat {
        Nat(Repr::Small(n))
    }

    pub fn from_biguint(n: BigUint) -> Nat {
        match u64::try_from(&n) {
            Ok(v) => Nat(Repr::Small(v)),
            Err(_) => Nat(Repr::Big(Arc::new(n))),
        }
    }

    pub fn from_bytes_be(bytes: &[u8]) -> Nat {
        Nat::from_biguint(BigUint::from_bytes_be(bytes))
    }

    pub fn as_u64(&self) -> Option<u64> {
        match &self.0 {
            Repr::Small(v) => Some(*v),
            Repr::Big(_) => None,
        }
    }

    pub fn to_biguint(&self) -> BigUint {
        match &self.0 {
            Repr::Small(v) => BigUint::from(*v),
            Repr::Big(b) => (**b).clone(),
        }
    }

    /// `true` iff this natural equals `n`.
    #[inline]
    pub fn is(&self, n: u64) -> bool {
        matches!(self.0, Repr::Small(v) if v == n)
    }

    pub fn succ(&self) -> Nat {
        match &self.0 {
            Repr::Small(v) => match v.checked_add(1) {
                Some(w) => Nat(Repr::Small(w)),
                None => Nat::from_biguint(BigUint::from(*v) + 1u32),
            },
            Repr::Big(b) => Nat::from_biguint(&**b + 1u32),
        }
    }

    pub fn checked_add_u64(&self, n: u64) -> Nat {
        match &self.0 {
            Repr::Small(v) => match v.checked_add(n) {
                Some(w) => Nat(Repr::Small(w)),
                None => Nat::from_biguint(BigUint::from(*v) + n),
            },
            Repr::Big(b) => Nat::from_biguint(&**b + n),
        }
    }
}

impl From<u64> for Nat {
    fn from(n: u64) -> Nat {
        Nat::small(n)
    }
}

impl From<BigUint> for Nat {
    fn from(n: BigUint) -> Nat {
        Nat::from_biguint(n)
    }
}

impl fmt::Display for Nat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(v) => write!(f, "{v}"),
            Repr::Big(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Debug for Nat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Nat {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Nat, ParseError> {
        let bytes = s.as_bytes();
        let end = scan_digits(bytes, 0)?;
        if end != bytes.len() {
            return Err(ParseError::new(end, "trailing input after natural"));
        }
        Ok(nat_from_digits(s))
    }
}

impl Serialize for Nat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Nat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Nat, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An s-expression: an atom or an ordered pair of s-expressions.
#[derive(Clone)]
pub enum SExpr {
    Atom(Nat),
    Pair(Arc<PairNode>),
}

/// Storage for a pair. Only reachable through [`SExpr::Pair`].
pub struct PairNode {
    head: SExpr,
    tail: SExpr,
}

const PLACEHOLDER: SExpr = SExpr::Atom(Nat::small(0));

impl Drop for PairNode {
    fn drop(&mut self) {
        // Unlink uniquely owned children iteratively so long chains do not
        // recurse through nested destructors.
        let mut pending = Vec::new();
        for child in [
            std::mem::replace(&mut self.head, PLACEHOLDER),
            std::mem::replace(&mut self.tail, PLACEHOLDER),
        ] {
            if let SExpr::Pair(node) = child {
                pending.push(node);
            }
        }
        while let Some(node) = pending.pop() {
            if let Ok(mut inner) = Arc::try_unwrap(node) {
                for child in [
                    std::mem::replace(&mut inner.head, PLACEHOLDER),
                    std::mem::replace(&mut inner.tail, PLACEHOLDER),
                ] {
                    if let SExpr::Pair(n) = child {
                        pending.push(n);
                    }
                }
            }
        }
    }
}

impl SExpr {
    pub const ZERO: SExpr = SExpr::Atom(Nat::small(0));

    pub const fn atom(n: u64) -> SExpr {
        SExpr::Atom(Nat::small(n))
    }

    pub fn nat(n: Nat) -> SExpr {
        SExpr::Atom(n)
    }

    pub fn pair(head: SExpr, tail: SExpr) -> SExpr {
        SExpr::Pair(Arc::new(PairNode { head, tail }))
    }

    /// Builds the 0-terminated chain `[x0,[x1,[...,0]]]`.
    pub fn list<I>(items: I) -> SExpr
    where
        I: IntoIterator<Item = SExpr>,
        I::IntoIter: DoubleEndedIterator,
    {
        items
            .into_iter()
            .rev()
            .fold(SExpr::ZERO, |acc, x| SExpr::pair(x, acc))
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, SExpr::Atom(_))
    }

    pub fn is_pair(&self) -> bool {
        matches!(self, SExpr::Pair(_))
    }

    pub fn as_atom(&self) -> Option<&Nat> {
        match self {
            SExpr::Atom(n) => Some(n),
            SExpr::Pair(_) => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&SExpr, &SExpr)> {
        match self {
            SExpr::Atom(_) => None,
            SExpr::Pair(p) => Some((&p.head, &p.tail)),
        }
    }

    pub fn head(&self) -> Option<&SExpr> {
        self.as_pair().map(|(h, _)| h)
    }

    pub fn tail(&self) -> Option<&SExpr> {
        self.as_pair().map(|(_, t)| t)
    }

    /// `true` iff this is the atom `n`.
    #[inline]
    pub fn is_atom_value(&self, n: u64) -> bool {
        matches!(self, SExpr::Atom(a) if a.is(n))
    }

    /// Structural equality.
    pub fn equal(&self, other: &SExpr) -> bool {
        let mut work: Vec<(&SExpr, &SExpr)> = vec![(self, other)];
        while let Some((a, b)) = work.pop() {
            match (a, b) {
                (SExpr::Atom(x), SExpr::Atom(y)) => {
                    if x != y {
                        return false;
                    }
                }
                (SExpr::Pair(p), SExpr::Pair(q)) => {
                    if Arc::ptr_eq(p, q) {
                        continue;
                    }
                    work.push((&p.tail, &q.tail));
                    work.push((&p.head, &q.head));
                }
                _ => return false,
            }
        }
        true
    }

    /// Canonical text: minimal decimal atoms, `[head,tail]` pairs, no
    /// whitespace.
    pub fn print(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    fn write_canonical(&self, out: &mut String) {
        use std::fmt::Write as _;
        enum Task<'a> {
            Expr(&'a SExpr),
            Lit(&'static str),
        }
        let mut work = vec![Task::Expr(self)];
        while let Some(task) = work.pop() {
            match task {
                Task::Lit(s) => out.push_str(s),
                Task::Expr(SExpr::Atom(n)) => {
                    let _ = write!(out, "{n}");
                }
                Task::Expr(SExpr::Pair(p)) => {
                    out.push('[');
                    work.push(Task::Lit("]"));
                    work.push(Task::Expr(&p.tail));
                    work.push(Task::Lit(","));
                    work.push(Task::Expr(&p.head));
                }
            }
        }
    }

    /// Parses the canonical grammar, tolerating ASCII whitespace between
    /// tokens.
    pub fn parse(text: &str) -> Result<SExpr, ParseError> {
        enum Frame {
            Head,
            Tail(SExpr),
        }
        let bytes = text.as_bytes();
        let mut pos = 0usize;
        let mut stack: Vec<Frame> = Vec::new();
        loop {
            pos = skip_ws(bytes, pos);
            let mut value = match bytes.get(pos) {
                Some(b'[') => {
                    stack.push(Frame::Head);
                    pos += 1;
                    continue;
                }
                Some(b) if b.is_ascii_digit() => {
                    let end = scan_digits(bytes, pos)?;
                    let v = SExpr::Atom(nat_from_digits(&text[pos..end]));
                    pos = end;
                    v
                }
                Some(_) => return Err(ParseError::new(pos, "expected '[' or a natural")),
                None => return Err(ParseError::new(pos, "unexpected end of input")),
            };
            loop {
                match stack.pop() {
                    None => {
                        pos = skip_ws(bytes, pos);
                        if pos != bytes.len() {
                            return Err(ParseError::new(pos, "trailing input"));
                        }
                        return Ok(value);
                    }
                    Some(Frame::Head) => {
                        pos = expect(bytes, skip_ws(bytes, pos), b',')?;
                        stack.push(Frame::Tail(value));
                        break;
                    }
                    Some(Frame::Tail(head)) => {
                        pos = expect(bytes, skip_ws(bytes, pos), b']')?;
                        value = SExpr::pair(head, value);
                    }
                }
            }
        }
    }

    /// Parses and additionally requires the input to be byte-identical to its
    /// canonical form.
    pub fn parse_canonical(text: &str) -> Result<SExpr, ParseError> {
        let x = SExpr::parse(text)?;
        let printed = x.print();
        if printed != text {
            let at = printed
                .bytes()
                .zip(text.bytes())
                .position(|(a, b)| a != b)
                .unwrap_or_else(|| printed.len().min(text.len()));
            return Err(ParseError::new(at, "input is not in canonical form"));
        }
        Ok(x)
    }
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn expect(bytes: &[u8], pos: usize, want: u8) -> Result<usize, ParseError> {
    match bytes.get(pos) {
        Some(&b) if b == want => Ok(pos + 1),
        Some(_) => Err(ParseError::new(
            pos,
            match want {
                b',' => "expected ','",
                _ => "expected ']'",
            },
        )),
        None => Err(ParseError::new(pos, "unexpected end of input")),
    }
}

fn scan_digits(bytes: &[u8], start: usize) -> Result<usize, ParseError> {
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(ParseError::new(start, "expected a natural"));
    }
    if bytes[start] == b'0' && end - start > 1 {
        return Err(ParseError::new(start, "leading zero in natural"));
    }
    Ok(end)
}

fn nat_from_digits(digits: &str) -> Nat {
    match digits.parse::<u64>() {
        Ok(v) => Nat::small(v),
        Err(_) => Nat::from_biguint(
            BigUint::parse_bytes(digits.as_bytes(), 10).expect("digits already validated"),
        ),
    }
}

/// Malformed s-expression text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: &'static str,
}

impl ParseError {
    fn new(offset: usize, message: &'static str) -> ParseError {
        ParseError { offset, message }
    }
}

impl PartialEq for SExpr {
    fn eq(&self, other: &SExpr) -> bool {
        self.equal(other)
    }
}

impl Eq for SExpr {}

impl Hash for SExpr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let mut work = vec![self];
        while let Some(x) = work.pop() {
            match x {
                SExpr::Atom(n) => {
                    0u8.hash(state);
                    n.hash(state);
                }
                SExpr::Pair(p) => {
                    1u8.hash(state);
                    work.push(&p.tail);
                    work.push(&p.head);
                }
            }
        }
    }
}

impl PartialOrd for SExpr {
    fn partial_cmp(&self, other: &SExpr) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Atoms before pairs, atoms by value, pairs lexicographically. Only used to
/// give collections a deterministic order.
impl Ord for SExpr {
    fn cmp(&self, other: &SExpr) -> Ordering {
        let mut work: Vec<(&SExpr, &SExpr)> = vec![(self, other)];
        while let Some((a, b)) = work.pop() {
            let ord = match (a, b) {
                (SExpr::Atom(x), SExpr::Atom(y)) => x.cmp(y),
                (SExpr::Atom(_), SExpr::Pair(_)) => Ordering::Less,
                (SExpr::Pair(_), SExpr::Atom(_)) => Ordering::Greater,
                (SExpr::Pair(p), SExpr::Pair(q)) => {
                    if !Arc::ptr_eq(p, q) {
                        work.push((&p.tail, &q.tail));
                        work.push((&p.head, &q.head));
                    }
                    Ordering::Equal
                }
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.print())
    }
}

impl fmt::Debug for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.print())
    }
}

impl FromStr for SExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<SExpr, ParseError> {
        SExpr::parse(s)
    }
}

impl From<u64> for SExpr {
    fn from(n: u64) -> SExpr {
        SExpr::atom(n)
    }
}

impl From<Nat> for SExpr {
    fn from(n: Nat) -> SExpr {
        SExpr::Atom(n)
    }
}

impl Serialize for SExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.print())
    }
}

impl<'de> Deserialize<'de> for SExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<SExpr, D::Error> {
        let s = String::deserialize(d)?;
        SExpr::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `sx!(1, 2, 3)` builds `[1,[2,3]]`; `sx!(n)` builds an atom. Elements may
/// be any expression convertible into [`SExpr`].
#[macro_export]
macro_rules! sx {
    ($x:expr) => { $crate::sexpr::SExpr::from($x) };
    ($x:expr, $($rest:expr),+) => {
        $crate::sexpr::SExpr::pair($crate::sexpr::SExpr::from($x), $crate::sx!($($rest),+))
    };
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a(n: u64) -> SExpr {
        SExpr::atom(n)
    }

    #[test]
    fn equality_clauses() {
        assert!(a(5).equal(&a(5)));
        assert!(!a(0).equal(&SExpr::pair(a(0), a(0))));
        assert!(!SExpr::pair(a(1), a(2)).equal(&SExpr::pair(a(1), a(3))));
    }

    #[test]
    fn parse_examples() {
        assert_eq!(SExpr::parse("5").unwrap(), a(5));
        assert_eq!(
            SExpr::parse("[1,[2,0]]").unwrap(),
            SExpr::pair(a(1), SExpr::pair(a(2), a(0)))
        );
        assert_eq!(
            SExpr::parse("[[14,100],0]").unwrap(),
            SExpr::pair(SExpr::pair(a(14), a(100)), a(0))
        );
        assert_eq!(SExpr::parse(" [ 1 ,\n 2 ] ").unwrap(), SExpr::pair(a(1), a(2)));
    }

    #[test]
    fn print_examples() {
        assert_eq!(a(0).print(), "0");
        assert_eq!(sx!(16, 42, 200).print(), "[16,[42,200]]");
    }

    #[test]
    fn parse_errors_carry_offsets() {
        assert_eq!(SExpr::parse("[1,2").unwrap_err().offset, 4);
        assert_eq!(SExpr::parse("[1 2]").unwrap_err().offset, 3);
        assert_eq!(SExpr::parse("01").unwrap_err().offset, 0);
        assert_eq!(SExpr::parse("").unwrap_err().offset, 0);
        assert_eq!(SExpr::parse("[1,2]]").unwrap_err().offset, 5);
        assert_eq!(SExpr::parse("[x,2]").unwrap_err().offset, 1);
        assert!(SExpr::parse("-1").is_err());
    }

    #[test]
    fn canonical_parse_rejects_whitespace() {
        assert!(SExpr::parse_canonical("[1,2]").is_ok());
        assert!(SExpr::parse_canonical("[1, 2]").is_err());
    }

    #[test]
    fn big_atoms_round_trip() {
        let text = "340282366920938463463374607431768211457";
        let x = SExpr::parse(text).unwrap();
        assert_eq!(x.print(), text);
        assert!(x.as_atom().unwrap().as_u64().is_none());
        let max = SExpr::atom(u64::MAX);
        let next = SExpr::Atom(max.as_atom().unwrap().succ());
        assert_eq!(next.print(), "18446744073709551616");
        assert_eq!(SExpr::parse("18446744073709551615").unwrap(), max);
    }

    #[test]
    fn deep_chains_do_not_overflow() {
        let n = 300_000;
        let chain = SExpr::list((0..n).map(SExpr::atom));
        let text = chain.print();
        let back = SExpr::parse(&text).unwrap();
        assert_eq!(back, chain);
        let mut h1 = std::collections::hash_map::DefaultHasher::new();
        back.hash(&mut h1);
        assert_eq!(back.cmp(&chain), Ordering::Equal);
        let left = (0..n).fold(a(0), |acc, i| SExpr::pair(acc, a(i)));
        let left2 = SExpr::parse(&left.print()).unwrap();
        assert_eq!(left, left2);
        drop(left);
        drop(left2);
    }

    pub(crate) fn arb_sexpr() -> impl Strategy<Value = SExpr> {
        let leaf = prop_oneof![
            (0u64..20).prop_map(SExpr::atom),
            any::<u64>().prop_map(SExpr::atom),
            proptest::collection::vec(any::<u8>(), 9..24)
                .prop_map(|b| SExpr::Atom(Nat::from_bytes_be(&b))),
        ];
        leaf.prop_recursive(8, 64, 2, |inner| {
            (inner.clone(), inner).prop_map(|(h, t)| SExpr::pair(h, t))
        })
    }

    proptest! {
        #[test]
        fn round_trip(x in arb_sexpr()) {
            let text = x.print();
            prop_assert_eq!(SExpr::parse(&text).unwrap(), x.clone());
            prop_assert_eq!(SExpr::parse_canonical(&text).unwrap(), x);
        }

        #[test]
        fn print_is_injective(x in arb_sexpr(), y in arb_sexpr()) {
            prop_assert_eq!(x == y, x.print() == y.print());
        }

        #[test]
        fn equality_is_an_equivalence(x in arb_sexpr(), y in arb_sexpr(), z in arb_sexpr()) {
            prop_assert!(x.equal(&x));
            prop_assert_eq!(x.equal(&y), y.equal(&x));
            if x.equal(&y) && y.equal(&z) {
                prop_assert!(x.equal(&z));
            }
            // a structurally rebuilt copy is equal but not pointer-identical
            let copy = SExpr::parse(&x.print()).unwrap();
            prop_assert!(copy.equal(&x));
        }
    }
}
