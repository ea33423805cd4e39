//! Program construction and executable pattern fixtures.
//!
//! - [`asm`]: an assembler emitting programs for the interpreter;
//! - [`checkpoint`]: the checkpoint transform for fold-structured programs;
//! - [`fixtures`]: delegation, auction, escrow and clone/bootloader scenarios
//!   with their expected traces.

pub mod asm;
pub mod checkpoint;
pub mod fixtures;

pub use asm::{Asm, Slot, Val};

/// Message tags used by the fixtures. All sit far above any identity the
/// sequential allocator reaches in a fixture, which the fixtures check.
pub mod tags {
    pub const CHECKPOINT: u64 = 9000;
    pub const REGISTER: u64 = 9001;
    pub const STORE: u64 = 9002;
    pub const REVEAL: u64 = 9003;
    pub const REVEAL_ALL: u64 = 9004;
    pub const INIT: u64 = 9005;
    pub const TRACK: u64 = 9006;
    pub const DEPOSIT: u64 = 9007;
    pub const SPAWN: u64 = 9008;
    pub const CONFIRM: u64 = 9009;
    pub const QUERY: u64 = 9010;
    pub const COMPLETE: u64 = 9011;
    pub const KV_PUT: u64 = 9021;
    pub const KV_GET: u64 = 9022;
    /// Lowest tag; fixtures assert every allocated identity is below it.
    pub const FLOOR: u64 = CHECKPOINT;
}
