//! Static data race detection with false-positive pruning, plus a
//! deterministic record/replay runtime for MTC, a small threaded language.

pub mod error;
pub mod frontend;
pub mod instrument;
pub mod lockset;
pub mod prune_array;
pub mod prune_init;
pub mod runtime;

use sha2::{Digest, Sha256};

pub use error::{Error, Result};

/// Hex SHA-256 of the canonical printing of `p` (annotations included).
pub fn program_digest(p: &frontend::Program) -> String {
    let text = frontend::print_program(p);
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
