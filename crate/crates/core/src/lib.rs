//! Serial data-structure specifications turned into concurrent structures:
//! a builder for the IR, static analysis, an optimizer, a strict 2PL lock
//! injector, a transactional runtime and an interpreter.

pub mod analysis;
pub mod bench;
pub mod catalog;
pub mod cc;
pub mod executor;
pub mod optimizer;
pub mod runtime;
pub mod spec;
pub mod types;

pub use types::{Value, ValueType};
