//! Deterministic simulator and property checker for blockchain fair
//! payment-for-receipt protocols.

pub mod chain;
pub mod codec;
pub mod contracts;
pub mod crypto;
pub mod protocols;
pub mod sched;
pub mod verdicts;
