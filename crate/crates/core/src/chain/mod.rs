//! Deterministic single-chain ledger simulator.
//!
//! Hybrid model: account balances for payments and contract calls, plus
//! UTXO-style conditional Offer outputs. No forks, no fees, no mining reward.

mod state;
mod tx;

pub use state::{
    Block, BlockReport, Chain, ChainParams, ChainView, Confirmation, DropReason, Lock, Output, Settlement,
    SubmitError,
};
pub use tx::{ConflictKey, FormError, OutPoint, SpendCondition, Transaction, TxBuilder, TxId, TxKind};
