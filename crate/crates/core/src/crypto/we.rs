//! Idealized witness encryption over a chain predicate.
//!
//! A ciphertext opens iff the supplied chain view contains the signature
//! transaction at the required depth and does not contain the abort
//! transaction at all.

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::chain::{ChainView, TxId};
use crate::codec::{hex_bytes, tagged_hash, Encode, Encoder};

#[derive(Debug, Error, PartialEq, Eq, Clone, Serialize)]
pub enum WeError {
    #[error("witness predicate does not hold on the supplied chain")]
    PredicateUnsatisfied,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessStatement {
    pub sig_tx_id: TxId,
    pub abort_tx_id: TxId,
    pub min_depth: u64,
}

impl WitnessStatement {
    pub fn holds(&self, chain: &impl ChainView) -> bool {
        chain.contains(&self.sig_tx_id, self.min_depth.max(1)) && !chain.contains(&self.abort_tx_id, 1)
    }
}

impl Encode for WitnessStatement {
    fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.sig_tx_id.0).hash(&self.abort_tx_id.0).u64(self.min_depth);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessCiphertext {
    pub statement: WitnessStatement,
    #[serde(rename = "sealed_message", serialize_with = "opaque")]
    sealed: Vec<u8>,
}

fn opaque<S: Serializer>(m: &Vec<u8>, s: S) -> Result<S::Ok, S::Error> {
    hex_bytes::serialize(&tagged_hash("fairpay/we-seal", m).0, s)
}

pub fn we_encrypt(statement: WitnessStatement, message: &[u8]) -> WitnessCiphertext {
    WitnessCiphertext { statement, sealed: message.to_vec() }
}

pub fn we_decrypt(chain: &impl ChainView, c: &WitnessCiphertext) -> Result<Vec<u8>, WeError> {
    if c.statement.holds(chain) {
        Ok(c.sealed.clone())
    } else {
        Err(WeError::PredicateUnsatisfied)
    }
}

impl Encode for WitnessCiphertext {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.statement).hash(&tagged_hash("fairpay/we-seal", &self.sealed));
    }
}
