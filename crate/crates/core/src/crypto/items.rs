//! Exchange items, expectations, and abort tokens.

use serde::Serialize;

use super::sig::{verify, Address, KeyPair, PublicKey};
use crate::chain::{Transaction, TxKind};
use crate::codec::{hex_bytes, Encode, Encoder, Hash32};
use crate::contracts::ExchangeId;

/// What a party contributes to the exchange.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ExchangeItem {
    /// Alice's item: a signed payment transaction.
    PaymentSignature(Box<Transaction>),
    /// Bob's item: a plain signature on the requested message.
    ReceiptSignature {
        #[serde(with = "hex_bytes")]
        message: Vec<u8>,
        #[serde(with = "hex_bytes")]
        signature: Vec<u8>,
        signer: PublicKey,
    },
}

impl ExchangeItem {
    pub fn receipt(keys: &KeyPair, message: &[u8]) -> Self {
        ExchangeItem::ReceiptSignature {
            message: message.to_vec(),
            signature: keys.sign(message),
            signer: keys.public.clone(),
        }
    }

    /// Standalone validity check. Needs no chain access for either variant.
    pub fn verifies(&self) -> bool {
        match self {
            ExchangeItem::PaymentSignature(tx) => tx.check_form().is_ok(),
            ExchangeItem::ReceiptSignature { message, signature, signer } => {
                verify(signer, message, signature)
            }
        }
    }

    pub fn payment(&self) -> Option<&Transaction> {
        match self {
            ExchangeItem::PaymentSignature(tx) => Some(tx),
            _ => None,
        }
    }
}

impl Encode for ExchangeItem {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            ExchangeItem::PaymentSignature(tx) => {
                enc.tag(0).item(tx.as_ref());
            }
            ExchangeItem::ReceiptSignature { message, signature, signer } => {
                enc.tag(1).bytes(message).bytes(signature).item(signer);
            }
        }
    }
}

/// What a party expects to receive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Expectation {
    Signature {
        expected_signer: Address,
        #[serde(with = "hex_bytes")]
        expected_message: Vec<u8>,
    },
    Payment { expected_value: u64, expected_payee: Address },
}

impl Encode for Expectation {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Expectation::Signature { expected_signer, expected_message } => {
                enc.tag(0).item(expected_signer).bytes(expected_message);
            }
            Expectation::Payment { expected_value, expected_payee } => {
                enc.tag(1).u64(*expected_value).item(expected_payee);
            }
        }
    }
}

/// Exact-match predicate between an item and an expectation.
pub fn matches(item: &ExchangeItem, expectation: &Expectation) -> bool {
    match (item, expectation) {
        (
            ExchangeItem::ReceiptSignature { message, signature, signer },
            Expectation::Signature { expected_signer, expected_message },
        ) => {
            signer.address() == *expected_signer
                && message == expected_message
                && verify(signer, message, signature)
        }
        (
            ExchangeItem::PaymentSignature(tx),
            Expectation::Payment { expected_value, expected_payee },
        ) => {
            matches!(tx.kind, TxKind::Payment { to } if to == *expected_payee)
                && tx.value == *expected_value
                && tx.check_form().is_ok()
        }
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum AbortIssuer {
    Ttp(PublicKey),
    Contract(Address),
}

/// Proof that an exchange was aborted.
///
/// TTP-issued tokens carry a signature over the exchange id. Contract-issued
/// tokens carry the id of the transaction that recorded the abort entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AbortToken {
    pub exchange_id: ExchangeId,
    pub issuer: AbortIssuer,
    #[serde(with = "hex_bytes")]
    pub evidence: Vec<u8>,
}

impl AbortToken {
    pub fn signed_message(exchange_id: &ExchangeId) -> Vec<u8> {
        let mut enc = Encoder::default();
        enc.bytes(b"aborted").hash(&exchange_id.0);
        enc.finish()
    }

    pub fn issue_by_ttp(ttp: &KeyPair, exchange_id: ExchangeId) -> Self {
        AbortToken {
            exchange_id,
            issuer: AbortIssuer::Ttp(ttp.public.clone()),
            evidence: ttp.sign(&Self::signed_message(&exchange_id)),
        }
    }

    pub fn from_contract(contract: Address, exchange_id: ExchangeId, abort_tx: Hash32) -> Self {
        AbortToken {
            exchange_id,
            issuer: AbortIssuer::Contract(contract),
            evidence: abort_tx.0.to_vec(),
        }
    }

    /// Checks the token against the exchange it claims to abort.
    pub fn verify(&self, exchange_id: &ExchangeId, ttp: &Address, contract: Option<&Address>) -> bool {
        if self.exchange_id != *exchange_id {
            return false;
        }
        match &self.issuer {
            AbortIssuer::Ttp(pk) => {
                pk.address() == *ttp && verify(pk, &Self::signed_message(exchange_id), &self.evidence)
            }
            AbortIssuer::Contract(addr) => contract == Some(addr) && self.evidence.len() == 32,
        }
    }
}

impl Encode for AbortToken {
    fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.exchange_id.0);
        match &self.issuer {
            AbortIssuer::Ttp(pk) => enc.tag(0).item(pk),
            AbortIssuer::Contract(a) => enc.tag(1).item(a),
        };
        enc.bytes(&self.evidence);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::TxBuilder;
    use crate::crypto::sig::{keygen, Scheme};

    fn kp(i: u8) -> KeyPair {
        keygen(Scheme::Ed25519, [i; 32])
    }

    #[test]
    fn receipt_matches_requested_message_only() {
        let bob = kp(2);
        let e = Expectation::Signature {
            expected_signer: bob.address,
            expected_message: b"paid 10".to_vec(),
        };
        assert!(matches(&ExchangeItem::receipt(&bob, b"paid 10"), &e));
        assert!(!matches(&ExchangeItem::receipt(&bob, b"paid 11"), &e));
        assert!(!matches(&ExchangeItem::receipt(&kp(3), b"paid 10"), &e));
    }

    #[test]
    fn payment_value_must_match_exactly() {
        let alice = kp(1);
        let bob = kp(2);
        let e = Expectation::Payment { expected_value: 5, expected_payee: bob.address };
        for v in 0..=10u64 {
            let tx = TxBuilder::payment(bob.address, v).nonce(1).sign(&alice);
            let item = ExchangeItem::PaymentSignature(Box::new(tx));
            assert_eq!(matches(&item, &e), v == 5, "value {v}");
        }
    }

    #[test]
    fn wrong_payee_does_not_match() {
        let alice = kp(1);
        let bob = kp(2);
        let e = Expectation::Payment { expected_value: 5, expected_payee: bob.address };
        let tx = TxBuilder::payment(kp(4).address, 5).sign(&alice);
        assert!(!matches(&ExchangeItem::PaymentSignature(Box::new(tx)), &e));
    }

    #[test]
    fn kind_mismatch_is_false() {
        let bob = kp(2);
        let e = Expectation::Payment { expected_value: 5, expected_payee: bob.address };
        assert!(!matches(&ExchangeItem::receipt(&bob, b"x"), &e));
    }

    #[test]
    fn ttp_abort_token_verifies() {
        let ttp = kp(7);
        let id = ExchangeId(crate::codec::sha256(b"ex"));
        let tok = AbortToken::issue_by_ttp(&ttp, id);
        assert!(tok.verify(&id, &ttp.address, None));
        assert!(!tok.verify(&ExchangeId(crate::codec::sha256(b"other")), &ttp.address, None));
        assert!(!tok.verify(&id, &kp(8).address, None));
    }
}
