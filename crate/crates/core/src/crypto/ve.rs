//! Idealized verifiable encryption.
//!
//! The ciphertext is a sealed box: the plaintext lives in a private field that
//! only the designated TTP can open via [`ve_decrypt`]. Verification is a
//! truthful oracle over the sealed plaintext, so a dishonest encryption is
//! always detected.

use serde::{Serialize, Serializer};
use thiserror::Error;

use super::items::{matches, ExchangeItem, Expectation};
use super::sig::{Address, KeyPair};
use crate::codec::{tagged_hash, Encode, Encoder, Hash32};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VeError {
    #[error("caller is not the designated TTP")]
    NotAuthorized,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct SealedBox {
    item: ExchangeItem,
    expectation: Expectation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifiableCiphertext {
    pub ttp: Address,
    #[serde(rename = "sealed_item", serialize_with = "opaque")]
    sealed: SealedBox,
    pub binding: Hash32,
    pub claimed_expectation_met: Expectation,
}

// Traces only ever see an opaque handle for the sealed payload.
fn opaque<S: Serializer>(b: &SealedBox, s: S) -> Result<S::Ok, S::Error> {
    let mut enc = Encoder::default();
    enc.item(&b.item).item(&b.expectation);
    s.serialize_str(&tagged_hash("fairpay/ve-seal", &enc.finish()).to_hex())
}

fn binding(item: &ExchangeItem, expectation: &Expectation) -> Hash32 {
    let mut enc = Encoder::default();
    enc.item(item).item(expectation);
    tagged_hash("fairpay/ve-binding", &enc.finish())
}

/// Encrypts `item` for `ttp`, claiming it satisfies `claimed`. The sender's
/// own expectation travels sealed alongside so the TTP can check the
/// counterparty's item during resolve.
pub fn ve_encrypt(
    item: &ExchangeItem,
    claimed: &Expectation,
    sealed_expectation: &Expectation,
    ttp: Address,
) -> VerifiableCiphertext {
    VerifiableCiphertext {
        ttp,
        binding: binding(item, sealed_expectation),
        sealed: SealedBox { item: item.clone(), expectation: sealed_expectation.clone() },
        claimed_expectation_met: claimed.clone(),
    }
}

/// Publicly checks that the sealed item satisfies `expectation`.
pub fn ve_verify(c: &VerifiableCiphertext, expectation: &Expectation) -> bool {
    c.claimed_expectation_met == *expectation && matches(&c.sealed.item, expectation)
}

pub fn ve_decrypt(
    ttp: &KeyPair,
    c: &VerifiableCiphertext,
) -> Result<(ExchangeItem, Expectation), VeError> {
    if ttp.address != c.ttp {
        return Err(VeError::NotAuthorized);
    }
    Ok((c.sealed.item.clone(), c.sealed.expectation.clone()))
}

impl Encode for VerifiableCiphertext {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.ttp).hash(&self.binding).item(&self.claimed_expectation_met);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::sig::{keygen, Scheme};

    fn setup() -> (KeyPair, KeyPair, Expectation) {
        let bob = keygen(Scheme::Ed25519, [2; 32]);
        let ttp = keygen(Scheme::Ed25519, [9; 32]);
        let e_a = Expectation::Signature {
            expected_signer: bob.address,
            expected_message: b"m".to_vec(),
        };
        (bob, ttp, e_a)
    }

    #[test]
    fn honest_receipt_verifies() {
        let (bob, ttp, e_a) = setup();
        let c = ve_encrypt(&ExchangeItem::receipt(&bob, b"m"), &e_a, &e_a, ttp.address);
        assert!(ve_verify(&c, &e_a));
    }

    #[test]
    fn garbage_item_is_detected() {
        let (bob, ttp, e_a) = setup();
        let garbage = ExchangeItem::ReceiptSignature {
            message: b"m".to_vec(),
            signature: vec![0u8; 64],
            signer: bob.public.clone(),
        };
        // oracle: direct match on the plaintext
        assert!(!matches(&garbage, &e_a));
        let c = ve_encrypt(&garbage, &e_a, &e_a, ttp.address);
        assert!(!ve_verify(&c, &e_a));
    }

    #[test]
    fn only_designated_ttp_decrypts() {
        let (bob, ttp, e_a) = setup();
        let item = ExchangeItem::receipt(&bob, b"m");
        let c = ve_encrypt(&item, &e_a, &e_a, ttp.address);
        assert_eq!(ve_decrypt(&bob, &c), Err(VeError::NotAuthorized));
        assert_eq!(ve_decrypt(&ttp, &c), Ok((item, e_a)));
    }

    #[test]
    fn serialized_form_hides_plaintext() {
        let (bob, ttp, e_a) = setup();
        let item = ExchangeItem::receipt(&bob, b"m");
        let c = ve_encrypt(&item, &e_a, &e_a, ttp.address);
        let json = serde_json::to_string(&c).unwrap();
        let ExchangeItem::ReceiptSignature { signature, .. } = &item else { unreachable!() };
        assert!(!json.contains(&hex::encode(signature)));
    }
}
