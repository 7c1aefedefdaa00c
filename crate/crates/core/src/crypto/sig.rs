//! Deterministic signature schemes and key handling.
//!
//! Ed25519 is the default scheme. ECDSA over secp256k1 with RFC 6979 nonces
//! ships behind the same interface; both are pure functions of
//! `(secret key, message)`.

use std::fmt;

use ed25519_dalek::{Signer as _, Verifier as _};
use serde::{Deserialize, Serialize};

use crate::codec::{hex_bytes, tagged_hash, Encode, Encoder, Hash32};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum Scheme {
    #[default]
    Ed25519,
    EcdsaSecp256k1,
}

impl Scheme {
    fn tag(self) -> u8 {
        match self {
            Scheme::Ed25519 => 0,
            Scheme::EcdsaSecp256k1 => 1,
        }
    }
}

/// Pseudonymous account identifier: hash of the public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct Address(pub Hash32);

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "addr:{:?}", self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Encode for Address {
    fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.0);
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey {
    pub scheme: Scheme,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

impl PublicKey {
    pub fn address(&self) -> Address {
        Address(tagged_hash("fairpay/address", &self.to_canonical_bytes()))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pk:{:?}:{}", self.scheme, hex::encode(&self.bytes[..6.min(self.bytes.len())]))
    }
}

impl Encode for PublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.tag(self.scheme.tag()).bytes(&self.bytes);
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub public: PublicKey,
    #[serde(with = "hex_bytes")]
    secret: Vec<u8>,
    pub address: Address,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("address", &self.address).finish_non_exhaustive()
    }
}

/// Derives a key pair from a 32-byte seed.
pub fn keygen(scheme: Scheme, seed: [u8; 32]) -> KeyPair {
    let (public, secret) = match scheme {
        Scheme::Ed25519 => {
            let sk = ed25519_dalek::SigningKey::from_bytes(&seed);
            (sk.verifying_key().to_bytes().to_vec(), seed.to_vec())
        }
        Scheme::EcdsaSecp256k1 => {
            // Not every 32-byte string is a valid scalar; rehash until one is.
            let mut candidate = seed;
            let sk = loop {
                match k256::ecdsa::SigningKey::from_bytes((&candidate).into()) {
                    Ok(sk) => break sk,
                    Err(_) => candidate = tagged_hash("fairpay/k256-retry", &candidate).0,
                }
            };
            let vk = k256::ecdsa::VerifyingKey::from(&sk);
            (vk.to_encoded_point(true).as_bytes().to_vec(), sk.to_bytes().to_vec())
        }
    };
    let public = PublicKey { scheme, bytes: public };
    KeyPair { address: public.address(), public, secret }
}

impl KeyPair {
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        sign(self, message)
    }
}

pub fn sign(keys: &KeyPair, message: &[u8]) -> Vec<u8> {
    match keys.public.scheme {
        Scheme::Ed25519 => {
            let seed: [u8; 32] = keys.secret.as_slice().try_into().expect("ed25519 seed is 32 bytes");
            ed25519_dalek::SigningKey::from_bytes(&seed).sign(message).to_bytes().to_vec()
        }
        Scheme::EcdsaSecp256k1 => {
            let sk = k256::ecdsa::SigningKey::from_bytes(keys.secret.as_slice().into())
                .expect("stored scalar is valid");
            let sig: k256::ecdsa::Signature = sk.sign(message);
            sig.to_bytes().to_vec()
        }
    }
}

pub fn verify(pk: &PublicKey, message: &[u8], signature: &[u8]) -> bool {
    match pk.scheme {
        Scheme::Ed25519 => {
            let Ok(pk_bytes) = <[u8; 32]>::try_from(pk.bytes.as_slice()) else {
                return false;
            };
            let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&pk_bytes) else {
                return false;
            };
            let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
                return false;
            };
            vk.verify_strict(message, &sig).is_ok()
        }
        Scheme::EcdsaSecp256k1 => {
            let Ok(vk) = k256::ecdsa::VerifyingKey::from_sec1_bytes(&pk.bytes) else {
                return false;
            };
            let Ok(sig) = k256::ecdsa::Signature::from_slice(signature) else {
                return false;
            };
            vk.verify(message, &sig).is_ok()
        }
    }
}

/// Deterministic per-role seed used by scenarios.
pub fn role_seed(scenario_seed: u64, role: &str) -> [u8; 32] {
    let mut enc = Encoder::default();
    enc.u64(scenario_seed).bytes(role.as_bytes());
    tagged_hash("fairpay/role-seed", &enc.finish()).0
}
