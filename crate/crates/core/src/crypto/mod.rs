//! Signatures plus idealized verifiable and witness encryption.

mod items;
mod sig;
mod ve;
mod we;

pub use items::{matches, AbortIssuer, AbortToken, ExchangeItem, Expectation};
pub use sig::{keygen, role_seed, sign, verify, Address, KeyPair, PublicKey, Scheme};
pub use ve::{ve_decrypt, ve_encrypt, ve_verify, VeError, VerifiableCiphertext};
pub use we::{we_decrypt, we_encrypt, WeError, WitnessCiphertext, WitnessStatement};
