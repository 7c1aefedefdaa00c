use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{hex_bytes, tagged_hash, Encode, Encoder, Hash32};
use crate::contracts::{ContractCall, ContractKind};
use crate::crypto::{verify, Address, KeyPair, PublicKey, WitnessCiphertext};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Default)]
pub struct TxId(pub Hash32);

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx:{:?}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct OutPoint {
    pub tx: TxId,
    pub index: u32,
}

impl Encode for OutPoint {
    fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.tx.0).u64(self.index as u64);
    }
}

/// One way an Offer output may be spent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum SpendCondition {
    /// `signer` claims by publishing a valid signature on `message`, strictly
    /// below `max_height` when set.
    SignatureOnMessage {
        #[serde(with = "hex_bytes")]
        message: Vec<u8>,
        signer: Address,
        max_height: Option<u64>,
    },
    /// `owner` reclaims, at or above `min_height` when set.
    AbortBy { owner: Address, min_height: Option<u64> },
    Unconditional { owner: Address },
}

impl SpendCondition {
    pub fn beneficiary(&self) -> Address {
        match self {
            SpendCondition::SignatureOnMessage { signer, .. } => *signer,
            SpendCondition::AbortBy { owner, .. } | SpendCondition::Unconditional { owner } => *owner,
        }
    }
}

impl Encode for SpendCondition {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            SpendCondition::SignatureOnMessage { message, signer, max_height } => {
                enc.tag(0).bytes(message).item(signer).opt_u64(*max_height);
            }
            SpendCondition::AbortBy { owner, min_height } => {
                enc.tag(1).item(owner).opt_u64(*min_height);
            }
            SpendCondition::Unconditional { owner } => {
                enc.tag(2).item(owner);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TxKind {
    Payment { to: Address },
    Offer,
    /// Spends one Offer output under condition `condition`.
    Claim { condition: u32 },
    ContractDeploy { contract: ContractKind },
    ContractCall { contract: Address, call: ContractCall },
}

impl Encode for TxKind {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            TxKind::Payment { to } => {
                enc.tag(0).item(to);
            }
            TxKind::Offer => {
                enc.tag(1);
            }
            TxKind::Claim { condition } => {
                enc.tag(2).u64(*condition as u64);
            }
            TxKind::ContractDeploy { contract } => {
                enc.tag(3).item(contract);
            }
            TxKind::ContractCall { contract, call } => {
                enc.tag(4).item(contract).item(call);
            }
        }
    }
}

impl TxKind {
    pub fn name(&self) -> &'static str {
        match self {
            TxKind::Payment { .. } => "Payment",
            TxKind::Offer => "Offer",
            TxKind::Claim { .. } => "Claim",
            TxKind::ContractDeploy { .. } => "ContractDeploy",
            TxKind::ContractCall { .. } => "ContractCall",
        }
    }
}

/// A signed ledger transaction.
///
/// The id hashes every field except `witness` and `signature`; the signature
/// covers the id and the witness digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transaction {
    pub id: TxId,
    pub sender: Address,
    pub sender_key: PublicKey,
    pub kind: TxKind,
    pub value: u64,
    pub spends: Vec<OutPoint>,
    pub conditions: Vec<SpendCondition>,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    pub nonce: u64,
    pub witness: Option<WitnessCiphertext>,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
pub enum FormError {
    #[error("sender address does not match sender key")]
    SenderMismatch,
    #[error("transaction id does not match contents")]
    BadId,
    #[error("sender signature invalid")]
    BadSignature,
    #[error("malformed {0}")]
    Shape(&'static str),
}

impl Transaction {
    fn body_bytes(
        sender: &Address,
        sender_key: &PublicKey,
        kind: &TxKind,
        value: u64,
        spends: &[OutPoint],
        conditions: &[SpendCondition],
        payload: &[u8],
        nonce: u64,
    ) -> Vec<u8> {
        let mut enc = Encoder::default();
        enc.item(sender)
            .item(sender_key)
            .item(kind)
            .u64(value)
            .list(spends)
            .list(conditions)
            .bytes(payload)
            .u64(nonce);
        enc.finish()
    }

    fn compute_id(&self) -> TxId {
        TxId(tagged_hash(
            "fairpay/tx",
            &Self::body_bytes(
                &self.sender,
                &self.sender_key,
                &self.kind,
                self.value,
                &self.spends,
                &self.conditions,
                &self.payload,
                self.nonce,
            ),
        ))
    }

    fn signing_message(id: &TxId, witness: &Option<WitnessCiphertext>) -> Vec<u8> {
        let mut enc = Encoder::default();
        enc.hash(&id.0);
        match witness {
            None => enc.tag(0),
            Some(w) => enc.tag(1).hash(&tagged_hash("fairpay/witness", &w.to_canonical_bytes())),
        };
        enc.finish()
    }

    /// Structural and signature checks; no ledger state involved.
    pub fn check_form(&self) -> Result<(), FormError> {
        if self.sender_key.address() != self.sender {
            return Err(FormError::SenderMismatch);
        }
        if self.compute_id() != self.id {
            return Err(FormError::BadId);
        }
        if !verify(&self.sender_key, &Self::signing_message(&self.id, &self.witness), &self.signature) {
            return Err(FormError::BadSignature);
        }
        match &self.kind {
            TxKind::Offer if self.conditions.is_empty() => Err(FormError::Shape("offer without conditions")),
            TxKind::Offer if self.value == 0 => Err(FormError::Shape("zero-value offer")),
            TxKind::Claim { .. } if self.spends.len() != 1 => Err(FormError::Shape("claim must spend one output")),
            TxKind::Claim { .. } if self.value != 0 => Err(FormError::Shape("claim carries no value")),
            TxKind::Claim { .. } => Ok(()),
            _ if self.witness.is_some() => Err(FormError::Shape("witness only allowed on claims")),
            TxKind::Offer => Ok(()),
            _ if !self.spends.is_empty() => Err(FormError::Shape("only claims spend outputs")),
            _ => Ok(()),
        }
    }

    /// Keys such that two transactions sharing one can never both confirm.
    pub fn conflict_keys(&self) -> Vec<ConflictKey> {
        let mut keys: Vec<ConflictKey> = self.spends.iter().copied().map(ConflictKey::Output).collect();
        if let TxKind::Payment { .. } = self.kind {
            keys.push(ConflictKey::AccountSeq(self.sender, self.nonce));
        }
        keys
    }

    pub fn conflicts_with(&self, other: &Transaction) -> bool {
        let mine = self.conflict_keys();
        self.id != other.id && other.conflict_keys().iter().any(|k| mine.contains(k))
    }
}

impl Encode for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.id.0).bytes(&self.signature);
        match &self.witness {
            None => enc.tag(0),
            Some(w) => enc.tag(1).item(w),
        };
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ConflictKey {
    Output(OutPoint),
    /// Account-model payments with the same sender nonce are replacements.
    AccountSeq(Address, u64),
}

/// Builder for signed transactions.
#[derive(Clone, Debug)]
pub struct TxBuilder {
    kind: TxKind,
    value: u64,
    spends: Vec<OutPoint>,
    conditions: Vec<SpendCondition>,
    payload: Vec<u8>,
    nonce: u64,
    witness: Option<WitnessCiphertext>,
}

impl TxBuilder {
    pub fn new(kind: TxKind) -> Self {
        TxBuilder {
            kind,
            value: 0,
            spends: Vec::new(),
            conditions: Vec::new(),
            payload: Vec::new(),
            nonce: 0,
            witness: None,
        }
    }

    pub fn payment(to: Address, value: u64) -> Self {
        Self::new(TxKind::Payment { to }).value(value)
    }

    pub fn offer(value: u64, conditions: Vec<SpendCondition>) -> Self {
        let mut b = Self::new(TxKind::Offer).value(value);
        b.conditions = conditions;
        b
    }

    pub fn claim(spend: OutPoint, condition: u32) -> Self {
        let mut b = Self::new(TxKind::Claim { condition });
        b.spends = vec![spend];
        b
    }

    pub fn call(contract: Address, call: ContractCall) -> Self {
        Self::new(TxKind::ContractCall { contract, call })
    }

    pub fn deploy(contract: ContractKind) -> Self {
        Self::new(TxKind::ContractDeploy { contract })
    }

    pub fn value(mut self, v: u64) -> Self {
        self.value = v;
        self
    }

    pub fn nonce(mut self, n: u64) -> Self {
        self.nonce = n;
        self
    }

    pub fn payload(mut self, p: Vec<u8>) -> Self {
        self.payload = p;
        self
    }

    pub fn witness(mut self, w: WitnessCiphertext) -> Self {
        self.witness = Some(w);
        self
    }

    /// The id the transaction will have once signed by `sender`.
    pub fn id_for(&self, sender: &PublicKey) -> TxId {
        TxId(tagged_hash(
            "fairpay/tx",
            &Transaction::body_bytes(
                &sender.address(),
                sender,
                &self.kind,
                self.value,
                &self.spends,
                &self.conditions,
                &self.payload,
                self.nonce,
            ),
        ))
    }

    pub fn sign(self, keys: &KeyPair) -> Transaction {
        let id = self.id_for(&keys.public);
        let signature = keys.sign(&Transaction::signing_message(&id, &self.witness));
        Transaction {
            id,
            sender: keys.address,
            sender_key: keys.public.clone(),
            kind: self.kind,
            value: self.value,
            spends: self.spends,
            conditions: self.conditions,
            payload: self.payload,
            nonce: self.nonce,
            witness: self.witness,
            signature,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, Scheme};

    fn kp(i: u8) -> KeyPair {
        keygen(Scheme::Ed25519, [i; 32])
    }

    #[test]
    fn id_is_pure_function_of_contents() {
        let a = kp(1);
        let t1 = TxBuilder::payment(kp(2).address, 5).nonce(3).sign(&a);
        let t2 = TxBuilder::payment(kp(2).address, 5).nonce(3).sign(&a);
        let t3 = TxBuilder::payment(kp(2).address, 6).nonce(3).sign(&a);
        assert_eq!(t1.id, t2.id);
        assert_ne!(t1.id, t3.id);
        assert!(t1.check_form().is_ok());
    }

    #[test]
    fn tampering_breaks_form() {
        let a = kp(1);
        let mut t = TxBuilder::payment(kp(2).address, 5).sign(&a);
        t.value = 50;
        assert_eq!(t.check_form(), Err(FormError::BadId));
        let mut t = TxBuilder::payment(kp(2).address, 5).sign(&a);
        t.signature[0] ^= 1;
        assert_eq!(t.check_form(), Err(FormError::BadSignature));
        let mut t = TxBuilder::payment(kp(2).address, 5).sign(&a);
        t.sender = kp(3).address;
        assert_eq!(t.check_form(), Err(FormError::SenderMismatch));
    }

    #[test]
    fn id_for_predicts_signed_id() {
        let a = kp(1);
        let b = TxBuilder::payment(kp(2).address, 1).nonce(9);
        assert_eq!(b.id_for(&a.public), b.sign(&a).id);
    }

    #[test]
    fn same_nonce_payments_conflict() {
        let a = kp(1);
        let p1 = TxBuilder::payment(kp(2).address, 5).nonce(1).sign(&a);
        let p2 = TxBuilder::payment(a.address, 5).nonce(1).sign(&a);
        let p3 = TxBuilder::payment(a.address, 5).nonce(2).sign(&a);
        assert!(p1.conflicts_with(&p2));
        assert!(!p1.conflicts_with(&p3));
    }
}
