//! Party state machines for the five protocol variants.
//!
//! Machines are deterministic: `step` consumes one [`Event`] and returns the
//! resulting [`Action`]s. Setup data shared by all parties (keys, agreed
//! message and price, contract addresses) lives in [`Setup`] and is not part
//! of machine state.

mod p1;
mod p2;
mod p3;
mod p4;
mod setup;

use serde::{Deserialize, Serialize};

pub use p1::{P1Alice, P1Bob};
pub use p2::{P2Alice, P2Bob, Ttp};
pub use p3::{P3Alice, P3Bob};
pub use p4::{P4Alice, P4Bob};
pub use setup::Setup;

use crate::chain::{Settlement, Transaction, TxId};
use crate::contracts::CallOutcome;
use crate::crypto::{AbortToken, ExchangeItem, VerifiableCiphertext, WitnessCiphertext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProtocolId {
    P1,
    P2z,
    P2f,
    P3,
    P4,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 5] = [ProtocolId::P1, ProtocolId::P2z, ProtocolId::P2f, ProtocolId::P3, ProtocolId::P4];

    pub fn uses_ttp(self) -> bool {
        matches!(self, ProtocolId::P2z | ProtocolId::P2f)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::P1 => "P1",
            ProtocolId::P2z => "P2z",
            ProtocolId::P2f => "P2f",
            ProtocolId::P3 => "P3",
            ProtocolId::P4 => "P4",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
    Ttp,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
            Role::Ttp => "ttp",
        }
    }
}

/// Resolve request sent to the TTP: the counterparty's verifiable ciphertext
/// plus the requester's own item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TtpRequest {
    pub requester: Role,
    pub counterpart_ct: VerifiableCiphertext,
    pub own_item: ExchangeItem,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TtpReply {
    Item(ExchangeItem),
    Aborted(AbortToken),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Payload {
    OfferPosted { offer: TxId },
    InitPosted { init: TxId },
    Ca(VerifiableCiphertext),
    Cb(VerifiableCiphertext),
    Ia(ExchangeItem),
    Ib(ExchangeItem),
    Resolve(TtpRequest),
    TtpReply(TtpReply),
}

/// Chain status of one transaction as seen by a party.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TxUpdate {
    pub tx: Transaction,
    pub depth: Option<u64>,
    pub in_mempool: bool,
    pub dropped: bool,
    pub outcome: Option<CallOutcome>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainUpdate {
    pub height: u64,
    pub txs: Vec<TxUpdate>,
    pub settlements: Vec<Settlement>,
}

impl ChainUpdate {
    pub fn get(&self, id: &TxId) -> Option<&TxUpdate> {
        self.txs.iter().find(|u| u.tx.id == *id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    AbortNow,
    ResolveNow,
    /// Take whatever unilateral exit the current phase offers.
    Exit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Event {
    Start { height: u64 },
    Message { from: Role, payload: Payload },
    /// Block notification, or feedback on a transaction just broadcast.
    Chain(ChainUpdate),
    Decision(Decision),
    Timer { id: u64 },
    /// Result of a witness decryption attempt, with the chain facts the
    /// oracle saw at that moment.
    WitnessReply {
        #[serde(with = "crate::codec::hex_opt")]
        sigma: Option<Vec<u8>>,
        sig_depth: Option<u64>,
        abort_depth: Option<u64>,
        min_depth: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Action {
    Send { to: Role, payload: Payload },
    SubmitTx(Transaction),
    CallTtp(TtpRequest),
    SetTimer { id: u64, after: u64 },
    TryWitnessDecrypt(WitnessCiphertext),
    Finalize(FinalOutcome),
}

/// What a party can show an external arbiter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Evidence {
    /// A receipt signature, held privately or publicly revealed.
    Signature(ExchangeItem),
    /// A signed payment transaction.
    Payment(ExchangeItem),
    Abort(AbortToken),
    /// A receipt that is only valid together with the chain recording it.
    ChainReceipt {
        tx: TxId,
        #[serde(with = "crate::codec::hex_bytes")]
        sigma: Vec<u8>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FinalOutcome {
    pub got_expected: bool,
    pub evidence: Option<Evidence>,
}

impl FinalOutcome {
    fn gained(evidence: Evidence) -> Self {
        FinalOutcome { got_expected: true, evidence: Some(evidence) }
    }

    fn lost(evidence: Option<Evidence>) -> Self {
        FinalOutcome { got_expected: false, evidence }
    }
}

/// Which transactions a party wants status reports for.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Watch {
    pub txs: Vec<TxId>,
    /// Report any transaction spending one of these offers (output 0).
    pub offers: Vec<TxId>,
    pub contracts: Vec<crate::crypto::Address>,
}

/// Any party's machine.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Party {
    P1Alice(P1Alice),
    P1Bob(P1Bob),
    P2Alice(P2Alice),
    P2Bob(P2Bob),
    Ttp(Ttp),
    P3Alice(P3Alice),
    P3Bob(P3Bob),
    P4Alice(P4Alice),
    P4Bob(P4Bob),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $e:expr) => {
        match $self {
            Party::P1Alice($m) => $e,
            Party::P1Bob($m) => $e,
            Party::P2Alice($m) => $e,
            Party::P2Bob($m) => $e,
            Party::Ttp($m) => $e,
            Party::P3Alice($m) => $e,
            Party::P3Bob($m) => $e,
            Party::P4Alice($m) => $e,
            Party::P4Bob($m) => $e,
        }
    };
}

impl Party {
    /// The machines taking part in one exchange of `protocol`.
    pub fn cast(protocol: ProtocolId) -> Vec<(Role, Party)> {
        match protocol {
            ProtocolId::P1 => vec![
                (Role::Alice, Party::P1Alice(P1Alice::default())),
                (Role::Bob, Party::P1Bob(P1Bob::default())),
            ],
            ProtocolId::P2z | ProtocolId::P2f => vec![
                (Role::Alice, Party::P2Alice(P2Alice::default())),
                (Role::Bob, Party::P2Bob(P2Bob::default())),
                (Role::Ttp, Party::Ttp(Ttp::default())),
            ],
            ProtocolId::P3 => vec![
                (Role::Alice, Party::P3Alice(P3Alice::default())),
                (Role::Bob, Party::P3Bob(P3Bob::default())),
            ],
            ProtocolId::P4 => vec![
                (Role::Alice, Party::P4Alice(P4Alice::default())),
                (Role::Bob, Party::P4Bob(P4Bob::default())),
            ],
        }
    }

    /// Steps the machine. Finalized machines ignore every further event.
    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        if self.outcome().is_some() {
            return Vec::new();
        }
        let actions = dispatch!(self, m => m.step(setup, ev));
        if let Some(Action::Finalize(o)) = actions.iter().find(|a| matches!(a, Action::Finalize(_))) {
            let o = o.clone();
            dispatch!(self, m => m.outcome = Some(o));
        }
        actions
    }

    pub fn outcome(&self) -> Option<&FinalOutcome> {
        dispatch!(self, m => m.outcome.as_ref())
    }

    pub fn phase(&self) -> &'static str {
        dispatch!(self, m => m.phase.name())
    }

    pub fn watch(&self, setup: &Setup) -> Watch {
        dispatch!(self, m => m.watch(setup))
    }

    /// Whether the machine is waiting on chain progress.
    pub fn wants_blocks(&self) -> bool {
        self.outcome().is_none() && dispatch!(self, m => m.wants_blocks())
    }
}

/// `depth` meets the payee acceptance rule for confirm depth `k`.
fn accepted(u: &TxUpdate, k: u64) -> bool {
    match u.depth {
        Some(d) => d >= k,
        None => k == 0 && u.in_mempool,
    }
}

/// Contract results and settled claims need at least one block.
fn settled(u: &TxUpdate, k: u64) -> bool {
    u.depth.is_some_and(|d| d >= k.max(1))
}
