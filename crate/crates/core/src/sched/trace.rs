use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use super::scenario::Scenario;
use crate::chain::{Chain, DropReason, Settlement, Transaction, TxId};
use crate::codec::Hash32;
use crate::protocols::{Action, Event, FinalOutcome, Role, Setup};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Actor {
    Party(Role),
    Chain,
    Adversary,
}

impl Actor {
    pub fn name(self) -> &'static str {
        match self {
            Actor::Party(r) => r.name(),
            Actor::Chain => "chain",
            Actor::Adversary => "adversary",
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TraceBody {
    BlockMined {
        height: u64,
        block_hash: Hash32,
        included: Vec<TxId>,
        dropped: Vec<(TxId, DropReason)>,
        settlements: Vec<Settlement>,
    },
    Inject {
        tx: Transaction,
    },
    #[serde(untagged)]
    Party(Event),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub t: u64,
    pub actor: Actor,
    pub event: TraceBody,
    pub actions: Vec<Action>,
}

/// When a party finalized: log index, clock, and blocks mined so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FinalMark {
    pub event: usize,
    pub time: u64,
    pub blocks: u64,
}

/// A finished run.
#[derive(Clone, Debug)]
pub struct Trace {
    pub scenario: Scenario,
    /// Choice path for enumerated runs; timed runs need none.
    pub schedule: Option<Vec<usize>>,
    pub events: Vec<TraceEvent>,
    /// `None` means the party never finalized.
    pub outcomes: BTreeMap<Role, Option<FinalOutcome>>,
    pub finalized: BTreeMap<Role, FinalMark>,
    pub truncated: bool,
    pub end_time: u64,
    pub chain: Chain,
    pub setup: Arc<Setup>,
}

fn line(v: &impl Serialize) -> String {
    let v = serde_json::to_value(v).expect("trace serializes");
    serde_json::to_string(&v).expect("value prints")
}

impl Trace {
    /// Time at which both Alice and Bob had finalized.
    pub fn completion(&self) -> Option<FinalMark> {
        let a = self.finalized.get(&Role::Alice)?;
        let b = self.finalized.get(&Role::Bob)?;
        Some(if a.event > b.event { *a } else { *b })
    }

    /// Transactions broadcast by protocol parties.
    pub fn party_txs(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.actor, Actor::Party(_)))
            .flat_map(|e| &e.actions)
            .filter(|a| matches!(a, Action::SubmitTx(_)))
            .count()
    }

    pub fn final_digest(&self) -> Hash32 {
        self.chain.digest()
    }

    pub fn header(&self) -> Value {
        json!({
            "t": 0,
            "actor": "scenario",
            "event": { "scenario": self.scenario, "schedule": self.schedule },
            "actions": [],
        })
    }

    pub fn footer(&self) -> Value {
        json!({
            "t": self.end_time,
            "actor": "result",
            "event": {
                "outcomes": self.outcomes,
                "finalized": self.finalized,
                "truncated": self.truncated,
                "finalDigest": self.final_digest(),
                "blocks": self.chain.tip_height(),
            },
            "actions": [],
        })
    }

    /// One JSON object per line with sorted keys: header, events, footer.
    pub fn to_jsonl(&self) -> String {
        let mut out = line(&self.header());
        out.push('\n');
        for e in &self.events {
            out.push_str(&line(e));
            out.push('\n');
        }
        out.push_str(&line(&self.footer()));
        out.push('\n');
        out
    }
}
