//! Fixed-timeout payment: an offer Bob must claim with his signature before
//! a deadline height, after which Alice may reclaim it.

use serde::Serialize;

use super::{accepted, settled, Action, ChainUpdate, Decision, Event, Evidence, FinalOutcome, Payload, Role, Setup, Watch};
use crate::chain::{OutPoint, SpendCondition, TxBuilder, TxId, TxKind};
use crate::crypto::ExchangeItem;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P1AlicePhase {
    #[default]
    Init,
    Offered,
    Reclaiming,
}

impl P1AlicePhase {
    pub fn name(self) -> &'static str {
        match self {
            P1AlicePhase::Init => "Init",
            P1AlicePhase::Offered => "Offered",
            P1AlicePhase::Reclaiming => "Reclaiming",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P1Alice {
    pub phase: P1AlicePhase,
    pub offer: Option<TxId>,
    pub expiry: u64,
    #[serde(with = "crate::codec::hex_opt")]
    pub sigma: Option<Vec<u8>>,
    pub outcome: Option<FinalOutcome>,
}

/// Bob's receipt as published in a claim on `offer`, if any.
fn claimed_sigma(setup: &Setup, u: &ChainUpdate, offer: TxId) -> Option<Vec<u8>> {
    let op = OutPoint { tx: offer, index: 0 };
    u.txs.iter().find_map(|t| match t.tx.kind {
        TxKind::Claim { condition: 0 } if t.tx.spends == [op] && setup.valid_sigma(&t.tx.payload) => {
            Some(t.tx.payload.clone())
        }
        _ => None,
    })
}

impl P1Alice {
    fn receipt(&self, setup: &Setup) -> Option<Evidence> {
        self.sigma.as_ref().map(|s| {
            Evidence::Signature(ExchangeItem::ReceiptSignature {
                message: setup.message.clone(),
                signature: s.clone(),
                signer: setup.bob.public.clone(),
            })
        })
    }

    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        match (self.phase, ev) {
            (P1AlicePhase::Init, Event::Start { height }) => {
                self.expiry = height + 1 + setup.timeout_blocks.unwrap_or(0);
                let offer = TxBuilder::offer(
                    setup.value,
                    vec![
                        SpendCondition::SignatureOnMessage {
                            message: setup.message.clone(),
                            signer: setup.bob.address,
                            max_height: Some(self.expiry),
                        },
                        SpendCondition::AbortBy { owner: setup.alice.address, min_height: Some(self.expiry) },
                    ],
                )
                .sign(&setup.alice);
                self.offer = Some(offer.id);
                self.phase = P1AlicePhase::Offered;
                vec![
                    Action::SubmitTx(offer.clone()),
                    Action::Send { to: Role::Bob, payload: Payload::OfferPosted { offer: offer.id } },
                ]
            }
            (P1AlicePhase::Offered | P1AlicePhase::Reclaiming, Event::Chain(u)) => {
                let offer = self.offer.expect("set on start");
                if let Some(s) = claimed_sigma(setup, u, offer) {
                    self.sigma = Some(s);
                }
                let claim_settled = u.txs.iter().any(|t| {
                    matches!(t.tx.kind, TxKind::Claim { condition: 0 })
                        && t.tx.spends[0].tx == offer
                        && settled(t, setup.k())
                });
                if claim_settled {
                    return vec![Action::Finalize(FinalOutcome::gained(self.receipt(setup).expect("claim carries σ")))];
                }
                let reclaim_id = setup.reclaim_id(offer);
                match self.phase {
                    P1AlicePhase::Offered if u.height + 1 >= self.expiry => {
                        self.phase = P1AlicePhase::Reclaiming;
                        vec![Action::SubmitTx(setup.reclaim(offer).sign(&setup.alice))]
                    }
                    P1AlicePhase::Reclaiming if u.get(&reclaim_id).is_some_and(|r| settled(r, setup.k())) => {
                        let evidence = self.receipt(setup);
                        vec![Action::Finalize(match evidence {
                            Some(e) => FinalOutcome::gained(e),
                            None => FinalOutcome::lost(None),
                        })]
                    }
                    _ => Vec::new(),
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, _setup: &Setup) -> Watch {
        match self.offer {
            Some(o) => Watch { txs: vec![o], offers: vec![o], contracts: Vec::new() },
            None => Watch::default(),
        }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase != P1AlicePhase::Init
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P1BobPhase {
    #[default]
    AwaitOffer,
    Watching,
    Claiming,
}

impl P1BobPhase {
    pub fn name(self) -> &'static str {
        match self {
            P1BobPhase::AwaitOffer => "AwaitOffer",
            P1BobPhase::Watching => "Watching",
            P1BobPhase::Claiming => "Claiming",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P1Bob {
    pub phase: P1BobPhase,
    pub offer: Option<TxId>,
    pub claim: Option<TxId>,
    pub outcome: Option<FinalOutcome>,
}

impl P1Bob {
    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        match (self.phase, ev) {
            (P1BobPhase::AwaitOffer, Event::Message { payload: Payload::OfferPosted { offer }, .. }) => {
                self.offer = Some(*offer);
                self.phase = P1BobPhase::Watching;
                Vec::new()
            }
            (P1BobPhase::AwaitOffer | P1BobPhase::Watching, Event::Decision(Decision::Exit)) => {
                vec![Action::Finalize(FinalOutcome::lost(None))]
            }
            (P1BobPhase::Watching, Event::Chain(u)) => {
                let Some(o) = self.offer.and_then(|o| u.get(&o)) else { return Vec::new() };
                if !accepted(o, setup.k()) {
                    return Vec::new();
                }
                let slot = o.tx.conditions.iter().position(|c| {
                    matches!(c, SpendCondition::SignatureOnMessage { message, signer, .. }
                        if *message == setup.message && *signer == setup.bob.address)
                });
                let (Some(slot), true) = (slot, o.tx.value >= setup.value) else {
                    return vec![Action::Finalize(FinalOutcome::lost(None))];
                };
                let SpendCondition::SignatureOnMessage { max_height, .. } = &o.tx.conditions[slot] else {
                    unreachable!()
                };
                if max_height.is_some_and(|t| u.height + 1 >= t) {
                    return vec![Action::Finalize(FinalOutcome::lost(None))];
                }
                let sigma = setup.bob.sign(&setup.message);
                let claim = TxBuilder::claim(OutPoint { tx: o.tx.id, index: 0 }, slot as u32)
                    .payload(sigma)
                    .sign(&setup.bob);
                self.claim = Some(claim.id);
                self.phase = P1BobPhase::Claiming;
                vec![Action::SubmitTx(claim)]
            }
            (P1BobPhase::Claiming, Event::Chain(u)) => {
                let Some(c) = self.claim.and_then(|c| u.get(&c)) else { return Vec::new() };
                if settled(c, setup.k()) {
                    vec![Action::Finalize(FinalOutcome { got_expected: true, evidence: None })]
                } else if c.dropped {
                    vec![Action::Finalize(FinalOutcome::lost(Some(Evidence::Signature(setup.receipt()))))]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, _setup: &Setup) -> Watch {
        Watch { txs: self.offer.iter().chain(self.claim.iter()).copied().collect(), ..Watch::default() }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase != P1BobPhase::AwaitOffer
    }
}
