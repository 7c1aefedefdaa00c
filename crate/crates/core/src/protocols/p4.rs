//! Witness-encryption payment: Bob publishes his signature encrypted to the
//! statement "T_σ is confirmed and T_abort is not". Miners open it once the
//! claim is buried deep enough, and so can Alice.

use serde::Serialize;

use super::{accepted, settled, Action, Decision, Event, Evidence, FinalOutcome, Payload, Role, Setup, Watch};
use crate::chain::{OutPoint, SpendCondition, TxBuilder, TxId, TxKind};
use crate::crypto::{we_encrypt, ExchangeItem, WitnessCiphertext, WitnessStatement};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P4AlicePhase {
    #[default]
    Init,
    AwaitSig,
    Aborting,
}

impl P4AlicePhase {
    pub fn name(self) -> &'static str {
        match self {
            P4AlicePhase::Init => "Init",
            P4AlicePhase::AwaitSig => "AwaitSig",
            P4AlicePhase::Aborting => "Aborting",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P4Alice {
    pub phase: P4AlicePhase,
    pub offer: Option<TxId>,
    pub t_sigma: Option<TxId>,
    pub ciphertext: Option<WitnessCiphertext>,
    pub sigma_included: bool,
    pub decrypting: bool,
    pub timer: u64,
    pub outcome: Option<FinalOutcome>,
}

impl P4Alice {
    fn abort(&mut self, setup: &Setup) -> Vec<Action> {
        if self.sigma_included {
            return Vec::new();
        }
        self.phase = P4AlicePhase::Aborting;
        vec![Action::SubmitTx(setup.reclaim(self.offer.expect("offer posted")).sign(&setup.alice))]
    }

    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        use P4AlicePhase::*;
        let timer_fired = matches!(ev, Event::Timer { id } if *id == self.timer);
        match (self.phase, ev) {
            (Init, Event::Start { .. }) => {
                let offer = TxBuilder::offer(
                    setup.value,
                    vec![
                        SpendCondition::SignatureOnMessage {
                            message: setup.message.clone(),
                            signer: setup.bob.address,
                            max_height: None,
                        },
                        SpendCondition::AbortBy { owner: setup.alice.address, min_height: None },
                    ],
                )
                .sign(&setup.alice);
                self.offer = Some(offer.id);
                self.phase = AwaitSig;
                self.timer += 1;
                vec![
                    Action::SubmitTx(offer.clone()),
                    Action::Send { to: Role::Bob, payload: Payload::OfferPosted { offer: offer.id } },
                    Action::SetTimer { id: self.timer, after: setup.patience },
                ]
            }
            (AwaitSig | Aborting, Event::Chain(u)) => {
                let offer = self.offer.expect("offer posted");
                let op = OutPoint { tx: offer, index: 0 };
                for t in &u.txs {
                    if matches!(t.tx.kind, TxKind::Claim { condition: 0 }) && t.tx.spends == [op] && t.tx.witness.is_some() {
                        self.t_sigma = Some(t.tx.id);
                        self.ciphertext = t.tx.witness.clone();
                        self.sigma_included |= t.depth.is_some();
                    }
                }
                if let Some(t) = self.t_sigma {
                    let refunded = u.settlements.iter().any(|s| s.outpoint == OutPoint { tx: t, index: 0 } && !s.paid);
                    if refunded {
                        return vec![Action::Finalize(FinalOutcome::lost(None))];
                    }
                }
                let mut actions = Vec::new();
                if let (Some(t), Some(ct)) = (self.t_sigma.and_then(|id| u.get(&id)), &self.ciphertext) {
                    if t.depth.is_some_and(|d| d >= ct.statement.min_depth.max(1)) && !self.decrypting {
                        self.decrypting = true;
                        actions.push(Action::TryWitnessDecrypt(ct.clone()));
                    }
                }
                if self.phase == Aborting {
                    if let Some(a) = u.get(&setup.reclaim_id(offer)) {
                        if settled(a, setup.k()) {
                            return vec![Action::Finalize(FinalOutcome::lost(None))];
                        }
                        if a.dropped {
                            self.phase = AwaitSig;
                        }
                    }
                }
                actions
            }
            (AwaitSig | Aborting, Event::WitnessReply { sigma, .. }) => {
                self.decrypting = false;
                match sigma {
                    Some(s) if setup.valid_sigma(s) => {
                        vec![Action::Finalize(FinalOutcome::gained(Evidence::Signature(ExchangeItem::ReceiptSignature {
                            message: setup.message.clone(),
                            signature: s.clone(),
                            signer: setup.bob.public.clone(),
                        })))]
                    }
                    _ => Vec::new(),
                }
            }
            (AwaitSig, Event::Decision(Decision::AbortNow | Decision::Exit)) => self.abort(setup),
            (AwaitSig, Event::Timer { .. }) if timer_fired => self.abort(setup),
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, setup: &Setup) -> Watch {
        match self.offer {
            Some(o) => Watch { txs: vec![o, setup.reclaim_id(o)], offers: vec![o], contracts: Vec::new() },
            None => Watch::default(),
        }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase != P4AlicePhase::Init
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P4BobPhase {
    #[default]
    AwaitOffer,
    Watching,
    Claiming,
}

impl P4BobPhase {
    pub fn name(self) -> &'static str {
        match self {
            P4BobPhase::AwaitOffer => "AwaitOffer",
            P4BobPhase::Watching => "Watching",
            P4BobPhase::Claiming => "Claiming",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P4Bob {
    pub phase: P4BobPhase,
    pub offer: Option<TxId>,
    pub t_sigma: Option<TxId>,
    pub outcome: Option<FinalOutcome>,
}

impl P4Bob {
    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        use P4BobPhase::*;
        match (self.phase, ev) {
            (AwaitOffer, Event::Message { from: Role::Alice, payload: Payload::OfferPosted { offer } }) => {
                self.offer = Some(*offer);
                self.phase = Watching;
                Vec::new()
            }
            (AwaitOffer | Watching, Event::Decision(Decision::Exit)) => vec![Action::Finalize(FinalOutcome::lost(None))],
            (Watching, Event::Chain(u)) => {
                let Some(o) = self.offer.and_then(|id| u.get(&id)) else { return Vec::new() };
                if !accepted(o, setup.k()) {
                    return Vec::new();
                }
                let slot = o.tx.conditions.iter().position(|c| {
                    matches!(c, SpendCondition::SignatureOnMessage { message, signer, max_height: None }
                        if *message == setup.message && *signer == setup.bob.address)
                });
                let (Some(slot), true) = (slot, o.tx.value >= setup.value) else {
                    return vec![Action::Finalize(FinalOutcome::lost(None))];
                };
                let builder = TxBuilder::claim(OutPoint { tx: o.tx.id, index: 0 }, slot as u32);
                let statement = WitnessStatement {
                    sig_tx_id: builder.id_for(&setup.bob.public),
                    abort_tx_id: setup.reclaim_id(o.tx.id),
                    min_depth: setup.k().max(1),
                };
                let t_sigma = builder.witness(we_encrypt(statement, &setup.bob.sign(&setup.message))).sign(&setup.bob);
                self.t_sigma = Some(t_sigma.id);
                self.phase = Claiming;
                vec![Action::SubmitTx(t_sigma)]
            }
            (Claiming, Event::Chain(u)) => {
                let id = self.t_sigma.expect("set with phase");
                if let Some(s) = u.settlements.iter().find(|s| s.outpoint == OutPoint { tx: id, index: 0 }) {
                    return vec![Action::Finalize(FinalOutcome { got_expected: s.paid, evidence: None })];
                }
                match u.get(&id) {
                    Some(t) if t.dropped => vec![Action::Finalize(FinalOutcome::lost(None))],
                    _ => Vec::new(),
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, _setup: &Setup) -> Watch {
        Watch { txs: self.offer.iter().chain(self.t_sigma.iter()).copied().collect(), ..Watch::default() }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase != P4BobPhase::AwaitOffer
    }
}
