//! Signature-for-payment escrow contract: Alice deposits, Bob is paid by
//! publishing his signature to the contract, Alice may abort until then.

use serde::Serialize;

use super::{settled, Action, Decision, Event, Evidence, FinalOutcome, Payload, Role, Setup, Watch};
use crate::chain::{TxBuilder, TxId, TxKind};
use crate::contracts::{CallOutcome, ContractCall};

fn sig_contract(setup: &Setup) -> crate::crypto::Address {
    setup.sig_contract.expect("signature contract deployed for P3")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P3AlicePhase {
    #[default]
    Init,
    AwaitInit,
    AwaitResolve,
    Aborting,
}

impl P3AlicePhase {
    pub fn name(self) -> &'static str {
        match self {
            P3AlicePhase::Init => "Init",
            P3AlicePhase::AwaitInit => "AwaitInit",
            P3AlicePhase::AwaitResolve => "AwaitResolve",
            P3AlicePhase::Aborting => "Aborting",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P3Alice {
    pub phase: P3AlicePhase,
    pub init: Option<TxId>,
    pub abort: Option<TxId>,
    pub abort_requested: bool,
    pub aborts: u64,
    pub timer: u64,
    pub outcome: Option<FinalOutcome>,
}

impl P3Alice {
    fn abort(&mut self, setup: &Setup) -> Vec<Action> {
        let call = TxBuilder::call(sig_contract(setup), ContractCall::SigAbort).nonce(self.aborts).sign(&setup.alice);
        self.aborts += 1;
        self.abort = Some(call.id);
        self.phase = P3AlicePhase::Aborting;
        vec![Action::SubmitTx(call)]
    }

    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        use P3AlicePhase::*;
        let timer_fired = matches!(ev, Event::Timer { id } if *id == self.timer);
        match (self.phase, ev) {
            (Init, Event::Start { .. }) => {
                let call = TxBuilder::call(
                    sig_contract(setup),
                    ContractCall::SigInit { message: setup.message.clone(), recipient: setup.bob.address },
                )
                .value(setup.value)
                .sign(&setup.alice);
                self.init = Some(call.id);
                self.phase = AwaitInit;
                vec![
                    Action::SubmitTx(call.clone()),
                    Action::Send { to: Role::Bob, payload: Payload::InitPosted { init: call.id } },
                ]
            }
            (AwaitInit, Event::Decision(Decision::AbortNow | Decision::Exit)) => {
                self.abort_requested = true;
                Vec::new()
            }
            (AwaitInit | AwaitResolve | Aborting, Event::Chain(u)) => {
                // Bob's resolve, once settled, is Alice's (chain-bound) receipt.
                let paid = u.txs.iter().find_map(|t| match (&t.tx.kind, &t.outcome) {
                    (TxKind::ContractCall { call: ContractCall::SigResolve { .. }, .. }, Some(CallOutcome::PaidOut { sigma, .. }))
                        if settled(t, setup.k()) =>
                    {
                        Some((t.tx.id, sigma.clone()))
                    }
                    _ => None,
                });
                if let Some((tx, sigma)) = paid {
                    return vec![Action::Finalize(FinalOutcome::gained(Evidence::ChainReceipt { tx, sigma }))];
                }
                match self.phase {
                    AwaitInit => {
                        let Some(i) = self.init.and_then(|id| u.get(&id)) else { return Vec::new() };
                        if !settled(i, setup.k()) {
                            return Vec::new();
                        }
                        if i.outcome != Some(CallOutcome::Initialized) {
                            return vec![Action::Finalize(FinalOutcome::lost(None))];
                        }
                        if self.abort_requested {
                            return self.abort(setup);
                        }
                        self.phase = AwaitResolve;
                        self.timer += 1;
                        vec![Action::SetTimer { id: self.timer, after: setup.patience }]
                    }
                    Aborting => {
                        let Some(a) = self.abort.and_then(|id| u.get(&id)) else { return Vec::new() };
                        match &a.outcome {
                            Some(CallOutcome::Refunded { .. }) if settled(a, setup.k()) => {
                                vec![Action::Finalize(FinalOutcome::lost(None))]
                            }
                            // Lost the race to Bob's resolve; his payout will show up.
                            Some(CallOutcome::Failed(_)) => {
                                self.phase = AwaitResolve;
                                Vec::new()
                            }
                            _ => Vec::new(),
                        }
                    }
                    _ => Vec::new(),
                }
            }
            (AwaitResolve, Event::Decision(Decision::AbortNow | Decision::Exit)) => self.abort(setup),
            (AwaitResolve, Event::Timer { .. }) if timer_fired => self.abort(setup),
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, setup: &Setup) -> Watch {
        Watch {
            txs: self.init.iter().chain(self.abort.iter()).copied().collect(),
            // Every call to the contract, so Alice sees Bob's resolve.
            contracts: vec![sig_contract(setup)],
            offers: Vec::new(),
        }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase != P3AlicePhase::Init
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P3BobPhase {
    #[default]
    AwaitInit,
    Watching,
    Resolving,
}

impl P3BobPhase {
    pub fn name(self) -> &'static str {
        match self {
            P3BobPhase::AwaitInit => "AwaitInit",
            P3BobPhase::Watching => "Watching",
            P3BobPhase::Resolving => "Resolving",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P3Bob {
    pub phase: P3BobPhase,
    pub init: Option<TxId>,
    pub resolve: Option<TxId>,
    pub outcome: Option<FinalOutcome>,
}

impl P3Bob {
    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        use P3BobPhase::*;
        match (self.phase, ev) {
            (AwaitInit, Event::Message { from: Role::Alice, payload: Payload::InitPosted { init } }) => {
                self.init = Some(*init);
                self.phase = Watching;
                Vec::new()
            }
            (AwaitInit | Watching, Event::Decision(Decision::Exit)) => vec![Action::Finalize(FinalOutcome::lost(None))],
            (Watching, Event::Chain(u)) => {
                let Some(i) = self.init.and_then(|id| u.get(&id)) else { return Vec::new() };
                if !settled(i, setup.k()) {
                    return Vec::new();
                }
                let valid = i.outcome == Some(CallOutcome::Initialized)
                    && i.tx.value >= setup.value
                    && matches!(&i.tx.kind, TxKind::ContractCall { call: ContractCall::SigInit { message, recipient }, .. }
                        if *message == setup.message && *recipient == setup.bob.address);
                if !valid {
                    return vec![Action::Finalize(FinalOutcome::lost(None))];
                }
                let call = TxBuilder::call(sig_contract(setup), ContractCall::SigResolve { sigma: setup.bob.sign(&setup.message) })
                    .sign(&setup.bob);
                self.resolve = Some(call.id);
                self.phase = Resolving;
                vec![Action::SubmitTx(call)]
            }
            (Resolving, Event::Chain(u)) => {
                let Some(r) = self.resolve.and_then(|id| u.get(&id)) else { return Vec::new() };
                match &r.outcome {
                    Some(CallOutcome::PaidOut { .. }) if settled(r, setup.k()) => {
                        vec![Action::Finalize(FinalOutcome { got_expected: true, evidence: None })]
                    }
                    Some(CallOutcome::Failed(_)) => vec![Action::Finalize(FinalOutcome::lost(None))],
                    _ => Vec::new(),
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, _setup: &Setup) -> Watch {
        Watch { txs: self.init.iter().chain(self.resolve.iter()).copied().collect(), ..Watch::default() }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase != P3BobPhase::AwaitInit
    }
}
