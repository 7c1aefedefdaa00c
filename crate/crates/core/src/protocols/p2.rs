//! Optimistic fair exchange with a stateless TTP whose abort/resolve state
//! lives in an on-chain contract. `P2z` accepts Alice's payment item without
//! confirmation; `P2f` broadcasts it and waits for confirmation first.

use serde::Serialize;

use super::{
    accepted, settled, Action, Decision, Event, Evidence, FinalOutcome, Payload, ProtocolId, Role, Setup, TtpReply,
    TtpRequest, Watch,
};
use crate::chain::{TxBuilder, TxId};
use crate::contracts::{CallOutcome, ContractCall};
use crate::crypto::{
    matches, ve_decrypt, ve_encrypt, ve_verify, AbortToken, ExchangeItem, Expectation, VerifiableCiphertext,
};

fn item_matches(item: &ExchangeItem, e: &Expectation) -> bool {
    matches(item, e)
}

fn ofe(setup: &Setup) -> crate::crypto::Address {
    setup.ofe_contract.expect("OFE contract deployed for P2")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P2AlicePhase {
    #[default]
    Init,
    AwaitCb,
    AwaitIb,
    Aborting,
    Resolving,
}

impl P2AlicePhase {
    pub fn name(self) -> &'static str {
        match self {
            P2AlicePhase::Init => "Init",
            P2AlicePhase::AwaitCb => "AwaitCB",
            P2AlicePhase::AwaitIb => "AwaitIB",
            P2AlicePhase::Aborting => "Aborting",
            P2AlicePhase::Resolving => "Resolving",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P2Alice {
    pub phase: P2AlicePhase,
    pub cb: Option<VerifiableCiphertext>,
    pub abort_tx: Option<TxId>,
    pub timer: u64,
    pub outcome: Option<FinalOutcome>,
}

impl P2Alice {
    fn arm(&mut self, setup: &Setup) -> Action {
        self.timer += 1;
        Action::SetTimer { id: self.timer, after: setup.patience }
    }

    fn abort(&mut self, setup: &Setup) -> Vec<Action> {
        let call = TxBuilder::call(ofe(setup), ContractCall::OfeAbort { exchange: setup.header.clone() }).sign(&setup.alice);
        self.abort_tx = Some(call.id);
        self.phase = P2AlicePhase::Aborting;
        vec![Action::SubmitTx(call)]
    }

    fn resolve(&mut self, setup: &Setup) -> Vec<Action> {
        self.phase = P2AlicePhase::Resolving;
        vec![Action::CallTtp(TtpRequest {
            requester: Role::Alice,
            counterpart_ct: self.cb.clone().expect("c_B verified before i_A is sent"),
            own_item: ExchangeItem::PaymentSignature(Box::new(setup.payment())),
        })]
    }

    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        use P2AlicePhase::*;
        if self.phase != Init {
            let received = match ev {
                Event::Message { payload: Payload::Ib(i), from: Role::Bob } => Some(i),
                Event::Message { payload: Payload::TtpReply(TtpReply::Item(i)), from: Role::Ttp } => Some(i),
                _ => None,
            };
            if let Some(i) = received.filter(|i| item_matches(i, &setup.e_a)) {
                return vec![Action::Finalize(FinalOutcome::gained(Evidence::Signature(i.clone())))];
            }
        }
        let timer_fired = matches!(ev, Event::Timer { id } if *id == self.timer);
        match (self.phase, ev) {
            (Init, Event::Start { .. }) => {
                let i_a = ExchangeItem::PaymentSignature(Box::new(setup.payment()));
                let c_a = ve_encrypt(&i_a, &setup.e_b, &setup.e_a, setup.ttp.address);
                self.phase = AwaitCb;
                vec![Action::Send { to: Role::Bob, payload: Payload::Ca(c_a) }, self.arm(setup)]
            }
            (AwaitCb, Event::Message { from: Role::Bob, payload: Payload::Cb(c) }) => {
                if !ve_verify(c, &setup.e_a) {
                    return self.abort(setup);
                }
                self.cb = Some(c.clone());
                self.phase = AwaitIb;
                let i_a = ExchangeItem::PaymentSignature(Box::new(setup.payment()));
                vec![Action::Send { to: Role::Bob, payload: Payload::Ia(i_a) }, self.arm(setup)]
            }
            (AwaitCb, Event::Decision(Decision::AbortNow | Decision::Exit)) => self.abort(setup),
            (AwaitCb, Event::Timer { .. }) if timer_fired => self.abort(setup),
            (AwaitIb, Event::Decision(Decision::ResolveNow | Decision::Exit)) => self.resolve(setup),
            (AwaitIb, Event::Timer { .. }) if timer_fired => self.resolve(setup),
            (Resolving, Event::Message { from: Role::Ttp, payload: Payload::TtpReply(TtpReply::Aborted(t)) }) => {
                vec![Action::Finalize(FinalOutcome::lost(Some(Evidence::Abort(t.clone()))))]
            }
            (Aborting, Event::Chain(u)) => {
                let Some(a) = self.abort_tx.and_then(|id| u.get(&id)) else { return Vec::new() };
                if a.dropped {
                    return vec![Action::Finalize(FinalOutcome::lost(None))];
                }
                if !settled(a, setup.k()) {
                    return Vec::new();
                }
                let outcome = match &a.outcome {
                    Some(CallOutcome::ResolvedItem(Some(i))) if item_matches(i, &setup.e_a) => {
                        FinalOutcome::gained(Evidence::Signature(i.clone()))
                    }
                    Some(CallOutcome::AbortRecorded) => FinalOutcome::lost(Some(Evidence::Abort(
                        AbortToken::from_contract(ofe(setup), setup.exchange_id(), a.tx.id.0),
                    ))),
                    _ => FinalOutcome::lost(None),
                };
                vec![Action::Finalize(outcome)]
            }
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, _setup: &Setup) -> Watch {
        Watch { txs: self.abort_tx.into_iter().collect(), ..Watch::default() }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase == P2AlicePhase::Aborting
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum P2BobPhase {
    #[default]
    AwaitCa,
    AwaitIa,
    AwaitPayment,
    Resolving,
}

impl P2BobPhase {
    pub fn name(self) -> &'static str {
        match self {
            P2BobPhase::AwaitCa => "AwaitCA",
            P2BobPhase::AwaitIa => "AwaitIA",
            P2BobPhase::AwaitPayment => "AwaitPayment",
            P2BobPhase::Resolving => "Resolving",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct P2Bob {
    pub phase: P2BobPhase,
    pub ca: Option<VerifiableCiphertext>,
    pub ia: Option<ExchangeItem>,
    pub timer: u64,
    pub outcome: Option<FinalOutcome>,
}

impl P2Bob {
    fn resolve(&mut self, setup: &Setup) -> Vec<Action> {
        self.phase = P2BobPhase::Resolving;
        vec![Action::CallTtp(TtpRequest {
            requester: Role::Bob,
            counterpart_ct: self.ca.clone().expect("c_A verified before c_B is sent"),
            own_item: setup.receipt(),
        })]
    }

    fn release(&self, setup: &Setup, i_a: &ExchangeItem) -> Vec<Action> {
        vec![
            Action::Send { to: Role::Alice, payload: Payload::Ib(setup.receipt()) },
            Action::Finalize(FinalOutcome::gained(Evidence::Payment(i_a.clone()))),
        ]
    }

    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        use P2BobPhase::*;
        let timer_fired = matches!(ev, Event::Timer { id } if *id == self.timer);
        match (self.phase, ev) {
            (AwaitCa, Event::Message { from: Role::Alice, payload: Payload::Ca(c) }) => {
                if !ve_verify(c, &setup.e_b) {
                    return vec![Action::Finalize(FinalOutcome::lost(None))];
                }
                self.ca = Some(c.clone());
                self.phase = AwaitIa;
                self.timer += 1;
                let c_b = ve_encrypt(&setup.receipt(), &setup.e_a, &setup.e_b, setup.ttp.address);
                vec![
                    Action::Send { to: Role::Alice, payload: Payload::Cb(c_b) },
                    Action::SetTimer { id: self.timer, after: setup.patience },
                ]
            }
            (AwaitCa, Event::Decision(Decision::Exit)) => vec![Action::Finalize(FinalOutcome::lost(None))],
            (AwaitIa, Event::Message { from: Role::Alice, payload: Payload::Ia(i) }) => {
                if !item_matches(i, &setup.e_b) {
                    return self.resolve(setup);
                }
                if setup.protocol == ProtocolId::P2z {
                    return self.release(setup, i);
                }
                self.ia = Some(i.clone());
                self.phase = AwaitPayment;
                vec![Action::SubmitTx(i.payment().expect("matched a payment").clone())]
            }
            (AwaitIa, Event::Decision(Decision::ResolveNow | Decision::Exit)) => self.resolve(setup),
            (AwaitIa, Event::Timer { .. }) if timer_fired => self.resolve(setup),
            (AwaitPayment, Event::Chain(u)) => {
                let i_a = self.ia.clone().expect("set with phase");
                let Some(p) = u.get(&i_a.payment().expect("payment").id) else { return Vec::new() };
                if accepted(p, setup.k()) {
                    self.release(setup, &i_a)
                } else if p.dropped {
                    vec![Action::Finalize(FinalOutcome::lost(None))]
                } else {
                    Vec::new()
                }
            }
            (Resolving, Event::Message { from: Role::Ttp, payload: Payload::TtpReply(r) }) => match r {
                TtpReply::Item(i) if item_matches(i, &setup.e_b) => {
                    vec![Action::Finalize(FinalOutcome::gained(Evidence::Payment(i.clone())))]
                }
                TtpReply::Aborted(t) => vec![Action::Finalize(FinalOutcome::lost(Some(Evidence::Abort(t.clone()))))],
                _ => Vec::new(),
            },
            (Resolving, Event::Message { from: Role::Alice, payload: Payload::Ia(i) })
                if setup.protocol == ProtocolId::P2z && item_matches(i, &setup.e_b) =>
            {
                self.release(setup, i)
            }
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, _setup: &Setup) -> Watch {
        let txs = self.ia.as_ref().and_then(|i| i.payment()).map(|t| t.id).into_iter().collect();
        Watch { txs, ..Watch::default() }
    }

    pub fn wants_blocks(&self) -> bool {
        self.phase == P2BobPhase::AwaitPayment
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum JobStage {
    /// P2f: waiting for Alice's payment to confirm before touching the contract.
    AwaitPayment { tx: TxId },
    AwaitResolve { call: TxId, paid: bool },
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Job {
    pub requester: Role,
    pub i_a: ExchangeItem,
    pub i_b: ExchangeItem,
    pub stage: JobStage,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum TtpPhase {
    #[default]
    Serving,
}

impl TtpPhase {
    pub fn name(self) -> &'static str {
        "Serving"
    }
}

/// The TTP keeps no per-exchange state beyond requests in flight; whether an
/// exchange was aborted is read back from the contract.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Ttp {
    pub phase: TtpPhase,
    pub jobs: Vec<Job>,
    pub outcome: Option<FinalOutcome>,
}

impl Ttp {
    fn resolve_call(&self, setup: &Setup, job: usize, i_b: &ExchangeItem) -> crate::chain::Transaction {
        TxBuilder::call(ofe(setup), ContractCall::OfeResolve { exchange: setup.header.clone(), resolved_item: Some(i_b.clone()) })
            .nonce(job as u64)
            .sign(&setup.ttp)
    }

    fn token(setup: &Setup) -> TtpReply {
        TtpReply::Aborted(AbortToken::issue_by_ttp(&setup.ttp, setup.exchange_id()))
    }

    fn deliver_items(job: &Job) -> Vec<Action> {
        vec![
            Action::Send { to: Role::Bob, payload: Payload::TtpReply(TtpReply::Item(job.i_a.clone())) },
            Action::Send { to: Role::Alice, payload: Payload::TtpReply(TtpReply::Item(job.i_b.clone())) },
        ]
    }

    fn accept(&mut self, setup: &Setup, from: Role, req: &TtpRequest) -> Vec<Action> {
        if req.requester != from {
            return Vec::new();
        }
        let Ok((theirs, sealed)) = ve_decrypt(&setup.ttp, &req.counterpart_ct) else { return Vec::new() };
        let (i_a, i_b) = match from {
            Role::Alice => (req.own_item.clone(), theirs),
            Role::Bob => (theirs, req.own_item.clone()),
            Role::Ttp => return Vec::new(),
        };
        // The sealed expectation belongs to the ciphertext's author and must
        // be met by the requester's own item.
        let (own_ok, theirs_ok) = match from {
            Role::Alice => (item_matches(&i_a, &sealed), item_matches(&i_b, &setup.e_a)),
            _ => (item_matches(&i_b, &sealed), item_matches(&i_a, &setup.e_b)),
        };
        if !own_ok || !theirs_ok {
            return Vec::new();
        }
        let index = self.jobs.len();
        let (stage, tx) = if setup.protocol == ProtocolId::P2f {
            let pay = i_a.payment().expect("matched a payment").clone();
            (JobStage::AwaitPayment { tx: pay.id }, pay)
        } else {
            let call = self.resolve_call(setup, index, &i_b);
            (JobStage::AwaitResolve { call: call.id, paid: false }, call)
        };
        self.jobs.push(Job { requester: from, i_a, i_b, stage });
        vec![Action::SubmitTx(tx)]
    }

    pub fn step(&mut self, setup: &Setup, ev: &Event) -> Vec<Action> {
        match ev {
            Event::Message { from, payload: Payload::Resolve(req) } => self.accept(setup, *from, req),
            Event::Chain(u) => {
                let mut actions = Vec::new();
                for index in 0..self.jobs.len() {
                    let job = self.jobs[index].clone();
                    let next = match job.stage {
                        JobStage::AwaitPayment { tx } => match u.get(&tx) {
                            Some(p) if accepted(p, setup.k()) => {
                                let call = self.resolve_call(setup, index, &job.i_b);
                                let stage = JobStage::AwaitResolve { call: call.id, paid: true };
                                actions.push(Action::SubmitTx(call));
                                stage
                            }
                            // Payment double-spent: treat it as though Alice aborted.
                            Some(p) if p.dropped => {
                                actions.push(Action::Send { to: job.requester, payload: Payload::TtpReply(Self::token(setup)) });
                                JobStage::Done
                            }
                            _ => job.stage,
                        },
                        JobStage::AwaitResolve { call, paid } => match u.get(&call) {
                            Some(c) if settled(c, setup.k()) => {
                                match (&c.outcome, paid) {
                                    (Some(CallOutcome::NotAborted), _) | (Some(CallOutcome::Aborted), true) => {
                                        actions.extend(Self::deliver_items(&job));
                                    }
                                    _ => actions.push(Action::Send {
                                        to: job.requester,
                                        payload: Payload::TtpReply(Self::token(setup)),
                                    }),
                                }
                                JobStage::Done
                            }
                            _ => job.stage,
                        },
                        JobStage::Done => JobStage::Done,
                    };
                    self.jobs[index].stage = next;
                }
                actions
            }
            _ => Vec::new(),
        }
    }

    pub fn watch(&self, _setup: &Setup) -> Watch {
        let txs = self
            .jobs
            .iter()
            .filter_map(|j| match j.stage {
                JobStage::AwaitPayment { tx } => Some(tx),
                JobStage::AwaitResolve { call, .. } => Some(call),
                JobStage::Done => None,
            })
            .collect();
        Watch { txs, ..Watch::default() }
    }

    pub fn wants_blocks(&self) -> bool {
        self.jobs.iter().any(|j| j.stage != JobStage::Done)
    }
}
