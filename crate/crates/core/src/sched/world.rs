use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

use super::scenario::{Adversary, Scenario};
use super::trace::{Actor, FinalMark, Trace, TraceBody, TraceEvent};
use crate::chain::{Chain, ChainView, SubmitError, Transaction, TxKind};
use crate::codec::{sha256, Hash32};
use crate::crypto::we_decrypt;
use crate::protocols::{Action, ChainUpdate, Decision, Event, Party, Payload, Role, Setup, TxUpdate, Watch};

/// Something waiting to happen at or after `time`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Item {
    Start { role: Role },
    Deliver { from: Role, to: Role, payload: Payload },
    Timer { role: Role, id: u64 },
    Notify { role: Role, update: ChainUpdate },
    Decide { role: Role, decision: Decision },
    WitnessReply { role: Role, event: Event },
    Inject { tx: Transaction },
}

impl Item {
    fn involves(&self, r: Role) -> bool {
        match self {
            Item::Start { role }
            | Item::Timer { role, .. }
            | Item::Notify { role, .. }
            | Item::Decide { role, .. }
            | Item::WitnessReply { role, .. } => *role == r,
            Item::Deliver { from, to, .. } => *from == r || *to == r,
            Item::Inject { .. } => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Pending {
    pub time: u64,
    pub seq: u64,
    pub item: Item,
}

/// One scheduling decision: deliver the i-th pending item (in time order) or
/// mine the next block, taking the mempool in arrival order or reversed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Choice {
    Item(usize),
    Mine { reverse: bool },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
struct Hooks {
    double_spent: bool,
    raced: bool,
}

/// Whole simulation state. Cloning it forks the run.
#[derive(Clone, Debug)]
pub struct World {
    pub setup: Arc<Setup>,
    pub scenario: Arc<Scenario>,
    pub chain: Chain,
    pub parties: Vec<(Role, Party)>,
    pending: Vec<Pending>,
    pub now: u64,
    seq: u64,
    next_block: u64,
    hooks: Hooks,
    crashed: BTreeSet<Role>,
    frozen: BTreeSet<Role>,
    knowledge: BTreeSet<Hash32>,
    pub log: Vec<TraceEvent>,
    pub finalized: BTreeMap<Role, FinalMark>,
    pub schedule: Vec<usize>,
    pub blocks_mined: u64,
}

impl World {
    pub fn new(scenario: &Scenario) -> Self {
        let setup = scenario.setup();
        let chain = setup.genesis();
        let parties = Party::cast(scenario.protocol);
        let mut w = World {
            next_block: scenario.block_interval_units,
            setup: Arc::new(setup),
            scenario: Arc::new(scenario.clone()),
            chain,
            parties,
            pending: Vec::new(),
            now: 0,
            seq: 0,
            hooks: Hooks::default(),
            crashed: BTreeSet::new(),
            frozen: BTreeSet::new(),
            knowledge: BTreeSet::new(),
            log: Vec::new(),
            finalized: BTreeMap::new(),
            schedule: Vec::new(),
            blocks_mined: 0,
        };
        let roles: Vec<Role> = w.parties.iter().map(|(r, _)| *r).collect();
        for role in roles {
            w.push(0, Item::Start { role });
        }
        w
    }

    pub fn party(&self, role: Role) -> Option<&Party> {
        self.parties.iter().find(|(r, _)| *r == role).map(|(_, p)| p)
    }

    fn party_mut(&mut self, role: Role) -> Option<&mut Party> {
        self.parties.iter_mut().find(|(r, _)| *r == role).map(|(_, p)| p)
    }

    fn live(&self, role: Role) -> bool {
        !self.crashed.contains(&role) && !self.frozen.contains(&role)
    }

    pub fn pending(&self) -> &[Pending] {
        &self.pending
    }

    fn push(&mut self, time: u64, item: Item) {
        let p = Pending { time, seq: self.seq, item };
        self.seq += 1;
        let at = self.pending.partition_point(|q| (q.time, q.seq) < (p.time, p.seq));
        self.pending.insert(at, p);
    }

    fn bob_extra(&self, role: Role) -> u64 {
        match self.scenario.adversary {
            Adversary::DosDelayBob { extra_delay_units } if role == Role::Bob => extra_delay_units,
            _ => 0,
        }
    }

    pub fn needs_blocks(&self) -> bool {
        self.chain.mempool_len() > 0 || self.parties.iter().any(|(r, p)| self.live(*r) && p.wants_blocks())
    }

    pub fn quiescent(&self) -> bool {
        self.pending.is_empty() && !self.needs_blocks()
    }

    fn block_time(&self) -> u64 {
        let i = self.scenario.block_interval_units;
        self.now.max(self.next_block).div_ceil(i) * i
    }

    /// Every choice available in the current state.
    pub fn choices(&self) -> Vec<Choice> {
        let mut c: Vec<Choice> = (0..self.pending.len()).map(Choice::Item).collect();
        if self.needs_blocks() {
            c.push(Choice::Mine { reverse: false });
            if self.chain.mempool_len() > 1 {
                c.push(Choice::Mine { reverse: true });
            }
        }
        c
    }

    /// What the clock-driven scheduler does next.
    pub fn timed_choice(&self) -> Option<Choice> {
        let blocks = self.needs_blocks();
        match self.pending.first() {
            Some(p) if !blocks || p.time < self.block_time() => Some(Choice::Item(0)),
            _ if blocks => Some(Choice::Mine { reverse: false }),
            _ => None,
        }
    }

    /// Applies the `index`-th entry of [`World::choices`] and records it.
    pub fn choose(&mut self, index: usize) -> bool {
        let Some(c) = self.choices().get(index).copied() else { return false };
        self.schedule.push(index);
        self.apply(c);
        true
    }

    pub fn apply(&mut self, c: Choice) {
        match c {
            Choice::Mine { reverse } => self.mine(reverse),
            Choice::Item(i) => {
                let p = self.pending.remove(i);
                self.now = self.now.max(p.time);
                self.process(p.item);
            }
        }
    }

    pub fn over_budget(&self) -> bool {
        self.log.len() as u64 >= self.scenario.max_events
    }

    /// Runs with real timing until nothing is left to do. Returns whether the
    /// event budget ran out first.
    pub fn run_timed(&mut self) -> bool {
        self.run_timed_until(u64::MAX)
    }

    /// Like [`World::run_timed`] but also stops once `max_blocks` blocks exist.
    pub fn run_timed_until(&mut self, max_blocks: u64) -> bool {
        loop {
            if self.over_budget() {
                return true;
            }
            if self.blocks_mined >= max_blocks {
                return false;
            }
            match self.timed_choice() {
                Some(c) => self.apply(c),
                None => return false,
            }
        }
    }

    fn process(&mut self, item: Item) {
        match item {
            Item::Start { role } => {
                let height = self.chain.tip_height();
                self.step_party(role, Event::Start { height });
            }
            Item::Deliver { from, to, payload } => {
                if self.frozen.contains(&from) || self.frozen.contains(&to) {
                    return;
                }
                let bytes = serde_json::to_vec(&(to, &payload)).expect("payload serializes");
                self.knowledge.insert(sha256(&bytes));
                self.step_party(to, Event::Message { from, payload });
            }
            Item::Timer { role, id } => self.step_party(role, Event::Timer { id }),
            Item::Notify { role, update } => self.step_party(role, Event::Chain(update)),
            Item::Decide { role, decision } => self.step_party(role, Event::Decision(decision)),
            Item::WitnessReply { role, event } => self.step_party(role, event),
            Item::Inject { tx } => {
                let _ = self.chain.submit(tx.clone());
                self.log.push(TraceEvent {
                    t: self.now,
                    actor: Actor::Adversary,
                    event: TraceBody::Inject { tx },
                    actions: Vec::new(),
                });
            }
        }
    }

    fn step_party(&mut self, role: Role, ev: Event) {
        if !self.live(role) {
            return;
        }
        let setup = Arc::clone(&self.setup);
        let Some(p) = self.party_mut(role) else { return };
        let before = p.outcome().is_some();
        let actions = p.step(&setup, &ev);
        let after = p.outcome().is_some();
        self.log.push(TraceEvent { t: self.now, actor: Actor::Party(role), event: TraceBody::Party(ev), actions: actions.clone() });
        if !before && after {
            self.finalized.insert(
                role,
                FinalMark { event: self.log.len() - 1, time: self.now, blocks: self.blocks_mined },
            );
        }
        self.perform(role, actions);
        self.hooks(role);
    }

    fn perform(&mut self, role: Role, actions: Vec<Action>) {
        let delay = self.scenario.msg_delay_units + self.bob_extra(role);
        for a in actions {
            match a {
                Action::Send { to, payload } => self.push(self.now + delay, Item::Deliver { from: role, to, payload }),
                Action::CallTtp(req) => {
                    self.push(self.now + delay, Item::Deliver { from: role, to: Role::Ttp, payload: Payload::Resolve(req) })
                }
                Action::SetTimer { id, after } => self.push(self.now + after, Item::Timer { role, id }),
                Action::SubmitTx(tx) => self.submit(role, tx),
                Action::TryWitnessDecrypt(ct) => {
                    let sigma = we_decrypt(&self.chain, &ct).ok();
                    let event = Event::WitnessReply {
                        sigma,
                        sig_depth: self.chain.depth(&ct.statement.sig_tx_id),
                        abort_depth: self.chain.depth(&ct.statement.abort_tx_id),
                        min_depth: ct.statement.min_depth,
                    };
                    self.push(self.now, Item::WitnessReply { role, event });
                }
                Action::Finalize(_) => {}
            }
        }
    }

    fn submit(&mut self, role: Role, tx: Transaction) {
        let eligible = self.now + self.bob_extra(role);
        let update = match self.chain.submit_eligible_at(tx.clone(), eligible) {
            Ok(_) | Err(SubmitError::AlreadyKnown) => self.tx_update(&tx),
            Err(SubmitError::Malformed(_)) => {
                TxUpdate { tx, depth: None, in_mempool: false, dropped: true, outcome: None }
            }
        };
        if self.setup.k() == 0 || update.dropped {
            let update = ChainUpdate { height: self.chain.tip_height(), txs: vec![update], settlements: Vec::new() };
            self.push(self.now, Item::Notify { role, update });
        }
    }

    fn tx_update(&self, tx: &Transaction) -> TxUpdate {
        let c = self.chain.confirmations(&tx.id);
        TxUpdate {
            tx: tx.clone(),
            depth: c.depth,
            in_mempool: c.in_mempool,
            dropped: c.depth.is_none() && !c.in_mempool,
            outcome: self.chain.receipt(&tx.id).cloned(),
        }
    }

    fn watched(&self, w: &Watch) -> Vec<TxUpdate> {
        self.chain
            .seen_txs()
            .filter(|tx| {
                w.txs.contains(&tx.id)
                    || (matches!(tx.kind, TxKind::Claim { .. }) && tx.spends.iter().any(|op| op.index == 0 && w.offers.contains(&op.tx)))
                    || matches!(&tx.kind, TxKind::ContractCall { contract, .. } if w.contracts.contains(contract))
            })
            .map(|tx| self.tx_update(tx))
            .collect()
    }

    fn mine(&mut self, reverse: bool) {
        self.now = self.block_time();
        self.next_block = self.now + self.scenario.block_interval_units;
        let order: Vec<usize> = (0..self.chain.mempool_len()).rev().collect();
        let report = self.chain.mine_block(self.now, reverse.then_some(&order[..]));
        self.blocks_mined += 1;
        self.log.push(TraceEvent {
            t: self.now,
            actor: Actor::Chain,
            event: TraceBody::BlockMined {
                height: report.height,
                block_hash: self.chain.tip().block_hash,
                included: report.included.clone(),
                dropped: report.dropped.clone(),
                settlements: report.settlements.clone(),
            },
            actions: Vec::new(),
        });
        let roles: Vec<Role> = self.parties.iter().map(|(r, _)| *r).collect();
        for role in roles {
            let Some(p) = self.party(role) else { continue };
            if p.outcome().is_some() || !self.live(role) {
                continue;
            }
            let w = p.watch(&self.setup);
            if w.txs.is_empty() && w.offers.is_empty() && w.contracts.is_empty() {
                continue;
            }
            let update = ChainUpdate { height: report.height, txs: self.watched(&w), settlements: report.settlements.clone() };
            self.step_party(role, Event::Chain(update));
        }
    }

    fn hooks(&mut self, role: Role) {
        let Some(phase) = self.party(role).map(|p| p.phase()) else { return };
        match &self.scenario.adversary {
            Adversary::DoubleSpendAfterOfe if role == Role::Alice && phase == "AwaitIB" && !self.hooks.double_spent => {
                self.hooks.double_spent = true;
                let tx = self.setup.double_spend();
                self.push(self.now, Item::Inject { tx });
            }
            Adversary::RaceAbortResolve if role == Role::Bob && !self.hooks.raced => {
                let trigger = match self.scenario.protocol {
                    crate::protocols::ProtocolId::P2z | crate::protocols::ProtocolId::P2f => phase == "AwaitIA",
                    crate::protocols::ProtocolId::P3 => phase == "Resolving",
                    crate::protocols::ProtocolId::P4 => phase == "Claiming",
                    crate::protocols::ProtocolId::P1 => phase == "Claiming",
                };
                if trigger {
                    self.hooks.raced = true;
                    if matches!(self.scenario.protocol, crate::protocols::ProtocolId::P2z | crate::protocols::ProtocolId::P2f) {
                        self.push(self.now, Item::Decide { role: Role::Bob, decision: Decision::ResolveNow });
                    }
                    self.push(self.now, Item::Decide { role: Role::Alice, decision: Decision::AbortNow });
                }
            }
            Adversary::CrashBobAfter { phase: target } if role == Role::Bob && phase == target => {
                self.crashed.insert(Role::Bob);
            }
            _ => {}
        }
    }

    /// Freezes everyone but `role` and the TTP, then has `role` take its
    /// unilateral exit. Pending traffic touching frozen parties is lost.
    pub fn solo_exit(&mut self, role: Role) {
        let others: Vec<Role> =
            self.parties.iter().map(|(r, _)| *r).filter(|r| *r != role && *r != Role::Ttp).collect();
        for r in others {
            self.frozen.insert(r);
            self.pending.retain(|p| !p.item.involves(r));
        }
        self.push(self.now, Item::Decide { role, decision: Decision::Exit });
    }

    pub fn is_crashed(&self, role: Role) -> bool {
        self.crashed.contains(&role)
    }

    /// Identifies the state for deduplication during enumeration.
    pub fn fingerprint(&self) -> Hash32 {
        let bytes = serde_json::to_vec(&(
            self.chain.digest(),
            &self.parties,
            &self.pending,
            self.now,
            self.next_block,
            &self.hooks,
            &self.crashed,
            &self.frozen,
            &self.knowledge,
        ))
        .expect("state serializes");
        sha256(&bytes)
    }

    pub fn into_trace(self, truncated: bool, with_schedule: bool) -> Trace {
        let outcomes = self
            .parties
            .iter()
            .map(|(r, p)| (*r, p.outcome().cloned()))
            .collect();
        Trace {
            scenario: (*self.scenario).clone(),
            schedule: with_schedule.then_some(self.schedule),
            events: self.log,
            outcomes,
            finalized: self.finalized,
            truncated,
            end_time: self.now,
            chain: self.chain,
            setup: self.setup,
        }
    }
}
