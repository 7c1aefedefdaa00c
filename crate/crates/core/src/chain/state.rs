use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use super::tx::{ConflictKey, FormError, OutPoint, SpendCondition, Transaction, TxId, TxKind};
use crate::codec::{sha256, tagged_hash, Encode, Encoder, Hash32};
use crate::contracts::{self, contract_address, CallContext, CallOutcome, ContractError, ContractInstance};
use crate::crypto::{verify, we_decrypt, Address, PublicKey, WitnessCiphertext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChainParams {
    pub block_interval_units: u64,
    /// Depth at which a payee treats a transaction as settled. Zero means
    /// mempool presence suffices (zero-confirmation acceptance).
    pub confirm_depth: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams { block_interval_units: 5000, confirm_depth: 6 }
    }
}

/// Read access to confirmation status, as consumed by witness decryption.
pub trait ChainView {
    /// Number of blocks from the including block to the tip, inclusive.
    fn depth(&self, id: &TxId) -> Option<u64>;
    fn in_mempool(&self, id: &TxId) -> bool;

    fn contains(&self, id: &TxId, min_depth: u64) -> bool {
        match self.depth(id) {
            Some(d) => d >= min_depth,
            None => min_depth == 0 && self.in_mempool(id),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Lock {
    Conditions(Vec<SpendCondition>),
    /// Claim whose signature is only revealed by witness decryption. Miners
    /// settle it once the claim is buried deep enough.
    WitnessPending {
        ciphertext: WitnessCiphertext,
        message: Vec<u8>,
        signer: PublicKey,
        refund_to: Address,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Output {
    pub value: u64,
    pub lock: Lock,
    pub creator: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Settlement {
    pub outpoint: OutPoint,
    pub to: Address,
    pub value: u64,
    /// True when the signer was paid, false when the originator was refunded.
    pub paid: bool,
}

impl Encode for Settlement {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.outpoint).item(&self.to).u64(self.value).bool(self.paid);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Hash32,
    pub txs: Vec<Transaction>,
    pub settlements: Vec<Settlement>,
    pub block_hash: Hash32,
}

impl Block {
    fn compute_hash(&self) -> Hash32 {
        let mut enc = Encoder::default();
        enc.u64(self.height).hash(&self.parent_hash);
        let ids: Vec<Hash32> = self.txs.iter().map(|t| t.id.0).collect();
        enc.u64(ids.len() as u64);
        for id in &ids {
            enc.hash(id);
        }
        enc.list(&self.settlements);
        tagged_hash("fairpay/block", &enc.finish())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Confirmation {
    pub depth: Option<u64>,
    pub in_mempool: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubmitError {
    #[error("malformed transaction: {0}")]
    Malformed(#[from] FormError),
    #[error("transaction already known")]
    AlreadyKnown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DropReason {
    Conflict,
    InsufficientFunds,
    MissingOutput,
    ConditionUnmet,
    TimelockExpired,
    UnknownContract,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct MempoolEntry {
    tx: Transaction,
    eligible_at: u64,
}

/// What one `mine_block` call changed, for notifying parties.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlockReport {
    pub height: u64,
    pub included: Vec<TxId>,
    pub dropped: Vec<(TxId, DropReason)>,
    pub settlements: Vec<Settlement>,
}

enum Verdict {
    Include,
    Defer,
    Drop(DropReason),
}

/// Single linear chain with a public mempool.
#[derive(Clone, Debug)]
pub struct Chain {
    pub params: ChainParams,
    blocks: Vec<Block>,
    mempool: Vec<MempoolEntry>,
    balances: BTreeMap<Address, u64>,
    utxos: BTreeMap<OutPoint, Output>,
    consumed: BTreeSet<ConflictKey>,
    inclusion: BTreeMap<TxId, u64>,
    receipts: BTreeMap<TxId, CallOutcome>,
    contracts: BTreeMap<Address, ContractInstance>,
    /// Every transaction ever accepted into the mempool; broadcast is public.
    seen: BTreeMap<TxId, Transaction>,
    dropped: BTreeMap<TxId, DropReason>,
}

impl Chain {
    /// Creates a chain whose genesis block funds `allocations` and includes
    /// `genesis_txs` (typically contract deployments).
    pub fn genesis(params: ChainParams, allocations: &[(Address, u64)], genesis_txs: Vec<Transaction>) -> Self {
        let mut enc = Encoder::default();
        for (a, v) in allocations {
            enc.item(a).u64(*v);
        }
        let mut chain = Chain {
            params,
            blocks: Vec::new(),
            mempool: Vec::new(),
            balances: allocations.iter().copied().collect(),
            utxos: BTreeMap::new(),
            consumed: BTreeSet::new(),
            inclusion: BTreeMap::new(),
            receipts: BTreeMap::new(),
            contracts: BTreeMap::new(),
            seen: BTreeMap::new(),
            dropped: BTreeMap::new(),
        };
        let parent = sha256(&enc.finish());
        let mut txs = Vec::new();
        for tx in genesis_txs {
            if tx.check_form().is_ok() {
                if let Verdict::Include = chain.check(&tx, 0, &BTreeSet::new(), &BTreeSet::new()) {
                    chain.apply(&tx, 0);
                    chain.seen.insert(tx.id, tx.clone());
                    txs.push(tx);
                }
            }
        }
        let mut block = Block { height: 0, parent_hash: parent, txs, settlements: Vec::new(), block_hash: Hash32::ZERO };
        block.block_hash = block.compute_hash();
        chain.blocks.push(block);
        chain
    }

    pub fn tip_height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn balance(&self, a: &Address) -> u64 {
        self.balances.get(a).copied().unwrap_or(0)
    }

    pub fn contract(&self, a: &Address) -> Option<&ContractInstance> {
        self.contracts.get(a)
    }

    pub fn receipt(&self, id: &TxId) -> Option<&CallOutcome> {
        self.receipts.get(id)
    }

    pub fn output(&self, op: &OutPoint) -> Option<&Output> {
        self.utxos.get(op)
    }

    pub fn utxos(&self) -> impl Iterator<Item = (&OutPoint, &Output)> {
        self.utxos.iter()
    }

    pub fn seen(&self, id: &TxId) -> Option<&Transaction> {
        self.seen.get(id)
    }

    pub fn seen_txs(&self) -> impl Iterator<Item = &Transaction> {
        self.seen.values()
    }

    pub fn dropped_reason(&self, id: &TxId) -> Option<&DropReason> {
        self.dropped.get(id)
    }

    pub fn mempool(&self) -> impl Iterator<Item = &Transaction> {
        self.mempool.iter().map(|e| &e.tx)
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn inclusion_height(&self, id: &TxId) -> Option<u64> {
        self.inclusion.get(id).copied()
    }

    pub fn is_consumed(&self, key: &ConflictKey) -> bool {
        self.consumed.contains(key)
    }

    /// Σ balances + Σ unspent output values. Constant over time.
    pub fn total_value(&self) -> u64 {
        self.balances.values().sum::<u64>() + self.utxos.values().map(|o| o.value).sum::<u64>()
    }

    pub fn confirmations(&self, id: &TxId) -> Confirmation {
        Confirmation { depth: self.depth(id), in_mempool: self.in_mempool(id) }
    }

    pub fn chain_contains(&self, id: &TxId, min_depth: u64) -> bool {
        self.contains(id, min_depth)
    }

    /// Whether `tx` could still be included against the current state,
    /// ignoring timelocks.
    pub fn still_valid(&self, tx: &Transaction) -> bool {
        if self.inclusion.contains_key(&tx.id) {
            return true;
        }
        tx.check_form().is_ok()
            && !tx.conflict_keys().iter().any(|k| self.consumed.contains(k))
            && self.balance(&tx.sender) >= tx.value
    }

    /// Digest of the full chain state including the mempool.
    pub fn digest(&self) -> Hash32 {
        let mut enc = Encoder::default();
        enc.hash(&self.tip().block_hash);
        for e in &self.mempool {
            enc.hash(&e.tx.id.0).u64(e.eligible_at);
        }
        tagged_hash("fairpay/chain-digest", &enc.finish())
    }

    /// Broadcasts `tx`. Conflicts with confirmed state are refused; mutually
    /// conflicting unconfirmed transactions may coexist.
    pub fn submit(&mut self, tx: Transaction) -> Result<bool, SubmitError> {
        self.submit_eligible_at(tx, 0)
    }

    /// Like [`submit`](Self::submit) but miners ignore the transaction until
    /// logical time `eligible_at`.
    pub fn submit_eligible_at(&mut self, tx: Transaction, eligible_at: u64) -> Result<bool, SubmitError> {
        tx.check_form()?;
        if self.inclusion.contains_key(&tx.id) || self.mempool.iter().any(|e| e.tx.id == tx.id) {
            return Err(SubmitError::AlreadyKnown);
        }
        if tx.conflict_keys().iter().any(|k| self.consumed.contains(k)) {
            return Ok(false);
        }
        self.dropped.remove(&tx.id);
        self.seen.insert(tx.id, tx.clone());
        self.mempool.push(MempoolEntry { tx, eligible_at });
        Ok(true)
    }

    fn check(&self, tx: &Transaction, height: u64, block_keys: &BTreeSet<ConflictKey>, pending: &BTreeSet<TxId>) -> Verdict {
        if tx
            .conflict_keys()
            .iter()
            .any(|k| self.consumed.contains(k) || block_keys.contains(k))
        {
            return Verdict::Drop(DropReason::Conflict);
        }
        match &tx.kind {
            TxKind::Payment { .. } | TxKind::Offer => {
                if self.balance(&tx.sender) < tx.value {
                    return Verdict::Drop(DropReason::InsufficientFunds);
                }
                Verdict::Include
            }
            TxKind::Claim { condition } => self.check_claim(tx, *condition, height, pending),
            TxKind::ContractDeploy { .. } => Verdict::Include,
            TxKind::ContractCall { contract, .. } => {
                if self.contracts.contains_key(contract) {
                    Verdict::Include
                } else {
                    Verdict::Drop(DropReason::UnknownContract)
                }
            }
        }
    }

    fn check_claim(&self, tx: &Transaction, condition: u32, height: u64, pending: &BTreeSet<TxId>) -> Verdict {
        let op = tx.spends[0];
        let Some(out) = self.utxos.get(&op) else {
            return if pending.contains(&op.tx) { Verdict::Defer } else { Verdict::Drop(DropReason::MissingOutput) };
        };
        let Lock::Conditions(conds) = &out.lock else {
            return Verdict::Drop(DropReason::ConditionUnmet);
        };
        let Some(cond) = conds.get(condition as usize) else {
            return Verdict::Drop(DropReason::ConditionUnmet);
        };
        match cond {
            SpendCondition::SignatureOnMessage { message, signer, max_height } => {
                if tx.sender != *signer {
                    return Verdict::Drop(DropReason::ConditionUnmet);
                }
                if max_height.is_some_and(|t| height >= t) {
                    return Verdict::Drop(DropReason::TimelockExpired);
                }
                match &tx.witness {
                    Some(w) if w.statement.sig_tx_id == tx.id => Verdict::Include,
                    Some(_) => Verdict::Drop(DropReason::ConditionUnmet),
                    None if verify(&tx.sender_key, message, &tx.payload) => Verdict::Include,
                    None => Verdict::Drop(DropReason::ConditionUnmet),
                }
            }
            SpendCondition::AbortBy { owner, min_height } => {
                if tx.sender != *owner {
                    return Verdict::Drop(DropReason::ConditionUnmet);
                }
                if min_height.is_some_and(|t| height < t) {
                    return Verdict::Defer;
                }
                Verdict::Include
            }
            SpendCondition::Unconditional { owner } => {
                if tx.sender == *owner {
                    Verdict::Include
                } else {
                    Verdict::Drop(DropReason::ConditionUnmet)
                }
            }
        }
    }

    fn debit(&mut self, a: &Address, v: u64) {
        let b = self.balances.entry(*a).or_insert(0);
        *b = b.checked_sub(v).expect("debit checked before apply");
    }

    fn credit(&mut self, a: &Address, v: u64) {
        *self.balances.entry(*a).or_insert(0) += v;
    }

    fn apply(&mut self, tx: &Transaction, height: u64) {
        for k in tx.conflict_keys() {
            self.consumed.insert(k);
        }
        self.inclusion.insert(tx.id, height);
        match &tx.kind {
            TxKind::Payment { to } => {
                self.debit(&tx.sender, tx.value);
                self.credit(to, tx.value);
            }
            TxKind::Offer => {
                self.debit(&tx.sender, tx.value);
                self.utxos.insert(
                    OutPoint { tx: tx.id, index: 0 },
                    Output { value: tx.value, lock: Lock::Conditions(tx.conditions.clone()), creator: tx.sender },
                );
            }
            TxKind::Claim { condition } => {
                let out = self.utxos.remove(&tx.spends[0]).expect("checked");
                let Lock::Conditions(conds) = &out.lock else { unreachable!("checked") };
                let cond = &conds[*condition as usize];
                match (&tx.witness, cond) {
                    (Some(w), SpendCondition::SignatureOnMessage { message, .. }) => {
                        self.utxos.insert(
                            OutPoint { tx: tx.id, index: 0 },
                            Output {
                                value: out.value,
                                lock: Lock::WitnessPending {
                                    ciphertext: w.clone(),
                                    message: message.clone(),
                                    signer: tx.sender_key.clone(),
                                    refund_to: out.creator,
                                },
                                creator: tx.sender,
                            },
                        );
                    }
                    _ => self.credit(&cond.beneficiary(), out.value),
                }
            }
            TxKind::ContractDeploy { contract } => {
                self.contracts.insert(contract_address(&tx.id.0), ContractInstance::deploy(contract));
            }
            TxKind::ContractCall { contract, call } => {
                let caller_balance = self.balance(&tx.sender);
                let ctx = CallContext {
                    caller: tx.sender,
                    caller_key: &tx.sender_key,
                    value: tx.value,
                    caller_balance,
                };
                let instance = self.contracts.get_mut(contract).expect("checked");
                let effects = if tx.value > caller_balance {
                    contracts::Effects {
                        outcome: CallOutcome::Failed(ContractError::InsufficientFunds),
                        accept_value: false,
                        payouts: Vec::new(),
                    }
                } else {
                    contracts::execute(instance, &ctx, call)
                };
                if effects.accept_value {
                    self.debit(&tx.sender, tx.value);
                    self.credit(contract, tx.value);
                }
                for (to, amount) in &effects.payouts {
                    self.debit(contract, *amount);
                    self.credit(to, *amount);
                }
                self.receipts.insert(tx.id, effects.outcome);
            }
        }
    }

    fn settle_matured(&mut self) -> Vec<Settlement> {
        let matured: Vec<(OutPoint, Output)> = self
            .utxos
            .iter()
            .filter(|(_, o)| match &o.lock {
                Lock::WitnessPending { ciphertext, .. } => {
                    self.contains(&ciphertext.statement.sig_tx_id, ciphertext.statement.min_depth.max(1))
                }
                _ => false,
            })
            .map(|(op, o)| (*op, o.clone()))
            .collect();
        let mut settled = Vec::new();
        for (op, out) in matured {
            let Lock::WitnessPending { ciphertext, message, signer, refund_to } = &out.lock else { continue };
            let valid = we_decrypt(&*self, ciphertext).is_ok_and(|sigma| verify(signer, message, &sigma));
            let to = if valid { signer.address() } else { *refund_to };
            self.utxos.remove(&op);
            self.credit(&to, out.value);
            settled.push(Settlement { outpoint: op, to, value: out.value, paid: valid });
        }
        settled
    }

    /// Produces the next block at logical time `now`.
    ///
    /// The mempool is scanned in arrival order, or in `ordering_hint` order
    /// (indices into the current mempool; unlisted entries follow in arrival
    /// order). Among conflicting transactions the first valid one wins and
    /// the rest are dropped for good. Transactions that may become valid
    /// later (height locks, delayed relay) stay in the mempool.
    pub fn mine_block(&mut self, now: u64, ordering_hint: Option<&[usize]>) -> BlockReport {
        let height = self.tip_height() + 1;
        let n = self.mempool.len();
        let mut order: Vec<usize> = Vec::with_capacity(n);
        if let Some(hint) = ordering_hint {
            for &i in hint {
                if i < n && !order.contains(&i) {
                    order.push(i);
                }
            }
        }
        for i in 0..n {
            if !order.contains(&i) {
                order.push(i);
            }
        }
        let entries = std::mem::take(&mut self.mempool);
        let mut pending: BTreeSet<TxId> = entries.iter().map(|e| e.tx.id).collect();
        let mut keep = vec![false; n];
        let mut block_keys = BTreeSet::new();
        let mut txs = Vec::new();
        let mut report = BlockReport { height, ..Default::default() };
        // Provisional block so depth queries during settlement see this height.
        self.blocks.push(Block {
            height,
            parent_hash: self.tip().block_hash,
            txs: Vec::new(),
            settlements: Vec::new(),
            block_hash: Hash32::ZERO,
        });
        for i in order {
            let e = &entries[i];
            if e.eligible_at > now {
                keep[i] = true;
                continue;
            }
            match self.check(&e.tx, height, &block_keys, &pending) {
                Verdict::Include => {
                    pending.remove(&e.tx.id);
                    for k in e.tx.conflict_keys() {
                        block_keys.insert(k);
                    }
                    self.apply(&e.tx, height);
                    report.included.push(e.tx.id);
                    txs.push(e.tx.clone());
                }
                Verdict::Defer => keep[i] = true,
                Verdict::Drop(reason) => {
                    pending.remove(&e.tx.id);
                    self.dropped.insert(e.tx.id, reason.clone());
                    report.dropped.push((e.tx.id, reason));
                }
            }
        }
        self.mempool = entries.into_iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| e).collect();
        // Deferred entries that now conflict with confirmed state can never confirm.
        let consumed = &self.consumed;
        let (live, dead): (Vec<_>, Vec<_>) = std::mem::take(&mut self.mempool)
            .into_iter()
            .partition(|e| !e.tx.conflict_keys().iter().any(|k| consumed.contains(k)));
        for e in dead {
            self.dropped.insert(e.tx.id, DropReason::Conflict);
            report.dropped.push((e.tx.id, DropReason::Conflict));
        }
        self.mempool = live;
        report.settlements = self.settle_matured();
        let block = self.blocks.last_mut().expect("just pushed");
        block.txs = txs;
        block.settlements = report.settlements.clone();
        block.block_hash = block.compute_hash();
        report
    }
}

impl ChainView for Chain {
    fn depth(&self, id: &TxId) -> Option<u64> {
        self.inclusion.get(id).map(|h| self.tip_height() - h + 1)
    }

    fn in_mempool(&self, id: &TxId) -> bool {
        self.mempool.iter().any(|e| e.tx.id == *id)
    }
}
