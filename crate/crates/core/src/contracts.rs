//! Native contract handlers: the stateless-TTP helper for optimistic fair
//! exchange and the signature-for-payment escrow.
//!
//! Handlers are pure state transitions. The chain executes them atomically
//! inside `mine_block`, moves any accepted call value into the contract's
//! account, and applies the returned payouts.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{hex_bytes, tagged_hash, Encode, Encoder, Hash32};
use crate::crypto::{verify, Address, ExchangeItem, Expectation, PublicKey};

/// Unique identifier of one protocol instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExchangeId(pub Hash32);

/// Public parameters that determine an [`ExchangeId`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExchangeHeader {
    pub originator: Address,
    pub recipient: Address,
    pub originator_expectation: Hash32,
    pub recipient_expectation: Hash32,
    pub nonce: u64,
}

impl ExchangeHeader {
    pub fn new(originator: Address, recipient: Address, e_a: &Expectation, e_b: &Expectation, nonce: u64) -> Self {
        ExchangeHeader {
            originator,
            recipient,
            originator_expectation: tagged_hash("fairpay/expectation", &e_a.to_canonical_bytes()),
            recipient_expectation: tagged_hash("fairpay/expectation", &e_b.to_canonical_bytes()),
            nonce,
        }
    }

    pub fn id(&self) -> ExchangeId {
        ExchangeId(tagged_hash("fairpay/exchange", &self.to_canonical_bytes()))
    }
}

impl Encode for ExchangeHeader {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.originator)
            .item(&self.recipient)
            .hash(&self.originator_expectation)
            .hash(&self.recipient_expectation)
            .u64(self.nonce);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ContractKind {
    Ofe { ttp: Address },
    SigExchange,
}

impl Encode for ContractKind {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            ContractKind::Ofe { ttp } => enc.tag(0).item(ttp),
            ContractKind::SigExchange => enc.tag(1),
        };
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ContractCall {
    OfeAbort { exchange: ExchangeHeader },
    OfeResolve { exchange: ExchangeHeader, resolved_item: Option<ExchangeItem> },
    SigInit {
        #[serde(with = "hex_bytes")]
        message: Vec<u8>,
        recipient: Address,
    },
    SigAbort,
    SigResolve {
        #[serde(with = "hex_bytes")]
        sigma: Vec<u8>,
    },
}

impl Encode for ContractCall {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            ContractCall::OfeAbort { exchange } => {
                enc.tag(0).item(exchange);
            }
            ContractCall::OfeResolve { exchange, resolved_item } => {
                enc.tag(1).item(exchange);
                match resolved_item {
                    None => enc.tag(0),
                    Some(i) => enc.tag(1).item(i),
                };
            }
            ContractCall::SigInit { message, recipient } => {
                enc.tag(2).bytes(message).item(recipient);
            }
            ContractCall::SigAbort => {
                enc.tag(3);
            }
            ContractCall::SigResolve { sigma } => {
                enc.tag(4).bytes(sigma);
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
pub enum ContractError {
    #[error("call rejected")]
    Rejected,
    #[error("caller not authorized")]
    NotAuthorized,
    #[error("contract in wrong state")]
    WrongState,
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("caller is not the originator")]
    NotOriginator,
    #[error("caller is not the recipient")]
    NotRecipient,
    #[error("signature does not verify")]
    InvalidSignature,
    #[error("call does not apply to this contract")]
    WrongContract,
    #[error("no such contract")]
    UnknownContract,
}

/// Result of a contract call, recorded publicly on chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CallOutcome {
    AbortRecorded,
    ResolvedItem(Option<ExchangeItem>),
    Aborted,
    NotAborted,
    Initialized,
    Refunded { amount: u64 },
    PaidOut {
        amount: u64,
        #[serde(with = "hex_bytes")]
        sigma: Vec<u8>,
    },
    Failed(ContractError),
}

impl CallOutcome {
    pub fn is_failure(&self) -> bool {
        matches!(self, CallOutcome::Failed(_))
    }
}

impl Encode for CallOutcome {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            CallOutcome::AbortRecorded => enc.tag(0),
            CallOutcome::ResolvedItem(None) => enc.tag(1),
            CallOutcome::ResolvedItem(Some(i)) => enc.tag(2).item(i),
            CallOutcome::Aborted => enc.tag(3),
            CallOutcome::NotAborted => enc.tag(4),
            CallOutcome::Initialized => enc.tag(5),
            CallOutcome::Refunded { amount } => enc.tag(6).u64(*amount),
            CallOutcome::PaidOut { amount, sigma } => enc.tag(7).u64(*amount).bytes(sigma),
            CallOutcome::Failed(e) => enc.tag(8).bytes(e.to_string().as_bytes()),
        };
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OfeEntry {
    AbortToken,
    ResolvedItem(Option<ExchangeItem>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OfeContractState {
    pub ttp: Address,
    pub entries: BTreeMap<ExchangeId, OfeEntry>,
}

impl OfeContractState {
    pub fn new(ttp: Address) -> Self {
        OfeContractState { ttp, entries: BTreeMap::new() }
    }

    pub fn abort(&mut self, caller: Address, exchange: &ExchangeHeader) -> Result<CallOutcome, ContractError> {
        let id = exchange.id();
        let is_originator = caller == exchange.originator;
        match self.entries.get(&id) {
            None if is_originator => {
                self.entries.insert(id, OfeEntry::AbortToken);
                Ok(CallOutcome::AbortRecorded)
            }
            Some(OfeEntry::AbortToken) if is_originator => Ok(CallOutcome::AbortRecorded),
            Some(OfeEntry::ResolvedItem(item)) if is_originator => Ok(CallOutcome::ResolvedItem(item.clone())),
            _ => Err(ContractError::Rejected),
        }
    }

    pub fn resolve(
        &mut self,
        caller: Address,
        exchange: &ExchangeHeader,
        resolved_item: Option<ExchangeItem>,
    ) -> Result<CallOutcome, ContractError> {
        if caller != self.ttp {
            return Err(ContractError::NotAuthorized);
        }
        let id = exchange.id();
        match self.entries.get(&id) {
            Some(OfeEntry::AbortToken) => Ok(CallOutcome::Aborted),
            Some(OfeEntry::ResolvedItem(_)) => Ok(CallOutcome::NotAborted),
            None => {
                self.entries.insert(id, OfeEntry::ResolvedItem(resolved_item));
                Ok(CallOutcome::NotAborted)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SigPhase {
    Uninitialized,
    Initialized,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SigExchangeState {
    pub state: SigPhase,
    pub originator: Option<Address>,
    pub recipient: Option<Address>,
    #[serde(with = "hex_bytes")]
    pub expected_message: Vec<u8>,
    pub escrow: u64,
}

impl Default for SigExchangeState {
    fn default() -> Self {
        SigExchangeState {
            state: SigPhase::Uninitialized,
            originator: None,
            recipient: None,
            expected_message: Vec::new(),
            escrow: 0,
        }
    }
}

impl SigExchangeState {
    pub fn init(
        &mut self,
        caller: Address,
        caller_balance: u64,
        payment: u64,
        message: &[u8],
        recipient: Address,
    ) -> Result<CallOutcome, ContractError> {
        if self.state != SigPhase::Uninitialized {
            return Err(ContractError::WrongState);
        }
        if payment == 0 || caller_balance < payment {
            return Err(ContractError::InsufficientFunds);
        }
        *self = SigExchangeState {
            state: SigPhase::Initialized,
            originator: Some(caller),
            recipient: Some(recipient),
            expected_message: message.to_vec(),
            escrow: payment,
        };
        Ok(CallOutcome::Initialized)
    }

    /// On success returns the refund to pay out to the originator.
    pub fn abort(&mut self, caller: Address) -> Result<(CallOutcome, Address, u64), ContractError> {
        if self.state != SigPhase::Initialized {
            return Err(ContractError::WrongState);
        }
        if self.originator != Some(caller) {
            return Err(ContractError::NotOriginator);
        }
        let amount = self.escrow;
        *self = SigExchangeState::default();
        Ok((CallOutcome::Refunded { amount }, caller, amount))
    }

    pub fn resolve(
        &mut self,
        caller: Address,
        caller_key: &PublicKey,
        sigma: &[u8],
    ) -> Result<(CallOutcome, Address, u64), ContractError> {
        if self.state != SigPhase::Initialized {
            return Err(ContractError::WrongState);
        }
        if self.recipient != Some(caller) || caller_key.address() != caller {
            return Err(ContractError::NotRecipient);
        }
        if !verify(caller_key, &self.expected_message, sigma) {
            return Err(ContractError::InvalidSignature);
        }
        let amount = self.escrow;
        *self = SigExchangeState::default();
        Ok((CallOutcome::PaidOut { amount, sigma: sigma.to_vec() }, caller, amount))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ContractInstance {
    Ofe(OfeContractState),
    SigExchange(SigExchangeState),
}

impl ContractInstance {
    pub fn deploy(kind: &ContractKind) -> Self {
        match kind {
            ContractKind::Ofe { ttp } => ContractInstance::Ofe(OfeContractState::new(*ttp)),
            ContractKind::SigExchange => ContractInstance::SigExchange(SigExchangeState::default()),
        }
    }
}

/// Caller-side facts the chain supplies to a handler.
pub struct CallContext<'a> {
    pub caller: Address,
    pub caller_key: &'a PublicKey,
    pub value: u64,
    pub caller_balance: u64,
}

/// What the chain must do after a handler returns.
#[derive(Debug, PartialEq, Eq)]
pub struct Effects {
    pub outcome: CallOutcome,
    /// Whether the attached call value moves into the contract account.
    pub accept_value: bool,
    pub payouts: Vec<(Address, u64)>,
}

impl Effects {
    fn failed(e: ContractError) -> Self {
        Effects { outcome: CallOutcome::Failed(e), accept_value: false, payouts: Vec::new() }
    }
}

/// Executes `call` against `instance`. Failed calls leave state untouched.
pub fn execute(instance: &mut ContractInstance, ctx: &CallContext<'_>, call: &ContractCall) -> Effects {
    let plain = |r: Result<CallOutcome, ContractError>| match r {
        Ok(outcome) => Effects { outcome, accept_value: false, payouts: Vec::new() },
        Err(e) => Effects::failed(e),
    };
    let payout = |r: Result<(CallOutcome, Address, u64), ContractError>| match r {
        Ok((outcome, to, amount)) => Effects { outcome, accept_value: false, payouts: vec![(to, amount)] },
        Err(e) => Effects::failed(e),
    };
    match (instance, call) {
        (ContractInstance::Ofe(s), ContractCall::OfeAbort { exchange }) => plain(s.abort(ctx.caller, exchange)),
        (ContractInstance::Ofe(s), ContractCall::OfeResolve { exchange, resolved_item }) => {
            plain(s.resolve(ctx.caller, exchange, resolved_item.clone()))
        }
        (ContractInstance::SigExchange(s), ContractCall::SigInit { message, recipient }) => {
            match s.init(ctx.caller, ctx.caller_balance, ctx.value, message, *recipient) {
                Ok(outcome) => Effects { outcome, accept_value: true, payouts: Vec::new() },
                Err(e) => Effects::failed(e),
            }
        }
        (ContractInstance::SigExchange(s), ContractCall::SigAbort) => payout(s.abort(ctx.caller)),
        (ContractInstance::SigExchange(s), ContractCall::SigResolve { sigma }) => {
            payout(s.resolve(ctx.caller, ctx.caller_key, sigma))
        }
        _ => Effects::failed(ContractError::WrongContract),
    }
}

/// Account address of a contract created by `deploy_tx`.
pub fn contract_address(deploy_tx: &Hash32) -> Address {
    Address(tagged_hash("fairpay/contract", &deploy_tx.0))
}
