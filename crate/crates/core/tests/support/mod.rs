//! Strategies and checks shared by the property suite and the acceptance run.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use fairpay::chain::{Chain, ChainParams, OutPoint, SpendCondition, TxBuilder, TxId};
use fairpay::contracts::{CallOutcome, ContractError, ExchangeHeader, ExchangeId, OfeContractState, OfeEntry, SigExchangeState, SigPhase};
use fairpay::crypto::{keygen, matches, ve_decrypt, ve_encrypt, ve_verify, ExchangeItem, Expectation, KeyPair, Scheme, VeError};
use fairpay::protocols::ProtocolId;
use fairpay::sched::{replay, run, Adversary, Scenario};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub const CASES: u32 = 1000;

pub fn keys() -> &'static [KeyPair] {
    static KEYS: OnceLock<Vec<KeyPair>> = OnceLock::new();
    KEYS.get_or_init(|| (1..=4u8).map(|i| keygen(Scheme::Ed25519, [i; 32])).collect())
}

const MESSAGE: &[u8] = b"receipt";
const FUNDS: u64 = 50;

#[derive(Clone, Debug)]
pub enum Op {
    Pay { from: usize, to: usize, value: u64, nonce: u64 },
    Offer { from: usize, to: usize, value: u64, deadline: Option<u64>, nonce: u64 },
    Claim { offer: usize, by_payee: bool, good_sig: bool },
    Mine { order: Vec<usize> },
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..4usize, 0..4usize, 0..40u64, 0..3u64).prop_map(|(from, to, value, nonce)| Op::Pay { from, to, value, nonce }),
        (0..4usize, 0..4usize, 1..40u64, proptest::option::of(1..6u64), 0..3u64)
            .prop_map(|(from, to, value, deadline, nonce)| Op::Offer { from, to, value, deadline, nonce }),
        (0..8usize, any::<bool>(), any::<bool>()).prop_map(|(offer, by_payee, good_sig)| Op::Claim { offer, by_payee, good_sig }),
        proptest::collection::vec(0..8usize, 0..6).prop_map(|order| Op::Mine { order }),
    ]
}

pub fn ops() -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(op(), 1..40)
}

fn build_chain() -> Chain {
    let alloc: Vec<_> = keys().iter().map(|k| (k.address, FUNDS)).collect();
    Chain::genesis(ChainParams { block_interval_units: 10, confirm_depth: 1 }, &alloc, Vec::new())
}

/// Applies `ops`, checking after every block that value is conserved and
/// that no two confirmed transactions conflict.
pub fn check_chain(ops: &[Op]) -> Result<(), TestCaseError> {
    let k = keys();
    let mut chain = build_chain();
    let total = chain.total_value();
    let mut offers: Vec<(TxId, usize, usize)> = Vec::new();
    for op in ops {
        match op {
            Op::Pay { from, to, value, nonce } => {
                let _ = chain.submit(TxBuilder::payment(k[*to].address, *value).nonce(*nonce).sign(&k[*from]));
            }
            Op::Offer { from, to, value, deadline, nonce } => {
                let tx = TxBuilder::offer(
                    *value,
                    vec![
                        SpendCondition::SignatureOnMessage { message: MESSAGE.to_vec(), signer: k[*to].address, max_height: *deadline },
                        SpendCondition::AbortBy { owner: k[*from].address, min_height: *deadline },
                    ],
                )
                .nonce(*nonce)
                .sign(&k[*from]);
                offers.push((tx.id, *from, *to));
                let _ = chain.submit(tx);
            }
            Op::Claim { offer, by_payee, good_sig } => {
                let Some(&(id, from, to)) = offers.get(offer % offers.len().max(1)) else { continue };
                let op = OutPoint { tx: id, index: 0 };
                let tx = if *by_payee {
                    let sig = if *good_sig { k[to].sign(MESSAGE) } else { vec![7; 64] };
                    TxBuilder::claim(op, 0).payload(sig).sign(&k[to])
                } else {
                    TxBuilder::claim(op, 1).sign(&k[from])
                };
                let _ = chain.submit(tx);
            }
            Op::Mine { order } => {
                let now = (chain.tip_height() + 1) * 10;
                chain.mine_block(now, Some(order));
                prop_assert_eq!(chain.total_value(), total);
                let mut keys_used = BTreeSet::new();
                for b in chain.blocks() {
                    for tx in &b.txs {
                        for key in tx.conflict_keys() {
                            prop_assert!(keys_used.insert(key), "two confirmed transactions share {:?}", key);
                        }
                    }
                }
            }
        }
    }
    let confirmed: Vec<_> = chain.blocks().iter().flat_map(|b| b.txs.iter()).collect();
    for (i, a) in confirmed.iter().enumerate() {
        for b in &confirmed[i + 1..] {
            prop_assert!(!a.conflicts_with(b));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum OfeOp {
    Abort { caller: usize, exchange: usize },
    Resolve { caller: usize, exchange: usize, item: bool },
}

pub fn ofe_ops() -> impl Strategy<Value = Vec<OfeOp>> {
    let one = prop_oneof![
        (0..4usize, 0..3usize).prop_map(|(caller, exchange)| OfeOp::Abort { caller, exchange }),
        (0..4usize, 0..3usize, any::<bool>()).prop_map(|(caller, exchange, item)| OfeOp::Resolve { caller, exchange, item }),
    ];
    proptest::collection::vec(one, 1..30)
}

fn header(i: usize) -> ExchangeHeader {
    let k = keys();
    let e_a = Expectation::Signature { expected_signer: k[1].address, expected_message: MESSAGE.to_vec() };
    let e_b = Expectation::Payment { expected_value: 10, expected_payee: k[1].address };
    ExchangeHeader::new(k[0].address, k[1].address, &e_a, &e_b, i as u64)
}

/// Every OFE call behaves as if applied one at a time to a register that is
/// written at most once per exchange.
pub fn check_ofe(ops: &[OfeOp]) -> Result<(), TestCaseError> {
    let k = keys();
    let ttp = 3;
    let item = ExchangeItem::receipt(&k[1], MESSAGE);
    let mut c = OfeContractState::new(k[ttp].address);
    let mut first: BTreeMap<ExchangeId, OfeEntry> = BTreeMap::new();
    for op in ops {
        match op {
            OfeOp::Abort { caller, exchange } => {
                let h = header(*exchange);
                let got = c.abort(k[*caller].address, &h);
                let want = match (first.get(&h.id()), *caller == 0) {
                    (_, false) => Err(ContractError::Rejected),
                    (None, true) => {
                        first.insert(h.id(), OfeEntry::AbortToken);
                        Ok(CallOutcome::AbortRecorded)
                    }
                    (Some(OfeEntry::AbortToken), true) => Ok(CallOutcome::AbortRecorded),
                    (Some(OfeEntry::ResolvedItem(i)), true) => Ok(CallOutcome::ResolvedItem(i.clone())),
                };
                prop_assert_eq!(got, want);
            }
            OfeOp::Resolve { caller, exchange, item: with_item } => {
                let h = header(*exchange);
                let resolved = with_item.then(|| item.clone());
                let got = c.resolve(k[*caller].address, &h, resolved.clone());
                let want = match (first.get(&h.id()), *caller == ttp) {
                    (_, false) => Err(ContractError::NotAuthorized),
                    (None, true) => {
                        first.insert(h.id(), OfeEntry::ResolvedItem(resolved));
                        Ok(CallOutcome::NotAborted)
                    }
                    (Some(OfeEntry::AbortToken), true) => Ok(CallOutcome::Aborted),
                    (Some(OfeEntry::ResolvedItem(_)), true) => Ok(CallOutcome::NotAborted),
                };
                prop_assert_eq!(got, want);
            }
        }
        prop_assert_eq!(&c.entries, &first);
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum SigOp {
    Init { caller: usize, value: u64 },
    Abort { caller: usize },
    Resolve { caller: usize, good_sig: bool },
}

pub fn sig_ops() -> impl Strategy<Value = Vec<SigOp>> {
    let one = prop_oneof![
        (0..4usize, 0..30u64).prop_map(|(caller, value)| SigOp::Init { caller, value }),
        (0..4usize).prop_map(|caller| SigOp::Abort { caller }),
        (0..4usize, any::<bool>()).prop_map(|(caller, good_sig)| SigOp::Resolve { caller, good_sig }),
    ];
    proptest::collection::vec(one, 1..30)
}

/// Each initialized escrow ends in at most one of refund or payout, and the
/// amount released equals the amount locked.
pub fn check_sig_contract(ops: &[SigOp]) -> Result<(), TestCaseError> {
    let k = keys();
    let recipient = 1;
    let mut c = SigExchangeState::default();
    let mut locked: Option<(usize, u64)> = None;
    for op in ops {
        match op {
            SigOp::Init { caller, value } => {
                let r = c.init(k[*caller].address, FUNDS, *value, MESSAGE, k[recipient].address);
                match locked {
                    Some(_) => prop_assert_eq!(r, Err(ContractError::WrongState)),
                    None if *value == 0 => prop_assert_eq!(r, Err(ContractError::InsufficientFunds)),
                    None => {
                        prop_assert_eq!(r, Ok(CallOutcome::Initialized));
                        locked = Some((*caller, *value));
                    }
                }
            }
            SigOp::Abort { caller } => {
                let r = c.abort(k[*caller].address);
                match locked {
                    Some((o, v)) if o == *caller => {
                        prop_assert_eq!(r, Ok((CallOutcome::Refunded { amount: v }, k[o].address, v)));
                        locked = None;
                    }
                    _ => prop_assert!(r.is_err()),
                }
            }
            SigOp::Resolve { caller, good_sig } => {
                let sigma = if *good_sig { k[*caller].sign(MESSAGE) } else { vec![1; 64] };
                let r = c.resolve(k[*caller].address, &k[*caller].public, &sigma);
                match locked {
                    Some((_, v)) if *caller == recipient && *good_sig => {
                        prop_assert_eq!(r, Ok((CallOutcome::PaidOut { amount: v, sigma }, k[recipient].address, v)));
                        locked = None;
                    }
                    _ => prop_assert!(r.is_err()),
                }
            }
        }
        match locked {
            Some((o, v)) => {
                prop_assert_eq!(c.state, SigPhase::Initialized);
                prop_assert_eq!(c.escrow, v);
                prop_assert_eq!(c.originator, Some(k[o].address));
                prop_assert_eq!(&c.expected_message, MESSAGE);
            }
            None => {
                prop_assert_eq!(c.state, SigPhase::Uninitialized);
                prop_assert_eq!(c.escrow, 0);
            }
        }
    }
    Ok(())
}

pub fn item() -> impl Strategy<Value = ExchangeItem> {
    prop_oneof![
        (0..4usize, 0..4usize, 0..20u64).prop_map(|(from, to, value)| {
            let k = keys();
            ExchangeItem::PaymentSignature(Box::new(TxBuilder::payment(k[to].address, value).sign(&k[from])))
        }),
        (0..4usize, proptest::collection::vec(any::<u8>(), 0..4), any::<bool>()).prop_map(|(signer, message, good)| {
            let k = keys();
            let mut item = ExchangeItem::receipt(&k[signer], &message);
            if !good {
                if let ExchangeItem::ReceiptSignature { signature, .. } = &mut item {
                    signature[0] ^= 1;
                }
            }
            item
        }),
    ]
}

pub fn expectation() -> impl Strategy<Value = Expectation> {
    prop_oneof![
        (0..20u64, 0..4usize).prop_map(|(v, to)| Expectation::Payment { expected_value: v, expected_payee: keys()[to].address }),
        (0..4usize, proptest::collection::vec(any::<u8>(), 0..4))
            .prop_map(|(s, m)| Expectation::Signature { expected_signer: keys()[s].address, expected_message: m }),
    ]
}

/// Verification accepts exactly the ciphertexts whose sealed item meets the
/// claimed expectation, and only the named TTP can open them.
pub fn check_ve(item: &ExchangeItem, claimed: &Expectation, other: &Expectation) -> Result<(), TestCaseError> {
    let k = keys();
    let c = ve_encrypt(item, claimed, other, k[3].address);
    prop_assert_eq!(ve_verify(&c, claimed), matches(item, claimed));
    if other != claimed {
        prop_assert!(!ve_verify(&c, other));
    }
    let (opened, sealed) = ve_decrypt(&k[3], &c).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&opened, item);
    prop_assert_eq!(&sealed, other);
    prop_assert_eq!(ve_decrypt(&k[0], &c).unwrap_err(), VeError::NotAuthorized);
    Ok(())
}

pub fn scenario() -> impl Strategy<Value = Scenario> {
    let adversary = prop_oneof![
        Just(Adversary::None),
        (0..20_000u64).prop_map(|e| Adversary::DosDelayBob { extra_delay_units: e }),
        Just(Adversary::DoubleSpendAfterOfe),
        prop::sample::select(vec!["Watching", "AwaitIA", "Claiming", "Resolving", "AwaitPayment"])
            .prop_map(|p| Adversary::CrashBobAfter { phase: p.to_string() }),
        Just(Adversary::RaceAbortResolve),
        proptest::collection::vec(0..4usize, 0..8).prop_map(|choices| Adversary::OrderingController { choices }),
    ];
    (prop::sample::select(ProtocolId::ALL.to_vec()), adversary, 0..1000u64, 0..4u64, 1..200u64, 1000..6000u64, 1..8u64).prop_map(
        |(p, adversary, seed, k, delay, interval, timeout)| {
            Scenario::new(p).with(|s| {
                s.adversary = adversary;
                s.seed = seed;
                s.confirm_depth = k;
                s.msg_delay_units = delay;
                s.block_interval_units = interval;
                if p == ProtocolId::P1 {
                    s.timeout_height = Some(timeout);
                }
            })
        },
    )
}

pub fn check_replay(s: &Scenario) -> Result<(), TestCaseError> {
    let original = run(s).to_jsonl();
    let again = replay(&original).map_err(|e| TestCaseError::fail(e.to_string()))?.to_jsonl();
    prop_assert_eq!(original, again);
    Ok(())
}

/// Runs one property with the standard case count; returns a failure message.
pub fn run_property<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}
