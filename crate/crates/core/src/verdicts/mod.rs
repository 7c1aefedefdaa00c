//! Property verdicts over traces: realized fairness, effectiveness, strong
//! timeliness, and the per-protocol property matrix.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Chain, TxKind};
use crate::contracts::{CallOutcome, ContractCall};
use crate::crypto::{matches, we_decrypt, ExchangeItem};
use crate::protocols::{Evidence, Event, Payload, ProtocolId, Role, Setup, TtpReply};
use crate::sched::{self, Actor, Adversary, Mode, Scenario, SchedError, Trace, TraceBody};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FairnessGrade {
    Strong,
    WeakOnly,
    Violated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimelinessGrade {
    Strong,
    Weak,
    Violated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectivenessGrade {
    Holds,
    Fails,
    /// Holds for some honest configurations and fails for others.
    Conditional,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerdictError {
    #[error("trace hit the event budget before every party finished")]
    TruncatedTrace,
    #[error("no honest trace to judge")]
    InsufficientEvidence,
    #[error("suite lacks an honest scenario for {0:?}")]
    IncompleteSuite(Vec<ProtocolId>),
    #[error(transparent)]
    Sched(#[from] SchedError),
}

/// What each side actually ended up with, independent of what its machine
/// believes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Realized {
    pub alice_gained: bool,
    pub bob_gained: bool,
    /// Alice's receipt, when she has one.
    pub alice_receipt: Option<Evidence>,
    /// Best evidence each side could take to an arbiter.
    pub alice_evidence: Option<Evidence>,
    pub bob_evidence: Option<Evidence>,
}

fn delivered(trace: &Trace, to: Role) -> impl Iterator<Item = &Payload> {
    trace.events.iter().filter_map(move |e| match (&e.actor, &e.event) {
        (Actor::Party(r), TraceBody::Party(Event::Message { payload, .. })) if *r == to => Some(payload),
        _ => None,
    })
}

fn delivered_items(trace: &Trace, to: Role) -> Vec<&ExchangeItem> {
    delivered(trace, to)
        .filter_map(|p| match p {
            Payload::Ia(i) | Payload::Ib(i) | Payload::TtpReply(TtpReply::Item(i)) => Some(i),
            _ => None,
        })
        .collect()
}

fn receipt_item(setup: &Setup, sigma: &[u8]) -> ExchangeItem {
    ExchangeItem::ReceiptSignature { message: setup.message.clone(), signature: sigma.to_vec(), signer: setup.bob.public.clone() }
}

/// σ values the whole world can read off the chain's broadcast history.
fn public_sigmas(chain: &Chain, setup: &Setup) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for tx in chain.seen_txs() {
        if matches!(tx.kind, TxKind::Claim { .. }) && setup.valid_sigma(&tx.payload) {
            out.push(tx.payload.clone());
        }
        if let Some(ct) = &tx.witness {
            if let Ok(s) = we_decrypt(chain, ct) {
                if setup.valid_sigma(&s) {
                    out.push(s);
                }
            }
        }
        if let TxKind::ContractCall { call: ContractCall::SigResolve { sigma }, .. } = &tx.kind {
            if setup.valid_sigma(sigma) {
                out.push(sigma.clone());
            }
        }
    }
    out
}

/// The settled payout of the signature contract, if any.
fn chain_receipt(chain: &Chain) -> Option<Evidence> {
    chain.seen_txs().find_map(|tx| match (&tx.kind, chain.receipt(&tx.id)) {
        (TxKind::ContractCall { call: ContractCall::SigResolve { .. }, .. }, Some(CallOutcome::PaidOut { sigma, .. })) => {
            Some(Evidence::ChainReceipt { tx: tx.id, sigma: sigma.clone() })
        }
        _ => None,
    })
}

pub fn realize(trace: &Trace) -> Realized {
    let setup = &*trace.setup;
    let chain = &trace.chain;

    let bob_items = delivered_items(trace, Role::Bob);
    let payments: Vec<&ExchangeItem> = bob_items.iter().copied().filter(|i| matches(i, &setup.e_b)).collect();
    let bob_gained = chain.balance(&setup.bob.address) >= setup.value
        || payments.iter().any(|i| i.payment().is_some_and(|tx| tx.sender == setup.alice.address && chain.still_valid(tx)));

    let alice_receipt = if setup.protocol == ProtocolId::P3 {
        chain_receipt(chain)
    } else {
        delivered_items(trace, Role::Alice)
            .into_iter()
            .find(|i| matches(i, &setup.e_a))
            .cloned()
            .or_else(|| public_sigmas(chain, setup).first().map(|s| receipt_item(setup, s)))
            .map(Evidence::Signature)
    };

    let bob_evidence = payments
        .first()
        .map(|i| Evidence::Payment((*i).clone()))
        .or_else(|| public_sigmas(chain, setup).first().map(|s| Evidence::Signature(receipt_item(setup, s))));
    let alice_evidence = delivered(trace, Role::Alice).find_map(|p| match p {
        Payload::TtpReply(TtpReply::Aborted(t)) => Some(Evidence::Abort(t.clone())),
        _ => None,
    });

    Realized { alice_gained: alice_receipt.is_some(), bob_gained, alice_receipt, alice_evidence, bob_evidence }
}

/// Whether an arbiter holding only `setup` would accept `evidence`.
pub fn arbiter_check(evidence: &Evidence, setup: &Setup) -> bool {
    match evidence {
        Evidence::Signature(item) => matches(item, &setup.e_a),
        Evidence::Payment(item) => {
            matches(item, &setup.e_b) && item.payment().is_some_and(|tx| tx.sender == setup.alice.address)
        }
        Evidence::Abort(t) => {
            let contract = setup.ofe_contract.or(setup.sig_contract);
            t.verify(&setup.exchange_id(), &setup.ttp.address, contract.as_ref())
        }
        Evidence::ChainReceipt { .. } => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fairness {
    pub grade: FairnessGrade,
    pub realized: Realized,
}

pub fn judge_fairness(trace: &Trace) -> Result<Fairness, VerdictError> {
    if trace.truncated {
        return Err(VerdictError::TruncatedTrace);
    }
    let r = realize(trace);
    let setup = &*trace.setup;
    let grade = match (r.alice_gained, r.bob_gained) {
        (a, b) if a == b => FairnessGrade::Strong,
        (true, false) if r.bob_evidence.as_ref().is_some_and(|e| arbiter_check(e, setup)) => FairnessGrade::WeakOnly,
        (false, true) if r.alice_evidence.as_ref().is_some_and(|e| arbiter_check(e, setup)) => FairnessGrade::WeakOnly,
        _ => FairnessGrade::Violated,
    };
    Ok(Fairness { grade, realized: r })
}

/// Holds when both sides got what they wanted in every trace, fails when
/// they never did.
pub fn judge_effectiveness(traces: &[Trace]) -> Result<EffectivenessGrade, VerdictError> {
    if traces.is_empty() {
        return Err(VerdictError::InsufficientEvidence);
    }
    let ok = traces.iter().filter(|t| {
        let r = realize(t);
        r.alice_gained && r.bob_gained
    });
    Ok(combine_effectiveness(ok.count(), traces.len()))
}

fn combine_effectiveness(holds: usize, total: usize) -> EffectivenessGrade {
    match holds {
        0 => EffectivenessGrade::Fails,
        n if n == total => EffectivenessGrade::Holds,
        _ => EffectivenessGrade::Conditional,
    }
}

/// Blocks within which a solo exit counts as prompt, for confirm depth `k`.
pub fn prompt_blocks(k: u64) -> u64 {
    2 * k.max(1) + 2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Timeliness {
    pub grade: TimelinessGrade,
    /// Slowest solo exit seen, in blocks; `None` if one never finished.
    pub worst_blocks: Option<u64>,
    pub states: usize,
}

/// From every state reachable within `bound` choices, lets each unfinished
/// honest party exit alone and measures how many blocks that takes.
pub fn check_strong_timeliness(s: &Scenario, bound: usize) -> Result<Timeliness, VerdictError> {
    let k = s.confirm_depth;
    let prompt = prompt_blocks(k);
    let horizon = 4 * prompt + s.timeout_height.unwrap_or(0) + 10;
    let mut worst = Some(0u64);
    let mut grade = TimelinessGrade::Strong;
    let states = sched::explore(s, bound, |w, _, _| {
        for role in [Role::Alice, Role::Bob] {
            let done = w.party(role).is_none_or(|p| p.outcome().is_some());
            if done || w.is_crashed(role) {
                continue;
            }
            let mut solo = w.clone();
            solo.solo_exit(role);
            let start = solo.blocks_mined;
            solo.run_timed_until(start + horizon);
            let g = match solo.finalized.get(&role) {
                Some(m) => {
                    let b = m.blocks - start;
                    worst = worst.map(|x| x.max(b));
                    if b <= prompt {
                        TimelinessGrade::Strong
                    } else {
                        TimelinessGrade::Weak
                    }
                }
                None => {
                    worst = None;
                    TimelinessGrade::Violated
                }
            };
            grade = grade.max(g);
        }
    })?;
    Ok(Timeliness { grade, worst_blocks: worst, states })
}

/// Enumeration depth used for timeliness when the scenario names none.
pub const TIMELINESS_BOUND: usize = 4;

/// Summary of one scenario, as written to `verdict.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub name: Option<String>,
    pub protocol: ProtocolId,
    pub mode: Mode,
    pub traces: usize,
    pub fairness: FairnessGrade,
    pub effectiveness: EffectivenessGrade,
    pub timeliness: Option<TimelinessGrade>,
    pub timeliness_worst_blocks: Option<u64>,
    /// `None` when enumerated traces disagree.
    pub alice_got_expected: Option<bool>,
    pub bob_got_expected: Option<bool>,
    pub non_invasive: bool,
    /// Blocks mined before both parties finished, in the reported trace.
    pub blocks_to_completion: Option<u64>,
    pub completion_time: Option<u64>,
    pub party_txs: usize,
    pub mismatches: Vec<String>,
}

/// A verdict plus the trace it was read from: the worst one for enumerations.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub verdict: Verdict,
    pub trace: Trace,
}

fn agree(vals: &[bool]) -> Option<bool> {
    match vals.first() {
        Some(v) if vals.iter().all(|x| x == v) => Some(*v),
        _ => None,
    }
}

/// Runs a scenario in its mode and judges it.
pub fn evaluate(s: &Scenario) -> Result<Evaluation, VerdictError> {
    s.validate().map_err(SchedError::from)?;
    let traces = match s.mode {
        Mode::Run => vec![sched::run(s)],
        Mode::Enumerate => sched::enumerate(s, s.bound.unwrap_or(TIMELINESS_BOUND))?,
    };
    let mut judged = Vec::with_capacity(traces.len());
    for t in &traces {
        judged.push(judge_fairness(t)?);
    }
    let worst = (0..judged.len()).max_by_key(|&i| (judged[i].grade, std::cmp::Reverse(i))).ok_or(VerdictError::InsufficientEvidence)?;
    let effectiveness = judge_effectiveness(&traces)?;
    let wants_timeliness =
        s.adversary == Adversary::None || s.expect.as_ref().is_some_and(|e| e.timeliness.is_some());
    let timeliness = if wants_timeliness {
        Some(check_strong_timeliness(s, s.bound.unwrap_or(TIMELINESS_BOUND))?)
    } else {
        None
    };
    let alice: Vec<bool> = judged.iter().map(|j| j.realized.alice_gained).collect();
    let bob: Vec<bool> = judged.iter().map(|j| j.realized.bob_gained).collect();
    let non_invasive = judged
        .iter()
        .all(|j| !matches!(j.realized.alice_receipt, Some(Evidence::ChainReceipt { .. })));
    let trace = traces.into_iter().nth(worst).expect("index in range");
    let completion = trace.completion();
    let mut verdict = Verdict {
        name: s.name.clone(),
        protocol: s.protocol,
        mode: s.mode,
        traces: judged.len(),
        fairness: judged[worst].grade,
        effectiveness,
        timeliness: timeliness.as_ref().map(|t| t.grade),
        timeliness_worst_blocks: timeliness.as_ref().and_then(|t| t.worst_blocks),
        alice_got_expected: agree(&alice),
        bob_got_expected: agree(&bob),
        non_invasive,
        blocks_to_completion: completion.map(|m| m.blocks),
        completion_time: completion.map(|m| m.time),
        party_txs: trace.party_txs(),
        mismatches: Vec::new(),
    };
    verdict.mismatches = mismatches(s, &verdict);
    Ok(Evaluation { verdict, trace })
}

fn mismatches(s: &Scenario, v: &Verdict) -> Vec<String> {
    let Some(e) = &s.expect else { return Vec::new() };
    let mut out = Vec::new();
    let mut check = |field: &str, want: Option<String>, got: Option<String>| {
        if let Some(w) = want {
            if Some(&w) != got.as_ref() {
                out.push(format!("{field}: expected {w}, got {}", got.unwrap_or_else(|| "none".into())));
            }
        }
    };
    let dbg = |x: &dyn fmt::Debug| format!("{x:?}");
    check("fairness", e.fairness.map(|g| dbg(&g)), Some(dbg(&v.fairness)));
    check("effectiveness", e.effectiveness.map(|g| dbg(&g)), Some(dbg(&v.effectiveness)));
    check("timeliness", e.timeliness.map(|g| dbg(&g)), v.timeliness.map(|g| dbg(&g)));
    check("aliceGotExpected", e.alice_got_expected.map(|b| b.to_string()), v.alice_got_expected.map(|b| b.to_string()));
    check("bobGotExpected", e.bob_got_expected.map(|b| b.to_string()), v.bob_got_expected.map(|b| b.to_string()));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Duration {
    Short,
    Long,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixRow {
    pub fairness: FairnessGrade,
    pub timeliness: TimelinessGrade,
    pub effectiveness: EffectivenessGrade,
    pub non_invasive: bool,
    pub no_ttp: bool,
    pub duration: Duration,
}

pub type Matrix = BTreeMap<ProtocolId, MatrixRow>;

/// Folds per-scenario verdicts into one row per protocol. Every protocol
/// needs at least one honest scenario.
pub fn build_matrix(verdicts: &[(Scenario, Verdict)]) -> Result<Matrix, VerdictError> {
    let missing: Vec<ProtocolId> = ProtocolId::ALL
        .into_iter()
        .filter(|p| !verdicts.iter().any(|(s, v)| s.protocol == *p && s.adversary == Adversary::None && v.timeliness.is_some()))
        .collect();
    if !missing.is_empty() {
        return Err(VerdictError::IncompleteSuite(missing));
    }
    let mut m = Matrix::new();
    for p in ProtocolId::ALL {
        let all: Vec<&(Scenario, Verdict)> = verdicts.iter().filter(|(s, _)| s.protocol == p).collect();
        let honest: Vec<&Verdict> = all.iter().filter(|(s, _)| s.adversary == Adversary::None).map(|(_, v)| v).collect();
        let holds = honest.iter().filter(|v| v.effectiveness == EffectivenessGrade::Holds).count();
        let fails = honest.iter().filter(|v| v.effectiveness == EffectivenessGrade::Fails).count();
        let effectiveness = if holds == honest.len() {
            EffectivenessGrade::Holds
        } else if fails == honest.len() {
            EffectivenessGrade::Fails
        } else {
            EffectivenessGrade::Conditional
        };
        let short = honest.iter().filter_map(|v| v.blocks_to_completion).any(|b| b == 0);
        m.insert(
            p,
            MatrixRow {
                fairness: all.iter().map(|(_, v)| v.fairness).max().expect("non-empty"),
                timeliness: honest.iter().filter_map(|v| v.timeliness).max().expect("checked above"),
                effectiveness,
                non_invasive: honest.iter().all(|v| v.non_invasive),
                no_ttp: !p.uses_ttp(),
                duration: if short { Duration::Short } else { Duration::Long },
            },
        );
    }
    Ok(m)
}

/// The matrix the shipped suite is expected to reproduce.
pub fn expected_matrix() -> Matrix {
    use Duration::*;
    use EffectivenessGrade as E;
    use FairnessGrade as F;
    use TimelinessGrade as T;
    let row = |fairness, timeliness, effectiveness, non_invasive, no_ttp, duration| MatrixRow {
        fairness,
        timeliness,
        effectiveness,
        non_invasive,
        no_ttp,
        duration,
    };
    BTreeMap::from([
        (ProtocolId::P1, row(F::WeakOnly, T::Weak, E::Conditional, true, true, Long)),
        (ProtocolId::P2z, row(F::WeakOnly, T::Strong, E::Holds, true, false, Short)),
        (ProtocolId::P2f, row(F::Strong, T::Strong, E::Holds, true, false, Long)),
        (ProtocolId::P3, row(F::Strong, T::Strong, E::Holds, false, true, Long)),
        (ProtocolId::P4, row(F::Strong, T::Strong, E::Holds, true, true, Long)),
    ])
}

/// Human-readable table, one row per protocol.
pub fn matrix_markdown(m: &Matrix) -> String {
    let yes = |b: bool| if b { "yes" } else { "no" };
    let mut out = String::from(
        "| Protocol | Fairness | Timeliness | Effectiveness | Non-invasive | No TTP | Duration |\n|---|---|---|---|---|---|---|\n",
    );
    for (p, r) in m {
        out.push_str(&format!(
            "| {} | {:?} | {:?} | {:?} | {} | {} | {:?} |\n",
            p.name(),
            r.fairness,
            r.timeliness,
            r.effectiveness,
            yes(r.non_invasive),
            yes(r.no_ttp),
            r.duration
        ));
    }
    out
}

#[cfg(test)]
mod tests;
