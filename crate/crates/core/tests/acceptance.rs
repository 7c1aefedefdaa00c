//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod support;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use fairpay::chain::{ChainView, TxKind};
use fairpay::contracts::{CallOutcome, ContractCall};
use fairpay::crypto::{verify, we_decrypt};
use fairpay::protocols::{Event, Evidence, ProtocolId};
use fairpay::sched::{self, Adversary, Scenario, Trace, TraceBody};
use fairpay::verdicts::{
    build_matrix, check_strong_timeliness, evaluate, expected_matrix, judge_effectiveness, judge_fairness,
    matrix_markdown, EffectivenessGrade, FairnessGrade, TimelinessGrade,
};

const MATRIX_LIMIT: Duration = Duration::from_secs(60);
const NARRATIVE_LIMIT: Duration = Duration::from_secs(1);
const P2F_ENUM_BOUND: usize = 10;
const P2F_ENUM_LIMIT: Duration = Duration::from_secs(300);
const RACE_BOUND: usize = 8;
const RACE_LIMIT: Duration = Duration::from_secs(120);
const TIMELINESS_BOUND: usize = 10;
const TIMELINESS_LIMIT: Duration = Duration::from_secs(300);
const P2Z_MAX_DELAYS: u64 = 8;
const MIN_SPEEDUP: u64 = 10;
const PROPERTY_LIMIT: Duration = Duration::from_secs(120);

type Outcome = Result<String, String>;

fn suite_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../suite")
}

fn load_suite() -> Result<Vec<Scenario>, String> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(suite_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
            Scenario::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))
        })
        .collect()
}

fn within(start: Instant, limit: Duration, detail: String) -> Outcome {
    let took = start.elapsed();
    if took > limit {
        Err(format!("{detail}; took {took:.2?}, limit {limit:?}"))
    } else {
        Ok(format!("{detail}; {took:.2?}"))
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn p1(timeout: u64, k: u64) -> Scenario {
    Scenario::new(ProtocolId::P1).with(|s| {
        s.timeout_height = Some(timeout);
        s.confirm_depth = k;
    })
}

fn matrix() -> Outcome {
    let start = Instant::now();
    let suite = load_suite()?;
    let mut verdicts = Vec::new();
    for s in suite {
        let v = evaluate(&s).map_err(|e| e.to_string())?.verdict;
        ensure(v.mismatches.is_empty(), format!("{:?}: {:?}", s.name, v.mismatches))?;
        verdicts.push((s, v));
    }
    let m = build_matrix(&verdicts).map_err(|e| e.to_string())?;
    ensure(m == expected_matrix(), format!("matrix differs:\n{}", matrix_markdown(&m)))?;
    within(start, MATRIX_LIMIT, format!("{} scenarios, all cells match", verdicts.len()))
}

fn p1_dos() -> Outcome {
    let start = Instant::now();
    let s = p1(3, 2).with(|s| s.adversary = Adversary::DosDelayBob { extra_delay_units: 20_000 });
    let t = sched::run(&s);
    let f = judge_fairness(&t).map_err(|e| e.to_string())?;
    ensure(f.grade == FairnessGrade::WeakOnly, format!("fairness {:?}", f.grade))?;
    ensure(f.realized.alice_gained && !f.realized.bob_gained, "expected Alice to hold σ and Bob unpaid")?;
    let revealed = matches!(&f.realized.bob_evidence, Some(Evidence::Signature(_)));
    ensure(revealed, "evidence is not the revealed σ")?;
    ensure(sched::run(&s).to_jsonl() == t.to_jsonl(), "rerun differs")?;
    within(start, NARRATIVE_LIMIT, "WeakOnly with revealed σ, deterministic".into())
}

fn p1_effectiveness() -> Outcome {
    let start = Instant::now();
    let short = judge_effectiveness(&[sched::run(&p1(1, 6))]).map_err(|e| e.to_string())?;
    let long = judge_effectiveness(&[sched::run(&p1(20, 6))]).map_err(|e| e.to_string())?;
    ensure(short == EffectivenessGrade::Fails, format!("T=1: {short:?}"))?;
    ensure(long == EffectivenessGrade::Holds, format!("T=20: {long:?}"))?;
    within(start, 2 * NARRATIVE_LIMIT, "T=1 Fails, T=20 Holds".into())
}

fn double_spend() -> Outcome {
    let start = Instant::now();
    let s = Scenario::new(ProtocolId::P2z).with(|s| s.adversary = Adversary::DoubleSpendAfterOfe);
    let t = sched::run(&s);
    let f = judge_fairness(&t).map_err(|e| e.to_string())?;
    ensure(!f.realized.bob_gained, "Bob got paid in P2z")?;
    ensure(f.grade == FairnessGrade::WeakOnly, format!("P2z fairness {:?}", f.grade))?;
    ensure(matches!(f.realized.bob_evidence, Some(Evidence::Payment(_))), "Bob's evidence is not i_A")?;
    let s = Scenario::new(ProtocolId::P2f).with(|s| s.adversary = Adversary::DoubleSpendAfterOfe);
    let mut traces = 0;
    let mut bad = Vec::new();
    sched::enumerate_with(&s, P2F_ENUM_BOUND, |t| {
        traces += 1;
        match judge_fairness(&t) {
            Ok(f) if f.grade == FairnessGrade::Strong => {}
            other => bad.push(format!("{other:?}")),
        }
    })
    .map_err(|e| e.to_string())?;
    ensure(bad.is_empty(), format!("{} of {traces} P2f traces not Strong", bad.len()))?;
    within(start, P2F_ENUM_LIMIT, format!("P2z WeakOnly(i_A); P2f Strong on all {traces} traces"))
}

fn race(p: ProtocolId) -> Scenario {
    Scenario::new(p).with(|s| {
        s.adversary = Adversary::RaceAbortResolve;
        s.confirm_depth = 1;
    })
}

fn p3_settlement(t: &Trace) -> Result<bool, String> {
    ensure(!t.truncated, "truncated trace")?;
    let (mut refunds, mut payouts) = (0, 0);
    for tx in t.chain.seen_txs() {
        if let TxKind::ContractCall { .. } = tx.kind {
            match t.chain.receipt(&tx.id) {
                Some(CallOutcome::Refunded { .. }) => refunds += 1,
                Some(CallOutcome::PaidOut { .. }) => payouts += 1,
                _ => {}
            }
        }
    }
    ensure(refunds + payouts == 1, format!("{refunds} refunds and {payouts} payouts"))?;
    let bob_paid = t.chain.balance(&t.setup.bob.address) >= t.setup.value;
    let alice_sigma = t.chain.seen_txs().any(|tx| {
        matches!((&tx.kind, t.chain.receipt(&tx.id)),
            (TxKind::ContractCall { call: ContractCall::SigResolve { sigma }, .. }, Some(CallOutcome::PaidOut { .. }))
                if t.setup.valid_sigma(sigma) && t.chain.depth(&tx.id).is_some())
    });
    ensure(bob_paid == alice_sigma, format!("Bob paid {bob_paid}, Alice σ {alice_sigma}"))?;
    Ok(bob_paid)
}

fn p3_exclusivity() -> Outcome {
    let start = Instant::now();
    let (mut paid, mut refunded) = (0, 0);
    let mut err = None;
    sched::enumerate_with(&race(ProtocolId::P3), RACE_BOUND, |t| match p3_settlement(&t) {
        Ok(true) => paid += 1,
        Ok(false) => refunded += 1,
        Err(e) => {
            err.get_or_insert(e);
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = err {
        return Err(e);
    }
    ensure(paid > 0 && refunded > 0, format!("only one side exercised: {paid} paid, {refunded} refunded"))?;
    within(start, RACE_LIMIT, format!("exactly one settlement per trace; {paid} paid, {refunded} refunded"))
}

#[derive(Default)]
struct Gating {
    opened: usize,
    refused: usize,
}

fn p4_gate(t: &Trace, g: &mut Gating) -> Result<(), String> {
    ensure(!t.truncated, "truncated trace")?;
    for e in &t.events {
        if let TraceBody::Party(Event::WitnessReply { sigma, sig_depth, abort_depth, min_depth }) = &e.event {
            let holds = sig_depth.is_some_and(|d| d >= (*min_depth).max(1)) && abort_depth.is_none();
            ensure(sigma.is_some() == holds, "decryption outcome disagrees with the statement")?;
            if let Some(s) = sigma {
                ensure(verify(&t.setup.bob.public, &t.setup.message, s), "released σ fails plain verify")?;
            }
        }
    }
    for tx in t.chain.seen_txs() {
        if let Some(ct) = &tx.witness {
            let holds = ct.statement.holds(&t.chain);
            match we_decrypt(&t.chain, ct) {
                Ok(s) => {
                    ensure(holds, "decrypted without a witness")?;
                    ensure(verify(&t.setup.bob.public, &t.setup.message, &s), "released σ fails plain verify")?;
                    g.opened += 1;
                }
                Err(_) => {
                    ensure(!holds, "witness present but decryption failed")?;
                    g.refused += 1;
                }
            }
        }
    }
    Ok(())
}

fn p4_gating() -> Outcome {
    let start = Instant::now();
    let mut g = Gating::default();
    let mut traces = 0;
    let mut err = None;
    sched::enumerate_with(&race(ProtocolId::P4), RACE_BOUND, |t| {
        traces += 1;
        if let Err(e) = p4_gate(&t, &mut g) {
            err.get_or_insert(e);
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = err {
        return Err(e);
    }
    ensure(g.opened > 0 && g.refused > 0, format!("only one side exercised: {} opened, {} refused", g.opened, g.refused))?;
    within(start, RACE_LIMIT, format!("{traces} traces, {} opened, {} refused", g.opened, g.refused))
}

fn timeliness() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for p in ProtocolId::ALL {
        let s = if p == ProtocolId::P1 { p1(20, 6) } else { Scenario::new(p) };
        let t = check_strong_timeliness(&s, TIMELINESS_BOUND).map_err(|e| e.to_string())?;
        let want = if p == ProtocolId::P1 { TimelinessGrade::Weak } else { TimelinessGrade::Strong };
        ensure(t.grade == want, format!("{p:?}: {:?}", t.grade))?;
        parts.push(format!("{} {:?}", p.name(), t.grade));
    }
    within(start, TIMELINESS_LIMIT, parts.join(", "))
}

fn timing_echo() -> Outcome {
    let start = Instant::now();
    let p2z = sched::run(&Scenario::new(ProtocolId::P2z));
    let p3 = sched::run(&Scenario::new(ProtocolId::P3));
    let fast = p2z.completion().ok_or("P2z did not complete")?;
    let slow = p3.completion().ok_or("P3 did not complete")?;
    let delay = p2z.scenario.msg_delay_units;
    ensure(fast.blocks == 0, format!("P2z waited {} blocks", fast.blocks))?;
    ensure(fast.time <= P2Z_MAX_DELAYS * delay, format!("P2z took {}", fast.time))?;
    ensure(slow.time >= p3.scenario.block_interval_units, format!("P3 took {}", slow.time))?;
    ensure(slow.time >= MIN_SPEEDUP * fast.time.max(1), format!("ratio {}", slow.time / fast.time.max(1)))?;
    within(start, NARRATIVE_LIMIT, format!("P2z {} vs P3 {}, {}x", fast.time, slow.time, slow.time / fast.time.max(1)))
}

fn properties() -> Outcome {
    let start = Instant::now();
    support::run_property(support::ops(), |ops| support::check_chain(&ops)).map_err(|e| format!("chain: {e}"))?;
    support::run_property(support::ofe_ops(), |ops| support::check_ofe(&ops)).map_err(|e| format!("ofe: {e}"))?;
    support::run_property(support::sig_ops(), |ops| support::check_sig_contract(&ops)).map_err(|e| format!("sig: {e}"))?;
    support::run_property((support::item(), support::expectation(), support::expectation()), |(i, c, o)| {
        support::check_ve(&i, &c, &o)
    })
    .map_err(|e| format!("ve: {e}"))?;
    support::run_property(support::scenario(), |s| support::check_replay(&s)).map_err(|e| format!("replay: {e}"))?;
    within(start, PROPERTY_LIMIT, format!("5 suites x {} cases", support::CASES))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("matrix reproduction", matrix),
        ("P1 timeout counterexample", p1_dos),
        ("P1 effectiveness failure", p1_effectiveness),
        ("P2z double-spend vs P2f", double_spend),
        ("P3 exclusivity", p3_exclusivity),
        ("P4 gating", p4_gating),
        ("strong timeliness", timeliness),
        ("timing echo", timing_echo),
        ("invariant suites", properties),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
