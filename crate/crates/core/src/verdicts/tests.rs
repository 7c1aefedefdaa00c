use super::*;
use crate::sched::{run, Adversary, Mode, Scenario};

fn p1(timeout: u64, k: u64) -> Scenario {
    Scenario::new(ProtocolId::P1).with(|s| {
        s.timeout_height = Some(timeout);
        s.confirm_depth = k;
    })
}

fn adv(p: ProtocolId, a: Adversary) -> Scenario {
    Scenario::new(p).with(|s| s.adversary = a)
}

fn enumerated(p: ProtocolId, a: Adversary, bound: usize) -> Scenario {
    adv(p, a).with(|s| {
        s.mode = Mode::Enumerate;
        s.bound = Some(bound);
    })
}

fn grade(s: &Scenario) -> FairnessGrade {
    judge_fairness(&run(s)).unwrap().grade
}

#[test]
fn honest_runs_are_strongly_fair() {
    for p in ProtocolId::ALL {
        assert_eq!(grade(&Scenario::new(p)), FairnessGrade::Strong, "{p:?}");
    }
}

#[test]
fn p1_dos_leaves_bob_with_only_weak_fairness() {
    let s = p1(3, 2).with(|s| s.adversary = Adversary::DosDelayBob { extra_delay_units: 20_000 });
    let f = judge_fairness(&run(&s)).unwrap();
    assert_eq!(f.grade, FairnessGrade::WeakOnly);
    assert!(f.realized.alice_gained);
    assert!(!f.realized.bob_gained);
    assert!(matches!(f.realized.bob_evidence, Some(Evidence::Signature(_))));
}

#[test]
fn p1_short_timeout_is_ineffective() {
    let t = run(&p1(1, 6));
    assert_eq!(judge_effectiveness(&[t]).unwrap(), EffectivenessGrade::Fails);
}

#[test]
fn p2z_double_spend_is_weak() {
    let f = judge_fairness(&run(&adv(ProtocolId::P2z, Adversary::DoubleSpendAfterOfe))).unwrap();
    assert_eq!(f.grade, FairnessGrade::WeakOnly);
    assert!(matches!(f.realized.bob_evidence, Some(Evidence::Payment(_))));
}

#[test]
fn p2f_double_spend_stays_strong() {
    assert_eq!(grade(&adv(ProtocolId::P2f, Adversary::DoubleSpendAfterOfe)), FairnessGrade::Strong);
}

#[test]
fn races_stay_strong_under_enumeration() {
    for p in [ProtocolId::P2f, ProtocolId::P3, ProtocolId::P4] {
        let e = evaluate(&enumerated(p, Adversary::RaceAbortResolve, 4)).unwrap();
        assert_eq!(e.verdict.fairness, FairnessGrade::Strong, "{p:?}");
        assert!(e.verdict.traces > 1);
    }
}

#[test]
fn truncated_trace_is_not_judged() {
    let t = run(&Scenario::new(ProtocolId::P3).with(|s| s.max_events = 3));
    assert!(t.truncated);
    assert_eq!(judge_fairness(&t).unwrap_err(), VerdictError::TruncatedTrace);
}

#[test]
fn empty_evidence_is_rejected() {
    assert_eq!(judge_effectiveness(&[]).unwrap_err(), VerdictError::InsufficientEvidence);
}

#[test]
fn arbiter_rejects_chain_bound_receipts() {
    let t = run(&Scenario::new(ProtocolId::P3));
    let r = realize(&t);
    let receipt = r.alice_receipt.expect("paid out");
    assert!(matches!(receipt, Evidence::ChainReceipt { .. }));
    assert!(!arbiter_check(&receipt, &t.setup));
}

#[test]
fn arbiter_accepts_ttp_abort_tokens() {
    let t = run(&Scenario::new(ProtocolId::P2f));
    let token = crate::crypto::AbortToken::issue_by_ttp(&t.setup.ttp, t.setup.exchange_id());
    assert!(arbiter_check(&Evidence::Abort(token.clone()), &t.setup));
    let forged = crate::crypto::AbortToken::issue_by_ttp(&t.setup.alice, t.setup.exchange_id());
    assert!(!arbiter_check(&Evidence::Abort(forged), &t.setup));
}

#[test]
fn timeliness_grades() {
    assert_eq!(check_strong_timeliness(&p1(20, 6), 3).unwrap().grade, TimelinessGrade::Weak);
    for p in [ProtocolId::P2z, ProtocolId::P2f, ProtocolId::P3, ProtocolId::P4] {
        let t = check_strong_timeliness(&Scenario::new(p), 3).unwrap();
        assert_eq!(t.grade, TimelinessGrade::Strong, "{p:?} {t:?}");
    }
}

fn suite() -> Vec<Scenario> {
    vec![
        p1(20, 6),
        p1(1, 6),
        p1(3, 2).with(|s| s.adversary = Adversary::DosDelayBob { extra_delay_units: 20_000 }),
        Scenario::new(ProtocolId::P2z),
        adv(ProtocolId::P2z, Adversary::DoubleSpendAfterOfe),
        Scenario::new(ProtocolId::P2f),
        enumerated(ProtocolId::P2f, Adversary::DoubleSpendAfterOfe, 4),
        Scenario::new(ProtocolId::P3),
        enumerated(ProtocolId::P3, Adversary::RaceAbortResolve, 4),
        Scenario::new(ProtocolId::P4),
        enumerated(ProtocolId::P4, Adversary::RaceAbortResolve, 4),
    ]
}

#[test]
fn suite_reproduces_expected_matrix() {
    let verdicts: Vec<(Scenario, Verdict)> =
        suite().into_iter().map(|s| (s.clone(), evaluate(&s).unwrap().verdict)).collect();
    let m = build_matrix(&verdicts).unwrap();
    assert_eq!(m, expected_matrix(), "\n{}", matrix_markdown(&m));
}

#[test]
fn matrix_needs_every_protocol() {
    let verdicts: Vec<(Scenario, Verdict)> = suite()
        .into_iter()
        .filter(|s| s.protocol != ProtocolId::P2f)
        .map(|s| (s.clone(), evaluate(&s).unwrap().verdict))
        .collect();
    assert_eq!(build_matrix(&verdicts).unwrap_err(), VerdictError::IncompleteSuite(vec![ProtocolId::P2f]));
}
