use super::*;
use crate::protocols::{ProtocolId, Role};

fn got(t: &Trace, r: Role) -> Option<bool> {
    t.outcomes.get(&r).cloned().flatten().map(|o| o.got_expected)
}

#[test]
fn honest_runs_finish_with_both_satisfied() {
    for p in ProtocolId::ALL {
        let t = run(&Scenario::new(p));
        assert!(!t.truncated, "{p:?}");
        assert_eq!(got(&t, Role::Alice), Some(true), "{p:?} alice");
        assert_eq!(got(&t, Role::Bob), Some(true), "{p:?} bob");
        assert_eq!(t.chain.total_value(), 1000, "{p:?}");
    }
}

#[test]
fn p2z_honest_uses_no_blocks() {
    let t = run(&Scenario::new(ProtocolId::P2z));
    assert_eq!(t.party_txs(), 0);
    assert_eq!(t.completion().map(|m| m.blocks), Some(0));
}

#[test]
fn timed_runs_are_deterministic() {
    for p in ProtocolId::ALL {
        let s = Scenario::new(p).with(|s| s.seed = 7);
        assert_eq!(run(&s).to_jsonl(), run(&s).to_jsonl());
    }
}

#[test]
fn replay_reproduces_bytes() {
    let s = Scenario::new(ProtocolId::P4);
    let a = run(&s).to_jsonl();
    assert_eq!(replay(&a).unwrap().to_jsonl(), a);
}

#[test]
fn replay_of_enumerated_leaf_reproduces_bytes() {
    let s = Scenario::new(ProtocolId::P3).with(|s| s.adversary = Adversary::RaceAbortResolve);
    let traces = enumerate(&s, 3).unwrap();
    assert!(traces.len() > 1);
    for t in traces.iter().take(5) {
        let a = t.to_jsonl();
        assert_eq!(replay(&a).unwrap().to_jsonl(), a);
    }
}

#[test]
fn bound_above_ceiling_is_rejected() {
    let s = Scenario::new(ProtocolId::P2f);
    assert_eq!(
        explore(&s, BOUND_CEILING + 1, |_, _, _| {}).unwrap_err(),
        SchedError::Scenario(ScenarioError::BoundExceeded(BOUND_CEILING + 1))
    );
}

#[test]
fn crashed_bob_stops_receiving() {
    let s = Scenario::new(ProtocolId::P3).with(|s| s.adversary = Adversary::CrashBobAfter { phase: "Watching".into() });
    let t = run(&s);
    assert_eq!(got(&t, Role::Bob), None);
    assert_eq!(got(&t, Role::Alice), Some(false));
}

#[test]
fn ordering_controller_forces_first_choices() {
    let base = Scenario::new(ProtocolId::P2f);
    let forced = base.clone().with(|s| s.adversary = Adversary::OrderingController { choices: vec![1, 0] });
    let a = run(&base);
    let b = run(&forced);
    assert_ne!(a.events[0].actor, b.events[0].actor);
}
