//! Discrete-event scheduler, adversary hooks and bounded interleaving
//! enumeration.
//!
//! A [`World`] holds the chain, every party's machine and the queue of
//! pending deliveries. Timed runs always take the earliest item and mine
//! blocks on the fixed interval; enumeration instead branches on every
//! available [`Choice`] up to a depth bound and then finishes each leaf with
//! a timed run.

mod scenario;
mod trace;
mod world;

use std::collections::HashMap;

use thiserror::Error;

pub use scenario::{Adversary, Expect, Mode, Scenario, ScenarioError, BOUND_CEILING};
pub use trace::{Actor, FinalMark, Trace, TraceBody, TraceEvent};
pub use world::{Choice, Item, Pending, World};

use crate::codec::Hash32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("bad trace header: {0}")]
    BadTrace(String),
}

fn forced_prefix(s: &Scenario) -> &[usize] {
    match &s.adversary {
        Adversary::OrderingController { choices } => choices,
        _ => &[],
    }
}

fn start(s: &Scenario, prefix: &[usize]) -> World {
    let mut w = World::new(s);
    for &i in prefix {
        if !w.choose(i) {
            break;
        }
    }
    w
}

/// A single timed run. Forced choices of an ordering controller are applied first.
pub fn run(s: &Scenario) -> Trace {
    let mut w = start(s, forced_prefix(s));
    let truncated = w.run_timed();
    w.into_trace(truncated, false)
}

/// Replays an explicit choice path, then continues timed.
pub fn run_with_schedule(s: &Scenario, schedule: &[usize]) -> Trace {
    let mut w = start(s, schedule);
    let truncated = w.run_timed();
    w.into_trace(truncated, true)
}

/// Walks every distinct state reachable within `bound` choices. `visit` sees
/// each state once, with its depth and whether it ends a branch.
pub fn explore(s: &Scenario, bound: usize, mut visit: impl FnMut(&World, usize, bool)) -> Result<usize, SchedError> {
    if bound > BOUND_CEILING {
        return Err(ScenarioError::BoundExceeded(bound).into());
    }
    let root = start(s, forced_prefix(s));
    let mut seen: HashMap<Hash32, usize> = HashMap::new();
    seen.insert(root.fingerprint(), 0);
    let mut stack = vec![(root, 0usize)];
    while let Some((w, depth)) = stack.pop() {
        let choices = w.choices();
        let leaf = depth >= bound || choices.is_empty() || w.over_budget();
        visit(&w, depth, leaf);
        if leaf {
            continue;
        }
        for i in (0..choices.len()).rev() {
            let mut child = w.clone();
            child.choose(i);
            let fp = child.fingerprint();
            match seen.get(&fp) {
                Some(&d) if d <= depth + 1 => continue,
                _ => {
                    seen.insert(fp, depth + 1);
                }
            }
            stack.push((child, depth + 1));
        }
    }
    Ok(seen.len())
}

/// Finishes every branch of the bounded exploration with a timed run.
pub fn enumerate_with(s: &Scenario, bound: usize, mut f: impl FnMut(Trace)) -> Result<usize, SchedError> {
    let mut leaves = 0;
    explore(s, bound, |w, _, leaf| {
        if leaf {
            leaves += 1;
            let mut w = w.clone();
            let truncated = w.run_timed();
            f(w.into_trace(truncated, true));
        }
    })?;
    Ok(leaves)
}

pub fn enumerate(s: &Scenario, bound: usize) -> Result<Vec<Trace>, SchedError> {
    let mut out = Vec::new();
    enumerate_with(s, bound, |t| out.push(t))?;
    Ok(out)
}

/// Reads the header line of a JSONL trace.
pub fn parse_header(jsonl: &str) -> Result<(Scenario, Option<Vec<usize>>), SchedError> {
    let first = jsonl.lines().next().ok_or_else(|| SchedError::BadTrace("empty trace".into()))?;
    let v: serde_json::Value = serde_json::from_str(first).map_err(|e| SchedError::BadTrace(e.to_string()))?;
    if v.get("actor").and_then(|a| a.as_str()) != Some("scenario") {
        return Err(SchedError::BadTrace("first line is not a scenario header".into()));
    }
    let ev = &v["event"];
    let scenario: Scenario =
        serde_json::from_value(ev["scenario"].clone()).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    let schedule = match &ev["schedule"] {
        serde_json::Value::Null => None,
        s => Some(serde_json::from_value(s.clone()).map_err(|e| SchedError::BadTrace(e.to_string()))?),
    };
    Ok((scenario, schedule))
}

/// Re-executes a recorded trace from its header.
pub fn replay(jsonl: &str) -> Result<Trace, SchedError> {
    let (scenario, schedule) = parse_header(jsonl)?;
    Ok(match schedule {
        Some(s) => run_with_schedule(&scenario, &s),
        None => run(&scenario),
    })
}

#[cfg(test)]
mod tests;
