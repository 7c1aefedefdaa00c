use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChainParams;
use crate::crypto::Scheme;
use crate::protocols::{ProtocolId, Setup};
use crate::verdicts::{EffectivenessGrade, FairnessGrade, TimelinessGrade};

/// Largest enumeration bound accepted.
pub const BOUND_CEILING: usize = 12;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", deny_unknown_fields)]
pub enum Adversary {
    #[default]
    None,
    /// Throttles Bob: his messages arrive late and miners see his
    /// transactions only after the extra delay.
    DosDelayBob {
        #[serde(rename = "extraDelayUnits")]
        extra_delay_units: u64,
    },
    /// Alice spends the funds behind i_A as soon as she has handed it over.
    DoubleSpendAfterOfe,
    /// Bob stops processing events once he reaches `phase`.
    CrashBobAfter { phase: String },
    /// Alice aborts exactly when Bob moves to settle.
    RaceAbortResolve,
    /// Forces the first scheduling choices; see [`crate::sched::World::choices`].
    OrderingController { choices: Vec<usize> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Run,
    Enumerate,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Expect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fairness: Option<FairnessGrade>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effectiveness: Option<EffectivenessGrade>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeliness: Option<TimelinessGrade>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice_got_expected: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_got_expected: Option<bool>,
}

fn default_interval() -> u64 {
    5000
}
fn default_delay() -> u64 {
    50
}
fn default_depth() -> u64 {
    6
}
fn default_max_events() -> u64 {
    20_000
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub protocol: ProtocolId,
    #[serde(default)]
    pub adversary: Adversary,
    #[serde(default = "default_interval")]
    pub block_interval_units: u64,
    #[serde(default = "default_delay")]
    pub msg_delay_units: u64,
    /// Zero means payees accept unconfirmed transactions.
    #[serde(default = "default_depth")]
    pub confirm_depth: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_height: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("invalid scenario JSON: {0}")]
    Parse(String),
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("timeoutHeight is required for P1 and not allowed otherwise")]
    Timeout,
    #[error("bound {0} exceeds the ceiling of {BOUND_CEILING}")]
    BoundExceeded(usize),
    #[error("enumerate mode needs a bound")]
    MissingBound,
}

impl Scenario {
    pub fn new(protocol: ProtocolId) -> Self {
        Scenario {
            name: None,
            protocol,
            adversary: Adversary::None,
            block_interval_units: default_interval(),
            msg_delay_units: default_delay(),
            confirm_depth: default_depth(),
            timeout_height: (protocol == ProtocolId::P1).then_some(20),
            seed: 0,
            max_events: default_max_events(),
            mode: Mode::Run,
            bound: None,
            scheme: Scheme::Ed25519,
            expect: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.block_interval_units == 0 {
            return Err(ScenarioError::NotPositive("blockIntervalUnits"));
        }
        if self.msg_delay_units == 0 {
            return Err(ScenarioError::NotPositive("msgDelayUnits"));
        }
        if self.max_events == 0 {
            return Err(ScenarioError::NotPositive("maxEvents"));
        }
        match (self.protocol, self.timeout_height) {
            (ProtocolId::P1, Some(t)) if t > 0 => {}
            (ProtocolId::P1, _) => return Err(ScenarioError::Timeout),
            (_, Some(_)) => return Err(ScenarioError::Timeout),
            _ => {}
        }
        match (self.mode, self.bound) {
            (_, Some(b)) if b > BOUND_CEILING => Err(ScenarioError::BoundExceeded(b)),
            (_, Some(0)) => Err(ScenarioError::NotPositive("bound")),
            (Mode::Enumerate, None) => Err(ScenarioError::MissingBound),
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> ChainParams {
        ChainParams { block_interval_units: self.block_interval_units, confirm_depth: self.confirm_depth }
    }

    pub fn setup(&self) -> Setup {
        Setup::new(self.protocol, self.params(), self.seed, self.timeout_height, self.scheme)
    }

    pub fn with(mut self, f: impl FnOnce(&mut Scenario)) -> Self {
        f(&mut self);
        self
    }
}
