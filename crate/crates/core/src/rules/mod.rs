//! Stage labels, the fifteen rule identifiers, and the rule engine that
//! turns epoch features into cited staging decisions.

mod engine;
mod rationale;

pub use engine::{
    classify_epoch, determine_alpha_generator, hypnogram_csv, scoreable_as_wake, stage_recording, ALPHA_GENERATOR_EPOCHS,
};
pub use rationale::render_rationale;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("state error: {0}")]
    State(String),
    #[error("sequence error: {0}")]
    Sequence(String),
    #[error("unknown label: {0}")]
    Label(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    W,
    N1,
    N2,
    N3,
    R,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::W, Stage::N1, Stage::N2, Stage::N3, Stage::R];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::W => "W",
            Stage::N1 => "N1",
            Stage::N2 => "N2",
            Stage::N3 => "N3",
            Stage::R => "R",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = RuleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| RuleError::Label(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "W.1")]
    W1,
    #[serde(rename = "W.2")]
    W2,
    #[serde(rename = "W.3")]
    W3,
    #[serde(rename = "N1.1")]
    N1_1,
    #[serde(rename = "N1.2")]
    N1_2,
    #[serde(rename = "N2.1")]
    N2_1,
    #[serde(rename = "N2.2")]
    N2_2,
    #[serde(rename = "N2.3")]
    N2_3,
    #[serde(rename = "N2.4")]
    N2_4,
    #[serde(rename = "N3.1")]
    N3_1,
    #[serde(rename = "R.1")]
    R1,
    #[serde(rename = "R.2")]
    R2,
    #[serde(rename = "R.3")]
    R3,
    #[serde(rename = "MBM.1")]
    Mbm1,
    #[serde(rename = "MBM.2")]
    Mbm2,
}

impl RuleId {
    pub const ALL: [RuleId; 15] = [
        RuleId::W1,
        RuleId::W2,
        RuleId::W3,
        RuleId::N1_1,
        RuleId::N1_2,
        RuleId::N2_1,
        RuleId::N2_2,
        RuleId::N2_3,
        RuleId::N2_4,
        RuleId::N3_1,
        RuleId::R1,
        RuleId::R2,
        RuleId::R3,
        RuleId::Mbm1,
        RuleId::Mbm2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::W1 => "W.1",
            RuleId::W2 => "W.2",
            RuleId::W3 => "W.3",
            RuleId::N1_1 => "N1.1",
            RuleId::N1_2 => "N1.2",
            RuleId::N2_1 => "N2.1",
            RuleId::N2_2 => "N2.2",
            RuleId::N2_3 => "N2.3",
            RuleId::N2_4 => "N2.4",
            RuleId::N3_1 => "N3.1",
            RuleId::R1 => "R.1",
            RuleId::R2 => "R.2",
            RuleId::R3 => "R.3",
            RuleId::Mbm1 => "MBM.1",
            RuleId::Mbm2 => "MBM.2",
        }
    }

    /// Stages a decision citing this rule may carry.
    pub fn assigned_stages(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            RuleId::W1 | RuleId::W2 | RuleId::W3 | RuleId::Mbm1 => &[W],
            RuleId::N1_1 | RuleId::N1_2 => &[N1],
            RuleId::N2_1 | RuleId::N2_2 | RuleId::N2_3 => &[N2],
            RuleId::N2_4 => &[W, N1, N3, R],
            RuleId::N3_1 => &[N3],
            RuleId::R1 | RuleId::R2 => &[R],
            RuleId::R3 => &[W, N1, N2, N3],
            RuleId::Mbm2 => &Stage::ALL,
        }
    }

    pub fn compatible_with(self, stage: Stage) -> bool {
        self.assigned_stages().contains(&stage)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = RuleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleId::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| RuleError::Label(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDecision {
    pub epoch_index: usize,
    pub stage: Stage,
    /// Cited rules in canonical order; empty only for the carry-forward
    /// fallback.
    pub rules: Vec<RuleId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    /// First or last epoch of the recording (no three-epoch context).
    pub boundary: bool,
    /// No rule matched; the preceding stage was carried forward.
    pub fallback: bool,
}

impl StageDecision {
    pub fn cites(&self, rule: RuleId) -> bool {
        self.rules.contains(&rule)
    }

    pub fn is_compatible(&self) -> bool {
        self.rules.iter().all(|r| r.compatible_with(self.stage))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScorerState {
    pub prev_stage: Option<Stage>,
    /// A non-arousal K-complex or spindle has opened N2 and no arousal has
    /// intervened since.
    pub n2_context_active: bool,
    /// The preceding epoch is R with no arousal.
    pub r_context_active: bool,
    pub alpha_generator: bool,
}

impl ScorerState {
    pub fn new(alpha_generator: bool) -> Self {
        Self { alpha_generator, ..Default::default() }
    }

    pub fn check(&self) -> Result<(), RuleError> {
        if self.n2_context_active && self.prev_stage != Some(Stage::N2) {
            return Err(RuleError::State(format!("N2 context active after {:?}", self.prev_stage)));
        }
        if self.r_context_active && self.prev_stage != Some(Stage::R) {
            return Err(RuleError::State(format!("R context active after {:?}", self.prev_stage)));
        }
        Ok(())
    }
}
