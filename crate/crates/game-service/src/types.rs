use advice_core::explain::{AdesseExplanation, BaselineExplanation};
use advice_core::grid::{CellIndex, Displacement};
use serde::{Deserialize, Serialize};

/// Actions per trial.
pub const STEPS_PER_TRIAL: usize = 12;
pub const TRIALS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Adesse,
    Baseline,
}

impl Condition {
    pub fn other(self) -> Self {
        match self {
            Condition::Adesse => Condition::Baseline,
            Condition::Baseline => Condition::Adesse,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateSession {
    /// Condition of the first trial; omitted to alternate.
    #[serde(default)]
    pub first: Option<Condition>,
}

/// Public view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub condition_order: [Condition; 2],
    pub trial_index: usize,
    pub step: usize,
    pub accumulated_reward: f64,
    /// Seed of each trial's episode, for replay against the simulator.
    pub trial_seeds: [u64; 2],
    pub trials_complete: [bool; 2],
    pub questionnaires: [bool; 2],
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExplanationPayload {
    Adesse(AdesseExplanation<f64>),
    Baseline(BaselineExplanation<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPayload {
    pub session_id: String,
    pub condition: Condition,
    pub trial_index: usize,
    pub step: usize,
    pub steps_per_trial: usize,
    pub current_cell: CellIndex,
    pub last_cell: CellIndex,
    pub occupied: bool,
    pub advised_action: usize,
    pub advised_move: Displacement,
    pub advised_cell: CellIndex,
    pub accumulated_reward: f64,
    pub explanation: ExplanationPayload,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionRequest {
    /// Step being answered; must match the served step.
    pub step: usize,
    pub action: Displacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub trial_index: usize,
    pub step: usize,
    pub advised: Displacement,
    pub chosen: Displacement,
    pub followed: bool,
    pub reward: f64,
    pub accumulated_reward: f64,
    pub decision_time_ms: u64,
    pub trial_complete: bool,
    pub session_complete: bool,
}

/// One logged decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub trial_index: usize,
    pub step: usize,
    /// FNV-1a of the pre-action state's JSON.
    pub state_digest: String,
    pub advised: Displacement,
    pub chosen: Displacement,
    pub followed: bool,
    pub reward: f64,
    pub decision_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionResponse {
    pub understand: u8,
    pub satisfying: u8,
    pub detailed: u8,
    pub complete: u8,
    pub actionable: u8,
    pub reliable: u8,
    pub trustworthy: u8,
    pub followed_advice: u8,
    pub confidence: u8,
    #[serde(default)]
    pub strategy: String,
    #[serde(default)]
    pub attention_checks: [String; 3],
}

impl SatisfactionResponse {
    pub fn ratings(&self) -> [(&'static str, u8); 9] {
        [
            ("understand", self.understand),
            ("satisfying", self.satisfying),
            ("detailed", self.detailed),
            ("complete", self.complete),
            ("actionable", self.actionable),
            ("reliable", self.reliable),
            ("trustworthy", self.trustworthy),
            ("followed_advice", self.followed_advice),
            ("confidence", self.confidence),
        ]
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in self.ratings() {
            if !(1..=5).contains(&v) {
                return Err(format!("{name} = {v} is not on the 1-5 scale"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionnaireRequest {
    /// Trial being rated; defaults to the earliest finished, unrated trial.
    #[serde(default)]
    pub trial_index: Option<usize>,
    pub response: SatisfactionResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireAck {
    pub session_id: String,
    pub trial_index: usize,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameLogRow {
    pub session_id: String,
    pub condition: Condition,
    pub trial_index: usize,
    pub step: usize,
    pub advised_dx: i32,
    pub advised_dy: i32,
    pub chosen_dx: i32,
    pub chosen_dy: i32,
    pub followed: bool,
    pub reward: f64,
    pub decision_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRow {
    pub session_id: String,
    pub condition: Condition,
    pub trial_index: usize,
    pub understand: u8,
    pub satisfying: u8,
    pub detailed: u8,
    pub complete: u8,
    pub actionable: u8,
    pub reliable: u8,
    pub trustworthy: u8,
    pub followed_advice: u8,
    pub confidence: u8,
    pub strategy: String,
    pub attention_1: String,
    pub attention_2: String,
    pub attention_3: String,
}

pub fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
