use serde::Serialize;

use crate::types::{GameLogRow, QuestionnaireRow};

pub const GAME_LOG_COLUMNS: [&str; 11] = [
    "session_id",
    "condition",
    "trial_index",
    "step",
    "advised_dx",
    "advised_dy",
    "chosen_dx",
    "chosen_dy",
    "followed",
    "reward",
    "decision_time_ms",
];

pub const QUESTIONNAIRE_COLUMNS: [&str; 16] = [
    "session_id",
    "condition",
    "trial_index",
    "understand",
    "satisfying",
    "detailed",
    "complete",
    "actionable",
    "reliable",
    "trustworthy",
    "followed_advice",
    "confidence",
    "strategy",
    "attention_1",
    "attention_2",
    "attention_3",
];

/// CSV with a header row even when there are no records.
pub fn to_csv<R: Serialize>(columns: &[&str], rows: &[R]) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn game_log_csv(rows: &[GameLogRow]) -> Result<String, csv::Error> {
    to_csv(&GAME_LOG_COLUMNS, rows)
}

pub fn questionnaire_csv(rows: &[QuestionnaireRow]) -> Result<String, csv::Error> {
    to_csv(&QUESTIONNAIRE_COLUMNS, rows)
}

pub fn read_game_log(csv_text: &str) -> Result<Vec<GameLogRow>, csv::Error> {
    csv::Reader::from_reader(csv_text.as_bytes()).deserialize().collect()
}

pub fn read_questionnaires(csv_text: &str) -> Result<Vec<QuestionnaireRow>, csv::Error> {
    csv::Reader::from_reader(csv_text.as_bytes()).deserialize().collect()
}
