use thiserror::Error;

use crate::grid::GridError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("episode already finished after {0} steps")]
    EpisodeOver(usize),
    #[error("demand model: {0}")]
    Demand(String),
    #[error("ingest: {0}")]
    Ingest(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}
