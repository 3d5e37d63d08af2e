//! Session lifecycle, advice delivery and logging for the taxi advice game.

pub mod config;
pub mod export;
pub mod game;
pub mod http;
pub mod store;
pub mod types;

pub use config::ServiceConfig;
pub use game::{Game, GameConfig, GameError, Models};
pub use http::router;
