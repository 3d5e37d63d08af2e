use std::sync::Arc;

use advice_game_service::{router, Game, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let config = ServiceConfig::from_env()?;
    let models = config.load_models()?;
    if !models.trained {
        tracing::warn!("ADVICE_PREDICTOR/ADVICE_QNET unset; serving random-init networks");
    }
    let game = Arc::new(Game::open(config.game_config(), models)?);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(game)).await?;
    Ok(())
}
