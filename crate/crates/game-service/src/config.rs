use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};

use crate::game::{GameConfig, Models};

/// Service settings read from `ADVICE_*` environment variables.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// `ADVICE_ADDR`, default `127.0.0.1:8080`.
    pub addr: SocketAddr,
    /// `ADVICE_DATA_DIR`, default `./data`.
    pub data_dir: PathBuf,
    /// `ADVICE_PREDICTOR` and `ADVICE_QNET`; both or neither.
    pub models: Option<(PathBuf, PathBuf)>,
    /// `ADVICE_SEED`, default 0.
    pub seed: u64,
    /// `ADVICE_GRID`, default 10.
    pub grid_side: usize,
    /// `ADVICE_LIME_SAMPLES`, default 1000.
    pub lime_samples: usize,
}

fn parsed<T: std::str::FromStr>(get: &impl Fn(&str) -> Option<String>, key: &str, default: T) -> anyhow::Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    match get(key) {
        Some(v) => v.parse().with_context(|| format!("{key}={v}")),
        None => Ok(default),
    }
}

impl ServiceConfig {
    pub fn from_env() -> anyhow::Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        let models = match (get("ADVICE_PREDICTOR"), get("ADVICE_QNET")) {
            (Some(p), Some(q)) => Some((PathBuf::from(p), PathBuf::from(q))),
            (None, None) => None,
            _ => bail!("ADVICE_PREDICTOR and ADVICE_QNET must be set together"),
        };
        Ok(Self {
            addr: parsed(&get, "ADVICE_ADDR", SocketAddr::from(([127, 0, 0, 1], 8080)))?,
            data_dir: get("ADVICE_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| "data".into()),
            models,
            seed: parsed(&get, "ADVICE_SEED", 0)?,
            grid_side: parsed(&get, "ADVICE_GRID", 10)?,
            lime_samples: parsed(&get, "ADVICE_LIME_SAMPLES", 1000)?,
        })
    }

    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            grid_side: self.grid_side,
            seed: self.seed,
            lime_samples: self.lime_samples,
            ..GameConfig::new(&self.data_dir)
        }
    }

    pub fn load_models(&self) -> anyhow::Result<Models> {
        match &self.models {
            Some((p, q)) => Models::load(p, q),
            None => Models::random_init(self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lookup<'a>(pairs: &'a [(&'a str, &'a str)]) -> impl Fn(&str) -> Option<String> + 'a {
        move |k| pairs.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())
    }

    #[test]
    fn defaults_and_overrides() {
        let c = ServiceConfig::from_lookup(lookup(&[])).unwrap();
        assert_eq!(c.addr.port(), 8080);
        assert_eq!((c.seed, c.grid_side, c.models.is_none()), (0, 10, true));
        let c = ServiceConfig::from_lookup(lookup(&[("ADVICE_SEED", "5"), ("ADVICE_ADDR", "0.0.0.0:9000")])).unwrap();
        assert_eq!((c.seed, c.addr.port()), (5, 9000));
    }

    #[test]
    fn half_a_model_pair_is_rejected() {
        assert!(ServiceConfig::from_lookup(lookup(&[("ADVICE_QNET", "q.ckpt")])).is_err());
        assert!(ServiceConfig::from_lookup(lookup(&[("ADVICE_SEED", "x")])).is_err());
    }
}
