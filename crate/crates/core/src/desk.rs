//! Desk-scale worlds and training recipes shared by the bench, the game
//! service and the acceptance suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advisor::{train_dqn, AdviseError, DqnConfig, TaxiAdviser, WildfireAdviser};
use crate::grid::GridSpec;
use crate::nn::{QNet, QNetConfig, TrainConfig};
use crate::predictor::{
    constant_baseline, fire_dataset, fire_desk_config, mae, mse, taxi_dataset, Domain, PredictError, Predictor,
    TaxiContext,
};
use crate::taxi::{synthetic_poi, Calendar, DemandModel, DemandSource, TaxiConfig, TaxiEnv};
use crate::wildfire::{WildfireConfig, WildfireEnv};

#[derive(Debug, Clone)]
pub struct TaxiWorld {
    pub env: TaxiEnv,
    pub ctx: TaxiContext,
}

/// Hotspots per 100 cells in the default desk world. Fewer leave a random
/// driver mostly cruising at a loss.
pub const HOTSPOTS_PER_100_CELLS: usize = 8;

/// Synthetic demand, points of interest and a weather calendar covering
/// the whole start window, all drawn from `seed`.
pub fn taxi_world(grid: GridSpec, seed: u64) -> TaxiWorld {
    taxi_world_with(grid, (grid.len() * HOTSPOTS_PER_100_CELLS / 100).max(2), seed)
}

pub fn taxi_world_with(grid: GridSpec, hotspots: usize, seed: u64) -> TaxiWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DemandModel::synthetic_with(grid, hotspots, &mut rng);
    let poi = synthetic_poi(&model, &mut rng);
    let config = TaxiConfig::new(grid);
    let calendar = Calendar::synthetic(config.start_date, config.start_days + 2, &mut rng);
    let env = TaxiEnv::new(config, DemandSource::Synthetic(model)).expect("synthetic demand is valid");
    TaxiWorld {
        env,
        ctx: TaxiContext { poi, calendar },
    }
}

pub fn wildfire_env(grid: GridSpec) -> WildfireEnv {
    WildfireEnv::new(WildfireConfig::new(grid)).expect("default parameters are valid")
}

/// Held-out quality of a trained predictor next to the constant-mean
/// baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorReport {
    pub domain: Domain,
    pub train_rows: usize,
    pub test_rows: usize,
    pub mae: f64,
    pub baseline_mae: f64,
    pub mse: f64,
    pub baseline_mse: f64,
}

fn report(
    p: &Predictor<f64>,
    train: &crate::nn::Dataset<f64>,
    test: &crate::nn::Dataset<f64>,
) -> Result<PredictorReport, PredictError> {
    let m = train.target_mean();
    Ok(PredictorReport {
        domain: p.domain,
        train_rows: train.len(),
        test_rows: test.len(),
        mae: mae(p, test)?,
        baseline_mae: constant_baseline(test, m, true),
        mse: mse(p, test)?,
        baseline_mse: constant_baseline(test, m, false),
    })
}

pub fn train_taxi_predictor(
    world: &TaxiWorld,
    episodes: usize,
    seed: u64,
) -> Result<(Predictor<f64>, PredictorReport), PredictError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = world.env.grid().len().min(100);
    let data = taxi_dataset(&world.env, &world.ctx, episodes, cells, &mut rng)?;
    let (train, test) = data.split(0.2, seed);
    let config = TrainConfig { seed, ..TrainConfig::taxi() };
    let (p, _) = Predictor::train(Domain::Taxi, &train, &config)?;
    let r = report(&p, &train, &test)?;
    Ok((p, r))
}

pub fn train_fire_predictor(
    env: &WildfireEnv,
    episodes: usize,
    seed: u64,
) -> Result<(Predictor<f64>, PredictorReport), PredictError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = fire_dataset(env, episodes, 4, &mut rng);
    let (train, test) = data.split(0.2, seed);
    let config = TrainConfig { seed, ..fire_desk_config() };
    let (p, _) = Predictor::train(Domain::Wildfire, &train, &config)?;
    let r = report(&p, &train, &test)?;
    Ok((p, r))
}

/// Taxi DQN recipe for 10x10 grids.
pub fn taxi_dqn_config(seed: u64) -> DqnConfig {
    DqnConfig {
        epsilon_decay: 60.0,
        target_update_interval: 4,
        replay_capacity: 15_000,
        episodes: 300,
        train_every: 2,
        warmup: 256,
        batch_size: 32,
        seed,
        ..DqnConfig::taxi()
    }
}

pub fn wildfire_dqn_config(seed: u64) -> DqnConfig {
    DqnConfig {
        epsilon_decay: 60.0,
        target_update_interval: 4,
        episodes: 300,
        train_every: 2,
        warmup: 256,
        batch_size: 32,
        seed,
        ..DqnConfig::wildfire()
    }
}

pub fn taxi_qnet_config() -> QNetConfig {
    QNetConfig {
        input_scale: vec![1.0, 0.25],
        ..QNetConfig::taxi_desk()
    }
}

pub fn wildfire_qnet_config() -> QNetConfig {
    QNetConfig::wildfire_desk()
}

pub fn train_taxi_adviser(
    world: &TaxiWorld,
    predictor: &Predictor<f64>,
    config: &DqnConfig,
) -> Result<(QNet<f32>, TaxiAdviser), AdviseError> {
    let mut adv = TaxiAdviser::new(world.env.clone(), world.ctx.clone(), predictor.clone());
    let out = train_dqn::<f32, _>(&mut adv, taxi_qnet_config(), config)?;
    Ok((out.model, adv))
}

pub fn train_wildfire_adviser(
    env: &WildfireEnv,
    predictor: &Predictor<f64>,
    config: &DqnConfig,
) -> Result<(QNet<f32>, WildfireAdviser), AdviseError> {
    let mut adv = WildfireAdviser::new(env.clone(), predictor.clone());
    let out = train_dqn::<f32, _>(&mut adv, wildfire_qnet_config(), config)?;
    Ok((out.model, adv))
}
