//! Trains desk predictors and advisers and writes them where `bench
//! --models DIR` looks for them.
//!
//! cargo run --release -p advice-bench --example train_models -- DIR [SIDE...]

use std::path::PathBuf;

use advice_bench::model_paths;
use advice_core::desk;
use advice_core::grid::GridSpec;
use advice_core::predictor::Domain;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "models".into()));
    let sides: Vec<usize> = args.map(|s| s.parse()).collect::<Result<_, _>>()?;
    std::fs::create_dir_all(&dir)?;
    for side in if sides.is_empty() { vec![10] } else { sides } {
        let grid = GridSpec::square(side)?;

        let world = desk::taxi_world(grid, 1);
        let (pred, rep) = desk::train_taxi_predictor(&world, 4, 2)?;
        eprintln!("taxi {side}: predictor MAE {:.3} (mean {:.3})", rep.mae, rep.baseline_mae);
        let (q, _) = desk::train_taxi_adviser(&world, &pred, &desk::taxi_dqn_config(3))?;
        let (pp, qp) = model_paths(&dir, Domain::Taxi, side);
        pred.save(&pp)?;
        q.save(&qp)?;

        let env = desk::wildfire_env(grid);
        let (pred, rep) = desk::train_fire_predictor(&env, 20, 2)?;
        eprintln!("wildfire {side}: predictor MAE {:.3} (mean {:.3})", rep.mae, rep.baseline_mae);
        let (q, _) = desk::train_wildfire_adviser(&env, &pred, &desk::wildfire_dqn_config(3))?;
        let (pp, qp) = model_paths(&dir, Domain::Wildfire, side);
        pred.save(&pp)?;
        q.save(&qp)?;
        eprintln!("wrote {side}x{side} checkpoints to {}", dir.display());
    }
    Ok(())
}
