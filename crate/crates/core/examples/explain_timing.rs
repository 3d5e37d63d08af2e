use std::time::Instant;

use advice_core::desk;
use advice_core::explain::{generate_adesse, generate_baseline, ExplainConfig};
use advice_core::grid::GridSpec;
use advice_core::nn::{QNet, TrainConfig};
use advice_core::predictor::{fire_desk_config, Domain, Predictor, StateRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let arg = |i: usize, d: usize| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let side = arg(1, 80);
    let lime = arg(2, 50);
    let grid = GridSpec::square(side).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let world = desk::taxi_world(grid, 1);
    let p: Predictor<f32> = Predictor::untrained(Domain::Taxi, &TrainConfig::taxi()).unwrap();
    let q: QNet<f32> = QNet::new(desk::taxi_qnet_config(), 1).unwrap();
    let s = world.env.new_episode(&mut rng);
    let st = StateRef::Taxi(&s, &world.ctx);
    let t = Instant::now();
    generate_adesse(&p, &q, st, &ExplainConfig::default()).unwrap();
    println!("taxi adesse {:?}", t.elapsed());
    let t = Instant::now();
    generate_baseline(&p, &q, st, lime, 1).unwrap();
    println!("taxi baseline({lime}) {:?}", t.elapsed());

    let env = desk::wildfire_env(grid);
    let p: Predictor<f32> = Predictor::untrained(Domain::Wildfire, &fire_desk_config()).unwrap();
    let q: QNet<f32> = QNet::new(desk::wildfire_qnet_config(), 1).unwrap();
    let s = env.new_episode(&mut rng);
    let t = Instant::now();
    generate_adesse(&p, &q, StateRef::Wildfire(&s), &ExplainConfig::default()).unwrap();
    println!("fire adesse {:?}", t.elapsed());
    let t = Instant::now();
    generate_baseline(&p, &q, StateRef::Wildfire(&s), lime, 1).unwrap();
    println!("fire baseline({lime}) {:?}", t.elapsed());
}
