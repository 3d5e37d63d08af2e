//! One PASS/FAIL line per acceptance criterion. Set `ACCEPTANCE_ONLY` to a
//! comma-separated list of criterion names to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use advice_bench::{run_benchmark, BenchConfig, Explainer};
use advice_core::advisor::{evaluate, DrlInput, EvalPolicy, QTable, TaxiAdviser, WildfireAdviser};
use advice_core::attrib::{exact_shapley, kernel_shap};
use advice_core::desk;
use advice_core::explain::{
    explanation_size, fire_index, generate_adesse, generate_baseline, importance_map, taxi_index, AnyExplanation,
    ExplainConfig,
};
use advice_core::grid::{CellIndex, Displacement, Grid, GridSpec};
use advice_core::nn::{Activation, ConvSpec, MlpModel, QNet, QNetConfig, TrainConfig};
use advice_core::predictor::{fire_desk_config, Domain, Predictor, StateRef, TaxiContext};
use advice_core::taxi::{Calendar, TaxiState};
use advice_core::wildfire::{burning_neighbours, fire_step, ignition_prob, ForestState, WildfireAction};
use advice_game_service::export::{game_log_csv, read_game_log};
use advice_game_service::types::{SessionView, StepOutcome, StepPayload, STEPS_PER_TRIAL};
use advice_game_service::{router, Game, GameConfig, Models};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|p| p.trim().to_string()).collect());
    let criteria: [(&str, fn() -> Check); 8] = [
        ("explanation-sizes", table_sizes),
        ("timing-ordering", timing_ordering),
        ("attribution-oracle", attribution_oracle),
        ("fire-model-oracle", fire_oracle),
        ("formula-fixtures", formula_fixtures),
        ("learning-sanity", learning_sanity),
        ("gradient-check", gradient_check),
        ("game-lifecycle", game_lifecycle),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|n| n == name)) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

const SIDES: [usize; 4] = [10, 20, 40, 80];

/// Expected sizes in thousands, rounded to two decimals.
fn table_entry(domain: Domain, explainer: Explainer) -> [&'static str; 4] {
    match (domain, explainer) {
        (Domain::Taxi, Explainer::Baseline) => ["0.71", "2.81", "11.21", "44.81"],
        (Domain::Wildfire, Explainer::Baseline) => ["0.30", "1.20", "4.80", "19.20"],
        (_, Explainer::Adesse) => ["0.24", "0.84", "3.24", "12.84"],
    }
}

fn untrained(domain: Domain) -> (Predictor<f32>, QNet<f32>) {
    match domain {
        Domain::Taxi => (
            Predictor::untrained(domain, &TrainConfig::taxi()).unwrap(),
            QNet::new(desk::taxi_qnet_config(), 1).unwrap(),
        ),
        Domain::Wildfire => (
            Predictor::untrained(domain, &fire_desk_config()).unwrap(),
            QNet::new(desk::wildfire_qnet_config(), 1).unwrap(),
        ),
    }
}

fn table_sizes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for domain in [Domain::Taxi, Domain::Wildfire] {
        let (p, q) = untrained(domain);
        for (i, side) in SIDES.into_iter().enumerate() {
            let grid = GridSpec::square(side).unwrap();
            let world = desk::taxi_world(grid, 1);
            let fire = desk::wildfire_env(grid);
            let taxi_state = world.env.new_episode(&mut rng);
            let fire_state = fire.new_episode(&mut rng);
            let state = match domain {
                Domain::Taxi => StateRef::Taxi(&taxi_state, &world.ctx),
                Domain::Wildfire => StateRef::Wildfire(&fire_state),
            };
            let a = generate_adesse(&p, &q, state, &ExplainConfig::default()).map_err(|e| e.to_string())?;
            let b = generate_baseline(&p, &q, state, 5, 1).map_err(|e| e.to_string())?;
            for (explainer, size) in [
                (Explainer::Adesse, explanation_size(AnyExplanation::Adesse(&a))),
                (Explainer::Baseline, explanation_size(AnyExplanation::Baseline(&b))),
            ] {
                let got = format!("{:.2}", size as f64 / 1000.0);
                let want = table_entry(domain, explainer)[i];
                ensure(got == want, || format!("{domain:?} {side}x{side} {explainer:?}: {got}K, expected {want}K"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} cells match"))
}

fn timing_ordering() -> Check {
    let config = BenchConfig {
        runs: 10,
        seed: 0,
        ..BenchConfig::default()
    };
    let report = run_benchmark(&config, |_| {}).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for domain in [Domain::Taxi, Domain::Wildfire] {
        for side in SIDES {
            let a = report.row(domain, side, Explainer::Adesse).ok_or("missing row")?;
            let b = report.row(domain, side, Explainer::Baseline).ok_or("missing row")?;
            ensure(a.mean_time_s < b.mean_time_s, || {
                format!(
                    "{domain:?} {side}x{side}: ADESSE {:.3}s not below baseline {:.3}s",
                    a.mean_time_s, b.mean_time_s
                )
            })?;
            if side == 80 {
                ensure(a.mean_time_s <= 10.0, || format!("{domain:?} 80x80 ADESSE took {:.2}s", a.mean_time_s))?;
                summary.push(format!(
                    "{} 80x80 {:.2}s vs {:.2}s",
                    domain.as_str(),
                    a.mean_time_s,
                    b.mean_time_s
                ));
            }
        }
    }
    Ok(format!("ADESSE faster in all 8 cells; {} (random-init networks)", summary.join(", ")))
}

#[derive(Clone)]
struct RandomFn {
    linear: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
    squash: Vec<f64>,
}

impl RandomFn {
    fn new(n: usize, rng: &mut impl Rng) -> Self {
        Self {
            linear: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            pairs: (0..n)
                .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(-1.0..1.0)))
                .collect(),
            squash: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    fn eval(&self, v: &[f64]) -> f64 {
        let lin: f64 = v.iter().zip(&self.linear).map(|(a, b)| a * b).sum();
        let pair: f64 = self.pairs.iter().map(|&(i, j, c)| c * v[i] * v[j]).sum();
        let sq = v.iter().zip(&self.squash).map(|(a, b)| a * b).sum::<f64>().tanh();
        lin + pair + 2.0 * sq
    }
}

fn attribution_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let names = |n: usize| (0..n).map(|i| format!("x{i}")).collect::<Vec<_>>();
    let point = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>();
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = 1 + case % 10;
        let f = RandomFn::new(n, &mut rng);
        let (x, bg) = (point(n, &mut rng), point(n, &mut rng));
        let e = exact_shapley(|v: &[f64]| f.eval(v), &x, &bg, &names(n)).map_err(|e| e.to_string())?;
        let budget = (1usize << n).max(n + 2);
        let k = kernel_shap(|v: &[f64]| f.eval(v), &x, &bg, &names(n), budget, case as u64).map_err(|e| e.to_string())?;
        ensure(k.diagnostics.exhaustive, || format!("case {case} was sampled"))?;
        for (a, b) in e.contributions.iter().zip(&k.contributions) {
            worst = worst.max((a - b).abs());
        }

        // Axioms: feature 0 is a dummy, features 1 and 2 are symmetric.
        if n >= 3 {
            let g = |v: &[f64]| {
                let mut w = v.to_vec();
                w[0] = 0.25;
                let (s, p) = (v[1] + v[2], v[1] * v[2]);
                w[1] = s;
                w[2] = p;
                f.eval(&w)
            };
            let (mut xs, mut bs) = (x.clone(), bg.clone());
            xs[2] = xs[1];
            bs[2] = bs[1];
            let r = exact_shapley(g, &xs, &bs, &names(n)).map_err(|e| e.to_string())?;
            let sum: f64 = r.contributions.iter().sum();
            ensure((sum - (g(&xs) - g(&bs))).abs() < 1e-9, || format!("case {case}: efficiency off by {}", sum - (g(&xs) - g(&bs))))?;
            ensure(r.contributions[0] == 0.0, || format!("case {case}: dummy got {}", r.contributions[0]))?;
            ensure((r.contributions[1] - r.contributions[2]).abs() < 1e-12, || format!("case {case}: symmetry broken"))?;
        }
    }
    ensure(worst < 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("200 functions, max |kernel - exact| = {worst:.1e}; axioms hold"))
}

fn fire_oracle() -> Check {
    let env = desk::wildfire_env(GridSpec::square(10).unwrap());
    let params = env.params().clone();
    let spec = GridSpec::square(5).unwrap();
    let target = CellIndex::new(2, 2);
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lines = Vec::new();
    for b in [1u32, 5, 10, 19] {
        let mut burning = Grid::filled(spec, false);
        let mut lit = 0;
        for c in spec.cells() {
            if c != target && lit < b {
                burning.set(c, true);
                lit += 1;
            }
        }
        let state = ForestState {
            fuel: Grid::filled(spec, 1.0),
            burning,
            av: CellIndex::new(0, 0),
            step: 0,
        };
        ensure(*burning_neighbours(&state.burning, params.ignition_radius).get(target) == b, || {
            format!("fixture for b = {b} has the wrong neighbour count")
        })?;
        let ignited = (0..trials)
            .filter(|_| *fire_step(&state, false, &params, &mut rng).burning.get(target))
            .count();
        let p = ignition_prob(b, params.alpha);
        let freq = ignited as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        ensure((freq - p).abs() <= 3.0 * sigma, || {
            format!("b = {b}: frequency {freq} vs {p} (3 sigma = {:.2e})", 3.0 * sigma)
        })?;
        lines.push(format!("b={b} {freq:.4}/{p:.4}"));
    }

    for t in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let mut s = env.new_episode(&mut rng);
        while !env.is_terminal(&s) {
            let a = WildfireAction::from_index(rng.random_range(0..WildfireAction::ALL.len())).unwrap();
            let next = env.step(&s, a, &mut rng).map_err(|e| e.to_string())?.state;
            let grew = next.fuel.as_slice().iter().zip(s.fuel.as_slice()).any(|(n, o)| n > o);
            ensure(!grew && next.total_fuel() <= s.total_fuel(), || format!("fuel grew in trajectory {t} at step {}", s.step))?;
            s = next;
        }
    }
    Ok(format!("{}; fuel never grew over 1000 trajectories", lines.join(", ")))
}

fn grid_of(side: usize, v: &[f64]) -> Grid<f64> {
    Grid::from_vec(GridSpec::square(side).unwrap(), v.to_vec()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn formula_fixtures() -> Check {
    // Demand-supply index, including an empty cell with demand.
    let phi = taxi_index(&grid_of(2, &[2.0, 0.0, 1.0, 1.0]), &grid_of(2, &[1.0, 3.0, 0.0, 2.0]), 0.75)
        .map_err(|e| e.to_string())?;
    let want = [0.75 * 2.0 + 0.25 * 2.0 * 4.0 / 4.0, 0.0, 0.0, 0.75 * 0.5 + 0.25 * 1.0 * 4.0 / 4.0];
    for (g, w) in phi.as_slice().iter().zip(want) {
        ensure(close(*g, w), || format!("taxi index {:?} vs {want:?}", phi.as_slice()))?;
    }
    let zero = taxi_index(&grid_of(2, &[0.0; 4]), &grid_of(2, &[1.0; 4]), 0.75).map_err(|e| e.to_string())?;
    ensure(zero.as_slice().iter().all(|v| *v == 0.0), || "zero demand".into())?;

    // Fire index at the burning extremes.
    let burning = Grid::from_vec(GridSpec::square(2).unwrap(), vec![true, false, true, false]).unwrap();
    let phi = fire_index(&grid_of(2, &[1.0, 0.0, 0.5, 0.2]), &grid_of(2, &[1.0, 0.0, 0.8, 0.5]), &burning)
        .map_err(|e| e.to_string())?;
    ensure(phi.as_slice()[0] == -1.0 && phi.as_slice()[1] == 1.0, || format!("fire index {:?}", phi.as_slice()))?;
    ensure(close(phi.as_slice()[2], -0.4), || format!("fire index {:?}", phi.as_slice()))?;

    // Constant spread normalizes to zero importance everywhere.
    let spec = GridSpec::square(2).unwrap();
    let mut table = Grid::filled(spec, vec![0.0; 25]);
    for (i, c) in spec.cells().enumerate() {
        table.get_mut(c)[i] = 2.0;
    }
    let sigma = DrlInput {
        domain: Domain::Taxi,
        grid: spec,
        maps: vec![0.0; 2 * spec.len()],
        agent: CellIndex::new(0, 0),
    };
    let imp = importance_map(&QTable { actions: 25, table }, &sigma).map_err(|e| e.to_string())?;
    ensure(imp.delta.as_slice().iter().all(|d| *d == 0.0), || format!("delta {:?}", imp.delta.as_slice()))?;

    hand_built_explanation()?;
    Ok("indices, constant-Q normalization and the 3x3 hand-computed explanation match".into())
}

fn grid3(rows: [[u32; 3]; 3]) -> Grid<u32> {
    Grid::from_vec(GridSpec::square(3).unwrap(), rows.concat()).unwrap()
}

fn hand_built_explanation() -> Result<(), String> {
    const RIGHT: usize = 13;
    const DOWN: usize = 17;
    const STAY: usize = 12;
    let spec = GridSpec::square(3).unwrap();
    let now = grid3([[2, 0, 1], [0, 4, 0], [1, 0, 0]]);
    let zero = Grid::filled(spec, 0u32);
    let state = TaxiState {
        taxi: CellIndex::new(0, 0),
        occupied: false,
        trip_remaining: 0,
        destination: None,
        requests: now.clone(),
        taxis: grid3([[1, 2, 0], [1, 2, 1], [0, 1, 1]]),
        step: 0,
        clock: chrono::NaiveDate::from_ymd_opt(2016, 1, 4).unwrap().and_hms_opt(9, 0, 0).unwrap(),
        request_history: vec![zero.clone(), zero.clone(), zero, now],
    };
    let ctx = TaxiContext {
        poi: grid3([[0, 2, 0], [0, 0, 2], [0, 0, 0]]),
        calendar: Calendar::neutral(),
    };
    let mut params = vec![0.0; 21];
    let mut mean = vec![0.0; 20];
    for (j, w, m) in [(0, 0.05, -1.0), (1, 0.02, -1.0), (2, 0.3, -1.0), (3, 0.2, -1.0), (4, 0.125, -1.0), (5, 1.0, 0.0), (6, 0.5, 0.0)] {
        params[j] = w;
        mean[j] = m;
    }
    let model = MlpModel::from_params(&[20, 1], &[Activation::Identity], 0, params).unwrap();
    let mut p = Predictor::from_model(Domain::Taxi, model);
    p.mean = mean;
    let mut table = Grid::filled(spec, vec![0.0; 25]);
    for (x, y, entries) in [
        (0, 0, vec![(RIGHT, 3.0), (0, -1.0)]),
        (1, 0, vec![(DOWN, 2.0)]),
        (1, 1, vec![(RIGHT, 5.0)]),
        (2, 1, vec![(STAY, 1.0)]),
    ] {
        for (a, v) in entries {
            table.get_mut(CellIndex::new(x, y))[a] = v;
        }
    }
    let q = QTable { actions: 25, table };
    let e = generate_adesse(&p, &q, StateRef::Taxi(&state, &ctx), &ExplainConfig::default()).map_err(|e| e.to_string())?;

    ensure(e.advised_action == RIGHT, || format!("advised {}", e.advised_action))?;
    let path: Vec<(String, CellIndex)> = e.feature_lists.iter().map(|f| (f.label.clone(), f.cell)).collect();
    let want_path: Vec<(String, CellIndex)> = [(0, 0), (1, 0), (1, 1), (2, 1)]
        .iter()
        .zip(["A", "B", "C", "D"])
        .map(|(&(x, y), l)| (l.to_string(), CellIndex::new(x, y)))
        .collect();
    ensure(path == want_path, || format!("path {path:?}"))?;
    let lists: [&[(&str, f64)]; 4] = [
        &[("requests_t", 2.0), ("requests_t-30", 0.3), ("requests_t-20", 0.2), ("requests_t-10", 0.125), ("x", 0.05), ("y", 0.02)],
        &[("poi", 1.0), ("requests_t-30", 0.3), ("requests_t-20", 0.2), ("requests_t-10", 0.125), ("x", 0.1), ("y", 0.02)],
        &[("requests_t", 4.0), ("requests_t-30", 0.3), ("requests_t-20", 0.2), ("requests_t-10", 0.125), ("x", 0.1), ("y", 0.04)],
        &[("poi", 1.0), ("requests_t-30", 0.3), ("requests_t-20", 0.2), ("x", 0.15), ("requests_t-10", 0.125), ("y", 0.04)],
    ];
    for (list, want) in e.feature_lists.iter().zip(lists) {
        ensure(list.features.len() == 6, || format!("{} features at {}", list.features.len(), list.label))?;
        for ((name, v), (wn, wv)) in list.features.iter().zip(want) {
            ensure(name == wn && close(*v, *wv), || format!("{}: {name} = {v}, expected {wn} = {wv}", list.label))?;
        }
    }
    let s_rho = 16.885;
    let phi = |rho: f64, tau: f64| 0.75 * rho / tau + 0.25 * rho * 9.0 / s_rho;
    let want_phi = [phi(2.695, 1.0), phi(1.745, 2.0), 0.0, phi(0.715, 1.0), phi(4.765, 2.0), phi(1.815, 1.0), 0.0, phi(0.785, 1.0), phi(0.835, 1.0)];
    for (a, b) in e.indices.iter().zip(want_phi) {
        ensure(close(*a, b), || format!("index {a} vs {b}"))?;
    }
    let want_actions = [RIGHT, DOWN, 0, 0, RIGHT, STAY, 0, 0, 0];
    let want_delta = [0.8, 0.4, 0.0, 0.0, 1.0, 0.2, 0.0, 0.0, 0.0];
    for (i, arrow) in e.arrows.iter().enumerate() {
        ensure(arrow.action == want_actions[i] && close(arrow.shade, want_delta[i]), || {
            format!("arrow {i}: {} / {}", arrow.action, arrow.shade)
        })?;
    }
    ensure(explanation_size(AnyExplanation::Adesse(&e)) == 58, || "size".into())
}

fn learning_sanity() -> Check {
    let grid = GridSpec::square(10).unwrap();
    let mut notes = Vec::new();
    let mut errors = Vec::new();

    let world = desk::taxi_world(grid, 1);
    let (pred, rep) = desk::train_taxi_predictor(&world, 4, 2).map_err(|e| e.to_string())?;
    if !(rep.mae < rep.baseline_mae && rep.mse < rep.baseline_mse) {
        errors.push(format!("taxi predictor MAE {:.3}/{:.3} MSE {:.3}/{:.3}", rep.mae, rep.baseline_mae, rep.mse, rep.baseline_mse));
    }
    notes.push(format!("taxi MAE {:.3} vs mean {:.3}", rep.mae, rep.baseline_mae));
    let mut adv = TaxiAdviser::new(world.env.clone(), world.ctx.clone(), pred.clone());
    let random = evaluate::<f32, _>(&mut adv, &EvalPolicy::Random, 100, 1000).map_err(|e| e.to_string())?;
    let (q, mut adv) = desk::train_taxi_adviser(&world, &pred, &desk::taxi_dqn_config(3)).map_err(|e| e.to_string())?;
    let greedy = evaluate::<f32, _>(&mut adv, &EvalPolicy::Greedy(&q), 100, 1000).map_err(|e| e.to_string())?;
    if !(random.mean_reward > 0.0 && greedy.mean_reward >= 2.0 * random.mean_reward) {
        errors.push(format!("taxi reward {:.2} vs random {:.2}", greedy.mean_reward, random.mean_reward));
    }
    notes.push(format!("taxi reward {:.2} vs random {:.2}", greedy.mean_reward, random.mean_reward));

    let env = desk::wildfire_env(grid);
    let (pred, rep) = desk::train_fire_predictor(&env, 20, 2).map_err(|e| e.to_string())?;
    if !(rep.mae < rep.baseline_mae && rep.mse < rep.baseline_mse) {
        errors.push(format!("fire predictor MAE {:.3}/{:.3} MSE {:.3}/{:.3}", rep.mae, rep.baseline_mae, rep.mse, rep.baseline_mse));
    }
    notes.push(format!("fire MAE {:.3} vs mean {:.3}", rep.mae, rep.baseline_mae));
    let mut adv = WildfireAdviser::new(env.clone(), pred.clone());
    let random = evaluate::<f32, _>(&mut adv, &EvalPolicy::Random, 50, 1000).map_err(|e| e.to_string())?;
    let (q, mut adv) = desk::train_wildfire_adviser(&env, &pred, &desk::wildfire_dqn_config(3)).map_err(|e| e.to_string())?;
    let greedy = evaluate::<f32, _>(&mut adv, &EvalPolicy::Greedy(&q), 50, 1000).map_err(|e| e.to_string())?;
    if greedy.mean_score <= random.mean_score {
        errors.push(format!("fuel {:.3} vs random {:.3}", greedy.mean_score, random.mean_score));
    }
    notes.push(format!("fuel {:.3} vs random {:.3}", greedy.mean_score, random.mean_score));

    if errors.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(errors.join("; "))
    }
}

fn gradient_check() -> Check {
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    let mut check = |fd: f64, bp: f64| {
        if bp.abs().max(fd.abs()) < 1e-7 {
            return;
        }
        worst = worst.max((fd - bp).abs() / fd.abs().max(bp.abs()));
        probes += 1;
    };

    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.random_range(1..4);
        let mut widths = vec![rng.random_range(2..6)];
        for _ in 0..depth {
            widths.push(rng.random_range(2..7));
        }
        let acts: Vec<Activation> = (0..depth)
            .map(|i| {
                if i + 1 == depth {
                    Activation::Identity
                } else {
                    [Activation::LeakyRelu, Activation::Sigmoid][rng.random_range(0..2)]
                }
            })
            .collect();
        let m = MlpModel::<f64>::new(&widths, &acts, seed).unwrap();
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d_out: Vec<f64> = (0..*widths.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |mm: &MlpModel<f64>| mm.forward(&x).unwrap().iter().zip(&d_out).map(|(a, b)| a * b).sum::<f64>();
        let cache = m.forward_cached(&x).unwrap();
        let mut grad = vec![0.0; m.param_count()];
        m.backward(&cache, &d_out, &mut grad);
        for i in 0..m.param_count() {
            let h = 1e-6;
            let mut up = m.clone();
            up.params_mut()[i] += h;
            let mut dn = m.clone();
            dn.params_mut()[i] -= h;
            check((objective(&up) - objective(&dn)) / (2.0 * h), grad[i]);
        }
    }

    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let spec = GridSpec::new(rng.random_range(3..7), rng.random_range(3..7)).unwrap();
        let config = QNetConfig {
            input_channels: 2,
            input_scale: vec![0.5, 2.0],
            convs: vec![ConvSpec { kernel: 3, filters: 3 }, ConvSpec { kernel: 3, filters: 2 }],
            pool: 2,
            trunk: vec![5],
            actions: 4,
        };
        let net = QNet::<f64>::new(config, seed).unwrap();
        let maps: Vec<f64> = (0..2 * spec.len()).map(|_| rng.random_range(0.0..2.0)).collect();
        let agent = spec.cell_at(rng.random_range(0..spec.len()));
        let weights: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |n: &QNet<f64>| {
            n.q_values(&maps, spec, agent).unwrap().iter().zip(&weights).map(|(q, w)| q * w).sum::<f64>()
        };
        let (_, cache) = net.forward_cached(&maps, spec, agent).unwrap();
        let mut grad = vec![0.0; net.param_count()];
        net.backward(&cache, &weights, &mut grad);
        let base = net.params();
        for i in 0..base.len() {
            let h = 1e-5;
            let mut p = base.clone();
            p[i] += h;
            let mut up = net.clone();
            up.set_params(&p);
            p[i] -= 2.0 * h;
            let mut dn = net.clone();
            dn.set_params(&p);
            check((objective(&up) - objective(&dn)) / (2.0 * h), grad[i]);
        }
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:e} over {probes} parameters"))?;
    Ok(format!("{probes} parameters, worst relative error {worst:.1e}"))
}

fn game_lifecycle() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let side = 6;
    let seed = 9;
    let config = GameConfig {
        grid_side: side,
        seed,
        lime_samples: 60,
        ..GameConfig::new(dir.path())
    };
    let game = Game::open(config, Models::random_init(2).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(async move { axum::serve(listener, router(Arc::new(game))).await });
        let http = reqwest::Client::new();
        let err = |e: reqwest::Error| e.to_string();

        let a: SessionView = http.post(format!("{base}/sessions")).send().await.map_err(err)?.json().await.map_err(err)?;
        let b: SessionView = http.post(format!("{base}/sessions")).send().await.map_err(err)?.json().await.map_err(err)?;
        ensure(a.condition_order != b.condition_order, || "consecutive sessions share an order".into())?;
        let url = |p: &str| format!("{base}/sessions/{}/{p}", a.id);

        for trial in 0..2 {
            for step in 0..STEPS_PER_TRIAL {
                let p: StepPayload = http.get(url("step")).send().await.map_err(err)?.json().await.map_err(err)?;
                ensure(p.condition == a.condition_order[trial], || "wrong condition served".into())?;
                let chosen = if step % 3 == 0 { Displacement::new(-1, 0) } else { p.advised_move };
                let out: StepOutcome = http
                    .post(url("action"))
                    .json(&json!({"step": step, "action": chosen}))
                    .send()
                    .await
                    .map_err(err)?
                    .json()
                    .await
                    .map_err(err)?;
                ensure(out.trial_complete == (step + 1 == STEPS_PER_TRIAL), || "trial completion flag".into())?;
            }
            let gone = http.get(url("step")).send().await.map_err(err)?.status();
            ensure(gone == 410, || format!("finished trial answered {gone}"))?;
            let answers = json!({"response": {
                "understand": 4, "satisfying": 4, "detailed": 3, "complete": 3, "actionable": 5,
                "reliable": 4, "trustworthy": 4, "followed_advice": 3, "confidence": 4,
                "strategy": "", "attention_checks": ["x", "y", "z"]
            }});
            let st = http.post(url("questionnaire")).json(&answers).send().await.map_err(err)?.status();
            ensure(st == 200, || format!("questionnaire answered {st}"))?;
        }
        let view: SessionView = http.get(format!("{base}/sessions/{}", a.id)).send().await.map_err(err)?.json().await.map_err(err)?;
        ensure(view.complete, || "session not complete".into())?;

        let text = http.get(format!("{base}/export/game_log.csv")).send().await.map_err(err)?.text().await.map_err(err)?;
        let rows = read_game_log(&text).map_err(|e| e.to_string())?;
        ensure(rows.len() == 24, || format!("{} game rows", rows.len()))?;
        ensure(game_log_csv(&rows).map_err(|e| e.to_string())? == text, || "CSV does not round-trip".into())?;
        ensure(
            rows.iter().all(|r| r.followed == ((r.advised_dx, r.advised_dy) == (r.chosen_dx, r.chosen_dy))),
            || "followed column inconsistent".into(),
        )?;
        let world = desk::taxi_world(GridSpec::square(side).unwrap(), seed);
        for trial in 0..2 {
            let mut rng = ChaCha8Rng::seed_from_u64(view.trial_seeds[trial]);
            let mut s = world.env.new_episode(&mut rng);
            for r in rows.iter().filter(|r| r.trial_index == trial) {
                let t = world.env.step(&s, Displacement::new(r.chosen_dx, r.chosen_dy), &mut rng).map_err(|e| e.to_string())?;
                ensure(t.reward == r.reward, || format!("trial {trial} step {}: {} vs {}", r.step, r.reward, t.reward))?;
                s = t.state;
            }
        }
        let total: f64 = rows.iter().map(|r| r.reward).sum();
        Ok(format!("24 rows, rewards replay exactly (total {total}), orders {:?} / {:?}", a.condition_order, b.condition_order))
    })
}
