//! Taxi repositioning environment.
//!
//! One advised taxi moves on a grid in ten-minute steps. It earns +10 per
//! drop-off and pays -1 for every step it drives without a passenger. A
//! background fleet supplies the available-taxi counts.

pub mod calendar;
pub mod demand;
pub mod fleet;
pub mod ingest;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

pub use crate::env::EnvError;
use crate::grid::{chebyshev_distance, clip_move, CellIndex, Displacement, Grid, GridSpec};
pub use calendar::{Calendar, WeatherLookup, WeatherRow};
pub use demand::{sample_requests, slot_of_day, DemandModel, DemandSource, Hotspot, SLOTS_PER_DAY};
pub use fleet::{fleet_step, scatter_fleet, DEFAULT_GREEDY_PROB};
pub use ingest::{ingest_trips, BoundingBox, DemandTensor, IngestReport};

pub const EPISODE_STEPS: usize = 54;
pub const MAX_STEP: u32 = 2;
pub const DROP_OFF_REWARD: f64 = 10.0;
pub const EMPTY_STEP_PENALTY: f64 = -1.0;
pub const STEP_MINUTES: i64 = 10;
/// Request grids kept for the predictor: -30, -20, -10 minutes and now.
pub const HISTORY_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxiState {
    pub taxi: CellIndex,
    pub occupied: bool,
    pub trip_remaining: u32,
    pub destination: Option<CellIndex>,
    /// Open pick-up requests.
    pub requests: Grid<u32>,
    /// Idle background taxis, τ(g).
    pub taxis: Grid<u32>,
    pub step: usize,
    pub clock: NaiveDateTime,
    /// Sampled request grids, oldest first; the last entry is "now".
    pub request_history: Vec<Grid<u32>>,
}

impl TaxiState {
    pub fn grid(&self) -> GridSpec {
        self.requests.spec()
    }

    /// History at a cell in feature order (-30, -20, -10, now).
    pub fn history_at(&self, cell: CellIndex) -> [u32; HISTORY_LEN] {
        let mut out = [0; HISTORY_LEN];
        for (o, g) in out.iter_mut().zip(&self.request_history) {
            *o = *g.get(cell);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxiConfig {
    pub grid: GridSpec,
    pub episode_len: usize,
    pub fleet_size: u32,
    pub greedy_prob: f64,
    /// First day an episode may start on (synthetic demand only).
    pub start_date: NaiveDate,
    /// Number of days episode starts are drawn from.
    pub start_days: u32,
}

impl TaxiConfig {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            episode_len: EPISODE_STEPS,
            fleet_size: 50,
            greedy_prob: DEFAULT_GREEDY_PROB,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            start_days: 365,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxiTransition {
    pub state: TaxiState,
    pub reward: f64,
    pub dropped_off: bool,
    pub picked_up: bool,
}

#[derive(Debug, Clone)]
pub struct TaxiEnv {
    config: TaxiConfig,
    demand: DemandSource,
}

impl TaxiEnv {
    pub fn new(config: TaxiConfig, demand: DemandSource) -> Result<Self, EnvError> {
        if demand.grid() != config.grid {
            return Err(EnvError::Demand(format!(
                "demand grid {}x{} does not match environment grid {}x{}",
                demand.grid().width(),
                demand.grid().height(),
                config.grid.width(),
                config.grid.height()
            )));
        }
        if let DemandSource::Synthetic(m) = &demand {
            m.validate()?;
        }
        Ok(Self { config, demand })
    }

    pub fn config(&self) -> &TaxiConfig {
        &self.config
    }

    pub fn demand(&self) -> &DemandSource {
        &self.demand
    }

    pub fn grid(&self) -> GridSpec {
        self.config.grid
    }

    pub fn is_terminal(&self, state: &TaxiState) -> bool {
        state.step >= self.config.episode_len
    }

    fn random_start_clock<R: Rng + ?Sized>(&self, rng: &mut R) -> NaiveDateTime {
        if let DemandSource::Replay(t) = &self.demand {
            if let (Some(first), Some(last)) = (t.first_slot(), t.last_slot()) {
                let slots = ((last - first).num_minutes() / STEP_MINUTES).max(1);
                return first + Duration::minutes(STEP_MINUTES * rng.random_range(0..slots));
            }
        }
        let day = rng.random_range(0..self.config.start_days.max(1)) as i64;
        let slot = rng.random_range(0..SLOTS_PER_DAY) as i64;
        self.config
            .start_date
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            + Duration::days(day)
            + Duration::minutes(STEP_MINUTES * slot)
    }

    /// Taxi on a uniform random cell at a uniform random slot, history
    /// filled with four demand draws.
    pub fn new_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> TaxiState {
        let grid = self.grid();
        let taxi = grid.cell_at(rng.random_range(0..grid.len()));
        let clock = self.random_start_clock(rng);
        let request_history: Vec<Grid<u32>> = (0..HISTORY_LEN)
            .rev()
            .map(|back| {
                let t = clock - Duration::minutes(STEP_MINUTES * back as i64);
                self.demand.sample(&t, rng)
            })
            .collect();
        let requests = request_history[HISTORY_LEN - 1].clone();
        let taxis = scatter_fleet(grid, self.config.fleet_size, rng);
        TaxiState {
            taxi,
            occupied: false,
            trip_remaining: 0,
            destination: None,
            requests,
            taxis,
            step: 0,
            clock,
            request_history,
        }
    }

    /// One ten-minute step. Effects apply in order: trip progress (the
    /// action is ignored while occupied), otherwise the move and its -1,
    /// automatic pickup when a request is open in the taxi's cell, then the
    /// clock advances, requests are redrawn, the fleet moves and the history
    /// shifts.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &TaxiState,
        action: Displacement,
        rng: &mut R,
    ) -> Result<TaxiTransition, EnvError> {
        if action.reach() > MAX_STEP {
            return Err(EnvError::InvalidAction(format!(
                "displacement ({}, {}) exceeds {MAX_STEP} cells",
                action.dx, action.dy
            )));
        }
        if self.is_terminal(state) {
            return Err(EnvError::EpisodeOver(state.step));
        }
        let grid = self.grid();
        let mut next = state.clone();
        let mut reward = 0.0;
        let mut dropped_off = false;
        let mut picked_up = false;

        if next.occupied {
            next.trip_remaining = next.trip_remaining.saturating_sub(1);
            if next.trip_remaining == 0 {
                next.occupied = false;
                reward += DROP_OFF_REWARD;
                dropped_off = true;
                if let Some(d) = next.destination.take() {
                    next.taxi = d;
                }
            }
        } else {
            next.taxi = clip_move(next.taxi, action, grid);
            reward += EMPTY_STEP_PENALTY;
        }

        if !next.occupied && *next.requests.get(next.taxi) >= 1 {
            *next.requests.get_mut(next.taxi) -= 1;
            let dest = self.demand.sample_destination(rng);
            let dist = chebyshev_distance(next.taxi, dest) as u32;
            next.occupied = true;
            next.trip_remaining = dist.div_ceil(2).max(1);
            next.destination = Some(dest);
            picked_up = true;
        }

        next.clock += Duration::minutes(STEP_MINUTES);
        let fresh = self.demand.sample(&next.clock, rng);
        next.taxis = fleet_step(&next.taxis, &fresh, self.config.greedy_prob, rng);
        next.request_history.remove(0);
        next.request_history.push(fresh.clone());
        next.requests = fresh;
        next.step += 1;

        Ok(TaxiTransition {
            state: next,
            reward,
            dropped_off,
            picked_up,
        })
    }
}

/// Points of interest per cell, loosely tracking the demand intensity.
pub fn synthetic_poi<R: Rng + ?Sized>(model: &DemandModel, rng: &mut R) -> Grid<u32> {
    let rates = model.cell_rates();
    rates.map(|&r| {
        let lambda = 0.5 + 3.0 * r;
        Poisson::new(lambda).map(|p| p.sample(rng) as u32).unwrap_or(0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(grid: GridSpec, model: DemandModel) -> TaxiEnv {
        TaxiEnv::new(TaxiConfig::new(grid), DemandSource::Synthetic(model)).unwrap()
    }

    fn quiet_model(grid: GridSpec) -> DemandModel {
        DemandModel {
            grid,
            hotspots: vec![],
            spread: 0.0,
            time_profile: vec![1.0; SLOTS_PER_DAY],
            destination_weights: vec![1.0; grid.len()],
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn empty_move_costs_one() {
        let grid = GridSpec::square(6).unwrap();
        let e = env(grid, quiet_model(grid));
        let s = e.new_episode(&mut rng(1));
        let t = e.step(&s, Displacement::new(1, 1), &mut rng(2)).unwrap();
        assert_eq!(t.reward, -1.0);
        assert!(!t.state.occupied);
        assert_eq!(t.state.taxi, clip_move(s.taxi, Displacement::new(1, 1), grid));
    }

    #[test]
    fn last_trip_step_drops_off() {
        let grid = GridSpec::square(6).unwrap();
        let e = env(grid, quiet_model(grid));
        let mut s = e.new_episode(&mut rng(1));
        s.occupied = true;
        s.trip_remaining = 1;
        s.destination = Some(CellIndex::new(4, 4));
        let t = e.step(&s, Displacement::new(-2, 0), &mut rng(2)).unwrap();
        assert_eq!(t.reward, 10.0);
        assert!(!t.state.occupied);
        assert_eq!(t.state.taxi, CellIndex::new(4, 4));
        assert!(t.dropped_off);
    }

    #[test]
    fn pickup_right_after_drop_off() {
        let grid = GridSpec::square(6).unwrap();
        let e = env(grid, quiet_model(grid));
        let mut s = e.new_episode(&mut rng(1));
        let dest = CellIndex::new(2, 3);
        s.occupied = true;
        s.trip_remaining = 1;
        s.destination = Some(dest);
        s.requests = Grid::filled(grid, 0);
        s.requests.set(dest, 1);
        // Trace: drop-off (+10) lands at `dest`, which has one open request,
        // so the taxi is immediately occupied again.
        let t = e.step(&s, Displacement::STAY, &mut rng(3)).unwrap();
        assert_eq!(t.reward, 10.0);
        assert!(t.dropped_off && t.picked_up);
        assert!(t.state.occupied);
        assert!(t.state.trip_remaining >= 1);
        // Requests are redrawn at the end of the step; the consumed request
        // is visible through the transition flags and the occupied flag.
    }

    #[test]
    fn pickup_decrements_request_before_resample() {
        let grid = GridSpec::square(6).unwrap();
        let e = env(grid, quiet_model(grid));
        let mut s = e.new_episode(&mut rng(4));
        s.taxi = CellIndex::new(0, 0);
        s.requests = Grid::filled(grid, 0);
        s.requests.set(CellIndex::new(1, 0), 2);
        let t = e.step(&s, Displacement::new(1, 0), &mut rng(5)).unwrap();
        assert!(t.picked_up);
        assert_eq!(t.reward, -1.0);
        let dest = t.state.destination.unwrap();
        let expected = (chebyshev_distance(CellIndex::new(1, 0), dest) as u32).div_ceil(2).max(1);
        assert_eq!(t.state.trip_remaining, expected);
    }

    #[test]
    fn occupied_taxi_ignores_action() {
        let grid = GridSpec::square(6).unwrap();
        let e = env(grid, quiet_model(grid));
        let mut s = e.new_episode(&mut rng(1));
        s.taxi = CellIndex::new(3, 3);
        s.occupied = true;
        s.trip_remaining = 3;
        s.destination = Some(CellIndex::new(0, 0));
        let t = e.step(&s, Displacement::new(2, 2), &mut rng(2)).unwrap();
        assert_eq!(t.reward, 0.0);
        assert_eq!(t.state.taxi, CellIndex::new(3, 3));
        assert_eq!(t.state.trip_remaining, 2);
    }

    #[test]
    fn invalid_action_is_rejected() {
        let grid = GridSpec::square(6).unwrap();
        let e = env(grid, quiet_model(grid));
        let s = e.new_episode(&mut rng(1));
        assert!(matches!(
            e.step(&s, Displacement::new(3, 0), &mut rng(2)),
            Err(EnvError::InvalidAction(_))
        ));
    }

    #[test]
    fn episode_is_54_steps_and_deterministic() {
        let grid = GridSpec::square(8).unwrap();
        let model = DemandModel::synthetic(grid, &mut rng(11));
        let e = env(grid, model);
        let a = e.new_episode(&mut rng(5));
        let b = e.new_episode(&mut rng(5));
        assert_eq!(a, b);
        assert_eq!(a.step, 0);
        assert!(!a.occupied);
        assert_eq!(a.request_history.len(), HISTORY_LEN);

        let mut r = rng(6);
        let mut s = a;
        let mut steps = 0;
        while !e.is_terminal(&s) {
            s = e.step(&s, Displacement::new(1, -1), &mut r).unwrap().state;
            steps += 1;
        }
        assert_eq!(steps, 54);
        assert!(matches!(
            e.step(&s, Displacement::STAY, &mut r),
            Err(EnvError::EpisodeOver(54))
        ));
    }

    #[test]
    fn reward_decomposes_into_drop_offs_and_empty_steps() {
        let grid = GridSpec::square(8).unwrap();
        let model = DemandModel::synthetic(grid, &mut rng(12));
        let e = env(grid, model);
        let actions = crate::grid::displacement_actions(MAX_STEP);
        for seed in 0..20 {
            let mut r = rng(seed);
            let mut s = e.new_episode(&mut r);
            let (mut total, mut drops, mut empty) = (0.0, 0, 0);
            while !e.is_terminal(&s) {
                let was_occupied = s.occupied;
                let a = actions[r.random_range(0..actions.len())];
                let t = e.step(&s, a, &mut r).unwrap();
                if was_occupied {
                    assert!(t.state.trip_remaining < s.trip_remaining || t.dropped_off);
                } else {
                    empty += 1;
                }
                drops += t.dropped_off as i32;
                total += t.reward;
                assert_eq!(
                    t.state.taxis.as_slice().iter().sum::<u32>(),
                    e.config().fleet_size
                );
                assert_eq!(t.state.occupied, t.state.trip_remaining > 0);
                s = t.state;
            }
            assert_eq!(total, 10.0 * drops as f64 - empty as f64);
        }
    }

    #[test]
    fn start_cell_is_uniform() {
        // Pearson chi-square over 16 cells, 15 dof; critical value at 0.01 is 30.578.
        let grid = GridSpec::square(4).unwrap();
        let e = env(grid, quiet_model(grid));
        let mut counts = [0u32; 16];
        let mut r = rng(99);
        let n = 10_000;
        for _ in 0..n {
            let s = e.new_episode(&mut r);
            counts[grid.index(s.taxi)] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 30.578, "chi2 = {chi2}");
    }

    #[test]
    fn replay_source_feeds_recorded_requests() {
        let grid = GridSpec::square(4).unwrap();
        let mut tensor = DemandTensor::empty(grid);
        let t0 = NaiveDate::from_ymd_opt(2015, 1, 5)
            .unwrap()
            .and_hms_opt(8, 0, 0)
            .unwrap();
        for k in 0..6 {
            tensor.add_trip(t0 + Duration::minutes(10 * k), CellIndex::new(1, 1), Some(CellIndex::new(3, 3)));
        }
        let e = TaxiEnv::new(TaxiConfig::new(grid), DemandSource::Replay(tensor)).unwrap();
        let s = e.new_episode(&mut rng(1));
        assert!(s.clock >= t0 && s.clock < t0 + Duration::minutes(60));
        assert_eq!(*s.requests.get(CellIndex::new(1, 1)), 1);
        let mut r = rng(2);
        assert_eq!(e.demand().sample_destination(&mut r), CellIndex::new(3, 3));
    }
}
