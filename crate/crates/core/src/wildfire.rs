//! Forest-fire environment with an aerial vehicle (AV) that can drop water.
//!
//! Each step first applies the AV's action, then the three-phase forest
//! update: burning cells lose `beta` fuel (and stop at zero), unburnt cells
//! with `b_g` burning neighbours ignite when `b_g > v * alpha` for a fresh
//! `v ~ U(0,1)`, and finally water dropped by the AV puts out its cell.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use crate::env::EnvError;
use crate::grid::{clip_move, CellIndex, Displacement, Grid, GridSpec};

pub const EPISODE_STEPS: usize = 100;
pub const MOVE_COST: f64 = -1.0;
pub const LOW_RATIO_PENALTY: f64 = -2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireParams {
    /// Ignition scale.
    pub alpha: f64,
    /// Fuel burnt per step.
    pub beta: f64,
    pub ignition_radius: usize,
    pub high_ratio_threshold: f64,
    pub extinguish_gain: f64,
}

impl Default for FireParams {
    fn default() -> Self {
        Self {
            alpha: 20.0,
            beta: 0.7,
            ignition_radius: 2,
            high_ratio_threshold: 0.3,
            extinguish_gain: 10.0,
        }
    }
}

impl FireParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = self.alpha > 0.0
            && self.beta > 0.0
            && self.beta <= 1.0
            && self.ignition_radius >= 1
            && self.high_ratio_threshold > 0.0
            && self.high_ratio_threshold < 1.0
            && self.extinguish_gain > 0.0;
        if ok {
            Ok(())
        } else {
            Err(EnvError::InvalidAction(format!("invalid fire parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestState {
    /// Normalized fuel θ(g) in [0, 1].
    pub fuel: Grid<f64>,
    pub burning: Grid<bool>,
    pub av: CellIndex,
    pub step: usize,
}

impl ForestState {
    pub fn grid(&self) -> GridSpec {
        self.fuel.spec()
    }

    pub fn total_fuel(&self) -> f64 {
        self.fuel.as_slice().iter().sum()
    }

    pub fn burning_count(&self) -> usize {
        self.burning.as_slice().iter().filter(|b| **b).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WildfireAction {
    Extinguish,
    Stay,
    North,
    South,
    East,
    West,
}

impl WildfireAction {
    /// Index order of the Q-network output layer.
    pub const ALL: [WildfireAction; 6] = [
        WildfireAction::Extinguish,
        WildfireAction::Stay,
        WildfireAction::North,
        WildfireAction::South,
        WildfireAction::East,
        WildfireAction::West,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|a| *a == self).expect("listed")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Movement of the AV; extinguish and stay keep it in place. North is
    /// toward row 0.
    pub fn displacement(self) -> Displacement {
        match self {
            WildfireAction::Extinguish | WildfireAction::Stay => Displacement::STAY,
            WildfireAction::North => Displacement::new(0, -1),
            WildfireAction::South => Displacement::new(0, 1),
            WildfireAction::East => Displacement::new(1, 0),
            WildfireAction::West => Displacement::new(-1, 0),
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            WildfireAction::Extinguish => "extinguish",
            WildfireAction::Stay => "stay",
            WildfireAction::North => "north",
            WildfireAction::South => "south",
            WildfireAction::East => "east",
            WildfireAction::West => "west",
        }
    }
}

impl FromStr for WildfireAction {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .find(|a| a.token() == s)
            .copied()
            .ok_or_else(|| EnvError::InvalidAction(format!("unknown wildfire action `{s}`")))
    }
}

/// Probability that an unburnt cell with `b_g` burning neighbours ignites
/// when `v ~ U(0,1)`: `P(b_g > v * alpha) = min(1, b_g / alpha)`.
pub fn ignition_prob(b_g: u32, alpha: f64) -> f64 {
    (b_g as f64 / alpha).min(1.0)
}

/// Burning cells within Chebyshev `radius` of each cell, the cell itself
/// excluded. Uses a summed-area table.
pub fn burning_neighbours(burning: &Grid<bool>, radius: usize) -> Grid<u32> {
    let spec = burning.spec();
    let (w, h) = (spec.width(), spec.height());
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += *burning.get(CellIndex::new(x, y)) as u32;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    Grid::from_fn(spec, |c| {
        let x0 = c.x.saturating_sub(radius);
        let y0 = c.y.saturating_sub(radius);
        let x1 = (c.x + radius).min(w - 1) + 1;
        let y1 = (c.y + radius).min(h - 1) + 1;
        let total = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
            - sat[y0 * (w + 1) + x1]
            - sat[y1 * (w + 1) + x0];
        total - *burning.get(c) as u32
    })
}

/// One forest update. Neighbour counts use the burning grid as it was at
/// the start of the step.
pub fn fire_step<R: Rng + ?Sized>(
    state: &ForestState,
    extinguish_here: bool,
    params: &FireParams,
    rng: &mut R,
) -> ForestState {
    let counts = burning_neighbours(&state.burning, params.ignition_radius);
    let mut next = state.clone();

    for (fuel, burning) in next
        .fuel
        .as_mut_slice()
        .iter_mut()
        .zip(next.burning.as_mut_slice().iter_mut())
    {
        if *burning {
            *fuel = (*fuel - params.beta).max(0.0);
            if *fuel <= 0.0 {
                *fuel = 0.0;
                *burning = false;
            }
        }
    }

    let was_burning = state.burning.as_slice();
    for i in 0..next.fuel.as_slice().len() {
        let v: f64 = rng.random();
        if was_burning[i] || next.fuel.as_slice()[i] <= 0.0 {
            continue;
        }
        if counts.as_slice()[i] as f64 > v * params.alpha {
            next.burning.as_mut_slice()[i] = true;
        }
    }

    // Water only acts on a cell that was burning when it was dropped.
    if extinguish_here && *state.burning.get(state.av) {
        next.burning.set(state.av, false);
    }
    next
}

/// Share of burning cells in the radius-1 neighbourhood of `g`, `g`
/// included, over the border-clipped neighbourhood size.
pub fn neighborhood_fire_ratio(state: &ForestState, g: CellIndex) -> f64 {
    let spec = state.grid();
    let x0 = g.x.saturating_sub(1);
    let y0 = g.y.saturating_sub(1);
    let x1 = (g.x + 1).min(spec.width() - 1);
    let y1 = (g.y + 1).min(spec.height() - 1);
    let mut burning = 0usize;
    let mut size = 0usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            size += 1;
            burning += *state.burning.get(CellIndex::new(x, y)) as usize;
        }
    }
    burning as f64 / size as f64
}

/// Reward for dropping water where the neighbourhood fire ratio is `ratio`.
pub fn extinguish_reward(ratio: f64, params: &FireParams) -> f64 {
    if ratio >= params.high_ratio_threshold {
        params.extinguish_gain * ratio
    } else {
        LOW_RATIO_PENALTY
    }
}

/// Analytic next-step fire probability per cell; the fire predictor's
/// training labels.
pub fn fire_risk_labels(state: &ForestState, params: &FireParams) -> Grid<f64> {
    let counts = burning_neighbours(&state.burning, params.ignition_radius);
    Grid::from_fn(state.grid(), |c| {
        let fuel = *state.fuel.get(c);
        if *state.burning.get(c) {
            if fuel > params.beta {
                1.0
            } else {
                0.0
            }
        } else if fuel > 0.0 {
            ignition_prob(*counts.get(c), params.alpha)
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildfireConfig {
    pub grid: GridSpec,
    pub episode_len: usize,
    pub params: FireParams,
    /// Chebyshev radius of the burning block each episode starts with.
    pub ignition_block: usize,
    /// Initial fuel is drawn uniformly from `[min_initial_fuel, 1]`.
    pub min_initial_fuel: f64,
}

impl WildfireConfig {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            episode_len: EPISODE_STEPS,
            params: FireParams::default(),
            ignition_block: 1,
            min_initial_fuel: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WildfireTransition {
    pub state: ForestState,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct WildfireEnv {
    config: WildfireConfig,
}

impl WildfireEnv {
    pub fn new(config: WildfireConfig) -> Result<Self, EnvError> {
        config.params.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &WildfireConfig {
        &self.config
    }

    pub fn grid(&self) -> GridSpec {
        self.config.grid
    }

    pub fn params(&self) -> &FireParams {
        &self.config.params
    }

    pub fn is_terminal(&self, state: &ForestState) -> bool {
        state.step >= self.config.episode_len
    }

    pub fn new_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> ForestState {
        let grid = self.grid();
        let lo = self.config.min_initial_fuel.clamp(0.0, 1.0);
        let fuel = Grid::from_fn(grid, |_| if lo < 1.0 { rng.random_range(lo..=1.0) } else { 1.0 });
        let center = grid.cell_at(rng.random_range(0..grid.len()));
        let r = self.config.ignition_block;
        let burning = Grid::from_fn(grid, |c| {
            crate::grid::chebyshev_distance(c, center) <= r
        });
        let av = grid.cell_at(rng.random_range(0..grid.len()));
        ForestState {
            fuel,
            burning,
            av,
            step: 0,
        }
    }

    pub fn reward_for(&self, state: &ForestState, action: WildfireAction) -> f64 {
        let p = &self.config.params;
        match action {
            WildfireAction::Stay => 0.0,
            WildfireAction::Extinguish => {
                extinguish_reward(neighborhood_fire_ratio(state, state.av), p)
            }
            _ => MOVE_COST,
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &ForestState,
        action: WildfireAction,
        rng: &mut R,
    ) -> Result<WildfireTransition, EnvError> {
        if self.is_terminal(state) {
            return Err(EnvError::EpisodeOver(state.step));
        }
        let reward = self.reward_for(state, action);
        let mut moved = state.clone();
        moved.av = clip_move(state.av, action.displacement(), self.grid());
        let mut next = fire_step(
            &moved,
            action == WildfireAction::Extinguish,
            &self.config.params,
            rng,
        );
        next.step += 1;
        Ok(WildfireTransition {
            state: next,
            reward,
        })
    }

    /// Token form used by the service and CLI.
    pub fn step_token<R: Rng + ?Sized>(
        &self,
        state: &ForestState,
        token: &str,
        rng: &mut R,
    ) -> Result<WildfireTransition, EnvError> {
        self.step(state, token.parse()?, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn calm(side: usize) -> ForestState {
        let g = GridSpec::square(side).unwrap();
        ForestState {
            fuel: Grid::filled(g, 1.0),
            burning: Grid::filled(g, false),
            av: CellIndex::new(0, 0),
            step: 0,
        }
    }

    #[test]
    fn ignition_prob_examples() {
        assert_eq!(ignition_prob(0, 20.0), 0.0);
        assert_eq!(ignition_prob(20, 20.0), 1.0);
        assert_eq!(ignition_prob(5, 20.0), 0.25);
        assert_eq!(ignition_prob(30, 20.0), 1.0);
    }

    #[test]
    fn ignition_prob_matches_monte_carlo_over_v() {
        let mut r = rng(17);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| 5.0 > r.random::<f64>() * 20.0)
            .count();
        let freq = hits as f64 / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((freq - 0.25).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn burning_cell_loses_beta() {
        let mut s = calm(5);
        s.burning.set(CellIndex::new(2, 2), true);
        let next = fire_step(&s, false, &FireParams::default(), &mut rng(1));
        assert!((next.fuel.get(CellIndex::new(2, 2)) - 0.3).abs() < 1e-12);
        assert!(*next.burning.get(CellIndex::new(2, 2)));
    }

    #[test]
    fn exhausted_cell_stops_burning() {
        let mut s = calm(5);
        s.fuel.set(CellIndex::new(2, 2), 0.5);
        s.burning.set(CellIndex::new(2, 2), true);
        let next = fire_step(&s, false, &FireParams::default(), &mut rng(1));
        assert_eq!(*next.fuel.get(CellIndex::new(2, 2)), 0.0);
        assert!(!*next.burning.get(CellIndex::new(2, 2)));
    }

    #[test]
    fn isolated_cell_never_ignites() {
        let params = FireParams::default();
        let mut s = calm(12);
        // Far corner fire; (11, 11) has no burning cell within radius 2.
        s.burning.set(CellIndex::new(0, 0), true);
        s.fuel.set(CellIndex::new(0, 0), 1.0);
        let mut r = rng(5);
        for _ in 0..10_000 {
            let mut probe = s.clone();
            probe = fire_step(&probe, false, &params, &mut r);
            assert!(!*probe.burning.get(CellIndex::new(11, 11)));
        }
    }

    #[test]
    fn burning_neighbours_matches_brute_force() {
        let mut r = rng(3);
        let g = GridSpec::new(9, 7).unwrap();
        let burning = Grid::from_fn(g, |_| r.random_bool(0.3));
        for radius in 1..4 {
            let fast = burning_neighbours(&burning, radius);
            for c in g.cells() {
                let slow = crate::grid::neighborhood(c, radius, g)
                    .into_iter()
                    .filter(|n| *burning.get(*n))
                    .count() as u32;
                assert_eq!(*fast.get(c), slow);
            }
        }
    }

    #[test]
    fn fire_ratio_examples() {
        let mut s = calm(5);
        assert_eq!(neighborhood_fire_ratio(&s, CellIndex::new(2, 2)), 0.0);
        for c in crate::grid::neighborhood(CellIndex::new(2, 2), 1, s.grid()) {
            s.burning.set(c, true);
        }
        s.burning.set(CellIndex::new(2, 2), true);
        assert_eq!(neighborhood_fire_ratio(&s, CellIndex::new(2, 2)), 1.0);

        let mut t = calm(5);
        for c in [CellIndex::new(1, 1), CellIndex::new(2, 2), CellIndex::new(3, 3)] {
            t.burning.set(c, true);
        }
        assert!((neighborhood_fire_ratio(&t, CellIndex::new(2, 2)) - 1.0 / 3.0).abs() < 1e-15);
        // corner: 4-cell clipped neighbourhood
        assert_eq!(neighborhood_fire_ratio(&t, CellIndex::new(0, 0)), 0.25);
    }

    #[test]
    fn step_rewards() {
        let env = WildfireEnv::new(WildfireConfig::new(GridSpec::square(5).unwrap())).unwrap();
        let mut s = calm(5);
        s.av = CellIndex::new(2, 2);
        let t = env.step(&s, WildfireAction::East, &mut rng(0)).unwrap();
        assert_eq!(t.reward, -1.0);
        assert_eq!(t.state.av, CellIndex::new(3, 2));
        assert_eq!(t.state.step, 1);

        let t = env.step(&s, WildfireAction::Extinguish, &mut rng(0)).unwrap();
        assert_eq!(t.reward, -2.5);
        assert_eq!(env.step(&s, WildfireAction::Stay, &mut rng(0)).unwrap().reward, 0.0);

        // Interior cell with 6 of 9 burning.
        let mut b = calm(5);
        b.av = CellIndex::new(2, 2);
        for c in crate::grid::neighborhood(b.av, 1, b.grid()).into_iter().take(6) {
            b.burning.set(c, true);
        }
        let t = env.step(&b, WildfireAction::Extinguish, &mut rng(0)).unwrap();
        assert!((t.reward - 10.0 * 6.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn extinguish_reward_formula() {
        let p = FireParams::default();
        assert!((extinguish_reward(0.6, &p) - 6.0).abs() < 1e-12);
        assert_eq!(extinguish_reward(0.0, &p), -2.5);
        assert_eq!(extinguish_reward(0.29, &p), -2.5);
        assert!((extinguish_reward(0.3, &p) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn risk_labels() {
        let p = FireParams::default();
        let mut s = calm(7);
        s.burning.set(CellIndex::new(1, 1), true);
        s.fuel.set(CellIndex::new(1, 1), 0.9);
        s.fuel.set(CellIndex::new(5, 5), 0.0);
        let mu = fire_risk_labels(&s, &p);
        assert_eq!(*mu.get(CellIndex::new(1, 1)), 1.0);
        assert_eq!(*mu.get(CellIndex::new(5, 5)), 0.0);
        assert_eq!(*mu.get(CellIndex::new(2, 2)), 1.0 / 20.0);

        let mut ten = calm(7);
        let center = CellIndex::new(3, 3);
        for c in crate::grid::neighborhood(center, 2, ten.grid()).into_iter().take(10) {
            ten.burning.set(c, true);
        }
        assert_eq!(*fire_risk_labels(&ten, &p).get(center), 0.5);
    }

    #[test]
    fn extinguish_on_unburnt_cell_is_a_no_op() {
        let env = WildfireEnv::new(WildfireConfig::new(GridSpec::square(8).unwrap())).unwrap();
        for seed in 0..50 {
            let mut s = env.new_episode(&mut rng(seed));
            s.burning.set(s.av, false);
            let a = fire_step(&s, true, env.params(), &mut rng(seed + 100));
            let b = fire_step(&s, false, env.params(), &mut rng(seed + 100));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn action_tokens() {
        assert_eq!("north".parse::<WildfireAction>().unwrap(), WildfireAction::North);
        assert!("jump".parse::<WildfireAction>().is_err());
        for (i, a) in WildfireAction::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(a.token().parse::<WildfireAction>().unwrap(), *a);
        }
        let env = WildfireEnv::new(WildfireConfig::new(GridSpec::square(4).unwrap())).unwrap();
        let s = env.new_episode(&mut rng(1));
        assert!(matches!(
            env.step_token(&s, "dive", &mut rng(2)),
            Err(EnvError::InvalidAction(_))
        ));
    }

    #[test]
    fn trajectories_keep_invariants() {
        let env = WildfireEnv::new(WildfireConfig::new(GridSpec::square(10).unwrap())).unwrap();
        let mut r = rng(77);
        for _ in 0..30 {
            let mut s = env.new_episode(&mut r);
            while !env.is_terminal(&s) {
                let a = WildfireAction::ALL[r.random_range(0..6)];
                let t = env.step(&s, a, &mut r).unwrap();
                assert!(t.state.total_fuel() <= s.total_fuel() + 1e-12);
                for (c, &b) in t.state.burning.iter() {
                    let f = *t.state.fuel.get(c);
                    assert!((0.0..=1.0).contains(&f));
                    assert!(!b || f > 0.0);
                }
                s = t.state;
            }
            assert_eq!(s.step, 100);
        }
    }

    #[test]
    fn forest_state_json_round_trip() {
        let env = WildfireEnv::new(WildfireConfig::new(GridSpec::square(6).unwrap())).unwrap();
        let s = env.new_episode(&mut rng(4));
        assert_eq!(ForestState::from_json(&s.to_json()).unwrap(), s);
    }
}
