//! Environments wrapped with their predictor so a trainer sees decisions,
//! DRL inputs and rewards only.

use rand::Rng;

use super::{action_count, action_displacement, build_sigma, AdviseError, DrlInput};
use crate::grid::Displacement;
use crate::predictor::{Domain, Predictor, StateRef, TaxiContext};
use crate::taxi::{TaxiEnv, TaxiState};
use crate::wildfire::{ForestState, WildfireAction, WildfireEnv};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// One reward per environment step taken before the next decision.
    pub rewards: Vec<f64>,
    pub done: bool,
}

pub trait AdvisedEnv {
    fn domain(&self) -> Domain;

    fn action_count(&self) -> usize {
        action_count(self.domain())
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R);

    fn sigma(&self) -> Result<DrlInput<f64>, AdviseError>;

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<StepOutcome, AdviseError>;

    fn is_done(&self) -> bool;

    /// Sum of rewards since the last reset.
    fn episode_reward(&self) -> f64;

    /// Domain outcome measure: reward for taxi, remaining fuel for wildfire.
    fn score(&self) -> f64;
}

/// Taxi episodes where a decision is only requested while the taxi is
/// empty; steps spent carrying a passenger are folded into the preceding
/// decision.
#[derive(Debug, Clone)]
pub struct TaxiAdviser {
    pub env: TaxiEnv,
    pub ctx: TaxiContext,
    pub predictor: Predictor<f64>,
    state: Option<TaxiState>,
    total: f64,
}

impl TaxiAdviser {
    pub fn new(env: TaxiEnv, ctx: TaxiContext, predictor: Predictor<f64>) -> Self {
        Self {
            env,
            ctx,
            predictor,
            state: None,
            total: 0.0,
        }
    }

    pub fn state(&self) -> &TaxiState {
        self.state.as_ref().expect("reset before use")
    }
}

impl AdvisedEnv for TaxiAdviser {
    fn domain(&self) -> Domain {
        Domain::Taxi
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.state = Some(self.env.new_episode(rng));
        self.total = 0.0;
    }

    fn sigma(&self) -> Result<DrlInput<f64>, AdviseError> {
        let s = self.state();
        let pred = self.predictor.predict_grid(StateRef::Taxi(s, &self.ctx))?;
        build_sigma(StateRef::Taxi(s, &self.ctx), &pred)
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<StepOutcome, AdviseError> {
        let d = action_displacement(Domain::Taxi, action)
            .ok_or_else(|| AdviseError::Config(format!("taxi action {action} out of range")))?;
        let mut rewards = Vec::new();
        let mut s = self.state().clone();
        let mut first = true;
        while first || (s.occupied && !self.env.is_terminal(&s)) {
            let t = self.env.step(&s, if first { d } else { Displacement::STAY }, rng)?;
            rewards.push(t.reward);
            s = t.state;
            first = false;
        }
        self.total += rewards.iter().sum::<f64>();
        let done = self.env.is_terminal(&s);
        self.state = Some(s);
        Ok(StepOutcome { rewards, done })
    }

    fn is_done(&self) -> bool {
        self.env.is_terminal(self.state())
    }

    fn episode_reward(&self) -> f64 {
        self.total
    }

    fn score(&self) -> f64 {
        self.total
    }
}

#[derive(Debug, Clone)]
pub struct WildfireAdviser {
    pub env: WildfireEnv,
    pub predictor: Predictor<f64>,
    state: Option<ForestState>,
    total: f64,
}

impl WildfireAdviser {
    pub fn new(env: WildfireEnv, predictor: Predictor<f64>) -> Self {
        Self {
            env,
            predictor,
            state: None,
            total: 0.0,
        }
    }

    pub fn state(&self) -> &ForestState {
        self.state.as_ref().expect("reset before use")
    }
}

impl AdvisedEnv for WildfireAdviser {
    fn domain(&self) -> Domain {
        Domain::Wildfire
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.state = Some(self.env.new_episode(rng));
        self.total = 0.0;
    }

    fn sigma(&self) -> Result<DrlInput<f64>, AdviseError> {
        let s = self.state();
        let pred = self.predictor.predict_grid(StateRef::Wildfire(s))?;
        build_sigma(StateRef::Wildfire(s), &pred)
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<StepOutcome, AdviseError> {
        let a = WildfireAction::from_index(action)
            .ok_or_else(|| AdviseError::Config(format!("wildfire action {action} out of range")))?;
        let t = self.env.step(self.state(), a, rng)?;
        self.total += t.reward;
        let done = self.env.is_terminal(&t.state);
        self.state = Some(t.state);
        Ok(StepOutcome {
            rewards: vec![t.reward],
            done,
        })
    }

    fn is_done(&self) -> bool {
        self.env.is_terminal(self.state())
    }

    fn episode_reward(&self) -> f64 {
        self.total
    }

    fn score(&self) -> f64 {
        self.state().total_fuel()
    }
}
