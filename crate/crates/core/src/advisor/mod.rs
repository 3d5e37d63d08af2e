//! The deep-Q adviser: DRL input assembly, policy queries and training.

pub mod adapters;
pub mod dqn;
pub mod replay;

use thiserror::Error;

use crate::env::EnvError;
use crate::grid::{displacement_actions, CellIndex, Displacement, Grid, GridSpec};
use crate::nn::{NnError, QNet};
use crate::predictor::{Domain, PredictError, StateRef};
use crate::scalar::Scalar;
use crate::taxi::MAX_STEP;
use crate::wildfire::WildfireAction;

pub use adapters::{AdvisedEnv, StepOutcome, TaxiAdviser, WildfireAdviser};
pub use dqn::{double_dqn_target, epsilon, evaluate, train_dqn, DqnConfig, DqnOutcome, EvalPolicy, EvalSummary};
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Error)]
pub enum AdviseError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged in episode {episode} (non-finite loss)")]
    Diverged { episode: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Q-network input σ: per-cell channels plus the agent cell.
///
/// Taxi channels are predicted requests and available taxis; wildfire
/// channels are fuel, burning (0/1) and predicted risk.
#[derive(Debug, Clone, PartialEq)]
pub struct DrlInput<T> {
    pub domain: Domain,
    pub grid: GridSpec,
    /// Channel-major `C x H x W` values.
    pub maps: Vec<T>,
    pub agent: CellIndex,
}

impl<T: Scalar> DrlInput<T> {
    pub fn channel_count(&self) -> usize {
        self.maps.len() / self.grid.len()
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.grid.len();
        &self.maps[c * n..(c + 1) * n]
    }

    pub fn channel_grid(&self, c: usize) -> Grid<T> {
        Grid::from_vec(self.grid, self.channel(c).to_vec()).expect("channel length")
    }

    pub fn cast<U: Scalar>(&self) -> DrlInput<U> {
        DrlInput {
            domain: self.domain,
            grid: self.grid,
            maps: self.maps.iter().map(|v| U::of(v.as_f64())).collect(),
            agent: self.agent,
        }
    }
}

pub fn channel_count(domain: Domain) -> usize {
    match domain {
        Domain::Taxi => 2,
        Domain::Wildfire => 3,
    }
}

pub fn build_sigma<T: Scalar>(state: StateRef<'_>, prediction: &Grid<T>) -> Result<DrlInput<T>, AdviseError> {
    let grid = state.grid();
    if prediction.spec() != grid {
        return Err(AdviseError::Shape(format!(
            "prediction is {}x{}, environment is {}x{}",
            prediction.spec().width(),
            prediction.spec().height(),
            grid.width(),
            grid.height()
        )));
    }
    let mut maps = Vec::with_capacity(channel_count(state.domain()) * grid.len());
    let agent = match state {
        StateRef::Taxi(s, _) => {
            maps.extend_from_slice(prediction.as_slice());
            maps.extend(s.taxis.as_slice().iter().map(|v| T::of(*v as f64)));
            s.taxi
        }
        StateRef::Wildfire(s) => {
            maps.extend(s.fuel.as_slice().iter().map(|v| T::of(*v)));
            maps.extend(s.burning.as_slice().iter().map(|b| if *b { T::one() } else { T::zero() }));
            maps.extend_from_slice(prediction.as_slice());
            s.av
        }
    };
    Ok(DrlInput {
        domain: state.domain(),
        grid,
        maps,
        agent,
    })
}

/// σ with the agent relocated to `g`; channels untouched.
pub fn substitute_cell<T: Clone>(sigma: &DrlInput<T>, g: CellIndex) -> DrlInput<T> {
    DrlInput {
        agent: g,
        ..sigma.clone()
    }
}

/// Anything that scores the actions available in a DRL input.
pub trait QFunction<T: Scalar> {
    fn action_count(&self) -> usize;

    fn q_values(&self, sigma: &DrlInput<T>) -> Result<Vec<T>, AdviseError>;

    /// Q-values of σ[g] for every cell `g`, row-major.
    fn q_all_cells(&self, sigma: &DrlInput<T>) -> Result<Vec<Vec<T>>, AdviseError> {
        sigma
            .grid
            .cells()
            .map(|g| self.q_values(&substitute_cell(sigma, g)))
            .collect()
    }
}

impl<T: Scalar> QFunction<T> for QNet<T> {
    fn action_count(&self) -> usize {
        self.actions()
    }

    fn q_values(&self, sigma: &DrlInput<T>) -> Result<Vec<T>, AdviseError> {
        Ok(QNet::q_values(self, &sigma.maps, sigma.grid, sigma.agent)?)
    }

    fn q_all_cells(&self, sigma: &DrlInput<T>) -> Result<Vec<Vec<T>>, AdviseError> {
        Ok(QNet::q_all_cells(self, &sigma.maps, sigma.grid)?)
    }
}

/// Tabulated Q-function keyed by the agent cell only.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    pub actions: usize,
    pub table: Grid<Vec<T>>,
}

impl<T: Scalar> QFunction<T> for QTable<T> {
    fn action_count(&self) -> usize {
        self.actions
    }

    fn q_values(&self, sigma: &DrlInput<T>) -> Result<Vec<T>, AdviseError> {
        if sigma.grid != self.table.spec() {
            return Err(AdviseError::Shape("grid does not match the Q table".into()));
        }
        Ok(self.table.get(sigma.agent).clone())
    }
}

/// Argmax with ties going to the lowest index.
pub fn argmax<T: Scalar>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

pub fn advise<T: Scalar, Q: QFunction<T> + ?Sized>(model: &Q, sigma: &DrlInput<T>) -> Result<usize, AdviseError> {
    Ok(argmax(&model.q_values(sigma)?))
}

pub fn action_count(domain: Domain) -> usize {
    match domain {
        Domain::Taxi => ((2 * MAX_STEP + 1) * (2 * MAX_STEP + 1)) as usize,
        Domain::Wildfire => WildfireAction::ALL.len(),
    }
}

/// Movement of the agent under an action index.
pub fn action_displacement(domain: Domain, action: usize) -> Option<Displacement> {
    match domain {
        Domain::Taxi => displacement_actions(MAX_STEP).get(action).copied(),
        Domain::Wildfire => WildfireAction::from_index(action).map(|a| a.displacement()),
    }
}

pub fn taxi_action_index(d: Displacement) -> Option<usize> {
    displacement_actions(MAX_STEP).iter().position(|a| *a == d)
}

/// Whether the action leaves the agent where it is.
pub fn is_stay_action(domain: Domain, action: usize) -> bool {
    action_displacement(domain, action).is_some_and(|d| d.is_stay())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::QNetConfig;
    use crate::predictor::TaxiContext;
    use crate::taxi::{Calendar, DemandModel, DemandSource, TaxiConfig, TaxiEnv};
    use crate::wildfire::{WildfireConfig, WildfireEnv};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn taxi_sigma() -> DrlInput<f64> {
        let grid = GridSpec::square(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = DemandModel::synthetic(grid, &mut rng);
        let env = TaxiEnv::new(TaxiConfig::new(grid), DemandSource::Synthetic(model)).unwrap();
        let s = env.new_episode(&mut rng);
        let ctx = TaxiContext {
            poi: Grid::filled(grid, 0),
            calendar: Calendar::neutral(),
        };
        let pred = Grid::from_fn(grid, |c| c.x as f64);
        let sigma = build_sigma(StateRef::Taxi(&s, &ctx), &pred).unwrap();
        assert_eq!(sigma.agent, s.taxi);
        sigma
    }

    #[test]
    fn sigma_channels() {
        let sigma = taxi_sigma();
        assert_eq!(sigma.channel_count(), 2);
        assert_eq!(sigma.channel(0)[3], 3.0);

        let env = WildfireEnv::new(WildfireConfig::new(GridSpec::square(4).unwrap())).unwrap();
        let s = env.new_episode(&mut ChaCha8Rng::seed_from_u64(2));
        let pred = Grid::filled(s.grid(), 0.25);
        let w = build_sigma(StateRef::Wildfire(&s), &pred).unwrap();
        assert_eq!(w.channel_count(), 3);
        assert_eq!(w.agent, s.av);
        let wrong = Grid::filled(GridSpec::square(5).unwrap(), 0.0);
        assert!(build_sigma(StateRef::Wildfire(&s), &wrong).is_err());
    }

    #[test]
    fn substitution_laws() {
        let sigma = taxi_sigma();
        assert_eq!(substitute_cell(&sigma, sigma.agent), sigma);
        let g = CellIndex::new(4, 0);
        let h = CellIndex::new(1, 3);
        let moved = substitute_cell(&sigma, g);
        assert_eq!(moved.maps, sigma.maps);
        assert_eq!(substitute_cell(&moved, h), substitute_cell(&sigma, h));
    }

    #[test]
    fn argmax_ties_and_affine_invariance() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
        let q = [0.3, -1.0, 0.9, 0.9, 0.1];
        let t: Vec<f64> = q.iter().map(|v| 2.5 * v - 7.0).collect();
        assert_eq!(argmax(&q), argmax(&t));
    }

    #[test]
    fn qnet_output_widths() {
        let sigma = taxi_sigma();
        let net = QNet::<f64>::new(QNetConfig::taxi_desk(), 0).unwrap();
        let q = QFunction::q_values(&net, &sigma).unwrap();
        assert_eq!(q.len(), 25);
        assert_eq!(q, QFunction::q_values(&net, &sigma).unwrap());
        let all = QFunction::q_all_cells(&net, &sigma).unwrap();
        assert_eq!(all[sigma.grid.index(sigma.agent)], q);
        assert_eq!(action_count(Domain::Wildfire), 6);
    }

    #[test]
    fn action_semantics() {
        assert!(is_stay_action(Domain::Taxi, 12));
        assert!(!is_stay_action(Domain::Taxi, 0));
        assert!(is_stay_action(Domain::Wildfire, 0));
        assert!(is_stay_action(Domain::Wildfire, 1));
        assert!(!is_stay_action(Domain::Wildfire, 2));
        assert_eq!(taxi_action_index(Displacement::new(2, 2)), Some(24));
    }
}
