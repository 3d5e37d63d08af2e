//! Per-cell prediction networks: feature construction, training and
//! inference for the request predictor (taxi) and the fire-risk predictor.

use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellIndex, Grid, GridSpec};
use crate::nn::checkpoint::{load_file, save_file, CheckpointHeader, CHECKPOINT_FORMAT};
use crate::nn::{fit, Activation, Dataset, MlpModel, NnError, TrainConfig, TrainOutcome};
use crate::scalar::{sigmoid, Scalar};
use crate::taxi::{Calendar, TaxiEnv, TaxiState};
use crate::wildfire::{fire_risk_labels, ForestState, WildfireAction, WildfireEnv};

pub const KIND_PREDICTOR: &str = "predictor";

/// Request-predictor inputs in frozen order.
pub const TAXI_FEATURES: [&str; 20] = [
    "x",
    "y",
    "requests_t-30",
    "requests_t-20",
    "requests_t-10",
    "requests_t",
    "poi",
    "hour",
    "minute",
    "weekday",
    "month",
    "temperature",
    "wind",
    "humidity",
    "pressure",
    "view",
    "snow",
    "precipitation",
    "clouds",
    "holiday",
];

/// Features that vary from cell to cell; the rest describe the clock and
/// the weather.
pub const TAXI_CELL_FEATURES: usize = 7;

pub const FIRE_FEATURES: [&str; 6] = ["x", "y", "fuel", "burning", "av_x", "av_y"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Taxi,
    Wildfire,
}

impl Domain {
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            Domain::Taxi => &TAXI_FEATURES,
            Domain::Wildfire => &FIRE_FEATURES,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Taxi => "taxi",
            Domain::Wildfire => "wildfire",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "taxi" => Ok(Domain::Taxi),
            "wildfire" => Ok(Domain::Wildfire),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("no weather row for {0}")]
    MissingWeather(NaiveDateTime),
    #[error("predictor is for {expected:?}, got a {got:?} state")]
    WrongDomain { expected: Domain, got: Domain },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub names: &'static [&'static str],
}

/// Inputs the taxi featurizer needs beyond the simulator state.
#[derive(Debug, Clone)]
pub struct TaxiContext {
    pub poi: Grid<u32>,
    pub calendar: Calendar,
}

/// Clock and weather features shared by every cell at one step.
pub fn taxi_global_features<T: Scalar>(clock: &NaiveDateTime, calendar: &Calendar) -> Result<[T; 13], PredictError> {
    let w = calendar
        .lookup(clock)
        .ok_or(PredictError::MissingWeather(*clock))?
        .row;
    let b = |v: bool| if v { T::one() } else { T::zero() };
    Ok([
        T::of(clock.hour() as f64),
        T::of(clock.minute() as f64),
        T::of(clock.weekday().num_days_from_monday() as f64),
        T::of(clock.month() as f64),
        T::of(w.temperature),
        T::of(w.wind),
        T::of(w.humidity),
        T::of(w.pressure),
        T::of(w.view),
        b(w.snow),
        T::of(w.precipitation),
        b(w.clouds),
        b(w.holiday),
    ])
}

fn taxi_cell_features<T: Scalar>(state: &TaxiState, cell: CellIndex, poi: &Grid<u32>) -> [T; TAXI_CELL_FEATURES] {
    let h = state.history_at(cell);
    [
        T::of_usize(cell.x),
        T::of_usize(cell.y),
        T::of(h[0] as f64),
        T::of(h[1] as f64),
        T::of(h[2] as f64),
        T::of(h[3] as f64),
        T::of(*poi.get(cell) as f64),
    ]
}

pub fn featurize_taxi<T: Scalar>(
    state: &TaxiState,
    cell: CellIndex,
    ctx: &TaxiContext,
) -> Result<FeatureVector<T>, PredictError> {
    let globals = taxi_global_features::<T>(&state.clock, &ctx.calendar)?;
    let mut values = taxi_cell_features::<T>(state, cell, &ctx.poi).to_vec();
    values.extend_from_slice(&globals);
    Ok(FeatureVector {
        values,
        names: &TAXI_FEATURES,
    })
}

pub fn featurize_fire<T: Scalar>(state: &ForestState, cell: CellIndex) -> FeatureVector<T> {
    FeatureVector {
        values: vec![
            T::of_usize(cell.x),
            T::of_usize(cell.y),
            T::of(*state.fuel.get(cell)),
            if *state.burning.get(cell) { T::one() } else { T::zero() },
            T::of_usize(state.av.x),
            T::of_usize(state.av.y),
        ],
        names: &FIRE_FEATURES,
    }
}

/// Simulator state plus whatever side inputs its featurizer needs.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Taxi(&'a TaxiState, &'a TaxiContext),
    Wildfire(&'a ForestState),
}

impl StateRef<'_> {
    pub fn domain(&self) -> Domain {
        match self {
            StateRef::Taxi(..) => Domain::Taxi,
            StateRef::Wildfire(_) => Domain::Wildfire,
        }
    }

    pub fn grid(&self) -> GridSpec {
        match self {
            StateRef::Taxi(s, _) => s.grid(),
            StateRef::Wildfire(s) => s.grid(),
        }
    }

    /// Feature rows for every cell, row-major.
    pub fn feature_rows<T: Scalar>(&self) -> Result<Vec<Vec<T>>, PredictError> {
        match self {
            StateRef::Taxi(s, ctx) => {
                let globals = taxi_global_features::<T>(&s.clock, &ctx.calendar)?;
                Ok(s.grid()
                    .cells()
                    .map(|c| {
                        let mut v = taxi_cell_features::<T>(s, c, &ctx.poi).to_vec();
                        v.extend_from_slice(&globals);
                        v
                    })
                    .collect())
            }
            StateRef::Wildfire(s) => Ok(s.grid().cells().map(|c| featurize_fire(s, c).values).collect()),
        }
    }
}

/// A trained per-cell network with its input standardizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor<T> {
    pub domain: Domain,
    pub model: MlpModel<T>,
    /// Training-set feature means; also the attribution background.
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct PredictorArchitecture {
    domain: Domain,
    widths: Vec<usize>,
    activations: Vec<Activation>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl<T: Scalar> Predictor<T> {
    /// Identity standardizer around a given model.
    pub fn from_model(domain: Domain, model: MlpModel<T>) -> Self {
        let n = model.input_width();
        Self {
            domain,
            model,
            mean: vec![T::zero(); n],
            scale: vec![T::one(); n],
        }
    }

    /// Freshly initialized network at the domain's default shape.
    pub fn untrained(domain: Domain, config: &TrainConfig) -> Result<Self, PredictError> {
        let model = MlpModel::new(&config.widths, &config.activations, config.seed)?;
        Ok(Self::from_model(domain, model))
    }

    pub fn train(domain: Domain, data: &Dataset<T>, config: &TrainConfig) -> Result<(Self, TrainOutcome<T>), PredictError> {
        if data.is_empty() {
            return Err(NnError::EmptyDataset.into());
        }
        let mean = data.feature_means();
        let scale: Vec<T> = data
            .feature_stds()
            .into_iter()
            .map(|s| if s > T::of(1e-12) { s } else { T::one() })
            .collect();
        let mut p = Self {
            domain,
            model: MlpModel::new(&config.widths, &config.activations, config.seed)?,
            mean,
            scale,
        };
        let standardized = Dataset {
            inputs: data.inputs.iter().map(|x| p.standardize(x)).collect(),
            targets: data.targets.clone(),
        };
        // Start the output at the target mean so a saturating output unit
        // does not begin on a flat stretch.
        let t = data.target_mean();
        let bias = match p.model.output_activation() {
            Activation::Sigmoid => {
                let m = t.max(T::of(1e-4)).min(T::of(1.0 - 1e-4));
                (m / (T::one() - m)).ln()
            }
            _ => t,
        };
        let last = p.model.layer_count() - 1;
        let (_, b) = p.model.layer_ranges(last);
        p.model.params_mut()[b].iter_mut().for_each(|v| *v = bias);
        let outcome = fit(p.model.clone(), &standardized, config)?;
        p.model = outcome.model.clone();
        Ok((p, outcome))
    }

    pub fn input_width(&self) -> usize {
        self.model.input_width()
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        self.domain.feature_names()
    }

    fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (*v - *m) / *s)
            .collect()
    }

    fn transform(&self, y: T) -> T {
        match self.domain {
            Domain::Taxi => y.max(T::zero()),
            Domain::Wildfire if self.model.output_activation() == Activation::Sigmoid => y,
            Domain::Wildfire => sigmoid(y),
        }
    }

    /// Domain output (clamped count or risk) for one raw feature row.
    pub fn predict(&self, x: &[T]) -> Result<T, PredictError> {
        Ok(self.transform(self.model.predict(&self.standardize(x))?))
    }

    pub fn predict_grid(&self, state: StateRef<'_>) -> Result<Grid<T>, PredictError> {
        if state.domain() != self.domain {
            return Err(PredictError::WrongDomain {
                expected: self.domain,
                got: state.domain(),
            });
        }
        let rows = state.feature_rows::<T>()?;
        if rows.first().is_some_and(|r| r.len() != self.input_width()) {
            return Err(NnError::Shape(format!(
                "featurizer yields {} values, model expects {}",
                rows[0].len(),
                self.input_width()
            ))
            .into());
        }
        let values = rows.iter().map(|r| self.predict(r)).collect::<Result<Vec<_>, _>>()?;
        Ok(Grid::from_vec(state.grid(), values).expect("one value per cell"))
    }

    pub fn cast<U: Scalar>(&self) -> Predictor<U> {
        Predictor {
            domain: self.domain,
            model: self.model.cast(),
            mean: self.mean.iter().map(|v| U::of(v.as_f64())).collect(),
            scale: self.scale.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT,
            kind: KIND_PREDICTOR.into(),
            seed: self.model.seed(),
            param_count: self.model.param_count(),
            architecture: serde_json::to_value(PredictorArchitecture {
                domain: self.domain,
                widths: self.model.widths().to_vec(),
                activations: self.model.activations().to_vec(),
                mean: f(&self.mean),
                scale: f(&self.scale),
            })
            .expect("architecture serializes"),
        };
        save_file(path, &header, &f(self.model.params()))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (h, p) = load_file(path)?;
        if h.kind != KIND_PREDICTOR {
            return Err(NnError::Checkpoint(format!(
                "expected a '{KIND_PREDICTOR}' checkpoint, found '{}'",
                h.kind
            )));
        }
        let a: PredictorArchitecture =
            serde_json::from_value(h.architecture).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let model = MlpModel::from_params(&a.widths, &a.activations, h.seed, p.iter().map(|v| T::of(*v)).collect())?;
        Ok(Self {
            domain: a.domain,
            model,
            mean: a.mean.iter().map(|v| T::of(*v)).collect(),
            scale: a.scale.iter().map(|v| T::of(*v)).collect(),
        })
    }
}

/// Mean absolute error of the domain output against the targets.
pub fn mae<T: Scalar>(p: &Predictor<T>, data: &Dataset<T>) -> Result<T, PredictError> {
    error_mean(p, data, |e| e.abs())
}

pub fn mse<T: Scalar>(p: &Predictor<T>, data: &Dataset<T>) -> Result<T, PredictError> {
    error_mean(p, data, |e| e * e)
}

fn error_mean<T: Scalar>(p: &Predictor<T>, data: &Dataset<T>, f: impl Fn(T) -> T) -> Result<T, PredictError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset.into());
    }
    let mut total = T::zero();
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        total += f(p.predict(x)? - *t);
    }
    Ok(total / T::of_usize(data.len()))
}

/// Error of always predicting `constant`.
pub fn constant_baseline<T: Scalar>(data: &Dataset<T>, constant: T, absolute: bool) -> T {
    let n = T::of_usize(data.len().max(1));
    data.targets
        .iter()
        .map(|t| if absolute { (*t - constant).abs() } else { (*t - constant) * (*t - constant) })
        .sum::<T>()
        / n
}

/// Random-walk episodes; each step contributes one row per sampled cell
/// with the next step's request count at that cell as the target.
pub fn taxi_dataset<R: Rng + ?Sized>(
    env: &TaxiEnv,
    ctx: &TaxiContext,
    episodes: usize,
    cells_per_step: usize,
    rng: &mut R,
) -> Result<Dataset<f64>, PredictError> {
    let actions = crate::grid::displacement_actions(crate::taxi::MAX_STEP);
    let grid = env.grid();
    let mut data = Dataset::new();
    for _ in 0..episodes {
        let mut s = env.new_episode(rng);
        while !env.is_terminal(&s) {
            let rows = StateRef::Taxi(&s, ctx).feature_rows::<f64>()?;
            let a = actions[rng.random_range(0..actions.len())];
            let next = env.step(&s, a, rng).expect("valid action").state;
            for _ in 0..cells_per_step.min(grid.len()) {
                let i = rng.random_range(0..grid.len());
                data.push(rows[i].clone(), *next.requests.as_slice().get(i).unwrap() as f64);
            }
            s = next;
        }
    }
    Ok(data)
}

/// Random-policy trajectories labelled with the analytic next-step fire
/// probability.
pub fn fire_dataset<R: Rng + ?Sized>(
    env: &WildfireEnv,
    episodes: usize,
    every: usize,
    rng: &mut R,
) -> Dataset<f64> {
    let mut data = Dataset::new();
    for _ in 0..episodes {
        let mut s = env.new_episode(rng);
        while !env.is_terminal(&s) {
            if s.step % every.max(1) == 0 && s.burning_count() > 0 {
                let labels = fire_risk_labels(&s, env.params());
                for c in s.grid().cells() {
                    data.push(featurize_fire(&s, c).values, *labels.get(c));
                }
            }
            let a = WildfireAction::ALL[rng.random_range(0..WildfireAction::ALL.len())];
            s = env.step(&s, a, rng).expect("episode running").state;
        }
    }
    data
}

/// Fire predictor sized for desk training: the 6-in topology with
/// narrower hidden layers.
pub fn fire_desk_config() -> TrainConfig {
    TrainConfig {
        widths: vec![6, 64, 64, 1],
        epochs: 60,
        patience: Some(10),
        ..TrainConfig::wildfire()
    }
}
