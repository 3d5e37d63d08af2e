//! Explanations of a single piece of advice.
//!
//! The composed explanation pairs top-ranked prediction features along the
//! advised path with a per-cell index heatmap and a policy arrow field
//! shaded by state importance. The baseline is a LIME saliency map per
//! per-cell prediction feature.

mod baseline;
mod render;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::{
    action_displacement, argmax, build_sigma, is_stay_action, AdviseError, DrlInput, QFunction,
};
use crate::attrib::{kernel_shap, top_k_features, AttribError};
use crate::grid::{clip_move, CellIndex, Grid, GridSpec};
use crate::predictor::{Domain, PredictError, Predictor, StateRef};
use crate::scalar::Scalar;

pub use baseline::{generate_baseline, BaselineExplanation, SaliencyMap, FIRE_SALIENCY_KINDS};
pub use render::{arrow_gray, render_heatmap, ColorStop, Palette, Rendered};

/// Version tag carried by every JSON payload.
pub const SCHEMA_VERSION: u32 = 1;
/// Scalars reserved for the feature lists in the size metric.
pub const FEATURE_LIST_BUDGET: usize = 40;
pub const DEFAULT_TOP_K: usize = 6;
pub const DEFAULT_PATH_LEN: usize = 6;
pub const DEFAULT_ETA: f64 = 0.75;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{name} = {value} at {cell} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64, cell: CellIndex },
    #[error("predictor is for {predictor:?}, state is {state:?}")]
    WrongDomain { predictor: Domain, state: Domain },
    #[error(transparent)]
    Advise(#[from] AdviseError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Attrib(#[from] AttribError),
}

/// Demand-supply blend: `eta * rho / tau + (1 - eta) * rho * |G| / sum(rho)`
/// where taxis are available, zero elsewhere.
pub fn taxi_index<T: Scalar>(rho: &Grid<T>, tau: &Grid<T>, eta: T) -> Result<Grid<T>, ExplainError> {
    if rho.spec() != tau.spec() {
        return Err(ExplainError::Shape("demand and supply grids differ".into()));
    }
    let total: T = rho.as_slice().iter().copied().sum();
    let cells = T::of_usize(rho.spec().len());
    Ok(Grid::from_fn(rho.spec(), |g| {
        let (r, t) = (*rho.get(g), *tau.get(g));
        if t > T::zero() {
            let share = if total > T::zero() { r * cells / total } else { T::zero() };
            eta * r / t + (T::one() - eta) * share
        } else {
            T::zero()
        }
    }))
}

/// `-theta * mu` on burning cells, `(1 - theta) * (1 - mu)` elsewhere.
pub fn fire_index<T: Scalar>(theta: &Grid<T>, mu: &Grid<T>, burning: &Grid<bool>) -> Result<Grid<T>, ExplainError> {
    if theta.spec() != mu.spec() || theta.spec() != burning.spec() {
        return Err(ExplainError::Shape("fuel, risk and burning grids differ".into()));
    }
    let unit = |name, v: T, cell| {
        if v >= T::zero() && v <= T::one() {
            Ok(v)
        } else {
            Err(ExplainError::OutOfRange {
                name,
                value: v.as_f64(),
                cell,
            })
        }
    };
    let mut out = Grid::filled(theta.spec(), T::zero());
    for g in theta.spec().cells() {
        let th = unit("fuel", *theta.get(g), g)?;
        let m = unit("risk", *mu.get(g), g)?;
        let v = if *burning.get(g) {
            -th * m
        } else {
            (T::one() - th) * (T::one() - m)
        };
        out.set(g, v);
    }
    Ok(out)
}

/// Greedy action and range-normalized Q spread for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap<T> {
    pub actions: Grid<usize>,
    /// Raw spread `max q - min q`.
    pub importance: Grid<T>,
    pub delta: Grid<T>,
}

pub fn importance_map<T: Scalar, Q: QFunction<T> + ?Sized>(
    model: &Q,
    sigma: &DrlInput<T>,
) -> Result<ImportanceMap<T>, ExplainError> {
    let q = model.q_all_cells(sigma)?;
    importance_from_q(sigma.grid, &q)
}

fn importance_from_q<T: Scalar>(grid: GridSpec, q: &[Vec<T>]) -> Result<ImportanceMap<T>, ExplainError> {
    if q.len() != grid.len() {
        return Err(ExplainError::Shape(format!("{} Q rows for {} cells", q.len(), grid.len())));
    }
    let spread = |v: &Vec<T>| {
        let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
        let lo = v.iter().copied().fold(T::infinity(), T::min);
        hi - lo
    };
    let importance = Grid::from_vec(grid, q.iter().map(spread).collect()).expect("one row per cell");
    let actions = Grid::from_vec(grid, q.iter().map(|v| argmax(v)).collect()).expect("one row per cell");
    let lo = importance.as_slice().iter().copied().fold(T::infinity(), T::min);
    let hi = importance.as_slice().iter().copied().fold(T::neg_infinity(), T::max);
    let delta = if hi > lo {
        importance.map(|i| (*i - lo) / (hi - lo))
    } else {
        Grid::filled(grid, T::zero())
    };
    Ok(ImportanceMap {
        actions,
        importance,
        delta,
    })
}

/// Letter label of the `i`-th path cell: A, B, ..., Z, AA, AB, ...
pub fn path_label(i: usize) -> String {
    let mut n = i;
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii letters")
}

/// Cells visited by following `actions` from `start`, stopping after
/// `max_len` cells, on a stay action or before a revisit.
pub fn follow_actions(domain: Domain, actions: &Grid<usize>, start: CellIndex, max_len: usize) -> Vec<CellIndex> {
    let mut path = vec![start];
    let mut g = start;
    while path.len() < max_len.max(1) {
        let a = *actions.get(g);
        if is_stay_action(domain, a) {
            break;
        }
        let Some(d) = action_displacement(domain, a) else { break };
        let next = clip_move(g, d, actions.spec());
        if path.contains(&next) {
            break;
        }
        path.push(next);
        g = next;
    }
    path
}

/// Labeled cells along the greedy policy from `start`, with the channels
/// of σ frozen.
pub fn policy_path<T: Scalar, Q: QFunction<T> + ?Sized>(
    model: &Q,
    sigma: &DrlInput<T>,
    start: CellIndex,
    max_len: usize,
) -> Result<Vec<(String, CellIndex)>, ExplainError> {
    let mut path: Vec<CellIndex> = vec![start];
    let mut g = start;
    while path.len() < max_len.max(1) {
        let a = argmax(&model.q_values(&crate::advisor::substitute_cell(sigma, g))?);
        if is_stay_action(sigma.domain, a) {
            break;
        }
        let Some(d) = action_displacement(sigma.domain, a) else { break };
        let next = clip_move(g, d, sigma.grid);
        if path.contains(&next) {
            break;
        }
        path.push(next);
        g = next;
    }
    Ok(path.into_iter().enumerate().map(|(i, c)| (path_label(i), c)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureList<T> {
    pub label: String,
    pub cell: CellIndex,
    /// Top-ranked `(feature, contribution)` pairs of the prediction there.
    pub features: Vec<(String, T)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrow<T> {
    pub action: usize,
    /// Normalized importance in `[0, 1]`.
    pub shade: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdesseExplanation<T> {
    pub schema: u32,
    pub domain: Domain,
    pub grid: GridSpec,
    pub agent: CellIndex,
    pub advised_action: usize,
    pub feature_lists: Vec<FeatureList<T>>,
    /// Domain index per cell, row-major.
    pub indices: Vec<T>,
    /// One arrow per cell, row-major.
    pub arrows: Vec<Arrow<T>>,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> AdesseExplanation<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("explanations always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub top_k: usize,
    pub max_len: usize,
    /// Kernel SHAP coalition budget per path cell.
    pub shap_samples: usize,
    pub eta: f64,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            max_len: DEFAULT_PATH_LEN,
            shap_samples: 512,
            eta: DEFAULT_ETA,
            seed: 0,
        }
    }
}

fn check_domain<T>(predictor: &Predictor<T>, state: &StateRef<'_>) -> Result<(), ExplainError> {
    if predictor.domain != state.domain() {
        return Err(ExplainError::WrongDomain {
            predictor: predictor.domain,
            state: state.domain(),
        });
    }
    Ok(())
}

/// Domain index grid computed from σ.
pub fn domain_index<T: Scalar>(sigma: &DrlInput<T>, eta: T) -> Result<Grid<T>, ExplainError> {
    match sigma.domain {
        Domain::Taxi => taxi_index(&sigma.channel_grid(0), &sigma.channel_grid(1), eta),
        Domain::Wildfire => {
            let burning = sigma.channel_grid(1).map(|b| *b > T::of(0.5));
            // Fuel can sit a rounding step outside [0, 1] after arithmetic.
            let theta = sigma.channel_grid(0).map(|v| v.max(T::zero()).min(T::one()));
            fire_index(&theta, &sigma.channel_grid(2), &burning)
        }
    }
}

pub fn generate_adesse<T, Q>(
    predictor: &Predictor<T>,
    model: &Q,
    state: StateRef<'_>,
    config: &ExplainConfig,
) -> Result<AdesseExplanation<T>, ExplainError>
where
    T: Scalar,
    Q: QFunction<T> + ?Sized,
{
    check_domain(predictor, &state)?;
    let grid = state.grid();
    let pred = predictor.predict_grid(state)?;
    let rows = state.feature_rows::<T>()?;
    let sigma = build_sigma(state, &pred)?;
    let imp = importance_map(model, &sigma)?;
    let path = follow_actions(sigma.domain, &imp.actions, sigma.agent, config.max_len);

    let names = predictor.feature_names();
    let mut feature_lists = Vec::with_capacity(path.len());
    for (i, cell) in path.iter().enumerate() {
        let x = &rows[grid.index(*cell)];
        let mut failure = None;
        let f = |v: &[T]| {
            predictor.predict(v).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                T::zero()
            })
        };
        let attr = kernel_shap(f, x, &predictor.mean, names, config.shap_samples, config.seed.wrapping_add(i as u64))?;
        if let Some(e) = failure {
            return Err(e.into());
        }
        feature_lists.push(FeatureList {
            label: path_label(i),
            cell: *cell,
            features: top_k_features(&attr, config.top_k),
        });
    }

    let indices = domain_index(&sigma, T::of(config.eta))?.into_vec();
    let arrows = imp
        .actions
        .as_slice()
        .iter()
        .zip(imp.delta.as_slice())
        .map(|(a, d)| Arrow { action: *a, shade: *d })
        .collect();
    Ok(AdesseExplanation {
        schema: SCHEMA_VERSION,
        domain: sigma.domain,
        grid,
        agent: sigma.agent,
        advised_action: *imp.actions.get(sigma.agent),
        feature_lists,
        indices,
        arrows,
    })
}

pub enum AnyExplanation<'a, T> {
    Adesse(&'a AdesseExplanation<T>),
    Baseline(&'a BaselineExplanation<T>),
}

/// Scalar count: two per cell plus the feature-list budget for the
/// composed explanation, one per cell and map plus the global influences
/// for the baseline.
pub fn explanation_size<T>(e: AnyExplanation<'_, T>) -> usize {
    match e {
        AnyExplanation::Adesse(a) => adesse_size(a.grid),
        AnyExplanation::Baseline(b) => b.saliency_maps.len() * b.grid.len() + b.global_influences.len(),
    }
}

pub fn adesse_size(grid: GridSpec) -> usize {
    2 * grid.len() + FEATURE_LIST_BUDGET
}

pub fn baseline_size(domain: Domain, grid: GridSpec) -> usize {
    match domain {
        Domain::Taxi => crate::predictor::TAXI_CELL_FEATURES * grid.len() + baseline::TAXI_GLOBALS,
        Domain::Wildfire => FIRE_SALIENCY_KINDS.len() * grid.len(),
    }
}
