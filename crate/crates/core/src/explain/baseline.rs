use serde::{Deserialize, Serialize};

use super::{check_domain, ExplainError, SCHEMA_VERSION};
use crate::advisor::{argmax, build_sigma, DrlInput, QFunction};
use crate::attrib::{lime_explain, Diagnostics, LimeConfig};
use crate::grid::{CellIndex, GridSpec};
use crate::predictor::{Domain, PredictError, Predictor, StateRef, TAXI_CELL_FEATURES, TAXI_FEATURES};
use crate::scalar::Scalar;

pub(crate) const TAXI_GLOBALS: usize = TAXI_FEATURES.len() - TAXI_CELL_FEATURES;

/// Per-cell feature kinds explained by the wildfire baseline.
pub const FIRE_SALIENCY_KINDS: [&str; 3] = ["fuel", "burning", "av_location"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap<T> {
    pub feature: String,
    /// Influence per cell, row-major.
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineExplanation<T> {
    pub schema: u32,
    pub domain: Domain,
    pub grid: GridSpec,
    pub agent: CellIndex,
    pub advised_action: usize,
    pub saliency_maps: Vec<SaliencyMap<T>>,
    /// Location-independent feature influences.
    pub global_influences: Vec<(String, T)>,
    pub samples: usize,
    pub diagnostics: Diagnostics,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> BaselineExplanation<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("explanations always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Flattened LIME input: kind-major per-cell blocks, then globals.
struct Flat<T> {
    values: Vec<T>,
    scales: Vec<T>,
    binary: Vec<bool>,
    names: Vec<String>,
}

fn flatten<T: Scalar>(predictor: &Predictor<T>, state: &StateRef<'_>) -> Result<Flat<T>, PredictError> {
    let grid = state.grid();
    let n = grid.len();
    let mut f = Flat {
        values: Vec::new(),
        scales: Vec::new(),
        binary: Vec::new(),
        names: Vec::new(),
    };
    match state {
        StateRef::Taxi(..) => {
            let rows = state.feature_rows::<T>()?;
            for k in 0..TAXI_CELL_FEATURES {
                for (i, row) in rows.iter().enumerate() {
                    f.values.push(row[k]);
                    f.scales.push(predictor.scale[k]);
                    f.binary.push(false);
                    f.names.push(format!("{}@{i}", TAXI_FEATURES[k]));
                }
            }
            for k in TAXI_CELL_FEATURES..TAXI_FEATURES.len() {
                f.values.push(rows[0][k]);
                f.scales.push(predictor.scale[k]);
                f.binary.push(TAXI_FEATURES[k] == "holiday");
                f.names.push(TAXI_FEATURES[k].to_string());
            }
        }
        StateRef::Wildfire(s) => {
            for (i, v) in s.fuel.as_slice().iter().enumerate() {
                f.values.push(T::of(*v));
                f.scales.push(predictor.scale[2]);
                f.binary.push(false);
                f.names.push(format!("fuel@{i}"));
            }
            for (i, b) in s.burning.as_slice().iter().enumerate() {
                f.values.push(if *b { T::one() } else { T::zero() });
                f.scales.push(T::one());
                f.binary.push(true);
                f.names.push(format!("burning@{i}"));
            }
            let av = grid.index(s.av);
            for i in 0..n {
                f.values.push(if i == av { T::one() } else { T::zero() });
                f.scales.push(T::one());
                f.binary.push(true);
                f.names.push(format!("av_location@{i}"));
            }
        }
    }
    Ok(f)
}

/// Rebuilds σ from a perturbed flat vector.
fn sigma_from_flat<T: Scalar>(
    predictor: &Predictor<T>,
    state: &StateRef<'_>,
    z: &[T],
) -> Result<DrlInput<T>, PredictError> {
    let grid = state.grid();
    let n = grid.len();
    let mut maps = Vec::with_capacity(3 * n);
    let agent;
    match state {
        StateRef::Taxi(s, _) => {
            let globals = &z[TAXI_CELL_FEATURES * n..];
            let mut row = vec![T::zero(); TAXI_FEATURES.len()];
            row[TAXI_CELL_FEATURES..].copy_from_slice(globals);
            for i in 0..n {
                for k in 0..TAXI_CELL_FEATURES {
                    row[k] = z[k * n + i];
                }
                maps.push(predictor.predict(&row)?);
            }
            maps.extend(s.taxis.as_slice().iter().map(|v| T::of(*v as f64)));
            agent = s.taxi;
        }
        StateRef::Wildfire(s) => {
            let (fuel, rest) = z.split_at(n);
            let (burning, av_map) = rest.split_at(n);
            let orig = grid.index(s.av);
            let on = |v: T| v > T::of(0.5);
            let av = if on(av_map[orig]) {
                s.av
            } else {
                av_map.iter().position(|v| on(*v)).map(|i| grid.cell_at(i)).unwrap_or(s.av)
            };
            maps.extend_from_slice(fuel);
            maps.extend_from_slice(burning);
            for i in 0..n {
                let c = grid.cell_at(i);
                let row = [
                    T::of_usize(c.x),
                    T::of_usize(c.y),
                    fuel[i],
                    burning[i],
                    T::of_usize(av.x),
                    T::of_usize(av.y),
                ];
                maps.push(predictor.predict(&row)?);
            }
            agent = av;
        }
    }
    Ok(DrlInput {
        domain: state.domain(),
        grid,
        maps,
        agent,
    })
}

/// LIME saliency of the advised action's Q-value over every per-cell and
/// global prediction input.
pub fn generate_baseline<T, Q>(
    predictor: &Predictor<T>,
    model: &Q,
    state: StateRef<'_>,
    n_samples: usize,
    seed: u64,
) -> Result<BaselineExplanation<T>, ExplainError>
where
    T: Scalar,
    Q: QFunction<T> + ?Sized,
{
    check_domain(predictor, &state)?;
    let grid = state.grid();
    let pred = predictor.predict_grid(state)?;
    let sigma = build_sigma(state, &pred)?;
    let advised = argmax(&model.q_values(&sigma)?);

    let flat = flatten(predictor, &state)?;
    let mut failure: Option<ExplainError> = None;
    let f = |z: &[T]| {
        let q = sigma_from_flat(predictor, &state, z)
            .map_err(ExplainError::from)
            .and_then(|s| model.q_values(&s).map_err(ExplainError::from));
        match q {
            Ok(q) => q[advised],
            Err(e) => {
                failure.get_or_insert(e);
                T::zero()
            }
        }
    };
    let config = LimeConfig::new(n_samples, seed);
    let attr = lime_explain(f, &flat.values, &flat.scales, &flat.binary, &flat.names, &config)?;
    if let Some(e) = failure {
        return Err(e);
    }

    let n = grid.len();
    let kinds: Vec<&str> = match state.domain() {
        Domain::Taxi => TAXI_FEATURES[..TAXI_CELL_FEATURES].to_vec(),
        Domain::Wildfire => FIRE_SALIENCY_KINDS.to_vec(),
    };
    let saliency_maps = kinds
        .iter()
        .enumerate()
        .map(|(k, name)| SaliencyMap {
            feature: name.to_string(),
            values: attr.contributions[k * n..(k + 1) * n].to_vec(),
        })
        .collect();
    let global_influences = match state.domain() {
        Domain::Taxi => TAXI_FEATURES[TAXI_CELL_FEATURES..]
            .iter()
            .zip(&attr.contributions[TAXI_CELL_FEATURES * n..])
            .map(|(name, v)| (name.to_string(), *v))
            .collect(),
        Domain::Wildfire => Vec::new(),
    };
    Ok(BaselineExplanation {
        schema: SCHEMA_VERSION,
        domain: state.domain(),
        grid,
        agent: sigma.agent,
        advised_action: advised,
        saliency_maps,
        global_influences,
        samples: n_samples,
        diagnostics: attr.diagnostics,
    })
}
