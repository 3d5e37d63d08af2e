//! Grid-world advisers that explain themselves.
//!
//! A per-cell predictor turns raw state into demand or fire-risk maps, a
//! dueling double DQN advises an action from those maps, and the `explain`
//! module composes a heatmap, importance arrows and per-cell Shapley
//! feature lists into one explanation, next to a LIME saliency baseline.
//! Numeric code is generic over [`scalar::Scalar`]; the aliases below fix
//! it to `f64`.

pub mod advisor;
pub mod attrib;
pub mod desk;
pub mod env;
pub mod explain;
pub mod grid;
pub mod nn;
pub mod predictor;
pub mod scalar;
pub mod taxi;
pub mod wildfire;

pub type Grid64 = grid::Grid<f64>;
pub type MlpModel64 = nn::MlpModel<f64>;
pub type QNet64 = nn::QNet<f64>;
pub type QTable64 = advisor::QTable<f64>;
pub type DrlInput64 = advisor::DrlInput<f64>;
pub type Predictor64 = predictor::Predictor<f64>;
pub type AttributionResult64 = attrib::AttributionResult<f64>;
pub type AdesseExplanation64 = explain::AdesseExplanation<f64>;
pub type BaselineExplanation64 = explain::BaselineExplanation<f64>;
