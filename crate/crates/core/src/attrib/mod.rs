//! Feature attribution over opaque scalar functions: exact Shapley values
//! by enumeration, Kernel SHAP and LIME surrogates.
//!
//! Absent features always take their background value, so the exact and
//! kernel estimators agree on the value function they attribute.

pub mod linalg;
mod lime;
mod shapley;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lime::{lime_explain, LimeConfig, LIME_FLIP_PROBABILITY};
pub use shapley::{exact_shapley, kernel_shap, MAX_EXACT_FEATURES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttribError {
    #[error("exact Shapley values over {n} features need 2^{n} evaluations (limit {max}); use kernel_shap")]
    TooManyFeatures { n: usize, max: usize },
    #[error("{got} samples are too few for {features} features (need at least {need})")]
    TooFewSamples { got: usize, need: usize, features: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("every perturbed sample equals the explained input")]
    DegeneratePerturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactShapley,
    KernelShap,
    Lime,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Distinct coalitions or perturbations evaluated.
    pub samples: usize,
    /// Calls made to the explained function.
    pub evaluations: usize,
    /// Whether every coalition was enumerated.
    pub exhaustive: bool,
    /// Weighted coefficient of determination of the surrogate fit.
    pub r_squared: Option<f64>,
    /// Diagonal loading added to a singular regression, if any.
    pub ridge: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult<T> {
    pub method: Method,
    /// Function value at the background (Shapley) or surrogate intercept
    /// evaluated at the input (LIME).
    pub base_value: T,
    /// Function value at the explained input.
    pub prediction: T,
    pub contributions: Vec<T>,
    pub feature_names: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl<T: crate::scalar::Scalar> AttributionResult<T> {
    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    pub fn contribution(&self, name: &str) -> Option<T> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.contributions[i])
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string(self).expect("attribution results always serialize")
    }
}

/// The `k` largest contributions by magnitude; ties go to the
/// alphabetically first name.
pub fn top_k_features<T: crate::scalar::Scalar>(result: &AttributionResult<T>, k: usize) -> Vec<(String, T)> {
    let mut order: Vec<usize> = (0..result.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (result.contributions[a].abs(), result.contributions[b].abs());
        cb.partial_cmp(&ca)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| result.feature_names[a].cmp(&result.feature_names[b]))
    });
    order
        .into_iter()
        .take(k)
        .map(|i| (result.feature_names[i].clone(), result.contributions[i]))
        .collect()
}

pub(crate) fn check_names<S: AsRef<str>>(n: usize, names: &[S]) -> Result<Vec<String>, AttribError> {
    if names.len() != n {
        return Err(AttribError::Shape(format!("{n} features but {} names", names.len())));
    }
    Ok(names.iter().map(|s| s.as_ref().to_string()).collect())
}
