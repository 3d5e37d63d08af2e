use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linalg::solve_spd;
use super::{check_names, AttribError, AttributionResult, Diagnostics, Method};
use crate::scalar::Scalar;

/// Chance that a perturbation flips a binary feature.
pub const LIME_FLIP_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Proximity kernel width; `None` means `0.75 * sqrt(features)`.
    pub kernel_width: Option<f64>,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl LimeConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            kernel_width: None,
            ridge_lambda: 1e-3,
            seed,
        }
    }
}

/// Local linear surrogate of `f` around `x`.
///
/// Continuous features get Gaussian noise with standard deviation
/// `feature_scales[i]`; features marked in `binary` flip between 0 and 1.
/// The first sample is `x` itself. Coefficients are slopes in the original
/// feature units.
pub fn lime_explain<T, F, S>(
    mut f: F,
    x: &[T],
    feature_scales: &[T],
    binary: &[bool],
    names: &[S],
    config: &LimeConfig,
) -> Result<AttributionResult<T>, AttribError>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
    S: AsRef<str>,
{
    let p = x.len();
    let feature_names = check_names(p, names)?;
    if feature_scales.len() != p || binary.len() != p {
        return Err(AttribError::Shape(format!(
            "{p} features, {} scales, {} binary flags",
            feature_scales.len(),
            binary.len()
        )));
    }
    let n = config.n_samples;
    // The dual solve copes with more features than samples, so only a
    // handful of samples is a hard floor.
    if n < 3 {
        return Err(AttribError::TooFewSamples {
            got: n,
            need: 3,
            features: p,
        });
    }
    let width = config.kernel_width.unwrap_or(0.75 * (p.max(1) as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let flip = T::of(LIME_FLIP_PROBABILITY);

    let mut z = vec![T::zero(); n * p];
    let mut y = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut moved = false;
    for s in 0..n {
        let row = &mut z[s * p..(s + 1) * p];
        row.copy_from_slice(x);
        let mut d2 = 0.0;
        if s > 0 {
            for i in 0..p {
                if binary[i] {
                    if T::of(rng.random::<f64>()) < flip {
                        row[i] = T::one() - x[i];
                        d2 += 1.0;
                    }
                } else if feature_scales[i] > T::zero() {
                    let e: f64 = rng.sample(StandardNormal);
                    row[i] = x[i] + T::of(e) * feature_scales[i];
                    d2 += e * e;
                }
            }
        }
        moved |= d2 > 0.0;
        w[s] = T::of((-d2 / (width * width)).exp());
        y[s] = f(row);
    }
    if !moved {
        return Err(AttribError::DegeneratePerturbation);
    }

    // Weighted centering absorbs the unpenalized intercept.
    let wsum: T = w.iter().copied().sum();
    let mut zbar = vec![T::zero(); p];
    let mut ybar = T::zero();
    for s in 0..n {
        ybar += w[s] * y[s];
        for i in 0..p {
            zbar[i] += w[s] * z[s * p + i];
        }
    }
    ybar /= wsum;
    zbar.iter_mut().for_each(|v| *v /= wsum);
    for s in 0..n {
        let sw = w[s].sqrt();
        y[s] = sw * (y[s] - ybar);
        for i in 0..p {
            z[s * p + i] = sw * (z[s * p + i] - zbar[i]);
        }
    }

    let lambda = T::of(config.ridge_lambda);
    let mut diagnostics = Diagnostics {
        samples: n,
        evaluations: n,
        ..Diagnostics::default()
    };
    let (beta, ridge) = if p <= n {
        let mut a = vec![T::zero(); p * p];
        let mut b = vec![T::zero(); p];
        for s in 0..n {
            let row = &z[s * p..(s + 1) * p];
            for i in 0..p {
                if row[i] == T::zero() {
                    continue;
                }
                b[i] += row[i] * y[s];
                for j in i..p {
                    a[i * p + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..p {
            a[i * p + i] += lambda;
            for j in 0..i {
                a[i * p + j] = a[j * p + i];
            }
        }
        solve_spd(&a, &b)
    } else {
        // Dual form: beta = Z' (Z Z' + lambda I)^-1 y.
        let mut g = vec![T::zero(); n * n];
        for s in 0..n {
            for t in s..n {
                let v = crate::scalar::dot(&z[s * p..(s + 1) * p], &z[t * p..(t + 1) * p]);
                g[s * n + t] = v;
                g[t * n + s] = v;
            }
            g[s * n + s] += lambda;
        }
        let (alpha, ridge) = solve_spd(&g, &y);
        let mut beta = vec![T::zero(); p];
        for s in 0..n {
            for i in 0..p {
                beta[i] += z[s * p + i] * alpha[s];
            }
        }
        (beta, ridge)
    };
    if ridge > T::zero() {
        diagnostics.ridge = Some(ridge.as_f64());
        diagnostics
            .warnings
            .push(format!("ill-conditioned surrogate; extra ridge {:.3e}", ridge.as_f64()));
    }

    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for s in 0..n {
        let fit = crate::scalar::dot(&z[s * p..(s + 1) * p], &beta);
        ss_res += (y[s] - fit).as_f64().powi(2);
        ss_tot += y[s].as_f64().powi(2);
    }
    diagnostics.r_squared = Some(if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 });

    let intercept = ybar - crate::scalar::dot(&zbar, &beta);
    let prediction = f(x);
    diagnostics.evaluations += 1;
    Ok(AttributionResult {
        method: Method::Lime,
        base_value: intercept + crate::scalar::dot(x, &beta),
        prediction,
        contributions: beta,
        feature_names,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: [&str; 3] = ["a", "b", "c"];

    #[test]
    fn linear_slopes() {
        let f = |v: &[f64]| 2.0 * v[0] - 0.5 * v[1] + 4.0 * v[2] + 1.0;
        let r = lime_explain(f, &[1.0, 2.0, 0.0], &[1.0, 0.5, 1.0], &[false, false, true], &NAMES, &LimeConfig::new(2000, 1))
            .unwrap();
        for (c, t) in r.contributions.iter().zip([2.0, -0.5, 4.0]) {
            assert!((c - t).abs() / t.abs() < 0.05, "{c} vs {t}");
        }
        assert!(r.diagnostics.r_squared.unwrap() > 0.999);
    }

    #[test]
    fn constant_function_zero() {
        let r = lime_explain(|_: &[f64]| 7.0, &[1.0, 2.0, 3.0], &[1.0; 3], &[false; 3], &NAMES, &LimeConfig::new(200, 3))
            .unwrap();
        assert!(r.contributions.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn deterministic() {
        let f = |v: &[f64]| v[0].sin() * v[1] + v[2];
        let c = LimeConfig::new(100, 5);
        let a = lime_explain(f, &[0.1, 0.2, 1.0], &[0.3; 3], &[false, false, true], &NAMES, &c).unwrap();
        let b = lime_explain(f, &[0.1, 0.2, 1.0], &[0.3; 3], &[false, false, true], &NAMES, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_scales_are_degenerate() {
        let e = lime_explain(|v: &[f64]| v[0], &[1.0, 2.0, 3.0], &[0.0; 3], &[false; 3], &NAMES, &LimeConfig::new(50, 0));
        assert_eq!(e.unwrap_err(), AttribError::DegeneratePerturbation);
    }

    #[test]
    fn dual_form_matches_primal() {
        let names: Vec<String> = (0..30).map(|i| format!("x{i}")).collect();
        let coef: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = |v: &[f64]| v.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>();
        let x = vec![0.5; 30];
        let scales = vec![1.0; 30];
        let bin = vec![false; 30];
        // 20 samples < 30 features forces the dual path; the minimum-norm
        // ridge solution still has to fit the samples almost exactly.
        let r = lime_explain(f, &x, &scales, &bin, &names, &LimeConfig::new(20, 2)).unwrap();
        assert!(r.diagnostics.r_squared.unwrap() > 0.999);
    }
}
