use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::solve_spd;
use super::{check_names, AttribError, AttributionResult, Diagnostics, Method};
use crate::scalar::Scalar;

/// Largest feature count accepted by [`exact_shapley`].
pub const MAX_EXACT_FEATURES: usize = 20;

fn check_inputs<T>(x: &[T], background: &[T]) -> Result<(), AttribError> {
    if x.len() != background.len() {
        return Err(AttribError::Shape(format!(
            "input has {} features, background {}",
            x.len(),
            background.len()
        )));
    }
    Ok(())
}

fn masked<T: Scalar>(x: &[T], background: &[T], present: impl Fn(usize) -> bool, out: &mut [T]) {
    for i in 0..x.len() {
        out[i] = if present(i) { x[i] } else { background[i] };
    }
}

/// Exact Shapley values by evaluating `f` on all `2^n` coalitions.
pub fn exact_shapley<T, F, S>(
    mut f: F,
    x: &[T],
    background: &[T],
    names: &[S],
) -> Result<AttributionResult<T>, AttribError>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
    S: AsRef<str>,
{
    check_inputs(x, background)?;
    let n = x.len();
    let feature_names = check_names(n, names)?;
    if n > MAX_EXACT_FEATURES {
        return Err(AttribError::TooManyFeatures {
            n,
            max: MAX_EXACT_FEATURES,
        });
    }
    let masks = 1usize << n;
    let mut buf = vec![T::zero(); n];
    let values: Vec<T> = (0..masks)
        .map(|m| {
            masked(x, background, |i| m >> i & 1 == 1, &mut buf);
            f(&buf)
        })
        .collect();

    // |S|! (n - |S| - 1)! / n! for each coalition size, via logs to stay
    // finite at n = 20.
    let ln_fact: Vec<f64> = (0..=n)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += (k as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    let weight: Vec<T> = (0..n.max(1))
        .map(|s| T::of((ln_fact[s] + ln_fact[n.saturating_sub(s + 1)] - ln_fact[n]).exp()))
        .collect();

    let mut phi = vec![T::zero(); n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = T::zero();
        for m in 0..masks {
            if m & bit == 0 {
                acc += weight[m.count_ones() as usize] * (values[m | bit] - values[m]);
            }
        }
        *p = acc;
    }
    Ok(AttributionResult {
        method: Method::ExactShapley,
        base_value: values[0],
        prediction: values[masks - 1],
        contributions: phi,
        feature_names,
        diagnostics: Diagnostics {
            samples: masks,
            evaluations: masks,
            exhaustive: true,
            ..Diagnostics::default()
        },
    })
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Kernel SHAP with the empty and full coalitions pinned. A budget of at
/// least `2^n - 2` enumerates every proper coalition with its exact kernel
/// weight, otherwise coalitions are drawn in complementary pairs from the
/// kernel's size distribution.
pub fn kernel_shap<T, F, S>(
    mut f: F,
    x: &[T],
    background: &[T],
    names: &[S],
    n_samples: usize,
    seed: u64,
) -> Result<AttributionResult<T>, AttribError>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
    S: AsRef<str>,
{
    check_inputs(x, background)?;
    let n = x.len();
    let feature_names = check_names(n, names)?;
    if n_samples < n + 2 {
        return Err(AttribError::TooFewSamples {
            got: n_samples,
            need: n + 2,
            features: n,
        });
    }
    let base = f(background);
    let prediction = f(x);
    let mut diagnostics = Diagnostics {
        evaluations: 2,
        ..Diagnostics::default()
    };
    let done = |contributions, diagnostics| AttributionResult {
        method: Method::KernelShap,
        base_value: base,
        prediction,
        contributions,
        feature_names: feature_names.clone(),
        diagnostics,
    };
    let delta = prediction - base;
    if n <= 1 {
        diagnostics.exhaustive = true;
        return Ok(done(vec![delta; n], diagnostics));
    }

    let (coalitions, exhaustive) = coalitions(n, n_samples, seed);
    diagnostics.exhaustive = exhaustive;
    diagnostics.samples = coalitions.len();

    // Eliminating the last feature through the efficiency constraint
    // leaves an unconstrained regression over the other n - 1.
    let m = n - 1;
    let mut a = vec![T::zero(); m * m];
    let mut b = vec![T::zero(); m];
    let mut buf = vec![T::zero(); n];
    let mut row = vec![T::zero(); m];
    for (mask, w) in &coalitions {
        masked(x, background, |i| mask[i], &mut buf);
        let v = f(&buf);
        diagnostics.evaluations += 1;
        let last = if mask[m] { T::one() } else { T::zero() };
        let y = v - base - last * delta;
        let w = T::of(*w);
        for i in 0..m {
            row[i] = if mask[i] { T::one() } else { T::zero() } - last;
        }
        for i in 0..m {
            if row[i] == T::zero() {
                continue;
            }
            let wi = w * row[i];
            b[i] += wi * y;
            for j in 0..m {
                a[i * m + j] += wi * row[j];
            }
        }
    }
    let (mut phi, ridge) = solve_spd(&a, &b);
    if ridge > T::zero() {
        diagnostics.ridge = Some(ridge.as_f64());
        diagnostics
            .warnings
            .push(format!("singular coalition design; solved with ridge {:.3e}", ridge.as_f64()));
        log::warn!("kernel SHAP design is singular, ridge {:.3e}", ridge.as_f64());
    }
    let rest: T = phi.iter().copied().sum();
    phi.push(delta - rest);
    Ok(done(phi, diagnostics))
}

fn mask_of(n: usize, members: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in members {
        m[i] = true;
    }
    m
}

fn subsets_of_size(n: usize, s: usize, mut emit: impl FnMut(&[usize])) {
    let mut c: Vec<usize> = (0..s).collect();
    loop {
        emit(&c);
        let mut i = s;
        while i > 0 && c[i - 1] == n - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        c[i - 1] += 1;
        for j in i..s {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Proper coalitions with their regression weights, and whether the list
/// is exhaustive.
///
/// Whole coalition sizes are enumerated, smallest and largest first, while
/// the budget covers their share of the kernel mass. Singletons are always
/// present so the design has full rank; the remaining budget is drawn from
/// the leftover sizes in complementary pairs.
fn coalitions(n: usize, budget: usize, seed: u64) -> (Vec<(Vec<bool>, f64)>, bool) {
    let kernel = |s: usize| (n - 1) as f64 / (s * (n - s)) as f64;
    let per_subset = |s: usize| kernel(s) / ln_choose(n, s).exp();
    if n < usize::BITS as usize - 1 && budget >= (1usize << n) - 2 {
        let all = (1..(1usize << n) - 1)
            .map(|m| {
                let mask: Vec<bool> = (0..n).map(|i| m >> i & 1 == 1).collect();
                (mask, per_subset(m.count_ones() as usize))
            })
            .collect();
        return (all, true);
    }

    let mut out: Vec<(Vec<bool>, f64)> = Vec::new();
    let mut open = vec![true; n];
    open[0] = false;
    let mut left = budget;
    let mut mass: f64 = (1..n).map(kernel).sum();
    for s in 1..=n / 2 {
        let paired = s != n - s;
        let count = ln_choose(n, s).exp() * if paired { 2.0 } else { 1.0 };
        let share = if paired { 2.0 * kernel(s) } else { kernel(s) } / mass;
        if share * left as f64 + 1e-8 < count || count > left as f64 {
            break;
        }
        for size in if paired { vec![s, n - s] } else { vec![s] } {
            subsets_of_size(n, size, |c| out.push((mask_of(n, c), per_subset(size))));
            open[size] = false;
            mass -= kernel(size);
        }
        left -= count as usize;
    }
    if open[1] {
        for i in 0..n {
            out.push((mask_of(n, &[i]), per_subset(1)));
        }
        open[1] = false;
        mass -= kernel(1);
        left -= n;
    }
    let sizes: Vec<usize> = (1..n).filter(|&s| open[s]).collect();
    if sizes.is_empty() || left == 0 {
        return (out, false);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn: Vec<Vec<bool>> = Vec::with_capacity(left);
    let mut idx: Vec<usize> = (0..n).collect();
    while drawn.len() < left {
        let mut u = rng.random::<f64>() * mass;
        let mut s = *sizes.last().unwrap();
        for &k in &sizes {
            if u < kernel(k) {
                s = k;
                break;
            }
            u -= kernel(k);
        }
        // Partial Fisher-Yates picks a uniform subset of size s.
        for k in 0..s {
            let j = rng.random_range(k..n);
            idx.swap(k, j);
        }
        let mask = mask_of(n, &idx[..s]);
        let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
        drawn.push(mask);
        if drawn.len() < left && open[n - s] {
            drawn.push(complement);
        }
    }
    let w = mass / drawn.len() as f64;
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    for mask in drawn {
        match index.get(&mask) {
            Some(&i) => out[i].1 += w,
            None => {
                index.insert(mask.clone(), out.len());
                out.push((mask, w));
            }
        }
    }
    (out, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: [&str; 4] = ["a", "b", "c", "d"];

    #[test]
    fn linear_exact() {
        let r = exact_shapley(|v: &[f64]| 2.0 * v[0] + 3.0 * v[1], &[1.0, 1.0], &[0.0, 0.0], &NAMES[..2]).unwrap();
        assert!((r.contributions[0] - 2.0).abs() < 1e-12);
        assert!((r.contributions[1] - 3.0).abs() < 1e-12);
        assert_eq!(r.base_value, 0.0);
        assert_eq!(r.prediction, 5.0);
    }

    #[test]
    fn unread_feature_gets_zero() {
        let r = exact_shapley(|v: &[f64]| v[0] * v[2], &[1.0, 4.0, 2.0], &[0.5, 0.0, 1.0], &NAMES[..3]).unwrap();
        assert_eq!(r.contributions[1], 0.0);
    }

    #[test]
    fn efficiency_on_three_features() {
        let f = |v: &[f64]| (v[0] * v[1]).sin() + v[2].powi(3) - v[0];
        let x = [0.3, -1.2, 0.8];
        let bg = [0.1, 0.4, -0.2];
        let r = exact_shapley(f, &x, &bg, &NAMES[..3]).unwrap();
        let sum: f64 = r.contributions.iter().sum();
        assert!((sum - (f(&x) - f(&bg))).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_inputs() {
        let names: Vec<String> = (0..21).map(|i| i.to_string()).collect();
        let e = exact_shapley(|_: &[f64]| 0.0, &[0.0; 21], &[0.0; 21], &names).unwrap_err();
        assert!(e.to_string().contains("kernel_shap"));
    }

    #[test]
    fn kernel_enumeration_matches_exact() {
        let f = |v: &[f64]| v[0] * v[1] + (v[2] - v[3]).powi(2) + v[1].exp();
        let x = [1.0, 0.5, -0.3, 2.0];
        let bg = [0.0, 0.2, 0.1, -1.0];
        let e = exact_shapley(f, &x, &bg, &NAMES).unwrap();
        let k = kernel_shap(f, &x, &bg, &NAMES, 14, 0).unwrap();
        assert!(k.diagnostics.exhaustive);
        for (a, b) in e.contributions.iter().zip(&k.contributions) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn kernel_sampling_recovers_linear() {
        let names: Vec<String> = (0..12).map(|i| format!("x{i}")).collect();
        let coef: Vec<f64> = (0..12).map(|i| i as f64 - 5.5).collect();
        let f = |v: &[f64]| v.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>() + 3.0;
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).cos()).collect();
        let bg = vec![0.25; 12];
        for budget in [14, 40, 300] {
            let r = kernel_shap(f, &x, &bg, &names, budget, 9).unwrap();
            assert!(!r.diagnostics.exhaustive);
            assert!(r.diagnostics.ridge.is_none());
            for i in 0..12 {
                assert!((r.contributions[i] - coef[i] * (x[i] - bg[i])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn kernel_deterministic() {
        let names: Vec<String> = (0..8).map(|i| format!("x{i}")).collect();
        let f = |v: &[f64]| v.iter().product::<f64>() + v[0];
        let x = [1.1; 8];
        let bg = [0.3; 8];
        let a = kernel_shap(f, &x, &bg, &names, 30, 4).unwrap();
        let b = kernel_shap(f, &x, &bg, &names, 30, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_rejects_tiny_budget() {
        assert!(matches!(
            kernel_shap(|_: &[f64]| 0.0, &[0.0; 4], &[0.0; 4], &NAMES, 5, 0),
            Err(AttribError::TooFewSamples { need: 6, .. })
        ));
    }
}
