//! Dense symmetric solves for the attribution regressions.

use crate::scalar::Scalar;

/// In-place Cholesky factor of a row-major SPD matrix; `None` when a pivot
/// is not positive.
pub fn cholesky<T: Scalar>(a: &mut [T], n: usize) -> Option<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(())
}

fn cholesky_apply<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `A x = b` for symmetric positive semi-definite `A`. When the
/// plain factorization fails a growing ridge is added; the returned ridge
/// is zero for an unregularized solve.
pub fn solve_spd<T: Scalar>(a: &[T], b: &[T]) -> (Vec<T>, T) {
    let n = b.len();
    let mut l = a.to_vec();
    if cholesky(&mut l, n).is_some() {
        let mut x = b.to_vec();
        cholesky_apply(&l, n, &mut x);
        return (x, T::zero());
    }
    let trace: T = (0..n).map(|i| a[i * n + i].abs()).sum::<T>() / T::of_usize(n.max(1));
    let mut ridge = trace.max(T::one()) * T::of(1e-10);
    loop {
        let mut l = a.to_vec();
        for i in 0..n {
            l[i * n + i] += ridge;
        }
        if cholesky(&mut l, n).is_some() {
            let mut x = b.to_vec();
            cholesky_apply(&l, n, &mut x);
            return (x, ridge);
        }
        ridge *= T::of(10.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let (x, r) = solve_spd(&a, &[2.0, 1.0]);
        assert_eq!(r, 0.0);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0f64).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0f64).abs() < 1e-12);
    }

    #[test]
    fn singular_system_gets_ridge() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let (x, r) = solve_spd(&a, &[2.0f64, 2.0]);
        assert!(r > 0.0);
        assert!((x[0] + x[1] - 2.0).abs() < 1e-6);
    }
}
