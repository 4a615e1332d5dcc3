//! Flat row-major helpers for the small (r x r) SPD systems that dominate
//! the per-feature updates. Everything works in caller-owned buffers so the
//! hot loops stay allocation-free.

/// In-place lower Cholesky of a k x k row-major SPD matrix. The strict
/// upper triangle is left untouched. Returns false on a non-positive pivot.
pub(crate) fn cholesky_in_place(m: &mut [f64], k: usize) -> bool {
    for i in 0..k {
        for j in 0..=i {
            let mut s = m[i * k + j];
            for t in 0..j {
                s -= m[i * k + t] * m[j * k + t];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return false;
                }
                m[i * k + i] = s.sqrt();
            } else {
                m[i * k + j] = s / m[j * k + j];
            }
        }
    }
    true
}

/// Solve L x = v in place given the factor from `cholesky_in_place`.
pub(crate) fn solve_lower(l: &[f64], k: usize, v: &mut [f64]) {
    for i in 0..k {
        let mut s = v[i];
        for t in 0..i {
            s -= l[i * k + t] * v[t];
        }
        v[i] = s / l[i * k + i];
    }
}

/// Solve L^T x = v in place given the factor from `cholesky_in_place`.
pub(crate) fn solve_lower_transpose(l: &[f64], k: usize, v: &mut [f64]) {
    for i in (0..k).rev() {
        let mut s = v[i];
        for t in (i + 1)..k {
            s -= l[t * k + i] * v[t];
        }
        v[i] = s / l[i * k + i];
    }
}

/// Full SPD solve (L L^T) x = v in place.
pub(crate) fn solve_spd(l: &[f64], k: usize, v: &mut [f64]) {
    solve_lower(l, k, v);
    solve_lower_transpose(l, k, v);
}

pub(crate) fn log_det_from_factor(l: &[f64], k: usize) -> f64 {
    (0..k).map(|i| l[i * k + i].ln()).sum::<f64>() * 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solve_roundtrip() {
        // A = [[4, 2], [2, 3]]; solve A x = (8, 7): x = (1.25, 1.5).
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        assert!(cholesky_in_place(&mut a, 2));
        let mut v = vec![8.0, 7.0];
        solve_spd(&a, 2, &mut v);
        assert!((v[0] - 1.25).abs() < 1e-12);
        assert!((v[1] - 1.5).abs() < 1e-12);
        // det = 8
        assert!((log_det_from_factor(&a, 2) - 8.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
    }
}
