use super::{CMatrix, LinalgError, Tolerances, C64};

/// Returns `α = tr(M)/dim` when `‖M − αI‖_F ≤ cmp·(1 + ‖M‖_F)`.
pub fn is_multiple_of_identity(m: &CMatrix, tol: &Tolerances) -> Option<C64> {
    assert!(m.is_square(), "identity-multiple test on a non-square matrix");
    let n = m.rows();
    if n == 0 {
        return Some(C64::new(0.0, 0.0));
    }
    let alpha = m.trace() / n as f64;
    let mut residual_sq = 0.0;
    let mut norm_sq = 0.0;
    for i in 0..n {
        for (j, z) in m.row(i).iter().enumerate() {
            norm_sq += z.norm_sqr();
            residual_sq += if i == j { (z - alpha).norm_sqr() } else { z.norm_sqr() };
        }
    }
    (residual_sq.sqrt() <= tol.cmp * (1.0 + norm_sq.sqrt())).then_some(alpha)
}

/// Returns `r ≥ 0` with `M·M* = r·I = M*·M` (within `cmp`), i.e. `M = √r · unitary`.
pub fn is_multiple_of_unitary(m: &CMatrix, tol: &Tolerances) -> Option<f64> {
    assert!(m.is_square(), "unitary-multiple test on a non-square matrix");
    let left = is_multiple_of_identity(&m.mul_adjoint(m), tol)?;
    let right = is_multiple_of_identity(&m.adjoint_mul(m), tol)?;
    let scale = 1.0 + left.norm().max(right.norm());
    if left.im.abs() > tol.cmp * scale || right.im.abs() > tol.cmp * scale {
        return None;
    }
    if (left.re - right.re).abs() > tol.cmp * scale || left.re < -tol.cmp * scale {
        return None;
    }
    Some((0.5 * (left.re + right.re)).max(0.0))
}

/// Zero test relative to the Frobenius norm of the parent matrix the block was cut from.
pub fn is_zero(m: &CMatrix, tol: &Tolerances, parent_scale: f64) -> bool {
    m.frobenius_norm() <= tol.cmp * (1.0 + parent_scale)
}

/// `M⁻¹ = M*/r` for `M = √r · unitary`.
pub fn inverse_of_unitary_multiple(m: &CMatrix, r: f64) -> Result<CMatrix, LinalgError> {
    if r <= 0.0 || !r.is_finite() {
        return Err(LinalgError::SingularBlock);
    }
    Ok(m.adjoint().scale_real(1.0 / r))
}

/// Scalar equality relative to the larger magnitude.
pub fn scalars_agree(a: C64, b: C64, tol: &Tolerances) -> bool {
    (a - b).norm() <= tol.cmp * (1.0 + a.norm().max(b.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ONE, ZERO};
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rotation(theta: f64, phase: f64) -> CMatrix {
        let (s, co) = theta.sin_cos();
        let e = C64::from_polar(1.0, phase);
        CMatrix::from_rows(&[vec![c(co, 0.0), -e * s], vec![e.conj() * s, c(co, 0.0)]])
    }

    #[test]
    fn identity_multiple_examples() {
        assert_eq!(is_multiple_of_identity(&CMatrix::zeros(3, 3), &tol()), Some(ZERO));
        assert_eq!(
            is_multiple_of_identity(&CMatrix::scalar(4, c(1.0, 2.0)), &tol()),
            Some(c(1.0, 2.0))
        );
        let m = CMatrix::real_diagonal(&[1.0, 1.0 + 1e-3]);
        // direct computation: alpha = 1 + 5e-4, residual = sqrt(2) * 5e-4
        let residual = (2.0f64).sqrt() * 5e-4;
        assert!(residual > 1e-9 * (1.0 + m.frobenius_norm()));
        assert_eq!(is_multiple_of_identity(&m, &tol()), None);
    }

    #[test]
    fn alpha_is_the_trace_projection() {
        let mut m = CMatrix::scalar(2, c(3.0, -1.0));
        m[(0, 0)] += c(1e-12, 0.0);
        m[(1, 1)] -= c(3e-12, 0.0);
        let alpha = is_multiple_of_identity(&m, &tol()).unwrap();
        assert!((alpha - c(3.0 - 1e-12, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn unitary_multiple_examples() {
        let q = rotation(0.7, 1.3);
        assert!((is_multiple_of_unitary(&q, &tol()).unwrap() - 1.0).abs() < 1e-12);
        let q3 = q.scale_real(3.0);
        assert!((is_multiple_of_unitary(&q3, &tol()).unwrap() - 9.0).abs() < 1e-12);
        let d = CMatrix::real_diagonal(&[1.0, 2.0]);
        // M·M* = diag(1, 4) is not an identity multiple
        assert_eq!(is_multiple_of_unitary(&d, &tol()), None);
        assert_eq!(is_multiple_of_unitary(&CMatrix::zeros(2, 2), &tol()), Some(0.0));
    }

    #[test]
    fn zero_test_is_relative_to_parent() {
        assert!(is_zero(&CMatrix::zeros(2, 3), &tol(), 1.0));
        let mut tiny = CMatrix::zeros(2, 2);
        tiny[(0, 1)] = c(1e-15, 0.0);
        assert!(is_zero(&tiny, &tol(), 1.0));
        let mut small = CMatrix::zeros(2, 2);
        small[(0, 1)] = c(1e-3, 0.0);
        assert!(!is_zero(&small, &tol(), 1.0));
    }

    #[test]
    fn inverse_of_scaled_unitary() {
        let q = rotation(0.3, -0.4);
        let inv = inverse_of_unitary_multiple(&q, 1.0).unwrap();
        assert!((&inv - &q.adjoint()).frobenius_norm() < 1e-15);
        let two = CMatrix::scalar(3, c(2.0, 0.0));
        let inv = inverse_of_unitary_multiple(&two, 4.0).unwrap();
        assert!((&inv - &CMatrix::scalar(3, c(0.5, 0.0))).frobenius_norm() < 1e-15);
        let prod = &two * &inv;
        assert!((&prod - &CMatrix::identity(3)).frobenius_norm() <= tol().cmp * 3.0);
        assert_eq!(inverse_of_unitary_multiple(&two, 0.0), Err(LinalgError::SingularBlock));
    }

    proptest! {
        #[test]
        fn unitary_test_is_adjoint_symmetric(theta in -3.0f64..3.0, phase in -3.0f64..3.0, bump in 0.0f64..0.5) {
            let mut q = rotation(theta, phase);
            q[(0, 0)] += c(bump, 0.0);
            let direct = is_multiple_of_unitary(&q, &tol()).map(|r| (r - 1.0).abs() < 1e-9);
            let adj = is_multiple_of_unitary(&q.adjoint(), &tol()).map(|r| (r - 1.0).abs() < 1e-9);
            prop_assert_eq!(direct.unwrap_or(false), adj.unwrap_or(false));
        }

        #[test]
        fn identity_test_tracks_tiny_shift(re in -5.0f64..5.0, im in -5.0f64..5.0, n in 1usize..6) {
            let alpha = c(re, im);
            let m = CMatrix::scalar(n, alpha);
            prop_assert!(is_multiple_of_identity(&m, &tol()).is_some());
            let shifted = &m + &CMatrix::scalar(n, c(1e-12, 0.0));
            let got = is_multiple_of_identity(&shifted, &tol());
            prop_assert!(got.is_some());
            prop_assert!((got.unwrap() - alpha - c(1e-12, 0.0)).norm() < 1e-13);
        }

        #[test]
        fn scalar_agreement_is_symmetric(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let x = c(a, 0.0) * ONE;
            let y = c(b, 1.0);
            prop_assert_eq!(scalars_agree(x, y, &tol()), scalars_agree(y, x, &tol()));
        }
    }
}
