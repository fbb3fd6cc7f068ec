//! Hermitian eigensolver (cyclic complex Jacobi) and the normal-matrix
//! decomposition built on top of it.
//!
//! Eigenvalues are reported in canonical order: grouped by distance under the
//! grouping threshold, groups sorted by real part descending, ties in the real
//! part (within the threshold) broken by imaginary part descending. The rows of
//! `diagonalizer` are the matching eigenvectors, so `Y·S·Y* = diag(eigenvalues)`.

use serde::{Deserialize, Serialize};

use super::{is_multiple_of_unitary, CMatrix, LinalgError, Tolerances, C64, ZERO};

const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenGroup {
    pub value: C64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<C64>,
    pub diagonalizer: CMatrix,
    pub groups: Vec<EigenGroup>,
}

impl EigenDecomposition {
    pub fn multiplicities(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.multiplicity).collect()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Re-sorts and re-groups under a different threshold, permuting the
    /// diagonalizer rows along with the eigenvalues.
    pub fn regroup(&mut self, threshold: f64) {
        let (order, groups) = canonical_groups(&self.eigenvalues, threshold);
        let n = self.dim();
        let cols = self.diagonalizer.cols();
        let old = std::mem::replace(&mut self.diagonalizer, CMatrix::zeros(n, cols));
        let old_vals = std::mem::take(&mut self.eigenvalues);
        for (new_row, &k) in order.iter().enumerate() {
            self.diagonalizer.set_submatrix(new_row, 0, &old.submatrix(k, 1, 0, cols));
            self.eigenvalues.push(old_vals[k]);
        }
        self.groups = groups;
    }

    /// `‖Y·S·Y* − diag(λ)‖_F`.
    pub fn reconstruction_residual(&self, s: &CMatrix) -> f64 {
        let ys = &self.diagonalizer * s;
        let d = ys.mul_adjoint(&self.diagonalizer);
        (&d - &CMatrix::diagonal(&self.eigenvalues)).frobenius_norm()
    }
}

pub fn hermitian_eigendecomposition(
    s: &CMatrix,
    tol: &Tolerances,
) -> Result<EigenDecomposition, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            s.rows(),
            s.cols()
        )));
    }
    let norm = s.frobenius_norm();
    let deviation = (s - &s.adjoint()).frobenius_norm();
    if deviation > tol.cmp * (1.0 + norm) {
        return Err(LinalgError::NotHermitian { deviation });
    }
    let (values, v) = jacobi(&s.hermitian_part())?;
    let eigenvalues: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
    let mut dec = EigenDecomposition {
        eigenvalues,
        diagonalizer: v.adjoint(),
        groups: Vec::new(),
    };
    dec.regroup(tol.group * (1.0 + norm));
    Ok(dec)
}

/// Eigendecomposition of a multiple of a unitary matrix.
pub fn normal_eigendecomposition(
    n: &CMatrix,
    tol: &Tolerances,
) -> Result<EigenDecomposition, LinalgError> {
    if !n.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            n.rows(),
            n.cols()
        )));
    }
    if is_multiple_of_unitary(n, tol).is_none() {
        return Err(LinalgError::NotMultipleOfUnitary);
    }
    decompose_normal(n, tol)
}

/// Eigendecomposition of any normal matrix (`N·N* = N*·N` within `cmp`).
pub fn general_normal_eigendecomposition(
    n: &CMatrix,
    tol: &Tolerances,
) -> Result<EigenDecomposition, LinalgError> {
    if !n.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            n.rows(),
            n.cols()
        )));
    }
    let norm = n.frobenius_norm();
    let deviation = (&n.mul_adjoint(n) - &n.adjoint_mul(n)).frobenius_norm();
    if deviation > tol.cmp * (1.0 + norm * norm) {
        return Err(LinalgError::NotNormal { deviation });
    }
    decompose_normal(n, tol)
}

/// Diagonalizes the Hermitian part, then resolves each of its degenerate
/// eigenspaces with the (commuting) Hermitian matrix `(N − N*)/2i`.
fn decompose_normal(n: &CMatrix, tol: &Tolerances) -> Result<EigenDecomposition, LinalgError> {
    let dim = n.rows();
    let threshold = tol.group * (1.0 + n.frobenius_norm());
    let (re_values, v1) = jacobi(&n.hermitian_part())?;
    let y1 = v1.adjoint();
    let skew = n.skew_part_over_i();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| re_values[b].total_cmp(&re_values[a]));
    let mut y = CMatrix::zeros(dim, dim);
    let mut row = 0;
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && re_values[order[end - 1]] - re_values[order[end]] <= threshold {
            end += 1;
        }
        let k = end - start;
        let mut basis = CMatrix::zeros(k, dim);
        for (r, &idx) in order[start..end].iter().enumerate() {
            basis.set_submatrix(r, 0, &y1.submatrix(idx, 1, 0, dim));
        }
        if k > 1 {
            let restricted = (&basis * &skew).mul_adjoint(&basis);
            let (_, v2) = jacobi(&restricted.hermitian_part())?;
            basis = v2.adjoint_mul(&basis);
        }
        y.set_submatrix(row, 0, &basis);
        row += k;
        start = end;
    }

    let yn = &y * n;
    let eigenvalues: Vec<C64> = (0..dim)
        .map(|i| yn.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b.conj()).sum())
        .collect();
    let mut dec = EigenDecomposition {
        eigenvalues,
        diagonalizer: y,
        groups: Vec::new(),
    };
    dec.regroup(threshold);
    Ok(dec)
}

/// Eigenvalues only, unsorted.
pub(crate) fn hermitian_eigenvalues(s: &CMatrix) -> Result<Vec<f64>, LinalgError> {
    jacobi(&s.hermitian_part()).map(|(v, _)| v)
}

/// Canonical permutation and grouping of a list of eigenvalues.
///
/// Values within `threshold` of each other are merged transitively. Groups are
/// ordered by real part descending; groups whose real parts chain within the
/// threshold form a band ordered by imaginary part descending.
pub(crate) fn canonical_groups(values: &[C64], threshold: f64) -> (Vec<usize>, Vec<EigenGroup>) {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for a in 0..n {
        for b in a + 1..n {
            if (values[a] - values[b]).norm() <= threshold {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut cluster_of = vec![usize::MAX; n];
    for k in 0..n {
        let root = find(&mut parent, k);
        if cluster_of[root] == usize::MAX {
            cluster_of[root] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[cluster_of[root]].push(k);
    }
    let means: Vec<C64> = clusters
        .iter()
        .map(|c| c.iter().map(|&k| values[k]).sum::<C64>() / c.len() as f64)
        .collect();

    let mut by_re: Vec<usize> = (0..clusters.len()).collect();
    by_re.sort_by(|&a, &b| means[b].re.total_cmp(&means[a].re));
    let mut sorted = Vec::with_capacity(clusters.len());
    let mut start = 0;
    while start < by_re.len() {
        let mut end = start + 1;
        while end < by_re.len() && means[by_re[end - 1]].re - means[by_re[end]].re <= threshold {
            end += 1;
        }
        let mut band = by_re[start..end].to_vec();
        band.sort_by(|&a, &b| means[b].im.total_cmp(&means[a].im));
        sorted.extend(band);
        start = end;
    }

    let mut order = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(sorted.len());
    for c in sorted {
        let mut members = clusters[c].clone();
        members.sort_by(|&a, &b| {
            values[b]
                .re
                .total_cmp(&values[a].re)
                .then(values[b].im.total_cmp(&values[a].im))
        });
        groups.push(EigenGroup {
            value: means[c],
            multiplicity: members.len(),
        });
        order.extend(members);
    }
    (order, groups)
}

/// Cyclic Jacobi on a Hermitian matrix. Returns eigenvalues and `V` whose
/// columns are the eigenvectors (`V*·H·V = diag`).
fn jacobi(h: &CMatrix) -> Result<(Vec<f64>, CMatrix), LinalgError> {
    let n = h.rows();
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)].im = 0.0;
    }
    let mut v = CMatrix::identity(n);
    let total = a.frobenius_norm();
    if n <= 1 || total == 0.0 {
        return Ok(((0..n).map(|i| a[(i, i)].re).collect(), v));
    }
    let target = f64::EPSILON * total * 0.5;

    for _ in 0..MAX_SWEEPS {
        let mut off_sq = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off_sq += a[(p, q)].norm_sqr();
            }
        }
        if (2.0 * off_sq).sqrt() <= target {
            return Ok(((0..n).map(|i| a[(i, i)].re).collect(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let abs = apq.norm();
                if abs <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = apq / abs;
                let theta = (aqq - app) / (2.0 * abs);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // G restricted to the (p, q) plane
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;
                // A ← A·G
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * gpp + akq * gqp;
                    a[(k, q)] = akp * gpq + akq * gqq;
                }
                // A ← G*·A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }
    Err(LinalgError::NumericalFailure(format!(
        "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::random_unitary;
    use crate::linalg::{I, ONE};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn assert_invariants(dec: &EigenDecomposition, s: &CMatrix) {
        let n = s.rows() as f64;
        assert!(dec.diagonalizer.unitarity_defect() <= 1e-9 * n, "diagonalizer not unitary");
        assert!(dec.reconstruction_residual(s) <= 1e-7 * (1.0 + s.frobenius_norm()));
        assert_eq!(dec.multiplicities().iter().sum::<usize>(), s.rows());
    }

    /// Closed-form eigenpairs of a 2×2 Hermitian matrix [[a, b], [b̄, d]].
    fn closed_form_2x2(a: f64, b: C64, d: f64) -> ([f64; 2], CMatrix) {
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        let vals = [mean + rad, mean - rad];
        let rows: Vec<Vec<C64>> = vals
            .iter()
            .map(|&l| {
                // (S − λ)v = 0 with v = (b, λ − a); rows of Y are v*
                let v = [b, c(l - a, 0.0)];
                let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
                vec![v[0].conj() / norm, v[1].conj() / norm]
            })
            .collect();
        (vals, CMatrix::from_rows(&rows))
    }

    #[test]
    fn identity_is_one_group() {
        let dec = hermitian_eigendecomposition(&CMatrix::identity(2), &tol()).unwrap();
        assert_eq!(dec.eigenvalues, vec![ONE, ONE]);
        assert_eq!(dec.groups, vec![EigenGroup { value: ONE, multiplicity: 2 }]);
        assert_eq!(dec.diagonalizer, CMatrix::identity(2));
    }

    #[test]
    fn diagonal_input_is_sorted_descending() {
        let s = CMatrix::real_diagonal(&[3.0, -1.0]);
        let dec = hermitian_eigendecomposition(&s, &tol()).unwrap();
        assert_eq!(dec.eigenvalues, vec![c(3.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(dec.diagonalizer, CMatrix::identity(2));
        let flipped = CMatrix::real_diagonal(&[-1.0, 3.0]);
        let dec = hermitian_eigendecomposition(&flipped, &tol()).unwrap();
        assert_eq!(dec.eigenvalues, vec![c(3.0, 0.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn swap_matrix_matches_closed_form() {
        let s = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let dec = hermitian_eigendecomposition(&s, &tol()).unwrap();
        let (vals, y) = closed_form_2x2(0.0, ONE, 0.0);
        assert_eq!(vals, [1.0, -1.0]);
        for (got, want) in dec.eigenvalues.iter().zip(vals) {
            assert!((got - c(want, 0.0)).norm() < 1e-14);
        }
        let closed = (&(&y * &s) * &y.adjoint()).diag();
        assert!((closed[0] - ONE).norm() < 1e-14 && (closed[1] + ONE).norm() < 1e-14);
        assert!(dec.reconstruction_residual(&s) < 1e-12);
    }

    #[test]
    fn complex_2x2_matches_closed_form() {
        let b = c(0.3, -1.2);
        let s = CMatrix::from_rows(&[vec![c(2.0, 0.0), b], vec![b.conj(), c(-0.5, 0.0)]]);
        let dec = hermitian_eigendecomposition(&s, &tol()).unwrap();
        let (vals, _) = closed_form_2x2(2.0, b, -0.5);
        for (got, want) in dec.eigenvalues.iter().zip(vals) {
            assert!((got.re - want).abs() < 1e-13 && got.im == 0.0);
        }
        assert_invariants(&dec, &s);
    }

    #[test]
    fn rejects_non_hermitian() {
        let s = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            hermitian_eigendecomposition(&s, &tol()),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn scalar_multiple_of_identity_normal() {
        let n = CMatrix::scalar(3, c(2.0, 0.0));
        let dec = normal_eigendecomposition(&n, &tol()).unwrap();
        assert_eq!(dec.eigenvalues, vec![c(2.0, 0.0); 3]);
        assert_eq!(dec.diagonalizer, CMatrix::identity(3));
    }

    #[test]
    fn rotation_by_quarter_turn() {
        let n = CMatrix::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let dec = normal_eigendecomposition(&n, &tol()).unwrap();
        assert!((dec.eigenvalues[0] - I).norm() < 1e-12);
        assert!((dec.eigenvalues[1] + I).norm() < 1e-12);
        assert!(dec.reconstruction_residual(&n) < 1e-12);
    }

    #[test]
    fn planted_unitary_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random_unitary(&mut rng, 2);
        let n = &(&q * &CMatrix::diagonal(&[ONE, I])) * &q.adjoint();
        let dec = normal_eigendecomposition(&n, &tol()).unwrap();
        assert!((dec.eigenvalues[0] - ONE).norm() < 1e-9);
        assert!((dec.eigenvalues[1] - I).norm() < 1e-9);
        assert_invariants(&dec, &n);
    }

    #[test]
    fn normal_with_degenerate_real_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_unitary(&mut rng, 5);
        let spectrum = [I, -I, I, ONE, C64::from_polar(1.0, 2.0)];
        let n = &(&q * &CMatrix::diagonal(&spectrum)) * &q.adjoint();
        let dec = normal_eigendecomposition(&n, &tol()).unwrap();
        assert_invariants(&dec, &n);
        let values: Vec<(C64, usize)> = dec.groups.iter().map(|g| (g.value, g.multiplicity)).collect();
        let expect = [(ONE, 1), (I, 2), (-I, 1), (C64::from_polar(1.0, 2.0), 1)];
        assert_eq!(values.len(), expect.len());
        for ((got, m), (want, wm)) in values.iter().zip(expect) {
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
            assert_eq!(*m, wm);
        }
    }

    #[test]
    fn general_normal_rejects_jordan_block() {
        let j = CMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(
            general_normal_eigendecomposition(&j, &tol()),
            Err(LinalgError::NotNormal { .. })
        ));
        assert_eq!(
            normal_eigendecomposition(&j, &tol()).unwrap_err(),
            LinalgError::NotMultipleOfUnitary
        );
    }

    #[test]
    fn grouping_is_transitive() {
        let vals = [c(1.0, 0.0), c(1.0 + 0.8e-7, 0.0), c(1.0 + 1.6e-7, 0.0), c(0.0, 0.0)];
        let (order, groups) = canonical_groups(&vals, 1e-7);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].multiplicity, 3);
        assert_eq!(order, vec![2, 1, 0, 3]);
    }

    #[test]
    fn canonical_order_breaks_real_ties_by_imaginary_part() {
        let vals = [c(1e-17, -1.0), c(-1e-17, 1.0), c(2.0, 0.0)];
        let (order, _) = canonical_groups(&vals, 1e-9);
        assert_eq!(order, vec![2, 1, 0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_hermitian_invariants(seed in 0u64..10_000, n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = crate::instgen::gaussian_matrix(&mut rng, n, n);
            let s = g.hermitian_part();
            let dec = hermitian_eigendecomposition(&s, &tol()).unwrap();
            assert_invariants(&dec, &s);
            for w in dec.eigenvalues.windows(2) {
                prop_assert!(w[0].re >= w[1].re);
            }
        }

        #[test]
        fn spectrum_is_conjugation_invariant(seed in 0u64..10_000, n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = crate::instgen::gaussian_matrix(&mut rng, n, n).hermitian_part();
            let q = random_unitary(&mut rng, n);
            let t = &(&q * &s) * &q.adjoint();
            let a = hermitian_eigendecomposition(&s, &tol()).unwrap();
            let b = hermitian_eigendecomposition(&t, &tol()).unwrap();
            prop_assert_eq!(a.multiplicities(), b.multiplicities());
            for (x, y) in a.groups.iter().zip(&b.groups) {
                prop_assert!((x.value - y.value).norm() <= 1e-7 * (1.0 + s.frobenius_norm()));
            }
            let mut again = a.clone();
            again.regroup(tol().group * (1.0 + s.frobenius_norm()));
            prop_assert_eq!(again.eigenvalues, a.eigenvalues);
        }

        #[test]
        fn random_unitary_eigendecomposition(seed in 0u64..10_000, n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_unitary(&mut rng, n).scale_real(1.5);
            let dec = normal_eigendecomposition(&q, &tol()).unwrap();
            assert_invariants(&dec, &q);
            for z in &dec.eigenvalues {
                prop_assert!((z.norm() - 1.5).abs() < 1e-9);
            }
        }
    }
}
