//! Equivalent-problem construction: pick the Hermitian or normal pair `(S, R)`
//! for a violation, diagonalize both, compare spectra and split the touched
//! block. Also composes the per-step unitaries into the final witness.

use serde::{Deserialize, Serialize};

use crate::blocking::{BlockStructure, Mode, PairCollection, PartitionView, Side};
use crate::certificate::{Evidence, MismatchKind};
use crate::error::{Error, Result};
use crate::graph::{PrPaths, VertexKind};
use crate::linalg::{
    hermitian_eigendecomposition, is_multiple_of_identity, normal_eigendecomposition, CMatrix,
    EigenDecomposition, EigenGroup, Tolerances,
};
use crate::one_based;
use crate::structure::{MismatchClaim, Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SKind {
    HermitianReal,
    HermitianImag,
    GramLeft,
    GramRight,
    PrNormal,
}

/// Which unknown a step acts on: `U` (and `V = U`) in similarity mode, or one
/// side in equivalence mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSide {
    Both,
    Row,
    Col,
}

/// What triggered a refinement.
#[derive(Debug, Clone)]
pub enum Trigger {
    Structural(Violation),
    Pr {
        violation: Violation,
        pr_a: CMatrix,
        pr_b: CMatrix,
        paths: PrPaths,
    },
}

impl Trigger {
    pub fn violation(&self) -> Violation {
        match self {
            Trigger::Structural(v) => *v,
            Trigger::Pr { violation, .. } => *violation,
        }
    }

    pub fn paths(&self) -> Option<&PrPaths> {
        match self {
            Trigger::Structural(_) => None,
            Trigger::Pr { paths, .. } => Some(paths),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub s: CMatrix,
    pub r: CMatrix,
    pub kind: SKind,
    pub side: StepSide,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub rows_before: BlockStructure,
    pub cols_before: BlockStructure,
    pub rows_after: BlockStructure,
    pub cols_after: BlockStructure,
    pub violation: Violation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<PrPaths>,
    pub s_kind: SKind,
    pub side: StepSide,
    #[serde(with = "one_based")]
    pub block: usize,
    pub eigs_a: Vec<EigenGroup>,
    pub eigs_b: Vec<EigenGroup>,
    /// Diagonalizer of `S`, acting on the touched block only.
    pub y_block: CMatrix,
    /// Diagonalizer of `R`, acting on the touched block only.
    pub z_block: CMatrix,
}

impl RefinementStep {
    pub fn multiplicities(&self) -> Vec<usize> {
        self.eigs_a.iter().map(|g| g.multiplicity).collect()
    }
}

#[derive(Debug, Clone)]
pub enum Equivalent {
    Refined {
        coll: PairCollection,
        step: Box<RefinementStep>,
    },
    Mismatch(MismatchClaim),
}

fn hermitian_parts(m: &CMatrix, tol: &Tolerances) -> (CMatrix, SKind) {
    let re = m.hermitian_part();
    let im = m.skew_part_over_i();
    let re_passes = is_multiple_of_identity(&re, tol).is_some();
    let im_passes = is_multiple_of_identity(&im, tol).is_some();
    match (re_passes, im_passes) {
        (false, _) => (re, SKind::HermitianReal),
        (true, false) => (im, SKind::HermitianImag),
        // Both pass individually but their sum did not: take the larger residual.
        (true, true) => {
            if crate::structure::identity_residual(&im) > crate::structure::identity_residual(&re) {
                (im, SKind::HermitianImag)
            } else {
                (re, SKind::HermitianReal)
            }
        }
    }
}

fn hermitian_part_of_kind(m: &CMatrix, kind: SKind) -> CMatrix {
    match kind {
        SKind::HermitianImag => m.skew_part_over_i(),
        _ => m.hermitian_part(),
    }
}

/// Chooses `S` (A-side) and `R` (same functional of the B-side) for a violation.
pub fn select_s_and_r(view: &PartitionView, mode: Mode, trigger: &Trigger, tol: &Tolerances) -> Result<Selection> {
    let v = trigger.violation();
    let at = v.at;
    match (v.kind, trigger) {
        (ViolationKind::DiagonalNotIdentityMultiple, _) => {
            let a = view.block(at.l, Side::A, at.i, at.j);
            let b = view.block(at.l, Side::B, at.i, at.j);
            let (s, kind) = hermitian_parts(a, tol);
            let r = hermitian_part_of_kind(b, kind);
            Ok(Selection {
                s,
                r,
                kind,
                side: StepSide::Both,
                block: at.i,
            })
        }
        (ViolationKind::RectangularNonzero | ViolationKind::SquareNotUnitaryMultiple, _) => {
            let a = view.block(at.l, Side::A, at.i, at.j);
            let b = view.block(at.l, Side::B, at.i, at.j);
            let left = a.mul_adjoint(a);
            if is_multiple_of_identity(&left, tol).is_none() {
                return Ok(Selection {
                    s: left,
                    r: b.mul_adjoint(b),
                    kind: SKind::GramLeft,
                    side: if mode == Mode::Sus { StepSide::Both } else { StepSide::Row },
                    block: at.i,
                });
            }
            let right = a.adjoint_mul(a);
            if is_multiple_of_identity(&right, tol).is_none() {
                return Ok(Selection {
                    s: right,
                    r: b.adjoint_mul(b),
                    kind: SKind::GramRight,
                    side: if mode == Mode::Sus { StepSide::Both } else { StepSide::Col },
                    block: at.j,
                });
            }
            Err(Error::InternalInconsistency(format!(
                "block {at} failed the unitary test but both Gram matrices are identity multiples"
            )))
        }
        (ViolationKind::PrNotIdentityMultiple, Trigger::Pr { pr_a, pr_b, paths, .. }) => {
            let side = match (mode, paths.rep.kind) {
                (Mode::Sus, _) => StepSide::Both,
                (Mode::Sueq, VertexKind::Col) => StepSide::Col,
                (Mode::Sueq, _) => StepSide::Row,
            };
            Ok(Selection {
                s: pr_a.clone(),
                r: pr_b.clone(),
                kind: SKind::PrNormal,
                side,
                block: paths.rep.index,
            })
        }
        (ViolationKind::PrNotIdentityMultiple, Trigger::Structural(_)) => Err(Error::InternalInconsistency(
            "path-product violation without path products".into(),
        )),
    }
}

pub(crate) fn decompose(m: &CMatrix, kind: SKind, tol: &Tolerances) -> Result<EigenDecomposition> {
    Ok(match kind {
        SKind::PrNormal => normal_eigendecomposition(m, tol)?,
        _ => hermitian_eigendecomposition(m, tol)?,
    })
}

/// Grouped spectra agree: same multiplicity pattern, values within `threshold`.
pub fn spectra_match(a: &[EigenGroup], b: &[EigenGroup], threshold: f64) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(x, y)| x.multiplicity == y.multiplicity && (x.value - y.value).norm() <= threshold)
}

pub(crate) fn spectrum_threshold(s: &CMatrix, r: &CMatrix, tol: &Tolerances) -> f64 {
    tol.group * (1.0 + s.frobenius_norm().max(r.frobenius_norm()))
}

/// Diagonalizes `S` and `R`; on matching spectra returns the conjugated
/// collection and the refined structures, otherwise an eigenvalue mismatch.
pub fn build_equivalent_problem(
    coll: &PairCollection,
    rows: &BlockStructure,
    cols: &BlockStructure,
    trigger: &Trigger,
    sel: Selection,
    tol: &Tolerances,
) -> Result<Equivalent> {
    let mut dec_s = decompose(&sel.s, sel.kind, tol)?;
    let mut dec_r = decompose(&sel.r, sel.kind, tol)?;
    let mut threshold = spectrum_threshold(&sel.s, &sel.r, tol);
    if dec_s.groups.len() < 2 {
        // Every eigenvalue sits inside the grouping tolerance although S is
        // not an identity multiple: fall back to the comparison tolerance.
        dec_s.regroup(tol.cmp * (1.0 + sel.s.frobenius_norm()));
        dec_r.regroup(tol.cmp * (1.0 + sel.r.frobenius_norm()));
        threshold = tol.cmp * (1.0 + sel.s.frobenius_norm().max(sel.r.frobenius_norm()));
        if dec_s.groups.len() < 2 && spectra_match(&dec_s.groups, &dec_r.groups, threshold) {
            return Err(Error::Linalg(crate::linalg::LinalgError::NumericalFailure(format!(
                "{:?} matrix at {} is not an identity multiple but has no resolvable eigen-gap",
                sel.kind,
                trigger.violation().at
            ))));
        }
    }
    if !spectra_match(&dec_s.groups, &dec_r.groups, threshold) {
        return Ok(Equivalent::Mismatch(MismatchClaim {
            kind: MismatchKind::EigenvalueMismatch,
            at: trigger.violation().at,
            evidence: Evidence::Spectrum {
                source: sel.kind,
                side: sel.side,
                block: sel.block,
                paths: trigger.paths().cloned(),
                a: dec_s.groups,
                b: dec_r.groups,
            },
        }));
    }
    let mults = dec_s.multiplicities();
    let (rows_after, cols_after) = match sel.side {
        StepSide::Both => {
            let r = rows.refine(sel.block, &mults)?;
            (r.clone(), r)
        }
        StepSide::Row => (rows.refine(sel.block, &mults)?, cols.clone()),
        StepSide::Col => (rows.clone(), cols.refine(sel.block, &mults)?),
    };
    let step = RefinementStep {
        rows_before: rows.clone(),
        cols_before: cols.clone(),
        rows_after,
        cols_after,
        violation: trigger.violation(),
        paths: trigger.paths().cloned(),
        s_kind: sel.kind,
        side: sel.side,
        block: sel.block,
        eigs_a: dec_s.groups,
        eigs_b: dec_r.groups,
        y_block: dec_s.diagonalizer,
        z_block: dec_r.diagonalizer,
    };
    let mut next = coll.clone();
    apply_step(&mut next, &step);
    Ok(Equivalent::Refined {
        coll: next,
        step: Box::new(step),
    })
}

/// Conjugates the collection by the step's `Y` (A-side) and `Z` (B-side).
pub fn apply_step(coll: &mut PairCollection, step: &RefinementStep) {
    let (y, z) = (&step.y_block, &step.z_block);
    let off = match step.side {
        StepSide::Col => step.cols_before.offset(step.block),
        _ => step.rows_before.offset(step.block),
    };
    for (a, b) in coll.pairs_mut() {
        match step.side {
            StepSide::Both => {
                a.apply_left_block(off, y);
                a.apply_right_adjoint_block(off, y);
                b.apply_left_block(off, z);
                b.apply_right_adjoint_block(off, z);
            }
            StepSide::Row => {
                a.apply_left_block(off, y);
                b.apply_left_block(off, z);
            }
            StepSide::Col => {
                a.apply_right_adjoint_block(off, y);
                b.apply_right_adjoint_block(off, z);
            }
        }
    }
}

/// Maps witnesses of the last equivalent problem back to the original one:
/// `U = Z₁*···Z_t*·Û·Y_t···Y₁` per side.
pub fn compose_witness(u_hat: &CMatrix, v_hat: Option<&CMatrix>, steps: &[RefinementStep]) -> (CMatrix, Option<CMatrix>) {
    let mut u = u_hat.clone();
    let mut v = v_hat.cloned();
    for step in steps.iter().rev() {
        let (y_adj, z_adj) = (step.y_block.adjoint(), &step.z_block.adjoint());
        match step.side {
            StepSide::Both | StepSide::Row => {
                let off = step.rows_before.offset(step.block);
                u.apply_left_block(off, z_adj);
                u.apply_right_adjoint_block(off, &y_adj);
                if step.side == StepSide::Both {
                    if let Some(v) = v.as_mut() {
                        v.apply_left_block(off, z_adj);
                        v.apply_right_adjoint_block(off, &y_adj);
                    }
                }
            }
            StepSide::Col => {
                let off = step.cols_before.offset(step.block);
                if let Some(v) = v.as_mut() {
                    v.apply_left_block(off, z_adj);
                    v.apply_right_adjoint_block(off, &y_adj);
                }
            }
        }
    }
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocking::induced_partition;
    use crate::instgen::{gaussian_matrix, random_unitary};
    use crate::linalg::{C64, I};
    use crate::structure::CellRef;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn st(v: &[usize]) -> BlockStructure {
        BlockStructure::new(v.to_vec()).unwrap()
    }

    fn diag_trigger() -> Trigger {
        Trigger::Structural(Violation {
            kind: ViolationKind::DiagonalNotIdentityMultiple,
            at: CellRef { l: 0, i: 0, j: 0 },
        })
    }

    fn select(coll: &PairCollection, rows: &BlockStructure, cols: &BlockStructure, mode: Mode, t: &Trigger) -> Selection {
        let view = induced_partition(coll, rows, cols).unwrap();
        select_s_and_r(&view, mode, t, &tol()).unwrap()
    }

    #[test]
    fn real_hermitian_part_preferred() {
        let a = CMatrix::real_diagonal(&[1.0, 2.0]);
        let coll = PairCollection::from_single(vec![a.clone()]).unwrap();
        let sel = select(&coll, &st(&[2]), &st(&[2]), Mode::Sus, &diag_trigger());
        assert_eq!(sel.kind, SKind::HermitianReal);
        assert_eq!(sel.s, a);
    }

    #[test]
    fn imaginary_part_used_when_real_part_is_scalar() {
        let a = CMatrix::real_diagonal(&[1.0, 2.0]).scale(I);
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let sel = select(&coll, &st(&[2]), &st(&[2]), Mode::Sus, &diag_trigger());
        assert_eq!(sel.kind, SKind::HermitianImag);
        assert!((&sel.s - &CMatrix::real_diagonal(&[1.0, 2.0])).frobenius_norm() < 1e-15);
    }

    #[test]
    fn rank_one_rectangular_block_uses_left_gram() {
        let mut a = CMatrix::zeros(3, 3);
        a[(0, 2)] = C64::new(1.0, 0.0);
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let t = Trigger::Structural(Violation {
            kind: ViolationKind::RectangularNonzero,
            at: CellRef { l: 0, i: 0, j: 1 },
        });
        let sel = select(&coll, &st(&[2, 1]), &st(&[2, 1]), Mode::Sus, &t);
        assert_eq!(sel.kind, SKind::GramLeft);
        assert_eq!(sel.block, 0);
        assert_eq!(sel.s, CMatrix::real_diagonal(&[1.0, 0.0]));
    }

    #[test]
    fn planted_spectrum_splits_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = random_unitary(&mut rng, 3);
        let a = &(&w * &CMatrix::real_diagonal(&[2.0, 1.0, 1.0])) * &w.adjoint();
        let u = random_unitary(&mut rng, 3);
        let b = &(&u * &a) * &u.adjoint();
        let coll = PairCollection::new(vec![(a, b)]).unwrap();
        let whole = st(&[3]);
        let t = diag_trigger();
        let sel = select(&coll, &whole, &whole, Mode::Sus, &t);
        let Equivalent::Refined { coll: next, step } =
            build_equivalent_problem(&coll, &whole, &whole, &t, sel, &tol()).unwrap()
        else {
            panic!("spectra should match");
        };
        assert_eq!(step.rows_after, st(&[1, 2]));
        assert_eq!(step.multiplicities(), vec![1, 2]);
        let expect = CMatrix::real_diagonal(&[2.0, 1.0, 1.0]);
        assert!((&next.a(0).hermitian_part() - &expect).frobenius_norm() < 1e-12);
        assert!((&next.b(0).hermitian_part() - &expect).frobenius_norm() < 1e-12);
    }

    #[test]
    fn different_traces_give_eigenvalue_mismatch() {
        let coll = PairCollection::new(vec![(
            CMatrix::real_diagonal(&[1.0, 2.0]),
            CMatrix::real_diagonal(&[1.0, 3.0]),
        )])
        .unwrap();
        let whole = st(&[2]);
        let t = diag_trigger();
        let sel = select(&coll, &whole, &whole, Mode::Sus, &t);
        let Equivalent::Mismatch(claim) = build_equivalent_problem(&coll, &whole, &whole, &t, sel, &tol()).unwrap()
        else {
            panic!("expected mismatch");
        };
        assert_eq!(claim.kind, MismatchKind::EigenvalueMismatch);
        let Evidence::Spectrum { a, b, .. } = claim.evidence else {
            panic!("expected spectrum evidence");
        };
        let re = |g: &[EigenGroup]| g.iter().map(|x| x.value.re).collect::<Vec<_>>();
        assert_eq!(re(&a), vec![2.0, 1.0]);
        assert_eq!(re(&b), vec![3.0, 1.0]);
    }

    #[test]
    fn column_side_refinement_leaves_rows_alone() {
        // m = 2, n = 3: rows [2], cols [3]; the single rectangular cell violates
        let a = CMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (u, v) = (random_unitary(&mut rng, 2), random_unitary(&mut rng, 3));
        let b = &(&u * &a) * &v.adjoint();
        let coll = PairCollection::new(vec![(a, b)]).unwrap();
        let (rows, cols) = (st(&[2]), st(&[3]));
        let t = Trigger::Structural(Violation {
            kind: ViolationKind::RectangularNonzero,
            at: CellRef { l: 0, i: 0, j: 0 },
        });
        let sel = select(&coll, &rows, &cols, Mode::Sueq, &t);
        assert_eq!(sel.kind, SKind::GramRight);
        let Equivalent::Refined { step, .. } = build_equivalent_problem(&coll, &rows, &cols, &t, sel, &tol()).unwrap()
        else {
            panic!("expected refinement");
        };
        assert_eq!(step.rows_after, rows);
        assert_eq!(step.cols_after, st(&[2, 1]));
    }

    #[test]
    fn empty_trace_composition_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_unitary(&mut rng, 3);
        let (got, v) = compose_witness(&u, None, &[]);
        assert_eq!(got, u);
        assert!(v.is_none());
    }

    #[test]
    fn per_step_witness_relation_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = random_unitary(&mut rng, 4);
        let a1 = &(&w * &CMatrix::real_diagonal(&[3.0, 1.0, 1.0, -2.0])) * &w.adjoint();
        let a2 = gaussian_matrix(&mut rng, 4, 4);
        let u = random_unitary(&mut rng, 4);
        let conj = |m: &CMatrix| &(&u * m) * &u.adjoint();
        let coll = PairCollection::new(vec![(a1.clone(), conj(&a1)), (a2.clone(), conj(&a2))]).unwrap();
        let whole = st(&[4]);
        let t = diag_trigger();
        let sel = select(&coll, &whole, &whole, Mode::Sus, &t);
        let Equivalent::Refined { coll: next, step } =
            build_equivalent_problem(&coll, &whole, &whole, &t, sel, &tol()).unwrap()
        else {
            panic!("expected refinement");
        };
        // Û = Z·U·Y* solves the equivalent problem
        let y = &step.y_block;
        let z = &step.z_block;
        let u_hat = &(z * &u) * &y.adjoint();
        for (a, b) in next.pairs() {
            let r = (&(&(&u_hat * a) * &u_hat.adjoint()) - b).frobenius_norm();
            assert!(r < 1e-10 * (1.0 + a.frobenius_norm()), "residual {r}");
        }
        let (back, _) = compose_witness(&u_hat, None, std::slice::from_ref(&step));
        assert!((&back - &u).frobenius_norm() < 1e-10);
    }
}
