//! Pre-Solution and Solution form checks.
//!
//! Cells are scanned in a fixed order (pair `l`, then row block `i`, then
//! column block `j`; A before B inside a cell). The first failing cell decides
//! the report: an A-side failure is a [`Violation`] to refine on, a B-side-only
//! failure or a scalar disagreement is a mismatch claim.

use serde::{Deserialize, Serialize};

use crate::blocking::{Mode, PartitionView, Side};
use crate::certificate::{Evidence, MismatchKind};
use crate::graph::{pr_paths, InducedGraph, PathProducts, PrPaths, VertexPartition};
use crate::linalg::{
    is_multiple_of_identity, is_multiple_of_unitary, is_zero, scalars_agree, CMatrix, Tolerances, C64,
};
use crate::one_based;

/// Cell `(i, j)` of pair `l`; serialized 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    #[serde(with = "one_based")]
    pub l: usize,
    #[serde(with = "one_based")]
    pub i: usize,
    #[serde(with = "one_based")]
    pub j: usize,
}

impl std::fmt::Display for CellRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(l={}, {}, {})", self.l + 1, self.i + 1, self.j + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DiagonalNotIdentityMultiple,
    RectangularNonzero,
    SquareNotUnitaryMultiple,
    PrNotIdentityMultiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub at: CellRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchClaim {
    pub kind: MismatchKind,
    pub at: CellRef,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEntry {
    pub at: CellRef,
    pub value: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub at: CellRef,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InForm {
    /// `α` of every diagonal block (similarity mode only), in scan order.
    pub diag_scalars: Vec<ScalarEntry>,
    /// `r` of every square edge-position block, zero blocks included, in scan order.
    pub unitary_scales: Vec<ScaleEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreSolutionReport {
    InForm(InForm),
    Violation(Violation),
    Mismatch(MismatchClaim),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolutionReport {
    SolutionForm { betas: Vec<ScalarEntry> },
    Violation {
        violation: Violation,
        pr_a: CMatrix,
        pr_b: CMatrix,
        paths: PrPaths,
    },
    Mismatch(MismatchClaim),
}

enum Cell {
    Pass,
    Scalar(C64),
    Scale(f64),
    Violation(ViolationKind),
    Mismatch(MismatchKind, Evidence),
}

/// Classifies one cell of one pair; shared with the certificate checker.
fn classify_cell(view: &PartitionView, mode: Mode, l: usize, i: usize, j: usize, tol: &Tolerances) -> Cell {
    let a = view.block(l, Side::A, i, j);
    let b = view.block(l, Side::B, i, j);
    let (na, nb) = (view.parent_norm(l, Side::A), view.parent_norm(l, Side::B));
    if !view.is_square_cell(i, j) {
        if !is_zero(a, tol, na) {
            return Cell::Violation(ViolationKind::RectangularNonzero);
        }
        if !is_zero(b, tol, nb) {
            return Cell::Mismatch(MismatchKind::ZeroPatternMismatch, zero_pattern(a, b));
        }
        return Cell::Pass;
    }
    if mode == Mode::Sus && i == j {
        let Some(alpha) = is_multiple_of_identity(a, tol) else {
            return Cell::Violation(ViolationKind::DiagonalNotIdentityMultiple);
        };
        let Some(beta) = is_multiple_of_identity(b, tol) else {
            return Cell::Mismatch(
                MismatchKind::StructureMismatch,
                Evidence::BNotIdentityMultiple {
                    residual: identity_residual(b),
                },
            );
        };
        if !scalars_agree(alpha, beta, tol) {
            return Cell::Mismatch(MismatchKind::ScalarMismatch, Evidence::DiagonalScalar { a: alpha, b: beta });
        }
        return Cell::Scalar(alpha);
    }
    let a_zero = is_zero(a, tol, na);
    let b_zero = is_zero(b, tol, nb);
    if a_zero {
        if !b_zero {
            return Cell::Mismatch(MismatchKind::ZeroPatternMismatch, zero_pattern(a, b));
        }
        return Cell::Scale(0.0);
    }
    let Some(ra) = is_multiple_of_unitary(a, tol) else {
        return Cell::Violation(ViolationKind::SquareNotUnitaryMultiple);
    };
    if b_zero {
        return Cell::Mismatch(MismatchKind::ZeroPatternMismatch, zero_pattern(a, b));
    }
    let Some(rb) = is_multiple_of_unitary(b, tol) else {
        return Cell::Mismatch(MismatchKind::StructureMismatch, Evidence::BNotUnitaryMultiple);
    };
    if !scalars_agree(C64::new(ra, 0.0), C64::new(rb, 0.0), tol) {
        return Cell::Mismatch(MismatchKind::ScalarMismatch, Evidence::UnitaryScale { a: ra, b: rb });
    }
    Cell::Scale(ra)
}

fn zero_pattern(a: &CMatrix, b: &CMatrix) -> Evidence {
    Evidence::ZeroPattern {
        a_norm: a.frobenius_norm(),
        b_norm: b.frobenius_norm(),
    }
}

pub(crate) fn identity_residual(m: &CMatrix) -> f64 {
    let alpha = m.trace() / m.rows() as f64;
    (m - &CMatrix::scalar(m.rows(), alpha)).frobenius_norm()
}

pub fn check_presolution(view: &PartitionView, mode: Mode, tol: &Tolerances) -> PreSolutionReport {
    let mut form = InForm::default();
    for l in 0..view.p() {
        for i in 0..view.rows().len() {
            for j in 0..view.cols().len() {
                let at = CellRef { l, i, j };
                match classify_cell(view, mode, l, i, j, tol) {
                    Cell::Pass => {}
                    Cell::Scalar(value) => form.diag_scalars.push(ScalarEntry { at, value }),
                    Cell::Scale(value) => form.unitary_scales.push(ScaleEntry { at, value }),
                    Cell::Violation(kind) => return PreSolutionReport::Violation(Violation { kind, at }),
                    Cell::Mismatch(kind, evidence) => {
                        return PreSolutionReport::Mismatch(MismatchClaim { kind, at, evidence })
                    }
                }
            }
        }
    }
    PreSolutionReport::InForm(form)
}

pub fn check_solution_form(
    g: &InducedGraph,
    part: &VertexPartition,
    products: &PathProducts,
    tol: &Tolerances,
) -> SolutionReport {
    let mut betas = Vec::with_capacity(products.pr.len());
    for entry in &products.pr {
        let Some(beta_a) = is_multiple_of_identity(&entry.a, tol) else {
            return SolutionReport::Violation {
                violation: Violation {
                    kind: ViolationKind::PrNotIdentityMultiple,
                    at: entry.at,
                },
                pr_a: entry.a.clone(),
                pr_b: entry.b.clone(),
                paths: pr_paths(g, part, entry.at),
            };
        };
        let Some(beta_b) = is_multiple_of_identity(&entry.b, tol) else {
            return SolutionReport::Mismatch(MismatchClaim {
                kind: MismatchKind::StructureMismatch,
                at: entry.at,
                evidence: Evidence::PrBNotIdentityMultiple {
                    residual: identity_residual(&entry.b),
                    paths: pr_paths(g, part, entry.at),
                },
            });
        };
        if !scalars_agree(beta_a, beta_b, tol) {
            return SolutionReport::Mismatch(MismatchClaim {
                kind: MismatchKind::ScalarMismatch,
                at: entry.at,
                evidence: Evidence::PrScalar {
                    a: beta_a,
                    b: beta_b,
                    paths: pr_paths(g, part, entry.at),
                },
            });
        }
        betas.push(ScalarEntry {
            at: entry.at,
            value: beta_a,
        });
    }
    SolutionReport::SolutionForm { betas }
}
