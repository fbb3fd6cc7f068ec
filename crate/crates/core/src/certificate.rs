//! Non-similarity certificates and an independent checker.
//!
//! A certificate carries every refinement step the solver took (with the
//! block diagonalizers it used) plus the final disagreeing quantity. The
//! checker replays the steps on the raw instance, confirming each one is a
//! legitimate equivalent-problem transformation, then re-evaluates the claim
//! with the matrix predicates alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocking::{BlockStructure, Mode, PairCollection};
use crate::graph::{PrPaths, VertexKind};
use crate::linalg::{
    is_multiple_of_identity, is_multiple_of_unitary, is_zero, scalars_agree, CMatrix, EigenGroup, Tolerances, C64,
};
use crate::one_based;
use crate::refine::{apply_step, decompose, spectra_match, spectrum_threshold, RefinementStep, SKind, StepSide};
use crate::structure::{CellRef, MismatchClaim};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchKind {
    ScalarMismatch,
    ZeroPatternMismatch,
    EigenvalueMismatch,
    /// The A-side block has a structure (identity or unitary multiple) that
    /// the B-side block lacks.
    StructureMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    ZeroPattern {
        a_norm: f64,
        b_norm: f64,
    },
    DiagonalScalar {
        a: C64,
        b: C64,
    },
    UnitaryScale {
        a: f64,
        b: f64,
    },
    BNotIdentityMultiple {
        residual: f64,
    },
    BNotUnitaryMultiple,
    PrScalar {
        a: C64,
        b: C64,
        paths: PrPaths,
    },
    PrBNotIdentityMultiple {
        residual: f64,
        paths: PrPaths,
    },
    Spectrum {
        source: SKind,
        side: StepSide,
        #[serde(with = "one_based")]
        block: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        paths: Option<PrPaths>,
        a: Vec<EigenGroup>,
        b: Vec<EigenGroup>,
    },
}

impl Evidence {
    fn expected_kind(&self) -> MismatchKind {
        match self {
            Evidence::ZeroPattern { .. } => MismatchKind::ZeroPatternMismatch,
            Evidence::DiagonalScalar { .. } | Evidence::UnitaryScale { .. } | Evidence::PrScalar { .. } => {
                MismatchKind::ScalarMismatch
            }
            Evidence::BNotIdentityMultiple { .. }
            | Evidence::BNotUnitaryMultiple
            | Evidence::PrBNotIdentityMultiple { .. } => MismatchKind::StructureMismatch,
            Evidence::Spectrum { .. } => MismatchKind::EigenvalueMismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchCertificate {
    pub mode: Mode,
    pub kind: MismatchKind,
    pub at: CellRef,
    pub evidence: Evidence,
    /// Block structures in force when the claim was made.
    pub rows: BlockStructure,
    pub cols: BlockStructure,
    pub steps: Vec<RefinementStep>,
}

impl MismatchCertificate {
    pub fn new(
        mode: Mode,
        claim: MismatchClaim,
        steps: Vec<RefinementStep>,
        rows: BlockStructure,
        cols: BlockStructure,
    ) -> Self {
        MismatchCertificate {
            mode,
            kind: claim.kind,
            at: claim.at,
            evidence: claim.evidence,
            rows,
            cols,
            steps,
        }
    }

    /// One-line human-readable reason.
    pub fn summary(&self) -> String {
        let at = self.at;
        match &self.evidence {
            Evidence::ZeroPattern { a_norm, b_norm } => {
                format!("zero pattern differs at block {at}: |A| = {a_norm:.6e}, |B| = {b_norm:.6e}")
            }
            Evidence::DiagonalScalar { a, b } => {
                format!("diagonal scalars differ at block {at}: {} vs {}", fmt_c(*a), fmt_c(*b))
            }
            Evidence::UnitaryScale { a, b } => format!("unitary scales differ at block {at}: {a:.6} vs {b:.6}"),
            Evidence::BNotIdentityMultiple { residual } => format!(
                "B block {at} is not a multiple of identity (residual {residual:.3e}) while the A block is"
            ),
            Evidence::BNotUnitaryMultiple => {
                format!("B block {at} is not a multiple of a unitary while the A block is")
            }
            Evidence::PrScalar { a, b, .. } => {
                format!("path products differ at block {at}: {} vs {}", fmt_c(*a), fmt_c(*b))
            }
            Evidence::PrBNotIdentityMultiple { residual, .. } => format!(
                "B path product at {at} is not a multiple of identity (residual {residual:.3e}) while the A one is"
            ),
            Evidence::Spectrum { source, a, b, .. } => format!(
                "eigenvalue mismatch at block {at} ({source:?}): [{}] vs [{}]",
                fmt_groups(a),
                fmt_groups(b)
            ),
        }
    }
}

fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}

fn fmt_groups(groups: &[EigenGroup]) -> String {
    groups
        .iter()
        .map(|g| {
            let v = C64::new(round_display(g.value.re), round_display(g.value.im));
            if g.multiplicity == 1 {
                fmt_c(v)
            } else {
                format!("{} (x{})", fmt_c(v), g.multiplicity)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn round_display(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("certificate does not apply to this instance: {0}")]
    Inapplicable(String),
    #[error("refinement step {step} is invalid: {reason}")]
    InvalidStep { step: usize, reason: String },
    #[error("claim refuted: {0}")]
    Refuted(String),
}

type Check<T = ()> = std::result::Result<T, String>;

/// Working state of the replay.
struct Replay<'a> {
    mode: Mode,
    coll: PairCollection,
    rows: BlockStructure,
    cols: BlockStructure,
    tol: &'a Tolerances,
}

impl Replay<'_> {
    fn block(&self, l: usize, b_side: bool, i: usize, j: usize) -> Check<CMatrix> {
        if l >= self.coll.p() || i >= self.rows.len() || j >= self.cols.len() {
            return Err(format!("cell (l={}, {}, {}) is out of range", l + 1, i + 1, j + 1));
        }
        let m = if b_side { self.coll.b(l) } else { self.coll.a(l) };
        Ok(m.submatrix(self.rows.offset(i), self.rows.size(i), self.cols.offset(j), self.cols.size(j)))
    }

    fn cell(&self, at: CellRef) -> Check<(CMatrix, CMatrix)> {
        Ok((self.block(at.l, false, at.i, at.j)?, self.block(at.l, true, at.i, at.j)?))
    }

    fn row_vertex(&self, i: usize) -> (VertexKind, usize) {
        match self.mode {
            Mode::Sus => (VertexKind::Block, i),
            Mode::Sueq => (VertexKind::Row, i),
        }
    }

    fn col_vertex(&self, j: usize) -> (VertexKind, usize) {
        match self.mode {
            Mode::Sus => (VertexKind::Block, j),
            Mode::Sueq => (VertexKind::Col, j),
        }
    }

    fn vertex_size(&self, v: (VertexKind, usize)) -> Check<usize> {
        let (st, idx) = match v.0 {
            VertexKind::Col => (&self.cols, v.1),
            _ => (&self.rows, v.1),
        };
        if idx >= st.len() {
            return Err(format!("vertex {} out of range", idx + 1));
        }
        Ok(st.size(idx))
    }

    /// Path product and its inverse for one side, walking the recorded edges.
    fn walk(
        &self,
        start: (VertexKind, usize),
        edges: &[crate::graph::PathEdge],
        b_side: bool,
    ) -> Check<((VertexKind, usize), CMatrix, CMatrix)> {
        let k = self.vertex_size(start)?;
        let (mut p, mut p_inv) = (CMatrix::identity(k), CMatrix::identity(k));
        let mut cur = start;
        for e in edges {
            if self.mode == Mode::Sus && e.i == e.j {
                return Err("a diagonal block cannot be a path edge".into());
            }
            let (rv, cv) = (self.row_vertex(e.i), self.col_vertex(e.j));
            let w = self.block(e.l, b_side, e.i, e.j)?;
            if !w.is_square() {
                return Err("path edge on a rectangular block".into());
            }
            let parent = if b_side { self.coll.b(e.l) } else { self.coll.a(e.l) }.frobenius_norm();
            let r = match is_multiple_of_unitary(&w, self.tol) {
                Some(r) if r > 0.0 && !is_zero(&w, self.tol, parent) => r,
                _ => return Err("path edge is not a nonzero multiple of a unitary".into()),
            };
            let w_inv = w.adjoint().scale_real(1.0 / r);
            let (from, to) = if e.inverse { (cv, rv) } else { (rv, cv) };
            if cur != from {
                return Err("recorded path is not connected".into());
            }
            if e.inverse {
                p = p.matmul(&w_inv).map_err(|x| x.to_string())?;
                p_inv = w.matmul(&p_inv).map_err(|x| x.to_string())?;
            } else {
                p = p.matmul(&w).map_err(|x| x.to_string())?;
                p_inv = w_inv.matmul(&p_inv).map_err(|x| x.to_string())?;
            }
            cur = to;
        }
        Ok((cur, p, p_inv))
    }

    fn pr(&self, at: CellRef, paths: &PrPaths) -> Check<(CMatrix, CMatrix)> {
        let rep = (paths.rep.kind, paths.rep.index);
        let expected_kind = match self.mode {
            Mode::Sus => rep.0 == VertexKind::Block,
            Mode::Sueq => rep.0 != VertexKind::Block,
        };
        if !expected_kind {
            return Err("representative vertex has the wrong kind for this mode".into());
        }
        let (a, b) = self.cell(at)?;
        let mut out = Vec::with_capacity(2);
        for (b_side, x) in [(false, &a), (true, &b)] {
            let (end_r, p_r, _) = self.walk(rep, &paths.to_row, b_side)?;
            let (end_c, _, p_c_inv) = self.walk(rep, &paths.to_col, b_side)?;
            if end_r != self.row_vertex(at.i) || end_c != self.col_vertex(at.j) {
                return Err("recorded paths do not end at the cell's vertices".into());
            }
            out.push((&p_r * x) * &p_c_inv);
        }
        let pb = out.pop().expect("two sides");
        let pa = out.pop().expect("two sides");
        Ok((pa, pb))
    }

    /// Recomputes the `(S, R)` pair a step or spectrum claim refers to and
    /// checks that the claimed side and block follow from it.
    fn s_and_r(
        &self,
        at: CellRef,
        source: SKind,
        side: StepSide,
        block: usize,
        paths: Option<&PrPaths>,
    ) -> Check<(CMatrix, CMatrix)> {
        let expect_side = |natural: StepSide| -> Check {
            let want = if self.mode == Mode::Sus { StepSide::Both } else { natural };
            if side != want {
                return Err(format!("side {side:?} does not match source {source:?}"));
            }
            Ok(())
        };
        match source {
            SKind::HermitianReal | SKind::HermitianImag => {
                if self.mode != Mode::Sus || at.i != at.j || block != at.i {
                    return Err("Hermitian-part source needs a diagonal block in similarity mode".into());
                }
                expect_side(StepSide::Both)?;
                let (a, b) = self.cell(at)?;
                if !a.is_square() {
                    return Err("diagonal block is not square".into());
                }
                Ok(if source == SKind::HermitianReal {
                    (a.hermitian_part(), b.hermitian_part())
                } else {
                    (a.skew_part_over_i(), b.skew_part_over_i())
                })
            }
            SKind::GramLeft => {
                expect_side(StepSide::Row)?;
                if block != at.i {
                    return Err("left Gram refines the row block of its cell".into());
                }
                let (a, b) = self.cell(at)?;
                Ok((a.mul_adjoint(&a), b.mul_adjoint(&b)))
            }
            SKind::GramRight => {
                expect_side(StepSide::Col)?;
                if block != at.j {
                    return Err("right Gram refines the column block of its cell".into());
                }
                let (a, b) = self.cell(at)?;
                Ok((a.adjoint_mul(&a), b.adjoint_mul(&b)))
            }
            SKind::PrNormal => {
                let paths = paths.ok_or("path-product source without paths")?;
                let natural = if paths.rep.kind == VertexKind::Col { StepSide::Col } else { StepSide::Row };
                expect_side(natural)?;
                if block != paths.rep.index {
                    return Err("path-product step must refine the representative block".into());
                }
                self.pr(at, paths)
            }
        }
    }

    fn replay_step(&mut self, step: &RefinementStep) -> Check {
        if step.rows_before != self.rows || step.cols_before != self.cols {
            return Err("recorded structures do not match the replayed state".into());
        }
        let (s, r) = self.s_and_r(step.violation.at, step.s_kind, step.side, step.block, step.paths.as_ref())?;
        let k = s.rows();
        let tol = self.tol;
        for (name, x) in [("Y", &step.y_block), ("Z", &step.z_block)] {
            if x.rows() != k || x.cols() != k {
                return Err(format!("{name} has the wrong size"));
            }
            if x.unitarity_defect() > tol.group * k as f64 {
                return Err(format!("{name} is not unitary"));
            }
        }
        if step.eigs_a.len() < 2 {
            return Err("a refinement needs at least two eigenvalue groups".into());
        }
        let sep = tol.cmp * (1.0 + s.frobenius_norm());
        for (x, gx) in step.eigs_a.iter().enumerate() {
            for gy in &step.eigs_a[x + 1..] {
                if (gx.value - gy.value).norm() <= sep {
                    return Err("eigenvalue groups are not separated".into());
                }
            }
        }
        if !spectra_match(&step.eigs_a, &step.eigs_b, spectrum_threshold(&s, &r, tol)) {
            return Err("A and B spectra of the step differ".into());
        }
        for (name, m, y, groups) in [("S", &s, &step.y_block, &step.eigs_a), ("R", &r, &step.z_block, &step.eigs_b)] {
            let values: Vec<C64> = groups
                .iter()
                .flat_map(|g| std::iter::repeat_n(g.value, g.multiplicity))
                .collect();
            if values.len() != k {
                return Err(format!("multiplicities of {name} do not sum to the block size"));
            }
            let d = (y * m).mul_adjoint(y);
            let residual = (&d - &CMatrix::diagonal(&values)).frobenius_norm();
            if residual > tol.verify * (1.0 + m.frobenius_norm()) {
                return Err(format!("diagonalizer does not diagonalize {name} (residual {residual:.3e})"));
            }
        }
        let mults: Vec<usize> = step.eigs_a.iter().map(|g| g.multiplicity).collect();
        let refine = |st: &BlockStructure| st.refine(step.block, &mults).map_err(|e| e.to_string());
        let (rows, cols) = match step.side {
            StepSide::Both => (refine(&self.rows)?, refine(&self.cols)?),
            StepSide::Row => (refine(&self.rows)?, self.cols.clone()),
            StepSide::Col => (self.rows.clone(), refine(&self.cols)?),
        };
        if rows != step.rows_after || cols != step.cols_after {
            return Err("recorded refined structures are inconsistent".into());
        }
        apply_step(&mut self.coll, step);
        self.rows = rows;
        self.cols = cols;
        Ok(())
    }

    fn check_claim(&self, cert: &MismatchCertificate) -> Check {
        let tol = self.tol;
        let at = cert.at;
        let (a, b) = self.cell(at)?;
        let (na, nb) = (self.coll.a(at.l).frobenius_norm(), self.coll.b(at.l).frobenius_norm());
        let close = |x: f64, y: f64| (x - y).abs() <= tol.cmp * (1.0 + x.abs().max(y.abs()));
        match &cert.evidence {
            Evidence::ZeroPattern { a_norm, b_norm } => {
                if !close(*a_norm, a.frobenius_norm()) || !close(*b_norm, b.frobenius_norm()) {
                    return Err("recorded block norms do not match the instance".into());
                }
                if is_zero(&a, tol, na) == is_zero(&b, tol, nb) {
                    return Err("both blocks are zero or both are nonzero".into());
                }
            }
            Evidence::DiagonalScalar { a: ca, b: cb } => {
                if self.mode != Mode::Sus || at.i != at.j {
                    return Err("diagonal scalar claim on a non-diagonal block".into());
                }
                let (Some(alpha), Some(beta)) = (is_multiple_of_identity(&a, tol), is_multiple_of_identity(&b, tol))
                else {
                    return Err("blocks are not identity multiples".into());
                };
                if !scalars_agree(alpha, *ca, tol) || !scalars_agree(beta, *cb, tol) {
                    return Err("recorded scalars do not match the instance".into());
                }
                if scalars_agree(alpha, beta, tol) {
                    return Err("diagonal scalars agree".into());
                }
            }
            Evidence::UnitaryScale { a: ra, b: rb } => {
                if !a.is_square() {
                    return Err("unitary scale claim on a rectangular block".into());
                }
                let (Some(x), Some(y)) = (is_multiple_of_unitary(&a, tol), is_multiple_of_unitary(&b, tol)) else {
                    return Err("blocks are not unitary multiples".into());
                };
                if !close(x, *ra) || !close(y, *rb) {
                    return Err("recorded scales do not match the instance".into());
                }
                if close(x, y) {
                    return Err("unitary scales agree".into());
                }
            }
            Evidence::BNotIdentityMultiple { .. } => {
                if self.mode != Mode::Sus || at.i != at.j || !a.is_square() {
                    return Err("identity claim on a non-diagonal block".into());
                }
                if is_multiple_of_identity(&a, tol).is_none() || is_multiple_of_identity(&b, tol).is_some() {
                    return Err("A block is not an identity multiple or B block is".into());
                }
            }
            Evidence::BNotUnitaryMultiple => {
                if !a.is_square() {
                    return Err("unitary claim on a rectangular block".into());
                }
                if is_multiple_of_unitary(&a, tol).is_none()
                    || is_zero(&b, tol, nb)
                    || is_multiple_of_unitary(&b, tol).is_some()
                {
                    return Err("A block is not a unitary multiple or B block is".into());
                }
            }
            Evidence::PrScalar { a: ca, b: cb, paths } => {
                let (pa, pb) = self.pr(at, paths)?;
                let (Some(x), Some(y)) = (is_multiple_of_identity(&pa, tol), is_multiple_of_identity(&pb, tol)) else {
                    return Err("path products are not identity multiples".into());
                };
                if !scalars_agree(x, *ca, tol) || !scalars_agree(y, *cb, tol) {
                    return Err("recorded path scalars do not match the instance".into());
                }
                if scalars_agree(x, y, tol) {
                    return Err("path scalars agree".into());
                }
            }
            Evidence::PrBNotIdentityMultiple { paths, .. } => {
                let (pa, pb) = self.pr(at, paths)?;
                if is_multiple_of_identity(&pa, tol).is_none() || is_multiple_of_identity(&pb, tol).is_some() {
                    return Err("A path product is not an identity multiple or B one is".into());
                }
            }
            Evidence::Spectrum {
                source,
                side,
                block,
                paths,
                a: ga,
                b: gb,
            } => {
                let (s, r) = self.s_and_r(at, *source, *side, *block, paths.as_ref())?;
                let ds = decompose(&s, *source, tol).map_err(|e| e.to_string())?;
                let dr = decompose(&r, *source, tol).map_err(|e| e.to_string())?;
                let thr = spectrum_threshold(&s, &r, tol);
                let ok_a = spectra_match(&ds.groups, ga, thr) || same_values(&ds.eigenvalues, ga, thr);
                let ok_b = spectra_match(&dr.groups, gb, thr) || same_values(&dr.eigenvalues, gb, thr);
                if !ok_a || !ok_b {
                    return Err("recorded spectra do not match the instance".into());
                }
                if same_multiset(&ds.eigenvalues, &dr.eigenvalues, thr) {
                    return Err("spectra of S and R agree".into());
                }
            }
        }
        Ok(())
    }
}

fn expand(groups: &[EigenGroup]) -> Vec<C64> {
    groups
        .iter()
        .flat_map(|g| std::iter::repeat_n(g.value, g.multiplicity))
        .collect()
}

/// Claimed groups reproduce the recomputed eigenvalue list entrywise.
fn same_values(values: &[C64], groups: &[EigenGroup], thr: f64) -> bool {
    let claimed = expand(groups);
    claimed.len() == values.len() && claimed.iter().zip(values).all(|(x, y)| (x - y).norm() <= thr)
}

/// Multiset equality of two canonically ordered eigenvalue lists.
fn same_multiset(a: &[C64], b: &[C64], thr: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= thr)
}

/// Replays `cert` against the raw instance and re-evaluates its claim.
pub fn check_certificate(
    coll: &PairCollection,
    cert: &MismatchCertificate,
    tol: &Tolerances,
) -> Result<(), CertificateError> {
    if cert.mode == Mode::Sus && !coll.is_square() {
        return Err(CertificateError::Inapplicable("similarity certificate for a rectangular instance".into()));
    }
    if cert.evidence.expected_kind() != cert.kind {
        return Err(CertificateError::Refuted(format!(
            "kind {:?} does not fit the recorded evidence",
            cert.kind
        )));
    }
    let mut replay = Replay {
        mode: cert.mode,
        coll: coll.clone(),
        rows: BlockStructure::whole(coll.m()),
        cols: BlockStructure::whole(coll.n()),
        tol,
    };
    for (k, step) in cert.steps.iter().enumerate() {
        replay
            .replay_step(step)
            .map_err(|reason| CertificateError::InvalidStep { step: k + 1, reason })?;
    }
    if replay.rows != cert.rows || replay.cols != cert.cols {
        return Err(CertificateError::Refuted("final structures do not match the replay".into()));
    }
    replay.check_claim(cert).map_err(CertificateError::Refuted)
}
