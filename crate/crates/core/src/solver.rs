//! The iteration loop for both problems.

use serde::{Deserialize, Serialize};

use crate::blocking::{embed_block_diagonal, induced_partition, BlockStructure, Mode, PairCollection};
use crate::certificate::MismatchCertificate;
use crate::error::{Error, Result};
use crate::graph::{build_induced_graph, partition_vertices, path_products, InducedGraph, PathProducts, VertexPartition};
use crate::linalg::{CMatrix, LinalgError, Tolerances};
use crate::refine::{build_equivalent_problem, compose_witness, select_s_and_r, Equivalent, RefinementStep, Trigger};
use crate::structure::{check_presolution, check_solution_form, MismatchClaim, PreSolutionReport, SolutionReport};

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Solved {
        u: CMatrix,
        v: Option<CMatrix>,
        residual: f64,
        trace: Vec<RefinementStep>,
    },
    NotSimilar {
        certificate: Box<MismatchCertificate>,
        trace: Vec<RefinementStep>,
    },
    VerificationFailed {
        u: CMatrix,
        v: Option<CMatrix>,
        residual: f64,
        trace: Vec<RefinementStep>,
    },
}

impl SolveOutcome {
    pub fn trace(&self) -> &[RefinementStep] {
        match self {
            SolveOutcome::Solved { trace, .. }
            | SolveOutcome::NotSimilar { trace, .. }
            | SolveOutcome::VerificationFailed { trace, .. } => trace,
        }
    }

    pub fn is_solved(&self) -> bool {
        matches!(self, SolveOutcome::Solved { .. })
    }

    pub fn is_not_similar(&self) -> bool {
        matches!(self, SolveOutcome::NotSimilar { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SolveOutcome::Solved { .. } => "solved",
            SolveOutcome::NotSimilar { .. } => "not_similar",
            SolveOutcome::VerificationFailed { .. } => "verification_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessCheck {
    /// `max_l ‖U·A_l·V* − B_l‖_F / (1 + ‖A_l‖_F)`.
    pub residual: f64,
    /// `max(‖U·U* − I‖_F, ‖V·V* − I‖_F)`.
    pub unitarity: f64,
}

impl WitnessCheck {
    pub fn passes(&self, dim: usize, tol: &Tolerances) -> bool {
        self.residual <= tol.verify && self.unitarity <= tol.verify * dim as f64
    }
}

pub fn verify_witness(coll: &PairCollection, u: &CMatrix, v: Option<&CMatrix>) -> Result<WitnessCheck> {
    let v = v.unwrap_or(u);
    if u.rows() != coll.m() || u.cols() != coll.m() || v.rows() != coll.n() || v.cols() != coll.n() {
        return Err(Error::DimensionMismatch(format!(
            "witness shapes {}x{} / {}x{} do not fit a {}x{} collection",
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols(),
            coll.m(),
            coll.n()
        )));
    }
    let mut residual: f64 = 0.0;
    for (a, b) in coll.pairs() {
        let uav = (u * a).mul_adjoint(v);
        residual = residual.max((&uav - b).frobenius_norm() / (1.0 + a.frobenius_norm()));
    }
    Ok(WitnessCheck {
        residual,
        unitarity: u.unitarity_defect().max(v.unitarity_defect()),
    })
}

/// `U^sol` (and `V^sol`) with every class representative fixed to the identity.
pub fn build_usol(
    g: &InducedGraph,
    part: &VertexPartition,
    prods: &PathProducts,
    rows: &BlockStructure,
    cols: &BlockStructure,
) -> Result<(CMatrix, Option<CMatrix>)> {
    let block = |v: usize| -> Result<CMatrix> { Ok(prods.b_inverse(v).matmul(&prods.a_path[v])?) };
    debug_assert!(part
        .classes()
        .iter()
        .all(|c| prods.a_path[c[0]] == CMatrix::identity(g.vertex_size(c[0]))));
    match g.mode() {
        Mode::Sus => {
            let blocks = (0..rows.len()).map(block).collect::<Result<Vec<_>>>()?;
            Ok((embed_block_diagonal(&blocks, rows)?, None))
        }
        Mode::Sueq => {
            let ub = (0..rows.len()).map(|i| block(g.row_vertex(i))).collect::<Result<Vec<_>>>()?;
            let vb = (0..cols.len()).map(|j| block(g.col_vertex(j))).collect::<Result<Vec<_>>>()?;
            Ok((embed_block_diagonal(&ub, rows)?, Some(embed_block_diagonal(&vb, cols)?)))
        }
    }
}

pub fn solve_sus(coll: &PairCollection, tol: &Tolerances) -> Result<SolveOutcome> {
    if !coll.is_square() {
        return Err(Error::InvalidInstance(format!(
            "similarity needs square matrices, got {}x{}",
            coll.m(),
            coll.n()
        )));
    }
    run(coll, Mode::Sus, tol)
}

pub fn solve_sueq(coll: &PairCollection, tol: &Tolerances) -> Result<SolveOutcome> {
    run(coll, Mode::Sueq, tol)
}

pub fn solve(coll: &PairCollection, mode: Mode, tol: &Tolerances) -> Result<SolveOutcome> {
    match mode {
        Mode::Sus => solve_sus(coll, tol),
        Mode::Sueq => solve_sueq(coll, tol),
    }
}

pub(crate) fn iteration_cap(mode: Mode, m: usize, n: usize) -> usize {
    match mode {
        Mode::Sus => n,
        Mode::Sueq => m + n,
    }
}

fn run(original: &PairCollection, mode: Mode, tol: &Tolerances) -> Result<SolveOutcome> {
    tol.validate().map_err(Error::InvalidInstance)?;
    let (m, n) = (original.m(), original.n());
    let cap = iteration_cap(mode, m, n);
    let mut coll = original.clone();
    let mut rows = BlockStructure::whole(m);
    let mut cols = BlockStructure::whole(n);
    let mut trace: Vec<RefinementStep> = Vec::new();

    let not_similar = |claim: MismatchClaim, trace: Vec<RefinementStep>, rows: BlockStructure, cols: BlockStructure| {
        SolveOutcome::NotSimilar {
            certificate: Box::new(MismatchCertificate::new(mode, claim, trace.clone(), rows, cols)),
            trace,
        }
    };

    loop {
        let view = induced_partition(&coll, &rows, &cols)?;
        let trigger = match check_presolution(&view, mode, tol) {
            PreSolutionReport::Mismatch(claim) => return Ok(not_similar(claim, trace, rows, cols)),
            PreSolutionReport::Violation(v) => Trigger::Structural(v),
            PreSolutionReport::InForm(_) => {
                let g = build_induced_graph(&view, mode, tol);
                let part = partition_vertices(&g);
                let prods = path_products(&view, &g, &part, tol)?;
                match check_solution_form(&g, &part, &prods, tol) {
                    SolutionReport::Mismatch(claim) => return Ok(not_similar(claim, trace, rows, cols)),
                    SolutionReport::Violation {
                        violation,
                        pr_a,
                        pr_b,
                        paths,
                    } => Trigger::Pr {
                        violation,
                        pr_a,
                        pr_b,
                        paths,
                    },
                    SolutionReport::SolutionForm { .. } => {
                        let (u_hat, v_hat) = build_usol(&g, &part, &prods, &rows, &cols)?;
                        let (u, v) = compose_witness(&u_hat, v_hat.as_ref(), &trace);
                        let check = verify_witness(original, &u, v.as_ref())?;
                        let dim = m.max(n);
                        return Ok(if check.passes(dim, tol) {
                            SolveOutcome::Solved {
                                u,
                                v,
                                residual: check.residual,
                                trace,
                            }
                        } else {
                            SolveOutcome::VerificationFailed {
                                u,
                                v,
                                residual: check.residual,
                                trace,
                            }
                        });
                    }
                }
            }
        };
        if trace.len() >= cap {
            return Err(Error::Linalg(LinalgError::NumericalFailure(format!(
                "no solution form after {cap} refinements"
            ))));
        }
        let sel = select_s_and_r(&view, mode, &trigger, tol)?;
        match build_equivalent_problem(&coll, &rows, &cols, &trigger, sel, tol)? {
            Equivalent::Mismatch(claim) => return Ok(not_similar(claim, trace, rows, cols)),
            Equivalent::Refined { coll: next, step } => {
                coll = next;
                rows = step.rows_after.clone();
                cols = step.cols_after.clone();
                trace.push(*step);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{gaussian_matrix, random_unitary};
    use crate::linalg::C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn identical_pairs_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian_matrix(&mut rng, 4, 4);
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let out = solve_sus(&coll, &tol()).unwrap();
        let SolveOutcome::Solved { residual, .. } = out else {
            panic!("expected solved, got {}", out.tag());
        };
        assert!(residual <= 1e-6);
    }

    #[test]
    fn permuted_diagonal_solves() {
        let coll = PairCollection::new(vec![(
            CMatrix::real_diagonal(&[1.0, 2.0]),
            CMatrix::real_diagonal(&[2.0, 1.0]),
        )])
        .unwrap();
        let out = solve_sus(&coll, &tol()).unwrap();
        let SolveOutcome::Solved { u, residual, .. } = out else {
            panic!("expected solved");
        };
        assert!(residual <= 1e-6);
        assert!(verify_witness(&coll, &u, None).unwrap().residual <= 1e-12);
    }

    #[test]
    fn scalar_chain_on_four_by_four() {
        // diagonal 1×1 case: edges (1,3) and (3,4), so u₄ follows from u₁·a₁₃·a₃₄·u₄* = b₁₃·b₃₄
        let mut a = CMatrix::real_diagonal(&[4.0, 3.0, 2.0, 1.0]);
        a[(0, 2)] = C64::new(0.5, 0.5);
        a[(2, 3)] = C64::new(-0.3, 0.2);
        let phases = [0.3, -1.1, 2.0, 0.7].map(|t| C64::from_polar(1.0, t));
        let u = CMatrix::diagonal(&phases);
        let b = &(&u * &a) * &u.adjoint();
        let coll = PairCollection::new(vec![(a.clone(), b.clone())]).unwrap();
        let st = BlockStructure::new(vec![1; 4]).unwrap();
        let view = induced_partition(&coll, &st, &st).unwrap();
        let g = build_induced_graph(&view, Mode::Sus, &tol());
        let part = partition_vertices(&g);
        assert_eq!(part.classes(), &[vec![0, 2, 3], vec![1]]);
        let prods = path_products(&view, &g, &part, &tol()).unwrap();
        let (got, _) = build_usol(&g, &part, &prods, &st, &st).unwrap();
        let lhs = got[(0, 0)] * a[(0, 2)] * a[(2, 3)] * got[(3, 3)].conj();
        assert!((lhs - b[(0, 2)] * b[(2, 3)]).norm() < 1e-12);
        assert!(verify_witness(&coll, &got, None).unwrap().residual < 1e-12);
        assert!(solve_sus(&coll, &tol()).unwrap().is_solved());
    }

    #[test]
    fn single_edge_usol() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (qa, qb) = (random_unitary(&mut rng, 2), random_unitary(&mut rng, 2));
        let mut a = CMatrix::identity(4);
        a.set_submatrix(0, 2, &qa.scale_real(2.0));
        let mut b = CMatrix::identity(4);
        b.set_submatrix(0, 2, &qb.scale_real(2.0));
        let coll = PairCollection::new(vec![(a, b)]).unwrap();
        let st = BlockStructure::new(vec![2, 2]).unwrap();
        let view = induced_partition(&coll, &st, &st).unwrap();
        let g = build_induced_graph(&view, Mode::Sus, &tol());
        let part = partition_vertices(&g);
        let prods = path_products(&view, &g, &part, &tol()).unwrap();
        let (u, _) = build_usol(&g, &part, &prods, &st, &st).unwrap();
        let expect = embed_block_diagonal(&[CMatrix::identity(2), &qb.adjoint() * &qa], &st).unwrap();
        assert!((&u - &expect).frobenius_norm() < 1e-12);
    }

    #[test]
    fn random_unitary_is_not_a_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = gaussian_matrix(&mut rng, 4, 4);
        let b = gaussian_matrix(&mut rng, 4, 4);
        let coll = PairCollection::new(vec![(a, b)]).unwrap();
        let q = random_unitary(&mut rng, 4);
        assert!(verify_witness(&coll, &q, None).unwrap().residual > 1e-2);
    }

    #[test]
    fn equivalence_with_equal_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian_matrix(&mut rng, 3, 5);
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let out = solve_sueq(&coll, &tol()).unwrap();
        assert!(out.is_solved(), "{}", out.tag());
        assert!(out.trace().len() <= 8);
    }

    #[test]
    fn rectangular_similarity_is_rejected() {
        let coll = PairCollection::from_single(vec![CMatrix::zeros(2, 3)]).unwrap();
        assert!(matches!(solve_sus(&coll, &tol()), Err(Error::InvalidInstance(_))));
    }
}
