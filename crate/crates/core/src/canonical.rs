//! Canonical features: the A-side-only iteration on a single collection,
//! recording at every step what the solver saw.

use serde::{Deserialize, Serialize};

use crate::blocking::{induced_partition, BlockStructure, Mode, PairCollection};
use crate::error::{Error, Result};
use crate::graph::{build_induced_graph, partition_vertices, path_products, InducedGraph, Vertex, VertexPartition};
use crate::linalg::{CMatrix, EigenGroup, LinalgError, Tolerances, C64};
use crate::refine::{build_equivalent_problem, select_s_and_r, Equivalent, Trigger};
use crate::structure::{
    check_presolution, check_solution_form, PreSolutionReport, ScalarEntry, ScaleEntry, SolutionReport, Violation,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureEvent {
    Violation(Violation),
    SolutionForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStep {
    pub structure: BlockStructure,
    pub event: FeatureEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<EigenGroup>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_scalars: Option<Vec<ScalarEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitary_scales: Option<Vec<ScaleEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<Vertex>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<ScalarEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFeatures {
    pub n: usize,
    pub p: usize,
    pub steps: Vec<FeatureStep>,
}

fn partition_record(g: &InducedGraph, part: &VertexPartition) -> Vec<Vec<Vertex>> {
    part.classes()
        .iter()
        .map(|c| c.iter().map(|&v| g.vertex(v)).collect())
        .collect()
}

pub fn extract_canonical_features(mats: &[CMatrix], tol: &Tolerances) -> Result<CanonicalFeatures> {
    let coll = PairCollection::from_single(mats.to_vec())?;
    if !coll.is_square() {
        return Err(Error::InvalidInstance(format!(
            "canonical features need square matrices, got {}x{}",
            coll.m(),
            coll.n()
        )));
    }
    let n = coll.n();
    let mut coll = coll;
    let mut st = BlockStructure::whole(n);
    let mut steps = Vec::new();
    loop {
        if steps.len() > n {
            return Err(Error::Linalg(LinalgError::NumericalFailure(format!(
                "no solution form after {n} refinements"
            ))));
        }
        let view = induced_partition(&coll, &st, &st)?;
        let mut record = FeatureStep {
            structure: st.clone(),
            event: FeatureEvent::SolutionForm,
            spectrum: None,
            diag_scalars: None,
            unitary_scales: None,
            partition: None,
            betas: None,
        };
        let trigger = match check_presolution(&view, Mode::Sus, tol) {
            PreSolutionReport::Mismatch(claim) => {
                return Err(Error::InternalInconsistency(format!(
                    "a collection compared with itself reported {:?}",
                    claim.kind
                )))
            }
            PreSolutionReport::Violation(v) => Trigger::Structural(v),
            PreSolutionReport::InForm(form) => {
                record.diag_scalars = Some(form.diag_scalars);
                record.unitary_scales = Some(form.unitary_scales);
                let g = build_induced_graph(&view, Mode::Sus, tol);
                let part = partition_vertices(&g);
                record.partition = Some(partition_record(&g, &part));
                let prods = path_products(&view, &g, &part, tol)?;
                match check_solution_form(&g, &part, &prods, tol) {
                    SolutionReport::SolutionForm { betas } => {
                        record.betas = Some(betas);
                        steps.push(record);
                        return Ok(CanonicalFeatures { n, p: coll.p(), steps });
                    }
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
                    SolutionReport::Mismatch(claim) => {
                        return Err(Error::InternalInconsistency(format!(
                            "a collection compared with itself reported {:?}",
                            claim.kind
                        )))
                    }
                }
            }
        };
        record.event = FeatureEvent::Violation(trigger.violation());
        let sel = select_s_and_r(&view, Mode::Sus, &trigger, tol)?;
        match build_equivalent_problem(&coll, &st, &st, &trigger, sel, tol)? {
            Equivalent::Refined { coll: next, step } => {
                record.spectrum = Some(step.eigs_a.clone());
                coll = next;
                st = step.rows_after.clone();
            }
            Equivalent::Mismatch(_) => {
                return Err(Error::InternalInconsistency(
                    "identical sides produced different spectra".into(),
                ))
            }
        }
        steps.push(record);
    }
}

fn close(a: C64, b: C64, tol: &Tolerances) -> bool {
    (a - b).norm() <= tol.group * (1.0 + a.norm().max(b.norm()))
}

/// First difference between two feature records, or `None` when they agree
/// (discrete data exactly, numbers within the grouping tolerance).
pub fn feature_difference(f1: &CanonicalFeatures, f2: &CanonicalFeatures, tol: &Tolerances) -> Option<String> {
    if f1.n != f2.n || f1.p != f2.p {
        return Some(format!("shapes differ: n={}, p={} vs n={}, p={}", f1.n, f1.p, f2.n, f2.p));
    }
    if f1.steps.len() != f2.steps.len() {
        return Some(format!("step counts differ: {} vs {}", f1.steps.len(), f2.steps.len()));
    }
    for (k, (s1, s2)) in f1.steps.iter().zip(&f2.steps).enumerate() {
        let step = k + 1;
        if s1.structure != s2.structure {
            return Some(format!("step {step}: structures {} vs {}", s1.structure, s2.structure));
        }
        if s1.event != s2.event {
            return Some(format!("step {step}: events {:?} vs {:?}", s1.event, s2.event));
        }
        if s1.partition != s2.partition {
            return Some(format!("step {step}: partitions differ"));
        }
        match (&s1.spectrum, &s2.spectrum) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                if a.len() != b.len()
                    || a
                        .iter()
                        .zip(b)
                        .any(|(x, y)| x.multiplicity != y.multiplicity || !close(x.value, y.value, tol))
                {
                    return Some(format!("step {step}: spectra differ"));
                }
            }
            _ => return Some(format!("step {step}: spectrum present on one side only")),
        }
        let scalars = |a: &Option<Vec<ScalarEntry>>, b: &Option<Vec<ScalarEntry>>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.at == y.at && close(x.value, y.value, tol))
            }
            _ => false,
        };
        if !scalars(&s1.diag_scalars, &s2.diag_scalars) {
            return Some(format!("step {step}: diagonal scalars differ"));
        }
        if !scalars(&s1.betas, &s2.betas) {
            return Some(format!("step {step}: path scalars differ"));
        }
        let scales_agree = match (&s1.unitary_scales, &s2.unitary_scales) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| {
                        x.at == y.at && close(C64::new(x.value, 0.0), C64::new(y.value, 0.0), tol)
                    })
            }
            _ => false,
        };
        if !scales_agree {
            return Some(format!("step {step}: unitary scales differ"));
        }
    }
    None
}

pub fn compare_features(f1: &CanonicalFeatures, f2: &CanonicalFeatures, tol: &Tolerances) -> bool {
    feature_difference(f1, f2, tol).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{gaussian_matrix, random_unitary};
    use crate::structure::{CellRef, ViolationKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn scalar_matrix_has_one_step() {
        let f = extract_canonical_features(&[CMatrix::scalar(3, C64::new(2.5, 0.0))], &tol()).unwrap();
        assert_eq!(f.steps.len(), 1);
        let s = &f.steps[0];
        assert_eq!(s.structure, BlockStructure::whole(3));
        assert_eq!(s.event, FeatureEvent::SolutionForm);
        assert_eq!(s.diag_scalars.as_ref().unwrap()[0].value, C64::new(2.5, 0.0));
    }

    #[test]
    fn diag_one_two_takes_two_steps() {
        let f = extract_canonical_features(&[CMatrix::real_diagonal(&[1.0, 2.0])], &tol()).unwrap();
        assert_eq!(f.steps.len(), 2);
        assert_eq!(f.steps[0].structure, BlockStructure::whole(2));
        assert_eq!(
            f.steps[0].event,
            FeatureEvent::Violation(Violation {
                kind: ViolationKind::DiagonalNotIdentityMultiple,
                at: CellRef { l: 0, i: 0, j: 0 },
            })
        );
        let spec: Vec<f64> = f.steps[0].spectrum.as_ref().unwrap().iter().map(|g| g.value.re).collect();
        assert_eq!(spec, vec![2.0, 1.0]);
        assert_eq!(f.steps[1].structure, BlockStructure::new(vec![1, 1]).unwrap());
        assert_eq!(f.steps[1].event, FeatureEvent::SolutionForm);
        let alphas: Vec<f64> = f.steps[1].diag_scalars.as_ref().unwrap().iter().map(|e| e.value.re).collect();
        assert_eq!(alphas, vec![2.0, 1.0]);
    }

    #[test]
    fn discriminates_different_spectra() {
        let f1 = extract_canonical_features(&[CMatrix::real_diagonal(&[1.0, 2.0])], &tol()).unwrap();
        let f2 = extract_canonical_features(&[CMatrix::real_diagonal(&[1.0, 3.0])], &tol()).unwrap();
        assert!(compare_features(&f1, &f1, &tol()));
        assert!(!compare_features(&f1, &f2, &tol()));
    }

    #[test]
    fn extraction_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mats = vec![gaussian_matrix(&mut rng, 4, 4), gaussian_matrix(&mut rng, 4, 4)];
        let f1 = extract_canonical_features(&mats, &tol()).unwrap();
        let f2 = extract_canonical_features(&mats, &tol()).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn rectangular_input_is_rejected() {
        assert!(extract_canonical_features(&[CMatrix::zeros(2, 3)], &tol()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn conjugation_invariance(seed in 0u64..100_000, n in 2usize..6, p in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mats: Vec<CMatrix> = (0..p).map(|_| gaussian_matrix(&mut rng, n, n)).collect();
            let u = random_unitary(&mut rng, n);
            let conj: Vec<CMatrix> = mats.iter().map(|m| &(&u * m) * &u.adjoint()).collect();
            let f1 = extract_canonical_features(&mats, &tol()).unwrap();
            let f2 = extract_canonical_features(&conj, &tol()).unwrap();
            prop_assert!(compare_features(&f1, &f2, &tol()), "{:?}", feature_difference(&f1, &f2, &tol()));
            let doubled: Vec<CMatrix> = mats.iter().map(|m| m.scale_real(2.0)).collect();
            let f3 = extract_canonical_features(&doubled, &tol()).unwrap();
            prop_assert!(!compare_features(&f1, &f3, &tol()));
        }
    }
}
