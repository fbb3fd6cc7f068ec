use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sus_core::certificate::check_certificate;
use sus_core::instgen::{generate, random_unitary, InstanceKind, InstanceSpec};
use sus_core::refine::StepSide;
use sus_core::{solve, verify_witness, CMatrix, Mode, PairCollection, SolveOutcome, Tolerances};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn scaled(coll: &PairCollection, c: f64) -> PairCollection {
    PairCollection::new(coll.pairs().iter().map(|(a, b)| (a.scale_real(c), b.scale_real(c))).collect()).unwrap()
}

fn kind_strategy() -> impl Strategy<Value = InstanceKind> {
    prop_oneof![
        any::<bool>().prop_map(|structured| InstanceKind::PlantedSimilar { structured }),
        Just(InstanceKind::PerturbedNonSimilar { epsilon: 1e-2 }),
        (2usize..4).prop_map(|k| InstanceKind::DeepSplit { k }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn verdict_is_scale_invariant(kind in kind_strategy(), n in 4usize..8, p in 2usize..4, seed in any::<u64>(), e in -3i32..=3) {
        let inst = generate(&InstanceSpec::square(kind, n, p, seed)).unwrap();
        let c = 10f64.powi(e);
        let base = solve(&inst.collection, Mode::Sus, &tol()).unwrap();
        let other = solve(&scaled(&inst.collection, c), Mode::Sus, &tol()).unwrap();
        prop_assert_eq!(base.tag(), other.tag());
        prop_assert_eq!(base.trace().len(), other.trace().len());
    }

    #[test]
    fn outcomes_are_sound(kind in kind_strategy(), n in 4usize..8, p in 2usize..4, seed in any::<u64>()) {
        let inst = generate(&InstanceSpec::square(kind, n, p, seed)).unwrap();
        match solve(&inst.collection, Mode::Sus, &tol()).unwrap() {
            SolveOutcome::Solved { u, residual, trace, .. } => {
                prop_assert!(inst.oracle.is_none());
                let check = verify_witness(&inst.collection, &u, None).unwrap();
                prop_assert!(check.passes(n, &tol()));
                prop_assert!((check.residual - residual).abs() <= 1e-12);
                prop_assert!(trace.len() <= n);
            }
            SolveOutcome::NotSimilar { certificate, .. } => {
                prop_assert!(inst.witness_u.is_none());
                prop_assert!(check_certificate(&inst.collection, &certificate, &tol()).is_ok());
            }
            SolveOutcome::VerificationFailed { .. } => prop_assert!(false, "verification failed"),
        }
    }

    #[test]
    fn equivalence_solves_planted_rectangles(m in 1usize..6, extra in 0usize..4, p in 1usize..4, seed in any::<u64>()) {
        let n = m + extra;
        let inst = generate(&InstanceSpec { seed, m, n, p, kind: InstanceKind::PlantedEquivalent }).unwrap();
        let out = solve(&inst.collection, Mode::Sueq, &tol()).unwrap();
        prop_assert!(out.trace().len() <= m + n);
        match out {
            SolveOutcome::Solved { u, v, .. } => {
                let check = verify_witness(&inst.collection, &u, v.as_ref()).unwrap();
                prop_assert!(check.passes(n, &tol()));
            }
            other => prop_assert!(false, "{}", other.tag()),
        }
    }

    #[test]
    fn a_certificate_does_not_transfer_to_a_similar_instance(n in 3usize..6, seed in any::<u64>()) {
        let inst = generate(&InstanceSpec::square(InstanceKind::PerturbedNonSimilar { epsilon: 1e-2 }, n, 2, seed)).unwrap();
        let SolveOutcome::NotSimilar { certificate, .. } = solve(&inst.collection, Mode::Sus, &tol()).unwrap() else {
            return Err(TestCaseError::fail("expected a rejection"));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary(&mut rng, n);
        let similar = PairCollection::new(
            inst.collection.pairs().iter().map(|(a, _)| (a.clone(), (&u * a).mul_adjoint(&u))).collect(),
        ).unwrap();
        prop_assert!(check_certificate(&similar, &certificate, &tol()).is_err());
    }
}

#[test]
fn wide_blocks_split_on_the_column_side() {
    // A·A* = I, so only A*·A can split.
    let a = CMatrix::from_real_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random_unitary(&mut rng, 2);
    let v = random_unitary(&mut rng, 4);
    let b = (&u * &a).mul_adjoint(&v);
    let coll = PairCollection::new(vec![(a, b)]).unwrap();
    let out = solve(&coll, Mode::Sueq, &tol()).unwrap();
    let SolveOutcome::Solved { u, v, trace, .. } = out else {
        panic!("expected a witness");
    };
    assert_eq!(trace[0].side, StepSide::Col);
    assert!(verify_witness(&coll, &u, v.as_ref()).unwrap().passes(4, &tol()));
}

#[test]
fn sus_and_sueq_agree_on_the_transposed_problem() {
    for seed in 0..20 {
        let inst = generate(&InstanceSpec { seed, m: 3, n: 5, p: 2, kind: InstanceKind::PlantedEquivalent }).unwrap();
        let t = inst.collection.transposed();
        let out = solve(&t, Mode::Sueq, &tol()).unwrap();
        assert!(out.is_solved(), "seed {seed}: {}", out.tag());
    }
}
