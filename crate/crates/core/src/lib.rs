//! Decision procedures for simultaneous unitary similarity
//! (`U·A_l·U* = B_l` for all `l`) and simultaneous unitary equivalence
//! (`U·A_l·V* = B_l`) of finite matrix collections.
//!
//! The solver alternates a structural check of the partitioned collection
//! with an eigen-decomposition step that refines the block structure of the
//! unknown unitaries. It either returns a verified witness or a mismatch
//! certificate that [`certificate::check_certificate`] can replay
//! independently.
//!
//! ```
//! use sus_core::{solve, CMatrix, Mode, PairCollection, Tolerances};
//!
//! let a = CMatrix::real_diagonal(&[1.0, 2.0]);
//! let b = CMatrix::real_diagonal(&[2.0, 1.0]);
//! let coll = PairCollection::new(vec![(a, b)]).unwrap();
//! let out = solve(&coll, Mode::Sus, &Tolerances::default()).unwrap();
//! assert!(out.is_solved());
//! ```

pub mod blocking;
pub mod canonical;
pub mod certificate;
pub mod error;
pub mod graph;
pub mod instgen;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod refine;
pub mod solver;
pub mod structure;

pub use blocking::{BlockStructure, Mode, PairCollection};
pub use canonical::{compare_features, extract_canonical_features, CanonicalFeatures};
pub use certificate::{check_certificate, MismatchCertificate};
pub use error::{Error, Result};
pub use linalg::{CMatrix, Tolerances, C64};
pub use solver::{solve, solve_sueq, solve_sus, verify_witness, SolveOutcome};

/// Serializes 0-based indices as 1-based ones.
pub(crate) mod one_based {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*v as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let v = u64::deserialize(d)?;
        if v == 0 {
            return Err(de::Error::custom("indices are 1-based"));
        }
        Ok((v - 1) as usize)
    }
}
