//! JSON exchange formats: instances, results and canonical features.
//!
//! Matrices are dense arrays of rows, each entry a `[re, im]` pair. Doubles are
//! written as shortest round-trip decimals and parsed exactly, so a file read
//! back reproduces every bit. Block indices in locators are 1-based.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocking::{BlockStructure, Mode, PairCollection};
use crate::canonical::CanonicalFeatures;
use crate::certificate::{check_certificate, MismatchCertificate};
use crate::linalg::eigen::EigenGroup;
use crate::linalg::{CMatrix, Tolerances};
use crate::refine::{RefinementStep, SKind, StepSide};
use crate::solver::{verify_witness, SolveOutcome};
use crate::structure::Violation;

pub const INSTANCE_FORMAT: &str = "sus-instance";
pub const RESULT_FORMAT: &str = "sus-result";
pub const FEATURES_FORMAT: &str = "sus-features";
pub const FORMAT_VERSION: u32 = 1;

/// Environment variable holding `cmp,group,verify` overrides.
pub const TOLERANCE_ENV: &str = "SUS_TOLERANCES";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid file: {0}")]
    Invalid(String),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    #[serde(rename = "A")]
    pub a: CMatrix,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<CMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub pairs: Vec<PairEntry>,
}

impl InstanceFile {
    pub fn from_collection(coll: &PairCollection, mode: Mode) -> Self {
        InstanceFile {
            format: INSTANCE_FORMAT.into(),
            version: FORMAT_VERSION,
            mode,
            m: coll.m(),
            n: coll.n(),
            p: coll.p(),
            pairs: coll
                .pairs()
                .iter()
                .map(|(a, b)| PairEntry {
                    a: a.clone(),
                    b: Some(b.clone()),
                })
                .collect(),
        }
    }

    /// Header, shapes and finiteness.
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |msg: String| Err(IoError::Invalid(msg));
        if self.format != INSTANCE_FORMAT {
            return bad(format!("format is {:?}, expected {INSTANCE_FORMAT:?}", self.format));
        }
        if self.version != FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.p == 0 || self.pairs.len() != self.p {
            return bad(format!("p = {} but {} pairs given", self.p, self.pairs.len()));
        }
        if self.m == 0 || self.n == 0 {
            return bad("dimensions must be positive".into());
        }
        for (l, pair) in self.pairs.iter().enumerate() {
            let mats = std::iter::once(("A", &pair.a)).chain(pair.b.as_ref().map(|b| ("B", b)));
            for (name, mat) in mats {
                if mat.rows() != self.m || mat.cols() != self.n {
                    return bad(format!(
                        "pair {}: {name} is {}x{}, expected {}x{}",
                        l + 1,
                        mat.rows(),
                        mat.cols(),
                        self.m,
                        self.n
                    ));
                }
                if !mat.data().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                    return bad(format!("pair {}: {name} has a non-finite entry", l + 1));
                }
            }
        }
        Ok(())
    }

    pub fn collection(&self) -> Result<PairCollection, IoError> {
        self.validate()?;
        let pairs = self
            .pairs
            .iter()
            .enumerate()
            .map(|(l, e)| {
                e.b.clone()
                    .map(|b| (e.a.clone(), b))
                    .ok_or_else(|| IoError::Invalid(format!("pair {} has no B matrix", l + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        PairCollection::new(pairs).map_err(|e| IoError::Invalid(e.to_string()))
    }

    /// The `A` side only; `B` may be absent.
    pub fn a_matrices(&self) -> Result<Vec<CMatrix>, IoError> {
        self.validate()?;
        Ok(self.pairs.iter().map(|e| e.a.clone()).collect())
    }
}

/// Condensed record of one refinement step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rows_before: BlockStructure,
    pub cols_before: BlockStructure,
    pub rows_after: BlockStructure,
    pub cols_after: BlockStructure,
    pub violation: Violation,
    pub s_kind: SKind,
    pub side: StepSide,
    pub spectrum: Vec<EigenGroup>,
}

impl From<&RefinementStep> for TraceEntry {
    fn from(s: &RefinementStep) -> Self {
        TraceEntry {
            rows_before: s.rows_before.clone(),
            cols_before: s.cols_before.clone(),
            rows_after: s.rows_after.clone(),
            cols_after: s.cols_after.clone(),
            violation: s.violation,
            s_kind: s.s_kind,
            side: s.side,
            spectrum: s.eigs_a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Solved,
    NotSimilar,
    VerificationFailed,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<CMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<CMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<MismatchCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub trace: Vec<TraceEntry>,
    pub tolerances: Tolerances,
    pub solver_version: String,
    pub wall_time_ms: f64,
}

impl ResultFile {
    fn base(mode: Mode, outcome: Outcome, tol: &Tolerances, wall_time_ms: f64) -> Self {
        ResultFile {
            format: RESULT_FORMAT.into(),
            version: FORMAT_VERSION,
            mode,
            outcome,
            u: None,
            v: None,
            residual: None,
            certificate: None,
            message: None,
            trace: Vec::new(),
            tolerances: *tol,
            solver_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_ms,
        }
    }

    pub fn from_outcome(outcome: &SolveOutcome, mode: Mode, tol: &Tolerances, wall_time_ms: f64) -> Self {
        let tag = match outcome {
            SolveOutcome::Solved { .. } => Outcome::Solved,
            SolveOutcome::NotSimilar { .. } => Outcome::NotSimilar,
            SolveOutcome::VerificationFailed { .. } => Outcome::VerificationFailed,
        };
        let mut r = Self::base(mode, tag, tol, wall_time_ms);
        r.trace = outcome.trace().iter().map(TraceEntry::from).collect();
        match outcome {
            SolveOutcome::Solved { u, v, residual, .. } | SolveOutcome::VerificationFailed { u, v, residual, .. } => {
                r.u = Some(u.clone());
                r.v = v.clone();
                r.residual = Some(*residual);
            }
            SolveOutcome::NotSimilar { certificate, .. } => {
                r.message = Some(certificate.summary());
                r.certificate = Some((**certificate).clone());
            }
        }
        r
    }

    pub fn numerical_failure(mode: Mode, message: String, tol: &Tolerances, wall_time_ms: f64) -> Self {
        let mut r = Self::base(mode, Outcome::NumericalFailure, tol, wall_time_ms);
        r.message = Some(message);
        r
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.format != RESULT_FORMAT {
            return Err(IoError::Invalid(format!("format is {:?}, expected {RESULT_FORMAT:?}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(IoError::Invalid(format!("unsupported version {}", self.version)));
        }
        self.tolerances.validate().map_err(IoError::Invalid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub confirmed: bool,
    pub detail: String,
}

/// Re-checks a result against its instance: the witness residual for a
/// solved result, the certificate for a rejection.
pub fn verify_result(inst: &InstanceFile, result: &ResultFile) -> Result<Verification, IoError> {
    result.validate()?;
    let coll = inst.collection()?;
    let tol = &result.tolerances;
    let witness = |u: &Option<CMatrix>| -> Result<_, IoError> {
        let u = u.as_ref().ok_or_else(|| IoError::Invalid("result carries no witness".into()))?;
        if result.mode == Mode::Sueq && result.v.is_none() {
            return Err(IoError::Invalid("equivalence result carries no V".into()));
        }
        verify_witness(&coll, u, result.v.as_ref()).map_err(|e| IoError::Invalid(e.to_string()))
    };
    Ok(match result.outcome {
        Outcome::Solved => {
            let check = witness(&result.u)?;
            let dim = coll.m().max(coll.n());
            Verification {
                confirmed: check.passes(dim, tol),
                detail: format!("residual {:.3e}, unitarity defect {:.3e}", check.residual, check.unitarity),
            }
        }
        Outcome::VerificationFailed => {
            // the claim is only that the recorded residual is what the witness gives
            let check = witness(&result.u)?;
            let claimed = result.residual.unwrap_or(f64::NAN);
            Verification {
                confirmed: (check.residual - claimed).abs() <= 1e-9 * (1.0 + claimed.abs()),
                detail: format!("recomputed residual {:.3e}, recorded {:.3e}", check.residual, claimed),
            }
        }
        Outcome::NotSimilar => {
            let cert = result
                .certificate
                .as_ref()
                .ok_or_else(|| IoError::Invalid("rejection carries no certificate".into()))?;
            match check_certificate(&coll, cert, tol) {
                Ok(()) => Verification {
                    confirmed: true,
                    detail: cert.summary(),
                },
                Err(e) => Verification {
                    confirmed: false,
                    detail: e.to_string(),
                },
            }
        }
        Outcome::NumericalFailure => Verification {
            confirmed: true,
            detail: "no claim to check".into(),
        },
    })
}

pub const WITNESS_FORMAT: &str = "sus-witness";

/// Planted witness written next to generated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessFile {
    pub format: String,
    pub version: u32,
    pub u: CMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<CMatrix>,
}

impl WitnessFile {
    pub fn new(u: CMatrix, v: Option<CMatrix>) -> Self {
        WitnessFile {
            format: WITNESS_FORMAT.into(),
            version: FORMAT_VERSION,
            u,
            v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesFile {
    pub format: String,
    pub version: u32,
    pub features: CanonicalFeatures,
}

impl FeaturesFile {
    pub fn new(features: CanonicalFeatures) -> Self {
        FeaturesFile {
            format: FEATURES_FORMAT.into(),
            version: FORMAT_VERSION,
            features,
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.format != FEATURES_FORMAT || self.version != FORMAT_VERSION {
            return Err(IoError::Invalid(format!(
                "expected {FEATURES_FORMAT:?} version {FORMAT_VERSION}, got {:?} version {}",
                self.format, self.version
            )));
        }
        Ok(())
    }
}

/// Reads a file, or standard input for `"-"`.
pub fn read_source(path: &str) -> Result<String, IoError> {
    let wrap = |source| IoError::Read {
        path: path.to_string(),
        source,
    };
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(wrap)?;
        Ok(s)
    } else {
        fs::read_to_string(Path::new(path)).map_err(wrap)
    }
}

/// Writes a file, or standard output for `"-"`.
pub fn write_sink(path: &str, contents: &str) -> Result<(), IoError> {
    let wrap = |source| IoError::Write {
        path: path.to_string(),
        source,
    };
    if path == "-" {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        out.write_all(contents.as_bytes()).and_then(|_| out.write_all(b"\n")).map_err(wrap)
    } else {
        fs::write(Path::new(path), format!("{contents}\n")).map_err(wrap)
    }
}

pub fn parse_instance(text: &str) -> Result<InstanceFile, IoError> {
    let inst: InstanceFile = serde_json::from_str(text)?;
    inst.validate()?;
    Ok(inst)
}

pub fn parse_result(text: &str) -> Result<ResultFile, IoError> {
    let r: ResultFile = serde_json::from_str(text)?;
    r.validate()?;
    Ok(r)
}

pub fn parse_features(text: &str) -> Result<FeaturesFile, IoError> {
    let f: FeaturesFile = serde_json::from_str(text)?;
    f.validate()?;
    Ok(f)
}

pub fn parse_witness(text: &str) -> Result<WitnessFile, IoError> {
    let w: WitnessFile = serde_json::from_str(text)?;
    if w.format != WITNESS_FORMAT || w.version != FORMAT_VERSION {
        return Err(IoError::Invalid(format!("expected {WITNESS_FORMAT:?} version {FORMAT_VERSION}")));
    }
    Ok(w)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable value")
}

/// Parses `cmp,group,verify`.
pub fn parse_tolerances(text: &str) -> Result<Tolerances, IoError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(IoError::Invalid(format!("expected cmp,group,verify, got {text:?}")));
    }
    let nums = parts
        .iter()
        .map(|s| s.parse::<f64>().map_err(|e| IoError::Invalid(format!("tolerance {s:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Tolerances::new(nums[0], nums[1], nums[2]).map_err(IoError::Invalid)
}

/// Defaults, overridden by [`TOLERANCE_ENV`] when set.
pub fn tolerances_from_env() -> Result<Tolerances, IoError> {
    match std::env::var(TOLERANCE_ENV) {
        Ok(s) if !s.trim().is_empty() => parse_tolerances(&s),
        _ => Ok(Tolerances::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::extract_canonical_features;
    use crate::instgen::{generate, InstanceKind, InstanceSpec};
    use crate::solver::solve;

    fn instance(kind: InstanceKind, n: usize, p: usize, seed: u64) -> InstanceFile {
        let g = generate(&InstanceSpec::square(kind, n, p, seed)).unwrap();
        InstanceFile::from_collection(&g.collection, g.mode)
    }

    #[test]
    fn instance_round_trip_is_bit_exact() {
        let inst = instance(InstanceKind::PlantedSimilar { structured: true }, 5, 3, 1);
        let back = parse_instance(&to_json(&inst)).unwrap();
        assert_eq!(back, inst);
        let bits = |f: &InstanceFile| -> Vec<u64> {
            f.pairs
                .iter()
                .flat_map(|e| e.a.data().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&back), bits(&inst));
    }

    #[test]
    fn result_round_trip() {
        let tol = Tolerances::default();
        for kind in [InstanceKind::PlantedSimilar { structured: false }, InstanceKind::PerturbedNonSimilar { epsilon: 1e-2 }] {
            let inst = instance(kind, 4, 2, 3);
            let out = solve(&inst.collection().unwrap(), Mode::Sus, &tol).unwrap();
            let r = ResultFile::from_outcome(&out, Mode::Sus, &tol, 1.5);
            let back = parse_result(&to_json(&r)).unwrap();
            assert_eq!(back, r);
            assert!(verify_result(&inst, &back).unwrap().confirmed);
        }
    }

    #[test]
    fn features_round_trip() {
        let inst = instance(InstanceKind::PlantedSimilar { structured: true }, 4, 2, 9);
        let f = FeaturesFile::new(extract_canonical_features(&inst.a_matrices().unwrap(), &Tolerances::default()).unwrap());
        assert_eq!(parse_features(&to_json(&f)).unwrap(), f);
    }

    #[test]
    fn malformed_json_reports_a_position() {
        let err = parse_instance("{\n  \"format\": \"sus-instance\",\n  \"version\": }").unwrap_err();
        match err {
            IoError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn shape_errors() {
        let mut inst = instance(InstanceKind::PlantedSimilar { structured: false }, 3, 2, 4);
        inst.p = 3;
        assert!(matches!(inst.validate(), Err(IoError::Invalid(_))));
        let mut inst = instance(InstanceKind::PlantedSimilar { structured: false }, 3, 1, 4);
        inst.pairs[0].b = Some(CMatrix::identity(2));
        assert!(matches!(inst.validate(), Err(IoError::Invalid(_))));
    }

    #[test]
    fn tolerance_strings() {
        let t = parse_tolerances("1e-10, 1e-8, 1e-7").unwrap();
        assert_eq!((t.cmp, t.group, t.verify), (1e-10, 1e-8, 1e-7));
        assert!(parse_tolerances("1e-10,1e-8").is_err());
        assert!(parse_tolerances("a,b,c").is_err());
    }
}
