//! Browser bindings: generate a seeded instance, solve it, re-check the result.
//!
//! Every entry point takes and returns JSON strings. The plain functions are
//! what the tests call; the `wasm_bindgen` exports are thin wrappers.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sus_core::instgen::{generate, InstanceKind, InstanceSpec};
use sus_core::io::{self, InstanceFile, ResultFile};
use sus_core::{solve, Mode, SolveOutcome, Tolerances};

#[derive(Serialize)]
struct ErrorReply {
    error: String,
}

fn error_json(e: impl ToString) -> String {
    io::to_json(&ErrorReply { error: e.to_string() })
}

fn kind_from_name(name: &str) -> Option<InstanceKind> {
    Some(match name {
        "planted" => InstanceKind::PlantedSimilar { structured: false },
        "planted-structured" => InstanceKind::PlantedSimilar { structured: true },
        "planted-equivalent" => InstanceKind::PlantedEquivalent,
        "perturbed" => InstanceKind::PerturbedNonSimilar { epsilon: 1e-2 },
        "pairwise" => InstanceKind::PairwiseSimilar,
        "non-normal" => InstanceKind::NonNormal,
        _ => return None,
    })
}

/// Instance JSON for a named family, or `{"error": …}`.
///
/// `deep-split` forces `n - 1` refinement steps. Equivalence instances are
/// `n × (n + 1)`.
pub fn generate_instance(kind: &str, n: usize, p: usize, seed: u64) -> String {
    let spec = match (kind, kind_from_name(kind)) {
        ("deep-split", _) => InstanceSpec::square(InstanceKind::DeepSplit { k: n.saturating_sub(1) }, n, p, seed),
        ("planted-equivalent", Some(k)) => InstanceSpec {
            seed,
            m: n,
            n: n + 1,
            p,
            kind: k,
        },
        (_, Some(k)) => InstanceSpec::square(k, n, p, seed),
        (other, None) => return error_json(format!("unknown instance kind {other:?}")),
    };
    match generate(&spec) {
        Ok(inst) => io::to_json(&InstanceFile::from_collection(&inst.collection, inst.mode)),
        Err(e) => error_json(e),
    }
}

#[derive(Serialize)]
struct SolveReply {
    summary: String,
    result: ResultFile,
}

/// Solves an instance; `mode` is `"sus"`, `"sueq"` or empty for the file's own.
pub fn solve_instance(instance_json: &str, mode: &str) -> String {
    let inst = match io::parse_instance(instance_json) {
        Ok(i) => i,
        Err(e) => return error_json(e),
    };
    let mode = if mode.is_empty() {
        inst.mode
    } else {
        match mode.parse::<Mode>() {
            Ok(m) => m,
            Err(e) => return error_json(e),
        }
    };
    let coll = match inst.collection() {
        Ok(c) => c,
        Err(e) => return error_json(e),
    };
    let tol = Tolerances::default();
    let (summary, result) = match solve(&coll, mode, &tol) {
        Ok(out) => {
            let steps = out.trace().len();
            let summary = match &out {
                SolveOutcome::Solved { residual, .. } => {
                    format!("solved after {steps} refinement steps, residual {residual:.3e}")
                }
                SolveOutcome::NotSimilar { certificate, .. } => {
                    format!("rejected after {steps} refinement steps: {}", certificate.summary())
                }
                SolveOutcome::VerificationFailed { residual, .. } => {
                    format!("witness failed verification, residual {residual:.3e}")
                }
            };
            (summary, ResultFile::from_outcome(&out, mode, &tol, 0.0))
        }
        Err(e) if e.is_numerical_failure() => {
            (format!("numerical failure: {e}"), ResultFile::numerical_failure(mode, e.to_string(), &tol, 0.0))
        }
        Err(e) => return error_json(e),
    };
    io::to_json(&SolveReply { summary, result })
}

#[derive(Serialize)]
struct VerifyReply {
    confirmed: bool,
    detail: String,
}

/// Re-checks a result (the `result` member of a solve reply) against its instance.
pub fn verify_instance(instance_json: &str, result_json: &str) -> String {
    let checked = io::parse_instance(instance_json)
        .and_then(|inst| io::parse_result(result_json).and_then(|r| io::verify_result(&inst, &r)));
    match checked {
        Ok(v) => io::to_json(&VerifyReply {
            confirmed: v.confirmed,
            detail: v.detail,
        }),
        Err(e) => error_json(e),
    }
}

#[wasm_bindgen(js_name = generateInstance)]
pub fn wasm_generate(kind: &str, n: u32, p: u32, seed: u32) -> String {
    generate_instance(kind, n as usize, p as usize, seed as u64)
}

#[wasm_bindgen(js_name = solveInstance)]
pub fn wasm_solve(instance_json: &str, mode: &str) -> String {
    solve_instance(instance_json, mode)
}

#[wasm_bindgen(js_name = verifyResult)]
pub fn wasm_verify(instance_json: &str, result_json: &str) -> String {
    verify_instance(instance_json, result_json)
}
