//! Independent oracles for differential testing: a one-sided trace-word
//! certifier and exact deciders for a few small cases.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blocking::{Mode, PairCollection};
use crate::error::{Error, Result};
use crate::linalg::eigen::{general_normal_eigendecomposition, hermitian_eigenvalues};
use crate::linalg::{CMatrix, LinalgError, Tolerances, C64};

/// Longest word the oracle will enumerate.
pub const MAX_WORD_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    #[serde(with = "crate::one_based")]
    pub l: usize,
    pub adjoint: bool,
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}{}", self.l + 1, if self.adjoint { "*" } else { "" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceWitness {
    pub word: Vec<Letter>,
    pub trace_a: C64,
    pub trace_b: C64,
}

impl TraceWitness {
    pub fn word_string(&self) -> String {
        self.word.iter().map(Letter::to_string).collect::<Vec<_>>().join("·")
    }
}

impl fmt::Display for TraceWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tr {} : {} vs {}", self.word_string(), self.trace_a, self.trace_b)
    }
}

fn letter_matrix(m: &CMatrix, adjoint: bool) -> CMatrix {
    if adjoint {
        m.adjoint()
    } else {
        m.clone()
    }
}

/// `(tr w(A), tr w(B))`, multiplied left to right.
pub fn evaluate_word(coll: &PairCollection, word: &[Letter]) -> (C64, C64) {
    let n = coll.n();
    let mut wa = CMatrix::identity(n);
    let mut wb = CMatrix::identity(n);
    for letter in word {
        wa = &wa * &letter_matrix(coll.a(letter.l), letter.adjoint);
        wb = &wb * &letter_matrix(coll.b(letter.l), letter.adjoint);
    }
    (wa.trace(), wb.trace())
}

fn is_necklace_minimal(word: &[usize]) -> bool {
    (1..word.len()).all(|r| {
        let rotated = word[r..].iter().chain(&word[..r]);
        word.iter().cmp(rotated) != std::cmp::Ordering::Greater
    })
}

/// First word (by length, then lexicographically over `A1, A1*, A2, …`) whose
/// traces disagree on the two sides, or `None`.
///
/// Words equal up to rotation are tested once. The disagreement threshold is
/// `cmp·(1 + max(|tr w(A)|, Π‖letter‖_F))`, which bounds the rounding error of
/// the product. A returned word proves non-similarity; `None` proves nothing.
///
/// # Panics
/// If `max_len > MAX_WORD_LEN` or the collection is not square.
pub fn trace_word_oracle(coll: &PairCollection, max_len: usize, tol: &Tolerances) -> Option<TraceWitness> {
    assert!(max_len <= MAX_WORD_LEN, "word length {max_len} exceeds {MAX_WORD_LEN}");
    assert!(coll.is_square(), "trace words need square matrices");
    let n = coll.n();
    let letters: Vec<Letter> = (0..coll.p())
        .flat_map(|l| [Letter { l, adjoint: false }, Letter { l, adjoint: true }])
        .collect();
    let mats: Vec<(CMatrix, CMatrix, f64)> = letters
        .iter()
        .map(|t| {
            let (a, b) = (coll.a(t.l), coll.b(t.l));
            let norm = a.frobenius_norm().max(b.frobenius_norm());
            (letter_matrix(a, t.adjoint), letter_matrix(b, t.adjoint), norm)
        })
        .collect();

    for len in 1..=max_len {
        let mut idx: Vec<usize> = Vec::with_capacity(len);
        let mut stack: Vec<(CMatrix, CMatrix, f64)> = vec![(CMatrix::identity(n), CMatrix::identity(n), 1.0)];
        let mut next = 0usize;
        loop {
            if next == letters.len() {
                // backtrack
                match idx.pop() {
                    None => break,
                    Some(last) => {
                        stack.pop();
                        next = last + 1;
                        continue;
                    }
                }
            }
            let (pa, pb, pn) = stack.last().unwrap();
            let (la, lb, ln) = &mats[next];
            let entry = (pa * la, pb * lb, pn * ln);
            idx.push(next);
            if idx.len() == len {
                if is_necklace_minimal(&idx) {
                    let (ta, tb) = (entry.0.trace(), entry.1.trace());
                    if (ta - tb).norm() > tol.cmp * (1.0 + ta.norm().max(entry.2)) {
                        return Some(TraceWitness {
                            word: idx.iter().map(|&k| letters[k]).collect(),
                            trace_a: ta,
                            trace_b: tb,
                        });
                    }
                }
                idx.pop();
                next += 1;
            } else {
                stack.push(entry);
                next = 0;
            }
        }
    }
    None
}

/// Exact verdict for small cases:
///
/// - `n ≤ 2` (similarity, any `p`): trace words up to length 3, then the
///   exact reduction of `U(2)` conjugation to a rotation of Pauli coefficients.
/// - `p = 1`, normal `A` (similarity): grouped spectra.
/// - `p = 1` (equivalence): singular values.
///
/// Anything else is [`Error::OutOfScope`].
pub fn small_case_decider(coll: &PairCollection, mode: Mode, tol: &Tolerances) -> Result<bool> {
    match mode {
        Mode::Sus => {
            if !coll.is_square() {
                return Err(Error::OutOfScope("similarity needs square matrices".into()));
            }
            if coll.n() <= 2 {
                if trace_word_oracle(coll, 3, tol).is_some() {
                    return Ok(false);
                }
                return Ok(decide_two_by_two(coll, tol));
            }
            if coll.p() == 1 {
                return decide_normal(coll.a(0), coll.b(0), tol);
            }
            Err(Error::OutOfScope(format!("n = {}, p = {}", coll.n(), coll.p())))
        }
        Mode::Sueq => {
            if coll.p() != 1 {
                return Err(Error::OutOfScope(format!("equivalence oracle needs p = 1, got {}", coll.p())));
            }
            decide_singular_values(coll.a(0), coll.b(0), tol)
        }
    }
}

fn decide_normal(a: &CMatrix, b: &CMatrix, tol: &Tolerances) -> Result<bool> {
    let da = match general_normal_eigendecomposition(a, tol) {
        Ok(d) => d,
        Err(LinalgError::NotNormal { .. }) => return Err(Error::OutOfScope("A is not normal".into())),
        Err(e) => return Err(e.into()),
    };
    let db = match general_normal_eigendecomposition(b, tol) {
        Ok(d) => d,
        Err(LinalgError::NotNormal { .. }) => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    let thr = tol.group * (1.0 + a.frobenius_norm().max(b.frobenius_norm()));
    // multiset matching of eigenvalues
    let mut used = vec![false; db.eigenvalues.len()];
    for x in &da.eigenvalues {
        let best = db
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .min_by(|(_, y), (_, z)| (*y - x).norm().total_cmp(&(*z - x).norm()));
        match best {
            Some((k, y)) if (y - x).norm() <= thr => used[k] = true,
            _ => return Ok(false),
        }
    }
    Ok(true)
}

fn decide_singular_values(a: &CMatrix, b: &CMatrix, tol: &Tolerances) -> Result<bool> {
    let gram = |m: &CMatrix| if m.rows() <= m.cols() { m.mul_adjoint(m) } else { m.adjoint_mul(m) };
    let mut sa = hermitian_eigenvalues(&gram(a))?;
    let mut sb = hermitian_eigenvalues(&gram(b))?;
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    let thr = tol.group * (1.0 + scale * scale);
    Ok(sa.iter().zip(&sb).all(|(x, y)| (x - y).abs() <= thr))
}

/// `n ≤ 2`. Writing `A_l = a0·I + Σ a_k σ_k` in the Pauli basis, conjugation by
/// `U(2)` leaves `a0` fixed and rotates the complex 3-vectors `a` by one
/// `R ∈ SO(3)`. Such `R` exists iff the real Gram matrices of
/// `{Re a_l, Im a_l}` agree and, in full rank, the orientations agree.
fn decide_two_by_two(coll: &PairCollection, tol: &Tolerances) -> bool {
    if coll.n() == 1 {
        return (0..coll.p()).all(|l| {
            let (x, y) = (coll.a(l)[(0, 0)], coll.b(l)[(0, 0)]);
            (x - y).norm() <= tol.cmp * (1.0 + x.norm().max(y.norm()))
        });
    }
    let i = C64::new(0.0, 1.0);
    let coeffs = |m: &CMatrix| -> (C64, [C64; 3]) {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        ((a + d) / 2.0, [(b + c) / 2.0, i * (b - c) / 2.0, (a - d) / 2.0])
    };
    let mut va: Vec<[f64; 3]> = Vec::new();
    let mut vb: Vec<[f64; 3]> = Vec::new();
    let mut scale: f64 = 0.0;
    for l in 0..coll.p() {
        let (x0, x) = coeffs(coll.a(l));
        let (y0, y) = coeffs(coll.b(l));
        scale = scale.max(coll.a(l).frobenius_norm()).max(coll.b(l).frobenius_norm());
        if (x0 - y0).norm() > tol.group * (1.0 + x0.norm().max(y0.norm())) {
            return false;
        }
        va.push([x[0].re, x[1].re, x[2].re]);
        va.push([x[0].im, x[1].im, x[2].im]);
        vb.push([y[0].re, y[1].re, y[2].re]);
        vb.push([y[0].im, y[1].im, y[2].im]);
    }
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let thr = tol.group * (1.0 + scale * scale);
    for s in 0..va.len() {
        for t in s..va.len() {
            if (dot(&va[s], &va[t]) - dot(&vb[s], &vb[t])).abs() > thr {
                return false;
            }
        }
    }
    let det = |u: &[f64; 3], v: &[f64; 3], w: &[f64; 3]| {
        u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0])
    };
    let mut best = (0.0f64, 0.0f64);
    for s in 0..va.len() {
        for t in s + 1..va.len() {
            for r in t + 1..va.len() {
                let da = det(&va[s], &va[t], &va[r]);
                if da.abs() > best.0.abs() {
                    best = (da, det(&vb[s], &vb[t], &vb[r]));
                }
            }
        }
    }
    // rank < 3: a reflection fixing the span corrects any orientation
    best.0.abs() <= 1e-6 * (1.0 + scale.powi(3)) || best.0.signum() == best.1.signum()
}
