//! Reproducible instance families. Every instance is a pure function of its
//! [`InstanceSpec`]; planted families also return the hidden witness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blocking::{Mode, PairCollection};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Tolerances, C64};
use crate::oracle::{trace_word_oracle, TraceWitness};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceKind {
    /// `B_l = U·A_l·U*`; `structured` hides repeated eigenvalues and
    /// unitary block couplings so the solver needs several refinements.
    PlantedSimilar { structured: bool },
    /// `B_l = U·A_l·V*` for rectangular `A_l`.
    PlantedEquivalent,
    /// Planted-similar with `B_1 += ε·E`, `‖E‖_F = 1`; emitted only once the
    /// trace-word oracle certifies non-similarity.
    PerturbedNonSimilar { epsilon: f64 },
    /// Forces exactly `k` refinement steps (needs `p ≥ 2`, `k < n`).
    DeepSplit { k: usize },
    /// Each `(A_l, B_l)` is similar on its own, the collection is not.
    PairwiseSimilar,
    /// `A_1` Hermitian with one eigen-gap equal to `delta`, the others ≥ 0.1.
    GapControlled { delta: f64 },
    /// `p = 1`, `A` non-normal, `B = U·A·U*`.
    NonNormal,
    /// `p = 1`, `A` and `B` normal; similar spectra or one eigenvalue moved.
    NormalSpectrum { similar: bool },
    /// Independent Gaussian `A_l`, `B_l`.
    Random,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub kind: InstanceKind,
}

impl InstanceSpec {
    pub fn square(kind: InstanceKind, n: usize, p: usize, seed: u64) -> Self {
        InstanceSpec { seed, m: n, n, p, kind }
    }

    /// Equivalence for planted-equivalent and rectangular random specs.
    pub fn mode(&self) -> Mode {
        match self.kind {
            InstanceKind::PlantedEquivalent => Mode::Sueq,
            InstanceKind::Random if self.m != self.n => Mode::Sueq,
            _ => Mode::Sus,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub spec: InstanceSpec,
    pub mode: Mode,
    pub collection: PairCollection,
    pub witness_u: Option<CMatrix>,
    pub witness_v: Option<CMatrix>,
    /// Disagreeing trace word, for families that are non-similar by construction.
    pub oracle: Option<TraceWitness>,
}

/// Entries with independent real and imaginary parts `N(0, 1/2)`.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * s, im * s)
    })
}

/// Haar unitary: Gram–Schmidt (with one reorthogonalization pass) on the
/// columns of a complex Gaussian matrix, i.e. the `Q` of a QR factorization
/// whose triangular factor has a positive real diagonal.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    assert!(n >= 1, "unitary dimension must be positive");
    loop {
        let g = gaussian_matrix(rng, n, n);
        let mut cols: Vec<Vec<C64>> = (0..n).map(|j| (0..n).map(|i| g[(i, j)]).collect()).collect();
        let mut ok = true;
        for j in 0..n {
            for _ in 0..2 {
                for k in 0..j {
                    let proj: C64 = cols[k].iter().zip(&cols[j]).map(|(q, x)| q.conj() * x).sum();
                    let qk = cols[k].clone();
                    for (x, q) in cols[j].iter_mut().zip(&qk) {
                        *x -= proj * q;
                    }
                }
            }
            let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-10 {
                ok = false;
                break;
            }
            for x in &mut cols[j] {
                *x /= norm;
            }
        }
        if ok {
            return CMatrix::from_fn(n, n, |i, j| cols[j][i]);
        }
    }
}

pub fn random_unitary_seeded(seed: u64, n: usize) -> CMatrix {
    random_unitary(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn conj(u: &CMatrix, a: &CMatrix) -> CMatrix {
    &(u * a) * &u.adjoint()
}

fn random_partition<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let s = rng.random_range(1..=left.min(3));
        sizes.push(s);
        left -= s;
    }
    sizes
}

/// Block-structured collection in a hidden basis: `A_1` Hermitian with one
/// eigenvalue per hidden block, later matrices couple equal-size blocks
/// through scaled unitaries.
fn structured_collection<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> Vec<CMatrix> {
    let sizes = random_partition(rng, n);
    let mut offs = vec![0];
    for s in &sizes {
        offs.push(offs.last().unwrap() + s);
    }
    let nb = sizes.len();
    let mut mats = Vec::with_capacity(p);
    let mut a1 = CMatrix::zeros(n, n);
    for b in 0..nb {
        // distinct, well separated levels
        let level = 1.0 + b as f64 * 0.7 + rng.random_range(0.0..0.2);
        a1.set_submatrix(offs[b], offs[b], &CMatrix::scalar(sizes[b], C64::new(level, 0.0)));
    }
    mats.push(a1);
    for _ in 1..p {
        let mut a = CMatrix::zeros(n, n);
        for b in 0..nb {
            for c in 0..nb {
                if sizes[b] != sizes[c] || !rng.random_bool(0.6) {
                    continue;
                }
                let block = if b == c {
                    if rng.random_bool(0.5) {
                        CMatrix::scalar(sizes[b], C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    } else {
                        gaussian_matrix(rng, sizes[b], sizes[b])
                    }
                } else {
                    random_unitary(rng, sizes[b]).scale_real(rng.random_range(0.5..2.0))
                };
                a.set_submatrix(offs[b], offs[c], &block);
            }
        }
        mats.push(a);
    }
    let w = random_unitary(rng, n);
    mats.iter().map(|a| conj(&w, a)).collect()
}

fn planted_pairs(mats: Vec<CMatrix>, u: &CMatrix) -> Result<PairCollection> {
    PairCollection::new(mats.into_iter().map(|a| (a.clone(), conj(u, &a))).collect())
}

fn validate(spec: &InstanceSpec) -> Result<()> {
    let bad = |msg: String| Err(Error::SpecInvalid(msg));
    if spec.n == 0 || spec.m == 0 || spec.p == 0 {
        return bad("dimensions and p must be positive".into());
    }
    if spec.mode() == Mode::Sus && spec.m != spec.n {
        return bad(format!("{:?} needs m = n", spec.kind));
    }
    match spec.kind {
        InstanceKind::PerturbedNonSimilar { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
            bad("epsilon must be positive".into())
        }
        InstanceKind::DeepSplit { k } if spec.p < 2 || k < 1 || k >= spec.n => {
            bad(format!("deep split needs p >= 2 and 1 <= k < n (k={k}, n={}, p={})", spec.n, spec.p))
        }
        InstanceKind::PairwiseSimilar if spec.p < 2 || spec.n < 2 => bad("pairwise family needs p >= 2, n >= 2".into()),
        InstanceKind::GapControlled { delta } if !(delta > 0.0 && delta < 0.1) || spec.n < 2 => {
            bad("delta must lie in (0, 0.1) and n >= 2".into())
        }
        InstanceKind::NonNormal | InstanceKind::NormalSpectrum { .. } if spec.p != 1 => {
            bad(format!("{:?} is a single-pair family", spec.kind))
        }
        InstanceKind::NonNormal if spec.n < 2 => bad("non-normal matrices need n >= 2".into()),
        _ => Ok(()),
    }
}

pub fn generate(spec: &InstanceSpec) -> Result<GeneratedInstance> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, p) = (spec.n, spec.p);
    let mut out = GeneratedInstance {
        spec: *spec,
        mode: spec.mode(),
        collection: PairCollection::from_single(vec![CMatrix::zeros(spec.m, n)])?,
        witness_u: None,
        witness_v: None,
        oracle: None,
    };
    match spec.kind {
        InstanceKind::PlantedSimilar { structured } => {
            let mats = if structured {
                structured_collection(&mut rng, n, p)
            } else {
                (0..p).map(|_| gaussian_matrix(&mut rng, n, n)).collect()
            };
            let u = random_unitary(&mut rng, n);
            out.collection = planted_pairs(mats, &u)?;
            out.witness_u = Some(u);
        }
        InstanceKind::PlantedEquivalent => {
            let mats: Vec<CMatrix> = (0..p).map(|_| gaussian_matrix(&mut rng, spec.m, n)).collect();
            let u = random_unitary(&mut rng, spec.m);
            let v = random_unitary(&mut rng, n);
            out.collection =
                PairCollection::new(mats.into_iter().map(|a| (a.clone(), (&u * &a).mul_adjoint(&v))).collect())?;
            out.witness_u = Some(u);
            out.witness_v = Some(v);
        }
        InstanceKind::PerturbedNonSimilar { epsilon } => {
            let tol = Tolerances::default();
            for _ in 0..64 {
                let mats: Vec<CMatrix> = (0..p).map(|_| gaussian_matrix(&mut rng, n, n)).collect();
                let u = random_unitary(&mut rng, n);
                let mut pairs = planted_pairs(mats, &u)?.into_pairs();
                let e = gaussian_matrix(&mut rng, n, n);
                let e = e.scale_real(epsilon / e.frobenius_norm());
                pairs[0].1 = &pairs[0].1 + &e;
                let coll = PairCollection::new(pairs)?;
                if let Some(w) = trace_word_oracle(&coll, 4, &tol) {
                    out.collection = coll;
                    out.oracle = Some(w);
                    return Ok(out);
                }
            }
            return Err(Error::SpecInvalid("trace oracle could not certify a perturbed instance".into()));
        }
        InstanceKind::DeepSplit { k } => {
            let h1 = rng.random_range(1.5..2.5);
            let h2 = rng.random_range(-0.5..0.5);
            let mut levels = vec![h2; n];
            levels[0] = h1;
            let a1 = CMatrix::real_diagonal(&levels);
            let mut a2 = CMatrix::zeros(n, n);
            for t in 0..k - 1 {
                let z = C64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-3.0..3.0));
                a2[(t, t + 1)] = z;
            }
            let mut mats = vec![a1.clone(), a2.clone()];
            for _ in 2..p {
                let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                mats.push(&a1.scale_real(x) + &a2.scale_real(y));
            }
            let w = random_unitary(&mut rng, n);
            let hidden: Vec<CMatrix> = mats.iter().map(|a| conj(&w, a)).collect();
            let u = random_unitary(&mut rng, n);
            out.collection = planted_pairs(hidden, &u)?;
            out.witness_u = Some(u);
        }
        InstanceKind::PairwiseSimilar => {
            let tol = Tolerances::default();
            for _ in 0..64 {
                let mats: Vec<CMatrix> = (0..p).map(|_| gaussian_matrix(&mut rng, n, n)).collect();
                let pairs: Vec<(CMatrix, CMatrix)> = mats
                    .into_iter()
                    .map(|a| {
                        let q = random_unitary(&mut rng, n);
                        let b = conj(&q, &a);
                        (a, b)
                    })
                    .collect();
                let coll = PairCollection::new(pairs)?;
                if let Some(w) = trace_word_oracle(&coll, 4, &tol) {
                    out.collection = coll;
                    out.oracle = Some(w);
                    return Ok(out);
                }
            }
            return Err(Error::SpecInvalid("trace oracle could not certify a pairwise instance".into()));
        }
        InstanceKind::GapControlled { delta } => {
            let mut levels: Vec<f64> = (0..n - 1).map(|k| 0.3 * k as f64).collect();
            levels.push(0.3 * (n - 2) as f64 + delta);
            let w = random_unitary(&mut rng, n);
            let mut mats = vec![conj(&w, &CMatrix::real_diagonal(&levels))];
            mats.extend((1..p).map(|_| gaussian_matrix(&mut rng, n, n)));
            let u = random_unitary(&mut rng, n);
            out.collection = planted_pairs(mats, &u)?;
            out.witness_u = Some(u);
        }
        InstanceKind::NonNormal => {
            let a = loop {
                let a = gaussian_matrix(&mut rng, n, n);
                if (&a.mul_adjoint(&a) - &a.adjoint_mul(&a)).frobenius_norm() >= 0.1 {
                    break a;
                }
            };
            let u = random_unitary(&mut rng, n);
            out.collection = planted_pairs(vec![a], &u)?;
            out.witness_u = Some(u);
        }
        InstanceKind::NormalSpectrum { similar } => {
            let distinct = rng.random_range(1..=n);
            let palette: Vec<C64> = (0..distinct)
                .map(|_| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let spectrum: Vec<C64> = (0..n).map(|k| palette[if k < distinct { k } else { rng.random_range(0..distinct) }]).collect();
            let mut other = spectrum.clone();
            for k in (1..n).rev() {
                other.swap(k, rng.random_range(0..=k));
            }
            if !similar {
                let k = rng.random_range(0..n);
                other[k] += C64::from_polar(rng.random_range(0.05..0.5), rng.random_range(-3.0..3.0));
            }
            let wa = random_unitary(&mut rng, n);
            let wb = random_unitary(&mut rng, n);
            let a = conj(&wa, &CMatrix::diagonal(&spectrum));
            let b = conj(&wb, &CMatrix::diagonal(&other));
            out.collection = PairCollection::new(vec![(a, b)])?;
            if similar {
                // wb·P·wa* maps A to B where P permutes spectrum onto other
                let mut perm = CMatrix::zeros(n, n);
                let mut used = vec![false; n];
                for (i, z) in other.iter().enumerate() {
                    let j = (0..n).find(|&j| !used[j] && spectrum[j] == *z).expect("permutation");
                    used[j] = true;
                    perm[(i, j)] = C64::new(1.0, 0.0);
                }
                out.witness_u = Some((&wb * &perm).mul_adjoint(&wa));
            }
        }
        InstanceKind::Random => {
            let pairs = (0..p)
                .map(|_| (gaussian_matrix(&mut rng, spec.m, n), gaussian_matrix(&mut rng, spec.m, n)))
                .collect();
            out.collection = PairCollection::new(pairs)?;
        }
    }
    Ok(out)
}
