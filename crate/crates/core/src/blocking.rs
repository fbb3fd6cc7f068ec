//! Block structures of the unknown unitaries and the induced partition of a
//! pair collection into addressable blocks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sus,
    Sueq,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sus => "sus",
            Mode::Sueq => "sueq",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sus" => Ok(Mode::Sus),
            "sueq" => Ok(Mode::Sueq),
            other => Err(format!("unknown mode '{other}' (expected 'sus' or 'sueq')")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

/// Ordered block sizes `[n₁, …, n_d]`, all positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl TryFrom<Vec<usize>> for BlockStructure {
    type Error = Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        BlockStructure::new(sizes)
    }
}

impl From<BlockStructure> for Vec<usize> {
    fn from(s: BlockStructure) -> Self {
        s.sizes
    }
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::DimensionMismatch(format!(
                "block sizes must be non-empty and positive, got {sizes:?}"
            )));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(BlockStructure { sizes, offsets })
    }

    /// The single-block structure `[n]`.
    pub fn whole(n: usize) -> Self {
        BlockStructure::new(vec![n]).expect("dimension must be positive")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Replaces block `at` by blocks of the given sizes.
    pub fn refine(&self, at: usize, multiplicities: &[usize]) -> Result<BlockStructure> {
        if at >= self.len() {
            return Err(Error::InvalidRefinement(format!(
                "block {} does not exist in {:?}",
                at + 1,
                self.sizes
            )));
        }
        if multiplicities.len() < 2 {
            return Err(Error::InvalidRefinement(
                "a refinement needs at least two eigenvalue groups".into(),
            ));
        }
        if multiplicities.iter().sum::<usize>() != self.sizes[at] || multiplicities.contains(&0) {
            return Err(Error::InvalidRefinement(format!(
                "multiplicities {multiplicities:?} do not partition block {} of size {}",
                at + 1,
                self.sizes[at]
            )));
        }
        let mut sizes = Vec::with_capacity(self.len() + multiplicities.len() - 1);
        sizes.extend_from_slice(&self.sizes[..at]);
        sizes.extend_from_slice(multiplicities);
        sizes.extend_from_slice(&self.sizes[at + 1..]);
        BlockStructure::new(sizes)
    }
}

impl std::fmt::Display for BlockStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (k, s) in self.sizes.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// `p` pairs `(A_l, B_l)` of `m×n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCollection {
    m: usize,
    n: usize,
    pairs: Vec<(CMatrix, CMatrix)>,
}

impl PairCollection {
    pub fn new(pairs: Vec<(CMatrix, CMatrix)>) -> Result<Self> {
        let Some((a0, _)) = pairs.first() else {
            return Err(Error::InvalidInstance("a collection needs at least one pair".into()));
        };
        let (m, n) = (a0.rows(), a0.cols());
        if m == 0 || n == 0 {
            return Err(Error::InvalidInstance("matrices must be non-empty".into()));
        }
        for (l, (a, b)) in pairs.iter().enumerate() {
            for (name, x) in [("A", a), ("B", b)] {
                if x.rows() != m || x.cols() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{name}_{} is {}x{}, expected {m}x{n}",
                        l + 1,
                        x.rows(),
                        x.cols()
                    )));
                }
            }
        }
        Ok(PairCollection { m, n, pairs })
    }

    /// Collection `{(A_l, A_l)}`.
    pub fn from_single(mats: Vec<CMatrix>) -> Result<Self> {
        PairCollection::new(mats.into_iter().map(|a| (a.clone(), a)).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_square(&self) -> bool {
        self.m == self.n
    }

    pub fn a(&self, l: usize) -> &CMatrix {
        &self.pairs[l].0
    }

    pub fn b(&self, l: usize) -> &CMatrix {
        &self.pairs[l].1
    }

    pub fn side(&self, l: usize, side: Side) -> &CMatrix {
        match side {
            Side::A => &self.pairs[l].0,
            Side::B => &self.pairs[l].1,
        }
    }

    pub fn pairs(&self) -> &[(CMatrix, CMatrix)] {
        &self.pairs
    }

    pub(crate) fn pairs_mut(&mut self) -> &mut [(CMatrix, CMatrix)] {
        &mut self.pairs
    }

    pub fn into_pairs(self) -> Vec<(CMatrix, CMatrix)> {
        self.pairs
    }

    /// Same collection with every matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> PairCollection {
        PairCollection {
            m: self.m,
            n: self.n,
            pairs: self
                .pairs
                .iter()
                .map(|(a, b)| (a.scale_real(c), b.scale_real(c)))
                .collect(),
        }
    }

    pub fn transposed(&self) -> PairCollection {
        PairCollection {
            m: self.n,
            n: self.m,
            pairs: self.pairs.iter().map(|(a, b)| (a.transpose(), b.transpose())).collect(),
        }
    }

    pub fn max_a_norm(&self) -> f64 {
        self.pairs.iter().map(|(a, _)| a.frobenius_norm()).fold(0.0, f64::max)
    }
}

/// Zero-based reference to block `(i, j)` of `A_l` or `B_l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubmatrixRef {
    pub l: usize,
    pub side: Side,
    pub i: usize,
    pub j: usize,
}

/// All blocks of a collection under a pair of block structures.
#[derive(Debug, Clone)]
pub struct PartitionView {
    rows: BlockStructure,
    cols: BlockStructure,
    blocks: Vec<[Vec<CMatrix>; 2]>,
    parent_norms: Vec<[f64; 2]>,
}

pub fn induced_partition(
    coll: &PairCollection,
    rows: &BlockStructure,
    cols: &BlockStructure,
) -> Result<PartitionView> {
    if rows.dim() != coll.m() || cols.dim() != coll.n() {
        return Err(Error::DimensionMismatch(format!(
            "structures {rows} x {cols} do not tile a {}x{} collection",
            coll.m(),
            coll.n()
        )));
    }
    let cut = |x: &CMatrix| {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for i in 0..rows.len() {
            for j in 0..cols.len() {
                out.push(x.submatrix(rows.offset(i), rows.size(i), cols.offset(j), cols.size(j)));
            }
        }
        out
    };
    let blocks = coll.pairs().iter().map(|(a, b)| [cut(a), cut(b)]).collect();
    let parent_norms = coll
        .pairs()
        .iter()
        .map(|(a, b)| [a.frobenius_norm(), b.frobenius_norm()])
        .collect();
    Ok(PartitionView {
        rows: rows.clone(),
        cols: cols.clone(),
        blocks,
        parent_norms,
    })
}

impl PartitionView {
    pub fn rows(&self) -> &BlockStructure {
        &self.rows
    }

    pub fn cols(&self) -> &BlockStructure {
        &self.cols
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, l: usize, side: Side, i: usize, j: usize) -> &CMatrix {
        let k = i * self.cols.len() + j;
        match side {
            Side::A => &self.blocks[l][0][k],
            Side::B => &self.blocks[l][1][k],
        }
    }

    pub fn get(&self, r: SubmatrixRef) -> &CMatrix {
        self.block(r.l, r.side, r.i, r.j)
    }

    pub fn parent_norm(&self, l: usize, side: Side) -> f64 {
        match side {
            Side::A => self.parent_norms[l][0],
            Side::B => self.parent_norms[l][1],
        }
    }

    pub fn is_square_cell(&self, i: usize, j: usize) -> bool {
        self.rows.size(i) == self.cols.size(j)
    }

    /// Reassembles matrix `l` of one side from its blocks.
    pub fn assemble(&self, l: usize, side: Side) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows.dim(), self.cols.dim());
        for i in 0..self.rows.len() {
            for j in 0..self.cols.len() {
                out.set_submatrix(self.rows.offset(i), self.cols.offset(j), self.block(l, side, i, j));
            }
        }
        out
    }
}

pub fn embed_block_diagonal(blocks: &[CMatrix], structure: &BlockStructure) -> Result<CMatrix> {
    if blocks.len() != structure.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} blocks for structure {structure}",
            blocks.len()
        )));
    }
    let n = structure.dim();
    let mut out = CMatrix::zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        if !b.is_square() || b.rows() != structure.size(k) {
            return Err(Error::DimensionMismatch(format!(
                "block {} is {}x{}, structure expects size {}",
                k + 1,
                b.rows(),
                b.cols(),
                structure.size(k)
            )));
        }
        out.set_submatrix(structure.offset(k), structure.offset(k), b);
    }
    Ok(out)
}

/// `diag(I, …, block, …, I)` with `block` placed at block index `at`.
pub fn embed_single_block(block: &CMatrix, at: usize, structure: &BlockStructure) -> Result<CMatrix> {
    let blocks: Vec<CMatrix> = (0..structure.len())
        .map(|k| if k == at { block.clone() } else { CMatrix::identity(structure.size(k)) })
        .collect();
    embed_block_diagonal(&blocks, structure)
}
