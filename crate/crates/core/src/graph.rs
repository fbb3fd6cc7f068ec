//! The induced graph over block indices, its path-connected classes with a
//! BFS spanning forest, and the path products `A^pth`, `B^pth`, `pr(A_ij)`.
//!
//! Vertex ids are internal: in similarity mode block `i` is vertex `i`; in
//! equivalence mode row block `i` is vertex `i` and column block `j` is vertex
//! `d + j`, so the smallest id in a class is a row vertex whenever one exists.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::blocking::{Mode, PartitionView, Side};
use crate::error::{Error, Result};
use crate::linalg::{is_multiple_of_unitary, is_zero, CMatrix, Tolerances};
use crate::one_based;
use crate::structure::CellRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Block,
    Row,
    Col,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub kind: VertexKind,
    #[serde(with = "one_based")]
    pub index: usize,
}

impl std::fmt::Display for Vertex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            VertexKind::Block => write!(f, "{}", self.index + 1),
            VertexKind::Row => write!(f, "{}R", self.index + 1),
            VertexKind::Col => write!(f, "{}C", self.index + 1),
        }
    }
}

/// One traversed edge: the witness block `A_ij` of pair `l`, used as `A_ij`
/// (row vertex to column vertex) or as `A_ij⁻¹` when `inverse` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEdge {
    #[serde(with = "one_based")]
    pub l: usize,
    #[serde(with = "one_based")]
    pub i: usize,
    #[serde(with = "one_based")]
    pub j: usize,
    pub inverse: bool,
}

/// Forest paths from a class representative to the row and column vertices
/// of a cell; enough to recompute `pr(A_ij)` without the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrPaths {
    pub rep: Vertex,
    pub to_row: Vec<PathEdge>,
    pub to_col: Vec<PathEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Vertex of the witness' row block.
    pub from: usize,
    /// Vertex of the witness' column block.
    pub to: usize,
    pub witness: CellRef,
    pub r_a: f64,
    pub r_b: f64,
}

#[derive(Debug, Clone)]
pub struct InducedGraph {
    mode: Mode,
    d: usize,
    f: usize,
    sizes: Vec<usize>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl InducedGraph {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn vertex_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_size(&self, v: usize) -> usize {
        self.sizes[v]
    }

    pub fn row_vertex(&self, i: usize) -> usize {
        i
    }

    pub fn col_vertex(&self, j: usize) -> usize {
        match self.mode {
            Mode::Sus => j,
            Mode::Sueq => self.d + j,
        }
    }

    pub fn vertex(&self, id: usize) -> Vertex {
        match self.mode {
            Mode::Sus => Vertex { kind: VertexKind::Block, index: id },
            Mode::Sueq if id < self.d => Vertex { kind: VertexKind::Row, index: id },
            Mode::Sueq => Vertex { kind: VertexKind::Col, index: id - self.d },
        }
    }

    pub fn vertex_id(&self, v: Vertex) -> Option<usize> {
        match (self.mode, v.kind) {
            (Mode::Sus, VertexKind::Block) if v.index < self.d => Some(v.index),
            (Mode::Sueq, VertexKind::Row) if v.index < self.d => Some(v.index),
            (Mode::Sueq, VertexKind::Col) if v.index < self.f => Some(self.d + v.index),
            _ => None,
        }
    }
}

/// True when cell `(i, j)` can carry an edge: square and, in similarity
/// mode, off the diagonal.
pub(crate) fn is_edge_cell(view: &PartitionView, mode: Mode, i: usize, j: usize) -> bool {
    view.is_square_cell(i, j) && (mode == Mode::Sueq || i != j)
}

pub fn build_induced_graph(view: &PartitionView, mode: Mode, tol: &Tolerances) -> InducedGraph {
    let d = view.rows().len();
    let f = view.cols().len();
    let sizes: Vec<usize> = match mode {
        Mode::Sus => view.rows().sizes().to_vec(),
        Mode::Sueq => view.rows().sizes().iter().chain(view.cols().sizes()).copied().collect(),
    };
    let nv = sizes.len();
    let mut graph = InducedGraph {
        mode,
        d,
        f,
        sizes,
        edges: Vec::new(),
        adjacency: vec![Vec::new(); nv],
    };
    let mut seen = vec![false; nv * nv];
    for l in 0..view.p() {
        for i in 0..d {
            for j in 0..f {
                if !is_edge_cell(view, mode, i, j) {
                    continue;
                }
                let (u, v) = (graph.row_vertex(i), graph.col_vertex(j));
                let key = u.min(v) * nv + u.max(v);
                if seen[key] {
                    continue;
                }
                let a = view.block(l, Side::A, i, j);
                if is_zero(a, tol, view.parent_norm(l, Side::A)) {
                    continue;
                }
                let b = view.block(l, Side::B, i, j);
                let (Some(r_a), Some(r_b)) =
                    (is_multiple_of_unitary(a, tol), is_multiple_of_unitary(b, tol))
                else {
                    continue;
                };
                if r_a <= 0.0 || r_b <= 0.0 {
                    continue;
                }
                seen[key] = true;
                let idx = graph.edges.len();
                graph.edges.push(Edge {
                    from: u,
                    to: v,
                    witness: CellRef { l, i, j },
                    r_a,
                    r_b,
                });
                graph.adjacency[u].push((v, idx));
                graph.adjacency[v].push((u, idx));
            }
        }
    }
    for adj in &mut graph.adjacency {
        adj.sort_unstable();
    }
    graph
}

#[derive(Debug, Clone)]
pub struct VertexPartition {
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
    /// BFS parent and the edge used to reach each vertex.
    parent: Vec<Option<(usize, usize)>>,
    /// Vertices in BFS discovery order, parents before children.
    order: Vec<usize>,
}

impl VertexPartition {
    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, v: usize) -> usize {
        self.class_of[v]
    }

    pub fn representative(&self, v: usize) -> usize {
        self.classes[self.class_of[v]][0]
    }

    pub fn parent(&self, v: usize) -> Option<(usize, usize)> {
        self.parent[v]
    }

    pub fn same_class(&self, u: usize, v: usize) -> bool {
        self.class_of[u] == self.class_of[v]
    }
}

pub fn partition_vertices(g: &InducedGraph) -> VertexPartition {
    let nv = g.vertex_count();
    let mut class_of = vec![usize::MAX; nv];
    let mut parent = vec![None; nv];
    let mut classes = Vec::new();
    let mut order = Vec::with_capacity(nv);
    for root in 0..nv {
        if class_of[root] != usize::MAX {
            continue;
        }
        let c = classes.len();
        let mut members = vec![root];
        class_of[root] = c;
        order.push(root);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, e) in &g.adjacency[u] {
                if class_of[v] == usize::MAX {
                    class_of[v] = c;
                    parent[v] = Some((u, e));
                    members.push(v);
                    order.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        classes.push(members);
    }
    VertexPartition {
        classes,
        class_of,
        parent,
        order,
    }
}

/// Signed edge sequence from the representative of `v` to `v`.
pub fn path_to(g: &InducedGraph, part: &VertexPartition, v: usize) -> Vec<PathEdge> {
    let mut out = Vec::new();
    let mut cur = v;
    while let Some((p, e)) = part.parent[cur] {
        let edge = &g.edges[e];
        out.push(PathEdge {
            l: edge.witness.l,
            i: edge.witness.i,
            j: edge.witness.j,
            inverse: edge.from != p,
        });
        cur = p;
    }
    out.reverse();
    out
}

pub fn pr_paths(g: &InducedGraph, part: &VertexPartition, cell: CellRef) -> PrPaths {
    let (u, v) = (g.row_vertex(cell.i), g.col_vertex(cell.j));
    PrPaths {
        rep: g.vertex(part.representative(u)),
        to_row: path_to(g, part, u),
        to_col: path_to(g, part, v),
    }
}

#[derive(Debug, Clone)]
pub struct PrEntry {
    pub at: CellRef,
    pub a: CMatrix,
    pub b: CMatrix,
}

#[derive(Debug, Clone)]
pub struct PathProducts {
    pub a_path: Vec<CMatrix>,
    pub b_path: Vec<CMatrix>,
    /// Modulus of `A^pth` (product of `√r` along the path, inverted on reversed edges).
    pub a_scale: Vec<f64>,
    pub b_scale: Vec<f64>,
    pub pr: Vec<PrEntry>,
}

impl PathProducts {
    pub fn a_inverse(&self, v: usize) -> CMatrix {
        self.a_path[v].adjoint().scale_real(1.0 / (self.a_scale[v] * self.a_scale[v]))
    }

    pub fn b_inverse(&self, v: usize) -> CMatrix {
        self.b_path[v].adjoint().scale_real(1.0 / (self.b_scale[v] * self.b_scale[v]))
    }
}

/// Path products for every vertex (each extends its BFS parent by one
/// factor) and `pr(A_ij)`, `pr(B_ij)` for every nonzero edge cell in scan order.
pub fn path_products(
    view: &PartitionView,
    g: &InducedGraph,
    part: &VertexPartition,
    tol: &Tolerances,
) -> Result<PathProducts> {
    let nv = g.vertex_count();
    let mut a_path = vec![CMatrix::zeros(0, 0); nv];
    let mut b_path = vec![CMatrix::zeros(0, 0); nv];
    let mut a_scale = vec![1.0; nv];
    let mut b_scale = vec![1.0; nv];
    for &v in &part.order {
        match part.parent[v] {
            None => {
                a_path[v] = CMatrix::identity(g.vertex_size(v));
                b_path[v] = CMatrix::identity(g.vertex_size(v));
            }
            Some((p, e)) => {
                let edge = &g.edges[e];
                let w = edge.witness;
                let wa = view.block(w.l, Side::A, w.i, w.j);
                let wb = view.block(w.l, Side::B, w.i, w.j);
                if edge.from == p {
                    a_path[v] = a_path[p].matmul(wa)?;
                    b_path[v] = b_path[p].matmul(wb)?;
                    a_scale[v] = a_scale[p] * edge.r_a.sqrt();
                    b_scale[v] = b_scale[p] * edge.r_b.sqrt();
                } else {
                    a_path[v] = a_path[p].mul_adjoint(wa).scale_real(1.0 / edge.r_a);
                    b_path[v] = b_path[p].mul_adjoint(wb).scale_real(1.0 / edge.r_b);
                    a_scale[v] = a_scale[p] / edge.r_a.sqrt();
                    b_scale[v] = b_scale[p] / edge.r_b.sqrt();
                }
            }
        }
    }
    let mut products = PathProducts {
        a_path,
        b_path,
        a_scale,
        b_scale,
        pr: Vec::new(),
    };
    let mode = g.mode();
    for l in 0..view.p() {
        for i in 0..view.rows().len() {
            for j in 0..view.cols().len() {
                if !is_edge_cell(view, mode, i, j) {
                    continue;
                }
                let a = view.block(l, Side::A, i, j);
                if is_zero(a, tol, view.parent_norm(l, Side::A)) {
                    continue;
                }
                let (u, v) = (g.row_vertex(i), g.col_vertex(j));
                if !part.same_class(u, v) {
                    return Err(Error::InternalInconsistency(format!(
                        "nonzero block ({}, {}) of pair {} joins two classes",
                        i + 1,
                        j + 1,
                        l + 1
                    )));
                }
                let b = view.block(l, Side::B, i, j);
                let pa = (&products.a_path[u] * a) * &products.a_inverse(v);
                let pb = (&products.b_path[u] * b) * &products.b_inverse(v);
                products.pr.push(PrEntry {
                    at: CellRef { l, i, j },
                    a: pa,
                    b: pb,
                });
            }
        }
    }
    Ok(products)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocking::{induced_partition, BlockStructure, PairCollection};
    use crate::instgen::random_unitary;
    use crate::linalg::{C64, ONE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn ones(d: usize) -> BlockStructure {
        BlockStructure::new(vec![1; d]).unwrap()
    }

    /// 1×1-block instance whose only nonzero off-diagonal entries are `edges`.
    fn scalar_graph(d: usize, edges: &[(usize, usize, C64)]) -> PairCollection {
        let mut a = CMatrix::identity(d);
        for &(i, j, z) in edges {
            a[(i, j)] = z;
        }
        PairCollection::from_single(vec![a]).unwrap()
    }

    fn graph_of(coll: &PairCollection, st: &BlockStructure) -> (PartitionView, InducedGraph, VertexPartition) {
        let view = induced_partition(coll, st, st).unwrap();
        let g = build_induced_graph(&view, Mode::Sus, &tol());
        let part = partition_vertices(&g);
        (view, g, part)
    }

    #[test]
    fn edgeless_graph_has_singleton_classes() {
        let coll = PairCollection::from_single(vec![CMatrix::identity(3)]).unwrap();
        let (_, g, part) = graph_of(&coll, &ones(3));
        assert!(g.edges().is_empty());
        assert_eq!(part.classes(), &[vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn single_unitary_block_is_one_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unitary(&mut rng, 2);
        let mut a = CMatrix::zeros(4, 4);
        a.set_submatrix(0, 2, &q);
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let st = BlockStructure::new(vec![2, 2]).unwrap();
        let (_, g, part) = graph_of(&coll, &st);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].witness, CellRef { l: 0, i: 0, j: 1 });
        assert_eq!(part.classes(), &[vec![0, 1]]);
    }

    #[test]
    fn path_graph_forest() {
        let coll = scalar_graph(3, &[(0, 1, ONE), (1, 2, ONE)]);
        let (_, g, part) = graph_of(&coll, &ones(3));
        assert_eq!(part.classes(), &[vec![0, 1, 2]]);
        assert_eq!(path_to(&g, &part, 1).len(), 1);
        assert_eq!(path_to(&g, &part, 2).len(), 2);
        assert!(path_to(&g, &part, 0).is_empty());
    }

    #[test]
    fn worked_example_path_and_product() {
        // edges (2,1), (2,3), (4,3) in 1-based block indices
        let a21 = C64::new(2.0, 1.0);
        let a23 = C64::new(0.5, -0.3);
        let a43 = C64::new(-1.2, 0.7);
        let coll = scalar_graph(4, &[(1, 0, a21), (1, 2, a23), (3, 2, a43)]);
        let (view, g, part) = graph_of(&coll, &ones(4));
        assert_eq!(part.classes(), &[vec![0, 1, 2, 3]]);
        let path = path_to(&g, &part, 3);
        let signs: Vec<(usize, usize, bool)> = path.iter().map(|e| (e.i, e.j, e.inverse)).collect();
        assert_eq!(signs, vec![(1, 0, true), (1, 2, false), (3, 2, true)]);
        let prods = path_products(&view, &g, &part, &tol()).unwrap();
        let expect = a21.inv() * a23 * a43.inv();
        assert!((prods.a_path[3][(0, 0)] - expect).norm() < 1e-14);
        let scale = a23.norm() / (a21.norm() * a43.norm());
        assert!((prods.a_scale[3] - scale).abs() < 1e-14);
    }

    #[test]
    fn scaled_unitary_edge_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_unitary(&mut rng, 2).scale_real(2.0);
        let mut a = CMatrix::identity(4);
        a.set_submatrix(0, 2, &q);
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let st = BlockStructure::new(vec![2, 2]).unwrap();
        let (view, g, part) = graph_of(&coll, &st);
        let prods = path_products(&view, &g, &part, &tol()).unwrap();
        assert!((&prods.a_path[1] - &q).frobenius_norm() < 1e-14);
        assert!((prods.a_scale[1] - 2.0).abs() < 1e-12);
        // pr of the witness itself collapses to a multiple of identity
        let pr = &prods.pr[0];
        assert_eq!(pr.at, CellRef { l: 0, i: 0, j: 1 });
        assert!((&pr.a - &CMatrix::identity(2)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn cycle_holonomy_survives_in_pr() {
        // 1–2 via identity, 1–3 via identity, 2–3 via diag(1, −1)
        let mut a = CMatrix::zeros(6, 6);
        a.set_submatrix(0, 2, &CMatrix::identity(2));
        a.set_submatrix(0, 4, &CMatrix::identity(2));
        a.set_submatrix(2, 4, &CMatrix::real_diagonal(&[1.0, -1.0]));
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let st = BlockStructure::new(vec![2, 2, 2]).unwrap();
        let (view, g, part) = graph_of(&coll, &st);
        let prods = path_products(&view, &g, &part, &tol()).unwrap();
        let cell = prods.pr.iter().find(|e| e.at == CellRef { l: 0, i: 1, j: 2 }).unwrap();
        // P_2 = I, P_3 = I, so pr(A_23) = A_23
        assert!((&cell.a - &CMatrix::real_diagonal(&[1.0, -1.0])).frobenius_norm() < 1e-14);
    }

    #[test]
    fn bipartite_paths_alternate_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_unitary(&mut rng, 2);
        // rows [2, 2], cols [2, 2]; nonzero blocks (1,1) and (2,1)
        let mut a = CMatrix::zeros(4, 4);
        a.set_submatrix(0, 0, &q);
        a.set_submatrix(2, 0, &q.adjoint());
        let coll = PairCollection::from_single(vec![a]).unwrap();
        let st = BlockStructure::new(vec![2, 2]).unwrap();
        let view = induced_partition(&coll, &st, &st).unwrap();
        let g = build_induced_graph(&view, Mode::Sueq, &tol());
        let part = partition_vertices(&g);
        assert_eq!(part.classes(), &[vec![0, 1, 2], vec![3]]);
        for e in g.edges() {
            assert!(e.from < 2 && e.to >= 2);
        }
        let row2 = path_to(&g, &part, 1);
        assert_eq!(row2.len(), 2);
        assert!(!row2[0].inverse && row2[1].inverse);
        assert_eq!(g.vertex(part.representative(3)).kind, VertexKind::Col);
    }
}
