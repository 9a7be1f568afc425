//! Exact level-m graph approximations of the compact Vicsek set.
//!
//! Points are stored as integer lattice coordinates at scale `3^-m`, with the
//! level-0 corners at `(±1, ±1)` so that every level-0 edge has metric length
//! one. The level-m graph is a tree: each of the `5^m` cells contributes four
//! center-to-corner edges of length `3^-m`, and adjacent cells share exactly
//! one corner.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the level accepted by [`LevelGraph::build`].
pub const DEFAULT_MAX_LEVEL: u32 = 6;

/// JSON document version for serialized graphs.
pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// The five fixed points of the contractions: center, then the corners in
/// the order NW, NE, SE, SW.
pub const FIXED_POINTS: [(i64, i64); 5] = [(0, 0), (-1, 1), (1, 1), (1, -1), (-1, -1)];

pub fn pow3(k: u32) -> i64 {
    3i64.pow(k)
}

/// A point `(x·3^-level, y·3^-level)` of the lattice at a given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
    pub level: u32,
}

impl LatticePoint {
    pub fn new(x: i64, y: i64, level: u32) -> Self {
        Self { x, y, level }
    }

    /// Re-express the same point at a finer level.
    pub fn refine(self, level: u32) -> Option<Self> {
        let shift = level.checked_sub(self.level)?;
        let s = pow3(shift);
        Some(Self::new(self.x * s, self.y * s, level))
    }

    /// Position in level-0 units.
    pub fn position(self) -> (f64, f64) {
        let s = pow3(self.level) as f64;
        (self.x as f64 / s, self.y as f64 / s)
    }
}

/// Address `i_1 … i_m` of the cell `ψ_{i_1} ∘ … ∘ ψ_{i_m}(K)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddress {
    word: Vec<u8>,
}

impl CellAddress {
    pub fn new(word: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = word.iter().find(|&&s| !(1..=5).contains(&s)) {
            return Err(Error::OutOfRange(format!("cell symbol {bad} not in 1..=5")));
        }
        Ok(Self { word })
    }

    pub fn word(&self) -> &[u8] {
        &self.word
    }

    pub fn level(&self) -> u32 {
        self.word.len() as u32
    }

    /// μ-mass of the addressed cell.
    pub fn mass(&self) -> f64 {
        5f64.powi(-(self.word.len() as i32))
    }

    /// Image of the center `q_1` under the address, in level-m lattice units.
    ///
    /// `ψ_i` acts on level-k lattice coordinates as `P ↦ P + 2·3^k·q_i`, so
    /// the innermost symbol contributes `2·q_{i_m}` and the outermost
    /// `2·3^{m-1}·q_{i_1}`.
    pub fn center(&self) -> LatticePoint {
        let m = self.level();
        let (mut x, mut y) = (0i64, 0i64);
        for (k, &s) in self.word.iter().enumerate() {
            let scale = 2 * pow3(m - 1 - k as u32);
            let (qx, qy) = FIXED_POINTS[(s - 1) as usize];
            x += scale * qx;
            y += scale * qy;
        }
        LatticePoint::new(x, y, m)
    }

    /// The five marked points of the cell: center first, then the corners in
    /// [`FIXED_POINTS`] order.
    pub fn marked_points(&self) -> [LatticePoint; 5] {
        let c = self.center();
        FIXED_POINTS.map(|(dx, dy)| LatticePoint::new(c.x + dx, c.y + dy, c.level))
    }

    /// All `5^m` addresses of length `m` in lexicographic order.
    pub fn enumerate(m: u32) -> Vec<CellAddress> {
        let mut words: Vec<Vec<u8>> = vec![Vec::new()];
        for _ in 0..m {
            words = words
                .into_iter()
                .flat_map(|w| {
                    (1..=5u8).map(move |s| {
                        let mut next = w.clone();
                        next.push(s);
                        next
                    })
                })
                .collect();
        }
        words.into_iter().map(|word| CellAddress { word }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

/// The level-m Vicsek graph: an oriented tree rooted at the center.
#[derive(Debug, Clone)]
pub struct LevelGraph {
    level: u32,
    vertices: Vec<LatticePoint>,
    edges: Vec<Edge>,
    root: usize,
    /// `(parent vertex, connecting edge)`; `None` at the root.
    parent: Vec<Option<(usize, usize)>>,
    depth: Vec<u32>,
    vertex_measure: Vec<f64>,
    incident: Vec<Vec<usize>>,
    index: HashMap<(i64, i64), usize>,
}

impl LevelGraph {
    pub fn build(m: u32) -> Result<Self> {
        Self::build_with_cap(m, DEFAULT_MAX_LEVEL)
    }

    pub fn build_with_cap(m: u32, max_level: u32) -> Result<Self> {
        if m > max_level {
            return Err(Error::LevelTooLarge {
                level: m,
                max: max_level,
            });
        }
        let cells = CellAddress::enumerate(m);
        let share = 5f64.powi(-(m as i32)) / 5.0;

        // Lexicographic ordering on (x, y) comes from the BTreeMap.
        let mut mass: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for cell in &cells {
            for p in cell.marked_points() {
                *mass.entry((p.x, p.y)).or_insert(0.0) += share;
            }
        }
        let vertices: Vec<LatticePoint> = mass.keys().map(|&(x, y)| LatticePoint::new(x, y, m)).collect();
        let vertex_measure: Vec<f64> = mass.values().copied().collect();
        let index: HashMap<(i64, i64), usize> = vertices.iter().enumerate().map(|(i, p)| ((p.x, p.y), i)).collect();

        let mut pairs = Vec::with_capacity(4 * cells.len());
        for cell in &cells {
            let pts = cell.marked_points();
            let c = index[&(pts[0].x, pts[0].y)];
            for p in &pts[1..] {
                pairs.push((c, index[&(p.x, p.y)]));
            }
        }
        let root = index[&(0, 0)];
        Self::assemble(m, vertices, vertex_measure, index, root, &pairs)
    }

    /// Orient undirected pairs away from the root and build the tree data.
    fn assemble(
        level: u32,
        vertices: Vec<LatticePoint>,
        vertex_measure: Vec<f64>,
        index: HashMap<(i64, i64), usize>,
        root: usize,
        pairs: &[(usize, usize)],
    ) -> Result<Self> {
        let n = vertices.len();
        if pairs.len() + 1 != n {
            return Err(Error::Format(format!(
                "{} edges on {} vertices is not a tree",
                pairs.len(),
                n
            )));
        }
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidVertex(a.max(b)));
            }
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        let mut depth = vec![u32::MAX; n];
        let mut queue = VecDeque::from([root]);
        depth[root] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &nbrs[u] {
                if depth[v] == u32::MAX {
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if depth.contains(&u32::MAX) {
            return Err(Error::Format("graph is not connected".into()));
        }
        let mut edges: Vec<Edge> = pairs
            .iter()
            .map(|&(a, b)| {
                if depth[a] < depth[b] {
                    Edge { tail: a, head: b }
                } else {
                    Edge { tail: b, head: a }
                }
            })
            .collect();
        if edges.iter().any(|e| depth[e.head] != depth[e.tail] + 1) {
            return Err(Error::Format("edge joins vertices of equal depth".into()));
        }
        edges.sort_by_key(|e| (e.tail, e.head));

        let mut parent = vec![None; n];
        let mut incident = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            parent[e.head] = Some((e.tail, id));
            incident[e.tail].push(id);
            incident[e.head].push(id);
        }
        Ok(Self {
            level,
            vertices,
            edges,
            root,
            parent,
            depth,
            vertex_measure,
            incident,
            index,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[LatticePoint] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> Result<LatticePoint> {
        self.vertices.get(id).copied().ok_or(Error::InvalidVertex(id))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Result<Edge> {
        self.edges.get(id).copied().ok_or(Error::InvalidEdge(id))
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<(usize, usize)> {
        self.parent[v]
    }

    pub fn depth(&self, v: usize) -> u32 {
        self.depth[v]
    }

    pub fn vertex_measure(&self) -> &[f64] {
        &self.vertex_measure
    }

    /// ν_m weight of every edge, `3^-m`.
    pub fn edge_measure(&self) -> f64 {
        1.0 / pow3(self.level) as f64
    }

    /// Edges incident to `v`.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident[v].iter().map(move |&e| {
            let edge = self.edges[e];
            if edge.tail == v {
                edge.head
            } else {
                edge.tail
            }
        })
    }

    pub fn find(&self, x: i64, y: i64) -> Option<usize> {
        self.index.get(&(x, y)).copied()
    }

    /// Vertex ids in nondecreasing depth order (root first).
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.vertex_count()).collect();
        order.sort_by_key(|&v| (self.depth[v], v));
        order
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::InvalidVertex(v))
        }
    }

    fn lca(&self, mut u: usize, mut v: usize) -> usize {
        while self.depth[u] > self.depth[v] {
            u = self.parent[u].expect("non-root has parent").0;
        }
        while self.depth[v] > self.depth[u] {
            v = self.parent[v].expect("non-root has parent").0;
        }
        while u != v {
            u = self.parent[u].expect("non-root has parent").0;
            v = self.parent[v].expect("non-root has parent").0;
        }
        u
    }

    /// Number of edges on the tree path between `u` and `v`.
    pub fn hop_distance(&self, u: usize, v: usize) -> Result<u32> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        let w = self.lca(u, v);
        Ok(self.depth[u] + self.depth[v] - 2 * self.depth[w])
    }

    pub fn geodesic_distance(&self, u: usize, v: usize) -> Result<f64> {
        Ok(self.hop_distance(u, v)? as f64 * self.edge_measure())
    }

    /// Hop counts from `x` to every vertex.
    pub fn hops_from(&self, x: usize) -> Result<Vec<u32>> {
        self.check_vertex(x)?;
        let mut hops = vec![u32::MAX; self.vertex_count()];
        hops[x] = 0;
        let mut queue = VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            for w in self.neighbors(u) {
                if hops[w] == u32::MAX {
                    hops[w] = hops[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(hops)
    }

    /// Geodesic distances from `x` to every vertex.
    pub fn distances_from(&self, x: usize) -> Result<Vec<f64>> {
        let h = self.edge_measure();
        Ok(self.hops_from(x)?.into_iter().map(|k| k as f64 * h).collect())
    }

    /// Signed edge sequence from `u` to `v`; `+1` when an edge is traversed
    /// tail to head.
    pub fn geodesic_path(&self, u: usize, v: usize) -> Result<Vec<(usize, i8)>> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        let w = self.lca(u, v);
        let mut path = Vec::new();
        let mut a = u;
        while a != w {
            let (p, e) = self.parent[a].expect("non-root has parent");
            path.push((e, -1));
            a = p;
        }
        let mut down = Vec::new();
        let mut b = v;
        while b != w {
            let (p, e) = self.parent[b].expect("non-root has parent");
            down.push((e, 1));
            b = p;
        }
        path.extend(down.into_iter().rev());
        Ok(path)
    }

    /// μ_m-measure of the closed geodesic ball of radius `r` around `x`.
    pub fn ball_measure(&self, x: usize, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::OutOfRange(format!("ball radius {r}")));
        }
        let hops = self.hops_from(x)?;
        let limit = r * pow3(self.level) as f64 + 1e-9;
        Ok(hops
            .iter()
            .zip(&self.vertex_measure)
            .filter(|(&k, _)| k as f64 <= limit)
            .map(|(_, &mu)| mu)
            .sum())
    }

    /// Map level-n vertex ids into this graph by exact coordinate rescaling.
    pub fn embed_coarse_vertices(&self, n: u32) -> Result<Vec<usize>> {
        if n > self.level {
            return Err(Error::LevelMismatch {
                coarse: n,
                fine: self.level,
            });
        }
        let coarse = LevelGraph::build_with_cap(n, n)?;
        self.embed_from(&coarse)
    }

    /// Like [`embed_coarse_vertices`](Self::embed_coarse_vertices) for an
    /// already built coarse graph.
    pub fn embed_from(&self, coarse: &LevelGraph) -> Result<Vec<usize>> {
        if coarse.level > self.level {
            return Err(Error::LevelMismatch {
                coarse: coarse.level,
                fine: self.level,
            });
        }
        coarse
            .vertices
            .iter()
            .map(|p| {
                let q = p.refine(self.level).expect("level checked");
                self.find(q.x, q.y)
                    .ok_or_else(|| Error::Format(format!("({}, {}) missing at level {}", q.x, q.y, self.level)))
            })
            .collect()
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            version: GRAPH_FORMAT_VERSION,
            level: self.level,
            vertices: self
                .vertices
                .iter()
                .zip(&self.vertex_measure)
                .enumerate()
                .map(|(id, (p, &measure))| VertexRecord {
                    id,
                    x: p.x,
                    y: p.y,
                    measure,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .map(|(id, e)| EdgeRecord {
                    id,
                    tail: e.tail,
                    head: e.head,
                })
                .collect(),
            root: self.root,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self> {
        if doc.version != GRAPH_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "graph document version {} (expected {GRAPH_FORMAT_VERSION})",
                doc.version
            )));
        }
        let n = doc.vertices.len();
        let mut vertices = Vec::with_capacity(n);
        let mut measure = Vec::with_capacity(n);
        for (i, v) in doc.vertices.iter().enumerate() {
            if v.id != i {
                return Err(Error::Format(format!("vertex id {} at position {i}", v.id)));
            }
            vertices.push(LatticePoint::new(v.x, v.y, doc.level));
            measure.push(v.measure);
        }
        let index = vertices.iter().enumerate().map(|(i, p)| ((p.x, p.y), i)).collect();
        let pairs: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e.tail, e.head)).collect();
        if doc.root >= n {
            return Err(Error::InvalidVertex(doc.root));
        }
        Self::assemble(doc.level, vertices, measure, index, doc.root, &pairs)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VertexRecord {
    pub id: usize,
    pub x: i64,
    pub y: i64,
    pub measure: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeRecord {
    pub id: usize,
    pub tail: usize,
    pub head: usize,
}

/// Versioned JSON form of a [`LevelGraph`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphDocument {
    pub version: u32,
    pub level: u32,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
    pub root: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corner(g: &LevelGraph, i: usize) -> usize {
        let s = pow3(g.level());
        let (qx, qy) = FIXED_POINTS[i];
        g.find(qx * s, qy * s).unwrap()
    }

    #[test]
    fn small_levels_have_expected_sizes() {
        let g0 = LevelGraph::build(0).unwrap();
        assert_eq!((g0.vertex_count(), g0.edge_count()), (5, 4));
        assert_eq!(g0.vertex(g0.root()).unwrap(), LatticePoint::new(0, 0, 0));
        let g1 = LevelGraph::build(1).unwrap();
        assert_eq!((g1.vertex_count(), g1.edge_count()), (21, 20));
        let g4 = LevelGraph::build(4).unwrap();
        assert_eq!((g4.vertex_count(), g4.edge_count()), (2501, 2500));
    }

    #[test]
    fn level_cap_is_enforced() {
        assert!(matches!(
            LevelGraph::build(7),
            Err(Error::LevelTooLarge { level: 7, max: 6 })
        ));
        assert!(LevelGraph::build_with_cap(3, 2).is_err());
    }

    #[test]
    fn level_one_by_enumeration() {
        // 5 cells × 5 marked points, four corners shared with the center cell.
        let mut pts: Vec<(i64, i64)> = CellAddress::enumerate(1)
            .iter()
            .flat_map(|c| c.marked_points().map(|p| (p.x, p.y)))
            .collect();
        assert_eq!(pts.len(), 25);
        pts.sort();
        pts.dedup();
        assert_eq!(pts.len(), 21);
    }

    #[test]
    fn measure_is_a_probability() {
        for m in 0..=4 {
            let g = LevelGraph::build(m).unwrap();
            let total: f64 = g.vertex_measure().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "m={m}: {total}");
            assert!(g.vertex_measure().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn cell_address_mass_and_center() {
        let c = CellAddress::new(vec![3, 1]).unwrap();
        assert_eq!(c.mass(), 1.0 / 25.0);
        // ψ_3(ψ_1(q_1)) = ψ_3(0) = (2/3, 2/3) → lattice (6, 6) at level 2.
        assert_eq!(c.center(), LatticePoint::new(6, 6, 2));
        assert!(CellAddress::new(vec![0]).is_err());
    }

    #[test]
    fn distances_at_level_one() {
        let g = LevelGraph::build(1).unwrap();
        let r = g.root();
        let q2 = corner(&g, 1);
        let q3 = corner(&g, 2);
        assert_eq!(g.geodesic_distance(r, r).unwrap(), 0.0);
        assert!((g.geodesic_distance(q2, r).unwrap() - 1.0).abs() < 1e-15);
        assert!((g.geodesic_distance(q2, q3).unwrap() - 2.0).abs() < 1e-15);
        assert!(g.geodesic_distance(0, 999).is_err());
    }

    #[test]
    fn path_orientation_and_reversal() {
        let g0 = LevelGraph::build(0).unwrap();
        let q2 = corner(&g0, 1);
        let p = g0.geodesic_path(g0.root(), q2).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].1, 1);
        assert!(g0.geodesic_path(q2, q2).unwrap().is_empty());

        let g = LevelGraph::build(2).unwrap();
        let (u, v) = (3, 77);
        let fwd = g.geodesic_path(u, v).unwrap();
        let mut back: Vec<_> = g
            .geodesic_path(v, u)
            .unwrap()
            .into_iter()
            .map(|(e, s)| (e, -s))
            .collect();
        back.reverse();
        assert_eq!(fwd, back);
    }

    #[test]
    fn edges_point_away_from_root() {
        let g = LevelGraph::build(3).unwrap();
        for e in g.edges() {
            assert_eq!(g.depth(e.head), g.depth(e.tail) + 1);
        }
    }

    #[test]
    fn ball_measure_edges() {
        let g = LevelGraph::build(2).unwrap();
        let x = 17;
        assert_eq!(g.ball_measure(x, 0.0).unwrap(), g.vertex_measure()[x]);
        assert!((g.ball_measure(x, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(g.ball_measure(x, -1.0).is_err());

        // Brute-force sum over all vertices using pairwise distances.
        let r = g.root();
        let brute: f64 = (0..g.vertex_count())
            .filter(|&y| g.geodesic_distance(r, y).unwrap() <= 1.0 / 3.0 + 1e-12)
            .map(|y| g.vertex_measure()[y])
            .sum();
        assert!((g.ball_measure(r, 1.0 / 3.0).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn diameter_is_two() {
        let g = LevelGraph::build(2).unwrap();
        let mut max = 0.0f64;
        for u in 0..g.vertex_count() {
            for d in g.distances_from(u).unwrap() {
                max = max.max(d);
            }
        }
        assert!((max - 2.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_identity_and_corners() {
        let g1 = LevelGraph::build(1).unwrap();
        let id = g1.embed_coarse_vertices(1).unwrap();
        assert_eq!(id, (0..21).collect::<Vec<_>>());
        let e01 = g1.embed_coarse_vertices(0).unwrap();
        let g0 = LevelGraph::build(0).unwrap();
        for (c, &f) in e01.iter().enumerate() {
            let p = g0.vertex(c).unwrap();
            assert_eq!(g1.vertex(f).unwrap(), LatticePoint::new(3 * p.x, 3 * p.y, 1));
        }
        assert!(g1.embed_coarse_vertices(2).is_err());
    }

    #[test]
    fn embedding_composes() {
        let g2 = LevelGraph::build(2).unwrap();
        let g1 = LevelGraph::build(1).unwrap();
        let e01 = g1.embed_coarse_vertices(0).unwrap();
        let e12 = g2.embed_coarse_vertices(1).unwrap();
        let e02 = g2.embed_coarse_vertices(0).unwrap();
        let composed: Vec<usize> = e01.iter().map(|&v| e12[v]).collect();
        assert_eq!(composed, e02);
    }

    #[test]
    fn json_round_trip() {
        let g = LevelGraph::build(2).unwrap();
        let back = LevelGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back.to_document(), g.to_document());
        assert_eq!(back.root(), g.root());
    }
}
