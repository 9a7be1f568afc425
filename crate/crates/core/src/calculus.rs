//! Discrete calculus on a [`LevelGraph`]: weak gradient, co-differential,
//! Laplacian, energy, L^p norms, tree antiderivative and piecewise-affine
//! extension.
//!
//! The gradient of `f` on an edge is the constant density `3^m (f(head) -
//! f(tail))`, so `∫_e ∂f dν = f(head) - f(tail)` holds exactly and the
//! adjointness and energy identities below are exact up to roundoff.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{pow3, LevelGraph};

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch { got, expected })
    }
}

fn same_graph(a: &LevelGraph, b: &LevelGraph) -> Result<()> {
    if a.level() == b.level() {
        Ok(())
    } else {
        Err(Error::GraphMismatch {
            left: a.level(),
            right: b.level(),
        })
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

fn weighted_lp<'a>(values: impl Iterator<Item = (f64, f64)> + 'a, p: f64) -> f64 {
    if p.is_infinite() {
        values.map(|(v, _)| v.abs()).fold(0.0, f64::max)
    } else if p == 1.0 {
        values.map(|(v, w)| v.abs() * w).sum()
    } else if p == 2.0 {
        values.map(|(v, w)| v * v * w).sum::<f64>().sqrt()
    } else {
        values.map(|(v, w)| v.abs().powf(p) * w).sum::<f64>().powf(1.0 / p)
    }
}

/// A real function on the vertices of a level graph.
#[derive(Debug, Clone)]
pub struct VertexFunction {
    graph: Arc<LevelGraph>,
    values: Vec<f64>,
}

/// A 1-form: one value per oriented edge, read relative to tail → head.
#[derive(Debug, Clone)]
pub struct EdgeFunction {
    graph: Arc<LevelGraph>,
    values: Vec<f64>,
}

impl VertexFunction {
    pub fn new(graph: Arc<LevelGraph>, values: Vec<f64>) -> Result<Self> {
        check_len(values.len(), graph.vertex_count())?;
        Ok(Self { graph, values })
    }

    pub fn zeros(graph: Arc<LevelGraph>) -> Self {
        let n = graph.vertex_count();
        Self {
            graph,
            values: vec![0.0; n],
        }
    }

    pub fn constant(graph: Arc<LevelGraph>, c: f64) -> Self {
        let n = graph.vertex_count();
        Self {
            graph,
            values: vec![c; n],
        }
    }

    pub fn indicator(graph: Arc<LevelGraph>, x: usize) -> Result<Self> {
        graph.vertex(x)?;
        let mut f = Self::zeros(graph);
        f.values[x] = 1.0;
        Ok(f)
    }

    pub fn from_fn(graph: Arc<LevelGraph>, mut f: impl FnMut(usize) -> f64) -> Self {
        let values = (0..graph.vertex_count()).map(&mut f).collect();
        Self { graph, values }
    }

    pub fn graph(&self) -> &Arc<LevelGraph> {
        &self.graph
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            graph: self.graph.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_graph(&self.graph, &other.graph)?;
        Ok(Self {
            graph: self.graph.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `⟨f, g⟩` in L²(μ_m).
    pub fn inner(&self, other: &Self) -> Result<f64> {
        same_graph(&self.graph, &other.graph)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.graph.vertex_measure())
            .map(|((a, b), w)| a * b * w)
            .sum())
    }

    /// μ_m-mean.
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(self.graph.vertex_measure())
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn centered(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    /// L^p(μ_m) norm; `p = f64::INFINITY` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_p(p)?;
        Ok(weighted_lp(
            self.values
                .iter()
                .copied()
                .zip(self.graph.vertex_measure().iter().copied()),
            p,
        ))
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo <= tol * hi.abs().max(lo.abs()).max(1.0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.values)
    }

    pub fn read_csv<R: Read>(graph: Arc<LevelGraph>, r: R) -> Result<Self> {
        let values = read_csv(r, graph.vertex_count())?;
        Self::new(graph, values)
    }
}

impl EdgeFunction {
    pub fn new(graph: Arc<LevelGraph>, values: Vec<f64>) -> Result<Self> {
        check_len(values.len(), graph.edge_count())?;
        Ok(Self { graph, values })
    }

    pub fn zeros(graph: Arc<LevelGraph>) -> Self {
        let n = graph.edge_count();
        Self {
            graph,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(graph: Arc<LevelGraph>, mut f: impl FnMut(usize) -> f64) -> Self {
        let values = (0..graph.edge_count()).map(&mut f).collect();
        Self { graph, values }
    }

    pub fn graph(&self) -> &Arc<LevelGraph> {
        &self.graph
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            graph: self.graph.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `⟨η, ω⟩` in L²(ν_m).
    pub fn inner(&self, other: &Self) -> Result<f64> {
        same_graph(&self.graph, &other.graph)?;
        let w = self.graph.edge_measure();
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * w)
    }

    /// L^p(ν_m) norm with uniform weight `3^-m`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_p(p)?;
        let w = self.graph.edge_measure();
        Ok(weighted_lp(self.values.iter().map(|&v| (v, w)), p))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.values)
    }

    pub fn read_csv<R: Read>(graph: Arc<LevelGraph>, r: R) -> Result<Self> {
        let values = read_csv(r, graph.edge_count())?;
        Self::new(graph, values)
    }
}

fn write_csv<W: Write>(w: W, values: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "value"])?;
    for (id, v) in values.iter().enumerate() {
        out.write_record([id.to_string(), format!("{v:e}")])?;
    }
    out.flush()?;
    Ok(())
}

fn read_csv<R: Read>(r: R, expected: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut values = vec![f64::NAN; expected];
    for rec in rdr.deserialize::<(usize, f64)>() {
        let (id, v) = rec?;
        let slot = values
            .get_mut(id)
            .ok_or_else(|| Error::Format(format!("id {id} out of range")))?;
        *slot = v;
    }
    if let Some(missing) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Format(format!("no value for id {missing}")));
    }
    Ok(values)
}

/// Weak gradient `∂f(e) = 3^m (f(head) - f(tail))`.
pub fn gradient(f: &VertexFunction) -> EdgeFunction {
    let g = &f.graph;
    let scale = pow3(g.level()) as f64;
    let values = g
        .edges()
        .iter()
        .map(|e| scale * (f.values[e.head] - f.values[e.tail]))
        .collect();
    EdgeFunction {
        graph: g.clone(),
        values,
    }
}

/// The L² adjoint of [`gradient`]: `⟨η, ∂φ⟩_ν = ⟨∂*η, φ⟩_μ`.
pub fn codifferential(eta: &EdgeFunction) -> VertexFunction {
    let g = &eta.graph;
    let mut acc = vec![0.0; g.vertex_count()];
    for (e, &v) in g.edges().iter().zip(&eta.values) {
        acc[e.head] += v;
        acc[e.tail] -= v;
    }
    for (a, &mu) in acc.iter_mut().zip(g.vertex_measure()) {
        *a /= mu;
    }
    VertexFunction {
        graph: g.clone(),
        values: acc,
    }
}

/// `Δf = -∂*∂f`.
pub fn laplacian(f: &VertexFunction) -> VertexFunction {
    codifferential(&gradient(f)).map(|v| -v)
}

/// Discrete Dirichlet energy `3^m Σ_e (f(head) - f(tail))²`.
pub fn energy(f: &VertexFunction) -> f64 {
    let g = &f.graph;
    let scale = pow3(g.level()) as f64;
    g.edges()
        .iter()
        .map(|e| {
            let d = f.values[e.head] - f.values[e.tail];
            d * d
        })
        .sum::<f64>()
        * scale
}

pub fn lp_vertex_norm(f: &VertexFunction, p: f64) -> Result<f64> {
    f.lp_norm(p)
}

pub fn lp_edge_norm(eta: &EdgeFunction, p: f64) -> Result<f64> {
    eta.lp_norm(p)
}

/// Integrate a 1-form along the tree from `basepoint`.
pub fn antiderivative(eta: &EdgeFunction, basepoint: usize) -> Result<VertexFunction> {
    let g = &eta.graph;
    g.vertex(basepoint)?;
    let h = g.edge_measure();
    // Integrate from the root outwards, then shift.
    let mut values = vec![0.0; g.vertex_count()];
    for v in g.bfs_order() {
        if let Some((p, e)) = g.parent(v) {
            values[v] = values[p] + eta.values[e] * h;
        }
    }
    let base = values[basepoint];
    for v in &mut values {
        *v -= base;
    }
    Ok(VertexFunction {
        graph: g.clone(),
        values,
    })
}

/// Extend a level-n function to a finer level: linear by arc length along
/// each level-n edge, constant on every branch hanging off the level-n
/// skeleton.
pub fn piecewise_affine_extend(coarse: &VertexFunction, fine: &Arc<LevelGraph>) -> Result<VertexFunction> {
    let cg = &coarse.graph;
    let embed = fine.embed_from(cg)?;
    let span = pow3(fine.level() - cg.level()) as f64;
    let mut values = vec![f64::NAN; fine.vertex_count()];
    for e in cg.edges() {
        let (a, b) = (embed[e.tail], embed[e.head]);
        let (fa, fb) = (coarse.values[e.tail], coarse.values[e.head]);
        values[a] = fa;
        let mut cur = a;
        for (k, (edge, sign)) in fine.geodesic_path(a, b)?.into_iter().enumerate() {
            let fe = fine.edges()[edge];
            cur = if sign > 0 { fe.head } else { fe.tail };
            values[cur] = fa + (fb - fa) * (k + 1) as f64 / span;
        }
        debug_assert_eq!(cur, b);
    }
    if cg.edge_count() == 0 {
        values[embed[cg.root()]] = coarse.values[cg.root()];
    }
    // Off-skeleton vertices take the value at their attachment point; the
    // root is on the skeleton, so parents are always resolved first.
    for v in fine.bfs_order() {
        if values[v].is_nan() {
            let (p, _) = fine.parent(v).expect("root lies on the skeleton");
            values[v] = values[p];
        }
    }
    Ok(VertexFunction {
        graph: fine.clone(),
        values,
    })
}

/// Cutoff at scale `n`: the piecewise-affine function equal to 1 on the
/// marked points of the central level-(n+1) cell, 0 on every other
/// level-(n+1) vertex, extended to `g`.
///
/// On K this is `x ↦ h(3^n x)` for the level-1 cutoff `h`; its gradient has
/// magnitude `3^{n+1}` on the annulus `3^{-n-1} < d(0, x) < 2·3^{-n-1}` of the
/// four diagonals and vanishes elsewhere.
pub fn cutoff_function(g: &Arc<LevelGraph>, n: u32) -> Result<VertexFunction> {
    if n + 1 > g.level() {
        return Err(Error::Scale {
            scale: n,
            level: g.level(),
        });
    }
    let coarse = Arc::new(LevelGraph::build_with_cap(n + 1, n + 1)?);
    let f = VertexFunction::from_fn(coarse.clone(), |v| {
        let p = coarse.vertices()[v];
        if p.x.abs() <= 1 && p.y.abs() <= 1 {
            1.0
        } else {
            0.0
        }
    });
    piecewise_affine_extend(&f, g)
}

/// Edge-midpoint average `(f(tail) + f(head)) / 2`.
pub fn edge_average(f: &VertexFunction) -> EdgeFunction {
    let g = &f.graph;
    EdgeFunction {
        graph: g.clone(),
        values: g
            .edges()
            .iter()
            .map(|e| 0.5 * (f.values[e.tail] + f.values[e.head]))
            .collect(),
    }
}
