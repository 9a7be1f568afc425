//! Spectral decomposition of the level-m Laplacian and the semigroups built
//! from it.
//!
//! The generalized problem `L Φ = λ M Φ` (energy matrix `L`, diagonal mass
//! matrix `M = diag(μ_m)`) is reduced to the symmetric matrix
//! `A = M^{-1/2} L M^{-1/2}` and solved densely. Eigenfunctions are stored
//! column-wise and are μ_m-orthonormal; column 0 is the constant 1.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::calculus::{gradient, laplacian, EdgeFunction, VertexFunction};
use crate::dims::{D_H, D_W};
use crate::error::{Error, Result};
use crate::graph::{pow3, LevelGraph};

/// Largest vertex count handled by the dense solver unless overridden.
pub const DENSE_SOLVER_CAP: usize = 3000;
/// Largest matrix accepted by [`matrix_exponential_oracle`].
pub const EXPM_ORACLE_CAP: usize = 600;
/// Bumped whenever the stored decomposition could change.
pub const SOLVER_VERSION: u32 = 1;

pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

const CACHE_MAGIC: &[u8; 8] = b"VKSPEC\0\0";

fn check_time(t: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { t >= 0.0 } else { t > 0.0 };
    if ok && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// Symmetric whitened matrix `M^{-1/2} L M^{-1/2}`.
pub fn whitened_matrix(g: &LevelGraph) -> Mat<f64> {
    let n = g.vertex_count();
    let scale = pow3(g.level()) as f64;
    let mu = g.vertex_measure();
    let mut a = Mat::<f64>::zeros(n, n);
    for e in g.edges() {
        let (u, v) = (e.tail, e.head);
        let w = -scale / (mu[u] * mu[v]).sqrt();
        a[(u, v)] = w;
        a[(v, u)] = w;
        a[(u, u)] += scale / mu[u];
        a[(v, v)] += scale / mu[v];
    }
    a
}

/// Eigenvalues and μ_m-orthonormal eigenfunctions of `-Δ`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    graph: Arc<LevelGraph>,
    eigenvalues: Vec<f64>,
    /// `phi[(x, j)] = Φ_j(x)`.
    phi: Mat<f64>,
    /// `dphi[(e, j)] = ∂Φ_j(e)`.
    dphi: Mat<f64>,
    residuals: Vec<f64>,
    orthonormality_defect: f64,
}

/// Solver diagnostics carried into reports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverMetadata {
    pub solver_version: u32,
    pub level: u32,
    pub size: usize,
    pub residual_tolerance: f64,
    pub max_residual: f64,
    pub orthonormality_defect: f64,
    pub lambda_1: f64,
    pub lambda_max: f64,
}

pub fn eigendecompose(g: Arc<LevelGraph>) -> Result<SpectralDecomposition> {
    eigendecompose_with_cap(g, DENSE_SOLVER_CAP)
}

pub fn eigendecompose_with_cap(g: Arc<LevelGraph>, cap: usize) -> Result<SpectralDecomposition> {
    let n = g.vertex_count();
    if n > cap {
        return Err(Error::SizeCap { n, cap });
    }
    let a = whitened_matrix(&g);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverFailure(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut eigenvalues: Vec<f64> = (0..n).map(|j| s[j]).collect();
    let lambda_max = eigenvalues[n - 1];
    if eigenvalues[0].abs() > 1e-9 * lambda_max {
        return Err(Error::SolverFailure(format!(
            "smallest eigenvalue {:e} is not zero",
            eigenvalues[0]
        )));
    }
    if n > 1 && eigenvalues[1] <= 1e-9 * lambda_max {
        return Err(Error::SolverFailure("zero eigenvalue is not simple".into()));
    }
    let mut vectors: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|x| u[(x, j)]).collect()).collect();
    refine(&g, &mut eigenvalues, &mut vectors);
    eigenvalues[0] = 0.0;

    let mu = g.vertex_measure();
    let inv_sqrt: Vec<f64> = mu.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut phi = Mat::<f64>::zeros(n, n);
    for (j, v) in vectors.iter().enumerate() {
        let col = phi.col_as_slice_mut(j);
        if j == 0 {
            col.fill(1.0);
            continue;
        }
        for ((c, &vx), &s) in col.iter_mut().zip(v).zip(&inv_sqrt) {
            *c = vx * s;
        }
        // Deterministic sign: first clearly nonzero entry positive.
        let peak = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(&first) = col.iter().find(|v| v.abs() > 1e-6 * peak) {
            if first < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    let sd = SpectralDecomposition::assemble(g, eigenvalues, phi);
    let max_residual = sd.max_residual();
    if !(max_residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::SolverFailure(format!(
            "relative residual {max_residual:e} above {RESIDUAL_TOLERANCE:e}"
        )));
    }
    if !(sd.orthonormality_defect <= ORTHONORMALITY_TOLERANCE) {
        return Err(Error::SolverFailure(format!(
            "orthonormality defect {:e}",
            sd.orthonormality_defect
        )));
    }
    Ok(sd)
}

/// Sparse product `A v` with the whitened matrix.
fn whitened_apply(g: &LevelGraph, v: &[f64]) -> Vec<f64> {
    let scale = pow3(g.level()) as f64;
    let mu = g.vertex_measure();
    let mut out = vec![0.0; v.len()];
    for e in g.edges() {
        let (a, b) = (e.tail, e.head);
        let (sa, sb) = (mu[a].sqrt(), mu[b].sqrt());
        let d = v[a] / sa - v[b] / sb;
        out[a] += scale * d / sa;
        out[b] -= scale * d / sb;
    }
    out
}

/// Solve `(A - σ I) w = v` for the whitened matrix by eliminating the tree
/// from the leaves up; trees have no fill-in. Exactly singular pivots are
/// nudged, which only changes the (dominant) eigen-direction's scale.
fn shifted_tree_solve(g: &LevelGraph, sigma: f64, v: &[f64]) -> Vec<f64> {
    let scale = pow3(g.level()) as f64;
    let mu = g.vertex_measure();
    let n = g.vertex_count();
    // Work with (L - σ M) y = M^{1/2} v, w = M^{1/2} y.
    let mut diag: Vec<f64> = (0..n)
        .map(|x| scale * g.incident(x).len() as f64 - sigma * mu[x])
        .collect();
    let mut rhs: Vec<f64> = (0..n).map(|x| mu[x].sqrt() * v[x]).collect();
    let order = g.bfs_order();
    let floor = f64::EPSILON * scale * 8.0;
    let pivot = |d: f64| if d.abs() < floor { floor.copysign(d) } else { d };
    for &x in order.iter().rev() {
        if let Some((p, _)) = g.parent(x) {
            let d = pivot(diag[x]);
            diag[x] = d;
            diag[p] -= scale * scale / d;
            rhs[p] += scale * rhs[x] / d;
        }
    }
    let mut y = vec![0.0; n];
    for &x in &order {
        let d = pivot(diag[x]);
        y[x] = match g.parent(x) {
            Some((p, _)) => (rhs[x] + scale * y[p]) / d,
            None => rhs[x] / d,
        };
    }
    y.iter().zip(mu).map(|(yx, m)| yx * m.sqrt()).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Polish a dense eigendecomposition of the whitened matrix. Each pair gets
/// one step of shifted inverse iteration; groups of numerically equal
/// eigenvalues are then re-orthonormalized and rotated by a Rayleigh–Ritz
/// step, and eigenvalues become Rayleigh quotients.
fn refine(g: &LevelGraph, eigenvalues: &mut [f64], vectors: &mut [Vec<f64>]) {
    let n = eigenvalues.len();
    let lambda_max = eigenvalues[n - 1];
    for j in 1..n {
        let mut w = shifted_tree_solve(g, eigenvalues[j], &vectors[j]);
        if normalize(&mut w).is_finite() && w.iter().all(|x| x.is_finite()) {
            if dot(&w, &vectors[j]) < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            vectors[j] = w;
        }
    }
    let tol = 1e-9 * lambda_max;
    let mut start = 1;
    while start < n {
        let mut end = start + 1;
        while end < n && eigenvalues[end] - eigenvalues[end - 1] <= tol {
            end += 1;
        }
        let k = end - start;
        // Two passes of modified Gram–Schmidt against the cluster and the
        // constant mode.
        for _ in 0..2 {
            for a in start..end {
                let (head, tail) = vectors.split_at_mut(a);
                let va = &mut tail[0];
                for vb in head[..].iter().skip(start).chain(std::iter::once(&head[0])) {
                    let c = dot(va, vb);
                    va.iter_mut().zip(vb).for_each(|(x, y)| *x -= c * y);
                }
                normalize(va);
            }
        }
        let av: Vec<Vec<f64>> = vectors[start..end].iter().map(|v| whitened_apply(g, v)).collect();
        if k == 1 {
            eigenvalues[start] = dot(&vectors[start], &av[0]);
        } else {
            let h = Mat::<f64>::from_fn(k, k, |a, b| {
                0.5 * (dot(&vectors[start + a], &av[b]) + dot(&vectors[start + b], &av[a]))
            });
            if let Ok(evd) = h.self_adjoint_eigen(Side::Lower) {
                let z = evd.U();
                let sv = evd.S().column_vector();
                let basis: Vec<Vec<f64>> = vectors[start..end].to_vec();
                for c in 0..k {
                    let mut out = vec![0.0; n];
                    for (r, b) in basis.iter().enumerate() {
                        let zr = z[(r, c)];
                        out.iter_mut().zip(b).for_each(|(o, x)| *o += zr * x);
                    }
                    normalize(&mut out);
                    vectors[start + c] = out;
                    eigenvalues[start + c] = sv[c];
                }
            }
        }
        start = end;
    }
}

impl SpectralDecomposition {
    fn assemble(graph: Arc<LevelGraph>, eigenvalues: Vec<f64>, phi: Mat<f64>) -> Self {
        let n = graph.vertex_count();
        let e_count = graph.edge_count();
        let scale = pow3(graph.level()) as f64;
        let mut dphi = Mat::<f64>::zeros(e_count, n);
        let mut residuals = vec![0.0; n];
        for j in 0..n {
            let col = phi.col_as_slice(j);
            let d = dphi.col_as_slice_mut(j);
            for (k, e) in graph.edges().iter().enumerate() {
                d[k] = scale * (col[e.head] - col[e.tail]);
            }
            if j > 0 {
                let f = VertexFunction::new(graph.clone(), col.to_vec()).expect("length");
                let lf = laplacian(&f);
                let lam = eigenvalues[j];
                let r: f64 = lf
                    .values()
                    .iter()
                    .zip(col)
                    .zip(graph.vertex_measure())
                    .map(|((l, p), w)| {
                        let d = -l - lam * p;
                        d * d * w
                    })
                    .sum();
                residuals[j] = r.sqrt() / lam;
            }
        }
        // Gram matrix in L²(μ).
        let mu = graph.vertex_measure();
        let weighted = Mat::<f64>::from_fn(n, n, |x, j| phi[(x, j)] * mu[x]);
        let gram = phi.transpose() * &weighted;
        let mut defect = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - target).abs());
            }
        }
        Self {
            graph,
            eigenvalues,
            phi,
            dphi,
            residuals,
            orthonormality_defect: defect,
        }
    }

    pub fn graph(&self) -> &Arc<LevelGraph> {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_1(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty")
    }

    /// Values of `Φ_j` at every vertex.
    pub fn eigenfunction_values(&self, j: usize) -> &[f64] {
        self.phi.col_as_slice(j)
    }

    pub fn eigenfunction(&self, j: usize) -> VertexFunction {
        VertexFunction::new(self.graph.clone(), self.phi.col_as_slice(j).to_vec()).expect("length")
    }

    /// Values of `∂Φ_j` on every edge.
    pub fn gradient_values(&self, j: usize) -> &[f64] {
        self.dphi.col_as_slice(j)
    }

    /// Relative residuals `‖(-Δ)Φ_j - λ_j Φ_j‖ / λ_j` (0 for j = 0).
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        self.orthonormality_defect
    }

    pub fn metadata(&self) -> SolverMetadata {
        SolverMetadata {
            solver_version: SOLVER_VERSION,
            level: self.graph.level(),
            size: self.len(),
            residual_tolerance: RESIDUAL_TOLERANCE,
            max_residual: self.max_residual(),
            orthonormality_defect: self.orthonormality_defect,
            lambda_1: self.lambda_1(),
            lambda_max: self.lambda_max(),
        }
    }

    /// Validity window `[10/λ_max, 0.1/λ_1]` for small-time regressions.
    pub fn validity_window(&self) -> (f64, f64) {
        (10.0 / self.lambda_max(), 0.1 / self.lambda_1())
    }

    /// `⟨f, Φ_j⟩_μ` for all j.
    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        let mu = self.graph.vertex_measure();
        let weighted: Vec<f64> = f.iter().zip(mu).map(|(a, w)| a * w).collect();
        (0..self.len())
            .map(|j| dot(self.phi.col_as_slice(j), &weighted))
            .collect()
    }

    /// `⟨η, ∂Φ_j⟩_ν` for all j.
    pub fn edge_coefficients(&self, eta: &[f64]) -> Vec<f64> {
        let w = self.graph.edge_measure();
        (0..self.len())
            .map(|j| w * dot(self.dphi.col_as_slice(j), eta))
            .collect()
    }

    /// `Σ_j c_j Φ_j`.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        combine(&self.phi, c)
    }

    /// `Σ_j c_j ∂Φ_j`.
    pub fn synthesize_gradient(&self, c: &[f64]) -> Vec<f64> {
        combine(&self.dphi, c)
    }

    /// Weights `e^{-λ_j t} Φ_j(x)` defining the column `p_t(·, x)`.
    fn column_weights(&self, t: f64, x: usize) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &l)| (-l * t).exp() * self.phi[(x, j)])
            .collect()
    }

    /// `p_t(x, x)`.
    pub fn heat_diagonal(&self, t: f64, x: usize) -> Result<f64> {
        check_time(t, false)?;
        self.graph.vertex(x)?;
        Ok(self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &l)| (-l * t).exp() * self.phi[(x, j)].powi(2))
            .sum())
    }

    /// `y ↦ p_t(y, x)`.
    pub fn heat_column(&self, t: f64, x: usize) -> Result<Vec<f64>> {
        check_time(t, false)?;
        self.graph.vertex(x)?;
        Ok(self.synthesize(&self.column_weights(t, x)))
    }

    /// Columns `p_t(·, x)` for every `x` in `xs`, batched into one product.
    pub fn heat_columns(&self, t: f64, xs: &[usize]) -> Result<Mat<f64>> {
        check_time(t, false)?;
        for &x in xs {
            self.graph.vertex(x)?;
        }
        let decay: Vec<f64> = self.eigenvalues.iter().map(|l| (-l * t).exp()).collect();
        let w = Mat::<f64>::from_fn(self.len(), xs.len(), |j, k| decay[j] * self.phi[(xs[k], j)]);
        Ok(&self.phi * &w)
    }

    /// `e ↦ ∂_e p_t(·, x)`, computed from the modes j ≥ 1.
    pub fn heat_column_gradient(&self, t: f64, x: usize) -> Result<Vec<f64>> {
        check_time(t, false)?;
        self.graph.vertex(x)?;
        let mut w = self.column_weights(t, x);
        w[0] = 0.0;
        Ok(self.synthesize_gradient(&w))
    }

    /// `y ↦ ∂_t p_t(y, x)`.
    pub fn heat_column_time_derivative(&self, t: f64, x: usize) -> Result<Vec<f64>> {
        check_time(t, false)?;
        self.graph.vertex(x)?;
        let mut w = self.column_weights(t, x);
        for (wj, &l) in w.iter_mut().zip(&self.eigenvalues) {
            *wj *= -l;
        }
        w[0] = 0.0;
        Ok(self.synthesize(&w))
    }

    /// Row `e' ↦ p⃗_t(e, e')` of the Hodge kernel.
    pub fn hodge_row(&self, t: f64, e: usize) -> Result<Vec<f64>> {
        check_time(t, false)?;
        self.graph.edge(e)?;
        let mut w = vec![0.0; self.len()];
        for j in 1..self.len() {
            let l = self.eigenvalues[j];
            w[j] = (-l * t).exp() / l * self.dphi[(e, j)];
        }
        Ok(self.synthesize_gradient(&w))
    }

    fn check_graph(&self, g: &LevelGraph) -> Result<()> {
        if g.level() == self.graph.level() {
            Ok(())
        } else {
            Err(Error::GraphMismatch {
                left: self.graph.level(),
                right: g.level(),
            })
        }
    }

    /// Binary cache: magic, version, level, size, eigenvalues, residuals,
    /// orthonormality defect, eigenfunctions (column-major), all little-endian.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.len();
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&SOLVER_VERSION.to_le_bytes())?;
        w.write_all(&self.graph.level().to_le_bytes())?;
        w.write_all(&(n as u64).to_le_bytes())?;
        for v in self.eigenvalues.iter().chain(&self.residuals) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.orthonormality_defect.to_le_bytes())?;
        for j in 0..n {
            for v in self.phi.col_as_slice(j) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(graph: Arc<LevelGraph>, mut r: R, path: &Path) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("not a spectral cache".into()));
        }
        let version = read_u32(&mut r)?;
        if version != SOLVER_VERSION {
            return Err(Error::CacheVersion {
                path: path.to_path_buf(),
                found: version,
                expected: SOLVER_VERSION,
            });
        }
        let level = read_u32(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        if level != graph.level() || n != graph.vertex_count() {
            return Err(Error::Format(format!(
                "cache for level {level} (size {n}) does not match level {}",
                graph.level()
            )));
        }
        let eigenvalues = read_f64s(&mut r, n)?;
        let stored_residuals = read_f64s(&mut r, n)?;
        let _stored_defect = read_f64s(&mut r, 1)?;
        let mut phi = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            let col = read_f64s(&mut r, n)?;
            phi.col_as_slice_mut(j).copy_from_slice(&col);
        }
        let sd = Self::assemble(graph, eigenvalues, phi);
        // Residuals are recomputed; a cache whose recorded residuals disagree
        // with the recomputed ones is rejected.
        let recorded = stored_residuals.iter().copied().fold(0.0, f64::max);
        if !(sd.max_residual() <= RESIDUAL_TOLERANCE)
            || !(sd.orthonormality_defect <= ORTHONORMALITY_TOLERANCE)
            || !(recorded <= RESIDUAL_TOLERANCE)
        {
            return Err(Error::SolverFailure(format!(
                "cached decomposition fails validation (residual {:e})",
                sd.max_residual()
            )));
        }
        Ok(sd)
    }

    pub fn eigenvalue_document(&self) -> EigenvalueDocument {
        EigenvalueDocument {
            schema: 1,
            metadata: self.metadata(),
            eigenvalues: self.eigenvalues.clone(),
        }
    }
}

/// JSON export of the spectrum.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenvalueDocument {
    pub schema: u32,
    pub metadata: SolverMetadata,
    pub eigenvalues: Vec<f64>,
}

pub fn cache_path(dir: &Path, level: u32) -> PathBuf {
    dir.join(format!("spectrum-m{level}-v{SOLVER_VERSION}.bin"))
}

/// Load a cached decomposition, or compute and store it. A stale or invalid
/// cache is recomputed with a warning.
pub fn load_or_compute(graph: Arc<LevelGraph>, dir: Option<&Path>) -> Result<SpectralDecomposition> {
    let Some(dir) = dir else {
        return eigendecompose(graph);
    };
    let path = cache_path(dir, graph.level());
    if path.exists() {
        match fs::File::open(&path)
            .map_err(Error::from)
            .and_then(|f| SpectralDecomposition::read_cache(graph.clone(), std::io::BufReader::new(f), &path))
        {
            Ok(sd) => return Ok(sd),
            Err(e) => log::warn!("ignoring spectral cache {}: {e}", path.display()),
        }
    }
    let sd = eigendecompose(graph)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
        sd.write_cache(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(sd)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(basis: &Mat<f64>, c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis.nrows()];
    for (j, &cj) in c.iter().enumerate() {
        if cj == 0.0 {
            continue;
        }
        for (o, b) in out.iter_mut().zip(basis.col_as_slice(j)) {
            *o += cj * b;
        }
    }
    out
}

/// Dense symmetric kernel indexed by vertex pairs.
#[derive(Debug, Clone)]
pub struct HeatKernelMatrix {
    pub t: f64,
    pub values: Mat<f64>,
}

/// Dense symmetric kernel indexed by edge pairs.
#[derive(Debug, Clone)]
pub struct HodgeKernelMatrix {
    pub t: f64,
    pub values: Mat<f64>,
}

fn symmetric_product(basis: &Mat<f64>, weights: &[f64]) -> Mat<f64> {
    let (rows, cols) = (basis.nrows(), basis.ncols());
    let scaled = Mat::<f64>::from_fn(rows, cols, |i, j| basis[(i, j)] * weights[j]);
    let prod = &scaled * basis.transpose();
    Mat::<f64>::from_fn(rows, rows, |i, j| 0.5 * (prod[(i, j)] + prod[(j, i)]))
}

/// `p_t(x, y) = Σ_j e^{-λ_j t} Φ_j(x) Φ_j(y)`.
pub fn heat_kernel(sd: &SpectralDecomposition, t: f64) -> Result<HeatKernelMatrix> {
    check_time(t, false)?;
    let w: Vec<f64> = sd.eigenvalues.iter().map(|l| (-l * t).exp()).collect();
    Ok(HeatKernelMatrix {
        t,
        values: symmetric_product(&sd.phi, &w),
    })
}

/// `∂_t p_t(x, y) = -Σ_{j≥1} λ_j e^{-λ_j t} Φ_j(x) Φ_j(y)`.
pub fn heat_time_derivative(sd: &SpectralDecomposition, t: f64) -> Result<Mat<f64>> {
    check_time(t, false)?;
    let w: Vec<f64> = sd.eigenvalues.iter().map(|l| -l * (-l * t).exp()).collect();
    Ok(symmetric_product(&sd.phi, &w))
}

/// `P_t f`; `t = 0` returns `f` unchanged.
pub fn heat_apply(sd: &SpectralDecomposition, t: f64, f: &VertexFunction) -> Result<VertexFunction> {
    check_time(t, true)?;
    sd.check_graph(f.graph())?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let mut c = sd.coefficients(f.values());
    for (cj, l) in c.iter_mut().zip(&sd.eigenvalues) {
        *cj *= (-l * t).exp();
    }
    VertexFunction::new(sd.graph.clone(), sd.synthesize(&c))
}

/// `∂ P_t f` assembled directly from the gradient modes.
pub fn heat_apply_gradient(sd: &SpectralDecomposition, t: f64, f: &VertexFunction) -> Result<EdgeFunction> {
    check_time(t, true)?;
    sd.check_graph(f.graph())?;
    if t == 0.0 {
        return Ok(gradient(f));
    }
    let mut c = sd.coefficients(f.values());
    c[0] = 0.0;
    for (cj, l) in c.iter_mut().zip(&sd.eigenvalues) {
        *cj *= (-l * t).exp();
    }
    EdgeFunction::new(sd.graph.clone(), sd.synthesize_gradient(&c))
}

/// `p⃗_t(e, e') = Σ_{j≥1} λ_j^{-1} e^{-λ_j t} ∂Φ_j(e) ∂Φ_j(e')`, the kernel of
/// `e^{tΔ⃗}` against ν_m.
pub fn hodge_kernel(sd: &SpectralDecomposition, g: &LevelGraph, t: f64) -> Result<HodgeKernelMatrix> {
    check_time(t, false)?;
    sd.check_graph(g)?;
    let w: Vec<f64> = sd
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(j, l)| if j == 0 { 0.0 } else { (-l * t).exp() / l })
        .collect();
    Ok(HodgeKernelMatrix {
        t,
        values: symmetric_product(&sd.dphi, &w),
    })
}

/// `e^{tΔ⃗} η`; `t = 0` returns `η` unchanged.
pub fn hodge_apply(sd: &SpectralDecomposition, g: &LevelGraph, t: f64, eta: &EdgeFunction) -> Result<EdgeFunction> {
    check_time(t, true)?;
    sd.check_graph(g)?;
    sd.check_graph(eta.graph())?;
    if t == 0.0 {
        return Ok(eta.clone());
    }
    let mut c = sd.edge_coefficients(eta.values());
    c[0] = 0.0;
    for j in 1..sd.len() {
        let l = sd.eigenvalues[j];
        c[j] *= (-l * t).exp() / l;
    }
    EdgeFunction::new(sd.graph.clone(), sd.synthesize_gradient(&c))
}

/// `(-Δ)^s f = Σ_{j≥1} λ_j^s ⟨f, Φ_j⟩ Φ_j`; the zero mode is dropped for every
/// `s`, so `s = 0` gives `f` minus its mean.
pub fn fractional_apply(sd: &SpectralDecomposition, s: f64, f: &VertexFunction) -> Result<VertexFunction> {
    if !(s >= 0.0) {
        return Err(Error::NegativePower(s));
    }
    sd.check_graph(f.graph())?;
    let mut c = sd.coefficients(f.values());
    c[0] = 0.0;
    for (cj, l) in c.iter_mut().zip(&sd.eigenvalues).skip(1) {
        *cj *= l.powf(s);
    }
    VertexFunction::new(sd.graph.clone(), sd.synthesize(&c))
}

/// `max_{j≥1} ‖Φ_j‖_∞ / λ_j^{d_h/(2 d_w)}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenfunctionSupReport {
    pub level: u32,
    pub exponent: f64,
    pub max_ratio: f64,
    pub argmax: usize,
}

pub fn eigenfunction_sup_check(sd: &SpectralDecomposition) -> EigenfunctionSupReport {
    let exponent = D_H / (2.0 * D_W);
    let (argmax, max_ratio) = (1..sd.len())
        .map(|j| {
            let sup = sd.eigenfunction_values(j).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (j, sup / sd.eigenvalues[j].powf(exponent))
        })
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    EigenfunctionSupReport {
        level: sd.graph.level(),
        exponent,
        max_ratio,
        argmax,
    }
}

/// `exp(t A)` by scaling and squaring of a truncated Taylor series. Used as
/// an independent check of the spectral semigroups.
pub fn matrix_exponential_oracle(a: &Mat<f64>, t: f64) -> Result<Mat<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::OutOfRange("matrix is not square".into()));
    }
    if n > EXPM_ORACLE_CAP {
        return Err(Error::SizeCap {
            n,
            cap: EXPM_ORACLE_CAP,
        });
    }
    let mut norm = 0.0f64;
    for j in 0..n {
        let col: f64 = (0..n).map(|i| a[(i, j)].abs()).sum();
        norm = norm.max(col);
    }
    norm *= t.abs();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = t / 2f64.powi(squarings as i32);
    let b = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let mut result = Mat::<f64>::identity(n, n);
    let mut term = Mat::<f64>::identity(n, n);
    for k in 1..=30 {
        term = &term * &b;
        let inv = 1.0 / k as f64;
        let mut tmax = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                term[(i, j)] *= inv;
                result[(i, j)] += term[(i, j)];
                tmax = tmax.max(term[(i, j)].abs());
            }
        }
        if tmax < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Edge Laplacian `Δ⃗ = -∂∂*` as a dense matrix on edge space.
pub fn hodge_laplacian_matrix(g: &LevelGraph) -> Mat<f64> {
    let m = g.edge_count();
    let scale = pow3(g.level()) as f64;
    let mu = g.vertex_measure();
    let mut a = Mat::<f64>::zeros(m, m);
    // (∂*η)(x) = (Σ_{head x} η - Σ_{tail x} η) / μ(x); ∂ then differences it.
    for (k, ek) in g.edges().iter().enumerate() {
        for &(v, sign_k) in &[(ek.head, 1.0), (ek.tail, -1.0)] {
            for &l in g.incident(v) {
                let el = g.edges()[l];
                let sign_l = if el.head == v { 1.0 } else { -1.0 };
                a[(k, l)] -= scale * sign_k * sign_l / mu[v];
            }
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spectrum(m: u32) -> SpectralDecomposition {
        eigendecompose(Arc::new(LevelGraph::build(m).unwrap())).unwrap()
    }

    /// Characteristic polynomial of an integer matrix by Faddeev–LeVerrier
    /// in exact arithmetic; coefficients from the constant term upwards.
    fn charpoly(a: &[Vec<i128>]) -> Vec<i128> {
        let n = a.len();
        let mut coeffs = vec![0i128; n + 1];
        coeffs[n] = 1;
        let mut m = vec![vec![0i128; n]; n];
        for k in 1..=n {
            let mut next = vec![vec![0i128; n]; n];
            for i in 0..n {
                for j in 0..n {
                    next[i][j] = (0..n).map(|l| a[i][l] * m[l][j]).sum::<i128>();
                }
                next[i][i] += coeffs[n + 1 - k];
            }
            m = next;
            let trace: i128 = (0..n).map(|i| (0..n).map(|l| a[i][l] * m[l][i]).sum::<i128>()).sum();
            assert_eq!(trace % k as i128, 0);
            coeffs[n - k] = -trace / k as i128;
        }
        coeffs
    }

    /// Roots of an integer polynomial whose roots all lie in `0..=bound`,
    /// with multiplicity, by exact evaluation and synthetic division.
    fn integer_roots(mut p: Vec<i128>, bound: i128) -> Vec<i128> {
        let mut roots = Vec::new();
        for r in 0..=bound {
            while p.len() > 1 && p.iter().rev().fold(0i128, |acc, &c| acc * r + c) == 0 {
                let deg = p.len() - 1;
                let mut q = vec![0i128; deg];
                let mut carry = 0i128;
                for k in (0..deg).rev() {
                    carry = p[k + 1] + carry * r;
                    q[k] = carry;
                }
                p = q;
                roots.push(r);
            }
        }
        assert_eq!(p.len(), 1, "polynomial has roots outside 0..=bound");
        roots
    }

    #[test]
    fn level_zero_matches_characteristic_polynomial() {
        // At level 0 every μ_0 weight is 1/5, so -Δ = 5 L with the integer
        // energy matrix L of the 4-edge star.
        let g = LevelGraph::build(0).unwrap();
        let mut a = vec![vec![0i128; 5]; 5];
        for e in g.edges() {
            a[e.tail][e.head] -= 5;
            a[e.head][e.tail] -= 5;
            a[e.tail][e.tail] += 5;
            a[e.head][e.head] += 5;
        }
        let roots = integer_roots(charpoly(&a), 100);
        assert_eq!(roots, vec![0, 5, 5, 5, 25]);
        let sd = spectrum(0);
        for (l, r) in sd.eigenvalues().iter().zip(&roots) {
            assert!((l - *r as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_and_positivity() {
        for m in 0..=2 {
            let g = LevelGraph::build(m).unwrap();
            let a = whitened_matrix(&g);
            let trace: f64 = (0..a.nrows()).map(|i| a[(i, i)]).sum();
            let sd = spectrum(m);
            let sum: f64 = sd.eigenvalues().iter().sum();
            assert!((trace - sum).abs() / trace < 1e-9);
            assert_eq!(sd.len(), g.vertex_count());
            assert!(sd.eigenvalues().iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn decomposition_invariants() {
        let sd = spectrum(3);
        assert!(sd.orthonormality_defect() < 1e-10);
        assert!(sd.max_residual() < 1e-8);
        assert!(sd.eigenfunction_values(0).iter().all(|&v| v == 1.0));
        assert_eq!(sd.eigenvalues()[0], 0.0);
        assert!(sd.lambda_1() > 0.0);
        assert!(sd.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn size_cap() {
        let g = Arc::new(LevelGraph::build(2).unwrap());
        assert!(matches!(
            eigendecompose_with_cap(g, 50),
            Err(Error::SizeCap { n: 101, cap: 50 })
        ));
    }

    #[test]
    fn heat_kernel_properties() {
        let sd = spectrum(2);
        let mu = sd.graph().vertex_measure().to_vec();
        let n = sd.len();
        let k = heat_kernel(&sd, 0.01).unwrap();
        for x in 0..n {
            let row: f64 = (0..n).map(|y| k.values[(x, y)] * mu[y]).sum();
            assert!((row - 1.0).abs() < 1e-10);
            for y in 0..n {
                assert_eq!(k.values[(x, y)], k.values[(y, x)]);
            }
        }
        let late = heat_kernel(&sd, 100.0 / sd.lambda_1()).unwrap();
        for x in 0..n {
            for y in 0..n {
                assert!((late.values[(x, y)] - 1.0).abs() < 1e-8);
            }
        }
        assert!(heat_kernel(&sd, 0.0).is_err());
        // Column and matrix agree.
        let col = sd.heat_column(0.01, 7).unwrap();
        for y in 0..n {
            assert!((col[y] - k.values[(y, 7)]).abs() < 1e-10 * col[y].abs().max(1.0));
        }
    }

    #[test]
    fn batched_columns_match() {
        let sd = spectrum(2);
        let xs = [0, 7, 50];
        let batch = sd.heat_columns(0.01, &xs).unwrap();
        for (k, &x) in xs.iter().enumerate() {
            let col = sd.heat_column(0.01, x).unwrap();
            for (y, v) in col.iter().enumerate() {
                assert!((batch[(y, k)] - v).abs() < 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn heat_kernel_semigroup() {
        let sd = spectrum(2);
        let mu = sd.graph().vertex_measure().to_vec();
        let (t, s) = (0.003, 0.007);
        let (kt, ks, kts) = (
            heat_kernel(&sd, t).unwrap(),
            heat_kernel(&sd, s).unwrap(),
            heat_kernel(&sd, t + s).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let x = rng.gen_range(0..sd.len());
            let y = rng.gen_range(0..sd.len());
            let conv: f64 = (0..sd.len())
                .map(|z| kt.values[(x, z)] * ks.values[(z, y)] * mu[z])
                .sum();
            let target = kts.values[(x, y)];
            assert!((conv - target).abs() < 1e-9 * target.abs().max(1.0));
        }
    }

    #[test]
    fn on_diagonal_decreasing() {
        let sd = spectrum(2);
        for x in [0, sd.graph().root(), 50] {
            let mut prev = f64::INFINITY;
            for k in 0..40 {
                let t = 1e-5 * 1.4f64.powi(k);
                let v = sd.heat_diagonal(t, x).unwrap();
                // Strict until only the constant mode is left.
                if v - 1.0 > 1e-12 {
                    assert!(v < prev);
                } else {
                    assert!(v <= prev + 1e-14);
                }
                prev = v;
            }
        }
    }

    #[test]
    fn time_derivative_matches_central_differences() {
        let sd = spectrum(2);
        for t in [1e-3, 1e-2, 0.1] {
            let d = heat_time_derivative(&sd, t).unwrap();
            let h = t * 1e-4;
            let (plus, minus) = (heat_kernel(&sd, t + h).unwrap(), heat_kernel(&sd, t - h).unwrap());
            for x in [0, 10, 50] {
                for y in [0, 33, 100] {
                    let fd = (plus.values[(x, y)] - minus.values[(x, y)]) / (2.0 * h);
                    let exact = d[(x, y)];
                    assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3));
                }
            }
        }
        let late = heat_time_derivative(&sd, 200.0 / sd.lambda_1()).unwrap();
        assert!(late[(3, 3)].abs() < 1e-12);
        let early = heat_time_derivative(&sd, 1e-4).unwrap();
        assert!(early[(3, 3)] < 0.0);
    }

    #[test]
    fn heat_apply_basics() {
        let sd = spectrum(2);
        let g = sd.graph().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = VertexFunction::from_fn(g.clone(), |_| rng.gen_range(-1.0..1.0));
        assert_eq!(heat_apply(&sd, 0.0, &f).unwrap().values(), f.values());
        let c = VertexFunction::constant(g.clone(), 2.5);
        for v in heat_apply(&sd, 0.1, &c).unwrap().values() {
            assert!((v - 2.5).abs() < 1e-10);
        }
        let n0 = f.lp_norm(2.0).unwrap();
        for t in [1e-4, 1e-2, 1.0] {
            assert!(heat_apply(&sd, t, &f).unwrap().lp_norm(2.0).unwrap() <= n0);
        }
        assert!(heat_apply(&sd, -1.0, &f).is_err());
    }

    #[test]
    fn gradient_modes_are_orthogonal() {
        let sd = spectrum(2);
        let w = sd.graph().edge_measure();
        for i in 1..sd.len() {
            for j in 1..sd.len() {
                let ip: f64 = w * dot(sd.gradient_values(i), sd.gradient_values(j));
                let target = if i == j { sd.eigenvalues()[i] } else { 0.0 };
                assert!((ip - target).abs() < 1e-9 * sd.eigenvalues()[i].max(1.0));
            }
        }
    }

    #[test]
    fn hodge_kernel_matches_expm() {
        let sd = spectrum(2);
        let g = sd.graph().clone();
        let a = hodge_laplacian_matrix(&g);
        let w = g.edge_measure();
        for t in [1e-3, 1e-2, 1e-1] {
            let k = hodge_kernel(&sd, &g, t).unwrap();
            let e = matrix_exponential_oracle(&a, t).unwrap();
            let mut worst = 0.0f64;
            for i in 0..g.edge_count() {
                for j in 0..g.edge_count() {
                    worst = worst.max((k.values[(i, j)] * w - e[(i, j)]).abs());
                }
            }
            assert!(worst < 1e-8, "t={t}: {worst:e}");
        }
        let late = hodge_kernel(&sd, &g, 200.0 / sd.lambda_1()).unwrap();
        assert!(late.values[(0, 0)].abs() < 1e-20);
    }

    #[test]
    fn hodge_apply_basics() {
        let sd = spectrum(2);
        let g = sd.graph().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let eta = EdgeFunction::from_fn(g.clone(), |_| rng.gen_range(-1.0..1.0));
        assert_eq!(hodge_apply(&sd, &g, 0.0, &eta).unwrap().values(), eta.values());
        let mut prev = eta.lp_norm(2.0).unwrap();
        for t in [1e-4, 1e-3, 1e-2, 1e-1] {
            let cur = hodge_apply(&sd, &g, t, &eta).unwrap().lp_norm(2.0).unwrap();
            assert!(cur <= prev);
            prev = cur;
        }
        let d1 = EdgeFunction::new(g.clone(), sd.gradient_values(1).to_vec()).unwrap();
        let t = 0.05;
        let out = hodge_apply(&sd, &g, t, &d1).unwrap();
        let factor = (-sd.lambda_1() * t).exp();
        for (a, b) in out.values().iter().zip(d1.values()) {
            assert!((a - factor * b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn fractional_powers() {
        let sd = spectrum(2);
        let g = sd.graph().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = VertexFunction::from_fn(g.clone(), |_| rng.gen_range(-1.0..1.0));
        let one = fractional_apply(&sd, 1.0, &f).unwrap();
        let lap = laplacian(&f);
        for (a, b) in one.values().iter().zip(lap.values()) {
            assert!((a + b).abs() < 1e-9 * b.abs().max(1.0));
        }
        let zero = fractional_apply(&sd, 0.0, &f).unwrap();
        let mean = f.mean();
        for (a, b) in zero.values().iter().zip(f.values()) {
            assert!((a - (b - mean)).abs() < 1e-12);
        }
        let fc = f.centered();
        let composed = fractional_apply(&sd, 0.3, &fractional_apply(&sd, 0.45, &fc).unwrap()).unwrap();
        let direct = fractional_apply(&sd, 0.75, &fc).unwrap();
        let scale = direct.lp_norm(f64::INFINITY).unwrap();
        for (a, b) in composed.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-9 * scale);
        }
        assert!(matches!(fractional_apply(&sd, -0.1, &f), Err(Error::NegativePower(_))));
    }

    #[test]
    fn expm_oracle_basics() {
        let z = Mat::<f64>::zeros(4, 4);
        let e = matrix_exponential_oracle(&z, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(e[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        let g = LevelGraph::build(1).unwrap();
        let a = Mat::<f64>::from_fn(21, 21, |i, j| -whitened_matrix(&g)[(i, j)]);
        let (t, s) = (0.02, 0.05);
        let prod = &matrix_exponential_oracle(&a, t).unwrap() * &matrix_exponential_oracle(&a, s).unwrap();
        let sum = matrix_exponential_oracle(&a, t + s).unwrap();
        for i in 0..21 {
            for j in 0..21 {
                assert!((prod[(i, j)] - sum[(i, j)]).abs() < 1e-10);
            }
        }
        assert!(matrix_exponential_oracle(&Mat::<f64>::zeros(601, 601), 1.0).is_err());
    }

    #[test]
    fn heat_kernel_matches_expm_at_level_one() {
        let sd = spectrum(1);
        let g = sd.graph().clone();
        let mu = g.vertex_measure();
        let a = Mat::<f64>::from_fn(21, 21, |i, j| -whitened_matrix(&g)[(i, j)]);
        for t in [1e-3, 0.05, 0.5] {
            let e = matrix_exponential_oracle(&a, t).unwrap();
            let k = heat_kernel(&sd, t).unwrap();
            for x in 0..21 {
                for y in 0..21 {
                    let oracle = e[(x, y)] / (mu[x] * mu[y]).sqrt();
                    assert!((oracle - k.values[(x, y)]).abs() < 1e-10 * oracle.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn eigenfunction_sup_ratio_is_finite() {
        let r = eigenfunction_sup_check(&spectrum(2));
        assert!(r.max_ratio.is_finite() && r.max_ratio > 0.0);
        assert!(r.argmax >= 1);
    }

    #[test]
    fn cache_round_trip() {
        let sd = spectrum(2);
        let mut buf = Vec::new();
        sd.write_cache(&mut buf).unwrap();
        let back = SpectralDecomposition::read_cache(sd.graph().clone(), buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.eigenvalues(), sd.eigenvalues());
        // Corrupt the version field.
        buf[8] = 99;
        assert!(matches!(
            SpectralDecomposition::read_cache(sd.graph().clone(), buf.as_slice(), Path::new("mem")),
            Err(Error::CacheVersion { found: 99, .. })
        ));
    }
}
