//! Exact identities of the discrete calculus; all hard gates.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::family::{generate_family, FamilyKind};
use super::hodge::check_intertwining;
use super::report::{EstimateReport, Gate};
use crate::calculus::{antiderivative, codifferential, energy, gradient, EdgeFunction, VertexFunction};
use crate::error::Result;
use crate::graph::{pow3, LevelGraph};
use crate::spectral::{heat_kernel, SpectralDecomposition, ORTHONORMALITY_TOLERANCE, RESIDUAL_TOLERANCE};

/// `max |Δ + ∂*∂| / max |Δ|` with `Δ` assembled from the adjacency formula
/// `Δf(x) = 3^m μ(x)^{-1} Σ_{y∼x} (f(y) − f(x))`.
pub fn laplacian_identity(g: &Arc<LevelGraph>) -> Result<EstimateReport> {
    let scale = pow3(g.level()) as f64;
    let mu = g.vertex_measure();
    let (mut defect, mut peak) = (0.0f64, 0.0f64);
    for v in 0..g.vertex_count() {
        let unit = VertexFunction::indicator(g.clone(), v)?;
        let composed = codifferential(&gradient(&unit));
        let mut direct = vec![0.0; g.vertex_count()];
        for y in g.neighbors(v) {
            direct[y] += scale / mu[y];
            direct[v] -= scale / mu[v];
        }
        for (d, c) in direct.iter().zip(composed.values()) {
            defect = defect.max((d + c).abs());
            peak = peak.max(d.abs());
        }
    }
    let rel = defect / peak;
    let mut r = EstimateReport::new("laplacian_identity", g.level(), Gate::Hard);
    r.sup_ratio = rel;
    r.at_most("relative_defect", rel, 1e-12);
    Ok(r.finish())
}

fn random_edge(g: &Arc<LevelGraph>, rng: &mut ChaCha8Rng) -> EdgeFunction {
    EdgeFunction::from_fn(g.clone(), |_| rng.gen_range(-1.0..=1.0))
}

/// `⟨η, ∂f⟩_ν = ⟨∂*η, f⟩_μ` and `∂(∫η) = η` for random `f`, `η`.
pub fn adjointness_and_antiderivative(g: &Arc<LevelGraph>, count: usize, seed: u64) -> Result<EstimateReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut adj, mut anti) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let f = VertexFunction::from_fn(g.clone(), |_| rng.gen_range(-1.0..=1.0));
        let eta = random_edge(g, &mut rng);
        let a = eta.inner(&gradient(&f))?;
        let b = codifferential(&eta).inner(&f)?;
        adj = adj.max((a - b).abs() / (a.abs().max(b.abs()).max(1e-300) + eta.lp_norm(2.0)? * f.lp_norm(2.0)?));
        let base = rng.gen_range(0..g.vertex_count());
        let back = gradient(&antiderivative(&eta, base)?);
        for (x, y) in back.values().iter().zip(eta.values()) {
            anti = anti.max((x - y).abs());
        }
    }
    let mut r = EstimateReport::new("adjointness", g.level(), Gate::Hard).param("samples", count);
    r.sup_ratio = adj.max(anti);
    r.at_most("adjoint_defect", adj, 1e-12);
    r.at_most("antiderivative_defect", anti, 1e-9);
    Ok(r.finish())
}

/// `Σ_e ν|η| ≤ Σ_x d(x0,x)|∂*η(x)|μ(x)` for `count` random η and each of
/// `basepoints` basepoints; violations beyond 1e-10 relative rounding.
pub fn codifferential_poincare(
    g: &Arc<LevelGraph>,
    count: usize,
    basepoints: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = super::sample_vertices(g, seed, basepoints.saturating_sub(2));
    let bases = &bases[..basepoints.min(bases.len())];
    let dists = bases.iter().map(|&x| g.distances_from(x)).collect::<Result<Vec<_>>>()?;
    let mu = g.vertex_measure();
    let nu = g.edge_measure();
    let mut r = EstimateReport::new("codifferential_poincare", g.level(), Gate::Hard)
        .param("edge_functions", count)
        .param("basepoints", bases);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let eta = random_edge(g, &mut rng);
        let lhs: f64 = eta.values().iter().map(|v| nu * v.abs()).sum();
        let div = codifferential(&eta);
        for d in &dists {
            let rhs: f64 = div
                .values()
                .iter()
                .zip(d)
                .zip(mu)
                .map(|((v, dx), m)| dx * v.abs() * m)
                .sum();
            worst = worst.max(lhs / rhs);
            if lhs > rhs + 1e-10 * rhs.max(1.0) {
                r.violations += 1;
            }
        }
    }
    r.sup_ratio = worst;
    Ok(r.finish())
}

/// `E_m(ext f) = E_n(f)` for random level-n functions.
pub fn energy_invariance(levels: &[u32], n: u32, count: usize, seed: u64) -> Result<EstimateReport> {
    let coarse = Arc::new(LevelGraph::build(n)?);
    let base = generate_family(
        &coarse,
        None,
        FamilyKind::RandomPiecewiseAffine { level: n },
        count,
        seed,
    )?;
    let mut worst = 0.0f64;
    for &m in levels {
        let g = Arc::new(LevelGraph::build(m)?);
        let ext = generate_family(&g, None, FamilyKind::RandomPiecewiseAffine { level: n }, count, seed)?;
        for (f, e) in base.iter().zip(ext.iter()) {
            let (a, b) = (energy(f), energy(e));
            worst = worst.max((a - b).abs() / a);
        }
    }
    let mut r = EstimateReport::new(
        "energy_invariance",
        levels.iter().copied().max().unwrap_or(n),
        Gate::Hard,
    )
    .param("levels", levels)
    .param("n", n)
    .param("functions", count);
    r.sup_ratio = worst;
    r.at_most("relative_error", worst, 1e-12);
    Ok(r.finish())
}

/// Times at which the full kernel is checked.
pub const KERNEL_CHECK_TIMES: [f64; 2] = [1e-3, 1e-1];

/// `Σ_y p_t(x,y) μ(y) = 1`, `p_t(x,y) = p_t(y,x)` on sampled columns, and
/// the solver's orthonormality and residual bounds.
pub fn kernel_identities(sd: &SpectralDecomposition, seed: u64) -> Result<EstimateReport> {
    let g = sd.graph();
    let mu = g.vertex_measure();
    let mut mass = 0.0f64;
    for &t in &KERNEL_CHECK_TIMES {
        let k = heat_kernel(sd, t)?;
        for x in 0..g.vertex_count() {
            let s: f64 = (0..g.vertex_count()).map(|y| k.values[(x, y)] * mu[y]).sum();
            mass = mass.max((s - 1.0).abs());
        }
    }
    let sample = super::sample_vertices(g, seed, 10);
    let mut asym = 0.0f64;
    for &t in &KERNEL_CHECK_TIMES {
        let cols = sample
            .iter()
            .map(|&x| sd.heat_column(t, x))
            .collect::<Result<Vec<_>>>()?;
        let peak = cols.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        for (i, &x) in sample.iter().enumerate() {
            for (j, &y) in sample.iter().enumerate() {
                asym = asym.max((cols[i][y] - cols[j][x]).abs() / peak);
            }
        }
    }
    let mut r = EstimateReport::new("kernel_identities", g.level(), Gate::Hard)
        .param("times", KERNEL_CHECK_TIMES)
        .param("symmetry_sample", &sample);
    r.at_most("stochastic_completeness", mass, 1e-10);
    r.at_most("symmetry", asym, 1e-10);
    r.at_most("orthonormality", sd.orthonormality_defect(), ORTHONORMALITY_TOLERANCE);
    r.at_most("max_residual", sd.max_residual(), RESIDUAL_TOLERANCE);
    r.sup_ratio = mass.max(asym);
    Ok(r.finish())
}

/// All exact identities at the level of `sd`.
pub fn exact_suite(sd: &SpectralDecomposition, seed: u64) -> Result<Vec<EstimateReport>> {
    let g = sd.graph();
    let m = g.level();
    let mut out = vec![
        laplacian_identity(g)?,
        adjointness_and_antiderivative(g, 50, seed)?,
        codifferential_poincare(g, 200, 5, seed)?,
        kernel_identities(sd, seed)?,
        check_intertwining(sd, 100, seed)?,
    ];
    if m >= 2 {
        let levels: Vec<u32> = (2..=m).collect();
        out.push(energy_invariance(&levels, 1, 10, seed)?);
    }
    Ok(out)
}
