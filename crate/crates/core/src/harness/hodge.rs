//! Hodge semigroup: intertwining with the heat semigroup and kernel bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{EstimateReport, Gate};
use super::{better, decay_fit, SupTracker, DECAY_FRACTION, RESOLUTION_FLOOR, STABILITY_FACTOR};
use crate::calculus::{gradient, VertexFunction};
use crate::dims::{D_W, SUB_GAUSSIAN_EXPONENT};
use crate::error::Result;
use crate::graph::LevelGraph;
use crate::spectral::{heat_apply, hodge_apply, SpectralDecomposition};

/// Times used by the intertwining identity.
pub const INTERTWINING_TIMES: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

/// Hard gate: `‖∂P_t f − P⃗_t ∂f‖_ν ≤ 1e-9 ‖∂f‖_ν` for random `f`.
pub fn check_intertwining(sd: &SpectralDecomposition, count: usize, seed: u64) -> Result<EstimateReport> {
    let g = sd.graph();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let f = VertexFunction::from_fn(g.clone(), |_| rng.gen_range(-1.0..=1.0));
        let df = gradient(&f);
        let norm = df.lp_norm(2.0)?;
        for &t in &INTERTWINING_TIMES {
            let lhs = gradient(&heat_apply(sd, t, &f)?);
            let rhs = hodge_apply(sd, g, t, &df)?;
            let diff: Vec<f64> = lhs.values().iter().zip(rhs.values()).map(|(a, b)| a - b).collect();
            let d = crate::calculus::EdgeFunction::new(g.clone(), diff)?.lp_norm(2.0)?;
            worst = worst.max(d / norm);
        }
    }
    let mut r = EstimateReport::new("intertwining", g.level(), Gate::Hard)
        .param("functions", count)
        .param("times", INTERTWINING_TIMES);
    r.sup_ratio = worst;
    r.at_most("relative_defect", worst, 1e-9);
    Ok(r.finish())
}

/// Edges incident to the sampled vertices plus `extra` random edges.
pub fn sample_edges(g: &LevelGraph, seed: u64, extra: usize) -> Vec<usize> {
    let mut out: Vec<usize> = super::sample_vertices(g, seed, 2)
        .into_iter()
        .filter_map(|v| g.incident(v).first().copied())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(29));
    for _ in 0..extra.min(g.edge_count()) {
        out.push(rng.gen_range(0..g.edge_count()));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Midpoint distances from edge `e` to every edge.
fn edge_distances(g: &LevelGraph, e: usize) -> Result<Vec<f64>> {
    let edge = g.edges()[e];
    let (dt, dh) = (g.distances_from(edge.tail)?, g.distances_from(edge.head)?);
    let h = g.edge_measure();
    Ok(g.edges()
        .iter()
        .enumerate()
        .map(|(k, b)| {
            if k == e {
                0.0
            } else {
                dt[b.tail].min(dt[b.head]).min(dh[b.tail]).min(dh[b.head]) + h
            }
        })
        .collect())
}

/// (a) `sup_e Σ_{e'} ν|p⃗_t(e,e')|` stable in t; (b) the weighted sup
/// `|p⃗_t(e,e')| t^{1/d_w} exp(c (d^{d_w}/t)^{1/(d_w−1)})` stable in t;
/// (c) `e^{-λ_1 t}` decay of `sup |p⃗_t|` for `t ≥ 1`.
pub fn check_hodge_kernel_bounds(
    sd: &SpectralDecomposition,
    edges: &[usize],
    ts: &[f64],
    c: f64,
) -> Result<EstimateReport> {
    let g = sd.graph();
    let nu = g.edge_measure();
    let dists = edges
        .iter()
        .map(|&e| edge_distances(g, e))
        .collect::<Result<Vec<_>>>()?;
    let mut r = EstimateReport::new("hodge_kernel", g.level(), Gate::Statistical)
        .param("c", c)
        .param("edges", edges)
        .param("t_points", ts.len());
    let mut integral = Vec::with_capacity(ts.len());
    let mut tracker = SupTracker::default();
    for &t in ts {
        let mut row_sup = 0.0f64;
        let mut best = None;
        for (&e, d) in edges.iter().zip(&dists) {
            let row = sd.hodge_row(t, e)?;
            row_sup = row_sup.max(row.iter().map(|v| nu * v.abs()).sum());
            let peak = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (v, &dd) in row.iter().zip(d) {
                if v.abs() < RESOLUTION_FLOOR * peak {
                    continue;
                }
                let weight = (c * (dd.powf(D_W) / t).powf(SUB_GAUSSIAN_EXPONENT)).exp();
                best = better(best, v.abs() * t.powf(1.0 / D_W) * weight, 1.0);
            }
        }
        integral.push(row_sup);
        tracker.push(t, best);
    }
    let spread = super::spread(&integral);
    r.set_param("row_integral_sup", integral.iter().cloned().fold(0.0, f64::max));
    r.at_most("row_integral_spread", spread, STABILITY_FACTOR);
    tracker.finish_into(&mut r);
    let (fit, rate) = decay_fit(|t| {
        let mut s = 0.0f64;
        for &e in edges {
            s = s.max(sd.hodge_row(t, e)?.iter().fold(0.0, |a, v| a.max(v.abs())));
        }
        Ok(s)
    })?;
    r.at_least("decay_rate", rate, DECAY_FRACTION * sd.lambda_1());
    r.fits.push(fit);
    Ok(r.finish())
}
