//! Pointwise and integrated gradient bounds for the heat kernel.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fit::ExponentFit;
use super::report::{EstimateReport, Gate, ReportRow};
use super::{better, decay_fit, nearest_endpoints, spread, FunctionFamily, SupTracker, DECAY_FRACTION};
use super::{RESOLUTION_FLOOR, STABILITY_FACTOR};
use crate::dims::D_W;
use crate::error::{Error, Result};
use crate::graph::LevelGraph;
use crate::spectral::{heat_apply_gradient, SpectralDecomposition};

/// Where `p_{ct}(·, x)` is read for an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeEvaluation {
    /// The endpoint nearer to the source.
    NearestEndpoint,
    /// Mean of the two endpoint values.
    EndpointAverage,
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::OutOfRange(format!("constant c = {c} must exceed 1")));
    }
    Ok(())
}

/// Per-t sup of `|∂_e p_t(·,x)| t^{1/d_w} / p_{ct}(e, x)` over sources and edges.
pub fn gradient_bound_sups(
    sd: &SpectralDecomposition,
    sources: &[usize],
    ts: &[f64],
    c: f64,
    eval: EdgeEvaluation,
) -> Result<SupTracker> {
    check_c(c)?;
    let g = sd.graph();
    let mut near_by_source = Vec::with_capacity(sources.len());
    for &x in sources {
        near_by_source.push(nearest_endpoints(g, &g.distances_from(x)?));
    }
    let mut tracker = SupTracker::default();
    for &t in ts {
        let scale = t.powf(-1.0 / D_W);
        let mut best = None;
        for (&x, near) in sources.iter().zip(&near_by_source) {
            let grad = sd.heat_column_gradient(t, x)?;
            let pc = sd.heat_column(c * t, x)?;
            let floor = RESOLUTION_FLOOR * pc[x];
            for (e, edge) in g.edges().iter().enumerate() {
                let p = match eval {
                    EdgeEvaluation::NearestEndpoint => pc[near[e]],
                    EdgeEvaluation::EndpointAverage => 0.5 * (pc[edge.tail] + pc[edge.head]),
                };
                if p < floor {
                    continue;
                }
                best = better(best, grad[e].abs(), scale * p);
            }
        }
        tracker.push(t, best);
    }
    Ok(tracker)
}

/// `|∂_y p_t(x,y)| ≤ C t^{-1/d_w} p_{ct}(x,y)`, plus the `e^{-λ_1 t}` decay
/// of `sup |∂ p_t|` for `t ≥ 1`.
pub fn check_gradient_bound(
    sd: &SpectralDecomposition,
    sources: &[usize],
    ts: &[f64],
    c: f64,
) -> Result<EstimateReport> {
    let tracker = gradient_bound_sups(sd, sources, ts, c, EdgeEvaluation::NearestEndpoint)?;
    let mut r = EstimateReport::new(format!("gradient_bound_c{c}"), sd.graph().level(), Gate::Statistical)
        .param("c", c)
        .param("sources", sources)
        .param("t_points", ts.len());
    tracker.finish_into(&mut r);
    let (fit, rate) = decay_fit(|t| {
        let mut s = 0.0f64;
        for &x in sources {
            s = s.max(sd.heat_column_gradient(t, x)?.iter().fold(0.0, |a, v| a.max(v.abs())));
        }
        Ok(s)
    })?;
    r.at_least("decay_rate", rate, DECAY_FRACTION * sd.lambda_1());
    r.fits.push(fit);
    Ok(r.finish())
}

/// Relative gap between the gradient-bound sups with `p_{ct}` read at the
/// nearest endpoint and at the endpoint average; expected within 5% from
/// level 3 on.
pub fn endpoint_evaluation_report(
    sd: &SpectralDecomposition,
    sources: &[usize],
    ts: &[f64],
    c: f64,
) -> Result<EstimateReport> {
    let m = sd.graph().level();
    let near = gradient_bound_sups(sd, sources, ts, c, EdgeEvaluation::NearestEndpoint)?;
    let avg = gradient_bound_sups(sd, sources, ts, c, EdgeEvaluation::EndpointAverage)?;
    let gap = (avg.sup() - near.sup()).abs() / near.sup();
    let mut r = EstimateReport::new("endpoint_evaluation", m, Gate::Statistical)
        .param("c", c)
        .param("nearest_sup", near.sup())
        .param("average_sup", avg.sup());
    for (row, a) in near.rows.iter().zip(&avg.per_t) {
        r.rows.push(ReportRow {
            t: row.t,
            quantity: *a,
            ratio: a / row.ratio,
            bound: row.ratio,
        });
    }
    r.sup_ratio = gap;
    if m >= 3 {
        r.at_most("relative_gap", gap, 0.05);
    }
    Ok(r.finish())
}

/// Sampled `(z, x, y)`: half adjacent pairs, half arbitrary pairs.
pub fn default_triples(g: &LevelGraph, seed: u64, count: usize) -> Vec<(usize, usize, usize)> {
    let zs = super::sample_vertices(g, seed, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let n = g.vertex_count();
    let mut out = Vec::with_capacity(count);
    if n < 2 {
        return out;
    }
    while out.len() < count {
        let z = zs[out.len() % zs.len()];
        let x = rng.gen_range(0..n);
        let y = if out.len() % 2 == 0 {
            let nb: Vec<usize> = g.neighbors(x).collect();
            *nb.choose(&mut rng).expect("tree has no isolated vertex")
        } else {
            rng.gen_range(0..n)
        };
        if x != y {
            out.push((z, x, y));
        }
    }
    out
}

/// `|p_t(z,x) − p_t(z,y)| ≤ C d(x,y) t^{-1/d_w} (p_{ct}(z,x) + p_{ct}(z,y))`.
pub fn check_lipschitz(
    sd: &SpectralDecomposition,
    triples: &[(usize, usize, usize)],
    ts: &[f64],
    c: f64,
) -> Result<EstimateReport> {
    check_c(c)?;
    let g = sd.graph();
    let mut zs: Vec<usize> = triples.iter().map(|t| t.0).collect();
    zs.sort_unstable();
    zs.dedup();
    let mut dist = Vec::with_capacity(triples.len());
    for &(_, x, y) in triples {
        if x == y {
            return Err(Error::OutOfRange(format!("triple with x = y = {x}")));
        }
        dist.push(g.geodesic_distance(x, y)?);
    }
    let mut r = EstimateReport::new(format!("lipschitz_c{c}"), g.level(), Gate::Statistical)
        .param("c", c)
        .param("triples", triples.len())
        .param("t_points", ts.len());
    let mut tracker = SupTracker::default();
    for &t in ts {
        let scale = t.powf(-1.0 / D_W);
        let mut best = None;
        for &z in &zs {
            let p = sd.heat_column(t, z)?;
            let pc = sd.heat_column(c * t, z)?;
            let floor = RESOLUTION_FLOOR * pc[z];
            for (&(zz, x, y), &d) in triples.iter().zip(&dist) {
                if zz != z {
                    continue;
                }
                let den = pc[x] + pc[y];
                if den < floor {
                    continue;
                }
                best = better(best, (p[x] - p[y]).abs(), d * scale * den);
            }
        }
        tracker.push(t, best);
    }
    tracker.finish_into(&mut r);
    Ok(r.finish())
}

/// `I_p(t) = Σ_e ν(e) |∂_e p_t(·, x)|^p ≲ t^{-(p − 1/d_w)}`.
pub fn check_lp_gradient_integral(sd: &SpectralDecomposition, x: usize, p: f64, ts: &[f64]) -> Result<EstimateReport> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(p));
    }
    super::require_window(sd, ts)?;
    let nu = sd.graph().edge_measure();
    let target = p - 1.0 / D_W;
    let mut vals = Vec::with_capacity(ts.len());
    let mut r = EstimateReport::new(
        format!("lp_gradient_integral_p{p}"),
        sd.graph().level(),
        Gate::Statistical,
    )
    .param("p", p)
    .param("source", x)
    .param("target_slope", -target);
    for &t in ts {
        let grad = sd.heat_column_gradient(t, x)?;
        let ip: f64 = grad.iter().map(|v| nu * v.abs().powf(p)).sum();
        let bound = t.powf(-target);
        vals.push(ip);
        r.rows.push(ReportRow {
            t,
            quantity: ip,
            ratio: ip / bound,
            bound,
        });
    }
    let fit = ExponentFit::log_log(ts, &vals)?;
    let ratios: Vec<f64> = r.rows.iter().map(|row| row.ratio).collect();
    r.sup_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    r.at_least("slope", fit.slope, -target - 0.1);
    r.at_most("ratio_spread", spread(&ratios), STABILITY_FACTOR);
    r.fits.push(fit);
    Ok(r.finish())
}

/// `inf_L Σ_y w_y |f_y − L|` for nonnegative weights, attained at a weighted
/// median of `f`.
pub fn weighted_median_deviation(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let mut acc = 0.0;
    let mut median = values.first().copied().unwrap_or(0.0);
    for &i in &idx {
        acc += weights[i].max(0.0);
        if acc >= 0.5 * total {
            median = values[i];
            break;
        }
    }
    deviation(values, weights, median)
}

fn deviation(values: &[f64], weights: &[f64], l: f64) -> f64 {
    values
        .iter()
        .zip(weights)
        .map(|(v, w)| w.max(0.0) * (v - l).abs())
        .sum()
}

/// Ternary search for the same infimum; used to cross-check the median.
pub fn ternary_median_deviation(values: &[f64], weights: &[f64], iterations: usize) -> f64 {
    let (mut lo, mut hi) = super::fit::span(values);
    for _ in 0..iterations {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if deviation(values, weights, a) <= deviation(values, weights, b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    deviation(values, weights, 0.5 * (lo + hi))
}

/// Edges probed per (f, t): the largest gradients plus a fixed random set.
const MEDIAN_TOP_EDGES: usize = 8;
const MEDIAN_RANDOM_EDGES: usize = 8;

/// `|∂P_t f|(e) t^{1/d_w} ≤ C inf_L P_{ct}(|f − L|)(x)`, with `x` the tail
/// (root side) of `e`. The `L = 0` denominator is recorded alongside and
/// must never be smaller than the median one.
pub fn check_weak_bakry_emery_median(
    sd: &SpectralDecomposition,
    family: &FunctionFamily,
    ts: &[f64],
    c: f64,
    seed: u64,
) -> Result<EstimateReport> {
    check_c(c)?;
    if family.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    let g = sd.graph();
    let mu = g.vertex_measure();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_edges: Vec<usize> = (0..MEDIAN_RANDOM_EDGES.min(g.edge_count()))
        .map(|_| rng.gen_range(0..g.edge_count()))
        .collect();
    let mut r = EstimateReport::new(format!("median_bakry_emery_c{c}"), g.level(), Gate::Statistical)
        .param("c", c)
        .param("family", family.label())
        .param("t_points", ts.len());
    let mut tracker = SupTracker::default();
    let mut plain_sup = 0.0f64;
    let members: Vec<_> = family.iter().filter(|f| !f.is_constant(1e-12)).collect();
    let skipped = family.len() - members.len();
    for &t in ts {
        let scale = t.powf(1.0 / D_W);
        let mut probes = Vec::with_capacity(members.len());
        let mut tails = Vec::new();
        for f in &members {
            let grad = heat_apply_gradient(sd, t, f)?.into_values();
            let mut edges: Vec<usize> = (0..grad.len()).collect();
            edges.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
            edges.truncate(MEDIAN_TOP_EDGES);
            edges.extend(&random_edges);
            edges.sort_unstable();
            edges.dedup();
            tails.extend(edges.iter().map(|&e| g.edges()[e].tail));
            probes.push((grad, edges));
        }
        tails.sort_unstable();
        tails.dedup();
        let cols = sd.heat_columns(c * t, &tails)?;
        let mut best = None;
        for (f, (grad, edges)) in members.iter().zip(&probes) {
            for &e in edges {
                let x = g.edges()[e].tail;
                let k = tails.binary_search(&x).expect("tail collected");
                let w: Vec<f64> = (0..g.vertex_count()).map(|y| cols[(y, k)] * mu[y]).collect();
                let med = weighted_median_deviation(f.values(), &w);
                let plain = deviation(f.values(), &w, 0.0);
                if med > plain * (1.0 + 1e-12) + 1e-300 {
                    r.violations += 1;
                }
                let q = grad[e].abs() * scale;
                best = better(best, q, med);
                if plain > 0.0 {
                    plain_sup = plain_sup.max(q / plain);
                }
            }
        }
        tracker.push(t, best);
    }
    r.set_param("plain_sup", plain_sup);
    r.set_param("skipped_constant", skipped);
    tracker.finish_into(&mut r);
    Ok(r.finish())
}
