//! Numerical verification of heat kernel, gradient and Sobolev-type
//! estimates on level-m graphs.
//!
//! Every check returns an [`EstimateReport`] whose `pass` flag is a pure
//! function of the recorded criteria. "Bounded" is operationalized as a
//! per-t supremum whose max/min over the time grid stays below
//! [`STABILITY_FACTOR`]; by default the grid spans the two decades ending at
//! `0.1/λ_1`, clipped to the validity window.

pub mod exact;
pub mod family;
pub mod fit;
pub mod gradient;
pub mod hodge;
pub mod kernel;
pub mod report;
pub mod sobolev;
pub mod suite;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use family::{generate_family, FamilyKind, FunctionFamily};
pub use fit::{ExponentFit, Spacing, TimeGrid};
pub use report::{Criterion, EstimateReport, Gate, ReportRow};

use crate::error::{Error, Result};
use crate::graph::{pow3, LevelGraph};
use crate::spectral::SpectralDecomposition;

/// Allowed max/min variation of a per-t supremum.
pub const STABILITY_FACTOR: f64 = 10.0;

/// Kernel values below this fraction of the on-diagonal value at the same
/// source are treated as unresolved and excluded from ratios.
pub const RESOLUTION_FLOOR: f64 = 1e-8;

/// Default constant `c` inside `p_{ct}`.
pub const DEFAULT_C: f64 = 2.0;

/// Time points for large-t decay fits, in `[1, 2]`.
pub const DECAY_TIMES: [f64; 9] = [1.0, 1.125, 1.25, 1.375, 1.5, 1.625, 1.75, 1.875, 2.0];

/// Required decay rate, as a fraction of `λ_1`.
pub const DECAY_FRACTION: f64 = 0.95;

/// max/min of a list of positive numbers; infinite if any entry is not
/// positive and finite.
pub fn spread(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return f64::INFINITY;
    }
    let (lo, hi) = fit::span(values);
    hi / lo
}

/// Error unless every point of `ts` lies in the validity window.
pub fn require_window(sd: &SpectralDecomposition, ts: &[f64]) -> Result<()> {
    let (wlo, whi) = sd.validity_window();
    let (lo, hi) = fit::span(ts);
    let slack = 1e-9;
    if ts.is_empty() || lo < wlo * (1.0 - slack) || hi > whi * (1.0 + slack) {
        return Err(Error::WindowEmpty {
            lo,
            hi,
            window_lo: wlo,
            window_hi: whi,
        });
    }
    Ok(())
}

/// Log grid over the whole validity window.
pub fn window_grid(sd: &SpectralDecomposition, count: usize) -> TimeGrid {
    let (lo, hi) = sd.validity_window();
    TimeGrid::log(lo, hi.max(lo), count)
}

/// Log grid over the two decades ending at `0.1/λ_1`, clipped to the window.
pub fn stability_grid(sd: &SpectralDecomposition, count: usize) -> TimeGrid {
    let (lo, hi) = sd.validity_window();
    TimeGrid::log((hi / 100.0).max(lo).min(hi), hi, count)
}

/// Root, the corner `(3^m, 3^m)`, and `extra` distinct pseudo-random vertices.
pub fn sample_vertices(g: &LevelGraph, seed: u64, extra: usize) -> Vec<usize> {
    let s = pow3(g.level());
    let mut out = vec![g.root()];
    if let Some(c) = g.find(s, s) {
        if c != g.root() {
            out.push(c);
        }
    }
    let n = g.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f5a_3b1e);
    let target = (out.len() + extra).min(n);
    while out.len() < target {
        let v = rng.gen_range(0..n);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// For each edge, the endpoint nearer to a source with distances `dist`.
pub(crate) fn nearest_endpoints(g: &LevelGraph, dist: &[f64]) -> Vec<usize> {
    g.edges()
        .iter()
        .map(|e| if dist[e.tail] <= dist[e.head] { e.tail } else { e.head })
        .collect()
}

/// Semilog decay fit of `q(t)` over [`DECAY_TIMES`]; returns the fit and the
/// rate `-slope`.
pub(crate) fn decay_fit(mut q: impl FnMut(f64) -> Result<f64>) -> Result<(ExponentFit, f64)> {
    let ys = DECAY_TIMES.iter().map(|&t| q(t)).collect::<Result<Vec<_>>>()?;
    let fit = ExponentFit::semilog(&DECAY_TIMES, &ys)?;
    Ok((fit, -fit.slope))
}

/// Per-t supremum tracker that also records report rows.
#[derive(Debug, Default)]
pub struct SupTracker {
    pub per_t: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

impl SupTracker {
    /// Record the best `(quantity, bound)` pair for time `t`.
    pub fn push(&mut self, t: f64, best: Option<(f64, f64)>) {
        let (q, b) = best.unwrap_or((0.0, f64::INFINITY));
        let ratio = if b.is_finite() && b > 0.0 { q / b } else { 0.0 };
        self.per_t.push(ratio);
        self.rows.push(ReportRow {
            t,
            quantity: q,
            ratio,
            bound: b,
        });
    }

    pub fn sup(&self) -> f64 {
        self.per_t.iter().cloned().fold(0.0, f64::max)
    }

    pub fn spread(&self) -> f64 {
        spread(&self.per_t)
    }

    /// Move the rows into `r` and add the stability criterion.
    pub fn finish_into(self, r: &mut EstimateReport) {
        r.sup_ratio = self.sup();
        r.at_most("sup_spread", self.spread(), STABILITY_FACTOR);
        r.rows.extend(self.rows);
    }
}

/// Keep the larger ratio of two `(quantity, bound)` candidates.
pub(crate) fn better(best: Option<(f64, f64)>, q: f64, b: f64) -> Option<(f64, f64)> {
    if !(b > 0.0) || !q.is_finite() {
        return best;
    }
    match best {
        Some((bq, bb)) if bq / bb >= q / b => best,
        _ => Some((q, b)),
    }
}
