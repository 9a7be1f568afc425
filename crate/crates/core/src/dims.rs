//! Dimensions of the Vicsek set and exponents derived from them.

/// Hausdorff dimension `log 5 / log 3`.
pub const D_H: f64 = 1.464_973_520_717_926_9;

/// Walk dimension `d_h + 1`.
pub const D_W: f64 = D_H + 1.0;

/// On-diagonal heat kernel exponent `d_h / d_w`, also the Weyl exponent
/// `d_s / 2`.
pub const ON_DIAGONAL_EXPONENT: f64 = D_H / D_W;

/// Sub-Gaussian exponent `1 / (d_w - 1) = 1 / d_h`.
pub const SUB_GAUSSIAN_EXPONENT: f64 = 1.0 / (D_W - 1.0);

/// `α_p = (1 - 2/p) / d_w + 1/p`.
pub fn alpha(p: f64) -> f64 {
    (1.0 - 2.0 / p) / D_W + 1.0 / p
}

/// Nash exponent `θ = (p - 1) d_h / (p - 1 + p d_h)`.
pub fn nash_theta(p: f64) -> f64 {
    (p - 1.0) * D_H / (p - 1.0 + p * D_H)
}
