use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample count accepted by a regression.
pub const MIN_SAMPLES: usize = 8;

/// Least-squares line through `(x, y)` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    #[serde(rename = "r2")]
    pub r_squared: f64,
    /// Range of the independent variable before any transform (t or λ).
    pub window: (f64, f64),
    pub sample_count: usize,
}

impl ExponentFit {
    /// Ordinary least squares of `ys` on `xs`.
    pub fn linear(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(Error::LengthMismatch {
                got: ys.len(),
                expected: n,
            });
        }
        if n < MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                got: n,
                need: MIN_SAMPLES,
            });
        }
        if !(window.0 <= window.1) {
            return Err(Error::OutOfRange(format!("empty fit window {window:?}")));
        }
        let nf = n as f64;
        let mx = xs.iter().sum::<f64>() / nf;
        let my = ys.iter().sum::<f64>() / nf;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
            syy += (y - my) * (y - my);
        }
        if sxx == 0.0 {
            return Err(Error::OutOfRange("regressor is constant".into()));
        }
        let slope = sxy / sxx;
        // A constant response is fitted perfectly by a flat line.
        let r_squared = if syy == 0.0 {
            1.0
        } else {
            (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
        };
        Ok(Self {
            slope,
            intercept: my - slope * mx,
            r_squared,
            window,
            sample_count: n,
        })
    }

    /// Fit `log y` against `log x`; all samples must be positive.
    pub fn log_log(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
            return Err(Error::OutOfRange("log-log fit needs positive samples".into()));
        }
        let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        Self::linear(&lx, &ly, span(xs))
    }

    /// Fit `log y` against `x`; the slope is a decay rate when negative.
    pub fn semilog(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if ys.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::OutOfRange("semilog fit needs positive samples".into()));
        }
        let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        Self::linear(xs, &ly, span(xs))
    }
}

pub(crate) fn span(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

/// `min:max:spacing:count`, e.g. `1e-4:1e-2:log:9`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub min: f64,
    pub max: f64,
    pub spacing: Spacing,
    pub count: usize,
}

impl TimeGrid {
    pub fn log(min: f64, max: f64, count: usize) -> Self {
        Self {
            min,
            max,
            spacing: Spacing::Log,
            count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0) || !(self.max >= self.min) || self.count == 0 {
            return Err(Error::Config(format!("invalid time grid {self}")));
        }
        if self.count == 1 && self.max != self.min {
            return Err(Error::Config(format!("time grid {self} needs more than one point")));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                let s = k as f64 / last;
                match self.spacing {
                    Spacing::Log => self.min * (self.max / self.min).powf(s),
                    Spacing::Linear => self.min + (self.max - self.min) * s,
                }
            })
            .collect()
    }

    /// Decades spanned, `log10(max/min)`.
    pub fn decades(&self) -> f64 {
        (self.max / self.min).log10()
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spacing = match self.spacing {
            Spacing::Log => "log",
            Spacing::Linear => "linear",
        };
        write!(f, "{:e}:{:e}:{}:{}", self.min, self.max, spacing, self.count)
    }
}

impl FromStr for TimeGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [min, max, spacing, count] = parts.as_slice() else {
            return Err(Error::Config(format!("time grid `{s}` is not MIN:MAX:SPACING:COUNT")));
        };
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{v}` in time grid")))
        };
        let spacing = match *spacing {
            "log" => Spacing::Log,
            "linear" | "lin" => Spacing::Linear,
            other => return Err(Error::Config(format!("unknown spacing `{other}`"))),
        };
        let count = count
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad count `{count}` in time grid")))?;
        let grid = Self {
            min: num(min)?,
            max: num(max)?,
            spacing,
            count,
        };
        grid.validate()?;
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let fit = ExponentFit::linear(&xs, &ys, (0.0, 9.0)).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 3.0).abs() < 1e-13);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_response_has_zero_slope() {
        let ts: Vec<f64> = (0..12).map(|k| 10f64.powf(-4.0 + k as f64 / 4.0)).collect();
        let ones = vec![1.0; ts.len()];
        let fit = ExponentFit::log_log(&ts, &ones).unwrap();
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn too_few_samples() {
        let xs = [1.0, 2.0, 3.0];
        assert!(matches!(
            ExponentFit::linear(&xs, &xs, (1.0, 3.0)),
            Err(Error::InsufficientSamples { got: 3, need: 8 })
        ));
    }

    #[test]
    fn power_law() {
        let ts: Vec<f64> = (0..20).map(|k| 1e-3 * 1.5f64.powi(k)).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * t.powf(-0.59432)).collect();
        let fit = ExponentFit::log_log(&ts, &ys).unwrap();
        assert!((fit.slope + 0.59432).abs() < 1e-12);
        assert_eq!(fit.window, (ts[0], ts[19]));
    }

    #[test]
    fn grid_parsing() {
        let g: TimeGrid = "1e-4:1e-2:log:3".parse().unwrap();
        let p = g.points();
        assert_eq!(p.len(), 3);
        assert!((p[1] - 1e-3).abs() < 1e-15);
        assert!((g.decades() - 2.0).abs() < 1e-12);
        let lin: TimeGrid = "1:3:linear:3".parse().unwrap();
        assert_eq!(lin.points(), vec![1.0, 2.0, 3.0]);
        assert!("1:2:log".parse::<TimeGrid>().is_err());
        assert!("0:2:log:4".parse::<TimeGrid>().is_err());
        assert!("1:2:cubic:4".parse::<TimeGrid>().is_err());
        let back: TimeGrid = g.to_string().parse().unwrap();
        assert_eq!(back, g);
    }
}
