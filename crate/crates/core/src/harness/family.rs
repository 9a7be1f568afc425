use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{antiderivative, piecewise_affine_extend, EdgeFunction, VertexFunction};
use crate::error::{Error, Result};
use crate::graph::{pow3, CellAddress, LevelGraph};
use crate::spectral::{heat_apply, SpectralDecomposition};

/// Kinds of test-function families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FamilyKind {
    /// Uniform random values on level-n vertices, extended piecewise affinely.
    RandomPiecewiseAffine { level: u32 },
    /// Random combinations of `Φ_1 … Φ_k`.
    EigenmodeCombination { modes: usize },
    /// Indicators of random level-k cells smoothed by `P_{t0}`, `t0 = 15^{-m}`.
    /// `None` draws k uniformly from `1..=m`.
    CellIndicatorSmoothed { cell_level: Option<u32> },
    /// Antiderivatives of uniform random edge functions.
    RandomEdgeAntiderivative,
}

impl FamilyKind {
    pub fn needs_spectrum(&self) -> bool {
        matches!(
            self,
            FamilyKind::EigenmodeCombination { .. } | FamilyKind::CellIndicatorSmoothed { .. }
        )
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::RandomPiecewiseAffine { level } => write!(f, "random-piecewise-affine({level})"),
            FamilyKind::EigenmodeCombination { modes } => write!(f, "eigenmode-combination({modes})"),
            FamilyKind::CellIndicatorSmoothed { cell_level: Some(k) } => {
                write!(f, "cell-indicator-smoothed({k})")
            }
            FamilyKind::CellIndicatorSmoothed { cell_level: None } => write!(f, "cell-indicator-smoothed"),
            FamilyKind::RandomEdgeAntiderivative => write!(f, "random-edge-antiderivative"),
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], Some(&s[i + 1..s.len() - 1])),
            Some(_) => return Err(Error::UnknownFamily(s.to_string())),
            None => (s, None),
        };
        let int = |a: Option<&str>| -> Result<u64> {
            a.ok_or_else(|| Error::UnknownFamily(s.to_string()))?
                .trim()
                .parse()
                .map_err(|_| Error::UnknownFamily(s.to_string()))
        };
        match name {
            "random-piecewise-affine" => Ok(FamilyKind::RandomPiecewiseAffine {
                level: int(arg)? as u32,
            }),
            "eigenmode-combination" => Ok(FamilyKind::EigenmodeCombination {
                modes: int(arg)? as usize,
            }),
            "cell-indicator-smoothed" => Ok(FamilyKind::CellIndicatorSmoothed {
                cell_level: match arg {
                    None => None,
                    a => Some(int(a)? as u32),
                },
            }),
            "random-edge-antiderivative" if arg.is_none() => Ok(FamilyKind::RandomEdgeAntiderivative),
            _ => Err(Error::UnknownFamily(s.to_string())),
        }
    }
}

/// Test functions, possibly pooled from several kinds.
#[derive(Debug, Clone)]
pub struct FunctionFamily {
    pub kinds: Vec<FamilyKind>,
    pub seed: u64,
    pub members: Vec<VertexFunction>,
}

impl FunctionFamily {
    /// Pool several families; the seed of the first is kept.
    pub fn merge(families: Vec<FunctionFamily>) -> Self {
        let seed = families.first().map_or(0, |f| f.seed);
        let mut out = Self {
            kinds: Vec::new(),
            seed,
            members: Vec::new(),
        };
        for f in families {
            out.kinds.extend(f.kinds);
            out.members.extend(f.members);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &VertexFunction> {
        self.members.iter()
    }

    pub fn label(&self) -> String {
        let kinds: Vec<String> = self.kinds.iter().map(ToString::to_string).collect();
        format!("{} ({} functions)", kinds.join(" + "), self.members.len())
    }
}

/// Deterministic family of `count` functions on `g`. Kinds that smooth or
/// use eigenfunctions need `sd`.
pub fn generate_family(
    g: &Arc<LevelGraph>,
    sd: Option<&SpectralDecomposition>,
    kind: FamilyKind,
    count: usize,
    seed: u64,
) -> Result<FunctionFamily> {
    let m = g.level();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectrum = || sd.ok_or_else(|| Error::Config(format!("family {kind} needs a spectral decomposition")));
    let members = match kind {
        FamilyKind::RandomPiecewiseAffine { level } => {
            if level > m {
                return Err(Error::LevelMismatch { coarse: level, fine: m });
            }
            let coarse = Arc::new(LevelGraph::build_with_cap(level, level)?);
            (0..count)
                .map(|_| {
                    let f = VertexFunction::from_fn(coarse.clone(), |_| rng.gen_range(-1.0..=1.0));
                    piecewise_affine_extend(&f, g)
                })
                .collect::<Result<Vec<_>>>()?
        }
        FamilyKind::EigenmodeCombination { modes } => {
            let sd = spectrum()?;
            if modes == 0 || modes >= sd.len() {
                return Err(Error::OutOfRange(format!("{modes} modes of {}", sd.len())));
            }
            (0..count)
                .map(|_| {
                    let mut c = vec![0.0; sd.len()];
                    for cj in &mut c[1..=modes] {
                        *cj = rng.gen_range(-1.0..=1.0);
                    }
                    VertexFunction::new(g.clone(), sd.synthesize(&c))
                })
                .collect::<Result<Vec<_>>>()?
        }
        FamilyKind::CellIndicatorSmoothed { cell_level } => {
            let sd = spectrum()?;
            if let Some(k) = cell_level {
                if k > m {
                    return Err(Error::LevelMismatch { coarse: k, fine: m });
                }
            }
            let t0 = 15f64.powi(-(m as i32));
            (0..count)
                .map(|_| {
                    let k = cell_level.unwrap_or_else(|| rng.gen_range(1..=m.max(1)).min(m));
                    let word: Vec<u8> = (0..k).map(|_| rng.gen_range(1..=5)).collect();
                    let f = cell_indicator(g, &CellAddress::new(word)?);
                    heat_apply(sd, t0, &f)
                })
                .collect::<Result<Vec<_>>>()?
        }
        FamilyKind::RandomEdgeAntiderivative => (0..count)
            .map(|_| {
                let eta = EdgeFunction::from_fn(g.clone(), |_| rng.gen_range(-1.0..=1.0));
                antiderivative(&eta, g.root())
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(FunctionFamily {
        kinds: vec![kind],
        seed,
        members,
    })
}

/// Pooled family of `count` members per kind, each kind seeded from
/// `seed` and its position.
pub fn generate_mixture(
    g: &Arc<LevelGraph>,
    sd: Option<&SpectralDecomposition>,
    kinds: &[FamilyKind],
    count: usize,
    seed: u64,
) -> Result<FunctionFamily> {
    let parts = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| generate_family(g, sd, k, count, seed.wrapping_add(i as u64 * 0x9e37_79b9)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FunctionFamily::merge(parts))
}

/// Indicator of the closed cell `ψ_w(K)` on level-m vertices.
pub fn cell_indicator(g: &Arc<LevelGraph>, cell: &CellAddress) -> VertexFunction {
    let m = g.level();
    let k = cell.level().min(m);
    let c = cell.center();
    let scale = pow3(m - k);
    let (cx, cy, half) = (c.x * scale, c.y * scale, scale);
    VertexFunction::from_fn(g.clone(), |v| {
        let p = g.vertices()[v];
        if (p.x - cx).abs() <= half && (p.y - cy).abs() <= half {
            1.0
        } else {
            0.0
        }
    })
}
