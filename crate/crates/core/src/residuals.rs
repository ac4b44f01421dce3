//! Residual transforms and replicate residuals simulated from the fitted model.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DiagnosticDataset;
use crate::distributions::{shash_standard_moments, Family};
use crate::error::{domain, Error, Result};
use crate::stats::{norm_quantile, sort_f64};

/// Probabilities are clipped to `[QUANTILE_CLIP, 1 - QUANTILE_CLIP]` before `Φ⁻¹`.
pub const QUANTILE_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualType {
    Uniform,
    Quantile,
    Pearson,
    Deviance,
}

impl ResidualType {
    pub fn name(self) -> &'static str {
        match self {
            ResidualType::Uniform => "uniform",
            ResidualType::Quantile => "quantile",
            ResidualType::Pearson => "pearson",
            ResidualType::Deviance => "deviance",
        }
    }

    pub fn reference(self) -> Reference {
        match self {
            ResidualType::Uniform => Reference::Uniform,
            ResidualType::Quantile => Reference::Normal,
            ResidualType::Pearson | ResidualType::Deviance => Reference::SimulationOnly,
        }
    }
}

impl fmt::Display for ResidualType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResidualType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(ResidualType::Uniform),
            "quantile" => Ok(ResidualType::Quantile),
            "pearson" => Ok(ResidualType::Pearson),
            "deviance" => Ok(ResidualType::Deviance),
            _ => Err(Error::Config(format!(
                "unknown residual type `{s}` (uniform|quantile|pearson|deviance)"
            ))),
        }
    }
}

/// Distribution the residuals follow under a well-specified continuous model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Uniform,
    Normal,
    SimulationOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualVector {
    pub values: Vec<f64>,
    pub kind: ResidualType,
    pub reference: Reference,
    /// Rows whose c.d.f. hit the quantile clip.
    pub clip_count: usize,
    pub warnings: Vec<String>,
}

impl ResidualVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `l × n` residuals, one row per simulated response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedResiduals {
    pub rows: Vec<Vec<f64>>,
    pub kind: ResidualType,
    pub seed: u64,
}

impl SimulatedResiduals {
    pub fn l(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Each replicate sorted ascending.
    pub fn sorted_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .par_iter()
            .map(|r| {
                let mut r = r.clone();
                sort_f64(&mut r);
                r
            })
            .collect()
    }
}

/// Row-major parameter access with per-row validation.
struct ParamRows<'a> {
    family: Family,
    cols: Vec<&'a [f64]>,
}

impl<'a> ParamRows<'a> {
    fn new(family: Family, cols: Vec<&'a [f64]>) -> Self {
        Self { family, cols }
    }

    #[inline]
    fn row(&self, i: usize) -> Result<[f64; 4]> {
        let mut theta = [0.0; 4];
        for (k, c) in self.cols.iter().enumerate() {
            theta[k] = c[i];
        }
        let k = self.cols.len();
        self.family
            .validate(&theta[..k])
            .map_err(|e| domain(format!("row {}: {e}", i + 1)))?;
        Ok(theta)
    }
}

/// Caches the standardised shash moments, which depend only on `(eps, delta)`.
#[derive(Default)]
struct MomentCache {
    last: Option<((u64, u64), (f64, f64))>,
}

impl MomentCache {
    fn mean_var(&mut self, family: Family, theta: &[f64]) -> (f64, f64) {
        if family != Family::Shash {
            return family.mean_var_unchecked(theta);
        }
        let key = (theta[2].to_bits(), theta[3].to_bits());
        let (m, v) = match self.last {
            Some((k, mv)) if k == key => mv,
            _ => {
                let mv = shash_standard_moments(theta[2], theta[3]);
                self.last = Some((key, mv));
                mv
            }
        };
        (theta[0] + theta[1] * m, theta[1] * theta[1] * v)
    }
}

fn check_kind(family: Family, kind: ResidualType) -> Result<()> {
    if kind == ResidualType::Deviance && !family.has_deviance() {
        return Err(Error::UnsupportedResidual {
            family: family.name(),
            kind: kind.name(),
        });
    }
    Ok(())
}

/// Residuals of `y` under per-row parameters; returns values and clip count.
pub fn transform_values(
    family: Family,
    kind: ResidualType,
    y: &[f64],
    params: &[&[f64]],
) -> Result<(Vec<f64>, usize)> {
    check_kind(family, kind)?;
    let rows = ParamRows::new(family, params.to_vec());
    let k = params.len();
    let mut out = Vec::with_capacity(y.len());
    let mut clips = 0usize;
    let mut cache = MomentCache::default();
    for (i, &yi) in y.iter().enumerate() {
        let theta = rows.row(i)?;
        let theta = &theta[..k];
        let r = match kind {
            ResidualType::Uniform => family.cdf_unchecked(yi, theta),
            ResidualType::Quantile => {
                let u = family.cdf_unchecked(yi, theta);
                let c = u.clamp(QUANTILE_CLIP, 1.0 - QUANTILE_CLIP);
                if c != u {
                    clips += 1;
                }
                norm_quantile(c)
            }
            ResidualType::Pearson => {
                let (m, v) = cache.mean_var(family, theta);
                (yi - m) / v.sqrt()
            }
            ResidualType::Deviance => {
                family
                    .check_support(yi)
                    .map_err(|e| domain(format!("row {}: {e}", i + 1)))?;
                let (m, _) = family.mean_var_unchecked(theta);
                let d = family.deviance_unchecked(yi, theta);
                sign(yi - m) * d.sqrt()
            }
        };
        out.push(r);
    }
    Ok((out, clips))
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Applies a residual transform to the dataset's response.
pub fn transform(ds: &DiagnosticDataset, family: Family, kind: ResidualType) -> Result<ResidualVector> {
    let y = ds.response()?;
    let params = ds.params(family)?;
    let (values, clip_count) = transform_values(family, kind, y, &params)?;
    let mut warnings = Vec::new();
    if family.is_discrete() && matches!(kind, ResidualType::Uniform | ResidualType::Quantile) {
        let msg = format!(
            "{kind} residuals of the discrete {family} family are not randomised; \
             they are hard to read when y takes few distinct values"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if clip_count > 0 {
        log::info!("{clip_count} quantile residuals clipped at the distribution tails");
    }
    Ok(ResidualVector {
        values,
        kind,
        reference: kind.reference(),
        clip_count,
        warnings,
    })
}

/// Generator for replicate `v`: the base seed with stream `v`, so every
/// replicate draws the same numbers regardless of scheduling.
pub fn replicate_rng(seed: u64, v: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(v);
    rng
}

/// Simulates `l` response vectors from the fitted parameters and transforms
/// each one. Replicates run in parallel on the current rayon pool.
pub fn simulate_residuals(
    ds: &DiagnosticDataset,
    family: Family,
    kind: ResidualType,
    l: usize,
    seed: u64,
) -> Result<SimulatedResiduals> {
    if l == 0 {
        return Err(Error::Config("replicate count l must be at least 1".into()));
    }
    check_kind(family, kind)?;
    let params = ds.params(family)?;
    let n = ds.n();
    let rows = (0..l)
        .into_par_iter()
        .map(|v| {
            let mut rng = replicate_rng(seed, v as u64);
            let sampler = ParamRows::new(family, params.clone());
            let k = params.len();
            let mut ystar = Vec::with_capacity(n);
            for i in 0..n {
                let theta = sampler.row(i)?;
                ystar.push(family.sample_unchecked(&theta[..k], &mut rng));
            }
            transform_values(family, kind, &ystar, &params).map(|(r, _)| r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedResiduals { rows, kind, seed })
}
