//! Synthetic datasets with known misspecification. Each scenario draws
//! responses from a sinh-arcsinh "truth" and stores the parameters of a
//! model that gets exactly one channel wrong, so diagnostics run without a
//! fitting step. The shash scenarios also carry a covariate `z ~ U(0, 1)`
//! that the response ignores, giving two-dimensional checks a second axis.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Column, ColumnData, DiagnosticDataset, Role};
use crate::distributions::Family;
use crate::error::{Error, Result};

/// Covariate range of the shash scenarios.
pub const X_RANGE: (f64, f64) = (-3.5, 3.5);
/// Noise sd of the surface demo.
pub const SURFACE_SIGMA: f64 = 2.0;
pub const SURFACE_PRESETS: [usize; 2] = [200, 100_000];
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    WellSpecified,
    MeanMiss,
    VarMiss,
    SkewMiss,
    KurtMiss,
    SurfaceDemo,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::WellSpecified,
        ScenarioId::MeanMiss,
        ScenarioId::VarMiss,
        ScenarioId::SkewMiss,
        ScenarioId::KurtMiss,
        ScenarioId::SurfaceDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::WellSpecified => "well_specified",
            ScenarioId::MeanMiss => "mean_miss",
            ScenarioId::VarMiss => "var_miss",
            ScenarioId::SkewMiss => "skew_miss",
            ScenarioId::KurtMiss => "kurt_miss",
            ScenarioId::SurfaceDemo => "surface_demo",
        }
    }

    pub fn family(self) -> Family {
        match self {
            ScenarioId::SurfaceDemo => Family::Gaussian,
            _ => Family::Shash,
        }
    }

    /// Generating `(μ, σ, ε, δ)` at covariate `x` for the shash scenarios.
    pub fn truth(self, x: f64) -> [f64; 4] {
        let mut p = BASE;
        match self {
            ScenarioId::MeanMiss => p[0] = 0.4 * x * x - 1.0,
            ScenarioId::VarMiss => p[1] = (0.35 * x.abs()).exp(),
            ScenarioId::SkewMiss => p[2] = 0.5 * x,
            ScenarioId::KurtMiss => p[3] = (1.0 / (1.0 + 0.6 * (x.abs() - 2.0).exp())).clamp(0.5, 1.0),
            ScenarioId::WellSpecified | ScenarioId::SurfaceDemo => {}
        }
        p
    }

    /// Parameters of the (possibly misspecified) model at `x`.
    pub fn model(self, _x: f64) -> [f64; 4] {
        let mut p = BASE;
        if self == ScenarioId::MeanMiss {
            p[0] = MEAN_MISS_LEVEL;
        }
        p
    }

    /// Human-readable `(truth, model)` descriptors per parameter channel.
    pub fn descriptors(self) -> Vec<ChannelDescriptor> {
        let base = ["0", "1", "0", "1"];
        let mut truth = base.map(String::from);
        let mut model = base.map(String::from);
        match self {
            ScenarioId::MeanMiss => {
                truth[0] = "0.4*x^2 - 1".into();
                model[0] = format!("{MEAN_MISS_LEVEL:.6}");
            }
            ScenarioId::VarMiss => truth[1] = "exp(0.35*|x|)".into(),
            ScenarioId::SkewMiss => truth[2] = "0.5*x".into(),
            ScenarioId::KurtMiss => truth[3] = "clip(1/(1 + 0.6*exp(|x| - 2)), 0.5, 1)".into(),
            ScenarioId::WellSpecified => {}
            ScenarioId::SurfaceDemo => {
                return vec![
                    ChannelDescriptor {
                        param: "mu",
                        truth: "sin(2*pi*x)*cos(2*pi*z)".into(),
                        model: "sin(2*pi*x)*cos(2*pi*z)".into(),
                    },
                    ChannelDescriptor {
                        param: "sigma",
                        truth: SURFACE_SIGMA.to_string(),
                        model: SURFACE_SIGMA.to_string(),
                    },
                ];
            }
        }
        Family::Shash
            .param_names()
            .iter()
            .zip(truth.into_iter().zip(model))
            .map(|(&param, (truth, model))| ChannelDescriptor { param, truth, model })
            .collect()
    }
}

const BASE: [f64; 4] = [0.0, 1.0, 0.0, 1.0];
/// Best constant approximation of `0.4x² − 1` over the covariate range.
const MEAN_MISS_LEVEL: f64 = 0.4 * (X_RANGE.1 * X_RANGE.1) / 3.0 - 1.0;

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelDescriptor {
    pub param: &'static str,
    pub truth: String,
    pub model: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub n: usize,
    pub seed: u64,
    pub family: Family,
    pub channels: Vec<ChannelDescriptor>,
    #[serde(skip)]
    pub dataset: DiagnosticDataset,
}

/// Signal of the surface demo.
pub fn surface_f(x: f64, z: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * z).cos()
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_a210_0000_0000);
    rng.set_stream(block as u64);
    rng
}

/// Dataset for scenario `id`: responses, covariates and model parameters.
/// Identical `(id, n, seed)` give bit-identical output on any worker count.
pub fn generate(id: ScenarioId, n: usize, seed: u64) -> Result<Scenario> {
    if n == 0 {
        return Err(Error::Config("scenario size n must be at least 1".into()));
    }
    let blocks = n.div_ceil(BLOCK);
    let dataset = if id == ScenarioId::SurfaceDemo {
        let rows: Vec<[f64; 4]> = (0..blocks)
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = block_rng(seed, b);
                let len = BLOCK.min(n - b * BLOCK);
                (0..len)
                    .map(|_| {
                        let x: f64 = rng.random();
                        let z: f64 = rng.random();
                        let f = surface_f(x, z);
                        let e: f64 = StandardNormal.sample(&mut rng);
                        [f + SURFACE_SIGMA * e, x, z, f]
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        DiagnosticDataset::from_columns(vec![
            float("y", Role::Response, col(0)),
            float("x", Role::Covariate, col(1)),
            float("z", Role::Covariate, col(2)),
            float("mu", Role::Param, col(3)),
            float("sigma", Role::Param, vec![SURFACE_SIGMA; n]),
        ])?
    } else {
        let family = Family::Shash;
        let rows: Vec<(f64, f64, f64)> = (0..blocks)
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = block_rng(seed, b);
                let len = BLOCK.min(n - b * BLOCK);
                (0..len)
                    .map(|_| {
                        let x = rng.random_range(X_RANGE.0..X_RANGE.1);
                        let y = family
                            .sample(&id.truth(x), &mut rng)
                            .expect("scenario parameters are valid");
                        let z: f64 = rng.random();
                        (y, x, z)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let x: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mut cols = vec![
            float("y", Role::Response, rows.iter().map(|r| r.0).collect()),
            float("x", Role::Covariate, x.clone()),
            float("z", Role::Covariate, rows.iter().map(|r| r.2).collect()),
        ];
        for (k, name) in family.param_names().iter().enumerate() {
            cols.push(float(name, Role::Param, x.iter().map(|&xi| id.model(xi)[k]).collect()));
        }
        DiagnosticDataset::from_columns(cols)?
    };
    Ok(Scenario {
        id,
        n,
        seed,
        family: id.family(),
        channels: id.descriptors(),
        dataset,
    })
}

fn float(name: &str, role: Role, v: Vec<f64>) -> Column {
    Column {
        name: name.into(),
        role,
        data: ColumnData::Float(v),
    }
}
