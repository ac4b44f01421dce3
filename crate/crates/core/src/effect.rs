//! Uncertainty displays for a fitted two-dimensional smooth: opacity driven
//! by pointwise significance, and white-noise perturbation of the surface.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::stats::{norm_sf, sort_f64};

/// Parameters `(δ, γ, β)` of `t(p) = max{(1 − max(0, p − δ))^γ, β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpacityParams {
    pub delta: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for OpacityParams {
    fn default() -> Self {
        OpacityParams {
            delta: 0.05,
            gamma: 3.0,
            beta: 0.2,
        }
    }
}

impl OpacityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Opacity for a p-value; non-increasing in `p`, within `[β, 1]`.
pub fn t_transform(p: f64, params: &OpacityParams) -> Result<f64> {
    params.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("p-value must lie in [0, 1], got {p}")));
    }
    Ok(t_unchecked(p, params))
}

#[inline]
fn t_unchecked(p: f64, params: &OpacityParams) -> f64 {
    let z = (p - params.delta).max(0.0);
    (1.0 - z).powf(params.gamma).max(params.beta)
}

/// Two-sided p-value `2{1 − Φ(|f|/√v)}`.
#[inline]
pub fn p_value(f: f64, v: f64) -> f64 {
    (2.0 * norm_sf(f.abs() / v.sqrt())).min(1.0)
}

/// Fitted effect and its pointwise variance on a rectangular grid, stored
/// row-major with `x1` as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSurface {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub fhat: Vec<f64>,
    pub vhat: Vec<f64>,
}

impl EffectSurface {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>, fhat: Vec<f64>, vhat: Vec<f64>) -> Result<Self> {
        let cells = x1.len() * x2.len();
        if fhat.len() != cells || vhat.len() != cells {
            return Err(Error::Format(format!(
                "surface of {}x{} axes needs {cells} cells, got fhat {} and vhat {}",
                x1.len(),
                x2.len(),
                fhat.len(),
                vhat.len()
            )));
        }
        let s = EffectSurface { x1, x2, fhat, vhat };
        s.check_variance()?;
        Ok(s)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x1.len(), self.x2.len())
    }

    fn check_variance(&self) -> Result<()> {
        match self.vhat.iter().position(|v| !(*v >= 0.0)) {
            Some(i) => Err(domain(format!(
                "variance must be non-negative, got {} at cell {i}",
                self.vhat[i]
            ))),
            None => Ok(()),
        }
    }

    /// Writes the long-format CSV read by [`load_surface`].
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x1", "x2", "fhat", "vhat"])?;
        let n2 = self.x2.len();
        for (i, (f, v)) in self.fhat.iter().zip(&self.vhat).enumerate() {
            w.write_record(&[
                self.x1[i / n2].to_string(),
                self.x2[i % n2].to_string(),
                f.to_string(),
                v.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Opacity per cell from the two-sided p-value of `f̂/√v̂`.
pub fn opacity_field(surf: &EffectSurface, params: &OpacityParams) -> Result<Vec<f64>> {
    params.validate()?;
    surf.check_variance()?;
    Ok(surf
        .fhat
        .iter()
        .zip(&surf.vhat)
        .map(|(&f, &v)| {
            if v == 0.0 {
                if f == 0.0 {
                    params.beta
                } else {
                    1.0
                }
            } else {
                t_unchecked(p_value(f, v), params)
            }
        })
        .collect())
}

/// `f̂ + z` with independent `z ~ N(0, v̂)` per cell.
pub fn perturb_field(surf: &EffectSurface, seed: u64) -> Result<Vec<f64>> {
    surf.check_variance()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(surf
        .fhat
        .iter()
        .zip(&surf.vhat)
        .map(|(&f, &v)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            f + v.sqrt() * z
        })
        .collect())
}

/// `f̂ ∓ k√v̂`.
pub fn confidence_surfaces(surf: &EffectSurface, k: f64) -> (Vec<f64>, Vec<f64>) {
    surf.fhat
        .iter()
        .zip(&surf.vhat)
        .map(|(&f, &v)| (f - k * v.sqrt(), f + k * v.sqrt()))
        .unzip()
}

#[derive(Debug, Deserialize)]
struct SurfaceRow {
    x1: f64,
    x2: f64,
    fhat: f64,
    vhat: f64,
}

/// Reads a long-format `x1, x2, fhat, vhat` CSV that must cover a complete
/// rectangular grid, each node exactly once.
pub fn load_surface(path: impl AsRef<Path>) -> Result<EffectSurface> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<SurfaceRow>().enumerate() {
        let row = rec.map_err(|e| Error::Format(format!("surface row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let axis = |get: fn(&SurfaceRow) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(get).collect();
        sort_f64(&mut v);
        v.dedup();
        v
    };
    let x1 = axis(|r| r.x1);
    let x2 = axis(|r| r.x2);
    let (n1, n2) = (x1.len(), x2.len());
    if rows.len() != n1 * n2 {
        return Err(Error::Format(format!(
            "surface has {} rows but its axes span a {n1}x{n2} grid",
            rows.len()
        )));
    }
    let i1: HashMap<u64, usize> = x1.iter().enumerate().map(|(i, v)| (v.to_bits(), i)).collect();
    let i2: HashMap<u64, usize> = x2.iter().enumerate().map(|(i, v)| (v.to_bits(), i)).collect();
    let mut fhat = vec![f64::NAN; n1 * n2];
    let mut vhat = vec![f64::NAN; n1 * n2];
    let mut seen = vec![false; n1 * n2];
    for r in &rows {
        let c = i1[&r.x1.to_bits()] * n2 + i2[&r.x2.to_bits()];
        if seen[c] {
            return Err(Error::Format(format!("duplicate surface node ({}, {})", r.x1, r.x2)));
        }
        seen[c] = true;
        fhat[c] = r.fhat;
        vhat[c] = r.vhat;
    }
    EffectSurface::new(x1, x2, fhat, vhat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn surface(f: Vec<f64>, v: Vec<f64>) -> EffectSurface {
        let n = f.len();
        EffectSurface::new(vec![0.0], (0..n).map(|i| i as f64).collect(), f, v).unwrap()
    }

    #[test]
    fn transform_examples() {
        let p = OpacityParams::default();
        assert_eq!(t_transform(0.01, &p).unwrap(), 1.0);
        assert_eq!(t_transform(0.05, &p).unwrap(), 1.0);
        assert_eq!(t_transform(1.0, &p).unwrap(), 0.2);
        let (a, b, c) = (
            t_transform(0.1, &p).unwrap(),
            t_transform(0.5, &p).unwrap(),
            t_transform(0.9, &p).unwrap(),
        );
        assert!(a >= b && b >= c);
        assert!(t_transform(0.5, &OpacityParams { beta: 0.0, ..p }).is_err());
        assert!(t_transform(1.5, &p).is_err());
    }

    #[test]
    fn opacity_examples() {
        let p = OpacityParams::default();
        let s = surface(vec![0.0, 10.0, 1.959_963_984_540_054, 0.0, 3.0], vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        let o = opacity_field(&s, &p).unwrap();
        assert_eq!(o[0], 0.2);
        assert_eq!(o[1], 1.0);
        assert_abs_diff_eq!(o[2], 1.0, epsilon = 1e-9);
        assert_eq!(o[3], 0.2);
        assert_eq!(o[4], 1.0);
        assert_abs_diff_eq!(p_value(1.959_963_984_540_054, 1.0), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn negative_variance_rejected() {
        let bad = EffectSurface::new(vec![0.0], vec![0.0], vec![1.0], vec![-1.0]);
        assert!(matches!(bad, Err(Error::Domain(_))));
    }

    #[test]
    fn perturbation_is_seeded() {
        let s = surface(vec![1.0, 2.0, 3.0], vec![0.5, 0.5, 0.5]);
        assert_eq!(perturb_field(&s, 4).unwrap(), perturb_field(&s, 4).unwrap());
        assert_ne!(perturb_field(&s, 4).unwrap(), perturb_field(&s, 5).unwrap());
        let z = surface(vec![1.0, 2.0, 3.0], vec![0.0; 3]);
        assert_eq!(perturb_field(&z, 9).unwrap(), z.fhat);
    }

    #[test]
    fn csv_round_trip() {
        let s = EffectSurface::new(
            vec![0.0, 0.5],
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5],
            vec![0.1; 6],
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        s.write_csv(f.path()).unwrap();
        assert_eq!(load_surface(f.path()).unwrap(), s);

        std::fs::write(f.path(), "x1,x2,fhat,vhat\n0,0,1,1\n0,1,1,1\n1,0,1,1\n").unwrap();
        assert!(matches!(load_surface(f.path()), Err(Error::Format(_))));
    }
}
