//! Linear binning, binned Gaussian k.d.e. in one and two dimensions, and the
//! conditional density misfit field `δ(r|x)` between observed and model
//! residuals.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::residuals::Reference;
use crate::stats::{norm_cdf, norm_pdf, quantile_sorted, sd, sort_f64, trapezoid};

/// Kernel support in bandwidths.
pub const KERNEL_CUTOFF: f64 = 4.0;
/// Columns whose marginal density falls below this fraction of its maximum
/// are masked.
pub const SUPPORT_FRACTION: f64 = 0.01;
pub const DEFAULT_KNOTS: usize = 128;
/// Padding, in bandwidths, added on each side of the data range.
pub const RANGE_PAD: f64 = 3.0;

/// Equally spaced knots over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub knots: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, knots: usize) -> Result<Self> {
        if knots < 2 {
            return Err(Error::Config(format!("a grid axis needs at least 2 knots, got {knots}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("grid axis range [{lo}, {hi}] is empty or not finite")));
        }
        Ok(Axis { lo, hi, knots })
    }

    /// Data range of `values` widened by `pad` on both sides.
    pub fn covering(values: &[f64], pad: f64, knots: usize) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return Err(Error::EmptyDataset);
        }
        if lo == hi {
            return Axis::new(lo - pad.max(0.5), hi + pad.max(0.5), knots);
        }
        Axis::new(lo - pad, hi + pad, knots)
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.knots - 1) as f64
    }

    #[inline]
    pub fn knot(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.knots).map(|i| self.knot(i)).collect()
    }

    /// Left knot index and fraction towards the next knot, clamped to the ends.
    #[inline]
    fn locate(&self, v: f64) -> (usize, f64) {
        let u = ((v - self.lo) / self.step()).clamp(0.0, (self.knots - 1) as f64);
        let k = (u.floor() as usize).min(self.knots - 2);
        (k, u - k as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1D {
    pub axis: Axis,
    pub weights: Vec<f64>,
}

impl Grid1D {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Weights stored row-major with `x` as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid2D {
    pub x: Axis,
    pub r: Axis,
    pub weights: Vec<f64>,
}

impl Grid2D {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    #[inline]
    pub fn at(&self, ix: usize, ir: usize) -> f64 {
        self.weights[ix * self.r.knots + ir]
    }
}

/// Linear binning; out-of-range points go to the end knots, non-finite
/// values are skipped.
pub fn linear_bin_1d(x: &[f64], axis: Axis) -> Grid1D {
    let mut weights = vec![0.0; axis.knots];
    for &v in x.iter().filter(|v| v.is_finite()) {
        let (k, f) = axis.locate(v);
        weights[k] += 1.0 - f;
        weights[k + 1] += f;
    }
    Grid1D { axis, weights }
}

/// Tensor-product linear binning of the pairs `(x_i, r_i)`.
pub fn linear_bin_2d(x: &[f64], r: &[f64], x_axis: Axis, r_axis: Axis) -> Grid2D {
    let gr = r_axis.knots;
    let mut weights = vec![0.0; x_axis.knots * gr];
    for (&xv, &rv) in x.iter().zip(r) {
        if !(xv.is_finite() && rv.is_finite()) {
            continue;
        }
        let (kx, fx) = x_axis.locate(xv);
        let (kr, fr) = r_axis.locate(rv);
        let base = kx * gr + kr;
        weights[base] += (1.0 - fx) * (1.0 - fr);
        weights[base + 1] += (1.0 - fx) * fr;
        weights[base + gr] += fx * (1.0 - fr);
        weights[base + gr + 1] += fx * fr;
    }
    Grid2D {
        x: x_axis,
        r: r_axis,
        weights,
    }
}

/// Half of a discretely normalised Gaussian kernel: `k[0] + 2 Σ k[j] = 1`.
fn half_kernel(h: f64, step: f64) -> Vec<f64> {
    let m = ((KERNEL_CUTOFF * h / step).floor() as usize).max(0);
    let mut k: Vec<f64> = (0..=m).map(|j| norm_pdf(j as f64 * step / h)).collect();
    let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn convolve_into(w: &[f64], k: &[f64], out: &mut [f64]) {
    let g = w.len() as isize;
    let m = k.len() as isize - 1;
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let (a, b) = ((i - m).max(0), (i + m).min(g - 1));
        let mut acc = 0.0;
        for j in a..=b {
            acc += w[j as usize] * k[(j - i).unsigned_abs()];
        }
        *o = acc;
    }
}

fn check_bandwidth(h: f64, axis: &str) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("bandwidth along {axis} must be positive, got {h}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density1D {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// No mass on the grid; `values` are all zero.
    pub empty: bool,
}

/// Density on the `x`-major grid of a [`Grid2D`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density2D {
    pub x: Axis,
    pub r: Axis,
    pub values: Vec<f64>,
    pub empty: bool,
}

/// Binned k.d.e., normalised to unit trapezoid integral over the grid.
pub fn binned_kde_1d(grid: &Grid1D, h: f64) -> Result<Density1D> {
    check_bandwidth(h, "x")?;
    let step = grid.axis.step();
    let mut values = vec![0.0; grid.weights.len()];
    if grid.total() <= 0.0 {
        return Ok(Density1D {
            axis: grid.axis,
            values,
            empty: true,
        });
    }
    convolve_into(&grid.weights, &half_kernel(h, step), &mut values);
    let mass = trapezoid(&values, step);
    values.iter_mut().for_each(|v| *v /= mass);
    Ok(Density1D {
        axis: grid.axis,
        values,
        empty: false,
    })
}

/// Separable 2D binned k.d.e. with bandwidths `(hx, hr)`.
pub fn binned_kde_2d(grid: &Grid2D, hx: f64, hr: f64) -> Result<Density2D> {
    check_bandwidth(hx, "x")?;
    check_bandwidth(hr, "r")?;
    let (gx, gr) = (grid.x.knots, grid.r.knots);
    if grid.total() <= 0.0 {
        return Ok(Density2D {
            x: grid.x,
            r: grid.r,
            values: vec![0.0; gx * gr],
            empty: true,
        });
    }
    let kr = half_kernel(hr, grid.r.step());
    let kx = half_kernel(hx, grid.x.step());

    let mut along_r = vec![0.0; gx * gr];
    along_r
        .par_chunks_mut(gr)
        .zip(grid.weights.par_chunks(gr))
        .for_each(|(out, w)| convolve_into(w, &kr, out));

    // transpose so the x pass also runs over contiguous rows
    let mut t = vec![0.0; gx * gr];
    for ix in 0..gx {
        for ir in 0..gr {
            t[ir * gx + ix] = along_r[ix * gr + ir];
        }
    }
    let mut smoothed = vec![0.0; gx * gr];
    smoothed
        .par_chunks_mut(gx)
        .zip(t.par_chunks(gx))
        .for_each(|(out, w)| convolve_into(w, &kx, out));

    let mut values = vec![0.0; gx * gr];
    for ir in 0..gr {
        for ix in 0..gx {
            values[ix * gr + ir] = smoothed[ir * gx + ix];
        }
    }
    let col_mass: Vec<f64> = values.chunks(gr).map(|c| trapezoid(c, grid.r.step())).collect();
    let mass = trapezoid(&col_mass, grid.x.step());
    values.iter_mut().for_each(|v| *v /= mass);
    Ok(Density2D {
        x: grid.x,
        r: grid.r,
        values,
        empty: false,
    })
}

/// Conditional density `p(r|x)` on a 2D grid with its support mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conditional {
    pub x: Axis,
    pub r: Axis,
    /// `x`-major; zero in masked columns.
    pub values: Vec<f64>,
    pub marginal: Vec<f64>,
    /// One entry per `x` knot; `true` when the column is outside the support.
    pub mask: Vec<bool>,
}

/// `p(r, x) / p(x)` per `x` knot, with thinly supported columns masked.
pub fn conditional_density(
    x: &[f64],
    r: &[f64],
    x_axis: Axis,
    r_axis: Axis,
    hx: f64,
    hr: f64,
) -> Result<Conditional> {
    let joint = binned_kde_2d(&linear_bin_2d(x, r, x_axis, r_axis), hx, hr)?;
    // same rows as the joint so both see identical x mass
    let xs: Vec<f64> = x
        .iter()
        .zip(r)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, _)| *a)
        .collect();
    let marginal = binned_kde_1d(&linear_bin_1d(&xs, x_axis), hx)?;
    let gr = r_axis.knots;
    let peak = marginal.values.iter().cloned().fold(0.0, f64::max);
    let tau = SUPPORT_FRACTION * peak;
    let mask: Vec<bool> = marginal.values.iter().map(|&p| marginal.empty || p < tau || p <= 0.0).collect();
    let mut values = vec![0.0; joint.values.len()];
    for (ix, col) in values.chunks_mut(gr).enumerate() {
        if mask[ix] {
            continue;
        }
        let px = marginal.values[ix];
        for (ir, v) in col.iter_mut().enumerate() {
            *v = (joint.values[ix * gr + ir] / px).max(0.0);
        }
    }
    Ok(Conditional {
        x: x_axis,
        r: r_axis,
        values,
        marginal: marginal.values,
        mask,
    })
}

/// Pluggable distance `δ(p̂, p̂_m)` between observed and model densities.
#[derive(Clone)]
pub struct Distance {
    pub name: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl Distance {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Distance {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// `sign(a)|a|^{1/3}` with `a = p^{1/2} − p_m^{1/2}`.
    pub fn cube_root() -> Self {
        Distance::new("cbrt_sqrt_diff", |p, pm| (p.sqrt() - pm.sqrt()).cbrt())
    }

    pub fn eval(&self, p: f64, pm: f64) -> Result<f64> {
        let d = (self.f)(p, pm);
        if d.is_finite() || !(p.is_finite() && pm.is_finite()) {
            Ok(d)
        } else {
            Err(Error::InvalidDistance { p, pm })
        }
    }
}

impl Default for Distance {
    fn default() -> Self {
        Distance::cube_root()
    }
}

impl fmt::Debug for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Distance").field("name", &self.name).finish()
    }
}

/// What the observed conditional density is compared against.
pub enum ModelRef<'a> {
    /// Analytic reference of the residual type, smoothed with the same
    /// kernel in `r` as the observed density.
    Analytic(Reference),
    /// Replicate residual rows, each aligned with the observed `x`.
    Simulated(&'a [Vec<f64>]),
}

#[derive(Debug, Clone)]
pub struct DensCheckConfig {
    pub gx: usize,
    pub gr: usize,
    pub hx: Option<f64>,
    pub hr: Option<f64>,
    pub distance: Distance,
}

impl Default for DensCheckConfig {
    fn default() -> Self {
        DensCheckConfig {
            gx: DEFAULT_KNOTS,
            gr: DEFAULT_KNOTS,
            hx: None,
            hr: None,
            distance: Distance::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bandwidths {
    pub x: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    /// `x`-major `gx × gr` matrix; `None` in masked columns.
    pub delta: Vec<Option<f64>>,
    pub p_obs: Vec<f64>,
    pub p_model: Vec<f64>,
    pub mask: Vec<bool>,
    pub distance: String,
    pub bandwidth: Bandwidths,
}

impl DensityField {
    pub fn gx(&self) -> usize {
        self.x.len()
    }

    pub fn gr(&self) -> usize {
        self.r.len()
    }

    pub fn delta_at(&self, ix: usize, ir: usize) -> Option<f64> {
        self.delta[ix * self.gr() + ir]
    }
}

/// Reference density of the residual type convolved with `N(0, h²)` and
/// renormalised over the grid.
fn smoothed_reference(reference: Reference, axis: &Axis, h: f64) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = match reference {
        Reference::Normal => {
            let s = (1.0 + h * h).sqrt();
            axis.values().iter().map(|&r| norm_pdf(r / s) / s).collect()
        }
        Reference::Uniform => axis
            .values()
            .iter()
            .map(|&r| norm_cdf(r / h) - norm_cdf((r - 1.0) / h))
            .collect(),
        Reference::SimulationOnly => {
            return Err(Error::Config(
                "this residual type has no analytic density; use simulated residuals".into(),
            ))
        }
    };
    let mass = trapezoid(&v, axis.step());
    v.iter_mut().for_each(|p| *p /= mass);
    Ok(v)
}

/// Misfit field `δ(p̂(r|x), p̂_m(r|x))` over a `gx × gr` grid.
pub fn dens_check(r: &[f64], x: &[f64], model: ModelRef<'_>, cfg: &DensCheckConfig) -> Result<DensityField> {
    if r.len() != x.len() {
        return Err(Error::Config(format!(
            "residuals ({}) and covariate ({}) differ in length",
            r.len(),
            x.len()
        )));
    }
    let hx = match cfg.hx {
        Some(h) => h,
        None => select_bandwidth(x)?,
    };
    let hr = match cfg.hr {
        Some(h) => h,
        None => select_bandwidth(r)?,
    };
    check_bandwidth(hx, "x")?;
    check_bandwidth(hr, "r")?;
    let x_axis = Axis::covering(x, RANGE_PAD * hx, cfg.gx)?;
    let r_axis = match &model {
        ModelRef::Simulated(rows) => {
            let (lo, hi) = rows.iter().flatten().chain(r).filter(|v| v.is_finite()).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &v| (lo.min(v), hi.max(v)),
            );
            Axis::covering(&[lo, hi], RANGE_PAD * hr, cfg.gr)?
        }
        ModelRef::Analytic(_) => Axis::covering(r, RANGE_PAD * hr, cfg.gr)?,
    };

    let obs = conditional_density(x, r, x_axis, r_axis, hx, hr)?;
    let gr = r_axis.knots;
    let p_model: Vec<f64> = match model {
        ModelRef::Analytic(reference) => {
            let col = smoothed_reference(reference, &r_axis, hr)?;
            (0..x_axis.knots).flat_map(|_| col.iter().copied()).collect()
        }
        ModelRef::Simulated(rows) => {
            if rows.iter().any(|row| row.len() != x.len()) {
                return Err(Error::Config("replicate length differs from residual count".into()));
            }
            let xs: Vec<f64> = rows.iter().flat_map(|_| x.iter().copied()).collect();
            let rs: Vec<f64> = rows.iter().flatten().copied().collect();
            conditional_density(&xs, &rs, x_axis, r_axis, hx, hr)?.values
        }
    };

    let mut delta = vec![None; obs.values.len()];
    let mut p_obs = obs.values;
    let mut p_mod = p_model;
    for ix in 0..x_axis.knots {
        let cells = ix * gr..(ix + 1) * gr;
        if obs.mask[ix] {
            p_obs[cells.clone()].iter_mut().for_each(|v| *v = 0.0);
            p_mod[cells].iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        for c in cells {
            delta[c] = Some(cfg.distance.eval(p_obs[c], p_mod[c])?);
        }
    }
    Ok(DensityField {
        x: x_axis.values(),
        r: r_axis.values(),
        delta,
        p_obs,
        p_model: p_mod,
        mask: obs.mask,
        distance: cfg.distance.name.clone(),
        bandwidth: Bandwidths { x: hx, r: hr },
    })
}

/// Normal-reference bandwidth `1.06 min(sd, IQR/1.349) n^{-1/5}` over the
/// finite values of `x`.
pub fn select_bandwidth(x: &[f64]) -> Result<f64> {
    let mut v: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    if v.len() < 2 {
        return Err(Error::Config(format!(
            "bandwidth selection needs at least 2 finite values, got {}",
            v.len()
        )));
    }
    sort_f64(&mut v);
    let s = sd(&v);
    if !(s > 0.0) {
        return Err(Error::ConstantColumn(
            "values are constant; pass an explicit bandwidth".into(),
        ));
    }
    let iqr = (quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)) / 1.349;
    let spread = if iqr > 0.0 { s.min(iqr) } else { s };
    Ok(1.06 * spread * (v.len() as f64).powf(-0.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn binning_basics() {
        let ax = Axis::new(0.0, 9.0, 10).unwrap();
        let g = linear_bin_1d(&[3.0, 4.5, -7.0, 20.0, f64::NAN], ax);
        assert_eq!(g.weights[3], 1.0);
        assert_eq!(g.weights[5], 0.5);
        assert_eq!(g.weights[4], 0.5);
        assert_eq!(g.weights[0], 1.0);
        assert_eq!(g.weights[9], 1.0);
        assert_eq!(g.total(), 4.0);

        let g2 = linear_bin_2d(&[0.5, 1.0], &[0.5, 2.0], Axis::new(0.0, 2.0, 3).unwrap(), ax);
        for c in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(g2.at(c.0, c.1), 0.25);
        }
        assert_eq!(g2.at(1, 2), 1.0);
        assert_eq!(g2.total(), 2.0);
    }

    #[test]
    fn single_point_integrates_to_one() {
        let ax = Axis::new(-5.0, 5.0, 201).unwrap();
        let d = binned_kde_1d(&linear_bin_1d(&[0.0], ax), 0.5).unwrap();
        assert_abs_diff_eq!(trapezoid(&d.values, ax.step()), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.values[100], norm_pdf(0.0) / 0.5, epsilon = 2e-3);
        let empty = binned_kde_1d(&linear_bin_1d(&[], ax), 0.5).unwrap();
        assert!(empty.empty && empty.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_scaling_is_invisible() {
        let ax = Axis::new(-3.0, 3.0, 61).unwrap();
        let mut g = linear_bin_1d(&[-1.0, 0.3, 0.7, 2.0], ax);
        let a = binned_kde_1d(&g, 0.4).unwrap();
        g.weights.iter_mut().for_each(|w| *w *= 2.0);
        let b = binned_kde_1d(&g, 0.4).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-14);
        }
    }

    #[test]
    fn distance_examples() {
        let d = Distance::cube_root();
        assert_eq!(d.eval(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(d.eval(1.0, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(d.eval(0.25, 1.0).unwrap(), -0.793_700_525_984_1, epsilon = 1e-12);
        assert_eq!(d.eval(0.7, 0.2).unwrap(), -d.eval(0.2, 0.7).unwrap());
        let bad = Distance::new("bad", |p, pm| (p - pm).ln());
        assert!(matches!(bad.eval(0.1, 0.5), Err(Error::InvalidDistance { .. })));
    }

    #[test]
    fn bandwidth_rule() {
        assert!(matches!(select_bandwidth(&[2.0; 10]), Err(Error::ConstantColumn(_))));
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let h = select_bandwidth(&x).unwrap();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        assert_abs_diff_eq!(select_bandwidth(&x3).unwrap(), 3.0 * h, epsilon = 1e-12);
    }

    #[test]
    fn empty_columns_are_masked() {
        let x = [0.0, 0.1, 0.2, 5.0, 5.1];
        let r = [0.0, 1.0, -1.0, 0.5, 0.0];
        let c = conditional_density(
            &x,
            &r,
            Axis::new(0.0, 10.0, 51).unwrap(),
            Axis::new(-4.0, 4.0, 41).unwrap(),
            0.3,
            0.5,
        )
        .unwrap();
        assert!(!c.mask[0]);
        assert!(c.mask[50]);
        assert!(c.values[50 * 41..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_samples_give_zero_field() {
        let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.61).sin()).collect();
        let r: Vec<f64> = (0..500).map(|i| (i as f64 * 1.37).cos()).collect();
        let rows = vec![r.clone(), r.clone()];
        let f = dens_check(&r, &x, ModelRef::Simulated(&rows), &DensCheckConfig::default()).unwrap();
        assert!(f.delta.iter().flatten().all(|d| d.abs() < 1e-4));
        assert_eq!(f.delta.len(), 128 * 128);
    }
}
