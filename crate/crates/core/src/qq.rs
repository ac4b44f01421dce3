//! QQ curves, reference bands, simulation envelopes and equal-arc-length
//! binning of all of them.
//!
//! A [`QQCurve`] is built once (the `O(n log n)` sort); binning and zooming
//! only scan index windows of the cached arrays.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::residuals::{Reference, ResidualVector, SimulatedResiduals};
use crate::stats::{norm_pdf, norm_quantile, quantile_sorted, sort_f64};

pub const DEFAULT_B0: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveSource {
    Analytic,
    Simulation,
}

/// Sorted observed residuals against theoretical quantiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QQCurve {
    pub r: Vec<f64>,
    #[serde(rename = "rbar")]
    pub r_bar: Vec<f64>,
    pub source: CurveSource,
}

impl QQCurve {
    pub fn n(&self) -> usize {
        self.r.len()
    }

    /// Indices whose theoretical quantile lies in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Range<usize> {
        let start = self.r_bar.partition_point(|&v| v < lo);
        let end = self.r_bar.partition_point(|&v| v <= hi);
        start..end.max(start)
    }
}

/// Pointwise band aligned with a curve's theoretical quantiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Per-order-statistic simulation interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub alpha: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedBand {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedEnvelope {
    pub alpha: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedQQ {
    pub s: Vec<f64>,
    #[serde(rename = "sbar")]
    pub s_bar: Vec<f64>,
    pub counts: Vec<usize>,
    pub b0: usize,
    pub bands: Vec<BinnedBand>,
    pub envelope: Option<BinnedEnvelope>,
    pub clip_count: usize,
}

impl BinnedQQ {
    pub fn b(&self) -> usize {
        self.s.len()
    }
}

/// Plotting positions `(i - 0.5)/n`, `i = 1..n`.
pub fn plotting_positions(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (i as f64 + 0.5) / n as f64)
}

/// QQ curve with the reference implied by the residual type: analytic
/// quantiles for uniform/quantile residuals, replicate order-statistic means
/// otherwise.
pub fn compute_qq(res: &ResidualVector, sims: Option<&SimulatedResiduals>) -> Result<QQCurve> {
    match res.reference {
        Reference::Uniform | Reference::Normal => Ok(analytic_qq(res)),
        Reference::SimulationOnly => {
            let sims = sims.ok_or_else(|| {
                Error::Config(format!(
                    "{} residuals need simulated replicates for a QQ reference",
                    res.kind
                ))
            })?;
            simulated_qq(res, &sims.sorted_rows())
        }
    }
}

pub fn analytic_qq(res: &ResidualVector) -> QQCurve {
    let mut r = res.values.clone();
    sort_f64(&mut r);
    let r_bar = analytic_positions(res.reference, r.len());
    QQCurve {
        r,
        r_bar,
        source: CurveSource::Analytic,
    }
}

/// Theoretical quantiles at the plotting positions: normal quantiles for a
/// normal reference, the positions themselves otherwise.
pub fn analytic_positions(reference: Reference, n: usize) -> Vec<f64> {
    match reference {
        Reference::Normal => plotting_positions(n).map(norm_quantile).collect(),
        _ => plotting_positions(n).collect(),
    }
}

/// Reference quantiles as the mean over replicates of each order statistic.
pub fn simulated_qq(res: &ResidualVector, sorted_rows: &[Vec<f64>]) -> Result<QQCurve> {
    let r_bar = replicate_means(sorted_rows, res.values.len())?;
    let mut r = res.values.clone();
    sort_f64(&mut r);
    Ok(QQCurve {
        r,
        r_bar,
        source: CurveSource::Simulation,
    })
}

/// Mean of each order statistic across sorted replicates of length `n`.
pub fn replicate_means(sorted_rows: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
    let l = sorted_rows.len();
    if l < 2 {
        return Err(Error::Config(format!(
            "a simulated QQ reference needs at least 2 replicates, got {l}"
        )));
    }
    if sorted_rows.iter().any(|row| row.len() != n) {
        return Err(Error::Config("replicate length differs from residual count".into()));
    }
    let mut r_bar = vec![0.0; n];
    for row in sorted_rows {
        for (acc, v) in r_bar.iter_mut().zip(row) {
            *acc += v;
        }
    }
    r_bar.iter_mut().for_each(|v| *v /= l as f64);
    Ok(r_bar)
}

/// Total arc length of the piecewise-linear curve.
pub fn arc_length(curve: &QQCurve) -> Result<f64> {
    let n = curve.n();
    if n < 2 {
        return Err(Error::DegenerateCurve(n));
    }
    Ok(cumulative_arc(&curve.r, &curve.r_bar)
        .last()
        .copied()
        .unwrap_or(0.0))
}

fn cumulative_arc(r: &[f64], r_bar: &[f64]) -> Vec<f64> {
    let mut h = Vec::with_capacity(r.len());
    let mut acc = 0.0;
    h.push(0.0);
    for i in 1..r.len() {
        acc += (r[i] - r[i - 1]).hypot(r_bar[i] - r_bar[i - 1]);
        h.push(acc);
    }
    h
}

/// Bins the full curve into at most `b0` equal-arc-length bins.
pub fn bin_qq(curve: &QQCurve, b0: usize, bands: &[Band], envelope: Option<&Envelope>) -> Result<BinnedQQ> {
    bin_window(curve, 0..curve.n(), b0, bands, envelope)
}

/// Bins the index window `range` of the curve and its aligned bands.
pub fn bin_window(
    curve: &QQCurve,
    range: Range<usize>,
    b0: usize,
    bands: &[Band],
    envelope: Option<&Envelope>,
) -> Result<BinnedQQ> {
    if b0 == 0 {
        return Err(Error::Config("bin budget b0 must be at least 1".into()));
    }
    let r = &curve.r[range.clone()];
    let r_bar = &curve.r_bar[range.clone()];
    let n = r.len();
    if n == 0 {
        return Err(Error::DegenerateCurve(0));
    }

    // bin index per point; a window no larger than the budget is kept as is
    let assignment: Vec<usize> = if n <= b0 {
        (0..n).collect()
    } else {
        let h = cumulative_arc(r, r_bar);
        let total = h[n - 1];
        if total == 0.0 {
            vec![0; n]
        } else {
            let width = total / b0 as f64;
            h.iter()
                .map(|&hi| {
                    // points on an interval boundary go to the lower bin
                    let k = (hi / width).ceil() as usize;
                    k.saturating_sub(1).min(b0 - 1)
                })
                .collect()
        }
    };

    let groups = contiguous_groups(&assignment);
    let mean_of = |v: &[f64]| -> Vec<f64> {
        groups
            .iter()
            .map(|g| v[g.clone()].iter().sum::<f64>() / g.len() as f64)
            .collect()
    };

    let binned_bands = bands
        .iter()
        .map(|b| BinnedBand {
            name: b.name.clone(),
            lower: mean_of(&b.lower[range.clone()]),
            upper: mean_of(&b.upper[range.clone()]),
        })
        .collect();
    let binned_env = envelope.map(|e| BinnedEnvelope {
        alpha: e.alpha,
        lo: mean_of(&e.lo[range.clone()]),
        hi: mean_of(&e.hi[range.clone()]),
    });

    Ok(BinnedQQ {
        s: mean_of(r),
        s_bar: mean_of(r_bar),
        counts: groups.iter().map(|g| g.len()).collect(),
        b0,
        bands: binned_bands,
        envelope: binned_env,
        clip_count: 0,
    })
}

fn contiguous_groups(assignment: &[usize]) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=assignment.len() {
        if i == assignment.len() || assignment[i] != assignment[start] {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Re-bins the part of a cached curve whose theoretical quantiles fall in
/// `[lo, hi]`. `None` when the window holds no points.
pub fn zoom(
    curve: &QQCurve,
    bands: &[Band],
    envelope: Option<&Envelope>,
    lo: f64,
    hi: f64,
    b0: usize,
) -> Result<Option<BinnedQQ>> {
    if !(lo < hi) {
        return Err(Error::Config(format!("zoom range needs lo < hi, got [{lo}, {hi}]")));
    }
    let window = curve.window(lo, hi);
    if window.is_empty() {
        return Ok(None);
    }
    bin_window(curve, window, b0, bands, envelope).map(Some)
}

/// Asymptotic Kolmogorov–Smirnov half-width `c(alpha)/sqrt(n)` for a band
/// of coverage `alpha`.
pub fn ks_half_width(n: usize, alpha: f64) -> f64 {
    let tail = 1.0 - alpha;
    (-(tail / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Constant-width KS band around uniform plotting positions, clipped to [0, 1].
pub fn ks_band(curve: &QQCurve, alpha: f64) -> Band {
    let d = ks_half_width(curve.n(), alpha);
    Band {
        name: "ks".into(),
        lower: curve.r_bar.iter().map(|v| (v - d).max(0.0)).collect(),
        upper: curve.r_bar.iter().map(|v| (v + d).min(1.0)).collect(),
    }
}

/// Pointwise normal-quantile half-width for probability `p` and sample size `n`.
#[inline]
pub fn normal_half_width(p: f64, n: usize, alpha: f64) -> f64 {
    let z = norm_quantile(p);
    norm_quantile((1.0 + alpha) / 2.0) / norm_pdf(z) * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn normal_band_widths(probs: &[f64], n: usize, alpha: f64) -> Vec<f64> {
    probs.iter().map(|&p| normal_half_width(p, n, alpha)).collect()
}

/// Normal-quantile band around `r_bar` using plotting positions.
pub fn normal_band(curve: &QQCurve, alpha: f64) -> Band {
    let n = curve.n();
    let (lower, upper) = plotting_positions(n)
        .zip(&curve.r_bar)
        .map(|(p, &z)| {
            let w = normal_half_width(p, n, alpha);
            (z - w, z + w)
        })
        .unzip();
    Band {
        name: "normal".into(),
        lower,
        upper,
    }
}

/// Pointwise `(1-alpha)/2` and `(1+alpha)/2` type-7 quantiles of each order
/// statistic across sorted replicates.
pub fn sim_envelope_sorted(sorted_rows: &[Vec<f64>], alpha: f64) -> Result<Envelope> {
    let l = sorted_rows.len();
    if l < 2 {
        return Err(Error::Config(format!(
            "a simulation envelope needs at least 2 replicates, got {l}"
        )));
    }
    let n = sorted_rows[0].len();
    let (plo, phi) = ((1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0);
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(l),
            |col, i| {
                col.clear();
                col.extend(sorted_rows.iter().map(|row| row[i]));
                sort_f64(col);
                (quantile_sorted(col, plo), quantile_sorted(col, phi))
            },
        )
        .unzip();
    Ok(Envelope { alpha, lo, hi })
}

pub fn sim_envelope(sims: &SimulatedResiduals, alpha: f64) -> Result<Envelope> {
    if sims.l() < 2 {
        return Err(Error::Config(format!(
            "a simulation envelope needs at least 2 replicates, got {}",
            sims.l()
        )));
    }
    sim_envelope_sorted(&sims.sorted_rows(), alpha)
}
