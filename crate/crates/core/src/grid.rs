//! Binned summary checks along one covariate (equal-width bins) or two
//! (hexagonal bins on standardised axes), plus coarse glyph grids of worm
//! plots or per-cell densities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{binned_kde_1d, linear_bin_1d, select_bandwidth, Axis, RANGE_PAD};
use crate::error::{Error, Result};
use crate::qq::normal_half_width;
use crate::residuals::{Reference, ResidualVector};
use crate::stats::{mean, norm_quantile, quantile_sorted, sd, skewness, sort_f64};

/// Fewest members for which sd and skewness are reported.
pub const MIN_COUNT: usize = 5;
pub const DEFAULT_HEXES: usize = 30;
pub const WORM_MIN: usize = 5;
/// Upper bound on points per worm glyph.
pub const WORM_MAX_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Summary {
    Mean,
    Sd,
    Skewness,
}

impl Summary {
    pub fn name(self) -> &'static str {
        match self {
            Summary::Mean => "mean",
            Summary::Sd => "sd",
            Summary::Skewness => "skewness",
        }
    }

    pub fn min_count(self) -> usize {
        match self {
            Summary::Mean => 1,
            Summary::Sd | Summary::Skewness => MIN_COUNT,
        }
    }

    /// `None` when the bin is too small for the summary.
    pub fn eval(self, v: &[f64]) -> Option<f64> {
        if v.len() < self.min_count() {
            return None;
        }
        Some(match self {
            Summary::Mean => mean(v),
            Summary::Sd => sd(v),
            Summary::Skewness => skewness(v),
        })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Summary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Summary::Mean),
            "sd" => Ok(Summary::Sd),
            "skewness" | "skew" => Ok(Summary::Skewness),
            _ => Err(Error::Config(format!("unknown summary `{s}` (mean|sd|skewness)"))),
        }
    }
}

/// Row indices per group, in row order.
fn members(assign: &[Option<usize>], groups: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); groups];
    for (i, g) in assign.iter().enumerate() {
        if let Some(g) = *g {
            out[g].push(i);
        }
    }
    out
}

/// Summary of `values` restricted to each group.
fn summarise(values: &[f64], groups: &[Vec<usize>], summary: Summary, scratch: &mut Vec<f64>) -> Vec<Option<f64>> {
    groups
        .iter()
        .map(|idx| {
            scratch.clear();
            scratch.extend(idx.iter().map(|&i| values[i]));
            summary.eval(scratch)
        })
        .collect()
}

/// Replicate summaries, `[group][replicate]`, skipping undefined values.
fn replicate_summaries(sims: &[Vec<f64>], groups: &[Vec<usize>], summary: Summary) -> Vec<Vec<f64>> {
    let per_rep: Vec<Vec<Option<f64>>> = sims
        .par_iter()
        .map_init(Vec::new, |scratch, row| summarise(row, groups, summary, scratch))
        .collect();
    (0..groups.len())
        .map(|g| per_rep.iter().filter_map(|rep| rep[g]).collect())
        .collect()
}

fn check_sims(sims: &[Vec<f64>], n: usize) -> Result<()> {
    if sims.iter().any(|r| r.len() != n) {
        return Err(Error::Config("replicate length differs from residual count".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarySeries {
    pub summary: Summary,
    pub edges: Vec<f64>,
    /// Mean covariate per bin; the bin midpoint when the bin is empty.
    pub centers: Vec<f64>,
    pub s: Vec<Option<f64>>,
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    /// Bins too small for the summary; excluded from RI comparisons.
    pub flags: Vec<bool>,
    pub alpha: Option<f64>,
}

impl SummarySeries {
    pub fn b(&self) -> usize {
        self.counts.len()
    }

    /// Share of unflagged bins with an RI whose summary falls outside it.
    pub fn outside_fraction(&self) -> Option<f64> {
        let mut total = 0usize;
        let mut outside = 0usize;
        for k in 0..self.b() {
            if self.flags[k] {
                continue;
            }
            if let (Some(s), Some(lo), Some(hi)) = (self.s[k], self.lo[k], self.hi[k]) {
                total += 1;
                if s < lo || s > hi {
                    outside += 1;
                }
            }
        }
        (total > 0).then(|| outside as f64 / total as f64)
    }
}

/// Equal-width binning of `x` into `b` bins over its finite range.
pub fn equal_width_bins(x: &[f64], b: usize) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
    if b == 0 {
        return Err(Error::Config("bin count b must be at least 1".into()));
    }
    let (lo, hi) = x
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return Err(Error::EmptyDataset);
    }
    let width = (hi - lo) / b as f64;
    let edges = (0..=b).map(|k| if k == b { hi } else { lo + width * k as f64 }).collect();
    let assign = x
        .iter()
        .map(|&v| {
            v.is_finite().then(|| {
                if width > 0.0 {
                    (((v - lo) / width).floor() as usize).min(b - 1)
                } else {
                    0
                }
            })
        })
        .collect();
    Ok((edges, assign))
}

/// Summaries of residuals in `b` equal-width bins along `x`, with simulated
/// reference intervals of level `alpha` when replicates are given.
pub fn grid_check_1d(
    res: &[f64],
    x: &[f64],
    b: usize,
    summary: Summary,
    sims: Option<&[Vec<f64>]>,
    alpha: f64,
) -> Result<SummarySeries> {
    if res.len() != x.len() {
        return Err(Error::Config("residuals and covariate differ in length".into()));
    }
    let (edges, assign) = equal_width_bins(x, b)?;
    let groups = members(&assign, b);
    let mut scratch = Vec::new();
    let s = summarise(res, &groups, summary, &mut scratch);
    let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    let centers = groups
        .iter()
        .enumerate()
        .map(|(k, idx)| {
            if idx.is_empty() {
                0.5 * (edges[k] + edges[k + 1])
            } else {
                idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64
            }
        })
        .collect();
    let flags: Vec<bool> = s.iter().map(Option::is_none).collect();

    let (lo, hi, alpha) = match sims {
        Some(sims) => {
            check_sims(sims, res.len())?;
            check_alpha(alpha)?;
            let reps = replicate_summaries(sims, &groups, summary);
            let (plo, phi) = ((1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0);
            let (lo, hi) = reps
                .into_iter()
                .zip(&flags)
                .map(|(mut v, &flag)| {
                    if flag || v.is_empty() {
                        return (None, None);
                    }
                    sort_f64(&mut v);
                    (Some(quantile_sorted(&v, plo)), Some(quantile_sorted(&v, phi)))
                })
                .unzip();
            (lo, hi, Some(alpha))
        }
        None => (vec![None; b], vec![None; b], None),
    };
    Ok(SummarySeries {
        summary,
        edges,
        centers,
        s,
        lo,
        hi,
        counts,
        flags,
        alpha,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Pointy-top hexagon lattice on axes rescaled to `[0, 1]`: rows `dy = w√3/2`
/// apart, odd rows shifted by `w/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub origin: [f64; 2],
    pub scale: [f64; 2],
    pub w: f64,
    pub dy: f64,
}

impl Lattice {
    pub fn new(origin: [f64; 2], scale: [f64; 2], w: f64) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("hex spacing must be positive, got {w}")));
        }
        if !(scale[0] > 0.0 && scale[1] > 0.0) {
            return Err(Error::Config("hex lattice axes need a positive range".into()));
        }
        Ok(Lattice {
            origin,
            scale,
            w,
            dy: w * 3f64.sqrt() / 2.0,
        })
    }

    /// Lattice with `hexes` columns across the standardised `x1` range.
    pub fn fit(x1: &[f64], x2: &[f64], hexes: usize) -> Result<Self> {
        if hexes == 0 {
            return Err(Error::Config("hex count must be at least 1".into()));
        }
        let range = |v: &[f64], name: &str| -> Result<(f64, f64)> {
            let (lo, hi) = v
                .iter()
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if lo > hi {
                return Err(Error::EmptyDataset);
            }
            if lo == hi {
                return Err(Error::ConstantColumn(name.to_string()));
            }
            Ok((lo, hi))
        };
        let (a0, a1) = range(x1, "x1")?;
        let (b0, b1) = range(x2, "x2")?;
        Lattice::new([a0, b0], [a1 - a0, b1 - b0], 1.0 / hexes as f64)
    }

    pub fn standardise(&self, x1: f64, x2: f64) -> (f64, f64) {
        ((x1 - self.origin[0]) / self.scale[0], (x2 - self.origin[1]) / self.scale[1])
    }

    /// Center of hex `(q, r)` in lattice units.
    pub fn unit_center(&self, q: i64, r: i64) -> (f64, f64) {
        let off = if r.rem_euclid(2) == 1 { 0.5 * self.w } else { 0.0 };
        (q as f64 * self.w + off, r as f64 * self.dy)
    }

    /// Center of hex `(q, r)` in data units.
    pub fn center(&self, q: i64, r: i64) -> [f64; 2] {
        let (u, v) = self.unit_center(q, r);
        [self.origin[0] + u * self.scale[0], self.origin[1] + v * self.scale[1]]
    }

    /// Nearest hex `(q, r)` to a point in lattice units. Ties go to the
    /// lexicographically smaller `(r, q)`.
    pub fn nearest(&self, u: f64, v: f64) -> (i64, i64) {
        let r0 = (v / self.dy).floor() as i64;
        let mut best = (0, 0);
        let mut best_d = f64::INFINITY;
        for r in r0..=r0 + 1 {
            let off = if r.rem_euclid(2) == 1 { 0.5 * self.w } else { 0.0 };
            // round half down so equal distances keep the smaller column
            let q = ((u - off) / self.w - 0.5).ceil() as i64;
            let (cu, cv) = self.unit_center(q, r);
            let d = (u - cu).powi(2) + (v - cv).powi(2);
            if d < best_d {
                best_d = d;
                best = (q, r);
            }
        }
        best
    }
}

/// Hex of every point, `None` for non-finite coordinates.
pub fn hex_assign(x1: &[f64], x2: &[f64], lattice: &Lattice) -> Vec<Option<(i64, i64)>> {
    x1.iter()
        .zip(x2)
        .map(|(&a, &b)| {
            (a.is_finite() && b.is_finite()).then(|| {
                let (u, v) = lattice.standardise(a, b);
                lattice.nearest(u, v)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hex {
    pub q: i64,
    pub r: i64,
    pub center: [f64; 2],
    pub count: usize,
    pub s: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_sd: Option<f64>,
    pub z: Option<f64>,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HexSummaryGrid {
    pub summary: Summary,
    pub lattice: Lattice,
    pub hexes: Vec<Hex>,
}

impl HexSummaryGrid {
    pub fn z_values(&self) -> Vec<f64> {
        self.hexes.iter().filter(|h| !h.flag).filter_map(|h| h.z).collect()
    }
}

/// Hexagon summaries standardised by the mean and sd of the same summary
/// over `l ≥ 2` replicates.
pub fn grid_check_2d(
    res: &[f64],
    x1: &[f64],
    x2: &[f64],
    lattice: &Lattice,
    summary: Summary,
    sims: &[Vec<f64>],
) -> Result<HexSummaryGrid> {
    if res.len() != x1.len() || res.len() != x2.len() {
        return Err(Error::Config("residuals and covariates differ in length".into()));
    }
    if sims.len() < 2 {
        return Err(Error::Config(format!(
            "hex standardisation needs at least 2 replicates, got {}",
            sims.len()
        )));
    }
    check_sims(sims, res.len())?;
    let cells = hex_assign(x1, x2, lattice);
    let mut keys: Vec<(i64, i64)> = cells.iter().flatten().map(|&(q, r)| (r, q)).collect();
    keys.sort_unstable();
    keys.dedup();
    let assign: Vec<Option<usize>> = cells
        .iter()
        .map(|c| c.map(|(q, r)| keys.binary_search(&(r, q)).expect("hex key present")))
        .collect();
    let groups = members(&assign, keys.len());
    let mut scratch = Vec::new();
    let s = summarise(res, &groups, summary, &mut scratch);
    let reps = replicate_summaries(sims, &groups, summary);

    let hexes = keys
        .iter()
        .enumerate()
        .map(|(k, &(r, q))| {
            let (m, sdv) = if reps[k].len() >= 2 {
                (Some(mean(&reps[k])), Some(sd(&reps[k])))
            } else {
                (None, None)
            };
            let z = match (s[k], m, sdv) {
                (Some(s), Some(m), Some(sdv)) if sdv > 0.0 => Some((s - m) / sdv),
                _ => None,
            };
            Hex {
                q,
                r,
                center: lattice.center(q, r),
                count: groups[k].len(),
                s: s[k],
                sim_mean: m,
                sim_sd: sdv,
                z,
                flag: z.is_none(),
            }
        })
        .collect();
    Ok(HexSummaryGrid {
        summary,
        lattice: *lattice,
        hexes,
    })
}

/// Rectangular grid of `c1 × c2` cells over the covariate ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cells {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    pub c1: usize,
    pub c2: usize,
}

impl Cells {
    pub fn fit(x1: &[f64], x2: &[f64], c1: usize, c2: usize) -> Result<Self> {
        if c1 == 0 || c2 == 0 {
            return Err(Error::Config("glyph grid needs at least one cell per axis".into()));
        }
        let (e1, _) = equal_width_bins(x1, 1)?;
        let (e2, _) = equal_width_bins(x2, 1)?;
        Ok(Cells {
            x1: [e1[0], e1[1]],
            x2: [e2[0], e2[1]],
            c1,
            c2,
        })
    }

    /// Cell index `i2 * c1 + i1` of each point.
    fn assign(&self, x1: &[f64], x2: &[f64]) -> Vec<Option<usize>> {
        let locate = |v: f64, [lo, hi]: [f64; 2], c: usize| -> Option<usize> {
            if !v.is_finite() || v < lo || v > hi {
                return None;
            }
            let w = (hi - lo) / c as f64;
            Some(if w > 0.0 { (((v - lo) / w).floor() as usize).min(c - 1) } else { 0 })
        };
        x1.iter()
            .zip(x2)
            .map(|(&a, &b)| Some(locate(b, self.x2, self.c2)? * self.c1 + locate(a, self.x1, self.c1)?))
            .collect()
    }

    fn bounds(&self, k: usize) -> [f64; 4] {
        let (i1, i2) = (k % self.c1, k / self.c1);
        let w1 = (self.x1[1] - self.x1[0]) / self.c1 as f64;
        let w2 = (self.x2[1] - self.x2[0]) / self.c2 as f64;
        [
            self.x1[0] + w1 * i1 as f64,
            self.x1[0] + w1 * (i1 + 1) as f64,
            self.x2[0] + w2 * i2 as f64,
            self.x2[0] + w2 * (i2 + 1) as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GlyphPayload {
    Worm {
        z: Vec<f64>,
        d: Vec<f64>,
        half_width: Vec<f64>,
        outside: Vec<bool>,
    },
    Kde {
        density: Vec<f64>,
    },
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlyphCell {
    /// `[x1_lo, x1_hi, x2_lo, x2_hi]`.
    pub bounds: [f64; 4],
    pub kind: &'static str,
    pub count: usize,
    pub payload: GlyphPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlyphGrid {
    pub cells_x1: usize,
    pub cells_x2: usize,
    /// Shared residual axis of k.d.e. glyphs.
    pub r: Option<Vec<f64>>,
    pub cells: Vec<GlyphCell>,
}

/// Detrended QQ data of one cell's residuals against the standard normal.
pub fn worm(values: &[f64], alpha: f64, max_points: usize) -> GlyphPayload {
    let m = values.len();
    if m < WORM_MIN {
        return GlyphPayload::Empty;
    }
    let mut sorted = values.to_vec();
    sort_f64(&mut sorted);
    let keep: Vec<usize> = if m <= max_points.max(2) {
        (0..m).collect()
    } else {
        let p = max_points.max(2);
        (0..p).map(|k| ((k * (m - 1)) as f64 / (p - 1) as f64).round() as usize).collect()
    };
    let (mut z, mut d, mut hw, mut out) = (vec![], vec![], vec![], vec![]);
    for i in keep {
        let p = (i as f64 + 0.5) / m as f64;
        let zi = norm_quantile(p);
        let di = sorted[i] - zi;
        let w = normal_half_width(p, m, alpha);
        z.push(zi);
        d.push(di);
        hw.push(w);
        out.push(di.abs() > w);
    }
    GlyphPayload::Worm {
        z,
        d,
        half_width: hw,
        outside: out,
    }
}

/// Worm plot per cell. Requires residuals with a normal reference.
pub fn worm_glyphs(res: &ResidualVector, x1: &[f64], x2: &[f64], cells: &Cells, alpha: f64) -> Result<GlyphGrid> {
    if res.reference != Reference::Normal {
        return Err(Error::Config(format!(
            "worm glyphs need quantile residuals, got {}",
            res.kind
        )));
    }
    check_alpha(alpha)?;
    let groups = cell_groups(&res.values, x1, x2, cells)?;
    let out = groups
        .par_iter()
        .enumerate()
        .map(|(k, idx)| {
            let v: Vec<f64> = idx.iter().map(|&i| res.values[i]).collect();
            GlyphCell {
                bounds: cells.bounds(k),
                kind: "worm",
                count: v.len(),
                payload: worm(&v, alpha, WORM_MAX_POINTS),
            }
        })
        .collect();
    Ok(GlyphGrid {
        cells_x1: cells.c1,
        cells_x2: cells.c2,
        r: None,
        cells: out,
    })
}

fn cell_groups(res: &[f64], x1: &[f64], x2: &[f64], cells: &Cells) -> Result<Vec<Vec<usize>>> {
    if res.len() != x1.len() || res.len() != x2.len() {
        return Err(Error::Config("residuals and covariates differ in length".into()));
    }
    Ok(members(&cells.assign(x1, x2), cells.c1 * cells.c2))
}

/// Per-cell binned k.d.e. of residuals on one shared axis of `knots` knots.
pub fn kde_glyphs(
    res: &[f64],
    x1: &[f64],
    x2: &[f64],
    cells: &Cells,
    knots: usize,
    bandwidth: Option<f64>,
) -> Result<GlyphGrid> {
    let groups = cell_groups(res, x1, x2, cells)?;
    let h = match bandwidth {
        Some(h) => h,
        None => select_bandwidth(res)?,
    };
    let axis = Axis::covering(res, RANGE_PAD * h, knots)?;
    let out = groups
        .par_iter()
        .enumerate()
        .map(|(k, idx)| {
            let v: Vec<f64> = idx.iter().map(|&i| res[i]).collect();
            let payload = if v.is_empty() {
                GlyphPayload::Empty
            } else {
                GlyphPayload::Kde {
                    density: binned_kde_1d(&linear_bin_1d(&v, axis), h)?.values,
                }
            };
            Ok(GlyphCell {
                bounds: cells.bounds(k),
                kind: "kde",
                count: v.len(),
                payload,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GlyphGrid {
        cells_x1: cells.c1,
        cells_x2: cells.c2,
        r: Some(axis.values()),
        cells: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residuals::ResidualType;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_residuals() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let r = vec![2.5; 40];
        let m = grid_check_1d(&r, &x, 4, Summary::Mean, None, 0.9).unwrap();
        assert!(m.s.iter().all(|&s| s == Some(2.5)));
        assert_eq!(m.counts, vec![10; 4]);
        let s = grid_check_1d(&r[..3], &x[..3], 3, Summary::Sd, None, 0.9).unwrap();
        assert!(s.flags.iter().all(|&f| f));
    }

    #[test]
    fn single_bin_mean_is_global_mean() {
        let r: Vec<f64> = (0..101).map(|i| (i as f64 * 0.77).sin()).collect();
        let x: Vec<f64> = (0..101).map(|i| (i as f64 * 0.31).cos()).collect();
        let g = grid_check_1d(&r, &x, 1, Summary::Mean, None, 0.9).unwrap();
        assert_eq!(g.s[0], Some(mean(&r)));
    }

    #[test]
    fn symmetric_triple_skewness() {
        assert_eq!(Summary::Skewness.eval(&[-1.0, 0.0, 1.0, -2.0, 2.0]), Some(0.0));
    }

    #[test]
    fn hex_center_maps_to_itself() {
        let lat = Lattice::new([0.0, 0.0], [1.0, 1.0], 0.1).unwrap();
        for (q, r) in [(0, 0), (3, 1), (4, 2), (7, 5)] {
            let (u, v) = lat.unit_center(q, r);
            assert_eq!(lat.nearest(u, v), (q, r));
        }
    }

    #[test]
    fn identical_replicates_are_flagged() {
        let x1: Vec<f64> = (0..200).map(|i| (i % 20) as f64).collect();
        let x2: Vec<f64> = (0..200).map(|i| (i / 20) as f64).collect();
        let r: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let lat = Lattice::fit(&x1, &x2, 3).unwrap();
        let g = grid_check_2d(&r, &x1, &x2, &lat, Summary::Sd, &[r.clone(), r.clone()]).unwrap();
        assert!(g.hexes.iter().all(|h| h.flag && h.z.is_none()));
        assert_eq!(g.hexes.iter().map(|h| h.count).sum::<usize>(), 200);
    }

    #[test]
    fn worm_extremes() {
        let m = 50;
        let z: Vec<f64> = (0..m).map(|i| norm_quantile((i as f64 + 0.5) / m as f64)).collect();
        match worm(&z, 0.95, 200) {
            GlyphPayload::Worm { d, outside, .. } => {
                assert!(d.iter().all(|v| v.abs() < 1e-12));
                assert!(outside.iter().all(|o| !o));
            }
            _ => panic!("expected worm"),
        }
        let shifted: Vec<f64> = z.iter().map(|v| v + 10.0).collect();
        match worm(&shifted, 0.95, 20) {
            GlyphPayload::Worm { outside, z, .. } => {
                assert!(outside.iter().all(|&o| o));
                assert_eq!(z.len(), 20);
            }
            _ => panic!("expected worm"),
        }
        assert_eq!(worm(&z[..3], 0.95, 200), GlyphPayload::Empty);
    }

    #[test]
    fn worm_central_half_width() {
        let m = 100;
        let z: Vec<f64> = (0..m).map(|i| norm_quantile((i as f64 + 0.5) / m as f64)).collect();
        if let GlyphPayload::Worm { half_width, .. } = worm(&z, 0.95, 200) {
            assert_abs_diff_eq!(half_width[49], 0.24562, epsilon = 5e-4);
        }
        let res = ResidualVector {
            values: z.clone(),
            kind: ResidualType::Pearson,
            reference: ResidualType::Pearson.reference(),
            clip_count: 0,
            warnings: vec![],
        };
        let cells = Cells::fit(&z, &z, 2, 2).unwrap();
        assert!(worm_glyphs(&res, &z, &z, &cells, 0.95).is_err());
    }

    #[test]
    fn kde_glyphs_share_axis() {
        let r: Vec<f64> = (0..400).map(|i| (i as f64 * 0.71).sin()).collect();
        let x1: Vec<f64> = (0..400).map(|i| (i % 2) as f64).collect();
        let x2: Vec<f64> = (0..400).map(|i| (i % 3) as f64).collect();
        let cells = Cells::fit(&x1, &x2, 2, 2).unwrap();
        let g = kde_glyphs(&r, &x1, &x2, &cells, 64, Some(0.2)).unwrap();
        assert_eq!(g.r.as_ref().unwrap().len(), 64);
        assert_eq!(g.cells.iter().map(|c| c.count).sum::<usize>(), 400);
        for c in &g.cells {
            if let GlyphPayload::Kde { density } = &c.payload {
                assert_eq!(density.len(), 64);
            }
        }
    }
}
