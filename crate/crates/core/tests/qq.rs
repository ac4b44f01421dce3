mod common;

use common::*;
use gamdiag_core::qq::{analytic_qq, bin_qq, bin_window, ks_band, sim_envelope, sim_envelope_sorted, zoom, QQCurve};
use gamdiag_core::residuals::{simulate_residuals, transform, Reference, ResidualType, ResidualVector};
use gamdiag_core::Family;
use proptest::prelude::*;

fn normal_residuals(values: Vec<f64>) -> ResidualVector {
    ResidualVector {
        values,
        kind: ResidualType::Quantile,
        reference: Reference::Normal,
        clip_count: 0,
        warnings: vec![],
    }
}

/// Unbinned curve value at theoretical quantile `t`, by linear interpolation.
fn interpolate(curve: &QQCurve, t: f64) -> f64 {
    let i = curve.r_bar.partition_point(|&v| v < t);
    if i == 0 {
        return curve.r[0];
    }
    if i == curve.n() {
        return curve.r[curve.n() - 1];
    }
    let (a, b) = (curve.r_bar[i - 1], curve.r_bar[i]);
    let w = if b > a { (t - a) / (b - a) } else { 0.0 };
    curve.r[i - 1] + w * (curve.r[i] - curve.r[i - 1])
}

#[test]
fn binned_curve_tracks_unbinned_at_one_million() {
    let curve = analytic_qq(&normal_residuals(normals(1_000_000, 3)));
    let binned = bin_qq(&curve, 1000, &[], None).unwrap();
    assert!(binned.b() <= 1000);
    let (lo, hi) = (curve.r_bar[curve.n() / 100], curve.r_bar[curve.n() * 99 / 100]);
    let worst = binned
        .s_bar
        .iter()
        .zip(&binned.s)
        .filter(|(t, _)| (lo..=hi).contains(*t))
        .map(|(&t, &s)| (s - interpolate(&curve, t)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "max deviation {worst}");
}

#[test]
fn envelope_covers_well_specified_curve() {
    let mut total = 0.0;
    for seed in 0..50 {
        let ds = gaussian_dataset(500, seed);
        let res = transform(&ds, Family::Gaussian, ResidualType::Quantile).unwrap();
        let sims = simulate_residuals(&ds, Family::Gaussian, ResidualType::Quantile, 200, 1000 + seed).unwrap();
        let env = sim_envelope(&sims, 0.9).unwrap();
        let curve = analytic_qq(&res);
        let inside = curve
            .r
            .iter()
            .zip(env.lo.iter().zip(&env.hi))
            .filter(|&(v, (lo, hi))| lo <= v && v <= hi)
            .count();
        total += inside as f64 / curve.n() as f64;
    }
    let coverage = total / 50.0;
    assert!(coverage >= 0.85, "coverage {coverage}");
}

#[test]
fn ks_band_formula() {
    let curve = QQCurve {
        r: vec![0.0; 100],
        r_bar: (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect(),
        source: gamdiag_core::qq::CurveSource::Analytic,
    };
    let band = ks_band(&curve, 0.95);
    let d = (-(0.025f64).ln() / 2.0).sqrt() / 10.0;
    assert!((band.upper[50] - curve.r_bar[50] - d).abs() < 1e-12);
    assert_eq!(band.lower[0], 0.0);
}

fn sorted_normals(n: usize, seed: u64) -> Vec<f64> {
    let mut v = normals(n, seed);
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn binning_conserves_count_and_order(n in 2usize..3000, b0 in 1usize..400, seed in 0u64..1000) {
        let curve = analytic_qq(&normal_residuals(normals(n, seed)));
        let binned = bin_qq(&curve, b0, &[], None).unwrap();
        prop_assert_eq!(binned.counts.iter().sum::<usize>(), n);
        prop_assert!(binned.b() <= b0);
        prop_assert!(binned.s_bar.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(binned.s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn full_budget_is_identity(n in 2usize..500, extra in 0usize..50, seed in 0u64..1000) {
        let curve = analytic_qq(&normal_residuals(normals(n, seed)));
        let binned = bin_qq(&curve, n + extra, &[], None).unwrap();
        prop_assert_eq!(&binned.s, &curve.r);
        prop_assert_eq!(&binned.s_bar, &curve.r_bar);
    }

    #[test]
    fn zoom_equals_subset(n in 10usize..2000, lo in -3.0..2.0f64, width in 0.05..4.0f64, b0 in 1usize..200, seed in 0u64..1000) {
        let curve = analytic_qq(&normal_residuals(normals(n, seed)));
        let hi = lo + width;
        let zoomed = zoom(&curve, &[], None, lo, hi, b0).unwrap();
        let keep: Vec<usize> = (0..n).filter(|&i| lo <= curve.r_bar[i] && curve.r_bar[i] <= hi).collect();
        match zoomed {
            None => prop_assert!(keep.is_empty()),
            Some(z) => {
                let subset = QQCurve {
                    r: keep.iter().map(|&i| curve.r[i]).collect(),
                    r_bar: keep.iter().map(|&i| curve.r_bar[i]).collect(),
                    source: curve.source,
                };
                let direct = bin_window(&subset, 0..subset.n(), b0, &[], None).unwrap();
                prop_assert_eq!(z, direct);
            }
        }
    }

    #[test]
    fn envelope_ignores_replicate_order(l in 2usize..30, n in 1usize..60, seed in 0u64..1000, alpha in 0.5..0.99f64) {
        let rows: Vec<Vec<f64>> = (0..l).map(|v| sorted_normals(n, seed * 100 + v as u64)).collect();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.rotate_left(l / 3);
        prop_assert_eq!(sim_envelope_sorted(&rows, alpha).unwrap(), sim_envelope_sorted(&shuffled, alpha).unwrap());
    }
}
