mod common;

use common::*;
use gamdiag_core::grid::{
    grid_check_1d, grid_check_2d, hex_assign, kde_glyphs, Cells, GlyphPayload, Lattice, Summary,
};
use gamdiag_core::residuals::{simulate_residuals, transform, ResidualType};
use gamdiag_core::Family;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn well_specified_sd_stays_inside_intervals() {
    let mut total = 0.0;
    for seed in 0..20 {
        let ds = gaussian_dataset(10_000, seed);
        let res = transform(&ds, Family::Gaussian, ResidualType::Quantile).unwrap();
        let sims = simulate_residuals(&ds, Family::Gaussian, ResidualType::Quantile, 50, 500 + seed).unwrap();
        let x = ds.numeric("x").unwrap();
        let g = grid_check_1d(&res.values, &x, 20, Summary::Sd, Some(&sims.rows), 0.9).unwrap();
        total += g.outside_fraction().unwrap();
    }
    let frac = total / 20.0;
    assert!(frac <= 0.2, "mean outside fraction {frac}");
}

#[test]
fn nearest_hex_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x1: Vec<f64> = (0..10_000).map(|_| rng.random_range(-4.0..9.0)).collect();
    let x2: Vec<f64> = (0..10_000).map(|_| rng.random_range(100.0..101.0)).collect();
    let lat = Lattice::fit(&x1, &x2, 17).unwrap();
    let assigned = hex_assign(&x1, &x2, &lat);
    for i in 0..x1.len() {
        let (q, r) = assigned[i].unwrap();
        let (u, v) = lat.standardise(x1[i], x2[i]);
        let dist = |q: i64, r: i64| {
            let (cu, cv) = lat.unit_center(q, r);
            (u - cu).hypot(v - cv)
        };
        let own = dist(q, r);
        let rows = (v / lat.dy).floor() as i64;
        for rr in rows - 3..=rows + 3 {
            let cols = (u / lat.w).floor() as i64;
            for qq in cols - 3..=cols + 3 {
                assert!(own <= dist(qq, rr) + 1e-12, "point {i} at ({u}, {v}): ({q},{r}) vs ({qq},{rr})");
            }
        }
    }
}

#[test]
fn sd_ignores_a_shift_of_observed_residuals() {
    let ds = gaussian_dataset(5000, 3);
    let res = transform(&ds, Family::Gaussian, ResidualType::Quantile).unwrap().values;
    let sims = simulate_residuals(&ds, Family::Gaussian, ResidualType::Quantile, 5, 1).unwrap();
    let x1 = ds.numeric("x").unwrap();
    let x2: Vec<f64> = normals(5000, 4);
    let lat = Lattice::fit(&x1, &x2, 8).unwrap();
    let shifted: Vec<f64> = res.iter().map(|v| v + 7.5).collect();
    let a = grid_check_2d(&res, &x1, &x2, &lat, Summary::Sd, &sims.rows).unwrap();
    let b = grid_check_2d(&shifted, &x1, &x2, &lat, Summary::Sd, &sims.rows).unwrap();
    assert_eq!(a.hexes.len(), b.hexes.len());
    for (h, k) in a.hexes.iter().zip(&b.hexes) {
        match (h.s, k.s) {
            (Some(s), Some(t)) => assert!((s - t).abs() <= 1e-9 * s.abs().max(1.0)),
            (s, t) => assert_eq!(s, t),
        }
    }
    assert_eq!(a.hexes.iter().map(|h| h.count).sum::<usize>(), 5000);
}

#[test]
fn bimodal_cell_has_two_kde_maxima() {
    let left = normals(150, 1).into_iter().map(|v| v * 0.6 - 3.0);
    let right = normals(150, 2).into_iter().map(|v| v * 0.6 + 3.0);
    let r: Vec<f64> = left.chain(right).collect();
    let x1: Vec<f64> = (0..300).map(|i| i as f64 / 299.0).collect();
    let x2: Vec<f64> = (0..300).map(|i| ((i * 7) % 300) as f64 / 299.0).collect();
    let cells = Cells::fit(&x1, &x2, 1, 1).unwrap();
    let h = 0.5;
    let g = kde_glyphs(&r, &x1, &x2, &cells, 128, Some(h)).unwrap();
    let axis = g.r.clone().unwrap();
    let local_maxima = |d: &[f64]| (1..d.len() - 1).filter(|&i| d[i] > d[i - 1] && d[i] >= d[i + 1]).count();
    let GlyphPayload::Kde { density } = &g.cells[0].payload else {
        panic!("expected a kde glyph");
    };
    assert_eq!(local_maxima(density), 2);
    assert_eq!(local_maxima(&direct_kde(&r, h, &axis)), 2);
}

#[test]
fn intervals_ignore_replicate_order_and_worker_count() {
    let ds = gaussian_dataset(3000, 9);
    let res = transform(&ds, Family::Gaussian, ResidualType::Quantile).unwrap().values;
    let x = ds.numeric("x").unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_residuals(&ds, Family::Gaussian, ResidualType::Quantile, 30, 77).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.rows, four.rows);
    let mut reversed = one.rows.clone();
    reversed.reverse();
    for summary in [Summary::Mean, Summary::Sd, Summary::Skewness] {
        let a = grid_check_1d(&res, &x, 12, summary, Some(&one.rows), 0.9).unwrap();
        let b = grid_check_1d(&res, &x, 12, summary, Some(&reversed), 0.9).unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn skewness_invariances(v in proptest::collection::vec(-50.0..50.0f64, 5..80), c in 0.01..100.0f64) {
        let s = Summary::Skewness.eval(&v);
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let negated: Vec<f64> = v.iter().map(|x| -x).collect();
        match s {
            Some(s) => {
                prop_assert!((Summary::Skewness.eval(&scaled).unwrap() - s).abs() <= 1e-8 * s.abs().max(1.0));
                prop_assert!((Summary::Skewness.eval(&negated).unwrap() + s).abs() <= 1e-12 * s.abs().max(1.0));
            }
            None => prop_assert!(Summary::Skewness.eval(&scaled).is_none()),
        }
    }

    #[test]
    fn lattice_period_shifts_indices(u in 0.0..1.0f64, v in 0.0..1.0f64, hexes in 3usize..40) {
        let lat = Lattice::new([0.0, 0.0], [1.0, 1.0], 1.0 / hexes as f64).unwrap();
        let (q, r) = lat.nearest(u, v);
        let d = |u: f64, v: f64, q: i64, r: i64| {
            let (cu, cv) = lat.unit_center(q, r);
            (u - cu).hypot(v - cv)
        };
        // skip points too close to a cell boundary for rounding to be stable
        let own = d(u, v, q, r);
        let runner_up = (-2..=2)
            .flat_map(|a| (-2..=2).map(move |b| (a, b)))
            .filter(|&ab| ab != (0, 0))
            .map(|(a, b)| d(u, v, q + a, r + b))
            .fold(f64::INFINITY, f64::min);
        prop_assume!(runner_up - own > 1e-9);
        prop_assert_eq!(lat.nearest(u + lat.w, v), (q + 1, r));
        prop_assert_eq!(lat.nearest(u, v + 2.0 * lat.dy), (q, r + 2));
        prop_assert_eq!(lat.nearest(lat.unit_center(q, r).0, lat.unit_center(q, r).1), (q, r));
    }

    #[test]
    fn single_bin_mean_is_global(v in proptest::collection::vec(-5.0..5.0f64, 2..200)) {
        let x: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
        let g = grid_check_1d(&v, &x, 1, Summary::Mean, None, 0.9).unwrap();
        prop_assert_eq!(g.s[0], Some(mean(&v)));
        prop_assert_eq!(g.counts.iter().sum::<usize>(), v.len());
    }
}
