mod common;

use common::*;
use gamdiag_core::density::{
    binned_kde_1d, conditional_density, linear_bin_1d, linear_bin_2d, select_bandwidth, Axis, Distance,
};
use gamdiag_core::stats::trapezoid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sup_error(data: &[f64], h: f64, knots: usize) -> f64 {
    let axis = Axis::new(-6.0, 6.0, knots).unwrap();
    let binned = binned_kde_1d(&linear_bin_1d(data, axis), h).unwrap();
    let direct = direct_kde(data, h, &axis.values());
    binned
        .values
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn binned_kde_matches_direct() {
    let data = normals(1000, 11);
    let err = sup_error(&data, 0.3, 401);
    assert!(err <= 1e-2, "sup error {err}");
}

#[test]
fn refinement_halves_error() {
    let data = normals(1000, 12);
    let errs: Vec<f64> = [51, 101, 201].iter().map(|&k| sup_error(&data, 0.3, k)).collect();
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] / 2.0 * 1.5, "errors {errs:?}");
    }
}

#[test]
fn bandwidth_at_one_hundred_thousand() {
    // a standard normal sample has sd ≈ IQR/1.349 ≈ 1
    let h = select_bandwidth(&normals(100_000, 5)).unwrap();
    assert!((h - 0.106).abs() < 0.002, "h = {h}");
    let scaled: Vec<f64> = normals(100_000, 5).iter().map(|v| 3.0 * v).collect();
    assert!((select_bandwidth(&scaled).unwrap() - 3.0 * h).abs() < 1e-12);
    assert!(select_bandwidth(&[2.0; 10]).is_err());
}

#[test]
fn conditional_of_independent_pair_is_marginal() {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let r = normals(n, 22);
    let (hx, hr) = (select_bandwidth(&x).unwrap(), select_bandwidth(&r).unwrap());
    let x_axis = Axis::covering(&x, 3.0 * hx, 64).unwrap();
    let r_axis = Axis::covering(&r, 3.0 * hr, 128).unwrap();
    let cond = conditional_density(&x, &r, x_axis, r_axis, hx, hr).unwrap();
    let marginal_r = binned_kde_1d(&linear_bin_1d(&r, r_axis), hr).unwrap();
    let gr = r_axis.knots;
    let mut unmasked = 0;
    for (ix, col) in cond.values.chunks(gr).enumerate() {
        if cond.mask[ix] {
            continue;
        }
        unmasked += 1;
        let integral = trapezoid(col, r_axis.step());
        assert!((integral - 1.0).abs() <= 0.02, "column {ix} integrates to {integral}");
        // compare only inside the data support of x
        if (0.0..=1.0).contains(&x_axis.knot(ix)) {
            let sup = col
                .iter()
                .zip(&marginal_r.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(sup <= 0.05, "column {ix}: sup {sup}");
        }
    }
    assert!(unmasked > 32);
}

proptest! {
    #[test]
    fn binning_conserves_mass(
        pts in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..300),
        lo in -5.0..0.0f64, span in 0.5..8.0f64, kx in 2usize..50, kr in 2usize..50,
    ) {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let r: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let ax = Axis::new(lo, lo + span, kx).unwrap();
        let ar = Axis::new(lo, lo + span, kr).unwrap();
        let n = pts.len() as f64;
        prop_assert!((linear_bin_1d(&x, ax).total() - n).abs() < 1e-9);
        prop_assert!((linear_bin_2d(&x, &r, ax, ar).total() - n).abs() < 1e-9);
    }

    #[test]
    fn default_distance_is_antisymmetric(p in 0.0..5.0f64, q in 0.0..5.0f64) {
        let d = Distance::default();
        prop_assert_eq!(d.eval(p, q).unwrap(), -d.eval(q, p).unwrap());
    }
}
