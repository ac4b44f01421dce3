mod common;

use common::*;
use gamdiag_core::effect::{opacity_field, perturb_field, EffectSurface, OpacityParams};
use gamdiag_core::scenarios::{generate, ScenarioId};
use gamdiag_core::stats::{norm_cdf, sort_f64};
use proptest::prelude::*;

fn surface(n: usize, fhat: Vec<f64>, vhat: Vec<f64>) -> EffectSurface {
    let axis: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    EffectSurface::new(axis.clone(), axis, fhat, vhat).unwrap()
}

#[test]
fn standardised_perturbations_are_normal() {
    let n = 100;
    let fhat: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.013).sin()).collect();
    let vhat: Vec<f64> = (0..n * n).map(|i| 0.05 + (i % 37) as f64 * 0.01).collect();
    let surf = surface(n, fhat.clone(), vhat.clone());
    let mut passes = 0;
    for seed in 0..100 {
        let g = perturb_field(&surf, seed).unwrap();
        let mut z: Vec<f64> = g.iter().zip(&fhat).zip(&vhat).map(|((g, f), v)| (g - f) / v.sqrt()).collect();
        sort_f64(&mut z);
        if ks_pvalue(ks_statistic(&z, norm_cdf), z.len()) > 0.01 {
            passes += 1;
        }
    }
    assert!(passes >= 98, "{passes}/100 seeds passed");
}

#[test]
fn averaged_perturbations_converge_on_demo_surface() {
    let s = generate(ScenarioId::SurfaceDemo, 200, 1).unwrap();
    let ds = &s.dataset;
    let fit = ridge_surface(&ds.numeric("x").unwrap(), &ds.numeric("z").unwrap(), ds.response().unwrap(), 40);
    let surf = fit.surface;
    let k = 1000;
    let mut acc = vec![0.0; surf.fhat.len()];
    for seed in 0..k {
        for (a, g) in acc.iter_mut().zip(perturb_field(&surf, seed).unwrap()) {
            *a += g;
        }
    }
    let worst = acc
        .iter()
        .zip(&surf.fhat)
        .map(|(a, f)| (a / k as f64 - f).abs())
        .fold(0.0, f64::max);
    let bound = 4.0 * surf.vhat.iter().map(|v| (v / k as f64).sqrt()).fold(0.0, f64::max);
    assert!(worst <= bound, "max deviation {worst} > {bound}");
}

proptest! {
    #[test]
    fn opacity_scale_invariance_and_range(
        cells in proptest::collection::vec((-5.0..5.0f64, 0.0..4.0f64), 4),
        c in 0.01..100.0f64,
        delta in 0.0..0.3f64, gamma in 0.5..6.0f64, beta in 0.0..1.0f64,
    ) {
        let params = OpacityParams { delta, gamma, beta };
        let f: Vec<f64> = cells.iter().map(|p| p.0).collect();
        let v: Vec<f64> = cells.iter().map(|p| p.1).collect();
        let a = opacity_field(&surface(2, f.clone(), v.clone()), &params).unwrap();
        let b = opacity_field(
            &surface(2, f.iter().map(|x| x * c).collect(), v.iter().map(|x| x * c * c).collect()),
            &params,
        ).unwrap();
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            prop_assert!((x - y).abs() <= 1e-9, "cell {i}: {x} vs {y}");
            prop_assert!(beta <= *x && *x <= 1.0);
            if v[i] > 0.0 && gamma_free_p(f[i], v[i]) <= delta {
                prop_assert_eq!(*x, 1.0);
            }
        }
    }
}

fn gamma_free_p(f: f64, v: f64) -> f64 {
    2.0 * (1.0 - norm_cdf(f.abs() / v.sqrt()))
}
