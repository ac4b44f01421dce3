mod common;

use common::*;
use gamdiag_core::residuals::{transform, ResidualType};
use gamdiag_core::scenarios::{generate, ScenarioId};
use gamdiag_core::stats::{norm_cdf, sd, skewness, sort_f64};

fn residuals_near(id: ScenarioId, n: usize, seed: u64, centre: f64, half: f64) -> Vec<f64> {
    let s = generate(id, n, seed).unwrap();
    let r = transform(&s.dataset, s.family, ResidualType::Quantile).unwrap().values;
    let x = s.dataset.numeric("x").unwrap();
    r.iter()
        .zip(x.iter())
        .filter(|(_, &x)| (x.abs() - centre).abs() <= half)
        .map(|(r, _)| *r)
        .collect()
}

#[test]
fn well_specified_residuals_are_normal() {
    let mut passes = 0;
    for seed in 0..100 {
        let s = generate(ScenarioId::WellSpecified, 10_000, seed).unwrap();
        let mut r = transform(&s.dataset, s.family, ResidualType::Quantile).unwrap().values;
        sort_f64(&mut r);
        if ks_pvalue(ks_statistic(&r, norm_cdf), r.len()) > 0.01 {
            passes += 1;
        }
    }
    assert!(passes >= 98, "{passes}/100 seeds passed");
}

#[test]
fn skew_miss_is_symmetric_near_zero() {
    let r = residuals_near(ScenarioId::SkewMiss, 10_000, 1, 0.0, 0.25);
    let s = skewness(&r);
    assert!(s.abs() <= 0.15, "skewness {s} over {} points", r.len());
}

#[test]
fn var_miss_spread_by_covariate() {
    let centre = sd(&residuals_near(ScenarioId::VarMiss, 10_000, 1, 0.0, 0.2));
    let edge = sd(&residuals_near(ScenarioId::VarMiss, 10_000, 1, 3.0, 0.2));
    assert!((0.9..=1.1).contains(&centre), "sd near 0: {centre}");
    assert!(edge > 1.2, "sd near 3: {edge}");
}

#[test]
fn replay_is_independent_of_worker_count() {
    for id in ScenarioId::ALL {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| generate(id, 9_000, 42).unwrap().dataset)
        };
        assert_eq!(run(1), run(3), "{id}");
    }
}
