#![allow(dead_code)]

use gamdiag_core::dataset::{Column, ColumnData, Role};
use gamdiag_core::effect::EffectSurface;
use gamdiag_core::DiagnosticDataset;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn float(name: &str, role: Role, v: Vec<f64>) -> Column {
    Column {
        name: name.into(),
        role,
        data: ColumnData::Float(v),
    }
}

/// Gaussian responses with varying location and scale, plus the exact
/// parameters as model columns.
pub fn gaussian_dataset(n: usize, seed: u64) -> DiagnosticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for i in 0..n {
        let xi = i as f64 / n as f64;
        let (m, s) = (2.0 * xi - 1.0, 0.5 + xi);
        let e: f64 = StandardNormal.sample(&mut rng);
        y.push(m + s * e);
        mu.push(m);
        sigma.push(s);
        x.push(xi);
    }
    DiagnosticDataset::from_columns(vec![
        float("y", Role::Response, y),
        float("x", Role::Covariate, x),
        float("mu", Role::Param, mu),
        float("sigma", Role::Param, sigma),
    ])
    .unwrap()
}

pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Kolmogorov–Smirnov statistic of sorted values against `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS p-value via the Kolmogorov series.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let t = d * (n as f64).sqrt();
    let mut s = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = (-2.0 * k * k * t * t).exp();
        s += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Unbinned Gaussian k.d.e. evaluated at `points`.
pub fn direct_kde(data: &[f64], h: f64, points: &[f64]) -> Vec<f64> {
    let c = 1.0 / (data.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    points
        .iter()
        .map(|&p| c * data.iter().map(|&x| (-0.5 * ((p - x) / h).powi(2)).exp()).sum::<f64>())
        .collect()
}

/// Cubic B-spline basis of `k` functions on `[0, 1]` with equally spaced knots.
pub fn bspline_basis(x: f64, k: usize) -> Vec<f64> {
    let inner = k - 2;
    let h = 1.0 / (inner - 1) as f64;
    let t: Vec<f64> = (0..inner + 6).map(|j| (j as f64 - 3.0) * h).collect();
    let x = x.clamp(0.0, 1.0 - 1e-12);
    // degree-0 indicators, then Cox–de Boor up to degree 3
    let mut b: Vec<f64> = (0..t.len() - 1)
        .map(|j| if t[j] <= x && x < t[j + 1] { 1.0 } else { 0.0 })
        .collect();
    for d in 1..=3 {
        b = (0..t.len() - 1 - d)
            .map(|j| {
                let left = (x - t[j]) / (t[j + d] - t[j]) * b[j];
                let right = (t[j + d + 1] - x) / (t[j + d + 1] - t[j + 1]) * b[j + 1];
                left + right
            })
            .collect();
    }
    b.truncate(k);
    b
}

fn tensor_row(x: f64, z: f64, k: usize) -> Vec<f64> {
    let bx = bspline_basis(x, k);
    let bz = bspline_basis(z, k);
    bx.iter().flat_map(|a| bz.iter().map(move |b| a * b)).collect()
}

pub struct RidgeFit {
    pub lambda: f64,
    pub edf: f64,
    pub surface: EffectSurface,
}

/// Tensor-product cubic B-spline smoother (5×5 basis) with an identity
/// ridge penalty. The response is centred, the penalty is chosen by a
/// Gaussian restricted-likelihood criterion over `exp(-6..=12)`, and `f̂`
/// and `v̂ = σ̂² diag(G A⁻¹ Gᵀ)` are evaluated on a `grid × grid` mesh.
pub fn ridge_surface(x: &[f64], z: &[f64], y: &[f64], grid: usize) -> RidgeFit {
    const K: usize = 5;
    let p = K * K;
    let n = y.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut yty = 0.0;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let row = DVector::from_vec(tensor_row(x[i], z[i], K));
        let yc = y[i] - ybar;
        xtx += &row * row.transpose();
        xty += &row * yc;
        yty += yc * yc;
        rows.push(row);
    }

    let mut best: Option<(f64, f64, DVector<f64>, DMatrix<f64>, f64, f64)> = None;
    for step in 0..73 {
        let lam = (-6.0 + 0.25 * step as f64).exp();
        let a = &xtx + DMatrix::<f64>::identity(p, p) * lam;
        let chol = a.clone().cholesky().expect("penalised normal matrix is positive definite");
        let ainv = chol.inverse();
        let b = &ainv * &xty;
        // rss = y'y - 2 b'X'y + b'X'X b
        let rss = yty - 2.0 * b.dot(&xty) + (b.transpose() * &xtx * &b)[(0, 0)];
        let edf = (&ainv * &xtx).trace();
        let s2 = rss / (n as f64 - edf);
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let rss_pen = rss + lam * b.dot(&b);
        let score = rss_pen / s2 + logdet - p as f64 * lam.ln() + n as f64 * s2.ln();
        if best.as_ref().is_none_or(|bst| score < bst.0) {
            best = Some((score, lam, b, ainv, s2, edf));
        }
    }
    let (_, lambda, b, ainv, s2, edf) = best.unwrap();

    let axis: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let mut fhat = Vec::with_capacity(grid * grid);
    let mut vhat = Vec::with_capacity(grid * grid);
    for &gx in &axis {
        for &gz in &axis {
            let g = DVector::from_vec(tensor_row(gx, gz, K));
            fhat.push(g.dot(&b));
            vhat.push(s2 * (g.transpose() * &ainv * &g)[(0, 0)]);
        }
    }
    RidgeFit {
        lambda,
        edf,
        surface: EffectSurface::new(axis.clone(), axis, fhat, vhat).unwrap(),
    }
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
