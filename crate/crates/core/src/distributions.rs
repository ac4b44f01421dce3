//! Response distribution families.
//!
//! Every family works on a parameter slice ordered as in
//! [`Family::param_names`]. Gamma is mean-parametrised `(mu, shape)`,
//! binomial is `(prob, size)` and the sinh-arcsinh family is
//! `(mu, sigma, eps, delta)` with
//! `F(y) = Φ(sinh(delta·asinh((y - mu)/sigma) - eps))`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{domain, Error, Result};
use crate::stats::{norm_cdf, norm_pdf, norm_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Poisson,
    Binomial,
    Gamma,
    Shash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    RealLine,
    NonNegativeCounts,
    BoundedCounts,
    PositiveReals,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Gaussian,
        Family::Poisson,
        Family::Binomial,
        Family::Gamma,
        Family::Shash,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
            Family::Binomial => "binomial",
            Family::Gamma => "gamma",
            Family::Shash => "shash",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Gaussian => &["mu", "sigma"],
            Family::Poisson => &["mu"],
            Family::Binomial => &["prob", "size"],
            Family::Gamma => &["mu", "shape"],
            Family::Shash => &["mu", "sigma", "eps", "delta"],
        }
    }

    pub fn support(self) -> Support {
        match self {
            Family::Gaussian | Family::Shash => Support::RealLine,
            Family::Poisson => Support::NonNegativeCounts,
            Family::Binomial => Support::BoundedCounts,
            Family::Gamma => Support::PositiveReals,
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, Family::Poisson | Family::Binomial)
    }

    /// Families with a standard unit deviance.
    pub fn has_deviance(self) -> bool {
        !matches!(self, Family::Shash)
    }

    pub fn validate(self, theta: &[f64]) -> Result<()> {
        let names = self.param_names();
        if theta.len() != names.len() {
            return Err(domain(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                names.len(),
                theta.len()
            )));
        }
        if let Some((i, _)) = theta.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(domain(format!("{} must be finite", names[i])));
        }
        let ok = match self {
            Family::Gaussian => theta[1] > 0.0,
            Family::Poisson => theta[0] > 0.0,
            Family::Binomial => {
                theta[0] > 0.0 && theta[0] < 1.0 && theta[1] >= 1.0 && theta[1].fract() == 0.0
            }
            Family::Gamma => theta[0] > 0.0 && theta[1] > 0.0,
            Family::Shash => theta[1] > 0.0 && theta[3] > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!(
                "invalid {} parameters {:?}",
                self.name(),
                theta
            )))
        }
    }

    /// `P(Y <= y)`.
    pub fn cdf(self, y: f64, theta: &[f64]) -> Result<f64> {
        self.validate(theta)?;
        Ok(self.cdf_unchecked(y, theta))
    }

    pub(crate) fn cdf_unchecked(self, y: f64, theta: &[f64]) -> f64 {
        match self {
            Family::Gaussian => norm_cdf((y - theta[0]) / theta[1]),
            Family::Shash => norm_cdf(shash_z(y, theta)),
            Family::Poisson => {
                if y < 0.0 {
                    0.0
                } else {
                    gamma_ur(y.floor() + 1.0, theta[0])
                }
            }
            Family::Binomial => {
                let (p, m) = (theta[0], theta[1]);
                if y < 0.0 {
                    0.0
                } else if y >= m {
                    1.0
                } else {
                    let k = y.floor();
                    beta_reg(m - k, k + 1.0, 1.0 - p)
                }
            }
            Family::Gamma => {
                if y <= 0.0 {
                    0.0
                } else {
                    gamma_lr(theta[1], y * theta[1] / theta[0])
                }
            }
        }
    }

    /// Inverse c.d.f.; for discrete families the smallest `y` with `cdf(y) >= p`.
    pub fn quantile(self, p: f64, theta: &[f64]) -> Result<f64> {
        self.validate(theta)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("probability {p} outside (0, 1)")));
        }
        Ok(match self {
            Family::Gaussian => theta[0] + theta[1] * norm_quantile(p),
            Family::Shash => {
                let (mu, sigma, eps, delta) = (theta[0], theta[1], theta[2], theta[3]);
                mu + sigma * (((norm_quantile(p)).asinh() + eps) / delta).sinh()
            }
            Family::Poisson => {
                let mu = theta[0];
                let guess = (mu + mu.sqrt() * norm_quantile(p)).floor().max(0.0);
                discrete_search(guess, f64::INFINITY, p, |k| self.cdf_unchecked(k, theta))
            }
            Family::Binomial => {
                let (prob, m) = (theta[0], theta[1]);
                let guess = (m * prob + (m * prob * (1.0 - prob)).sqrt() * norm_quantile(p))
                    .floor()
                    .clamp(0.0, m);
                discrete_search(guess, m, p, |k| self.cdf_unchecked(k, theta))
            }
            Family::Gamma => gamma_quantile(p, theta[0], theta[1]),
        })
    }

    /// Model mean and variance.
    pub fn mean_var(self, theta: &[f64]) -> Result<(f64, f64)> {
        self.validate(theta)?;
        Ok(self.mean_var_unchecked(theta))
    }

    pub(crate) fn mean_var_unchecked(self, theta: &[f64]) -> (f64, f64) {
        match self {
            Family::Gaussian => (theta[0], theta[1] * theta[1]),
            Family::Poisson => (theta[0], theta[0]),
            Family::Binomial => {
                let (p, m) = (theta[0], theta[1]);
                (m * p, m * p * (1.0 - p))
            }
            Family::Gamma => (theta[0], theta[0] * theta[0] / theta[1]),
            Family::Shash => {
                let (m, v) = shash_standard_moments(theta[2], theta[3]);
                (theta[0] + theta[1] * m, theta[1] * theta[1] * v)
            }
        }
    }

    /// Unit deviance `d_i >= 0` of an exponential family.
    pub fn deviance_component(self, y: f64, theta: &[f64]) -> Result<f64> {
        if !self.has_deviance() {
            return Err(Error::UnsupportedResidual {
                family: self.name(),
                kind: "deviance",
            });
        }
        self.validate(theta)?;
        self.check_support(y)?;
        Ok(self.deviance_unchecked(y, theta))
    }

    pub(crate) fn deviance_unchecked(self, y: f64, theta: &[f64]) -> f64 {
        let d = match self {
            Family::Gaussian => (y - theta[0]) * (y - theta[0]),
            Family::Poisson => {
                let mu = theta[0];
                2.0 * (xlogy(y, y / mu) - (y - mu))
            }
            Family::Binomial => {
                let m = theta[1];
                let mu = m * theta[0];
                2.0 * (xlogy(y, y / mu) + xlogy(m - y, (m - y) / (m - mu)))
            }
            Family::Gamma => {
                let mu = theta[0];
                2.0 * (-(y / mu).ln() + (y - mu) / mu)
            }
            Family::Shash => f64::NAN,
        };
        // rounding can leave tiny negatives near y == mu
        d.max(0.0)
    }

    pub(crate) fn check_support(self, y: f64) -> Result<()> {
        let ok = match self.support() {
            Support::RealLine => y.is_finite(),
            Support::NonNegativeCounts | Support::BoundedCounts => y >= 0.0 && y.fract() == 0.0,
            Support::PositiveReals => y > 0.0 && y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!(
                "response {y} outside the {} support",
                self.name()
            )))
        }
    }

    /// One draw from the model.
    pub fn sample<R: Rng + ?Sized>(self, theta: &[f64], rng: &mut R) -> Result<f64> {
        self.validate(theta)?;
        Ok(self.sample_unchecked(theta, rng))
    }

    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(self, theta: &[f64], rng: &mut R) -> f64 {
        match self {
            Family::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                theta[0] + theta[1] * z
            }
            Family::Shash => {
                let z: f64 = rng.sample(StandardNormal);
                theta[0] + theta[1] * ((z.asinh() + theta[2]) / theta[3]).sinh()
            }
            Family::Poisson => Poisson::new(theta[0])
                .map(|d| d.sample(rng))
                .unwrap_or_else(|_| self.sample_by_inversion(theta, rng)),
            Family::Binomial => Binomial::new(theta[1] as u64, theta[0])
                .map(|d| d.sample(rng) as f64)
                .unwrap_or_else(|_| self.sample_by_inversion(theta, rng)),
            Family::Gamma => Gamma::new(theta[1], theta[0] / theta[1])
                .map(|d| d.sample(rng))
                .unwrap_or_else(|_| self.sample_by_inversion(theta, rng)),
        }
    }

    fn sample_by_inversion<R: Rng + ?Sized>(self, theta: &[f64], rng: &mut R) -> f64 {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        self.quantile(u, theta).unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown family `{s}`")))
    }
}

/// `sinh(delta·asinh((y - mu)/sigma) - eps)`, the standard normal variate of `y`.
#[inline]
pub(crate) fn shash_z(y: f64, theta: &[f64]) -> f64 {
    let u = (y - theta[0]) / theta[1];
    (theta[3] * u.asinh() - theta[2]).sinh()
}

/// Mean and variance of `sinh((asinh(Z) + eps)/delta)`, `Z ~ N(0, 1)`.
///
/// Integrated on the `t = asinh(z)` scale, where the normal weight decays
/// double-exponentially and the trapezoid rule converges geometrically.
pub fn shash_standard_moments(eps: f64, delta: f64) -> (f64, f64) {
    const T_MAX: f64 = 7.0;
    const STEPS: usize = 2800;
    let h = 2.0 * T_MAX / STEPS as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..=STEPS {
        let t = -T_MAX + h * i as f64;
        let w = norm_pdf(t.sinh()) * t.cosh() * if i == 0 || i == STEPS { 0.5 } else { 1.0 };
        if w == 0.0 {
            continue;
        }
        let g = ((t + eps) / delta).sinh();
        m1 += w * g;
        m2 += w * g * g;
    }
    m1 *= h;
    m2 *= h;
    (m1, (m2 - m1 * m1).max(0.0))
}

fn xlogy(x: f64, ratio: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ratio.ln()
    }
}

/// Smallest integer `k` in `[0, upper]` with `cdf(k) >= p`, starting from `guess`.
fn discrete_search(guess: f64, upper: f64, p: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut k = guess;
    while k < upper && cdf(k) < p {
        k += 1.0;
    }
    while k > 0.0 && cdf(k - 1.0) >= p {
        k -= 1.0;
    }
    k
}

/// Safeguarded Newton iteration on the gamma c.d.f.
fn gamma_quantile(p: f64, mu: f64, shape: f64) -> f64 {
    let scale = mu / shape;
    let cdf = |y: f64| gamma_lr(shape, y / scale);
    let ln_norm = ln_gamma(shape) + shape * scale.ln();
    let pdf = |y: f64| ((shape - 1.0) * y.ln() - y / scale - ln_norm).exp();

    let (mut lo, mut hi) = (0.0, mu.max(scale));
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = cdf(y) - p;
        if f == 0.0 {
            return y;
        }
        if f < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let d = pdf(y);
        let mut next = if d > 0.0 { y - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * y.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        y = next;
    }
    y
}
