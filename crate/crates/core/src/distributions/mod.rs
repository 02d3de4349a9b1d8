//! Per-element latency distributions: sampling, CDFs, moments, maximum
//! likelihood fitting, and the scheduler cache file.
//!
//! Parameters are stored in the scalar type `S`; sampling and special
//! functions run in `f64`.

mod cache;
mod fit;
mod special;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};
use thiserror::Error;

use crate::scalar::Real;

pub use cache::{CacheError, ElementStats, SchedulerCache};
pub use fit::{fit, fit_candidates, log_likelihood, FitCandidate, MIN_PARAMETRIC_OBS};
pub use special::trigamma;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("invalid {family} parameter: {message}")]
    InvalidParameter {
        family: &'static str,
        message: String,
    },
    #[error("negative latency observation {0}")]
    NegativeObservation(f64),
    #[error("no observations to fit")]
    NoObservations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "family",
    content = "params",
    rename_all = "snake_case",
    bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>")
)]
pub enum LatencyDistribution<S> {
    Weibull {
        shape: S,
        scale: S,
    },
    Gamma {
        shape: S,
        scale: S,
    },
    #[serde(rename = "lognormal")]
    LogNormal {
        mu: S,
        sigma: S,
    },
    Fixed {
        value: S,
    },
    Empirical {
        samples: Vec<S>,
    },
}

fn invalid(family: &'static str, message: impl Into<String>) -> DistError {
    DistError::InvalidParameter {
        family,
        message: message.into(),
    }
}

fn positive<S: Real>(family: &'static str, name: &str, v: S) -> Result<(), DistError> {
    if v.is_finite() && v > S::zero() {
        Ok(())
    } else {
        Err(invalid(
            family,
            format!("{name} must be finite and positive, got {v}"),
        ))
    }
}

impl<S: Real> LatencyDistribution<S> {
    pub fn weibull(shape: S, scale: S) -> Result<Self, DistError> {
        let d = LatencyDistribution::Weibull { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn gamma(shape: S, scale: S) -> Result<Self, DistError> {
        let d = LatencyDistribution::Gamma { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn lognormal(mu: S, sigma: S) -> Result<Self, DistError> {
        let d = LatencyDistribution::LogNormal { mu, sigma };
        d.validate()?;
        Ok(d)
    }

    /// Log-normal with the given mean and standard deviation.
    pub fn lognormal_from_moments(mean: S, std: S) -> Result<Self, DistError> {
        positive("lognormal", "mean", mean)?;
        positive("lognormal", "std", std)?;
        let (m, s) = (mean.as_f64(), std.as_f64());
        let sigma2 = (1.0 + (s * s) / (m * m)).ln();
        Self::lognormal(S::lit(m.ln() - sigma2 / 2.0), S::lit(sigma2.sqrt()))
    }

    pub fn fixed(value: S) -> Result<Self, DistError> {
        let d = LatencyDistribution::Fixed { value };
        d.validate()?;
        Ok(d)
    }

    pub fn empirical(samples: Vec<S>) -> Result<Self, DistError> {
        let d = LatencyDistribution::Empirical { samples };
        d.validate()?;
        Ok(d)
    }

    pub fn family(&self) -> &'static str {
        match self {
            LatencyDistribution::Weibull { .. } => "weibull",
            LatencyDistribution::Gamma { .. } => "gamma",
            LatencyDistribution::LogNormal { .. } => "lognormal",
            LatencyDistribution::Fixed { .. } => "fixed",
            LatencyDistribution::Empirical { .. } => "empirical",
        }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        let family = self.family();
        match self {
            LatencyDistribution::Weibull { shape, scale }
            | LatencyDistribution::Gamma { shape, scale } => {
                positive(family, "shape", *shape)?;
                positive(family, "scale", *scale)
            }
            LatencyDistribution::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(invalid(family, "mu must be finite"));
                }
                positive(family, "sigma", *sigma)
            }
            LatencyDistribution::Fixed { value } => {
                if value.is_finite() && *value >= S::zero() {
                    Ok(())
                } else {
                    Err(invalid(
                        family,
                        format!("value must be finite and nonnegative, got {value}"),
                    ))
                }
            }
            LatencyDistribution::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(invalid(family, "needs at least one sample"));
                }
                match samples
                    .iter()
                    .find(|s| !(s.is_finite() && **s >= S::zero()))
                {
                    Some(bad) => Err(invalid(
                        family,
                        format!("sample {bad} is not a finite nonnegative latency"),
                    )),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn mean(&self) -> S {
        S::lit(self.mean_f64())
    }

    pub fn variance(&self) -> S {
        S::lit(self.variance_f64())
    }

    pub fn std(&self) -> S {
        S::lit(self.variance_f64().sqrt())
    }

    fn mean_f64(&self) -> f64 {
        match self {
            LatencyDistribution::Weibull { shape, scale } => {
                scale.as_f64() * ln_gamma(1.0 + 1.0 / shape.as_f64()).exp()
            }
            LatencyDistribution::Gamma { shape, scale } => shape.as_f64() * scale.as_f64(),
            LatencyDistribution::LogNormal { mu, sigma } => {
                (mu.as_f64() + sigma.as_f64().powi(2) / 2.0).exp()
            }
            LatencyDistribution::Fixed { value } => value.as_f64(),
            LatencyDistribution::Empirical { samples } => {
                samples.iter().map(|s| s.as_f64()).sum::<f64>() / samples.len() as f64
            }
        }
    }

    fn variance_f64(&self) -> f64 {
        match self {
            LatencyDistribution::Weibull { shape, scale } => {
                let (k, l) = (shape.as_f64(), scale.as_f64());
                let g1 = ln_gamma(1.0 + 1.0 / k).exp();
                let g2 = ln_gamma(1.0 + 2.0 / k).exp();
                l * l * (g2 - g1 * g1)
            }
            LatencyDistribution::Gamma { shape, scale } => shape.as_f64() * scale.as_f64().powi(2),
            LatencyDistribution::LogNormal { mu, sigma } => {
                let s2 = sigma.as_f64().powi(2);
                (s2.exp() - 1.0) * (2.0 * mu.as_f64() + s2).exp()
            }
            LatencyDistribution::Fixed { .. } => 0.0,
            LatencyDistribution::Empirical { samples } => {
                let m = self.mean_f64();
                samples
                    .iter()
                    .map(|s| (s.as_f64() - m).powi(2))
                    .sum::<f64>()
                    / samples.len() as f64
            }
        }
    }

    /// One latency draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        S::lit(self.sample_f64(rng))
    }

    pub fn sample_f64<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LatencyDistribution::Weibull { shape, scale } => {
                // Inverse CDF.
                let u: f64 = rng.random();
                scale.as_f64() * (-(1.0 - u).ln()).powf(1.0 / shape.as_f64())
            }
            LatencyDistribution::Gamma { shape, scale } => {
                rand_distr::Gamma::new(shape.as_f64(), scale.as_f64())
                    .expect("validated gamma parameters")
                    .sample(rng)
            }
            LatencyDistribution::LogNormal { mu, sigma } => {
                rand_distr::LogNormal::new(mu.as_f64(), sigma.as_f64())
                    .expect("validated lognormal parameters")
                    .sample(rng)
            }
            LatencyDistribution::Fixed { value } => value.as_f64(),
            LatencyDistribution::Empirical { samples } => {
                samples[rng.random_range(0..samples.len())].as_f64()
            }
        }
    }

    /// P(X ≤ t).
    pub fn cdf(&self, t: S) -> S {
        S::lit(self.cdf_f64(t.as_f64()))
    }

    pub fn cdf_f64(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        match self {
            LatencyDistribution::Fixed { value } => {
                if t >= value.as_f64() {
                    1.0
                } else {
                    0.0
                }
            }
            LatencyDistribution::Empirical { samples } => {
                samples.iter().filter(|s| s.as_f64() <= t).count() as f64 / samples.len() as f64
            }
            _ if t <= 0.0 => 0.0,
            _ if t == f64::INFINITY => 1.0,
            LatencyDistribution::Weibull { shape, scale } => {
                -(-(t / scale.as_f64()).powf(shape.as_f64())).exp_m1()
            }
            LatencyDistribution::Gamma { shape, scale } => {
                gamma_lr(shape.as_f64(), t / scale.as_f64())
            }
            LatencyDistribution::LogNormal { mu, sigma } => {
                0.5 * erfc(-(t.ln() - mu.as_f64()) / (sigma.as_f64() * std::f64::consts::SQRT_2))
            }
        }
    }

    /// Convert parameters to another scalar type.
    pub fn cast<T: Real>(&self) -> LatencyDistribution<T> {
        let c = |v: &S| T::lit(v.as_f64());
        match self {
            LatencyDistribution::Weibull { shape, scale } => LatencyDistribution::Weibull {
                shape: c(shape),
                scale: c(scale),
            },
            LatencyDistribution::Gamma { shape, scale } => LatencyDistribution::Gamma {
                shape: c(shape),
                scale: c(scale),
            },
            LatencyDistribution::LogNormal { mu, sigma } => LatencyDistribution::LogNormal {
                mu: c(mu),
                sigma: c(sigma),
            },
            LatencyDistribution::Fixed { value } => LatencyDistribution::Fixed { value: c(value) },
            LatencyDistribution::Empirical { samples } => LatencyDistribution::Empirical {
                samples: samples.iter().map(c).collect(),
            },
        }
    }
}
