//! Maximum likelihood fitting and family selection.

use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use super::special::trigamma;
use super::{DistError, LatencyDistribution};
use crate::scalar::Real;

/// Below this many observations the empirical distribution is used as is.
pub const MIN_PARAMETRIC_OBS: usize = 8;

const NEWTON_MAX_ITERS: usize = 200;
const NEWTON_TOL: f64 = 1e-12;

/// One fitted parametric family and its log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitCandidate<S> {
    pub distribution: LatencyDistribution<S>,
    pub log_likelihood: f64,
}

/// Log-likelihood of `xs` under `dist`. Point-mass families return
/// negative infinity unless every observation sits on a support point.
pub fn log_likelihood<S: Real>(dist: &LatencyDistribution<S>, xs: &[f64]) -> f64 {
    match dist {
        LatencyDistribution::Weibull { shape, scale } => {
            let (k, l) = (shape.as_f64(), scale.as_f64());
            xs.iter()
                .map(|&x| k.ln() - l.ln() + (k - 1.0) * (x / l).ln() - (x / l).powf(k))
                .sum()
        }
        LatencyDistribution::Gamma { shape, scale } => {
            let (k, t) = (shape.as_f64(), scale.as_f64());
            xs.iter()
                .map(|&x| -ln_gamma(k) - k * t.ln() + (k - 1.0) * x.ln() - x / t)
                .sum()
        }
        LatencyDistribution::LogNormal { mu, sigma } => {
            let (m, s) = (mu.as_f64(), sigma.as_f64());
            let c = -s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            xs.iter()
                .map(|&x| c - x.ln() - (x.ln() - m).powi(2) / (2.0 * s * s))
                .sum()
        }
        LatencyDistribution::Fixed { value } => {
            if xs.iter().all(|&x| x == value.as_f64()) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        LatencyDistribution::Empirical { samples } => {
            let n = samples.len() as f64;
            xs.iter()
                .map(|&x| {
                    let hits = samples.iter().filter(|s| s.as_f64() == x).count() as f64;
                    (hits / n).ln()
                })
                .sum()
        }
    }
}

fn fit_lognormal(xs: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mu = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x.ln() - mu).powi(2)).sum::<f64>() / n;
    (var > 0.0).then(|| (mu, var.sqrt()))
}

/// Gamma MLE: Newton on log k − ψ(k) = log(mean) − mean(log x), started from
/// the method-of-moments shape.
fn fit_gamma(xs: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mean_log = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if !(s > 0.0) {
        return None;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let mut k = mean * mean / var;
    if !(k.is_finite() && k > 0.0) {
        k = 0.5 / s;
    }
    for _ in 0..NEWTON_MAX_ITERS {
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let mut next = k - f / df;
        // Keep the iterate positive; the root is unique on (0, ∞).
        if !(next > 0.0) {
            next = k / 2.0;
        }
        let done = (next - k).abs() <= NEWTON_TOL * k;
        k = next;
        if done {
            break;
        }
    }
    (k.is_finite() && k > 0.0).then(|| (k, mean / k))
}

/// Weibull MLE: Newton on the shape profile equation
/// Σ xᵏ ln x / Σ xᵏ − 1/k − mean(ln x) = 0, then λ = (mean xᵏ)^(1/k).
fn fit_weibull(xs: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    // Work on x / max(x) so that x^k cannot overflow.
    let top = xs.iter().cloned().fold(0.0, f64::max);
    let logs: Vec<f64> = xs.iter().map(|x| (x / top).ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let sd_log = (logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd_log > 0.0) {
        return None;
    }
    // Moment start: the log of a Weibull variable has sd π / (k √6).
    let mut k = std::f64::consts::PI / (sd_log * 6f64.sqrt());
    for _ in 0..NEWTON_MAX_ITERS {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let p = (k * l).exp();
            a += p;
            b += p * l;
            c += p * l * l;
        }
        let g = b / a - 1.0 / k - mean_log;
        let dg = (c * a - b * b) / (a * a) + 1.0 / (k * k);
        let mut next = k - g / dg;
        if !(next > 0.0) {
            next = k / 2.0;
        }
        let done = (next - k).abs() <= NEWTON_TOL * k;
        k = next;
        if done {
            break;
        }
    }
    if !(k.is_finite() && k > 0.0) {
        return None;
    }
    let mean_pow = logs.iter().map(|l| (k * l).exp()).sum::<f64>() / n;
    Some((k, top * mean_pow.powf(1.0 / k)))
}

fn check_observations<S: Real>(obs: &[S]) -> Result<Vec<f64>, DistError> {
    if obs.is_empty() {
        return Err(DistError::NoObservations);
    }
    obs.iter()
        .map(|o| {
            let x = o.as_f64();
            if x.is_nan() || x < 0.0 || x.is_infinite() {
                Err(DistError::NegativeObservation(x))
            } else {
                Ok(x)
            }
        })
        .collect()
}

/// Every parametric family fitted by maximum likelihood, in the order
/// Gamma, Weibull, LogNormal. Families whose fit fails are left out.
pub fn fit_candidates<S: Real>(obs: &[S]) -> Result<Vec<FitCandidate<S>>, DistError> {
    let xs = check_observations(obs)?;
    if xs.iter().any(|&x| x == 0.0) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut push = |d: Result<LatencyDistribution<S>, DistError>| {
        if let Ok(distribution) = d {
            let ll = log_likelihood(&distribution, &xs);
            if ll.is_finite() {
                out.push(FitCandidate {
                    distribution,
                    log_likelihood: ll,
                });
            }
        }
    };
    if let Some((k, t)) = fit_gamma(&xs) {
        push(LatencyDistribution::gamma(S::lit(k), S::lit(t)));
    }
    if let Some((k, l)) = fit_weibull(&xs) {
        push(LatencyDistribution::weibull(S::lit(k), S::lit(l)));
    }
    if let Some((m, s)) = fit_lognormal(&xs) {
        push(LatencyDistribution::lognormal(S::lit(m), S::lit(s)));
    }
    Ok(out)
}

/// Fit a latency distribution to observations.
///
/// One observation or zero variance gives `Fixed`; fewer than
/// [`MIN_PARAMETRIC_OBS`] observations, or any zero latency, gives
/// `Empirical`. Otherwise the parametric family with the highest
/// log-likelihood wins, ties going to Gamma.
pub fn fit<S: Real>(obs: &[S]) -> Result<LatencyDistribution<S>, DistError> {
    let xs = check_observations(obs)?;
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return LatencyDistribution::fixed(obs[0]);
    }
    if xs.len() < MIN_PARAMETRIC_OBS {
        return LatencyDistribution::empirical(obs.to_vec());
    }
    let mut best: Option<FitCandidate<S>> = None;
    for cand in fit_candidates(obs)? {
        if best
            .as_ref()
            .is_none_or(|b| cand.log_likelihood > b.log_likelihood)
        {
            best = Some(cand);
        }
    }
    match best {
        Some(b) => Ok(b.distribution),
        None => LatencyDistribution::empirical(obs.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn draws(d: &LatencyDistribution<f64>, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn params(d: &LatencyDistribution<f64>) -> (f64, f64) {
        match d {
            LatencyDistribution::Weibull { shape, scale }
            | LatencyDistribution::Gamma { shape, scale } => (*shape, *scale),
            LatencyDistribution::LogNormal { mu, sigma } => (*mu, *sigma),
            other => panic!("not parametric: {other:?}"),
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            fit(&[9.0, 9.0, 9.0]).unwrap(),
            LatencyDistribution::Fixed { value: 9.0 }
        );
        assert_eq!(
            fit(&[5.1]).unwrap(),
            LatencyDistribution::Fixed { value: 5.1 }
        );
        assert!(matches!(
            fit(&[1.0, 2.0, 3.0]).unwrap(),
            LatencyDistribution::Empirical { .. }
        ));
        assert_eq!(fit::<f64>(&[]), Err(DistError::NoObservations));
        assert_eq!(fit(&[1.0, -2.0]), Err(DistError::NegativeObservation(-2.0)));
        let with_zero: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            fit(&with_zero).unwrap(),
            LatencyDistribution::Empirical { .. }
        ));
    }

    #[test]
    fn gamma_recovery() {
        let truth = LatencyDistribution::gamma(1.31, 18.95).unwrap();
        let d = fit(&draws(&truth, 5000, 3)).unwrap();
        assert_eq!(d.family(), "gamma");
        let (k, t) = params(&d);
        assert!((1.18..=1.45).contains(&k), "k={k}");
        assert!((17.0..=21.0).contains(&t), "theta={t}");
    }

    /// The Gamma MLE satisfies the score equations: mean = kθ and
    /// ψ(k) + ln θ = mean(ln x).
    #[test]
    fn gamma_fit_solves_score_equations() {
        let xs = draws(&LatencyDistribution::gamma(0.7, 3.0).unwrap(), 2000, 9);
        let (k, t) = fit_gamma(&xs).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mean_log = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
        assert!((k * t - mean).abs() < 1e-9 * mean);
        assert!((digamma(k) + t.ln() - mean_log).abs() < 1e-9);
    }

    /// The Weibull MLE is a stationary point of the log-likelihood.
    #[test]
    fn weibull_fit_is_stationary() {
        let xs = draws(&LatencyDistribution::weibull(3.6, 10.25).unwrap(), 3000, 5);
        let (k, l) = fit_weibull(&xs).unwrap();
        let ll = |k: f64, l: f64| log_likelihood(&LatencyDistribution::weibull(k, l).unwrap(), &xs);
        let h = 1e-5;
        let dk = (ll(k + h, l) - ll(k - h, l)) / (2.0 * h);
        let dl = (ll(k, l + h) - ll(k, l - h)) / (2.0 * h);
        assert!(dk.abs() < 1e-3, "dk={dk}");
        assert!(dl.abs() < 1e-3, "dl={dl}");
    }

    #[test]
    fn lognormal_fit_is_closed_form() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let (mu, sigma) = fit_lognormal(&xs).unwrap();
        let ln2 = 2f64.ln();
        assert!((mu - 1.5 * ln2).abs() < 1e-12);
        assert!((sigma - (1.25f64).sqrt() * ln2).abs() < 1e-12);
    }

    #[test]
    fn each_family_recovers_itself() {
        let families = [
            LatencyDistribution::weibull(3.6, 10.25).unwrap(),
            LatencyDistribution::gamma(1.31, 18.95).unwrap(),
            LatencyDistribution::lognormal(2.5, 0.4).unwrap(),
        ];
        for truth in &families {
            let seeds = 20;
            let mut same_family = 0;
            for seed in 0..seeds {
                let d = fit(&draws(truth, 5000, 100 + seed)).unwrap();
                if d.family() == truth.family() {
                    same_family += 1;
                    let (a, b) = params(&d);
                    let (ta, tb) = params(truth);
                    assert!(
                        ((a - ta) / ta).abs() < 0.15,
                        "{}: {a} vs {ta}",
                        truth.family()
                    );
                    assert!(
                        ((b - tb) / tb).abs() < 0.15,
                        "{}: {b} vs {tb}",
                        truth.family()
                    );
                }
            }
            assert!(
                same_family * 10 >= seeds * 9,
                "{}: {same_family}/{seeds}",
                truth.family()
            );
        }
    }

    #[test]
    fn f32_fit() {
        let xs: Vec<f32> = draws(&LatencyDistribution::gamma(2.0, 3.0).unwrap(), 1000, 4)
            .into_iter()
            .map(|x| x as f32)
            .collect();
        let d = fit(&xs).unwrap();
        assert!((d.mean() - 6.0).abs() < 0.5);
    }
}
