//! Planning-efficiency metrics.
//!
//! Pass@k is the chance that at least one of `k` candidates drawn without
//! replacement from `n` attempts (`c` of them valid) is valid. Pass@t is the
//! chance that at least one of `n_parallel` independent workers finishes a
//! valid plan within `t` seconds, treating validity and latency as
//! independent: `1 - (1 - F(t) p)^n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{CostScalar, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no run records")]
    EmptyRecords,
}

fn domain(msg: String) -> MetricsError {
    MetricsError::Domain(msg)
}

/// `1 - C(n-c, k) / C(n, k)` as the product `1 - prod_{i<k} (n-c-i)/(n-i)`,
/// which never forms a binomial coefficient and stays exact for rationals.
pub fn pass_at_k<S: CostScalar>(n: u64, c: u64, k: u64) -> Result<S, MetricsError> {
    if c > n {
        return Err(domain(format!("c={c} exceeds n={n}")));
    }
    if k == 0 || k > n {
        return Err(domain(format!("k={k} outside 1..={n}")));
    }
    let fails = n - c;
    if fails < k {
        return Ok(S::one());
    }
    let mut all_fail = S::one();
    for i in 0..k {
        let num = S::from_u64(fails - i).expect("count fits scalar");
        let den = S::from_u64(n - i).expect("count fits scalar");
        all_fail = all_fail * num / den;
    }
    Ok(S::one() - all_fail)
}

/// Probability that one of `n_parallel` workers delivers a valid plan by `t`.
pub fn pass_at_t<S: Real>(
    cdf: impl Fn(S) -> S,
    p: S,
    n_parallel: u32,
    t: S,
) -> Result<S, MetricsError> {
    check_p(p)?;
    if n_parallel == 0 {
        return Err(domain("n_parallel must be at least 1".into()));
    }
    let f = cdf(t);
    if !(f >= S::zero() && f <= S::one()) {
        return Err(domain(format!(
            "CDF value {f} at t={t} is not a probability"
        )));
    }
    Ok(S::one() - (S::one() - f * p).powi(n_parallel as i32))
}

/// Limit of [`pass_at_t`] as `t` grows: `1 - (1 - p)^n`.
pub fn pass_at_t_plateau<S: Real>(p: S, n_parallel: u32) -> Result<S, MetricsError> {
    pass_at_t(|_| S::one(), p, n_parallel, S::infinity())
}

fn check_p<S: Real>(p: S) -> Result<(), MetricsError> {
    if p >= S::zero() && p <= S::one() {
        Ok(())
    } else {
        Err(domain(format!("p={p} is not a probability")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct RunRecord<S> {
    pub valid: bool,
    pub latency_s: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Real")]
pub struct PassRow<S> {
    pub metric: &'static str,
    pub x: S,
    pub value: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Real")]
pub struct PassTable<S> {
    pub n_records: usize,
    pub n_valid: usize,
    pub rows: Vec<PassRow<S>>,
}

impl<S: Real> PassTable<S> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,x,value\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.metric, r.x, r.value));
        }
        out
    }
}

/// Right-continuous empirical CDF over sorted samples.
pub fn empirical_cdf<S: Real>(sorted: &[S], t: S) -> S {
    let below = sorted.partition_point(|x| *x <= t);
    S::lit(below as f64 / sorted.len().max(1) as f64)
}

/// Pass@k for each `k` and Pass@t for each `t` from observed runs. The
/// success rate is the valid fraction; the latency CDF is the empirical
/// distribution over all records.
pub fn pass_curves<S: Real>(
    records: &[RunRecord<S>],
    ks: &[u64],
    ts: &[S],
    n_parallel: u32,
) -> Result<PassTable<S>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let n = records.len();
    let c = records.iter().filter(|r| r.valid).count();
    let mut rows = Vec::with_capacity(ks.len() + ts.len());
    for &k in ks {
        let v: f64 = pass_at_k(n as u64, c as u64, k)?;
        rows.push(PassRow {
            metric: "pass_at_k",
            x: S::lit(k as f64),
            value: S::lit(v),
        });
    }
    let mut lat: Vec<S> = records.iter().map(|r| r.latency_s).collect();
    if let Some(bad) = lat.iter().find(|l| !(l.is_finite() && **l >= S::zero())) {
        return Err(domain(format!(
            "latency {bad} is not a finite nonnegative time"
        )));
    }
    lat.sort_by(|a, b| a.partial_cmp(b).expect("finite latencies"));
    let p = S::lit(c as f64 / n as f64);
    for &t in ts {
        rows.push(PassRow {
            metric: "pass_at_t",
            x: t,
            value: pass_at_t(|x| empirical_cdf(&lat, x), p, n_parallel, t)?,
        });
    }
    Ok(PassTable {
        n_records: n,
        n_valid: c,
        rows,
    })
}
