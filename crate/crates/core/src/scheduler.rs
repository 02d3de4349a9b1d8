//! Monte Carlo strategy selection over predicted element usage.
//!
//! A trial prices one strategy by sampling each element's first interaction
//! from its cached distribution. Repeat interactions cost a fixed `c_repeat`
//! and every page visited (the start page plus one per navigation) costs
//! `c_read`. Hedge races `n_workers` serial replicas and keeps the fastest.
//! Parallel runs a declared split in batches of `n_workers`.
//!
//! Trials use common random numbers: trial `t`, replica `r` always draws from
//! the same stream, so serial and hedge replica 0 see identical samples and
//! win rates are paired comparisons.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{LatencyDistribution, SchedulerCache};
use crate::rng::{substream, RngStream};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Serial,
    Parallel,
    Hedge,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Serial, Strategy::Parallel, Strategy::Hedge];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Serial => "serial",
            Strategy::Parallel => "parallel",
            Strategy::Hedge => "hedge",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SchedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "serial" => Ok(Strategy::Serial),
            "parallel" => Ok(Strategy::Parallel),
            "hedge" => Ok(Strategy::Hedge),
            other => Err(SchedError::InvalidUsage(format!(
                "unknown strategy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedError {
    #[error("no cached distribution for element `{0}`")]
    UnknownElement(String),
    #[error("usage plan has no parallel split")]
    NotParallelizable,
    #[error("invalid usage plan: {0}")]
    InvalidUsage(String),
    #[error("invalid scheduler config: {0}")]
    InvalidConfig(String),
    #[error("no usage prediction for task `{0}`")]
    UnknownTask(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"), default)]
pub struct SchedulerConfig<S> {
    pub n_mc: usize,
    pub n_workers: usize,
    pub delta_p: S,
    pub delta_h: S,
    pub c_read: S,
    pub c_repeat: S,
    pub seed: u64,
}

impl<S: Real> Default for SchedulerConfig<S> {
    fn default() -> Self {
        SchedulerConfig {
            n_mc: 1000,
            n_workers: 4,
            delta_p: S::lit(20.0),
            delta_h: S::lit(5.0),
            c_read: S::lit(5.0),
            c_repeat: S::lit(5.0),
            seed: 0,
        }
    }
}

impl<S: Real> SchedulerConfig<S> {
    pub fn validate(&self) -> Result<(), SchedError> {
        if self.n_mc == 0 {
            return Err(SchedError::InvalidConfig("n_mc must be at least 1".into()));
        }
        if self.n_workers == 0 {
            return Err(SchedError::InvalidConfig(
                "n_workers must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("delta_p", self.delta_p),
            ("delta_h", self.delta_h),
            ("c_read", self.c_read),
            ("c_repeat", self.c_repeat),
        ] {
            if !(v.is_finite() && v >= S::zero()) {
                return Err(SchedError::InvalidConfig(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementUsage {
    pub element: String,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default)]
    pub navigations: u32,
}

impl ElementUsage {
    pub fn new(element: &str, count: u32, navigations: u32) -> Self {
        ElementUsage {
            element: element.to_string(),
            count,
            navigations,
        }
    }
}

/// Work split for the parallel strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelSplit {
    pub num_workers: usize,
    pub per_worker: Vec<Vec<ElementUsage>>,
    /// Elements every worker must find again in its own session. Each is
    /// charged once with one navigation unless the worker already uses it.
    #[serde(default)]
    pub rediscovery: Vec<String>,
    /// Shared serial work done before the workers start. Free when empty.
    #[serde(default)]
    pub prefix: Vec<ElementUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsagePlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub sequential: Vec<ElementUsage>,
    #[serde(default)]
    pub parallelizable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel: Option<ParallelSplit>,
}

impl UsagePlan {
    pub fn serial(sequential: Vec<ElementUsage>) -> Self {
        UsagePlan {
            task: None,
            sequential,
            parallelizable: false,
            parallel: None,
        }
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        if let Some(p) = &self.parallel {
            if p.num_workers == 0 {
                return Err(SchedError::InvalidUsage(
                    "parallel.num_workers must be at least 1".into(),
                ));
            }
            if p.per_worker.len() != p.num_workers {
                return Err(SchedError::InvalidUsage(format!(
                    "parallel.per_worker has {} entries for {} workers",
                    p.per_worker.len(),
                    p.num_workers
                )));
            }
        }
        Ok(())
    }

    /// The split to use for the parallel strategy, if this plan has one.
    pub fn split(&self) -> Option<&ParallelSplit> {
        self.parallel.as_ref().filter(|_| self.parallelizable)
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        Strategy::ALL
            .into_iter()
            .filter(|s| *s != Strategy::Parallel || self.split().is_some())
            .collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self, SchedError> {
        let plan: UsagePlan =
            serde_json::from_str(text).map_err(|e| SchedError::InvalidUsage(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, SchedError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchedError::InvalidUsage(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

/// Source of usage predictions. The model-backed predictor lives outside
/// this crate; tests and the CLI use [`FixtureUsage`].
pub trait UsageProvider {
    fn predict_usage(&self, task: &str) -> Result<UsagePlan, SchedError>;
}

/// Usage plans keyed by task id.
#[derive(Debug, Clone, Default)]
pub struct FixtureUsage {
    pub plans: BTreeMap<String, UsagePlan>,
}

impl FixtureUsage {
    pub fn single(task: &str, plan: UsagePlan) -> Self {
        FixtureUsage {
            plans: BTreeMap::from([(task.to_string(), plan)]),
        }
    }
}

impl UsageProvider for FixtureUsage {
    fn predict_usage(&self, task: &str) -> Result<UsagePlan, SchedError> {
        self.plans
            .get(task)
            .cloned()
            .ok_or_else(|| SchedError::UnknownTask(task.to_string()))
    }
}

/// Supplies first-interaction latencies.
pub trait ElementSampler<S> {
    /// Called before each independent replica or worker starts drawing.
    fn begin_replica(&mut self, _replica: u64) {}

    fn first_interaction(&mut self, element: &str, dist: &LatencyDistribution<S>) -> S;
}

/// Draws for one Monte Carlo trial: replica `r` reads stream `(trial, r)`.
pub struct TrialSampler {
    seed: u64,
    trial: u64,
    rng: RngStream,
}

impl TrialSampler {
    pub fn new(seed: u64, trial: u64) -> Self {
        TrialSampler {
            seed,
            trial,
            rng: substream(seed, trial, 0),
        }
    }
}

impl<S: Real> ElementSampler<S> for TrialSampler {
    fn begin_replica(&mut self, replica: u64) {
        self.rng = substream(self.seed, self.trial, replica);
    }

    fn first_interaction(&mut self, _element: &str, dist: &LatencyDistribution<S>) -> S {
        dist.sample(&mut self.rng)
    }
}

/// Replays a fixed sequence of draws in call order, ignoring distributions.
#[derive(Debug, Clone)]
pub struct ScriptedSampler<S> {
    draws: VecDeque<S>,
}

impl<S> ScriptedSampler<S> {
    pub fn new(draws: impl IntoIterator<Item = S>) -> Self {
        ScriptedSampler {
            draws: draws.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.draws.len()
    }
}

impl<S: Real> ElementSampler<S> for ScriptedSampler<S> {
    fn first_interaction(&mut self, element: &str, _dist: &LatencyDistribution<S>) -> S {
        self.draws
            .pop_front()
            .unwrap_or_else(|| panic!("scripted sampler exhausted at `{element}`"))
    }
}

/// Parallel workers draw from replica ids above this offset, leaving the
/// low ids to hedge replicas.
const WORKER_REPLICA_BASE: u64 = 1 << 32;
const PREFIX_REPLICA: u64 = WORKER_REPLICA_BASE - 1;

fn usage_cost<S: Real>(
    usage: &[ElementUsage],
    cache: &SchedulerCache<S>,
    config: &SchedulerConfig<S>,
    sampler: &mut impl ElementSampler<S>,
) -> Result<S, SchedError> {
    let mut total = S::zero();
    let mut navigations = 0u64;
    for u in usage {
        navigations += u64::from(u.navigations);
        if u.count == 0 {
            continue;
        }
        let dist = cache
            .distribution(&u.element)
            .ok_or_else(|| SchedError::UnknownElement(u.element.clone()))?;
        total = total + sampler.first_interaction(&u.element, dist);
        total = total + S::lit(f64::from(u.count - 1)) * config.c_repeat;
    }
    Ok(total + S::lit((1 + navigations) as f64) * config.c_read)
}

/// One serial trial: the whole sequential plan on one worker.
pub fn serial_trial<S: Real>(
    usage: &UsagePlan,
    cache: &SchedulerCache<S>,
    config: &SchedulerConfig<S>,
    sampler: &mut impl ElementSampler<S>,
) -> Result<S, SchedError> {
    sampler.begin_replica(0);
    usage_cost(&usage.sequential, cache, config, sampler)
}

/// One hedge trial: fastest of `n_workers` independent serial replicas.
pub fn hedge_trial<S: Real>(
    usage: &UsagePlan,
    cache: &SchedulerCache<S>,
    config: &SchedulerConfig<S>,
    sampler: &mut impl ElementSampler<S>,
) -> Result<S, SchedError> {
    let mut best = S::infinity();
    for r in 0..config.n_workers.max(1) {
        sampler.begin_replica(r as u64);
        best = best.min(usage_cost(&usage.sequential, cache, config, sampler)?);
    }
    Ok(best + config.delta_h)
}

/// One parallel trial: prefix, then workers in batches of `n_workers` where
/// each batch waits for its slowest worker, plus one `delta_p`.
pub fn parallel_trial<S: Real>(
    usage: &UsagePlan,
    cache: &SchedulerCache<S>,
    config: &SchedulerConfig<S>,
    sampler: &mut impl ElementSampler<S>,
) -> Result<S, SchedError> {
    let split = usage.split().ok_or(SchedError::NotParallelizable)?;
    let mut total = S::zero();
    if !split.prefix.is_empty() {
        sampler.begin_replica(PREFIX_REPLICA);
        total = usage_cost(&split.prefix, cache, config, sampler)?;
    }
    let mut worker_costs = Vec::with_capacity(split.per_worker.len());
    for (w, own) in split.per_worker.iter().enumerate() {
        let mut work = own.clone();
        for e in &split.rediscovery {
            if !work.iter().any(|u| &u.element == e) {
                work.insert(0, ElementUsage::new(e, 1, 1));
            }
        }
        sampler.begin_replica(WORKER_REPLICA_BASE + w as u64);
        worker_costs.push(usage_cost(&work, cache, config, sampler)?);
    }
    for batch in worker_costs.chunks(config.n_workers.max(1)) {
        total = total + batch.iter().copied().fold(S::neg_infinity(), S::max);
    }
    Ok(total + config.delta_p)
}

pub fn trial<S: Real>(
    strategy: Strategy,
    usage: &UsagePlan,
    cache: &SchedulerCache<S>,
    config: &SchedulerConfig<S>,
    sampler: &mut impl ElementSampler<S>,
) -> Result<S, SchedError> {
    match strategy {
        Strategy::Serial => serial_trial(usage, cache, config, sampler),
        Strategy::Parallel => parallel_trial(usage, cache, config, sampler),
        Strategy::Hedge => hedge_trial(usage, cache, config, sampler),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Real")]
pub struct StrategyEstimate<S> {
    pub strategy: Strategy,
    pub mean_s: S,
    /// Fraction of trials where this strategy was strictly fastest.
    pub win_rate: S,
    #[serde(skip)]
    pub trials: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Real")]
pub struct Selection<S> {
    pub selected: Strategy,
    pub estimates: Vec<StrategyEstimate<S>>,
}

impl<S: Real> Selection<S> {
    pub fn estimate(&self, strategy: Strategy) -> Option<&StrategyEstimate<S>> {
        self.estimates.iter().find(|e| e.strategy == strategy)
    }
}

/// Index of the smallest value; the earliest wins ties.
pub(crate) fn argmin<S: PartialOrd>(xs: impl IntoIterator<Item = S>) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, x) in xs.into_iter().enumerate() {
        if best.as_ref().is_none_or(|(_, b)| x < *b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

/// Mean latency and paired win rate for each strategy from per-trial rows.
pub fn summarize<S: Real>(strategies: &[Strategy], rows: &[Vec<S>]) -> Selection<S> {
    let n = rows.len().max(1);
    let mut estimates: Vec<StrategyEstimate<S>> = strategies
        .iter()
        .enumerate()
        .map(|(j, &strategy)| {
            let trials: Vec<S> = rows.iter().map(|r| r[j]).collect();
            let mean_s = trials.iter().copied().sum::<S>() / S::lit(n as f64);
            StrategyEstimate {
                strategy,
                mean_s,
                win_rate: S::zero(),
                trials,
            }
        })
        .collect();
    let mut wins = vec![0usize; strategies.len()];
    for row in rows {
        for (j, &v) in row.iter().enumerate() {
            if row.iter().enumerate().all(|(i, &o)| i == j || v < o) {
                wins[j] += 1;
            }
        }
    }
    for (e, w) in estimates.iter_mut().zip(wins) {
        e.win_rate = S::lit(w as f64 / n as f64);
    }
    let selected = strategies[argmin(estimates.iter().map(|e| e.mean_s)).unwrap_or(0)];
    Selection {
        selected,
        estimates,
    }
}

/// Runs `n_mc` trials of every applicable strategy and picks the lowest mean.
pub fn select_for_usage<S: Real>(
    usage: &UsagePlan,
    cache: &SchedulerCache<S>,
    config: &SchedulerConfig<S>,
) -> Result<Selection<S>, SchedError> {
    config.validate()?;
    usage.validate()?;
    let strategies = usage.strategies();
    let rows: Vec<Vec<S>> = (0..config.n_mc as u64)
        .into_par_iter()
        .map(|t| {
            strategies
                .iter()
                .map(|&s| {
                    trial(
                        s,
                        usage,
                        cache,
                        config,
                        &mut TrialSampler::new(config.seed, t),
                    )
                })
                .collect::<Result<Vec<S>, _>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(summarize(&strategies, &rows))
}

pub fn select_strategy<S: Real>(
    task: &str,
    provider: &impl UsageProvider,
    cache: &SchedulerCache<S>,
    config: &SchedulerConfig<S>,
) -> Result<Selection<S>, SchedError> {
    select_for_usage(&provider.predict_usage(task)?, cache, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ElementStats;
    use proptest::prelude::{
        any, prop, prop_assert, prop_assert_eq, prop_oneof, proptest, ProptestConfig,
    };
    use proptest::strategy::{BoxedStrategy, Strategy as _};

    fn cache_of(entries: &[(&str, LatencyDistribution<f64>)]) -> SchedulerCache<f64> {
        let mut c = SchedulerCache::new();
        for (name, d) in entries {
            c.insert(ElementStats::new(name, "", d.clone(), 0));
        }
        c
    }

    fn ex1() -> (UsagePlan, SchedulerCache<f64>) {
        let card = || vec![ElementUsage::new("restaurantCard", 1, 1)];
        let usage = UsagePlan {
            task: Some("dashdish-custom-1".into()),
            sequential: vec![
                ElementUsage::new("restaurantCard", 1, 1),
                ElementUsage::new("fullMenuItemCard", 0, 0),
            ],
            parallelizable: true,
            parallel: Some(ParallelSplit {
                num_workers: 4,
                per_worker: vec![card(), card(), card(), card()],
                rediscovery: vec![],
                prefix: vec![],
            }),
        };
        let cache = cache_of(&[(
            "restaurantCard",
            LatencyDistribution::weibull(3.60, 10.25).unwrap(),
        )]);
        (usage, cache)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 5e-4
    }

    #[test]
    fn worked_single_trials() {
        let (usage, cache) = ex1();
        let cfg = SchedulerConfig::default();
        let s = serial_trial(&usage, &cache, &cfg, &mut ScriptedSampler::new([8.4])).unwrap();
        assert!(close(s, 18.4), "{s}");
        let h = hedge_trial(
            &usage,
            &cache,
            &cfg,
            &mut ScriptedSampler::new([8.4, 9.1, 7.6, 10.2]),
        )
        .unwrap();
        assert!(close(h, 22.6), "{h}");
        let p = parallel_trial(
            &usage,
            &cache,
            &cfg,
            &mut ScriptedSampler::new([8.4, 11.5, 7.2, 9.8]),
        )
        .unwrap();
        assert!(close(p, 41.5), "{p}");
    }

    #[test]
    fn read_floor_and_repeat_discount() {
        let cache = cache_of(&[("x", LatencyDistribution::fixed(1.0).unwrap())]);
        let cfg = SchedulerConfig::default();
        let empty = UsagePlan::serial(vec![]);
        assert_eq!(
            serial_trial(&empty, &cache, &cfg, &mut ScriptedSampler::new([])).unwrap(),
            5.0
        );
        let rep = UsagePlan::serial(vec![ElementUsage::new("x", 3, 2)]);
        // 6.0 sampled once, two repeats at 5.0, three pages read.
        let got = serial_trial(&rep, &cache, &cfg, &mut ScriptedSampler::new([6.0])).unwrap();
        assert_eq!(got, 6.0 + 10.0 + 15.0);
    }

    #[test]
    fn count_zero_needs_no_cache_entry() {
        let cache = cache_of(&[]);
        let usage = UsagePlan::serial(vec![ElementUsage::new("ghost", 0, 1)]);
        let cfg = SchedulerConfig::default();
        assert_eq!(
            serial_trial(&usage, &cache, &cfg, &mut ScriptedSampler::new([])).unwrap(),
            10.0
        );
        let used = UsagePlan::serial(vec![ElementUsage::new("ghost", 1, 0)]);
        assert_eq!(
            serial_trial(&used, &cache, &cfg, &mut ScriptedSampler::new([1.0])),
            Err(SchedError::UnknownElement("ghost".into()))
        );
    }

    #[test]
    fn fixed_hedge_is_serial_plus_overhead() {
        let cache = cache_of(&[("a", LatencyDistribution::fixed(3.0).unwrap())]);
        let usage = UsagePlan::serial(vec![ElementUsage::new("a", 2, 1)]);
        for n in [1, 4] {
            let cfg = SchedulerConfig {
                n_workers: n,
                ..Default::default()
            };
            let mut sm = TrialSampler::new(1, 0);
            let s = serial_trial(&usage, &cache, &cfg, &mut sm).unwrap();
            let h = hedge_trial(&usage, &cache, &cfg, &mut sm).unwrap();
            assert_eq!(s, 3.0 + 5.0 + 10.0);
            assert_eq!(h, s + 5.0);
        }
    }

    #[test]
    fn parallel_requires_split() {
        let cache = cache_of(&[("a", LatencyDistribution::fixed(3.0).unwrap())]);
        let usage = UsagePlan::serial(vec![ElementUsage::new("a", 1, 0)]);
        let cfg = SchedulerConfig::default();
        assert_eq!(
            parallel_trial(&usage, &cache, &cfg, &mut ScriptedSampler::new([])),
            Err(SchedError::NotParallelizable)
        );
        assert_eq!(usage.strategies(), [Strategy::Serial, Strategy::Hedge]);
    }

    #[test]
    fn single_worker_and_one_slow_worker() {
        let cache = cache_of(&[("a", LatencyDistribution::fixed(1.0).unwrap())]);
        let mk = |n: usize| UsagePlan {
            task: None,
            sequential: vec![],
            parallelizable: true,
            parallel: Some(ParallelSplit {
                num_workers: n,
                per_worker: vec![vec![ElementUsage::new("a", 1, 0)]; n],
                rediscovery: vec![],
                prefix: vec![],
            }),
        };
        let cfg = SchedulerConfig::default();
        let one = parallel_trial(&mk(1), &cache, &cfg, &mut ScriptedSampler::new([4.0])).unwrap();
        assert_eq!(one, 4.0 + 5.0 + 20.0);
        let slow = parallel_trial(
            &mk(3),
            &cache,
            &cfg,
            &mut ScriptedSampler::new([1.0, 30.0, 2.0]),
        )
        .unwrap();
        assert_eq!(slow, 30.0 + 5.0 + 20.0);
    }

    #[test]
    fn six_workers_run_in_two_batches() {
        let draws = [3.0, 9.0, 1.0, 4.0, 7.0, 2.0];
        let cache = cache_of(&[("a", LatencyDistribution::fixed(1.0).unwrap())]);
        let usage = UsagePlan {
            task: None,
            sequential: vec![],
            parallelizable: true,
            parallel: Some(ParallelSplit {
                num_workers: 6,
                per_worker: vec![vec![ElementUsage::new("a", 1, 0)]; 6],
                rediscovery: vec![],
                prefix: vec![],
            }),
        };
        let cfg = SchedulerConfig::default();
        let got = parallel_trial(&usage, &cache, &cfg, &mut ScriptedSampler::new(draws)).unwrap();
        // Workers 0..4 form the first batch, 4..6 the second; each worker
        // also reads one page.
        let first = draws[..4].iter().cloned().fold(f64::MIN, f64::max) + 5.0;
        let second = draws[4..].iter().cloned().fold(f64::MIN, f64::max) + 5.0;
        assert_eq!(got, first + second + 20.0);
    }

    #[test]
    fn rediscovery_and_prefix() {
        let cache = cache_of(&[
            ("nav", LatencyDistribution::fixed(1.0).unwrap()),
            ("item", LatencyDistribution::fixed(1.0).unwrap()),
        ]);
        let usage = UsagePlan {
            task: None,
            sequential: vec![],
            parallelizable: true,
            parallel: Some(ParallelSplit {
                num_workers: 2,
                per_worker: vec![
                    vec![ElementUsage::new("item", 1, 0)],
                    vec![
                        ElementUsage::new("nav", 1, 1),
                        ElementUsage::new("item", 1, 0),
                    ],
                ],
                rediscovery: vec!["nav".into()],
                prefix: vec![ElementUsage::new("item", 1, 0)],
            }),
        };
        let cfg = SchedulerConfig::default();
        // prefix: 2 + 5; worker 0 gains nav: 4 + 3 + 10; worker 1 unchanged: 6 + 1 + 10.
        let got = parallel_trial(
            &usage,
            &cache,
            &cfg,
            &mut ScriptedSampler::new([2.0, 4.0, 3.0, 6.0, 1.0]),
        )
        .unwrap();
        assert_eq!(got, 7.0 + 17.0 + 20.0);
    }

    #[test]
    fn usage_json_defaults_and_validation() {
        let u = UsagePlan::from_json_str(r#"{"sequential": [{"element": "a"}]}"#).unwrap();
        assert_eq!(u.sequential[0], ElementUsage::new("a", 1, 0));
        let bad = r#"{"sequential": [], "parallelizable": true,
                      "parallel": {"num_workers": 2, "per_worker": [[]]}}"#;
        assert!(matches!(
            UsagePlan::from_json_str(bad),
            Err(SchedError::InvalidUsage(_))
        ));
    }

    #[test]
    fn all_fixed_selects_serial() {
        let cache = cache_of(&[("a", LatencyDistribution::fixed(3.0).unwrap())]);
        let usage = UsagePlan::serial(vec![ElementUsage::new("a", 1, 1)]);
        let sel = select_for_usage(&usage, &cache, &SchedulerConfig::default()).unwrap();
        assert_eq!(sel.selected, Strategy::Serial);
        assert_eq!(sel.estimate(Strategy::Serial).unwrap().mean_s, 13.0);
        assert_eq!(sel.estimate(Strategy::Serial).unwrap().win_rate, 1.0);
    }

    #[test]
    fn low_variance_selects_serial() {
        let (usage, cache) = ex1();
        let sel = select_for_usage(
            &usage,
            &cache,
            &SchedulerConfig {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sel.selected, Strategy::Serial);
        assert_eq!(sel.estimates.len(), 3);
    }

    #[test]
    fn provider_lookup() {
        let (usage, cache) = ex1();
        let p = FixtureUsage::single("t1", usage);
        let cfg = SchedulerConfig {
            n_mc: 10,
            ..Default::default()
        };
        assert!(select_strategy("t1", &p, &cache, &cfg).is_ok());
        assert_eq!(
            select_strategy("t2", &p, &cache, &cfg),
            Err(SchedError::UnknownTask("t2".into()))
        );
    }

    #[test]
    fn weibull_serial_mean_matches_analytic() {
        let cache = cache_of(&[
            ("a", LatencyDistribution::weibull(3.6, 10.25).unwrap()),
            ("b", LatencyDistribution::weibull(1.5, 4.0).unwrap()),
        ]);
        let usage = UsagePlan::serial(vec![
            ElementUsage::new("a", 1, 1),
            ElementUsage::new("b", 1, 0),
        ]);
        let cfg = SchedulerConfig {
            n_mc: 100_000,
            seed: 5,
            ..Default::default()
        };
        let sel = select_for_usage(&usage, &cache, &cfg).unwrap();
        let analytic = 10.25 * statrs::function::gamma::gamma(1.0 + 1.0 / 3.6)
            + 4.0 * statrs::function::gamma::gamma(1.0 + 1.0 / 1.5)
            + 10.0;
        let got = sel.estimate(Strategy::Serial).unwrap().mean_s;
        assert!(
            (got - analytic).abs() < 0.01 * analytic,
            "{got} vs {analytic}"
        );
    }

    #[test]
    fn f32_scalar_works() {
        let mut c = SchedulerCache::<f32>::new();
        c.insert(ElementStats::new(
            "a",
            "",
            LatencyDistribution::gamma(1.31, 18.95).unwrap(),
            0,
        ));
        let usage = UsagePlan::serial(vec![ElementUsage::new("a", 1, 0)]);
        let sel = select_for_usage(
            &usage,
            &c,
            &SchedulerConfig::<f32> {
                n_mc: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sel.estimates.iter().all(|e| e.mean_s.is_finite()));
    }

    fn arb_dist() -> BoxedStrategy<LatencyDistribution<f64>> {
        prop_oneof![
            (0.5f64..5.0, 1.0f64..30.0)
                .prop_map(|(k, l)| LatencyDistribution::weibull(k, l).unwrap()),
            (0.5f64..5.0, 1.0f64..20.0)
                .prop_map(|(k, t)| LatencyDistribution::gamma(k, t).unwrap()),
            (0.0f64..3.0, 0.1f64..1.0)
                .prop_map(|(m, s)| LatencyDistribution::lognormal(m, s).unwrap()),
            (0.0f64..30.0).prop_map(|v| LatencyDistribution::fixed(v).unwrap()),
        ]
        .boxed()
    }

    fn arb_usage() -> BoxedStrategy<(UsagePlan, SchedulerCache<f64>)> {
        prop::collection::vec((arb_dist(), 0u32..3, 0u32..2), 1..5)
            .prop_map(|els| {
                let mut cache = SchedulerCache::new();
                let mut seq = vec![];
                for (i, (d, count, nav)) in els.into_iter().enumerate() {
                    let name = format!("e{i}");
                    cache.insert(ElementStats::new(&name, "", d, 0));
                    seq.push(ElementUsage::new(&name, count, nav));
                }
                (UsagePlan::serial(seq), cache)
            })
            .boxed()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn hedge_never_slower_than_serial_without_overhead((usage, cache) in arb_usage(), seed in any::<u64>()) {
            let cfg = SchedulerConfig { n_mc: 64, delta_h: 0.0, seed, ..Default::default() };
            let sel = select_for_usage(&usage, &cache, &cfg).unwrap();
            let s = sel.estimate(Strategy::Serial).unwrap();
            let h = sel.estimate(Strategy::Hedge).unwrap();
            for (a, b) in s.trials.iter().zip(&h.trials) {
                prop_assert!(b <= a);
            }
            prop_assert!(h.mean_s <= s.mean_s);
            let shifted = select_for_usage(&usage, &cache, &SchedulerConfig { delta_h: 5.0, ..cfg }).unwrap();
            let h5 = shifted.estimate(Strategy::Hedge).unwrap().mean_s;
            prop_assert!((h5 - h.mean_s - 5.0).abs() < 1e-9);
        }

        #[test]
        fn seeded_runs_repeat_and_estimates_are_consistent((usage, cache) in arb_usage(), seed in any::<u64>()) {
            let cfg = SchedulerConfig { n_mc: 50, seed, ..Default::default() };
            let a = select_for_usage(&usage, &cache, &cfg).unwrap();
            let b = select_for_usage(&usage, &cache, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            let mut wins = 0.0;
            for e in &a.estimates {
                let mean = e.trials.iter().sum::<f64>() / e.trials.len() as f64;
                prop_assert!((e.mean_s - mean).abs() < 1e-9);
                wins += e.win_rate;
            }
            prop_assert!(wins <= 1.0 + 1e-12);
        }
    }
}
