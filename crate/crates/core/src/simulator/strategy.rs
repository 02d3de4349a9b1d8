//! Strategy execution on simulated time, and the oracle selector.
//!
//! Replica `r` of trial `t` draws from stream `(t, r)` and parallel worker
//! `w` from a disjoint range, matching the scheduler's stream layout so
//! that the same seed gives both the same draws.

use rayon::prelude::*;
use serde::Serialize;

use super::{run_plan, SimEnv, SimError};
use crate::planlang::PlanProgram;
use crate::protocol::ManifestSet;
use crate::rng::substream;
use crate::scheduler::{argmin, SchedulerConfig, Strategy};

const WORKER_STREAM_BASE: u64 = 1 << 32;

/// A plan plus its declared parallel split. An empty `workers` list means
/// the plan cannot run in parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPlan {
    pub program: PlanProgram,
    pub workers: Vec<PlanProgram>,
}

impl StrategyPlan {
    pub fn serial(program: PlanProgram) -> Self {
        StrategyPlan {
            program,
            workers: Vec::new(),
        }
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        Strategy::ALL
            .into_iter()
            .filter(|s| *s != Strategy::Parallel || !self.workers.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyRun {
    pub latency_s: f64,
    pub ok: bool,
}

/// Latency of one strategy execution.
///
/// Serial is one run. Hedge is the fastest successful replica out of
/// `n_workers` plus `delta_h`. Parallel runs each worker sub-plan from the
/// initial state, in batches of `n_workers`, adding the batch maxima and one
/// `delta_p`.
pub fn run_strategy(
    plan: &StrategyPlan,
    strategy: Strategy,
    manifests: &ManifestSet,
    env: &SimEnv,
    config: &SchedulerConfig<f64>,
    trial: u64,
) -> Result<StrategyRun, SimError> {
    let seed = config.seed;
    match strategy {
        Strategy::Serial => {
            let r = run_plan(
                &plan.program,
                manifests,
                env,
                &mut substream(seed, trial, 0),
            )?;
            Ok(StrategyRun {
                latency_s: r.latency_s,
                ok: r.ok,
            })
        }
        Strategy::Hedge => {
            let mut runs = Vec::with_capacity(config.n_workers);
            for rep in 0..config.n_workers.max(1) as u64 {
                runs.push(run_plan(
                    &plan.program,
                    manifests,
                    env,
                    &mut substream(seed, trial, rep),
                )?);
            }
            let ok = runs.iter().any(|r| r.ok);
            let fastest = runs
                .iter()
                .filter(|r| r.ok || !ok)
                .map(|r| r.latency_s)
                .fold(f64::INFINITY, f64::min);
            Ok(StrategyRun {
                latency_s: fastest + config.delta_h,
                ok,
            })
        }
        Strategy::Parallel => {
            if plan.workers.is_empty() {
                return Err(SimError::InvalidEnv("plan has no parallel split".into()));
            }
            let mut runs = Vec::with_capacity(plan.workers.len());
            for (w, sub) in plan.workers.iter().enumerate() {
                let mut rng = substream(seed, trial, WORKER_STREAM_BASE + w as u64);
                runs.push(run_plan(sub, manifests, env, &mut rng)?);
            }
            let latency: f64 = runs
                .chunks(config.n_workers.max(1))
                .map(|batch| batch.iter().map(|r| r.latency_s).fold(0.0, f64::max))
                .sum();
            Ok(StrategyRun {
                latency_s: latency + config.delta_p,
                ok: runs.iter().all(|r| r.ok),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub selected: Strategy,
    pub means: Vec<(Strategy, f64)>,
}

impl OracleResult {
    pub fn mean(&self, strategy: Strategy) -> Option<f64> {
        self.means
            .iter()
            .find(|(s, _)| *s == strategy)
            .map(|(_, m)| *m)
    }
}

/// Runs every applicable strategy `trials` times on common seeds and picks
/// the lowest mean simulated latency.
pub fn oracle_strategy(
    plan: &StrategyPlan,
    manifests: &ManifestSet,
    env: &SimEnv,
    config: &SchedulerConfig<f64>,
    trials: usize,
) -> Result<OracleResult, SimError> {
    let strategies = plan.strategies();
    let rows: Vec<Vec<f64>> = (0..trials.max(1) as u64)
        .into_par_iter()
        .map(|t| {
            strategies
                .iter()
                .map(|&s| run_strategy(plan, s, manifests, env, config, t).map(|r| r.latency_s))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let n = rows.len() as f64;
    let means: Vec<(Strategy, f64)> = strategies
        .iter()
        .enumerate()
        .map(|(j, &s)| (s, rows.iter().map(|r| r[j]).sum::<f64>() / n))
        .collect();
    let selected = strategies[argmin(means.iter().map(|(_, m)| *m)).unwrap_or(0)];
    Ok(OracleResult { selected, means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::LatencyDistribution;
    use crate::planlang::parse_plan;
    use crate::protocol::{AbstractState, ToolManifest};
    use serde_json::json;
    use std::collections::BTreeMap;

    fn manifests(names: &[&str]) -> ManifestSet {
        ManifestSet::from_manifests(
            names
                .iter()
                .map(|n| ToolManifest::new(n, AbstractState::default(), AbstractState::default())),
        )
        .unwrap()
    }

    fn env(tools: &[(&str, LatencyDistribution<f64>)]) -> SimEnv {
        let mut e = SimEnv::new(BTreeMap::new());
        for (n, d) in tools {
            e = e.with_tool(n, d.clone(), false, json!(null));
        }
        e
    }

    fn plan(text: &str) -> PlanProgram {
        parse_plan(text).unwrap()
    }

    #[test]
    fn hedge_over_fixed_env_adds_overhead() {
        let e = env(&[("a", LatencyDistribution::fixed(3.0).unwrap())]);
        let m = manifests(&["a"]);
        let p = StrategyPlan::serial(plan("call a()\ncall a()"));
        let cfg = SchedulerConfig::default();
        let s = run_strategy(&p, Strategy::Serial, &m, &e, &cfg, 0).unwrap();
        let h = run_strategy(&p, Strategy::Hedge, &m, &e, &cfg, 0).unwrap();
        assert_eq!(s.latency_s, 6.0);
        assert_eq!(h.latency_s, 11.0);
        assert_eq!(
            oracle_strategy(&p, &m, &e, &cfg, 20).unwrap().selected,
            Strategy::Serial
        );
    }

    #[test]
    fn parallel_is_slowest_worker_plus_overhead() {
        let e = env(&[
            ("fast", LatencyDistribution::fixed(2.0).unwrap()),
            ("slow", LatencyDistribution::fixed(30.0).unwrap()),
        ]);
        let m = manifests(&["fast", "slow"]);
        let p = StrategyPlan {
            program: plan("call fast()\ncall slow()\ncall fast()"),
            workers: vec![
                plan("call fast()"),
                plan("call slow()"),
                plan("call fast()"),
            ],
        };
        let cfg = SchedulerConfig::default();
        let r = run_strategy(&p, Strategy::Parallel, &m, &e, &cfg, 0).unwrap();
        assert_eq!(r.latency_s, 30.0 + 20.0);
        let two = SchedulerConfig {
            n_workers: 2,
            ..cfg
        };
        let batched = run_strategy(&p, Strategy::Parallel, &m, &e, &two, 0).unwrap();
        assert_eq!(batched.latency_s, 30.0 + 2.0 + 20.0);
        assert!(run_strategy(
            &StrategyPlan::serial(plan("")),
            Strategy::Parallel,
            &m,
            &e,
            &cfg,
            0
        )
        .is_err());
    }

    #[test]
    fn hedge_beats_serial_on_a_heavy_tail() {
        let d = LatencyDistribution::gamma(1.31, 18.95).unwrap();
        let e = env(&[("b", d.clone())]);
        let m = manifests(&["b"]);
        let p = StrategyPlan::serial(plan("call b()"));
        let cfg = SchedulerConfig {
            delta_h: 0.0,
            seed: 11,
            ..Default::default()
        };
        let res = oracle_strategy(&p, &m, &e, &cfg, 1000).unwrap();
        let serial = res.mean(Strategy::Serial).unwrap();
        let hedge = res.mean(Strategy::Hedge).unwrap();
        assert!(hedge < serial);
        // E[min of 4] = integral of S(t)^4, by the midpoint rule.
        let h = 0.01;
        let expected_min: f64 = (0..40_000)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                (1.0 - d.cdf(t)).powi(4) * h
            })
            .sum();
        assert!(
            (hedge - expected_min).abs() < 0.15 * expected_min,
            "{hedge} vs {expected_min}"
        );
    }

    #[test]
    fn oracle_is_seed_deterministic() {
        let e = env(&[("a", LatencyDistribution::weibull(2.0, 5.0).unwrap())]);
        let m = manifests(&["a"]);
        let p = StrategyPlan {
            program: plan("call a()\ncall a()"),
            workers: vec![plan("call a()"), plan("call a()")],
        };
        let cfg = SchedulerConfig {
            seed: 4,
            ..Default::default()
        };
        let a = oracle_strategy(&p, &m, &e, &cfg, 50).unwrap();
        assert_eq!(a, oracle_strategy(&p, &m, &e, &cfg, 50).unwrap());
        assert_eq!(a.means.len(), 3);
    }
}
