//! Scheduler agreement suite: seeded tasks whose true latencies come from
//! the simulator, covering low-variance, heavy-tailed and parallelizable
//! workloads.
//!
//! The scheduler sees what it would see in deployment: a usage prediction
//! (here, the element usage of one simulated run) and per-element latency
//! distributions. The oracle runs every strategy in the simulator.

use std::collections::BTreeMap;

use agentjit::distributions::{LatencyDistribution, SchedulerCache};
use agentjit::planlang::parse_plan;
use agentjit::protocol::{AbstractState, ManifestSet, ToolManifest};
use agentjit::rng::{stream, substream, RngStream};
use agentjit::scheduler::{ParallelSplit, SchedulerConfig, UsagePlan};
use agentjit::simulator::{run_plan, SimEnv, StrategyPlan};
use rand::Rng;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    LowVariance,
    HeavyTail,
    Parallelizable,
}

#[derive(Debug, Clone)]
pub struct SuiteTask {
    pub name: String,
    pub kind: TaskKind,
    pub manifests: ManifestSet,
    pub env: SimEnv,
    pub plan: StrategyPlan,
    pub config: SchedulerConfig<f64>,
}

impl SuiteTask {
    /// What the scheduler is given: usage from one simulated run of the
    /// plan (and of each worker sub-plan) plus the env's distributions.
    pub fn scheduler_inputs(&self) -> (UsagePlan, SchedulerCache<f64>) {
        let usage_of = |program, id| {
            run_plan(
                program,
                &self.manifests,
                &self.env,
                &mut stream(self.config.seed ^ 0x5eed, id),
            )
            .expect("suite plans run")
            .usage(&self.env)
        };
        let sequential = usage_of(&self.plan.program, 0);
        let parallel = (!self.plan.workers.is_empty()).then(|| ParallelSplit {
            num_workers: self.plan.workers.len(),
            per_worker: self
                .plan
                .workers
                .iter()
                .enumerate()
                .map(|(w, p)| usage_of(p, 1 + w as u64))
                .collect(),
            rediscovery: Vec::new(),
            prefix: Vec::new(),
        });
        let usage = UsagePlan {
            task: Some(self.name.clone()),
            sequential,
            parallelizable: parallel.is_some(),
            parallel,
        };
        (usage, self.env.scheduler_cache())
    }
}

fn manifests(names: &[String]) -> ManifestSet {
    ManifestSet::from_manifests(
        names
            .iter()
            .map(|n| ToolManifest::new(n, AbstractState::new(), AbstractState::new())),
    )
    .expect("distinct names")
}

fn low_variance(rng: &mut RngStream) -> LatencyDistribution<f64> {
    let mean = rng.random_range(2.0..12.0);
    if rng.random_bool(0.5) {
        LatencyDistribution::fixed(mean).expect("valid")
    } else {
        // Weibull with shape 8 has a coefficient of variation near 0.15.
        LatencyDistribution::weibull(8.0, mean).expect("valid")
    }
}

fn heavy_tail(rng: &mut RngStream) -> LatencyDistribution<f64> {
    let mean = rng.random_range(15.0..40.0);
    if rng.random_bool(0.5) {
        let shape = rng.random_range(0.5..0.9);
        LatencyDistribution::gamma(shape, mean / shape).expect("valid")
    } else {
        LatencyDistribution::lognormal_from_moments(mean, mean * rng.random_range(1.5..2.5))
            .expect("valid")
    }
}

fn task(seed: u64, index: u64, kind: TaskKind) -> SuiteTask {
    let mut rng = substream(seed, index, 0);
    let n_el = rng.random_range(3..=6);
    let names: Vec<String> = (0..n_el).map(|i| format!("el{i}")).collect();
    let mut env = SimEnv::new(BTreeMap::new());
    env.page_read_s = 5.0;
    env.repeat_latency_s = Some(5.0);
    let heavy_at = rng.random_range(0..n_el);
    for (i, name) in names.iter().enumerate() {
        let dist = match kind {
            TaskKind::HeavyTail if i == heavy_at || rng.random_bool(0.3) => heavy_tail(&mut rng),
            _ => low_variance(&mut rng),
        };
        env = env.with_tool(name, dist, rng.random_bool(0.4), Value::Null);
    }
    let call_list = |ns: &[String]| {
        ns.iter()
            .map(|n| format!("call {n}()\n"))
            .collect::<String>()
    };
    let (program, workers) = match kind {
        TaskKind::Parallelizable => {
            // Independent lookups, each repeating the same navigation.
            let per = rng.random_range(2..=3);
            let n_workers = rng.random_range(3..=4);
            let subs: Vec<String> = (0..n_workers)
                .map(|w| {
                    call_list(
                        &(0..per)
                            .map(|j| names[(w + j) % n_el].clone())
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            let serial = subs.concat();
            let workers = subs
                .iter()
                .map(|s| parse_plan(s).expect("parses"))
                .collect();
            (parse_plan(&serial).expect("parses"), workers)
        }
        _ => {
            let mut text = call_list(&names);
            if rng.random_bool(0.5) {
                text.push_str(&format!("call {}()\n", names[0]));
            }
            (parse_plan(&text).expect("parses"), Vec::new())
        }
    };
    let config = SchedulerConfig {
        n_mc: 1000,
        n_workers: 4,
        delta_p: 20.0,
        delta_h: 5.0,
        c_read: env.page_read_s,
        c_repeat: env.repeat_latency_s.unwrap_or(0.0),
        seed: seed.wrapping_add(index),
    };
    SuiteTask {
        name: format!("{kind:?}-{index}"),
        kind,
        manifests: manifests(&names),
        env,
        plan: StrategyPlan { program, workers },
        config,
    }
}

/// `per_kind` tasks of each kind.
pub fn agreement_suite(seed: u64, per_kind: usize) -> Vec<SuiteTask> {
    let kinds = [
        TaskKind::LowVariance,
        TaskKind::HeavyTail,
        TaskKind::Parallelizable,
    ];
    kinds
        .iter()
        .enumerate()
        .flat_map(|(k, &kind)| {
            (0..per_kind).map(move |i| task(seed, (k * per_kind + i) as u64, kind))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_has_each_kind_and_runs() {
        let suite = agreement_suite(5, 2);
        assert_eq!(suite.len(), 6);
        for t in &suite {
            t.env.validate().unwrap();
            let (usage, cache) = t.scheduler_inputs();
            usage.validate().unwrap();
            for u in &usage.sequential {
                assert!(cache.get(&u.element).is_some());
            }
            assert_eq!(usage.parallelizable, t.kind == TaskKind::Parallelizable);
        }
    }
}
