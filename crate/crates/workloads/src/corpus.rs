//! Generated plan corpus for checking that estimated cost ranks plans the
//! way simulated latency does.
//!
//! Tool calls take about a second and `ai_eval` calls about ten, matching
//! the cached-tool and LLM tiers the cost weights are meant to separate.
//! Plans vary in the number of top-level calls and evals, and in whether
//! they loop over a fetched list with calls or evals inside the loop.

use std::collections::BTreeMap;

use agentjit::distributions::LatencyDistribution;
use agentjit::planlang::{parse_plan, PlanProgram};
use agentjit::protocol::{AbstractState, ManifestSet, ToolManifest, TrackedState};
use agentjit::rng::stream;
use agentjit::simulator::SimEnv;
use rand::Rng;
use serde_json::json;

pub const TOOLS: [&str; 4] = ["fetch_a", "fetch_b", "fetch_c", "fetch_d"];
pub const LIST_LEN: usize = 10;

#[derive(Debug, Clone)]
pub struct CorpusPlan {
    pub text: String,
    pub program: PlanProgram,
}

#[derive(Debug, Clone)]
pub struct CostCorpus {
    pub manifests: ManifestSet,
    pub initial: TrackedState,
    pub env: SimEnv,
    pub plans: Vec<CorpusPlan>,
}

pub fn corpus_manifests() -> ManifestSet {
    ManifestSet::from_manifests(
        TOOLS
            .iter()
            .map(|t| ToolManifest::new(t, AbstractState::new(), AbstractState::new())),
    )
    .expect("distinct tool names")
}

/// Tools draw Gamma(4, 0.25) (mean 1 s); evals draw Gamma(8, 1.25) (mean 10 s).
pub fn corpus_env() -> SimEnv {
    let items: Vec<usize> = (0..LIST_LEN).collect();
    let mut env = SimEnv::new(BTreeMap::new());
    for t in TOOLS {
        env = env.with_tool(
            t,
            LatencyDistribution::gamma(4.0, 0.25).expect("valid gamma"),
            false,
            json!({ "items": items }),
        );
    }
    env.eval_latency = LatencyDistribution::gamma(8.0, 1.25).expect("valid gamma");
    env
}

fn pick<'a>(rng: &mut impl Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

/// Text of one random plan.
pub fn random_plan_text(rng: &mut impl Rng) -> String {
    let mut out = String::new();
    out.push_str(&format!("r0 = call {}()\n", pick(rng, &TOOLS)));
    for i in 1..rng.random_range(1..=4) {
        out.push_str(&format!("r{i} = call {}(k={i})\n", pick(rng, &TOOLS)));
    }
    if rng.random_bool(0.6) {
        let len = rng.random_range(3..=LIST_LEN);
        out.push_str(&format!("for x in r0.items[:{len}] {{\n"));
        for _ in 0..rng.random_range(1..=2) {
            out.push_str(&format!("    call {}(i=x)\n", pick(rng, &TOOLS)));
        }
        if rng.random_bool(0.25) {
            out.push_str("    e = eval \"judge item {i}\"(i=x)\n");
        }
        out.push_str("}\n");
    }
    for j in 0..rng.random_range(0..=2) {
        out.push_str(&format!("s{j} = eval \"summarize part {j}\"(n=r0.items)\n"));
    }
    out.push_str("return len(r0.items)\n");
    out
}

pub fn cost_rank_corpus(seed: u64, n: usize) -> CostCorpus {
    let mut rng = stream(seed, 0);
    let plans = (0..n)
        .map(|_| {
            let text = random_plan_text(&mut rng);
            let program = parse_plan(&text).expect("generated plans parse");
            CorpusPlan { text, program }
        })
        .collect();
    CostCorpus {
        manifests: corpus_manifests(),
        initial: TrackedState::new(),
        env: corpus_env(),
        plans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use agentjit::validator::validate_program;

    #[test]
    fn corpus_is_valid_and_seeded() {
        let a = cost_rank_corpus(3, 20);
        let b = cost_rank_corpus(3, 20);
        for (p, q) in a.plans.iter().zip(&b.plans) {
            assert_eq!(p.text, q.text);
            assert!(
                validate_program(&p.program, &a.manifests, &a.initial).valid,
                "{}",
                p.text
            );
        }
        a.env.validate().unwrap();
    }
}
