//! Loaders for the files under `crates/core/fixtures`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use agentjit::distributions::SchedulerCache;
use agentjit::planlang::{load_plan_any, PlanProgram};
use agentjit::protocol::{ManifestSet, TrackedState};
use agentjit::scheduler::UsagePlan;
use agentjit::simulator::SimEnv;
use serde_json::Value;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn dashdish_dir() -> PathBuf {
    root().join("dashdish")
}

pub fn dashdish_manifests() -> ManifestSet {
    ManifestSet::load_dir(&dashdish_dir().join("manifests")).expect("dashdish manifests load")
}

pub fn dashdish_initial() -> TrackedState {
    let text =
        fs::read_to_string(dashdish_dir().join("initial_state.json")).expect("initial state");
    let values: BTreeMap<String, Value> =
        serde_json::from_str(&text).expect("initial state parses");
    TrackedState::from_concrete(&values)
}

pub fn dashdish_env() -> SimEnv {
    SimEnv::load(&dashdish_dir().join("env.json")).expect("dashdish env loads")
}

/// Text of `plans/<name>` (with extension).
pub fn plan_text(name: &str) -> String {
    fs::read_to_string(dashdish_dir().join("plans").join(name)).expect("plan file")
}

pub fn plan(name: &str) -> PlanProgram {
    load_plan_any(&plan_text(name)).expect("plan parses")
}

pub fn usage(name: &str) -> UsagePlan {
    UsagePlan::load(&root().join("scheduler").join(name)).expect("usage fixture loads")
}

pub fn cache(name: &str) -> SchedulerCache<f64> {
    SchedulerCache::load(&root().join("scheduler").join(name)).expect("cache fixture loads")
}
