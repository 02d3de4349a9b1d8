//! End-to-end runs of the `agentjit` binary against the core fixtures.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn dashdish(rel: &str) -> String {
    fixtures().join("dashdish").join(rel).display().to_string()
}

fn scheduler(rel: &str) -> String {
    fixtures().join("scheduler").join(rel).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentjit"))
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn validate_rejects_plan_a_with_exit_1() {
    let out = run(&[
        "validate",
        "--plan",
        &dashdish("plans/plan_a.plan"),
        "--manifests",
        &dashdish("manifests"),
        "--initial-state",
        &dashdish("initial_state.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["report"]["valid"], false);
    let v = &doc["report"]["violations"][0];
    assert_eq!(
        (v["at"].as_str(), v["line"].as_u64()),
        (Some("get_store_details"), Some(6))
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("PreconditionUnmet"));
}

#[test]
fn validate_accepts_plan_c() {
    let out = run(&[
        "validate",
        "--plan",
        &dashdish("plans/plan_c.plan"),
        "--manifests",
        &dashdish("manifests"),
        "--initial-state",
        &dashdish("initial_state.json"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["report"]["valid"], true);
}

#[test]
fn cost_of_plans_b_and_c() {
    let c = json(&run(&["cost", "--plan", &dashdish("plans/plan_c.plan")]));
    assert_eq!(c["total_exact"], "1/5");
    assert!((c["total"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    let b = json(&run(&["cost", "--plan", &dashdish("plans/plan_b.plan")]));
    assert_eq!(b["total_exact"], "101/10");
    // Doubling c_tool doubles the tool-only plan's cost.
    let c2 = json(&run(&[
        "cost",
        "--plan",
        &dashdish("plans/plan_c.plan"),
        "--c-tool",
        "0.2",
    ]));
    assert_eq!(c2["total_exact"], "2/5");
}

#[test]
fn schedule_picks_hedge_for_the_checkout_flow() {
    let args = [
        "schedule",
        "--usage",
        &scheduler("ex2_usage.json"),
        "--cache",
        &scheduler("ex2_cache.json"),
        "--seed",
        "7",
    ];
    let first = run(&args);
    assert_eq!(first.status.code(), Some(0));
    let doc = json(&first);
    assert_eq!(doc["selected"], "hedge");
    assert_eq!(doc["config"]["seed"], 7);
    assert_eq!(first.stdout, run(&args).stdout);

    let ex1 = json(&run(&[
        "schedule",
        "--usage",
        &scheduler("ex1_usage.json"),
        "--cache",
        &scheduler("ex1_cache.json"),
        "--seed",
        "7",
    ]));
    assert_eq!(ex1["selected"], "serial");
}

#[test]
fn config_file_sets_values_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("agentjit.toml");
    fs::write(&cfg, "seed = 5\n[scheduler]\nn_mc = 50\ndelta_h = 6.5\n").unwrap();
    let cfg = cfg.display().to_string();
    let base = [
        "schedule",
        "--usage",
        &scheduler("ex2_usage.json"),
        "--cache",
        &scheduler("ex2_cache.json"),
        "--config",
        &cfg,
    ];
    let doc = json(&run(&base));
    assert_eq!(
        (
            doc["config"]["seed"].as_u64(),
            doc["config"]["n_mc"].as_u64()
        ),
        (Some(5), Some(50))
    );
    assert_eq!(doc["config"]["delta_h"], 6.5);
    let mut args = base.to_vec();
    args.extend(["--n-mc", "80"]);
    assert_eq!(json(&run(&args))["config"]["n_mc"], 80);
}

#[test]
fn plan_over_the_corpus_is_deterministic() {
    let args = [
        "plan",
        "--task",
        "count stores with few reviews",
        "--manifests",
        &dashdish("manifests"),
        "--initial-state",
        &dashdish("initial_state.json"),
        "--generator",
        &format!("corpus:{}", dashdish("plans")),
        "--k",
        "2",
        "--seed",
        "3",
    ];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0));
    let doc = json(&a);
    assert_eq!(doc["selected"]["cost"], 0.2);
    assert!(!doc["rejected"].as_array().unwrap().is_empty());
    assert_eq!(a.stdout, run(&args).stdout);
}

#[test]
fn simulate_and_passk() {
    let sim = json(&run(&[
        "simulate",
        "--plan",
        &dashdish("plans/plan_c.plan"),
        "--env",
        &dashdish("env.json"),
        "--manifests",
        &dashdish("manifests"),
        "--trials",
        "50",
        "--seed",
        "1",
    ]));
    assert_eq!(sim["ok_rate"], 1.0);
    assert!(sim["min_s"].as_f64().unwrap() <= sim["mean_s"].as_f64().unwrap());

    let p = run(&[
        "passk", "--n", "10", "--c", "3", "--k", "1,2", "--exact", "--csv",
    ]);
    assert_eq!(
        String::from_utf8(p.stdout).unwrap(),
        "metric,x,value\npass_at_k,1,3/10\npass_at_k,2,8/15\n"
    );
}

#[test]
fn fit_writes_a_cache_the_scheduler_reads() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = serde_json::json!({
        "task_id": "t",
        "steps": [
            {"index": 0, "element": "button", "page": "main", "latency_s": 2.0, "success": true},
        ],
    });
    let mut files = Vec::new();
    for (i, lat) in [2.0, 2.5, 3.1, 1.8, 2.2].iter().enumerate() {
        let mut t = trace.clone();
        t["steps"][0]["latency_s"] = (*lat).into();
        let p = tmp.path().join(format!("t{i}.json"));
        fs::write(&p, t.to_string()).unwrap();
        files.push(p.display().to_string());
    }
    let out = tmp.path().join("cache.json");
    let mut args = vec!["fit", "--out", out.to_str().unwrap()];
    args.extend(files.iter().map(String::as_str));
    let r = run(&args);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let cache: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(cache.to_string().contains("button"));
}

#[test]
fn help_lists_hyperparameter_defaults() {
    let plan = String::from_utf8(run(&["plan", "--help"]).stdout).unwrap();
    for d in [
        "[default: 32]",
        "[default: 8]",
        "[default: 1]",
        "[default: 0.1]",
        "[default: 10.0]",
        "[default: 10]",
    ] {
        assert!(plan.contains(d), "plan --help lacks {d}");
    }
    let sched = String::from_utf8(run(&["schedule", "--help"]).stdout).unwrap();
    for d in [
        "[default: 1000]",
        "[default: 4]",
        "[default: 20]",
        "[default: 5]",
        "[default: 0]",
    ] {
        assert!(sched.contains(d), "schedule --help lacks {d}");
    }
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(run(&["schedule"]).status.code(), Some(2));
    assert_eq!(
        run(&["cost", "--plan", "/nonexistent.plan"]).status.code(),
        Some(2)
    );
    let bad = run(&[
        "plan",
        "--task",
        "x",
        "--manifests",
        &dashdish("manifests"),
        "--generator",
        "mock:p=1.5",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("probability"));
}
