//! Property tests for the contract, plan, validator, cost, planner and
//! trace invariants.

use std::collections::BTreeMap;

use agentjit::distributions::LatencyDistribution;
use agentjit::planlang::{build_cfg, parse_plan, PlanProgram, Stmt, StmtKind};
use agentjit::planner::{plan, BernoulliMockGenerator, CorpusGenerator, PlannerConfig};
use agentjit::protocol::{
    apply_post, parse_pattern, render_pattern, satisfies, AbstractState, CallArgs, ManifestSet,
    StatePattern, ToolManifest, TrackedState, TrackedValue,
};
use agentjit::rng::stream;
use agentjit::simulator::{run_plan, SimEnv, SimFailure};
use agentjit::traces::{
    build_scheduler_cache, ingest_records, IngestOptions, TraceRecord, TraceStep,
};
use agentjit::validator::validate_program;
use agentjit::{cost::rank, distributions::SchedulerCache, CostModel64, ExactCostModel, Rational};
use proptest::prelude::*;
use serde_json::json;

const TOOLS: [&str; 4] = ["t0", "t1", "t2", "t3"];

fn free_manifests() -> ManifestSet {
    ManifestSet::from_manifests(
        TOOLS
            .iter()
            .map(|t| ToolManifest::new(t, AbstractState::new(), AbstractState::new())),
    )
    .unwrap()
}

#[derive(Debug, Clone)]
enum Node {
    Call(usize),
    Eval,
    Assign(i64),
    For(u8, Vec<Node>),
    If(bool, Vec<Node>, Vec<Node>),
}

fn node() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        4 => (0..TOOLS.len()).prop_map(Node::Call),
        1 => Just(Node::Eval),
        1 => (0i64..9).prop_map(Node::Assign),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            (0u8..4, prop::collection::vec(inner.clone(), 0..4)).prop_map(|(n, b)| Node::For(n, b)),
            (
                any::<bool>(),
                prop::collection::vec(inner.clone(), 0..3),
                prop::collection::vec(inner, 0..3)
            )
                .prop_map(|(c, a, b)| Node::If(c, a, b)),
        ]
    })
}

fn program_nodes() -> impl Strategy<Value = Vec<Node>> {
    prop::collection::vec(node(), 0..7)
}

fn render(nodes: &[Node], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for n in nodes {
        match n {
            Node::Call(t) => out.push_str(&format!("{pad}r = call {}(k={depth})\n", TOOLS[*t])),
            Node::Eval => out.push_str(&format!("{pad}e = eval \"judge {{k}}\"(k={depth})\n")),
            Node::Assign(v) => out.push_str(&format!("{pad}a = {v} + 1\n")),
            Node::For(n, body) => {
                let xs: Vec<String> = (0..*n).map(|i| i.to_string()).collect();
                out.push_str(&format!("{pad}for v in [{}] {{\n", xs.join(", ")));
                render(body, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            Node::If(c, a, b) => {
                out.push_str(&format!("{pad}if {c} {{\n"));
                render(a, depth + 1, out);
                out.push_str(&format!("{pad}}} else {{\n"));
                render(b, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

fn text_of(nodes: &[Node]) -> String {
    let mut out = String::new();
    render(nodes, 0, &mut out);
    out
}

/// Loop depth of every call statement, in source order, by walking the tree.
fn call_depths(stmts: &[Stmt], depth: u32, out: &mut Vec<u32>) {
    for s in stmts {
        match &s.kind {
            StmtKind::ToolCall { .. } | StmtKind::AiEval { .. } => out.push(depth),
            StmtKind::For { body, .. } => call_depths(body, depth + 1, out),
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                call_depths(then_body, depth, out);
                call_depths(else_body, depth, out);
            }
            _ => {}
        }
    }
}

fn pattern_text() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        Just("*".to_string()),
        "[a-z]{1,6}",
        "\\$[a-z_]{1,6}",
        "[a-z]{1,4}(\\|[a-z]{1,4}){1,3}",
        "[ -~]{0,8}",
    ]
}

fn concrete_state(max: usize) -> impl Strategy<Value = AbstractState> {
    prop::collection::btree_map("k[0-3]", "[a-c]", 0..=max).prop_map(|m| {
        AbstractState(
            m.into_iter()
                .map(|(k, v)| (k, StatePattern::Concrete(json!(v))))
                .collect(),
        )
    })
}

fn tracked_from(state: &AbstractState) -> TrackedState {
    let mut t = TrackedState::new();
    for (k, p) in state.iter() {
        if let StatePattern::Concrete(v) = p {
            t.insert(k, TrackedValue::Known(v.clone()));
        }
    }
    t
}

fn no_args() -> CallArgs {
    BTreeMap::new()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pattern_text_round_trips_through_canonical_form(t in pattern_text()) {
        let p = parse_pattern(&t);
        let canonical = render_pattern(&p);
        prop_assert_eq!(parse_pattern(&canonical), p);
        prop_assert_eq!(render_pattern(&parse_pattern(&canonical)), canonical);
    }

    #[test]
    fn satisfaction_survives_unrelated_extension(
        req in concrete_state(3),
        extra in prop::collection::btree_map("x[0-3]", "[a-c]", 0..3),
    ) {
        let s = tracked_from(&req);
        prop_assert!(satisfies(&s, &req, &no_args()).is_ok());
        let mut wider = s.clone();
        for (k, v) in extra {
            wider.insert(&k, TrackedValue::Known(json!(v)));
        }
        prop_assert!(satisfies(&wider, &req, &no_args()).is_ok());
    }

    #[test]
    fn post_that_covers_pre_composes(
        post in concrete_state(4),
        keep in prop::collection::vec(any::<bool>(), 4),
        start in concrete_state(4),
    ) {
        let pre = AbstractState(
            post.iter().zip(keep.iter().cycle()).filter(|(_, k)| **k).map(|((k, p), _)| (k.clone(), p.clone())).collect(),
        );
        let after = apply_post(&tracked_from(&start), &post, &no_args()).unwrap();
        prop_assert!(satisfies(&after, &pre, &no_args()).is_ok());
    }

    #[test]
    fn concrete_post_is_idempotent(
        post in prop::collection::btree_map("k[0-3]", prop_oneof![
            "[a-c]".prop_map(|v| StatePattern::Concrete(json!(v))),
            Just(StatePattern::Null),
            Just(StatePattern::OneOf(vec!["a".into(), "b".into()])),
        ], 0..4),
        start in concrete_state(4),
    ) {
        let post = AbstractState(post);
        let once = apply_post(&tracked_from(&start), &post, &no_args()).unwrap();
        let twice = apply_post(&once, &post, &no_args()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn parse_render_is_identity_on_ir(nodes in program_nodes()) {
        let program = parse_plan(&text_of(&nodes)).unwrap();
        prop_assert_eq!(parse_plan(&program.render()).unwrap(), program);
    }

    #[test]
    fn cfg_call_sites_match_ir_calls_and_depths(nodes in program_nodes()) {
        let program = parse_plan(&text_of(&nodes)).unwrap();
        let mut depths = Vec::new();
        call_depths(&program.stmts, 0, &mut depths);
        let cfg = build_cfg(&program);
        let mut sites: Vec<_> = cfg.call_sites().collect();
        sites.sort_by_key(|s| s.index);
        prop_assert_eq!(sites.len(), depths.len());
        prop_assert_eq!(sites.iter().map(|s| s.depth).collect::<Vec<_>>(), depths);
    }

    #[test]
    fn validator_reports_are_deterministic(nodes in program_nodes()) {
        let program = parse_plan(&text_of(&nodes)).unwrap();
        let m = free_manifests();
        let a = validate_program(&program, &m, &TrackedState::new());
        let b = validate_program(&program, &m, &TrackedState::new());
        prop_assert!(a.valid);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cost_argmin_is_scale_invariant(
        plans in prop::collection::vec(program_nodes(), 1..6),
        num in 1i64..50,
        den in 1i64..50,
    ) {
        let lambda = Rational::new(num.into(), den.into());
        let base = ExactCostModel::default();
        let scaled = ExactCostModel::new(base.c_tool.clone() * &lambda, base.c_eval.clone() * &lambda, base.gamma.clone());
        let cfgs: Vec<_> = plans.iter().map(|n| build_cfg(&parse_plan(&text_of(n)).unwrap())).collect();
        let a: Vec<Rational> = cfgs.iter().map(|c| base.estimate_cost(c).total).collect();
        let b: Vec<Rational> = cfgs.iter().map(|c| scaled.estimate_cost(c).total).collect();
        prop_assert_eq!(rank(&a).unwrap(), rank(&b).unwrap());
    }

    #[test]
    fn adding_a_call_strictly_raises_cost(nodes in program_nodes(), extra in prop_oneof![(0..TOOLS.len()).prop_map(Node::Call), Just(Node::Eval)]) {
        let model = ExactCostModel::default();
        let before = model.estimate_cost(&build_cfg(&parse_plan(&text_of(&nodes)).unwrap())).total;
        let mut more = nodes.clone();
        more.push(extra);
        let after = model.estimate_cost(&build_cfg(&parse_plan(&text_of(&more)).unwrap())).total;
        prop_assert!(after > before);
    }
}

fn chain_manifests(links: &[(Option<usize>, Option<usize>)]) -> ManifestSet {
    const PAGES: [&str; 3] = ["home", "store", "cart"];
    ManifestSet::from_manifests(links.iter().enumerate().map(|(i, (pre, post))| {
        let mut p = AbstractState::new();
        let mut q = AbstractState::new();
        if let Some(v) = pre {
            p = p.with("page", StatePattern::Concrete(json!(PAGES[*v])));
        }
        if let Some(v) = post {
            q = q.with("page", StatePattern::Concrete(json!(PAGES[*v])));
        }
        ToolManifest::new(&format!("c{i}"), p, q)
    }))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn accepted_concrete_chains_never_fail_at_runtime(
        links in prop::collection::vec((prop::option::of(0usize..3), prop::option::of(0usize..3)), 4),
        calls in prop::collection::vec(0usize..4, 0..8),
        loop_at in prop::option::of(0usize..8),
    ) {
        let manifests = chain_manifests(&links);
        let mut text = String::new();
        for (i, c) in calls.iter().enumerate() {
            if loop_at == Some(i) {
                text.push_str(&format!("for v in [1, 2] {{ call c{c}() }}\n"));
            } else {
                text.push_str(&format!("call c{c}()\n"));
            }
        }
        let program = parse_plan(&text).unwrap();
        let initial = BTreeMap::from([("page".to_string(), json!("home"))]);
        let report = validate_program(&program, &manifests, &TrackedState::from_concrete(&initial));
        let mut env = SimEnv::new(initial);
        for name in manifests.names() {
            env = env.with_tool(name, LatencyDistribution::fixed(1.0).unwrap(), false, json!(null));
        }
        let run = run_plan(&program, &manifests, &env, &mut stream(0, 0)).unwrap();
        let failed = matches!(run.failure, Some(SimFailure::RuntimePreconditionFailure { .. }));
        prop_assert!(!(report.valid && failed), "accepted but failed:\n{}", text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn instant_valid_generator_respects_early_stop(n in 1usize..10, k in 1usize..12, m in 1usize..4, seed in any::<u64>()) {
        let g = BernoulliMockGenerator::new(1.0, LatencyDistribution::fixed(0.0).unwrap());
        let cfg = PlannerConfig::<f64> { n_workers: n, k_valid: k, m_max: m, seed, ..Default::default() };
        let out = plan("t", &free_manifests(), &TrackedState::new(), &g, &cfg);
        prop_assert!(out.attempts <= n);
        prop_assert!(out.candidates.len() >= k.min(n));
        prop_assert!(out.candidates.len() <= n * m);
    }

    #[test]
    fn planner_is_seed_deterministic(p in 0.0f64..1.0, n in 1usize..8, k in 1usize..6, m in 1usize..4, seed in any::<u64>()) {
        let g = BernoulliMockGenerator::new(p, LatencyDistribution::gamma(2.0, 1.0).unwrap());
        let cfg = PlannerConfig::<f64> { n_workers: n, k_valid: k, m_max: m, seed, ..Default::default() };
        let a = plan("t", &free_manifests(), &TrackedState::new(), &g, &cfg).to_json_string();
        let b = plan("t", &free_manifests(), &TrackedState::new(), &g, &cfg).to_json_string();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn selected_plan_has_minimum_cost(plans in prop::collection::vec(program_nodes(), 1..8), k in 1usize..10) {
        let g = CorpusGenerator::new(plans.iter().map(|n| text_of(n)).collect());
        let cfg = PlannerConfig::<f64> { k_valid: k, ..Default::default() };
        let out = plan("t", &free_manifests(), &TrackedState::new(), &g, &cfg);
        let min = out.candidates.iter().map(|c| c.cost).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(out.selected.unwrap().cost, min);
    }

    #[test]
    fn cache_build_is_idempotent_and_round_trips(
        lat in prop::collection::vec(prop::collection::vec(0.5f64..60.0, 12..40), 1..4),
    ) {
        let records: Vec<TraceRecord> = lat.iter().enumerate().map(|(e, xs)| TraceRecord {
            task_id: format!("task{e}"),
            steps: xs.iter().enumerate().map(|(i, &l)| TraceStep {
                index: i as u32,
                element: format!("el{e}"),
                page: "main".into(),
                latency_s: l,
                success: true,
                is_modal: false,
                modal_name: None,
            }).collect(),
        }).collect();
        let build = || {
            let obs = ingest_records(&records, IngestOptions::default());
            build_scheduler_cache::<f64>(&obs).unwrap()
        };
        let text = build().to_json_string();
        prop_assert_eq!(&text, &build().to_json_string());
        let back = SchedulerCache::<f64>::from_json_str(&text).unwrap();
        prop_assert_eq!(back, build());
    }
}

#[test]
fn f64_and_exact_models_agree_on_ranking() {
    let texts = [
        "call t0()",
        "call t0()\ne = eval \"x\"()",
        "for v in [1] { call t1() }",
    ];
    let programs: Vec<PlanProgram> = texts.iter().map(|t| parse_plan(t).unwrap()).collect();
    let exact: Vec<Rational> = programs
        .iter()
        .map(|p| ExactCostModel::default().estimate_cost(&build_cfg(p)).total)
        .collect();
    let float: Vec<f64> = programs
        .iter()
        .map(|p| CostModel64::default().estimate_cost(&build_cfg(p)).total)
        .collect();
    assert_eq!(rank(&exact).unwrap(), rank(&float).unwrap());
}
