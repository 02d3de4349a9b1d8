//! Random manifests with concrete contracts, random plans over them, and
//! call-swap mutants of those plans.
//!
//! Contracts range over two state keys and use concrete, null, any and
//! one-of patterns. Parameter references are left out, so the validator's
//! verdict depends only on state flow, which the simulator replays exactly.

use std::collections::BTreeMap;

use agentjit::distributions::LatencyDistribution;
use agentjit::planlang::{parse_plan, PlanProgram};
use agentjit::protocol::{AbstractState, ManifestSet, StatePattern, ToolManifest, TrackedState};
use agentjit::rng::{substream, RngStream};
use agentjit::simulator::SimEnv;
use rand::Rng;
use serde_json::{json, Value};

const PAGES: [&str; 4] = ["home", "store", "cart", "checkout"];
const MODAL: [&str; 2] = ["open", "closed"];
const N_TOOLS: usize = 8;

/// Plan shape before rendering, kept so mutants can be derived from it.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Call(String),
    For(usize, Vec<Node>),
    If(String, Vec<Node>, Vec<Node>),
    Assign(i64),
}

#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub manifests: ManifestSet,
    pub initial: BTreeMap<String, Value>,
    pub env: SimEnv,
    pub nodes: Vec<Node>,
    pub text: String,
    pub program: PlanProgram,
}

impl FuzzCase {
    pub fn initial_tracked(&self) -> TrackedState {
        TrackedState::from_concrete(&self.initial)
    }
}

fn values(key: &str) -> &'static [&'static str] {
    if key == "page_type" {
        &PAGES
    } else {
        &MODAL
    }
}

fn pre_pattern(rng: &mut RngStream, key: &str) -> Option<StatePattern> {
    let vs = values(key);
    let r: f64 = rng.random();
    Some(if r < 0.45 {
        return None;
    } else if r < 0.8 {
        StatePattern::Concrete(json!(vs[rng.random_range(0..vs.len())]))
    } else if r < 0.88 {
        StatePattern::Any
    } else if r < 0.97 {
        let a = rng.random_range(0..vs.len());
        let b = (a + 1 + rng.random_range(0..vs.len() - 1)) % vs.len();
        StatePattern::OneOf(vec![vs[a].to_string(), vs[b].to_string()])
    } else {
        StatePattern::Null
    })
}

fn post_pattern(rng: &mut RngStream, key: &str) -> Option<StatePattern> {
    let vs = values(key);
    let r: f64 = rng.random();
    Some(if r < 0.4 {
        return None;
    } else if r < 0.88 {
        StatePattern::Concrete(json!(vs[rng.random_range(0..vs.len())]))
    } else if r < 0.93 {
        StatePattern::Any
    } else if r < 0.98 {
        StatePattern::OneOf(vec![vs[0].to_string(), vs[1].to_string()])
    } else {
        StatePattern::Null
    })
}

fn state(
    rng: &mut RngStream,
    gen: fn(&mut RngStream, &str) -> Option<StatePattern>,
) -> AbstractState {
    let mut s = AbstractState::new();
    for key in ["page_type", "modal"] {
        if let Some(p) = gen(rng, key) {
            s = s.with(key, p);
        }
    }
    s
}

pub fn random_manifests(rng: &mut RngStream) -> ManifestSet {
    ManifestSet::from_manifests((0..N_TOOLS).map(|i| {
        let pre = state(rng, pre_pattern);
        let post = state(rng, post_pattern);
        ToolManifest::new(&format!("t{i}"), pre, post)
    }))
    .expect("distinct tool names")
}

/// `in_loop` is the depth of the innermost enclosing loop, whose variable
/// conditions may test.
fn random_block(
    rng: &mut RngStream,
    depth: usize,
    in_loop: Option<usize>,
    budget: &mut usize,
) -> Vec<Node> {
    let mut out = Vec::new();
    let len = rng.random_range(1..=if depth == 0 { 6 } else { 3 });
    for _ in 0..len {
        if *budget == 0 {
            break;
        }
        *budget -= 1;
        let r: f64 = rng.random();
        let node = if depth < 2 && r < 0.15 {
            Node::For(
                rng.random_range(0..=3),
                random_block(rng, depth + 1, Some(depth), budget),
            )
        } else if depth < 2 && r < 0.3 {
            let conds = ["true", "false", "len([1, 2]) == 2", "1 > 2"];
            let cond = if let Some(d) = in_loop.filter(|_| rng.random_bool(0.5)) {
                format!("v{d} > 0")
            } else {
                conds[rng.random_range(0..conds.len())].to_string()
            };
            let then_body = random_block(rng, depth + 1, in_loop, budget);
            let else_body = if rng.random_bool(0.5) {
                random_block(rng, depth + 1, in_loop, budget)
            } else {
                Vec::new()
            };
            Node::If(cond, then_body, else_body)
        } else if r < 0.38 {
            Node::Assign(rng.random_range(0..10))
        } else {
            Node::Call(format!("t{}", rng.random_range(0..N_TOOLS)))
        };
        out.push(node);
    }
    out
}

pub fn render(nodes: &[Node]) -> String {
    let mut out = String::new();
    render_into(nodes, 0, &mut out);
    out
}

fn render_into(nodes: &[Node], depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    for n in nodes {
        match n {
            Node::Call(t) => out.push_str(&format!("{pad}call {t}()\n")),
            Node::Assign(v) => out.push_str(&format!("{pad}a{depth} = {v}\n")),
            Node::For(len, body) => {
                let items: Vec<String> = (0..*len).map(|i| i.to_string()).collect();
                out.push_str(&format!("{pad}for v{depth} in [{}] {{\n", items.join(", ")));
                render_into(body, depth + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            Node::If(cond, then_body, else_body) => {
                out.push_str(&format!("{pad}if {cond} {{\n"));
                render_into(then_body, depth + 1, out);
                if else_body.is_empty() {
                    out.push_str(&format!("{pad}}}\n"));
                } else {
                    out.push_str(&format!("{pad}}} else {{\n"));
                    render_into(else_body, depth + 1, out);
                    out.push_str(&format!("{pad}}}\n"));
                }
            }
        }
    }
}

fn env_for(manifests: &ManifestSet, initial: &BTreeMap<String, Value>) -> SimEnv {
    let mut env = SimEnv::new(initial.clone());
    for name in manifests.names() {
        env = env.with_tool(
            name,
            LatencyDistribution::fixed(1.0).expect("valid"),
            false,
            Value::Null,
        );
    }
    env
}

fn assemble(
    manifests: ManifestSet,
    initial: BTreeMap<String, Value>,
    nodes: Vec<Node>,
) -> FuzzCase {
    let text = render(&nodes);
    let program =
        parse_plan(&text).unwrap_or_else(|e| panic!("generated plan must parse: {e}\n{text}"));
    let env = env_for(&manifests, &initial);
    FuzzCase {
        manifests,
        initial,
        env,
        nodes,
        text,
        program,
    }
}

/// Case `index` of the fuzz stream under `seed`.
pub fn fuzz_case(seed: u64, index: u64) -> FuzzCase {
    let mut rng = substream(seed, index, 0);
    let manifests = random_manifests(&mut rng);
    let initial = BTreeMap::from([
        ("page_type".to_string(), json!("home")),
        ("modal".to_string(), json!("closed")),
    ]);
    let mut budget = 14;
    let nodes = random_block(&mut rng, 0, None, &mut budget);
    assemble(manifests, initial, nodes)
}

fn calls_mut<'a>(nodes: &'a mut [Node], out: &mut Vec<&'a mut String>) {
    for n in nodes {
        match n {
            Node::Call(t) => out.push(t),
            Node::For(_, body) => calls_mut(body, out),
            Node::If(_, a, b) => {
                calls_mut(a, out);
                calls_mut(b, out);
            }
            Node::Assign(_) => {}
        }
    }
}

/// Swap the tools of two call sites that name different tools. `None` when
/// the plan has no such pair.
pub fn call_swap(case: &FuzzCase, rng: &mut RngStream) -> Option<FuzzCase> {
    let mut nodes = case.nodes.clone();
    let mut sites = Vec::new();
    calls_mut(&mut nodes, &mut sites);
    let pairs: Vec<(usize, usize)> = (0..sites.len())
        .flat_map(|i| (i + 1..sites.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| sites[i] != sites[j])
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let (i, j) = pairs[rng.random_range(0..pairs.len())];
    let a = sites[i].clone();
    let b = std::mem::replace(sites[j], a);
    *sites[i] = b;
    Some(assemble(
        case.manifests.clone(),
        case.initial.clone(),
        nodes,
    ))
}

/// The first `n` call-swap mutants of the fuzz stream under `seed`.
pub fn mutants(seed: u64, n: usize) -> Vec<FuzzCase> {
    let mut out = Vec::with_capacity(n);
    let mut index = 0u64;
    while out.len() < n {
        let case = fuzz_case(seed, index);
        if let Some(m) = call_swap(&case, &mut substream(seed, index, 1)) {
            out.push(m);
        }
        index += 1;
    }
    out
}
