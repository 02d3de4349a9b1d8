//! `agentjit` command-line front end.
//!
//! Machine-readable output goes to stdout, diagnostics to stderr. Exit codes:
//! 0 success, 1 plan rejected by `validate`, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use agentjit::distributions::{LatencyDistribution, SchedulerCache};
use agentjit::metrics::{pass_at_k, pass_curves, RunRecord};
use agentjit::planlang::{build_cfg, load_plan_any, PlanProgram};
use agentjit::planner::{
    plan, BernoulliMockGenerator, CorpusGenerator, PlanGenerator, PlannerConfig,
};
use agentjit::protocol::{ManifestSet, TrackedState};
use agentjit::scheduler::{select_for_usage, SchedulerConfig, Strategy, UsagePlan};
use agentjit::simulator::{run_strategy, SimEnv, StrategyPlan};
use agentjit::traces::{build_scheduler_cache, ingest, IngestOptions};
use agentjit::validator::validate_program;
use agentjit::{CostModel64, Rational, SCHEMA_VERSION};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(
    name = "agentjit",
    version,
    about = "Validate, cost, plan, schedule and simulate tool-using agent plans"
)]
struct Cli {
    /// TOML or JSON file with `seed`, `[planner]` and `[scheduler]` keys.
    /// Command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a plan's state flow and argument types against tool manifests.
    Validate(ValidateArgs),
    /// Loop-depth weighted cost of a plan.
    Cost(CostArgs),
    /// Generate candidate plans, validate them and select the cheapest.
    Plan(PlanArgs),
    /// Pick serial, parallel or hedged execution by Monte Carlo estimation.
    Schedule(ScheduleArgs),
    /// Fit per-element latency distributions from trace files.
    Fit(FitArgs),
    /// Run a plan in the discrete-event simulator.
    Simulate(SimulateArgs),
    /// Pass@k and Pass@t from run records, or Pass@k from counts.
    Passk(PasskArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct CostFlags {
    /// Weight of a tool call [default: 0.1]
    #[arg(long)]
    c_tool: Option<f64>,
    /// Weight of an ai_eval call [default: 10.0]
    #[arg(long)]
    c_eval: Option<f64>,
    /// Loop nesting penalty [default: 10]
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Plan file (PlanLang text or JSON IR).
    #[arg(long)]
    plan: PathBuf,
    /// Directory with one manifest JSON per tool.
    #[arg(long)]
    manifests: PathBuf,
    /// JSON object with the initial concrete state [default: empty state]
    #[arg(long)]
    initial_state: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    weights: CostFlags,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Task description handed to the generator.
    #[arg(long)]
    task: String,
    #[arg(long)]
    manifests: PathBuf,
    #[arg(long)]
    initial_state: Option<PathBuf>,
    /// `corpus:DIR` cycles through plan files; `mock:p=P[,shape=K,scale=S]`
    /// returns a valid plan with probability P after a Gamma(K, S) delay.
    #[arg(long)]
    generator: String,
    /// Valid candidates to collect before stopping [default: 32]
    #[arg(long)]
    k: Option<usize>,
    /// Concurrent generation workers [default: 8]
    #[arg(long)]
    workers: Option<usize>,
    /// Attempts per worker [default: 1]
    #[arg(long)]
    m_max: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    weights: CostFlags,
}

#[derive(Args, Debug, Default, Clone)]
struct SchedulerFlags {
    /// Monte Carlo trials [default: 1000]
    #[arg(long)]
    n_mc: Option<usize>,
    /// Workers for parallel and hedged execution [default: 4]
    #[arg(long)]
    workers: Option<usize>,
    /// Parallel overhead in seconds [default: 20]
    #[arg(long)]
    delta_p: Option<f64>,
    /// Hedge overhead in seconds [default: 5]
    #[arg(long)]
    delta_h: Option<f64>,
    /// Page read cost in seconds [default: 5]
    #[arg(long)]
    c_read: Option<f64>,
    /// Cost of a repeated interaction in seconds [default: 5]
    #[arg(long)]
    c_repeat: Option<f64>,
    /// Master seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    /// Task id, for the output only [default: the usage file's task]
    #[arg(long)]
    task: Option<String>,
    /// Usage plan JSON.
    #[arg(long)]
    usage: PathBuf,
    /// Scheduler cache JSON.
    #[arg(long)]
    cache: PathBuf,
    #[command(flatten)]
    sched: SchedulerFlags,
    /// Print a text table instead of JSON.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Trace JSON files.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Where to write the cache [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also fit steps that did not succeed.
    #[arg(long)]
    include_failures: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum StrategyArg {
    Serial,
    Parallel,
    Hedge,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Serial => Strategy::Serial,
            StrategyArg::Parallel => Strategy::Parallel,
            StrategyArg::Hedge => Strategy::Hedge,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Simulator environment JSON.
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    manifests: PathBuf,
    #[arg(long, value_enum, default_value = "serial")]
    strategy: StrategyArg,
    /// Sub-plan for one parallel worker; repeat per worker.
    #[arg(long = "worker-plan")]
    worker_plans: Vec<PathBuf>,
    /// Number of simulated executions.
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[command(flatten)]
    sched: SchedulerFlags,
}

#[derive(Args, Debug)]
struct PasskArgs {
    /// JSON array of `{valid, latency_s}` records.
    #[arg(long, conflicts_with_all = ["n", "c"])]
    records: Option<PathBuf>,
    /// Total samples, with --c, for the closed form alone.
    #[arg(long, requires = "c")]
    n: Option<u64>,
    /// Valid samples among --n.
    #[arg(long, requires = "n")]
    c: Option<u64>,
    /// Comma-separated k values [default: 1]
    #[arg(long, value_delimiter = ',')]
    k: Vec<u64>,
    /// Comma-separated latency budgets in seconds.
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
    /// Parallel planner workers for Pass@t [default: 8]
    #[arg(long)]
    n_parallel: Option<u32>,
    /// Print CSV instead of JSON.
    #[arg(long)]
    csv: bool,
    /// Compute Pass@k in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    planner: PlannerSection,
    scheduler: SchedulerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlannerSection {
    k_valid: Option<usize>,
    m_max: Option<usize>,
    n_workers: Option<usize>,
    c_tool: Option<f64>,
    c_eval: Option<f64>,
    gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SchedulerSection {
    n_mc: Option<usize>,
    n_workers: Option<usize>,
    delta_p: Option<f64>,
    delta_h: Option<f64>,
    c_read: Option<f64>,
    c_repeat: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

/// Outcome of a subcommand that completed: the document to print and the
/// exit code.
struct Output {
    text: String,
    code: u8,
}

fn json_out(mut doc: Value) -> Output {
    if let Value::Object(map) = &mut doc {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    Output {
        text: serde_json::to_string_pretty(&doc).expect("json") + "\n",
        code: 0,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_plan(path: &Path) -> Result<PlanProgram> {
    load_plan_any(&read(path)?).with_context(|| format!("loading plan {}", path.display()))
}

fn load_manifests(dir: &Path) -> Result<ManifestSet> {
    ManifestSet::load_dir(dir).with_context(|| format!("loading manifests from {}", dir.display()))
}

fn load_initial(path: Option<&Path>) -> Result<TrackedState> {
    let Some(path) = path else {
        return Ok(TrackedState::new());
    };
    let values: BTreeMap<String, Value> = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(TrackedState::from_concrete(&values))
}

/// Exact value of a decimal literal such as `0.1`.
fn decimal_rational(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        bail!("weight {x} is not finite");
    }
    let text = format!("{}", x.abs());
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let den = format!("1{}", "0".repeat(frac.len()));
    let sign = if x < 0.0 { "-" } else { "" };
    Rational::from_str(&format!("{sign}{int}{frac}/{den}")).map_err(|e| anyhow!("weight {x}: {e}"))
}

fn cost_model(flags: &CostFlags, file: &PlannerSection) -> CostModel64 {
    let d = CostModel64::default();
    CostModel64::new(
        flags.c_tool.or(file.c_tool).unwrap_or(d.c_tool),
        flags.c_eval.or(file.c_eval).unwrap_or(d.c_eval),
        flags.gamma.or(file.gamma).unwrap_or(d.gamma),
    )
}

fn scheduler_config(flags: &SchedulerFlags, file: &FileConfig) -> Result<SchedulerConfig<f64>> {
    let d = SchedulerConfig::<f64>::default();
    let s = &file.scheduler;
    let cfg = SchedulerConfig {
        n_mc: flags.n_mc.or(s.n_mc).unwrap_or(d.n_mc),
        n_workers: flags.workers.or(s.n_workers).unwrap_or(d.n_workers),
        delta_p: flags.delta_p.or(s.delta_p).unwrap_or(d.delta_p),
        delta_h: flags.delta_h.or(s.delta_h).unwrap_or(d.delta_h),
        c_read: flags.c_read.or(s.c_read).unwrap_or(d.c_read),
        c_repeat: flags.c_repeat.or(s.c_repeat).unwrap_or(d.c_repeat),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_validate(a: &ValidateArgs) -> Result<Output> {
    let program = load_plan(&a.plan)?;
    let manifests = load_manifests(&a.manifests)?;
    let report = validate_program(
        &program,
        &manifests,
        &load_initial(a.initial_state.as_deref())?,
    );
    for v in report.hard_violations() {
        eprintln!("{}: {v}", a.plan.display());
    }
    let mut out = json_out(json!({ "plan": a.plan, "report": report }));
    out.code = if report.valid { 0 } else { 1 };
    Ok(out)
}

fn cmd_cost(a: &CostArgs, file: &FileConfig) -> Result<Output> {
    let cfg = build_cfg(&load_plan(&a.plan)?);
    let model = cost_model(&a.weights, &file.planner);
    let exact_model = agentjit::ExactCostModel::new(
        decimal_rational(model.c_tool)?,
        decimal_rational(model.c_eval)?,
        decimal_rational(model.gamma)?,
    );
    let est = model.estimate_cost(&cfg);
    let exact = exact_model.estimate_cost(&cfg);
    let per_call: Vec<Value> = est
        .per_call
        .iter()
        .zip(&exact.per_call)
        .map(|(c, e)| {
            json!({
                "call_index": c.call_index,
                "label": c.label,
                "depth": c.depth,
                "contribution": c.contribution,
                "contribution_exact": e.contribution.to_string(),
            })
        })
        .collect();
    Ok(json_out(json!({
        "plan": a.plan,
        "model": model,
        "total": est.total,
        "total_exact": exact.total.to_string(),
        "per_call": per_call,
    })))
}

fn parse_generator(arg: &str) -> Result<Box<dyn PlanGenerator>> {
    if let Some(dir) = arg.strip_prefix("corpus:") {
        let g = CorpusGenerator::load_dir(Path::new(dir))
            .with_context(|| format!("reading corpus {dir}"))?;
        if g.plans.is_empty() {
            bail!("corpus directory {dir} has no .plan or .json files");
        }
        return Ok(Box::new(g));
    }
    if let Some(params) = arg.strip_prefix("mock:") {
        let (mut p, mut shape, mut scale) = (None, 2.0, 1.5);
        for kv in params.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("expected key=value in `{kv}`"))?;
            let v: f64 = v.parse().with_context(|| format!("value of `{k}`"))?;
            match k {
                "p" => p = Some(v),
                "shape" => shape = v,
                "scale" => scale = v,
                _ => bail!("unknown mock generator key `{k}`"),
            }
        }
        let p = p.ok_or_else(|| anyhow!("mock generator needs p=<probability>"))?;
        if !(0.0..=1.0).contains(&p) {
            bail!("p={p} is not a probability");
        }
        return Ok(Box::new(BernoulliMockGenerator::new(
            p,
            LatencyDistribution::gamma(shape, scale)?,
        )));
    }
    bail!("generator must be `corpus:DIR` or `mock:p=P`, got `{arg}`")
}

fn cmd_plan(a: &PlanArgs, file: &FileConfig) -> Result<Output> {
    let manifests = load_manifests(&a.manifests)?;
    let initial = load_initial(a.initial_state.as_deref())?;
    let generator = parse_generator(&a.generator)?;
    let d = PlannerConfig::<f64>::default();
    let p = &file.planner;
    let cfg = PlannerConfig {
        n_workers: a.workers.or(p.n_workers).unwrap_or(d.n_workers),
        k_valid: a.k.or(p.k_valid).unwrap_or(d.k_valid),
        m_max: a.m_max.or(p.m_max).unwrap_or(d.m_max),
        cost_model: cost_model(&a.weights, p),
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
    };
    if cfg.n_workers == 0 || cfg.k_valid == 0 || cfg.m_max == 0 {
        bail!("workers, k and m-max must be at least 1");
    }
    let outcome = plan(&a.task, &manifests, &initial, generator.as_ref(), &cfg);
    match &outcome.selected {
        Some(s) => eprintln!(
            "selected plan from worker {} at cost {}",
            s.worker_id, s.cost
        ),
        None => eprintln!("no valid plan among {} attempts", outcome.attempts),
    }
    Ok(Output {
        text: outcome.to_json_string(),
        code: 0,
    })
}

fn cmd_schedule(a: &ScheduleArgs, file: &FileConfig) -> Result<Output> {
    let usage = UsagePlan::load(&a.usage)?;
    let cache = SchedulerCache::<f64>::load(&a.cache)?;
    let cfg = scheduler_config(&a.sched, file)?;
    let sel = select_for_usage(&usage, &cache, &cfg)?;
    let task = a.task.clone().or(usage.task.clone());
    if a.table {
        let mut text = format!("{:<10} {:>12} {:>10}\n", "strategy", "mean_s", "win_rate");
        for e in &sel.estimates {
            text.push_str(&format!(
                "{:<10} {:>12.2} {:>9.1}%\n",
                e.strategy.to_string(),
                e.mean_s,
                100.0 * e.win_rate
            ));
        }
        text.push_str(&format!("selected: {}\n", sel.selected));
        return Ok(Output { text, code: 0 });
    }
    Ok(json_out(json!({
        "task": task,
        "selected": sel.selected,
        "estimates": sel.estimates,
        "config": cfg,
    })))
}

fn cmd_fit(a: &FitArgs) -> Result<Output> {
    let obs = ingest(
        &a.traces,
        IngestOptions {
            include_failures: a.include_failures,
        },
    )?;
    let cache = build_scheduler_cache::<f64>(&obs)?;
    eprintln!(
        "fitted {} elements from {} records ({} steps, {} excluded)",
        cache.elements.len(),
        obs.n_records,
        obs.n_steps,
        obs.n_excluded
    );
    match &a.out {
        Some(path) => {
            cache.save(path)?;
            Ok(json_out(
                json!({ "out": path, "elements": cache.elements.keys().collect::<Vec<_>>() }),
            ))
        }
        None => Ok(Output {
            text: cache.to_json_string(),
            code: 0,
        }),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

fn cmd_simulate(a: &SimulateArgs, file: &FileConfig) -> Result<Output> {
    let env = SimEnv::load(&a.env)?;
    let manifests = load_manifests(&a.manifests)?;
    let sp = StrategyPlan {
        program: load_plan(&a.plan)?,
        workers: a
            .worker_plans
            .iter()
            .map(|p| load_plan(p))
            .collect::<Result<_>>()?,
    };
    let strategy: Strategy = a.strategy.into();
    if strategy == Strategy::Parallel && sp.workers.is_empty() {
        bail!("--strategy parallel needs at least one --worker-plan");
    }
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let cfg = scheduler_config(&a.sched, file)?;
    let mut lat = Vec::with_capacity(a.trials as usize);
    let mut ok = 0u64;
    for t in 0..a.trials {
        let r = run_strategy(&sp, strategy, &manifests, &env, &cfg, t)?;
        ok += u64::from(r.ok);
        lat.push(r.latency_s);
    }
    let mean = lat.iter().sum::<f64>() / lat.len() as f64;
    lat.sort_by(f64::total_cmp);
    Ok(json_out(json!({
        "strategy": strategy,
        "trials": a.trials,
        "seed": cfg.seed,
        "ok_rate": ok as f64 / a.trials as f64,
        "mean_s": mean,
        "p50_s": quantile(&lat, 0.5),
        "p95_s": quantile(&lat, 0.95),
        "min_s": lat[0],
        "max_s": lat[lat.len() - 1],
    })))
}

fn cmd_passk(a: &PasskArgs) -> Result<Output> {
    let ks = if a.k.is_empty() { vec![1] } else { a.k.clone() };
    if let (Some(n), Some(c)) = (a.n, a.c) {
        let rows: Vec<Value> = ks
            .iter()
            .map(|&k| -> Result<Value> {
                Ok(if a.exact {
                    let v: Rational = pass_at_k(n, c, k)?;
                    json!({"metric": "pass_at_k", "x": k, "value": v.to_string()})
                } else {
                    let v: f64 = pass_at_k(n, c, k)?;
                    json!({"metric": "pass_at_k", "x": k, "value": v})
                })
            })
            .collect::<Result<_>>()?;
        if a.csv {
            let mut text = String::from("metric,x,value\n");
            for r in &rows {
                text.push_str(&format!(
                    "pass_at_k,{},{}\n",
                    r["x"],
                    r["value"]
                        .as_str()
                        .map_or(r["value"].to_string(), str::to_string)
                ));
            }
            return Ok(Output { text, code: 0 });
        }
        return Ok(json_out(json!({ "n": n, "c": c, "rows": rows })));
    }
    let path = a
        .records
        .as_ref()
        .ok_or_else(|| anyhow!("give --records FILE or --n and --c"))?;
    let records: Vec<RunRecord<f64>> = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let table = pass_curves(&records, &ks, &a.t, a.n_parallel.unwrap_or(8))?;
    if a.csv {
        return Ok(Output {
            text: table.to_csv(),
            code: 0,
        });
    }
    Ok(json_out(serde_json::to_value(&table)?))
}

fn run(cli: &Cli) -> Result<Output> {
    let file = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Cost(a) => cmd_cost(a, &file),
        Command::Plan(a) => cmd_plan(a, &file),
        Command::Schedule(a) => cmd_schedule(a, &file),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a, &file),
        Command::Passk(a) => cmd_passk(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
