//! Discrete-event plan execution against a simulated site.
//!
//! The environment gives every tool a latency distribution, a fixture output
//! and whether it loads a new page. Plans run on a simulated clock: each tool
//! call checks its manifest `pre` against the concrete page state, advances
//! the clock by a latency draw and applies `post`. Model evaluations draw
//! from `eval_latency` and return canned answers keyed by template text.
//!
//! Page reads follow the scheduler's accounting: the first tool call and
//! every navigating call add `page_read_s`, and with `repeat_latency_s` set
//! only a tool's first call is drawn from its distribution.

mod eval;
mod strategy;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::distributions::{ElementStats, LatencyDistribution, SchedulerCache};
use crate::planlang::{CallArgExprs, PlanProgram, Span, Stmt, StmtKind};
use crate::protocol::{satisfies, CallArgs, ManifestSet, StatePattern, TrackedState, TrackedValue};
use crate::scheduler::ElementUsage;
use crate::traces::{TraceRecord, TraceStep};

pub use eval::{eval, to_text, truthy, Vars};
pub use strategy::{oracle_strategy, run_strategy, OracleResult, StrategyPlan, StrategyRun};

/// Trace element name for model evaluations.
pub const EVAL_ELEMENT: &str = "ai_eval";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("environment has no fixture for tool `{0}`")]
    MissingToolFixture(String),
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFixture {
    pub latency: LatencyDistribution<f64>,
    #[serde(default)]
    pub navigates: bool,
    #[serde(default)]
    pub output: Value,
}

fn instant() -> LatencyDistribution<f64> {
    LatencyDistribution::Fixed { value: 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEnv {
    #[serde(default)]
    pub task_id: String,
    #[serde(default)]
    pub initial_state: BTreeMap<String, Value>,
    pub tools: BTreeMap<String, ToolFixture>,
    #[serde(default = "instant")]
    pub eval_latency: LatencyDistribution<f64>,
    #[serde(default)]
    pub eval_answers: BTreeMap<String, Value>,
    #[serde(default)]
    pub page_read_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_latency_s: Option<f64>,
}

impl SimEnv {
    pub fn new(initial_state: BTreeMap<String, Value>) -> Self {
        SimEnv {
            task_id: String::new(),
            initial_state,
            tools: BTreeMap::new(),
            eval_latency: instant(),
            eval_answers: BTreeMap::new(),
            page_read_s: 0.0,
            repeat_latency_s: None,
        }
    }

    pub fn with_tool(
        mut self,
        name: &str,
        latency: LatencyDistribution<f64>,
        navigates: bool,
        output: Value,
    ) -> Self {
        self.tools.insert(
            name.to_string(),
            ToolFixture {
                latency,
                navigates,
                output,
            },
        );
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidEnv(m));
        for (name, t) in &self.tools {
            if let Err(e) = t.latency.validate() {
                return bad(format!("tool `{name}`: {e}"));
            }
        }
        if let Err(e) = self.eval_latency.validate() {
            return bad(format!("eval_latency: {e}"));
        }
        if !(self.page_read_s.is_finite() && self.page_read_s >= 0.0) {
            return bad(format!(
                "page_read_s must be finite and nonnegative, got {}",
                self.page_read_s
            ));
        }
        if let Some(r) = self.repeat_latency_s {
            if !(r.is_finite() && r >= 0.0) {
                return bad(format!(
                    "repeat_latency_s must be finite and nonnegative, got {r}"
                ));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, SimError> {
        let env: SimEnv =
            serde_json::from_str(text).map_err(|e| SimError::InvalidEnv(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidEnv(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// The tools' latency sources as a scheduler cache keyed by tool name.
    pub fn scheduler_cache(&self) -> SchedulerCache<f64> {
        let mut cache = SchedulerCache::new();
        for (name, t) in &self.tools {
            cache.insert(ElementStats::new(name, "", t.latency.clone(), 0));
        }
        cache
    }
}

/// Why a simulated run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimFailure {
    RuntimePreconditionFailure {
        tool: String,
        key: String,
        line: u32,
        col: u32,
    },
    UnknownTool {
        tool: String,
        line: u32,
        col: u32,
    },
    EvalError {
        message: String,
        line: u32,
        col: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub tool: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRun {
    pub latency_s: f64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<SimFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_value: Option<Value>,
    pub final_state: BTreeMap<String, Value>,
    pub events: Vec<SimEvent>,
    pub trace: TraceRecord,
}

impl SimRun {
    /// Tool usage in first-call order: call count and navigating calls per
    /// tool. This is the usage a perfect predictor would report.
    pub fn usage(&self, env: &SimEnv) -> Vec<ElementUsage> {
        let mut out: Vec<ElementUsage> = Vec::new();
        for step in self
            .trace
            .steps
            .iter()
            .filter(|s| s.success && s.element != EVAL_ELEMENT)
        {
            let nav = u32::from(env.tools.get(&step.element).is_some_and(|t| t.navigates));
            match out.iter_mut().find(|u| u.element == step.element) {
                Some(u) => {
                    u.count += 1;
                    u.navigations += nav;
                }
                None => out.push(ElementUsage::new(&step.element, 1, nav)),
            }
        }
        out
    }
}

enum Stop {
    Fail(SimFailure),
    Config(SimError),
    Return(Value),
}

struct Machine<'a, R: Rng + ?Sized> {
    manifests: &'a ManifestSet,
    env: &'a SimEnv,
    rng: &'a mut R,
    clock: f64,
    state: BTreeMap<String, Value>,
    vars: Vars,
    events: Vec<SimEvent>,
    steps: Vec<TraceStep>,
    called: BTreeSet<String>,
}

fn eval_at(expr: &crate::planlang::Expr, vars: &Vars, span: Span) -> Result<Value, Stop> {
    eval(expr, vars).map_err(|message| {
        Stop::Fail(SimFailure::EvalError {
            message,
            line: span.line,
            col: span.col,
        })
    })
}

impl<R: Rng + ?Sized> Machine<'_, R> {
    fn page(&self) -> String {
        self.state
            .get("page_type")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string()
    }

    fn step(&mut self, element: &str, latency_s: f64, success: bool) {
        self.steps.push(TraceStep {
            index: self.steps.len() as u32,
            element: element.to_string(),
            page: self.page(),
            latency_s,
            success,
            is_modal: false,
            modal_name: None,
        });
    }

    fn eval_args(&self, args: &CallArgExprs, span: Span) -> Result<BTreeMap<String, Value>, Stop> {
        args.iter()
            .map(|(k, e)| Ok((k.clone(), eval_at(e, &self.vars, span)?)))
            .collect()
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), Stop> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, stmt: &Stmt) -> Result<(), Stop> {
        let span = stmt.span;
        match &stmt.kind {
            StmtKind::ToolCall { tool, args, bind } => {
                let out = self.tool_call(tool, args, span)?;
                if let Some(b) = bind {
                    self.vars.insert(b.clone(), out);
                }
            }
            StmtKind::AiEval {
                template,
                args,
                bind,
            } => {
                self.eval_args(args, span)?;
                let latency = self.env.eval_latency.sample(self.rng);
                self.step(EVAL_ELEMENT, latency, true);
                self.clock += latency;
                self.events.push(SimEvent {
                    time: self.clock,
                    tool: EVAL_ELEMENT.into(),
                    ok: true,
                });
                if let Some(b) = bind {
                    let answer = self
                        .env
                        .eval_answers
                        .get(template)
                        .cloned()
                        .unwrap_or(Value::Null);
                    self.vars.insert(b.clone(), answer);
                }
            }
            StmtKind::Assign { var, expr } => {
                let v = eval_at(expr, &self.vars, span)?;
                self.vars.insert(var.clone(), v);
            }
            StmtKind::For { var, iter, body } => {
                let items: Vec<Value> = match eval_at(iter, &self.vars, span)? {
                    Value::Array(a) => a,
                    Value::String(s) => s.chars().map(|c| Value::String(c.to_string())).collect(),
                    Value::Object(o) => o.into_iter().map(|(k, _)| Value::String(k)).collect(),
                    other => {
                        return Err(Stop::Fail(SimFailure::EvalError {
                            message: format!("cannot iterate over {other}"),
                            line: span.line,
                            col: span.col,
                        }))
                    }
                };
                let shadowed = self.vars.get(var).cloned();
                for item in items {
                    self.vars.insert(var.clone(), item);
                    self.block(body)?;
                }
                match shadowed {
                    Some(v) => self.vars.insert(var.clone(), v),
                    None => self.vars.remove(var),
                };
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                if truthy(&eval_at(cond, &self.vars, span)?) {
                    self.block(then_body)?;
                } else {
                    self.block(else_body)?;
                }
            }
            StmtKind::Return(expr) => return Err(Stop::Return(eval_at(expr, &self.vars, span)?)),
        }
        Ok(())
    }

    fn tool_call(&mut self, tool: &str, args: &CallArgExprs, span: Span) -> Result<Value, Stop> {
        let (line, col) = (span.line, span.col);
        let Some(manifest) = self.manifests.get(tool) else {
            return Err(Stop::Fail(SimFailure::UnknownTool {
                tool: tool.to_string(),
                line,
                col,
            }));
        };
        let fixture = self
            .env
            .tools
            .get(tool)
            .ok_or_else(|| Stop::Config(SimError::MissingToolFixture(tool.to_string())))?;
        let values = self.eval_args(args, span)?;
        let known: CallArgs = values
            .iter()
            .map(|(k, v)| (k.clone(), TrackedValue::Known(v.clone())))
            .collect();
        if let Err(details) = satisfies(
            &TrackedState::from_concrete(&self.state),
            &manifest.pre,
            &known,
        ) {
            self.step(tool, 0.0, false);
            self.events.push(SimEvent {
                time: self.clock,
                tool: tool.to_string(),
                ok: false,
            });
            return Err(Stop::Fail(SimFailure::RuntimePreconditionFailure {
                tool: tool.to_string(),
                key: details[0].key.clone(),
                line,
                col,
            }));
        }

        let repeat = self.called.contains(tool);
        let latency = match (repeat, self.env.repeat_latency_s) {
            (true, Some(r)) => r,
            _ => fixture.latency.sample(self.rng),
        };
        let reads = u32::from(self.called.is_empty()) + u32::from(fixture.navigates);
        self.called.insert(tool.to_string());
        self.step(tool, latency, true);
        self.clock += latency + f64::from(reads) * self.env.page_read_s;
        self.events.push(SimEvent {
            time: self.clock,
            tool: tool.to_string(),
            ok: true,
        });

        for (key, pattern) in manifest.post.iter() {
            let v = match pattern {
                StatePattern::Concrete(v) => v.clone(),
                StatePattern::Null => Value::Null,
                StatePattern::Any => Value::String(format!("{tool}.{key}")),
                StatePattern::OneOf(options) => Value::String(options[0].clone()),
                StatePattern::ParamRef(p) => values.get(p).cloned().ok_or_else(|| {
                    Stop::Fail(SimFailure::EvalError {
                        message: format!("postcondition of `{tool}` writes parameter `{p}` which the call does not pass"),
                        line,
                        col,
                    })
                })?,
            };
            self.state.insert(key.clone(), v);
        }
        Ok(fixture.output.clone())
    }
}

/// Run `program` once. Contract failures end the run with `ok = false`;
/// a tool without an environment fixture is an error.
pub fn run_plan<R: Rng + ?Sized>(
    program: &PlanProgram,
    manifests: &ManifestSet,
    env: &SimEnv,
    rng: &mut R,
) -> Result<SimRun, SimError> {
    let mut m = Machine {
        manifests,
        env,
        rng,
        clock: 0.0,
        state: env.initial_state.clone(),
        vars: Vars::new(),
        events: Vec::new(),
        steps: Vec::new(),
        called: BTreeSet::new(),
    };
    let (failure, return_value) = match m.block(&program.stmts) {
        Ok(()) => (None, None),
        Err(Stop::Return(v)) => (None, Some(v)),
        Err(Stop::Fail(f)) => (Some(f), None),
        Err(Stop::Config(e)) => return Err(e),
    };
    Ok(SimRun {
        latency_s: m.clock,
        ok: failure.is_none(),
        failure,
        return_value,
        final_state: m.state,
        events: m.events,
        trace: TraceRecord {
            task_id: env.task_id.clone(),
            steps: m.steps,
        },
    })
}
