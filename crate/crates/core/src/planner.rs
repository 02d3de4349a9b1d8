//! Candidate plan search: concurrent generation, validation, cost ranking.
//!
//! `n_workers` workers each ask a [`PlanGenerator`] for a plan, validate it,
//! and retry with rendered feedback up to `m_max` times until they produce a
//! valid plan. Valid plans are costed and the cheapest one is selected.
//!
//! Collection stops once `k_valid` valid candidates exist. Every attempt has
//! a simulated completion time (the sum of its worker's generation
//! latencies), and the stop is placed on that timeline rather than on wall
//! clock: the cut is the completion time of the `k`-th valid attempt, and
//! attempts that started before the cut are kept even if they finish after
//! it. Workers run on threads and stop early once the cut is known to be
//! behind them, so thread scheduling never changes the outcome.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::mpsc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::distributions::LatencyDistribution;
use crate::planlang::{build_cfg, load_plan_any, PlanError};
use crate::protocol::{ManifestSet, TrackedState};
use crate::rng::{stream, RngStream};
use crate::scalar::CostScalar;
use crate::validator::{validate, ValidationReport, Violation};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct PlannerConfig<S> {
    pub n_workers: usize,
    pub k_valid: usize,
    pub m_max: usize,
    pub cost_model: CostModel<S>,
    pub seed: u64,
}

impl<S: CostScalar> Default for PlannerConfig<S> {
    fn default() -> Self {
        PlannerConfig {
            n_workers: 8,
            k_valid: 32,
            m_max: 1,
            cost_model: CostModel::default(),
            seed: 0,
        }
    }
}

/// What a generator sees for one attempt.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub task: &'a str,
    pub manifests: &'a ManifestSet,
    /// Rendered validation errors of this worker's previous attempt.
    pub feedback: Option<&'a str>,
    pub worker: usize,
    pub iteration: usize,
    pub n_workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    /// Simulated time the generation took.
    pub latency_s: f64,
}

/// Source of candidate plans. Implementations must be deterministic given
/// the request and the state of `rng`, which is private to the worker.
pub trait PlanGenerator: Sync {
    fn generate(&self, request: &GenerationRequest<'_>, rng: &mut RngStream) -> Generation;
}

/// Cycles through a fixed list of plan texts. Attempt `i` of worker `w`
/// gets entry `(i * n_workers + w) mod len`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusGenerator {
    pub plans: Vec<String>,
    pub latency_s: f64,
}

impl CorpusGenerator {
    pub fn new(plans: Vec<String>) -> Self {
        CorpusGenerator {
            plans,
            latency_s: 0.0,
        }
    }

    /// Every `.plan` and `.json` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("plan" | "json")
                )
            })
            .collect();
        paths.sort();
        let plans = paths
            .iter()
            .map(fs::read_to_string)
            .collect::<Result<_, _>>()?;
        Ok(CorpusGenerator::new(plans))
    }
}

impl PlanGenerator for CorpusGenerator {
    fn generate(&self, r: &GenerationRequest<'_>, _rng: &mut RngStream) -> Generation {
        let text = if self.plans.is_empty() {
            String::new()
        } else {
            self.plans[(r.iteration * r.n_workers + r.worker) % self.plans.len()].clone()
        };
        Generation {
            text,
            latency_s: self.latency_s,
        }
    }
}

/// Produces a valid plan with probability `p` and an invalid one otherwise,
/// taking a latency drawn from `latency`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliMockGenerator {
    pub p: f64,
    pub latency: LatencyDistribution<f64>,
    pub valid_plan: String,
    pub invalid_plan: String,
}

impl BernoulliMockGenerator {
    /// The valid plan is empty; the invalid one calls a tool no manifest
    /// set defines.
    pub fn new(p: f64, latency: LatencyDistribution<f64>) -> Self {
        BernoulliMockGenerator {
            p,
            latency,
            valid_plan: String::new(),
            invalid_plan: "call __undefined_tool__()\n".into(),
        }
    }
}

impl PlanGenerator for BernoulliMockGenerator {
    fn generate(&self, _r: &GenerationRequest<'_>, rng: &mut RngStream) -> Generation {
        let valid = rng.random::<f64>() < self.p;
        let latency_s = self.latency.sample_f64(rng);
        Generation {
            text: if valid {
                self.valid_plan.clone()
            } else {
                self.invalid_plan.clone()
            },
            latency_s,
        }
    }
}

/// One validation error per line with its position. Lint-only reports give
/// an empty string.
pub fn render_feedback(report: &ValidationReport) -> String {
    let lines: Vec<String> = report.hard_violations().map(feedback_line).collect();
    lines.join("\n")
}

fn feedback_line(v: &Violation) -> String {
    format!(
        "line {}, col {}: {} at `{}`: {}",
        v.line, v.col, v.kind, v.at, v.detail
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Serialize")]
pub struct Candidate<S> {
    pub plan: String,
    pub cost: S,
    pub worker_id: usize,
    pub iteration: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    Parse { error: String },
    Invalid { report: ValidationReport },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejected {
    pub plan: String,
    pub worker_id: usize,
    pub iteration: usize,
    pub elapsed_s: f64,
    pub feedback: String,
    #[serde(flatten)]
    pub rejection: Rejection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Serialize")]
pub struct PlannerOutcome<S> {
    pub schema_version: u32,
    pub task: String,
    /// Cheapest candidate; earliest on ties. `None` when nothing validated.
    pub selected: Option<Candidate<S>>,
    pub candidates: Vec<Candidate<S>>,
    pub rejected: Vec<Rejected>,
    pub attempts: usize,
}

impl<S: Serialize> PlannerOutcome<S> {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("outcome serializes");
        s.push('\n');
        s
    }
}

enum Verdict<S> {
    Valid(S),
    Rejected(Rejection, String),
}

struct Attempt<S> {
    worker: usize,
    iteration: usize,
    start: f64,
    end: f64,
    plan: String,
    verdict: Verdict<S>,
}

impl<S> Attempt<S> {
    fn order(&self, other: &Self) -> Ordering {
        self.end
            .total_cmp(&other.end)
            .then(self.worker.cmp(&other.worker))
            .then(self.iteration.cmp(&other.iteration))
    }
}

fn judge<S: CostScalar>(
    text: &str,
    manifests: &ManifestSet,
    initial: &TrackedState,
    model: &CostModel<S>,
) -> Verdict<S> {
    let program = match load_plan_any(text) {
        Ok(p) => p,
        Err(e) => {
            let feedback = match &e {
                PlanError::Parse { line, col, .. } => format!("line {line}, col {col}: {e}"),
                _ => e.to_string(),
            };
            return Verdict::Rejected(
                Rejection::Parse {
                    error: e.to_string(),
                },
                feedback,
            );
        }
    };
    let cfg = build_cfg(&program);
    let report = validate(&cfg, manifests, initial);
    if report.valid {
        Verdict::Valid(model.estimate_cost(&cfg).total)
    } else {
        let feedback = render_feedback(&report);
        Verdict::Rejected(Rejection::Invalid { report }, feedback)
    }
}

/// Search for the cheapest valid plan for `task`.
pub fn plan<S, G>(
    task: &str,
    manifests: &ManifestSet,
    initial: &TrackedState,
    generator: &G,
    config: &PlannerConfig<S>,
) -> PlannerOutcome<S>
where
    S: CostScalar + Send + Sync,
    G: PlanGenerator + ?Sized,
{
    let n_workers = config.n_workers.max(1);
    let k = config.k_valid.max(1);
    // Upper bound on the cut, as f64 bits. Only ever lowered.
    let cut_bound = AtomicU64::new(f64::INFINITY.to_bits());
    let (tx, rx) = mpsc::channel::<Attempt<S>>();

    let mut attempts: Vec<Attempt<S>> = std::thread::scope(|scope| {
        for worker in 0..n_workers {
            let tx = tx.clone();
            let cut_bound = &cut_bound;
            scope.spawn(move || {
                let mut rng = stream(config.seed, worker as u64);
                let mut clock = 0.0f64;
                let mut feedback: Option<String> = None;
                for iteration in 0..config.m_max.max(1) {
                    if clock > f64::from_bits(cut_bound.load(AtomicOrdering::Acquire)) {
                        break;
                    }
                    let request = GenerationRequest {
                        task,
                        manifests,
                        feedback: feedback.as_deref(),
                        worker,
                        iteration,
                        n_workers,
                    };
                    let g = generator.generate(&request, &mut rng);
                    let start = clock;
                    clock += g.latency_s.max(0.0);
                    let verdict = judge(&g.text, manifests, initial, &config.cost_model);
                    let done = matches!(verdict, Verdict::Valid(_));
                    if let Verdict::Rejected(_, f) = &verdict {
                        feedback = Some(f.clone());
                    }
                    let attempt = Attempt {
                        worker,
                        iteration,
                        start,
                        end: clock,
                        plan: g.text,
                        verdict,
                    };
                    if tx.send(attempt).is_err() || done {
                        break;
                    }
                }
            });
        }
        drop(tx);

        let mut received = Vec::new();
        let mut valid_ends: Vec<f64> = Vec::new();
        for a in rx {
            if matches!(a.verdict, Verdict::Valid(_)) {
                let pos = valid_ends.partition_point(|e| *e <= a.end);
                valid_ends.insert(pos, a.end);
                if valid_ends.len() >= k {
                    cut_bound.fetch_min(valid_ends[k - 1].to_bits(), AtomicOrdering::AcqRel);
                }
            }
            received.push(a);
        }
        received
    });

    attempts.sort_by(|a, b| a.order(b));
    let cut = attempts
        .iter()
        .filter(|a| matches!(a.verdict, Verdict::Valid(_)))
        .nth(k - 1)
        .map_or(f64::INFINITY, |a| a.end);
    attempts.retain(|a| a.end <= cut || a.start < cut);

    let mut candidates = Vec::new();
    let mut rejected = Vec::new();
    let total = attempts.len();
    for a in attempts {
        match a.verdict {
            Verdict::Valid(cost) => candidates.push(Candidate {
                plan: a.plan,
                cost,
                worker_id: a.worker,
                iteration: a.iteration,
                elapsed_s: a.end,
            }),
            Verdict::Rejected(rejection, feedback) => rejected.push(Rejected {
                plan: a.plan,
                worker_id: a.worker,
                iteration: a.iteration,
                elapsed_s: a.end,
                feedback,
                rejection,
            }),
        }
    }
    let selected = crate::cost::rank(
        &candidates
            .iter()
            .map(|c| c.cost.clone())
            .collect::<Vec<_>>(),
    )
    .ok()
    .map(|i| candidates[i].clone());
    PlannerOutcome {
        schema_version: SCHEMA_VERSION,
        task: task.to_string(),
        selected,
        candidates,
        rejected,
        attempts: total,
    }
}
