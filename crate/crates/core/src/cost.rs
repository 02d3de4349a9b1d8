//! Loop-depth weighted plan cost.
//!
//! Each call site contributes `c_kind * gamma^depth`, where `c_kind` is the
//! tool or model-evaluation weight and `depth` the number of enclosing loops.
//! Both arms of a conditional are counted. The result is a unitless ranking
//! score, not a latency prediction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planlang::{CallKind, CallSite, PlanCfg};
use crate::scalar::CostScalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct CostModel<S> {
    pub c_tool: S,
    pub c_eval: S,
    pub gamma: S,
}

impl<S: CostScalar> Default for CostModel<S> {
    fn default() -> Self {
        CostModel {
            c_tool: S::ratio(1, 10),
            c_eval: S::ratio(10, 1),
            gamma: S::ratio(10, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("no candidates to rank")]
    EmptyCandidateSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallCost<S> {
    pub call_index: usize,
    pub label: String,
    pub depth: u32,
    pub contribution: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate<S> {
    pub total: S,
    pub per_call: Vec<CallCost<S>>,
}

impl<S: CostScalar> CostModel<S> {
    pub fn new(c_tool: S, c_eval: S, gamma: S) -> Self {
        CostModel {
            c_tool,
            c_eval,
            gamma,
        }
    }

    /// Contribution of one call site.
    pub fn call_cost(&self, site: &CallSite) -> S {
        let base = match site.kind {
            CallKind::Tool => self.c_tool.clone(),
            CallKind::AiEval => self.c_eval.clone(),
        };
        base * num_traits::pow(self.gamma.clone(), site.depth as usize)
    }

    pub fn estimate_cost(&self, cfg: &PlanCfg) -> CostEstimate<S> {
        let per_call: Vec<CallCost<S>> = cfg
            .call_sites()
            .map(|site| CallCost {
                call_index: site.index,
                label: site.label().to_string(),
                depth: site.depth,
                contribution: self.call_cost(site),
            })
            .collect();
        let total = per_call
            .iter()
            .fold(S::zero(), |acc, c| acc + c.contribution.clone());
        CostEstimate { total, per_call }
    }
}

/// Index of the cheapest candidate. Ties go to the earliest.
pub fn rank<S: PartialOrd>(costs: &[S]) -> Result<usize, CostError> {
    let mut best: Option<usize> = None;
    for (i, c) in costs.iter().enumerate() {
        match best {
            Some(b) if !(*c < costs[b]) => {}
            _ => best = Some(i),
        }
    }
    best.ok_or(CostError::EmptyCandidateSet)
}
