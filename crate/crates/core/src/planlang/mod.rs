//! Plan language: a small statement language for tool-call plans, its IR,
//! text and JSON loaders, and the control-flow graph.
//!
//! ```text
//! stores = call list_all_stores()
//! count = 0
//! for s in stores.stores {
//!     if s.is_open { count = count + 1 }
//! }
//! return count
//! ```

mod ast;
mod cfg;
mod json;
mod parser;

use std::collections::BTreeSet;

use serde_json::Value;
use thiserror::Error;

pub use ast::*;
pub use cfg::{
    build_cfg, Arm, BasicBlock, BlockId, BlockItem, BranchTag, CallKind, CallSite, PlanCfg, Region,
    Successor,
};
pub use json::{expr_to_json, program_to_json};
pub use parser::parse_expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{line}:{col}: {}", describe_parse(expected, found))]
    Parse {
        line: u32,
        col: u32,
        expected: Vec<String>,
        found: String,
    },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error("{line}:{col}: variable `{name}` is used before it is bound")]
    UnboundVariable { name: String, line: u32, col: u32 },
    #[error("{line}:{col}: `return` must be the last top-level statement")]
    MisplacedReturn { line: u32, col: u32 },
}

fn describe_parse(expected: &[String], found: &str) -> String {
    match expected {
        [] => found.to_string(),
        [one] => format!("expected {one}, found {found}"),
        many => format!("expected one of {}, found {found}", many.join(", ")),
    }
}

/// Parse plan text and check that it is well formed.
pub fn parse_plan(text: &str) -> Result<PlanProgram, PlanError> {
    let program = parser::parse_syntax(text)?;
    check_well_formed(&program)?;
    Ok(program)
}

/// Load a program from its canonical JSON form and check that it is well
/// formed.
pub fn load_plan_json(doc: &Value) -> Result<PlanProgram, PlanError> {
    let program = json::program_from_json(doc)?;
    check_well_formed(&program)?;
    Ok(program)
}

pub fn load_plan_json_str(text: &str) -> Result<PlanProgram, PlanError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| PlanError::Json {
        path: "$".into(),
        message: e.to_string(),
    })?;
    load_plan_json(&doc)
}

/// Load a plan from text or JSON, chosen by the first non-blank character.
pub fn load_plan_any(text: &str) -> Result<PlanProgram, PlanError> {
    if text.trim_start().starts_with('{') {
        load_plan_json_str(text)
    } else {
        parse_plan(text)
    }
}

/// Variables are bound before use on every path, and `return`, if present,
/// is the last top-level statement.
pub fn check_well_formed(program: &PlanProgram) -> Result<(), PlanError> {
    let last = program.stmts.len().saturating_sub(1);
    for (i, stmt) in program.stmts.iter().enumerate() {
        if matches!(stmt.kind, StmtKind::Return(_)) && i != last {
            return Err(misplaced(stmt));
        }
    }
    check_scope(&program.stmts, &mut BTreeSet::new(), true)
}

fn misplaced(stmt: &Stmt) -> PlanError {
    PlanError::MisplacedReturn {
        line: stmt.span.line,
        col: stmt.span.col,
    }
}

fn check_expr(expr: &Expr, scope: &BTreeSet<String>, stmt: &Stmt) -> Result<(), PlanError> {
    match expr.free_vars().into_iter().find(|v| !scope.contains(*v)) {
        Some(name) => Err(PlanError::UnboundVariable {
            name: name.to_string(),
            line: stmt.span.line,
            col: stmt.span.col,
        }),
        None => Ok(()),
    }
}

fn check_scope(stmts: &[Stmt], scope: &mut BTreeSet<String>, top: bool) -> Result<(), PlanError> {
    for stmt in stmts {
        match &stmt.kind {
            StmtKind::ToolCall { args, bind, .. } | StmtKind::AiEval { args, bind, .. } => {
                for e in args.values() {
                    check_expr(e, scope, stmt)?;
                }
                if let Some(b) = bind {
                    scope.insert(b.clone());
                }
            }
            StmtKind::Assign { var, expr } => {
                check_expr(expr, scope, stmt)?;
                scope.insert(var.clone());
            }
            StmtKind::For { var, iter, body } => {
                check_expr(iter, scope, stmt)?;
                let mut inner = scope.clone();
                inner.insert(var.clone());
                check_scope(body, &mut inner, false)?;
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                check_expr(cond, scope, stmt)?;
                let mut then_scope = scope.clone();
                check_scope(then_body, &mut then_scope, false)?;
                let mut else_scope = scope.clone();
                check_scope(else_body, &mut else_scope, false)?;
                *scope = then_scope.intersection(&else_scope).cloned().collect();
            }
            StmtKind::Return(expr) => {
                if !top {
                    return Err(misplaced(stmt));
                }
                check_expr(expr, scope, stmt)?;
            }
        }
    }
    Ok(())
}
