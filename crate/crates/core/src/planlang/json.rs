//! Canonical JSON form of the plan IR.
//!
//! ```json
//! {"stmts": [
//!   {"kind": "tool_call", "tool": "goto_home", "args": {}, "bind": "h"},
//!   {"kind": "for", "var": "s", "iter": {"var": "stores"}, "body": [...]},
//!   {"kind": "return", "expr": {"field": {"of": {"var": "h"}, "name": "ok"}}}
//! ]}
//! ```
//!
//! Expressions: JSON scalars are literals; every other form is a one-key
//! object (`var`, `field`, `index`, `slice`, `bin`, `unary`, `list`,
//! `builtin`). Statements may carry optional `line`/`col`.

use serde_json::{json, Map, Value};

use super::ast::*;
use super::PlanError;

fn fail<T>(path: &str, message: impl Into<String>) -> Result<T, PlanError> {
    Err(PlanError::Json {
        path: path.to_string(),
        message: message.into(),
    })
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, PlanError> {
    match obj.get(key) {
        Some(v) => Ok(v),
        None => fail(path, format!("missing field `{key}`")),
    }
}

fn string_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String, PlanError> {
    match field(obj, key, path)? {
        Value::String(s) => Ok(s.clone()),
        _ => fail(&format!("{path}.{key}"), "expected a string"),
    }
}

fn ident_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String, PlanError> {
    let s = string_field(obj, key, path)?;
    if !is_plain_ident(&s) {
        return fail(
            &format!("{path}.{key}"),
            format!("`{s}` is not an identifier"),
        );
    }
    Ok(s)
}

fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !super::parser::is_keyword(s)
}

/// Decode a canonical JSON document into a program, without scope checks.
pub(crate) fn program_from_json(doc: &Value) -> Result<PlanProgram, PlanError> {
    let Value::Object(obj) = doc else {
        return fail("$", "expected an object with `stmts`");
    };
    let stmts = stmts_from_json(field(obj, "stmts", "$")?, "$.stmts")?;
    Ok(PlanProgram { stmts })
}

fn stmts_from_json(v: &Value, path: &str) -> Result<Vec<Stmt>, PlanError> {
    let Value::Array(items) = v else {
        return fail(path, "expected an array of statements");
    };
    items
        .iter()
        .enumerate()
        .map(|(i, s)| stmt_from_json(s, &format!("{path}[{i}]")))
        .collect()
}

fn optional_bind(obj: &Map<String, Value>, path: &str) -> Result<Option<String>, PlanError> {
    match obj.get("bind") {
        None | Some(Value::Null) => Ok(None),
        Some(_) => ident_field(obj, "bind", path).map(Some),
    }
}

fn args_from_json(obj: &Map<String, Value>, path: &str) -> Result<CallArgExprs, PlanError> {
    match obj.get("args") {
        None => Ok(CallArgExprs::new()),
        Some(Value::Object(args)) => args
            .iter()
            .map(|(k, v)| {
                if !is_plain_ident(k) {
                    return fail(
                        &format!("{path}.args"),
                        format!("`{k}` is not an identifier"),
                    );
                }
                Ok((k.clone(), expr_from_json(v, &format!("{path}.args.{k}"))?))
            })
            .collect(),
        Some(_) => fail(&format!("{path}.args"), "expected an object"),
    }
}

fn stmt_from_json(v: &Value, path: &str) -> Result<Stmt, PlanError> {
    let Value::Object(obj) = v else {
        return fail(path, "expected a statement object");
    };
    let kind_name = string_field(obj, "kind", path)?;
    let kind = match kind_name.as_str() {
        "tool_call" => StmtKind::ToolCall {
            tool: ident_field(obj, "tool", path)?,
            args: args_from_json(obj, path)?,
            bind: optional_bind(obj, path)?,
        },
        "ai_eval" => StmtKind::AiEval {
            template: string_field(obj, "template", path)?,
            args: args_from_json(obj, path)?,
            bind: optional_bind(obj, path)?,
        },
        "assign" => StmtKind::Assign {
            var: ident_field(obj, "var", path)?,
            expr: expr_from_json(field(obj, "expr", path)?, &format!("{path}.expr"))?,
        },
        "for" => StmtKind::For {
            var: ident_field(obj, "var", path)?,
            iter: expr_from_json(field(obj, "iter", path)?, &format!("{path}.iter"))?,
            body: stmts_from_json(field(obj, "body", path)?, &format!("{path}.body"))?,
        },
        "if" => StmtKind::If {
            cond: expr_from_json(field(obj, "cond", path)?, &format!("{path}.cond"))?,
            then_body: stmts_from_json(field(obj, "then", path)?, &format!("{path}.then"))?,
            else_body: match obj.get("else") {
                None => Vec::new(),
                Some(v) => stmts_from_json(v, &format!("{path}.else"))?,
            },
        },
        "return" => StmtKind::Return(expr_from_json(
            field(obj, "expr", path)?,
            &format!("{path}.expr"),
        )?),
        other => {
            return fail(
                &format!("{path}.kind"),
                format!("unknown statement kind `{other}`"),
            )
        }
    };
    let pos = |key: &str| obj.get(key).and_then(Value::as_u64).unwrap_or(0) as u32;
    Ok(Stmt {
        kind,
        span: Span::new(pos("line"), pos("col")),
    })
}

fn expr_list(v: &Value, path: &str) -> Result<Vec<Expr>, PlanError> {
    let Value::Array(items) = v else {
        return fail(path, "expected an array of expressions");
    };
    items
        .iter()
        .enumerate()
        .map(|(i, e)| expr_from_json(e, &format!("{path}[{i}]")))
        .collect()
}

fn expr_from_json(v: &Value, path: &str) -> Result<Expr, PlanError> {
    let obj = match v {
        Value::Null => return Ok(Expr::Lit(Literal::Null)),
        Value::Bool(b) => return Ok(Expr::Lit(Literal::Bool(*b))),
        Value::String(s) => return Ok(Expr::Lit(Literal::Str(s.clone()))),
        Value::Number(n) => {
            return Ok(Expr::Lit(match n.as_i64() {
                Some(i) => Literal::Int(i),
                None => match n.as_f64() {
                    Some(f) if n.is_f64() => Literal::Float(f),
                    _ => return fail(path, format!("integer {n} out of range")),
                },
            }))
        }
        Value::Array(_) => {
            return fail(
                path,
                "bare arrays are not expressions; use {\"list\": [...]}",
            )
        }
        Value::Object(obj) => obj,
    };
    if obj.len() != 1 {
        return fail(path, "expression objects have exactly one key");
    }
    let (tag, body) = obj.iter().next().expect("one key");
    let sub = format!("{path}.{tag}");
    let body_obj = || match body {
        Value::Object(o) => Ok(o),
        _ => fail(&sub, "expected an object"),
    };
    match tag.as_str() {
        "var" => match body {
            Value::String(s) if is_plain_ident(s) => Ok(Expr::Var(s.clone())),
            _ => fail(&sub, "expected an identifier"),
        },
        "field" => {
            let o = body_obj()?;
            let of = expr_from_json(field(o, "of", &sub)?, &format!("{sub}.of"))?;
            Ok(Expr::Field(Box::new(of), string_field(o, "name", &sub)?))
        }
        "index" => {
            let o = body_obj()?;
            let of = expr_from_json(field(o, "of", &sub)?, &format!("{sub}.of"))?;
            let at = expr_from_json(field(o, "at", &sub)?, &format!("{sub}.at"))?;
            Ok(Expr::Index(Box::new(of), Box::new(at)))
        }
        "slice" => {
            let o = body_obj()?;
            let base = expr_from_json(field(o, "of", &sub)?, &format!("{sub}.of"))?;
            let bound = |key: &str| -> Result<Option<Box<Expr>>, PlanError> {
                match o.get(key) {
                    None => Ok(None),
                    Some(e) => Ok(Some(Box::new(expr_from_json(e, &format!("{sub}.{key}"))?))),
                }
            };
            Ok(Expr::Slice {
                base: Box::new(base),
                start: bound("start")?,
                end: bound("end")?,
            })
        }
        "bin" => {
            let o = body_obj()?;
            let sym = string_field(o, "op", &sub)?;
            let Some(op) = BinOp::from_symbol(&sym) else {
                return fail(&format!("{sub}.op"), format!("unknown operator `{sym}`"));
            };
            let lhs = expr_from_json(field(o, "lhs", &sub)?, &format!("{sub}.lhs"))?;
            let rhs = expr_from_json(field(o, "rhs", &sub)?, &format!("{sub}.rhs"))?;
            Ok(Expr::binary(op, lhs, rhs))
        }
        "unary" => {
            let o = body_obj()?;
            let op = match string_field(o, "op", &sub)?.as_str() {
                "-" => UnOp::Neg,
                "not" => UnOp::Not,
                other => return fail(&format!("{sub}.op"), format!("unknown operator `{other}`")),
            };
            let arg = expr_from_json(field(o, "arg", &sub)?, &format!("{sub}.arg"))?;
            Ok(Expr::Unary(op, Box::new(arg)))
        }
        "list" => Ok(Expr::List(expr_list(body, &sub)?)),
        "builtin" => {
            let o = body_obj()?;
            let name = string_field(o, "name", &sub)?;
            if !BUILTINS.contains(&name.as_str()) {
                return fail(&format!("{sub}.name"), format!("unknown builtin `{name}`"));
            }
            let args = match o.get("args") {
                None => Vec::new(),
                Some(a) => expr_list(a, &format!("{sub}.args"))?,
            };
            Ok(Expr::Builtin(name, args))
        }
        other => fail(path, format!("unknown expression form `{other}`")),
    }
}

/// Canonical JSON for a program. Spans are not written.
pub fn program_to_json(program: &PlanProgram) -> Value {
    json!({ "stmts": stmts_to_json(&program.stmts) })
}

fn stmts_to_json(stmts: &[Stmt]) -> Value {
    Value::Array(stmts.iter().map(stmt_to_json).collect())
}

fn args_to_json(args: &CallArgExprs) -> Value {
    Value::Object(
        args.iter()
            .map(|(k, v)| (k.clone(), expr_to_json(v)))
            .collect(),
    )
}

fn stmt_to_json(stmt: &Stmt) -> Value {
    match &stmt.kind {
        StmtKind::ToolCall { tool, args, bind } => {
            json!({"kind": "tool_call", "tool": tool, "args": args_to_json(args), "bind": bind})
        }
        StmtKind::AiEval {
            template,
            args,
            bind,
        } => {
            json!({"kind": "ai_eval", "template": template, "args": args_to_json(args), "bind": bind})
        }
        StmtKind::Assign { var, expr } => {
            json!({"kind": "assign", "var": var, "expr": expr_to_json(expr)})
        }
        StmtKind::For { var, iter, body } => json!({
            "kind": "for", "var": var, "iter": expr_to_json(iter), "body": stmts_to_json(body)
        }),
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => json!({
            "kind": "if", "cond": expr_to_json(cond),
            "then": stmts_to_json(then_body), "else": stmts_to_json(else_body)
        }),
        StmtKind::Return(e) => json!({"kind": "return", "expr": expr_to_json(e)}),
    }
}

pub fn expr_to_json(expr: &Expr) -> Value {
    match expr {
        Expr::Lit(lit) => lit.to_value(),
        Expr::Var(v) => json!({ "var": v }),
        Expr::Field(of, name) => json!({"field": {"of": expr_to_json(of), "name": name}}),
        Expr::Index(of, at) => json!({"index": {"of": expr_to_json(of), "at": expr_to_json(at)}}),
        Expr::Slice { base, start, end } => {
            let mut o = Map::new();
            o.insert("of".into(), expr_to_json(base));
            if let Some(s) = start {
                o.insert("start".into(), expr_to_json(s));
            }
            if let Some(e) = end {
                o.insert("end".into(), expr_to_json(e));
            }
            json!({ "slice": o })
        }
        Expr::Binary(op, l, r) => json!({"bin": {
            "op": op.symbol(), "lhs": expr_to_json(l), "rhs": expr_to_json(r)
        }}),
        Expr::Unary(op, e) => json!({"unary": {"op": op.symbol(), "arg": expr_to_json(e)}}),
        Expr::List(items) => json!({ "list": items.iter().map(expr_to_json).collect::<Vec<_>>() }),
        Expr::Builtin(name, args) => json!({"builtin": {
            "name": name, "args": args.iter().map(expr_to_json).collect::<Vec<_>>()
        }}),
    }
}
