//! Plan IR and its canonical text rendering.

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

/// Source position (1-based). Diagnostic metadata only: two spans always
/// compare equal, so IR equality is structural.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Null,
}

impl Literal {
    pub fn to_value(&self) -> serde_json::Value {
        match self {
            Literal::Int(i) => (*i).into(),
            Literal::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Literal::Str(s) => s.clone().into(),
            Literal::Bool(b) => (*b).into(),
            Literal::Null => serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    In,
}

impl BinOp {
    pub const ALL: [BinOp; 14] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Mod,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::And,
        BinOp::Or,
        BinOp::In,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::In => "in",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        BinOp::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Not => "not",
        }
    }
}

/// Pure expressions. No calls to tools or models can appear here; only the
/// fixed set of [`BUILTINS`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Literal),
    Var(String),
    Field(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Slice {
        base: Box<Expr>,
        start: Option<Box<Expr>>,
        end: Option<Box<Expr>>,
    },
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    List(Vec<Expr>),
    Builtin(String, Vec<Expr>),
}

/// Pure functions callable inside expressions.
pub const BUILTINS: &[&str] = &[
    "format", "len", "str", "int", "float", "lower", "upper", "contains", "min", "max", "sum",
    "abs", "round", "keys",
];

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn str(s: &str) -> Expr {
        Expr::Lit(Literal::Str(s.to_string()))
    }

    pub fn int(v: i64) -> Expr {
        Expr::Lit(Literal::Int(v))
    }

    pub fn field(self, name: &str) -> Expr {
        Expr::Field(Box::new(self), name.to_string())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Variables read by this expression, in first-use order.
    pub fn free_vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Field(b, _) => b.collect_vars(out),
            Expr::Index(b, i) => {
                b.collect_vars(out);
                i.collect_vars(out);
            }
            Expr::Slice { base, start, end } => {
                base.collect_vars(out);
                for e in [start, end].into_iter().flatten() {
                    e.collect_vars(out);
                }
            }
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::List(items) | Expr::Builtin(_, items) => {
                for e in items {
                    e.collect_vars(out);
                }
            }
        }
    }
}

pub type CallArgExprs = BTreeMap<String, Expr>;

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    ToolCall {
        tool: String,
        args: CallArgExprs,
        bind: Option<String>,
    },
    AiEval {
        template: String,
        args: CallArgExprs,
        bind: Option<String>,
    },
    Assign {
        var: String,
        expr: Expr,
    },
    For {
        var: String,
        iter: Expr,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    Return(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Stmt {
            kind,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanProgram {
    pub stmts: Vec<Stmt>,
}

impl PlanProgram {
    /// Number of tool calls and model evaluations, at any nesting depth.
    pub fn call_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match &s.kind {
                    StmtKind::ToolCall { .. } | StmtKind::AiEval { .. } => 1,
                    StmtKind::For { body, .. } => count(body),
                    StmtKind::If {
                        then_body,
                        else_body,
                        ..
                    } => count(then_body) + count(else_body),
                    _ => 0,
                })
                .sum()
        }
        count(&self.stmts)
    }

    /// Canonical surface text. Parsing it yields an equal program.
    pub fn render(&self) -> String {
        let mut out = String::new();
        render_block(&self.stmts, 0, &mut out);
        out
    }
}

impl fmt::Display for PlanProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub(crate) fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn render_args(args: &CallArgExprs) -> String {
    args.iter()
        .map(|(k, v)| format!("{k}={}", render_expr(v)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn render_block(stmts: &[Stmt], indent: usize, out: &mut String) {
    for stmt in stmts {
        render_stmt(stmt, indent, out);
    }
}

fn render_stmt(stmt: &Stmt, indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    let bind_prefix =
        |bind: &Option<String>| bind.as_ref().map(|b| format!("{b} = ")).unwrap_or_default();
    match &stmt.kind {
        StmtKind::ToolCall { tool, args, bind } => {
            let _ = writeln!(
                out,
                "{pad}{}call {tool}({})",
                bind_prefix(bind),
                render_args(args)
            );
        }
        StmtKind::AiEval {
            template,
            args,
            bind,
        } => {
            let _ = writeln!(
                out,
                "{pad}{}eval {}({})",
                bind_prefix(bind),
                escape_str(template),
                render_args(args)
            );
        }
        StmtKind::Assign { var, expr } => {
            let _ = writeln!(out, "{pad}{var} = {}", render_expr(expr));
        }
        StmtKind::For { var, iter, body } => {
            let _ = writeln!(out, "{pad}for {var} in {} {{", render_expr(iter));
            render_block(body, indent + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => {
            let _ = writeln!(out, "{pad}if {} {{", render_expr(cond));
            render_block(then_body, indent + 1, out);
            if else_body.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                render_block(else_body, indent + 1, out);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        StmtKind::Return(e) => {
            let _ = writeln!(out, "{pad}return {}", render_expr(e));
        }
    }
}

fn render_literal(lit: &Literal) -> String {
    match lit {
        Literal::Int(v) => v.to_string(),
        Literal::Float(v) => format!("{v:?}"),
        Literal::Str(s) => escape_str(s),
        Literal::Bool(b) => b.to_string(),
        Literal::Null => "null".to_string(),
    }
}

/// Render an expression. Binary and unary forms are fully parenthesized.
pub fn render_expr(expr: &Expr) -> String {
    match expr {
        Expr::Lit(l) => render_literal(l),
        Expr::Var(v) => v.clone(),
        Expr::Field(b, name) => format!("{}.{name}", render_postfix_base(b)),
        Expr::Index(b, i) => format!("{}[{}]", render_postfix_base(b), render_expr(i)),
        Expr::Slice { base, start, end } => format!(
            "{}[{}:{}]",
            render_postfix_base(base),
            start.as_deref().map(render_expr).unwrap_or_default(),
            end.as_deref().map(render_expr).unwrap_or_default()
        ),
        Expr::Binary(op, l, r) => {
            format!("({} {} {})", render_expr(l), op.symbol(), render_expr(r))
        }
        Expr::Unary(UnOp::Neg, e) => format!("-({})", render_expr(e)),
        // `not` binds looser than comparisons, so the whole form is wrapped.
        Expr::Unary(UnOp::Not, e) => format!("(not ({}))", render_expr(e)),
        Expr::List(items) => format!(
            "[{}]",
            items.iter().map(render_expr).collect::<Vec<_>>().join(", ")
        ),
        Expr::Builtin(name, args) => format!(
            "{name}({})",
            args.iter().map(render_expr).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn render_postfix_base(e: &Expr) -> String {
    match e {
        Expr::Unary(..) => format!("({})", render_expr(e)),
        _ => render_expr(e),
    }
}
