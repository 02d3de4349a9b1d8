//! Lexer and recursive-descent parser for plan text.
//!
//! ```text
//! program := stmt*
//! stmt    := bind? ("call" IDENT "(" args ")" | "eval" STRING "(" args ")")
//!          | IDENT "=" expr
//!          | "for" IDENT "in" expr "{" stmt* "}"
//!          | "if" expr "{" stmt* "}" ("else" "{" stmt* "}")?
//!          | "return" expr
//! bind    := IDENT "="
//! args    := (IDENT "=" expr ("," IDENT "=" expr)*)?
//! ```
//!
//! `;` may separate statements and `#` starts a comment.

use std::collections::BTreeMap;

use super::ast::*;
use super::PlanError;

const KEYWORDS: &[&str] = &[
    "call", "eval", "for", "in", "if", "else", "return", "and", "or", "not", "true", "false",
    "null", "True", "False", "None",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Float(f64),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Float(v) => format!("number `{v}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

const PUNCTS: &[&str] = &[
    "==", "!=", "<=", ">=", "(", ")", "{", "}", "[", "]", ",", "=", ".", ":", ";", "+", "-", "*",
    "/", "%", "<", ">",
];

fn lex(text: &str) -> Result<Vec<Token>, PlanError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    let err = |line, col, message: String| PlanError::Parse {
        line,
        col,
        expected: Vec::new(),
        found: message,
    };

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            tokens.push(Token {
                tok: Tok::Ident(word),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let tok = if is_float {
                let v: f64 = lexeme
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| {
                        err(
                            span.line,
                            span.col,
                            format!("number `{lexeme}` out of range"),
                        )
                    })?;
                Tok::Float(v)
            } else {
                Tok::Int(lexeme.parse().map_err(|_| {
                    err(
                        span.line,
                        span.col,
                        format!("integer literal `{lexeme}` out of range"),
                    )
                })?)
            };
            tokens.push(Token { tok, span });
            continue;
        }
        if c == '"' {
            i += 1;
            col += 1;
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(err(
                        span.line,
                        span.col,
                        "unterminated string literal".into(),
                    ));
                };
                i += 1;
                col += 1;
                match ch {
                    '"' => break,
                    '\\' => {
                        let esc = chars.get(i).copied();
                        i += 1;
                        col += 1;
                        s.push(match esc {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('r') => '\r',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            other => {
                                return Err(err(
                                    line,
                                    col,
                                    format!("unknown escape `\\{}`", other.unwrap_or(' ')),
                                ))
                            }
                        });
                    }
                    '\n' => {
                        line += 1;
                        col = 1;
                        s.push('\n');
                    }
                    other => s.push(other),
                }
            }
            tokens.push(Token {
                tok: Tok::Str(s),
                span,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        if let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            i += p.len();
            col += p.len() as u32;
            tokens.push(Token {
                tok: Tok::Punct(p),
                span,
            });
            continue;
        }
        return Err(err(line, col, format!("unexpected character `{c}`")));
    }
    tokens.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, PlanError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let span = self.span();
        Err(PlanError::Parse {
            line: span.line,
            col: span.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &'static str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(&[p])
        }
    }

    fn expect_keyword(&mut self, kw: &'static str) -> PResult<()> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(&[kw])
        }
    }

    fn expect_ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn program(&mut self) -> PResult<PlanProgram> {
        let stmts = self.stmts_until(|t| matches!(t, Tok::Eof))?;
        Ok(PlanProgram { stmts })
    }

    fn stmts_until(&mut self, stop: impl Fn(&Tok) -> bool) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            while self.eat_punct(";") {}
            if stop(self.peek()) {
                return Ok(out);
            }
            if matches!(self.peek(), Tok::Eof) {
                return self.error(&["}"]);
            }
            out.push(self.stmt()?);
        }
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let body = self.stmts_until(|t| matches!(t, Tok::Punct("}")))?;
        self.expect_punct("}")?;
        Ok(body)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Ident(w) if w == "for" => {
                self.bump();
                let var = self.expect_ident()?;
                self.expect_keyword("in")?;
                let iter = self.expr()?;
                let body = self.block()?;
                StmtKind::For { var, iter, body }
            }
            Tok::Ident(w) if w == "if" => {
                self.bump();
                let cond = self.expr()?;
                let then_body = self.block()?;
                let else_body = if self.is_keyword("else") {
                    self.bump();
                    self.block()?
                } else {
                    Vec::new()
                };
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                }
            }
            Tok::Ident(w) if w == "return" => {
                self.bump();
                StmtKind::Return(self.expr()?)
            }
            Tok::Ident(w) if w == "call" || w == "eval" => self.invocation(None)?,
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                self.bump();
                self.expect_punct("=")?;
                if self.is_keyword("call") || self.is_keyword("eval") {
                    self.invocation(Some(w))?
                } else {
                    StmtKind::Assign {
                        var: w,
                        expr: self.expr()?,
                    }
                }
            }
            _ => return self.error(&["statement"]),
        };
        Ok(Stmt { kind, span })
    }

    fn invocation(&mut self, bind: Option<String>) -> PResult<StmtKind> {
        if self.is_keyword("call") {
            self.bump();
            let tool = self.expect_ident()?;
            let args = self.call_args()?;
            Ok(StmtKind::ToolCall { tool, args, bind })
        } else {
            self.expect_keyword("eval")?;
            let template = match self.peek().clone() {
                Tok::Str(s) => {
                    self.bump();
                    s
                }
                _ => return self.error(&["string literal"]),
            };
            let args = self.call_args()?;
            Ok(StmtKind::AiEval {
                template,
                args,
                bind,
            })
        }
    }

    fn call_args(&mut self) -> PResult<CallArgExprs> {
        self.expect_punct("(")?;
        let mut args = BTreeMap::new();
        while !self.is_punct(")") {
            let span = self.span();
            let name = self.expect_ident()?;
            self.expect_punct("=")?;
            let value = self.expr()?;
            if args.insert(name.clone(), value).is_some() {
                return Err(PlanError::Parse {
                    line: span.line,
                    col: span.col,
                    expected: Vec::new(),
                    found: format!("duplicate argument `{name}`"),
                });
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.is_keyword("or") {
            self.bump();
            lhs = Expr::binary(BinOp::Or, lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.is_keyword("and") {
            self.bump();
            lhs = Expr::binary(BinOp::And, lhs, self.not_expr()?);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.is_keyword("not") {
            self.bump();
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.not_expr()?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Punct(p) => match BinOp::from_symbol(p) {
                    Some(
                        op
                        @ (BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge),
                    ) => op,
                    _ => break,
                },
                Tok::Ident(w) if w == "in" => BinOp::In,
                _ => break,
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.add_expr()?);
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = if self.is_punct("+") {
                BinOp::Add
            } else if self.is_punct("-") {
                BinOp::Sub
            } else {
                break;
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.mul_expr()?);
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = if self.is_punct("*") {
                BinOp::Mul
            } else if self.is_punct("/") {
                BinOp::Div
            } else if self.is_punct("%") {
                BinOp::Mod
            } else {
                break;
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.unary_expr()?);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.is_punct("-") {
            // A minus directly before a number literal is part of the literal.
            match self.peek_at(1).clone() {
                Tok::Int(v) => {
                    let span = self.span();
                    self.bump();
                    self.bump();
                    let neg = -(v as i128);
                    let lit = i64::try_from(neg).map_err(|_| PlanError::Parse {
                        line: span.line,
                        col: span.col,
                        expected: Vec::new(),
                        found: format!("integer literal `-{v}` out of range"),
                    })?;
                    return self.postfix(Expr::Lit(Literal::Int(lit)));
                }
                Tok::Float(v) => {
                    self.bump();
                    self.bump();
                    return self.postfix(Expr::Lit(Literal::Float(-v)));
                }
                _ => {
                    self.bump();
                    return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary_expr()?)));
                }
            }
        }
        let base = self.primary()?;
        self.postfix(base)
    }

    fn postfix(&mut self, mut base: Expr) -> PResult<Expr> {
        loop {
            if self.eat_punct(".") {
                let name = match self.peek().clone() {
                    Tok::Ident(w) => {
                        self.bump();
                        w
                    }
                    _ => return self.error(&["field name"]),
                };
                base = Expr::Field(Box::new(base), name);
            } else if self.eat_punct("[") {
                let start = if self.is_punct(":") {
                    None
                } else {
                    Some(Box::new(self.expr()?))
                };
                if self.eat_punct(":") {
                    let end = if self.is_punct("]") {
                        None
                    } else {
                        Some(Box::new(self.expr()?))
                    };
                    self.expect_punct("]")?;
                    base = Expr::Slice {
                        base: Box::new(base),
                        start,
                        end,
                    };
                } else {
                    self.expect_punct("]")?;
                    let index = start.expect("index expression parsed");
                    base = Expr::Index(Box::new(base), index);
                }
            } else {
                return Ok(base);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                let v = i64::try_from(v).map_err(|_| PlanError::Parse {
                    line: span.line,
                    col: span.col,
                    expected: Vec::new(),
                    found: format!("integer literal `{v}` out of range"),
                })?;
                Ok(Expr::Lit(Literal::Int(v)))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::Lit(Literal::Float(v)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "True" => {
                    self.bump();
                    Ok(Expr::Lit(Literal::Bool(true)))
                }
                "false" | "False" => {
                    self.bump();
                    Ok(Expr::Lit(Literal::Bool(false)))
                }
                "null" | "None" => {
                    self.bump();
                    Ok(Expr::Lit(Literal::Null))
                }
                _ if KEYWORDS.contains(&w.as_str()) => self.error(&["expression"]),
                _ => {
                    self.bump();
                    if self.is_punct("(") {
                        if !BUILTINS.contains(&w.as_str()) {
                            return Err(PlanError::Parse {
                                line: span.line,
                                col: span.col,
                                expected: BUILTINS.iter().map(|s| s.to_string()).collect(),
                                found: format!(
                                    "unknown function `{w}` (tool calls must be statements)"
                                ),
                            });
                        }
                        self.bump();
                        let mut args = Vec::new();
                        while !self.is_punct(")") {
                            args.push(self.expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                        self.expect_punct(")")?;
                        Ok(Expr::Builtin(w, args))
                    } else {
                        Ok(Expr::Var(w))
                    }
                }
            },
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("[") => {
                self.bump();
                let mut items = Vec::new();
                while !self.is_punct("]") {
                    items.push(self.expr()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct("]")?;
                Ok(Expr::List(items))
            }
            _ => self.error(&["expression"]),
        }
    }
}

/// Parse plan text into IR without scope checks.
pub(crate) fn parse_syntax(text: &str) -> Result<PlanProgram, PlanError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.program()
}

/// Parse a single expression.
pub fn parse_expr(text: &str) -> Result<Expr, PlanError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let e = parser.expr()?;
    if !matches!(parser.peek(), Tok::Eof) {
        return parser.error(&["end of expression"]);
    }
    Ok(e)
}

pub(crate) fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}
