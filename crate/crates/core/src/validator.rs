//! Static plan validation against a manifest set.
//!
//! Walks the control-flow graph tracking the abstract state. Every tool call
//! must satisfy its manifest's `pre` in the current state, after which its
//! `post` is applied. Arguments are type-checked against `input_schema`, and
//! field accesses on call results are checked against `output_schema`.
//!
//! Branch arms start from the same state and are joined afterwards. Loop
//! bodies are iterated until the state at the loop head stops changing, so a
//! body whose exit state breaks its own entry requirements is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::planlang::{
    build_cfg, BinOp, BlockItem, CallKind, CallSite, Expr, Literal, PlanCfg, PlanProgram, Region,
    Span,
};
use crate::protocol::{
    apply_post, check_value, satisfies, CallArgs, ManifestSet, ProtocolError, SchemaKind,
    ToolManifest, TrackedState, TrackedValue, TypeError, TypeErrorKind, ValueSchema,
};

/// Guard against non-terminating loop analysis. The state lattice has height
/// three per key, so real programs converge in a handful of passes.
const MAX_LOOP_PASSES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    PreconditionUnmet,
    UnknownTool,
    ArgTypeError,
    ReturnUseError,
    ProvenanceLint,
}

impl ViolationKind {
    pub fn is_lint(self) -> bool {
        self == ViolationKind::ProvenanceLint
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Program-order index of the call site, when the violation is at a call.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_index: Option<usize>,
    /// Tool name, `ai_eval`, or the statement kind for non-call statements.
    pub at: String,
    pub line: u32,
    pub col: u32,
    /// State key or argument name the violation is about.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {} at `{}`: {}",
            self.line, self.col, self.kind, self.at, self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub final_state: TrackedState,
}

impl ValidationReport {
    /// Violations that make the plan invalid.
    pub fn hard_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| !v.kind.is_lint())
    }
}

/// What is statically known about a plan variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarInfo {
    /// Schema of the value, when it flows from a declared output.
    pub ty: Option<ValueSchema>,
    /// Tools whose output this value was derived from.
    pub origins: BTreeSet<String>,
    /// Value, when it is a compile-time constant.
    pub constant: Option<Value>,
}

/// Static type environment: plan variable to what is known about it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TypeEnv {
    pub vars: BTreeMap<String, VarInfo>,
}

impl TypeEnv {
    fn join(&self, other: &TypeEnv) -> TypeEnv {
        let vars = self
            .vars
            .iter()
            .filter_map(|(k, a)| {
                let b = other.vars.get(k)?;
                Some((
                    k.clone(),
                    VarInfo {
                        ty: if a.ty == b.ty { a.ty.clone() } else { None },
                        origins: a.origins.union(&b.origins).cloned().collect(),
                        constant: if a.constant == b.constant {
                            a.constant.clone()
                        } else {
                            None
                        },
                    },
                ))
            })
            .collect();
        TypeEnv { vars }
    }

    /// Join that keeps every key of `self`, as needed at a loop head.
    fn widen(&self, other: &TypeEnv) -> TypeEnv {
        let mut joined = self.join(other);
        for (k, v) in &self.vars {
            joined.vars.entry(k.clone()).or_insert_with(|| v.clone());
        }
        joined
    }
}

/// Compile-time value of an expression, if it has one.
pub fn constant_value(expr: &Expr, env: &TypeEnv) -> Option<Value> {
    match expr {
        Expr::Lit(l) => Some(l.to_value()),
        Expr::Var(v) => env.vars.get(v).and_then(|i| i.constant.clone()),
        Expr::List(items) => items
            .iter()
            .map(|e| constant_value(e, env))
            .collect::<Option<Vec<_>>>()
            .map(Value::Array),
        _ => None,
    }
}

fn origins_of(expr: &Expr, env: &TypeEnv) -> BTreeSet<String> {
    expr.free_vars()
        .into_iter()
        .filter_map(|v| env.vars.get(v))
        .flat_map(|i| i.origins.iter().cloned())
        .collect()
}

fn leaf(kind: SchemaKind) -> Option<ValueSchema> {
    Some(ValueSchema::leaf(kind))
}

/// Whether an object schema declares its shape. An object with no listed
/// properties is treated as open.
fn is_closed_object(schema: &ValueSchema) -> bool {
    schema.kind == SchemaKind::Object && !schema.properties.is_empty()
}

/// Static type of `expr`. Field and index accesses that a known schema rules
/// out are reported through `errors`.
fn type_of(expr: &Expr, env: &TypeEnv, errors: &mut Vec<String>) -> Option<ValueSchema> {
    match expr {
        Expr::Lit(Literal::Int(_)) => leaf(SchemaKind::Integer),
        Expr::Lit(Literal::Float(_)) => leaf(SchemaKind::Number),
        Expr::Lit(Literal::Str(_)) => leaf(SchemaKind::String),
        Expr::Lit(Literal::Bool(_)) => leaf(SchemaKind::Boolean),
        Expr::Lit(Literal::Null) => None,
        Expr::Var(v) => env.vars.get(v).and_then(|i| i.ty.clone()),
        Expr::Field(base, name) => {
            let base_ty = type_of(base, env, errors)?;
            match base_ty.kind {
                SchemaKind::Object => match base_ty.property(name) {
                    Some(p) => Some(p.clone()),
                    None if is_closed_object(&base_ty) => {
                        errors.push(format!(
                            "field `{name}` is not declared in the output schema (known: {})",
                            base_ty
                                .properties
                                .keys()
                                .cloned()
                                .collect::<Vec<_>>()
                                .join(", ")
                        ));
                        None
                    }
                    None => None,
                },
                other => {
                    errors.push(format!(
                        "field `{name}` accessed on a value of type {other}"
                    ));
                    None
                }
            }
        }
        Expr::Index(base, index) => {
            let base_ty = type_of(base, env, errors);
            let index_ty = type_of(index, env, errors);
            let base_ty = base_ty?;
            match base_ty.kind {
                SchemaKind::Array => base_ty.items.as_deref().cloned(),
                SchemaKind::String => leaf(SchemaKind::String),
                SchemaKind::Object => match constant_value(index, env) {
                    Some(Value::String(key)) => match base_ty.property(&key) {
                        Some(p) => Some(p.clone()),
                        None if is_closed_object(&base_ty) => {
                            errors
                                .push(format!("key `{key}` is not declared in the output schema"));
                            None
                        }
                        None => None,
                    },
                    _ => None,
                },
                other => {
                    let _ = index_ty;
                    errors.push(format!("indexing a value of type {other}"));
                    None
                }
            }
        }
        Expr::Slice { base, start, end } => {
            for e in [start, end].into_iter().flatten() {
                type_of(e, env, errors);
            }
            let base_ty = type_of(base, env, errors)?;
            match base_ty.kind {
                SchemaKind::Array | SchemaKind::String => Some(base_ty),
                other => {
                    errors.push(format!("slicing a value of type {other}"));
                    None
                }
            }
        }
        Expr::Binary(op, l, r) => {
            let lt = type_of(l, env, errors);
            let rt = type_of(r, env, errors);
            match op {
                BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    leaf(SchemaKind::Boolean)
                }
                BinOp::And | BinOp::Or | BinOp::In => leaf(SchemaKind::Boolean),
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                    match (lt.map(|t| t.kind), rt.map(|t| t.kind)) {
                        (Some(SchemaKind::Integer), Some(SchemaKind::Integer))
                            if *op != BinOp::Div =>
                        {
                            leaf(SchemaKind::Integer)
                        }
                        (
                            Some(SchemaKind::Integer | SchemaKind::Number),
                            Some(SchemaKind::Integer | SchemaKind::Number),
                        ) => leaf(SchemaKind::Number),
                        (Some(SchemaKind::String), Some(SchemaKind::String))
                            if *op == BinOp::Add =>
                        {
                            leaf(SchemaKind::String)
                        }
                        _ => None,
                    }
                }
            }
        }
        Expr::Unary(_, e) => {
            let t = type_of(e, env, errors);
            match expr {
                Expr::Unary(crate::planlang::UnOp::Not, _) => leaf(SchemaKind::Boolean),
                _ => t.filter(|t| matches!(t.kind, SchemaKind::Integer | SchemaKind::Number)),
            }
        }
        Expr::List(items) => {
            for e in items {
                type_of(e, env, errors);
            }
            None
        }
        Expr::Builtin(name, args) => {
            let arg_types: Vec<_> = args.iter().map(|a| type_of(a, env, errors)).collect();
            match name.as_str() {
                "len" | "int" | "round" => leaf(SchemaKind::Integer),
                "float" => leaf(SchemaKind::Number),
                "str" | "format" | "lower" | "upper" => leaf(SchemaKind::String),
                "contains" => leaf(SchemaKind::Boolean),
                "keys" => Some(ValueSchema::array(ValueSchema::leaf(SchemaKind::String))),
                "abs" => arg_types.into_iter().next().flatten(),
                _ => None,
            }
        }
    }
}

/// Check one call's arguments against the tool's input schema.
///
/// Constant arguments are checked as values. Other arguments are checked by
/// kind when their static type is known, and accepted otherwise.
pub fn typecheck_call(site: &CallSite, manifest: &ToolManifest, env: &TypeEnv) -> Vec<TypeError> {
    let schema = &manifest.input_schema;
    let mut errors = Vec::new();
    for name in &schema.required {
        let passed_null = site
            .args
            .get(name)
            .and_then(|e| constant_value(e, env))
            .is_some_and(|v| v.is_null());
        if !site.args.contains_key(name) || passed_null {
            errors.push(TypeError {
                path: "$".into(),
                kind: TypeErrorKind::MissingRequired { name: name.clone() },
            });
        }
    }
    for (name, expr) in &site.args {
        let path = format!("$.{name}");
        let Some(param) = schema.property(name) else {
            if !schema.properties.is_empty() {
                errors.push(TypeError {
                    path,
                    kind: TypeErrorKind::KindMismatch {
                        expected: SchemaKind::Object,
                        found: "undeclared parameter".into(),
                    },
                });
            }
            continue;
        };
        if let Some(value) = constant_value(expr, env) {
            if value.is_null() {
                continue;
            }
            if let Err(errs) = check_value(param, &value) {
                errors.extend(errs.into_iter().map(|e| TypeError {
                    path: format!("{path}{}", e.path.trim_start_matches('$')),
                    kind: e.kind,
                }));
            }
        } else if let Some(ty) = type_of(expr, env, &mut Vec::new()) {
            if !ty.kind.fits(param.kind) {
                errors.push(TypeError {
                    path,
                    kind: TypeErrorKind::KindMismatch {
                        expected: param.kind,
                        found: ty.kind.to_string(),
                    },
                });
            }
        }
    }
    errors
}

struct Walker<'a> {
    cfg: &'a PlanCfg,
    manifests: &'a ManifestSet,
    violations: Vec<Violation>,
    seen: BTreeSet<(
        u32,
        u32,
        Option<usize>,
        ViolationKind,
        Option<String>,
        String,
    )>,
}

impl Walker<'_> {
    fn report(&mut self, v: Violation) {
        // Loop bodies are walked several times; keep the first report of each.
        let id = (
            v.line,
            v.col,
            v.call_index,
            v.kind,
            v.key.clone(),
            v.at.clone(),
        );
        if self.seen.insert(id) {
            self.violations.push(v);
        }
    }

    fn expr_uses(
        &mut self,
        expr: &Expr,
        env: &TypeEnv,
        span: Span,
        at: &str,
        call_index: Option<usize>,
    ) {
        let mut errors = Vec::new();
        type_of(expr, env, &mut errors);
        for detail in errors {
            self.report(Violation {
                kind: ViolationKind::ReturnUseError,
                call_index,
                at: at.to_string(),
                line: span.line,
                col: span.col,
                key: None,
                detail,
            });
        }
    }

    fn regions(
        &mut self,
        regions: &[Region],
        mut state: TrackedState,
        mut env: TypeEnv,
    ) -> (TrackedState, TypeEnv) {
        for region in regions {
            (state, env) = match region {
                Region::Block(id) => self.block(*id, state, env),
                Region::Branch {
                    cond,
                    span,
                    then,
                    else_,
                    ..
                } => {
                    self.expr_uses(cond, &env, *span, "if", None);
                    let (s1, e1) = self.regions(then, state.clone(), env.clone());
                    let (s2, e2) = self.regions(else_, state, env);
                    (s1.join(&s2), e1.join(&e2))
                }
                Region::Loop {
                    var,
                    iter,
                    span,
                    body,
                } => {
                    self.expr_uses(iter, &env, *span, "for", None);
                    let iter_ty = type_of(iter, &env, &mut Vec::new());
                    let item_ty = match &iter_ty {
                        Some(t) if t.kind == SchemaKind::Array => t.items.as_deref().cloned(),
                        Some(t) if t.kind == SchemaKind::String => leaf(SchemaKind::String),
                        Some(t) if t.kind == SchemaKind::Object => leaf(SchemaKind::String),
                        Some(t) => {
                            self.report(Violation {
                                kind: ViolationKind::ReturnUseError,
                                call_index: None,
                                at: "for".into(),
                                line: span.line,
                                col: span.col,
                                key: None,
                                detail: format!("iterating over a value of type {}", t.kind),
                            });
                            None
                        }
                        None => None,
                    };
                    let loop_var = VarInfo {
                        ty: item_ty,
                        origins: origins_of(iter, &env),
                        constant: None,
                    };
                    let (mut head_state, mut head_env) = (state, env);
                    for _ in 0..MAX_LOOP_PASSES {
                        let mut body_env = head_env.clone();
                        body_env.vars.insert(var.clone(), loop_var.clone());
                        let (exit_state, exit_env) =
                            self.regions(body, head_state.clone(), body_env);
                        let next_state = head_state.join(&exit_state);
                        let next_env = head_env.widen(&exit_env);
                        if next_state == head_state && next_env == head_env {
                            break;
                        }
                        head_state = next_state;
                        head_env = next_env;
                    }
                    (head_state, head_env)
                }
            };
        }
        (state, env)
    }

    fn block(
        &mut self,
        id: usize,
        mut state: TrackedState,
        mut env: TypeEnv,
    ) -> (TrackedState, TypeEnv) {
        for item in &self.cfg.block(id).items {
            match item {
                BlockItem::Call(site) => state = self.call(site, state, &mut env),
                BlockItem::Assign { var, expr, span } => {
                    self.expr_uses(expr, &env, *span, "assign", None);
                    let info = VarInfo {
                        ty: type_of(expr, &env, &mut Vec::new()),
                        origins: origins_of(expr, &env),
                        constant: constant_value(expr, &env),
                    };
                    env.vars.insert(var.clone(), info);
                }
                BlockItem::Return { expr, span } => {
                    self.expr_uses(expr, &env, *span, "return", None)
                }
            }
        }
        (state, env)
    }

    fn call(&mut self, site: &CallSite, state: TrackedState, env: &mut TypeEnv) -> TrackedState {
        let label = site.label().to_string();
        for expr in site.args.values() {
            self.expr_uses(expr, env, site.span, &label, Some(site.index));
        }
        let violation = |kind, key: Option<String>, detail: String| Violation {
            kind,
            call_index: Some(site.index),
            at: label.clone(),
            line: site.span.line,
            col: site.span.col,
            key,
            detail,
        };

        if site.kind == CallKind::AiEval {
            if let Some(b) = &site.bind {
                let origins = site
                    .args
                    .values()
                    .flat_map(|e| origins_of(e, env))
                    .collect();
                env.vars.insert(
                    b.clone(),
                    VarInfo {
                        ty: None,
                        origins,
                        constant: None,
                    },
                );
            }
            return state;
        }

        let Some(manifest) = self.manifests.get(&label) else {
            self.report(violation(
                ViolationKind::UnknownTool,
                None,
                format!("no manifest named `{label}`"),
            ));
            if let Some(b) = &site.bind {
                env.vars.insert(b.clone(), VarInfo::default());
            }
            return state;
        };

        for err in typecheck_call(site, manifest, env) {
            let key = match &err.kind {
                TypeErrorKind::MissingRequired { name } => Some(name.clone()),
                _ => err
                    .path
                    .strip_prefix("$.")
                    .map(|p| p.split(['.', '[']).next().unwrap_or(p).to_string()),
            };
            self.report(violation(ViolationKind::ArgTypeError, key, err.to_string()));
        }

        for (param, sources) in &manifest.pre_tools {
            let Some(expr) = site.args.get(param) else {
                continue;
            };
            let origins = origins_of(expr, env);
            if !sources.iter().any(|s| origins.contains(s)) {
                let found = if origins.is_empty() {
                    "no tool output".to_string()
                } else {
                    origins.iter().cloned().collect::<Vec<_>>().join(", ")
                };
                self.report(violation(
                    ViolationKind::ProvenanceLint,
                    Some(param.clone()),
                    format!(
                        "argument `{param}` should come from {} but flows from {found}",
                        sources.join(" or ")
                    ),
                ));
            }
        }

        let mut args: CallArgs = site
            .args
            .iter()
            .map(|(k, e)| {
                let v = match constant_value(e, env) {
                    Some(v) => TrackedValue::Known(v),
                    None => TrackedValue::Unknown,
                };
                (k.clone(), v)
            })
            .collect();

        if let Err(details) = satisfies(&state, &manifest.pre, &args) {
            for d in details {
                self.report(violation(
                    ViolationKind::PreconditionUnmet,
                    Some(d.key.clone()),
                    d.to_string(),
                ));
            }
        }

        let next = loop {
            match apply_post(&state, &manifest.post, &args) {
                Ok(s) => break s,
                Err(ProtocolError::UnboundParam(p)) => {
                    self.report(violation(
                        ViolationKind::ArgTypeError,
                        Some(p.clone()),
                        format!(
                            "postcondition writes parameter `{p}` but the call does not pass it"
                        ),
                    ));
                    args.insert(p, TrackedValue::Unknown);
                }
                Err(other) => unreachable!("apply_post failed with {other}"),
            }
        };

        if let Some(b) = &site.bind {
            env.vars.insert(
                b.clone(),
                VarInfo {
                    ty: Some(manifest.output_schema.clone()),
                    origins: BTreeSet::from([label.clone()]),
                    constant: None,
                },
            );
        }
        next
    }
}

/// Validate a control-flow graph against `manifests`, starting from
/// `initial`. All violations are collected.
pub fn validate(
    cfg: &PlanCfg,
    manifests: &ManifestSet,
    initial: &TrackedState,
) -> ValidationReport {
    let mut walker = Walker {
        cfg,
        manifests,
        violations: Vec::new(),
        seen: BTreeSet::new(),
    };
    let (final_state, _) = walker.regions(&cfg.regions, initial.clone(), TypeEnv::default());
    let mut violations = walker.violations;
    violations.sort_by_key(|v| (v.line, v.col, v.call_index));
    let valid = violations.iter().all(|v| v.kind.is_lint());
    ValidationReport {
        valid,
        violations,
        final_state,
    }
}

/// Build the graph and validate it.
pub fn validate_program(
    program: &PlanProgram,
    manifests: &ManifestSet,
    initial: &TrackedState,
) -> ValidationReport {
    validate(&build_cfg(program), manifests, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planlang::parse_plan;
    use crate::protocol::{parse_pattern, AbstractState};
    use serde_json::json;

    fn state(pairs: &[(&str, &str)]) -> AbstractState {
        pairs.iter().fold(AbstractState::new(), |s, (k, v)| {
            s.with(k, parse_pattern(v))
        })
    }

    fn tool(name: &str, pre: &[(&str, &str)], post: &[(&str, &str)]) -> ToolManifest {
        ToolManifest::new(name, state(pre), state(post))
    }

    fn manifests() -> ManifestSet {
        let mut add = tool(
            "add_to_cart",
            &[("page_type", "store")],
            &[("page_type", "store")],
        );
        add.input_schema = ValueSchema::from_json(&json!({
            "type": "object",
            "properties": {"item_name": {"type": "string"}, "customizations": {"type": "string"}},
            "required": ["item_name"]
        }))
        .unwrap();
        add.pre_tools
            .insert("item_name".into(), vec!["list_menu_items".into()]);
        let mut menu = tool("list_menu_items", &[("page_type", "store")], &[]);
        menu.output_schema = ValueSchema::from_json(&json!({
            "type": "object",
            "properties": {"items": {"type": "array", "items": {"type": "object",
                "properties": {"name": {"type": "string"}, "price": {"type": "number"}}}}}
        }))
        .unwrap();
        let mut goto_store = tool(
            "goto_store",
            &[("page_type", "*")],
            &[("page_type", "store"), ("store", "$store_name")],
        );
        goto_store.input_schema = ValueSchema::from_json(&json!({"store_name": "string"})).unwrap();
        ManifestSet::from_manifests([
            tool("goto_home", &[], &[("page_type", "home")]),
            tool("get_store_details", &[("page_type", "store")], &[]),
            goto_store,
            menu,
            add,
        ])
        .unwrap()
    }

    fn home() -> TrackedState {
        TrackedState::new().with("page_type", TrackedValue::Known(json!("home")))
    }

    fn run(text: &str) -> ValidationReport {
        validate_program(&parse_plan(text).unwrap(), &manifests(), &home())
    }

    fn kinds(r: &ValidationReport) -> Vec<ViolationKind> {
        r.violations.iter().map(|v| v.kind).collect()
    }

    #[test]
    fn empty_plan_is_valid_and_keeps_state() {
        let r = run("");
        assert!(r.valid);
        assert_eq!(r.final_state, home());
    }

    #[test]
    fn loop_call_on_wrong_page_is_rejected() {
        let r = run("h = call goto_home()\nfor s in [1, 2] { d = call get_store_details() }");
        assert!(!r.valid);
        let v = &r.violations[0];
        assert_eq!(v.kind, ViolationKind::PreconditionUnmet);
        assert_eq!(v.key.as_deref(), Some("page_type"));
        assert_eq!(v.at, "get_store_details");
    }

    #[test]
    fn param_ref_post_flows_argument_value() {
        let r = run("call goto_store(store_name=\"taco\")\ncall get_store_details()");
        assert!(r.valid, "{:?}", r.violations);
        assert_eq!(
            r.final_state.get("store"),
            Some(&TrackedValue::Known(json!("taco")))
        );
    }

    #[test]
    fn typecheck_examples() {
        let r = run("call goto_store(store_name=\"x\")\nm = call list_menu_items()\ncall add_to_cart(item_name=m.items[0].name)");
        assert!(r.valid, "{:?}", r.violations);
        assert!(r.violations.is_empty());

        let r = run("call goto_store(store_name=\"x\")\ncall add_to_cart()");
        assert_eq!(kinds(&r), vec![ViolationKind::ArgTypeError]);
        assert_eq!(r.violations[0].key.as_deref(), Some("item_name"));

        let r = run("call goto_store(store_name=\"x\")\ncall add_to_cart(item_name=42)");
        assert!(kinds(&r).contains(&ViolationKind::ArgTypeError));

        let r = run("call goto_store(store_name=\"x\")\nm = call list_menu_items()\ncall add_to_cart(item_name=m.items[0].price)");
        assert!(kinds(&r).contains(&ViolationKind::ArgTypeError));
    }

    #[test]
    fn undeclared_output_field_is_a_return_use_error() {
        let r = run("call goto_store(store_name=\"x\")\nm = call list_menu_items()\nx = m.dishes");
        assert_eq!(kinds(&r), vec![ViolationKind::ReturnUseError]);
    }

    #[test]
    fn provenance_is_lint_only() {
        let r = run("call goto_store(store_name=\"x\")\ncall add_to_cart(item_name=\"taco\")");
        assert!(r.valid);
        assert_eq!(kinds(&r), vec![ViolationKind::ProvenanceLint]);
    }

    #[test]
    fn unknown_tool() {
        let r = run("call teleport()");
        assert_eq!(kinds(&r), vec![ViolationKind::UnknownTool]);
        assert!(!r.valid);
    }

    #[test]
    fn branch_join_widens_disagreeing_values() {
        let r = run("c = true\nif c { call goto_store(store_name=\"a\") } else { call goto_home() }\ncall get_store_details()");
        assert!(!r.valid);
        assert_eq!(r.final_state.get("page_type"), Some(&TrackedValue::Unknown));
    }

    #[test]
    fn loop_exit_state_must_reenter_body() {
        // The body leaves the store page, so the second iteration's
        // get_store_details runs on the home page.
        let text = "call goto_store(store_name=\"a\")\nfor i in [1, 2] {\n    call get_store_details()\n    call goto_home()\n}";
        let r = run(text);
        assert!(!r.valid);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].at, "get_store_details");
    }

    #[test]
    fn loop_fixpoint_checks_every_body_call_on_reentry() {
        // The first body call has no precondition, so checking only the
        // body's first tool against the exit state would accept this plan.
        // The second iteration runs `b` on the store page it left behind.
        let ms = ManifestSet::from_manifests([
            tool("a", &[], &[("x", "1")]),
            tool("b", &[("page", "home")], &[("page", "store")]),
        ])
        .unwrap();
        let init = TrackedState::new().with("page", TrackedValue::Known(json!("home")));
        let p = parse_plan("for i in [1, 2] {\n  call a()\n  call b()\n}").unwrap();
        let r = validate_program(&p, &ms, &init);
        assert!(!r.valid);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].at, "b");
    }

    #[test]
    fn deterministic_reports() {
        let text = "for i in [1] { call get_store_details()\n call add_to_cart(item_name=1) }";
        assert_eq!(run(text), run(text));
    }

    #[test]
    fn missing_key_matches_only_null_pattern() {
        let ms = ManifestSet::from_manifests([tool("t", &[("modal", "")], &[])]).unwrap();
        let p = parse_plan("call t()").unwrap();
        assert!(validate_program(&p, &ms, &TrackedState::new()).valid);
        let set = TrackedState::new().with("modal", TrackedValue::Known(json!("cart")));
        assert!(!validate_program(&p, &ms, &set).valid);
    }
}
