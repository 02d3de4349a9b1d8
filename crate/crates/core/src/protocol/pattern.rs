//! Abstract-state patterns and the tracked state used by static checking.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ProtocolError;

/// One constraint over a state variable, as written in a manifest's
/// `pre`/`post` block.
#[derive(Debug, Clone, PartialEq)]
pub enum StatePattern {
    /// An exact string, number or boolean.
    Concrete(Value),
    /// `"*"`: any non-null value.
    Any,
    /// `"a|b|c"`: one of at least two distinct strings.
    OneOf(Vec<String>),
    /// `"$name"`: equal to the named call parameter.
    ParamRef(String),
    /// `""`: must be null (or absent).
    Null,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parse the textual pattern form. Total: text that fits no special form is
/// a concrete string.
pub fn parse_pattern(text: &str) -> StatePattern {
    if text.is_empty() {
        return StatePattern::Null;
    }
    if text == "*" {
        return StatePattern::Any;
    }
    if let Some(name) = text.strip_prefix('$') {
        if is_identifier(name) {
            return StatePattern::ParamRef(name.to_string());
        }
    }
    if text.contains('|') {
        let mut values: Vec<String> = Vec::new();
        for part in text.split('|').filter(|p| !p.is_empty()) {
            if !values.iter().any(|v| v == part) {
                values.push(part.to_string());
            }
        }
        if values.len() >= 2 {
            return StatePattern::OneOf(values);
        }
    }
    StatePattern::Concrete(Value::String(text.to_string()))
}

impl StatePattern {
    /// Pattern from a manifest JSON value. Strings go through
    /// [`parse_pattern`]; other scalars are concrete; `null` is [`StatePattern::Null`].
    pub fn from_json(value: &Value) -> StatePattern {
        match value {
            Value::String(s) => parse_pattern(s),
            Value::Null => StatePattern::Null,
            other => StatePattern::Concrete(other.clone()),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            StatePattern::Concrete(v) => v.clone(),
            other => Value::String(render_pattern(other)),
        }
    }

    pub fn is_concrete(&self) -> bool {
        matches!(self, StatePattern::Concrete(_) | StatePattern::Null)
    }
}

/// Canonical text of a pattern. Inverse of [`parse_pattern`] on canonical text.
pub fn render_pattern(pattern: &StatePattern) -> String {
    match pattern {
        StatePattern::Concrete(Value::String(s)) => s.clone(),
        StatePattern::Concrete(v) => v.to_string(),
        StatePattern::Any => "*".to_string(),
        StatePattern::OneOf(values) => values.join("|"),
        StatePattern::ParamRef(name) => format!("${name}"),
        StatePattern::Null => String::new(),
    }
}

impl fmt::Display for StatePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatePattern::Null => f.write_str("null"),
            StatePattern::Concrete(v) => write!(f, "{v}"),
            other => write!(f, "\"{}\"", render_pattern(other)),
        }
    }
}

impl Serialize for StatePattern {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StatePattern {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        Ok(StatePattern::from_json(&v))
    }
}

/// A `pre` or `post` declaration: variable name to pattern.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AbstractState(pub BTreeMap<String, StatePattern>);

impl AbstractState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, pattern: StatePattern) -> Self {
        self.0.insert(key.to_string(), pattern);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &StatePattern)> {
        self.0.iter()
    }

    pub fn get(&self, key: &str) -> Option<&StatePattern> {
        self.0.get(key)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Names of parameters referenced with `$name`.
    pub fn param_refs(&self) -> impl Iterator<Item = &str> {
        self.0.values().filter_map(|p| match p {
            StatePattern::ParamRef(n) => Some(n.as_str()),
            _ => None,
        })
    }
}

/// What the static checker knows about one state variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackedValue {
    /// Exactly this value (`Value::Null` for a known null).
    Known(Value),
    /// Some non-null value that is not statically known.
    Unknown,
    /// A non-null string from this set.
    OneOf(Vec<String>),
    /// Possibly null, possibly anything. Produced by joining paths that
    /// disagree on nullness.
    Indeterminate,
}

impl TrackedValue {
    fn is_nonnull(&self) -> bool {
        match self {
            TrackedValue::Known(v) => !v.is_null(),
            TrackedValue::Unknown | TrackedValue::OneOf(_) => true,
            TrackedValue::Indeterminate => false,
        }
    }
}

impl fmt::Display for TrackedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrackedValue::Known(v) => write!(f, "{v}"),
            TrackedValue::Unknown => f.write_str("<unknown non-null>"),
            TrackedValue::OneOf(vs) => write!(f, "<one of {}>", vs.join("|")),
            TrackedValue::Indeterminate => f.write_str("<indeterminate>"),
        }
    }
}

/// Statically known call arguments, by parameter name.
pub type CallArgs = BTreeMap<String, TrackedValue>;

/// State tracked by the validator. Never stores parameter references.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackedState(pub BTreeMap<String, TrackedValue>);

impl TrackedState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State with every variable known exactly.
    pub fn from_concrete(values: &BTreeMap<String, Value>) -> Self {
        TrackedState(
            values
                .iter()
                .map(|(k, v)| (k.clone(), TrackedValue::Known(v.clone())))
                .collect(),
        )
    }

    pub fn with(mut self, key: &str, value: TrackedValue) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&TrackedValue> {
        self.0.get(key)
    }

    pub fn insert(&mut self, key: &str, value: TrackedValue) {
        self.0.insert(key.to_string(), value);
    }

    /// Key-wise join of two path states: agreeing values are kept, values
    /// that are non-null on both sides widen to unknown, anything else
    /// becomes indeterminate. Absent and null are the same thing here.
    pub fn join(&self, other: &TrackedState) -> TrackedState {
        let null = TrackedValue::Known(Value::Null);
        let mut out = BTreeMap::new();
        for key in self.0.keys().chain(other.0.keys()) {
            if out.contains_key(key) {
                continue;
            }
            let a = self.0.get(key).unwrap_or(&null);
            let b = other.0.get(key).unwrap_or(&null);
            let joined = if tracked_equal(a, b) {
                a.clone()
            } else if a.is_nonnull() && b.is_nonnull() {
                TrackedValue::Unknown
            } else {
                TrackedValue::Indeterminate
            };
            if joined != null || (self.0.contains_key(key) && other.0.contains_key(key)) {
                out.insert(key.clone(), joined);
            }
        }
        TrackedState(out)
    }
}

/// JSON equality with numbers compared by value (`1 == 1.0`).
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => x == y,
            _ => x == y,
        },
        _ => a == b,
    }
}

fn tracked_equal(a: &TrackedValue, b: &TrackedValue) -> bool {
    match (a, b) {
        (TrackedValue::Known(x), TrackedValue::Known(y)) => values_equal(x, y),
        (TrackedValue::OneOf(x), TrackedValue::OneOf(y)) => {
            x.len() == y.len() && x.iter().all(|v| y.contains(v))
        }
        _ => a == b,
    }
}

fn string_of(v: &Value) -> Option<&str> {
    v.as_str()
}

/// Does `value` satisfy `pattern`?
///
/// Unknown values satisfy `*` and `$param` but never a concrete pattern.
/// A tracked one-of set satisfies a concrete only when it is that singleton.
pub fn matches(
    pattern: &StatePattern,
    value: &TrackedValue,
    args: &CallArgs,
) -> Result<bool, ProtocolError> {
    use TrackedValue as T;
    Ok(match pattern {
        StatePattern::Concrete(c) => match value {
            T::Known(v) => values_equal(v, c),
            T::OneOf(set) => set.len() == 1 && Some(set[0].as_str()) == string_of(c),
            T::Unknown | T::Indeterminate => false,
        },
        StatePattern::Any => value.is_nonnull(),
        StatePattern::OneOf(allowed) => match value {
            T::Known(v) => string_of(v).is_some_and(|s| allowed.iter().any(|a| a == s)),
            T::OneOf(set) => set.iter().all(|s| allowed.contains(s)),
            T::Unknown | T::Indeterminate => false,
        },
        StatePattern::Null => matches!(value, T::Known(Value::Null)),
        StatePattern::ParamRef(name) => {
            let arg = args
                .get(name)
                .ok_or_else(|| ProtocolError::UnboundParam(name.clone()))?;
            match (value, arg) {
                (T::Indeterminate, _) | (_, T::Indeterminate) => false,
                (T::Known(v), T::Known(a)) => values_equal(v, a),
                (T::Known(Value::Null), _) | (_, T::Known(Value::Null)) => false,
                (T::Unknown, _) | (_, T::Unknown) => true,
                (T::OneOf(set), T::Known(a)) | (T::Known(a), T::OneOf(set)) => {
                    string_of(a).is_some_and(|s| set.iter().any(|x| x == s))
                }
                (T::OneOf(x), T::OneOf(y)) => x.iter().any(|v| y.contains(v)),
            }
        }
    })
}

/// Why a state failed a requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    Mismatch,
    Missing,
    UnboundParam(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationDetail {
    pub key: String,
    pub expected: StatePattern,
    pub actual: Option<TrackedValue>,
    pub reason: ViolationReason,
}

impl fmt::Display for ViolationDetail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.reason, &self.actual) {
            (ViolationReason::UnboundParam(p), _) => write!(
                f,
                "key `{}` refers to parameter `{p}` which the call does not pass",
                self.key
            ),
            (ViolationReason::Missing, _) | (_, None) => write!(
                f,
                "key `{}` expected {} but the state does not define it",
                self.key, self.expected
            ),
            (ViolationReason::Mismatch, Some(actual)) => write!(
                f,
                "key `{}` expected {} but found {actual}",
                self.key, self.expected
            ),
        }
    }
}

/// Check every key of `requirement` against `state`. All violations are
/// returned, not only the first.
pub fn satisfies(
    state: &TrackedState,
    requirement: &AbstractState,
    args: &CallArgs,
) -> Result<(), Vec<ViolationDetail>> {
    let mut violations = Vec::new();
    for (key, pattern) in requirement.iter() {
        let detail = |actual: Option<TrackedValue>, reason| ViolationDetail {
            key: key.clone(),
            expected: pattern.clone(),
            actual,
            reason,
        };
        match state.get(key) {
            None if *pattern == StatePattern::Null => {}
            None => violations.push(detail(None, ViolationReason::Missing)),
            Some(value) => match matches(pattern, value, args) {
                Ok(true) => {}
                Ok(false) => {
                    violations.push(detail(Some(value.clone()), ViolationReason::Mismatch))
                }
                Err(ProtocolError::UnboundParam(p)) => violations.push(detail(
                    Some(value.clone()),
                    ViolationReason::UnboundParam(p),
                )),
                Err(_) => unreachable!("matches only fails with UnboundParam"),
            },
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Apply a postcondition: written keys take the pattern's value, other keys
/// are preserved.
pub fn apply_post(
    state: &TrackedState,
    post: &AbstractState,
    args: &CallArgs,
) -> Result<TrackedState, ProtocolError> {
    let mut next = state.clone();
    for (key, pattern) in post.iter() {
        let value = match pattern {
            StatePattern::Concrete(v) => TrackedValue::Known(v.clone()),
            StatePattern::Null => TrackedValue::Known(Value::Null),
            StatePattern::Any => TrackedValue::Unknown,
            StatePattern::OneOf(values) => TrackedValue::OneOf(values.clone()),
            StatePattern::ParamRef(name) => match args.get(name) {
                Some(TrackedValue::Known(v)) => TrackedValue::Known(v.clone()),
                Some(_) => TrackedValue::Unknown,
                None => return Err(ProtocolError::UnboundParam(name.clone())),
            },
        };
        next.insert(key, value);
    }
    Ok(next)
}
