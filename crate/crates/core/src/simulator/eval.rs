//! Concrete evaluation of plan expressions over JSON values.

use std::collections::BTreeMap;

use serde_json::{Number, Value};

use crate::planlang::{BinOp, Expr, Literal, UnOp};
use crate::protocol::values_equal;

pub type Vars = BTreeMap<String, Value>;

pub fn truthy(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Bool(b) => *b,
        Value::Number(n) => n.as_f64().is_some_and(|x| x != 0.0),
        Value::String(s) => !s.is_empty(),
        Value::Array(a) => !a.is_empty(),
        Value::Object(o) => !o.is_empty(),
    }
}

/// Text form used by `str` and `format`: strings bare, everything else JSON.
pub fn to_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

fn float(x: f64) -> Result<Value, String> {
    Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| format!("arithmetic produced {x}"))
}

fn num(v: &Value) -> Result<f64, String> {
    v.as_f64()
        .ok_or_else(|| format!("expected a number, found {}", kind(v)))
}

fn int_of(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64(),
        _ => None,
    }
}

/// Python-style index: negative counts from the end.
fn position(i: i64, len: usize) -> Option<usize> {
    let i = if i < 0 { len as i64 + i } else { i };
    (0..len as i64).contains(&i).then_some(i as usize)
}

fn slice_bound(b: Option<i64>, len: usize, default: usize) -> usize {
    match b {
        None => default,
        Some(i) if i < 0 => (len as i64 + i).max(0) as usize,
        Some(i) => (i as usize).min(len),
    }
}

pub fn eval(expr: &Expr, vars: &Vars) -> Result<Value, String> {
    match expr {
        Expr::Lit(l) => Ok(match l {
            Literal::Float(f) => float(*f)?,
            other => other.to_value(),
        }),
        Expr::Var(name) => vars
            .get(name)
            .cloned()
            .ok_or_else(|| format!("variable `{name}` is not bound")),
        Expr::Field(base, name) => match eval(base, vars)? {
            Value::Object(mut o) => o
                .remove(name)
                .ok_or_else(|| format!("object has no field `{name}`")),
            other => Err(format!("field `{name}` on a {}", kind(&other))),
        },
        Expr::Index(base, at) => {
            let b = eval(base, vars)?;
            let i = eval(at, vars)?;
            match (&b, &i) {
                (Value::Array(a), _) => {
                    let k = int_of(&i).ok_or("list index must be an integer")?;
                    position(k, a.len())
                        .map(|p| a[p].clone())
                        .ok_or_else(|| format!("index {k} out of range for length {}", a.len()))
                }
                (Value::String(s), _) => {
                    let chars: Vec<char> = s.chars().collect();
                    let k = int_of(&i).ok_or("string index must be an integer")?;
                    position(k, chars.len())
                        .map(|p| Value::String(chars[p].to_string()))
                        .ok_or_else(|| format!("index {k} out of range for length {}", chars.len()))
                }
                (Value::Object(o), Value::String(k)) => o
                    .get(k)
                    .cloned()
                    .ok_or_else(|| format!("object has no key `{k}`")),
                _ => Err(format!("cannot index a {} with a {}", kind(&b), kind(&i))),
            }
        }
        Expr::Slice { base, start, end } => {
            let b = eval(base, vars)?;
            let bound = |e: &Option<Box<Expr>>| -> Result<Option<i64>, String> {
                match e {
                    None => Ok(None),
                    Some(e) => int_of(&eval(e, vars)?)
                        .map(Some)
                        .ok_or_else(|| "slice bound must be an integer".into()),
                }
            };
            let (s, e) = (bound(start)?, bound(end)?);
            match b {
                Value::Array(a) => {
                    let lo = slice_bound(s, a.len(), 0);
                    let hi = slice_bound(e, a.len(), a.len()).max(lo);
                    Ok(Value::Array(a[lo..hi].to_vec()))
                }
                Value::String(st) => {
                    let chars: Vec<char> = st.chars().collect();
                    let lo = slice_bound(s, chars.len(), 0);
                    let hi = slice_bound(e, chars.len(), chars.len()).max(lo);
                    Ok(Value::String(chars[lo..hi].iter().collect()))
                }
                other => Err(format!("cannot slice a {}", kind(&other))),
            }
        }
        Expr::Unary(op, e) => {
            let v = eval(e, vars)?;
            match op {
                UnOp::Not => Ok(Value::Bool(!truthy(&v))),
                UnOp::Neg => match int_of(&v) {
                    Some(i) => i
                        .checked_neg()
                        .map(Value::from)
                        .ok_or_else(|| "integer overflow".into()),
                    None => float(-num(&v)?),
                },
            }
        }
        Expr::Binary(BinOp::And, l, r) => {
            let a = eval(l, vars)?;
            Ok(Value::Bool(truthy(&a) && truthy(&eval(r, vars)?)))
        }
        Expr::Binary(BinOp::Or, l, r) => {
            let a = eval(l, vars)?;
            Ok(Value::Bool(truthy(&a) || truthy(&eval(r, vars)?)))
        }
        Expr::Binary(op, l, r) => binary(*op, &eval(l, vars)?, &eval(r, vars)?),
        Expr::List(items) => items
            .iter()
            .map(|e| eval(e, vars))
            .collect::<Result<_, _>>()
            .map(Value::Array),
        Expr::Builtin(name, args) => {
            let args: Vec<Value> = args
                .iter()
                .map(|e| eval(e, vars))
                .collect::<Result<_, _>>()?;
            builtin(name, &args)
        }
    }
}

fn int_arith(op: BinOp, a: i64, b: i64) -> Result<Value, String> {
    let r = match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Mod if b == 0 => return Err("modulo by zero".into()),
        BinOp::Mod => a.checked_rem_euclid(b),
        _ => unreachable!("not integer arithmetic"),
    };
    r.map(Value::from).ok_or_else(|| "integer overflow".into())
}

fn compare(a: &Value, b: &Value) -> Result<std::cmp::Ordering, String> {
    match (a, b) {
        (Value::Number(_), Value::Number(_)) => num(a)?
            .partial_cmp(&num(b)?)
            .ok_or_else(|| "incomparable numbers".into()),
        (Value::String(x), Value::String(y)) => Ok(x.cmp(y)),
        _ => Err(format!("cannot order {} and {}", kind(a), kind(b))),
    }
}

fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, String> {
    use std::cmp::Ordering::*;
    match op {
        BinOp::Eq => Ok(Value::Bool(values_equal(a, b))),
        BinOp::Ne => Ok(Value::Bool(!values_equal(a, b))),
        BinOp::Lt => Ok(Value::Bool(compare(a, b)? == Less)),
        BinOp::Le => Ok(Value::Bool(compare(a, b)? != Greater)),
        BinOp::Gt => Ok(Value::Bool(compare(a, b)? == Greater)),
        BinOp::Ge => Ok(Value::Bool(compare(a, b)? != Less)),
        BinOp::In => contains(b, a).map(Value::Bool),
        BinOp::Add => match (a, b) {
            (Value::String(x), Value::String(y)) => Ok(Value::String(format!("{x}{y}"))),
            (Value::Array(x), Value::Array(y)) => {
                Ok(Value::Array(x.iter().chain(y).cloned().collect()))
            }
            _ => arith(op, a, b),
        },
        BinOp::Sub | BinOp::Mul | BinOp::Mod => arith(op, a, b),
        BinOp::Div => {
            let d = num(b)?;
            if d == 0.0 {
                return Err("division by zero".into());
            }
            float(num(a)? / d)
        }
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators handled by eval"),
    }
}

fn arith(op: BinOp, a: &Value, b: &Value) -> Result<Value, String> {
    if let (Some(x), Some(y)) = (int_of(a), int_of(b)) {
        return int_arith(op, x, y);
    }
    let (x, y) = (num(a)?, num(b)?);
    float(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Mod if y == 0.0 => return Err("modulo by zero".into()),
        BinOp::Mod => x.rem_euclid(y),
        _ => unreachable!("not arithmetic"),
    })
}

fn contains(haystack: &Value, needle: &Value) -> Result<bool, String> {
    match haystack {
        Value::Array(a) => Ok(a.iter().any(|x| values_equal(x, needle))),
        Value::String(s) => match needle {
            Value::String(n) => Ok(s.contains(n.as_str())),
            other => Err(format!("substring test with a {}", kind(other))),
        },
        Value::Object(o) => match needle {
            Value::String(k) => Ok(o.contains_key(k)),
            other => Err(format!("key test with a {}", kind(other))),
        },
        other => Err(format!("membership test on a {}", kind(other))),
    }
}

fn arity(name: &str, args: &[Value], lo: usize, hi: usize) -> Result<(), String> {
    if (lo..=hi).contains(&args.len()) {
        Ok(())
    } else {
        Err(format!(
            "{name}() takes {lo}..={hi} arguments, got {}",
            args.len()
        ))
    }
}

fn extreme(name: &str, args: &[Value], want: std::cmp::Ordering) -> Result<Value, String> {
    let items: &[Value] = match args {
        [Value::Array(a)] => a,
        _ => args,
    };
    let mut best: Option<&Value> = None;
    for v in items {
        if best.is_none() || compare(v, best.unwrap())? == want {
            best = Some(v);
        }
    }
    best.cloned()
        .ok_or_else(|| format!("{name}() of an empty sequence"))
}

fn builtin(name: &str, args: &[Value]) -> Result<Value, String> {
    match name {
        "len" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::String(s) => Ok(s.chars().count().into()),
                Value::Array(a) => Ok(a.len().into()),
                Value::Object(o) => Ok(o.len().into()),
                other => Err(format!("len() of a {}", kind(other))),
            }
        }
        "str" => {
            arity(name, args, 1, 1)?;
            Ok(Value::String(to_text(&args[0])))
        }
        "int" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::String(s) => s
                    .trim()
                    .parse::<i64>()
                    .map(Value::from)
                    .map_err(|_| format!("int() of `{s}`")),
                Value::Bool(b) => Ok(i64::from(*b).into()),
                v => {
                    if let Some(i) = int_of(v) {
                        return Ok(i.into());
                    }
                    let x = num(v)?.trunc();
                    if x.abs() < 9.2e18 {
                        Ok((x as i64).into())
                    } else {
                        Err(format!("int() of {x} overflows"))
                    }
                }
            }
        }
        "float" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::String(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| format!("float() of `{s}`"))
                    .and_then(float),
                v => float(num(v)?),
            }
        }
        "lower" | "upper" => {
            arity(name, args, 1, 1)?;
            let s = args[0]
                .as_str()
                .ok_or_else(|| format!("{name}() of a {}", kind(&args[0])))?;
            Ok(Value::String(if name == "lower" {
                s.to_lowercase()
            } else {
                s.to_uppercase()
            }))
        }
        "contains" => {
            arity(name, args, 2, 2)?;
            contains(&args[0], &args[1]).map(Value::Bool)
        }
        "min" => extreme(name, args, std::cmp::Ordering::Less),
        "max" => extreme(name, args, std::cmp::Ordering::Greater),
        "sum" => {
            arity(name, args, 1, 1)?;
            let items = args[0].as_array().ok_or("sum() of a non-list")?;
            items
                .iter()
                .try_fold(Value::from(0), |acc, v| arith(BinOp::Add, &acc, v))
        }
        "abs" => {
            arity(name, args, 1, 1)?;
            match int_of(&args[0]) {
                Some(i) => i
                    .checked_abs()
                    .map(Value::from)
                    .ok_or_else(|| "integer overflow".into()),
                None => float(num(&args[0])?.abs()),
            }
        }
        "round" => {
            arity(name, args, 1, 2)?;
            let x = num(&args[0])?;
            match args.get(1) {
                None => builtin("int", &[float(x.round())?]),
                Some(d) => {
                    let d = int_of(d)
                        .ok_or("round() digits must be an integer")?
                        .clamp(-15, 15) as i32;
                    let scale = 10f64.powi(d);
                    float((x * scale).round() / scale)
                }
            }
        }
        "keys" => {
            arity(name, args, 1, 1)?;
            let o = args[0].as_object().ok_or("keys() of a non-object")?;
            Ok(Value::Array(o.keys().cloned().map(Value::String).collect()))
        }
        "format" => {
            let (fmt, rest) = args.split_first().ok_or("format() needs a template")?;
            let fmt = fmt.as_str().ok_or("format() template must be a string")?;
            let mut out = String::new();
            let mut parts = fmt.split("{}");
            out.push_str(parts.next().unwrap_or(""));
            let mut it = rest.iter();
            for p in parts {
                let v = it
                    .next()
                    .ok_or("format() has more placeholders than arguments")?;
                out.push_str(&to_text(v));
                out.push_str(p);
            }
            Ok(Value::String(out))
        }
        other => Err(format!("unknown builtin `{other}`")),
    }
}
