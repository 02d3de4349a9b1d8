//! The value-schema subset used for tool inputs and outputs.
//!
//! Supported: `object` (with `properties` and `required`), `array` (with
//! `items`), and the leaf kinds `string`, `number`, `integer`, `boolean`, each
//! optionally restricted by `enum`. A compact form `{"rId": "string"}` (a bare
//! property map) is also accepted and means an object whose listed properties
//! are all required.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::pattern::values_equal;
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Object,
    Array,
    String,
    Number,
    Integer,
    Boolean,
}

impl SchemaKind {
    fn parse(name: &str) -> Option<SchemaKind> {
        Some(match name {
            "object" => SchemaKind::Object,
            "array" => SchemaKind::Array,
            "string" => SchemaKind::String,
            "number" => SchemaKind::Number,
            "integer" => SchemaKind::Integer,
            "boolean" => SchemaKind::Boolean,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemaKind::Object => "object",
            SchemaKind::Array => "array",
            SchemaKind::String => "string",
            SchemaKind::Number => "number",
            SchemaKind::Integer => "integer",
            SchemaKind::Boolean => "boolean",
        }
    }

    /// Kind of a JSON value. Integral numbers report `Integer`.
    pub fn of(value: &Value) -> Option<SchemaKind> {
        Some(match value {
            Value::Null => return None,
            Value::Bool(_) => SchemaKind::Boolean,
            Value::Number(n) => {
                if n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0) {
                    SchemaKind::Integer
                } else {
                    SchemaKind::Number
                }
            }
            Value::String(_) => SchemaKind::String,
            Value::Array(_) => SchemaKind::Array,
            Value::Object(_) => SchemaKind::Object,
        })
    }

    /// Can a value of kind `self` be used where `expected` is declared?
    pub fn fits(self, expected: SchemaKind) -> bool {
        self == expected || (self == SchemaKind::Integer && expected == SchemaKind::Number)
    }
}

impl fmt::Display for SchemaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub struct ValueSchema {
    pub kind: SchemaKind,
    pub properties: BTreeMap<String, ValueSchema>,
    pub items: Option<Box<ValueSchema>>,
    pub required: Vec<String>,
    pub enum_values: Option<Vec<Value>>,
    pub description: Option<String>,
}

impl Default for ValueSchema {
    fn default() -> Self {
        ValueSchema::object(BTreeMap::new(), Vec::new())
    }
}

impl ValueSchema {
    pub fn leaf(kind: SchemaKind) -> Self {
        ValueSchema {
            kind,
            properties: BTreeMap::new(),
            items: None,
            required: Vec::new(),
            enum_values: None,
            description: None,
        }
    }

    pub fn object(properties: BTreeMap<String, ValueSchema>, required: Vec<String>) -> Self {
        ValueSchema {
            properties,
            required,
            ..ValueSchema::leaf(SchemaKind::Object)
        }
    }

    pub fn array(items: ValueSchema) -> Self {
        ValueSchema {
            items: Some(Box::new(items)),
            ..ValueSchema::leaf(SchemaKind::Array)
        }
    }

    pub fn property(&self, name: &str) -> Option<&ValueSchema> {
        self.properties.get(name)
    }

    pub fn from_json(value: &Value) -> Result<ValueSchema, ProtocolError> {
        parse_schema(value, "$")
    }

    pub fn to_json(&self) -> Value {
        let mut out = Map::new();
        out.insert("type".into(), Value::String(self.kind.name().into()));
        if let Some(d) = &self.description {
            out.insert("description".into(), Value::String(d.clone()));
        }
        if self.kind == SchemaKind::Object {
            let props: Map<String, Value> = self
                .properties
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect();
            out.insert("properties".into(), Value::Object(props));
            out.insert(
                "required".into(),
                Value::Array(self.required.iter().cloned().map(Value::String).collect()),
            );
        }
        if let Some(items) = &self.items {
            out.insert("items".into(), items.to_json());
        }
        if let Some(e) = &self.enum_values {
            out.insert("enum".into(), Value::Array(e.clone()));
        }
        Value::Object(out)
    }
}

impl TryFrom<Value> for ValueSchema {
    type Error = ProtocolError;
    fn try_from(value: Value) -> Result<Self, Self::Error> {
        ValueSchema::from_json(&value)
    }
}

impl From<ValueSchema> for Value {
    fn from(schema: ValueSchema) -> Value {
        schema.to_json()
    }
}

fn schema_err(path: &str, message: impl Into<String>) -> ProtocolError {
    ProtocolError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn parse_schema(value: &Value, path: &str) -> Result<ValueSchema, ProtocolError> {
    match value {
        Value::String(name) => SchemaKind::parse(name)
            .filter(|k| !matches!(k, SchemaKind::Array))
            .map(|kind| {
                if kind == SchemaKind::Object {
                    ValueSchema::default()
                } else {
                    ValueSchema::leaf(kind)
                }
            })
            .ok_or_else(|| schema_err(path, format!("unsupported type shorthand `{name}`"))),
        Value::Object(obj) if obj.contains_key("type") || obj.contains_key("properties") => {
            parse_full(obj, path)
        }
        Value::Object(obj) => {
            // Compact property map.
            let mut properties = BTreeMap::new();
            for (k, v) in obj {
                properties.insert(k.clone(), parse_schema(v, &format!("{path}.{k}"))?);
            }
            let required = properties.keys().cloned().collect();
            Ok(ValueSchema::object(properties, required))
        }
        other => Err(schema_err(
            path,
            format!("expected a schema object, found {other}"),
        )),
    }
}

fn parse_full(obj: &Map<String, Value>, path: &str) -> Result<ValueSchema, ProtocolError> {
    let kind = match obj.get("type") {
        None => SchemaKind::Object,
        Some(Value::String(name)) => SchemaKind::parse(name)
            .ok_or_else(|| schema_err(path, format!("unsupported type `{name}`")))?,
        Some(other) => {
            return Err(schema_err(
                path,
                format!("`type` must be a string, found {other}"),
            ))
        }
    };
    let description = obj
        .get("description")
        .and_then(Value::as_str)
        .map(str::to_string);
    let enum_values = match obj.get("enum") {
        None => None,
        Some(Value::Array(vs)) => Some(vs.clone()),
        Some(other) => {
            return Err(schema_err(
                path,
                format!("`enum` must be an array, found {other}"),
            ))
        }
    };

    let mut schema = ValueSchema {
        enum_values,
        description,
        ..ValueSchema::leaf(kind)
    };
    match kind {
        SchemaKind::Object => {
            if let Some(props) = obj.get("properties") {
                let props = props
                    .as_object()
                    .ok_or_else(|| schema_err(path, "`properties` must be an object"))?;
                for (k, v) in props {
                    let sub = parse_schema(v, &format!("{path}.properties.{k}"))?;
                    schema.properties.insert(k.clone(), sub);
                }
            }
            if let Some(req) = obj.get("required") {
                let req = req
                    .as_array()
                    .ok_or_else(|| schema_err(path, "`required` must be an array"))?;
                for r in req {
                    let name = r
                        .as_str()
                        .ok_or_else(|| schema_err(path, "`required` entries must be strings"))?;
                    if !schema.properties.contains_key(name) {
                        return Err(schema_err(
                            path,
                            format!("required property `{name}` is not declared in `properties`"),
                        ));
                    }
                    schema.required.push(name.to_string());
                }
            }
        }
        SchemaKind::Array => {
            let items = obj
                .get("items")
                .ok_or_else(|| schema_err(path, "array schema must declare `items`"))?;
            schema.items = Some(Box::new(parse_schema(items, &format!("{path}.items"))?));
        }
        _ => {
            if obj.contains_key("properties") || obj.contains_key("items") {
                return Err(schema_err(
                    path,
                    format!("`{kind}` schema cannot have properties or items"),
                ));
            }
        }
    }
    Ok(schema)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum TypeErrorKind {
    MissingRequired { name: String },
    KindMismatch { expected: SchemaKind, found: String },
    NotInEnum { value: Value },
}

/// A type error at a JSON path such as `$.items[2].name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeError {
    pub path: String,
    #[serde(flatten)]
    pub kind: TypeErrorKind,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TypeErrorKind::MissingRequired { name } => {
                write!(f, "{}: missing required property `{name}`", self.path)
            }
            TypeErrorKind::KindMismatch { expected, found } => {
                write!(f, "{}: expected {expected}, found {found}", self.path)
            }
            TypeErrorKind::NotInEnum { value } => {
                write!(f, "{}: {value} is not one of the allowed values", self.path)
            }
        }
    }
}

/// Structural check of `value` against `schema`. Extra object properties are
/// allowed.
pub fn check_value(schema: &ValueSchema, value: &Value) -> Result<(), Vec<TypeError>> {
    let mut errors = Vec::new();
    check_into(schema, value, "$", &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn kind_label(value: &Value) -> String {
    match SchemaKind::of(value) {
        Some(k) => k.name().to_string(),
        None => "null".to_string(),
    }
}

fn check_into(schema: &ValueSchema, value: &Value, path: &str, errors: &mut Vec<TypeError>) {
    let fits = SchemaKind::of(value).is_some_and(|k| k.fits(schema.kind));
    if !fits {
        errors.push(TypeError {
            path: path.to_string(),
            kind: TypeErrorKind::KindMismatch {
                expected: schema.kind,
                found: kind_label(value),
            },
        });
        return;
    }
    if let Some(allowed) = &schema.enum_values {
        if !allowed.iter().any(|a| values_equal(a, value)) {
            errors.push(TypeError {
                path: path.to_string(),
                kind: TypeErrorKind::NotInEnum {
                    value: value.clone(),
                },
            });
        }
    }
    match (schema.kind, value) {
        (SchemaKind::Object, Value::Object(obj)) => {
            for name in &schema.required {
                if obj.get(name).is_none_or(Value::is_null) {
                    errors.push(TypeError {
                        path: path.to_string(),
                        kind: TypeErrorKind::MissingRequired { name: name.clone() },
                    });
                }
            }
            for (name, sub) in &schema.properties {
                match obj.get(name) {
                    Some(v) if !v.is_null() => {
                        check_into(sub, v, &format!("{path}.{name}"), errors)
                    }
                    _ => {}
                }
            }
        }
        (SchemaKind::Array, Value::Array(items)) => {
            if let Some(item_schema) = &schema.items {
                for (i, item) in items.iter().enumerate() {
                    check_into(item_schema, item, &format!("{path}[{i}]"), errors);
                }
            }
        }
        _ => {}
    }
}
