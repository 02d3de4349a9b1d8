//! The tool protocol: manifests with precondition/postcondition contracts
//! over an abstract page state, plus input/output value schemas.
//!
//! Two calls compose when the state left by the first call's `post`
//! satisfies the second call's `pre`.

mod manifest;
mod pattern;
mod schema;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{ManifestSet, ToolManifest, ToolType};
pub use pattern::{
    apply_post, matches, parse_pattern, render_pattern, satisfies, values_equal, AbstractState,
    CallArgs, StatePattern, TrackedState, TrackedValue, ViolationDetail, ViolationReason,
};
pub use schema::{check_value, SchemaKind, TypeError, TypeErrorKind, ValueSchema};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("pattern refers to parameter `{0}` which is not bound")]
    UnboundParam(String),
    #[error("invalid schema at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid manifest `{name}`: {message}")]
    Manifest { name: String, message: String },
    #[error("duplicate tool name `{0}`")]
    DuplicateTool(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}: malformed JSON: {message}", path.display())]
    Json { path: PathBuf, message: String },
}
