//! Tool manifests and manifest sets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::pattern::{is_identifier, AbstractState, StatePattern};
use super::schema::{SchemaKind, ValueSchema};
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ToolType {
    Observe,
    ListItems,
    GetFields,
    SetFilter,
    SetFields,
    GotoItem,
    GotoField,
    #[default]
    #[serde(other)]
    Other,
}

/// One tool's contract. Field names follow the on-disk JSON document; fields
/// this crate does not know are kept in `extra` and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolManifest {
    pub name: String,
    #[serde(rename = "type", default)]
    pub tool_type: ToolType,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub input_schema: ValueSchema,
    #[serde(default)]
    pub output_schema: ValueSchema,
    #[serde(default)]
    pub pre: AbstractState,
    #[serde(default)]
    pub post: AbstractState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_check: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_check: Option<String>,
    #[serde(default)]
    pub execute: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pre_tools: BTreeMap<String, Vec<String>>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ToolManifest {
    /// Minimal manifest with empty schemas, used by tests and generators.
    pub fn new(name: &str, pre: AbstractState, post: AbstractState) -> Self {
        ToolManifest {
            name: name.to_string(),
            tool_type: ToolType::Other,
            description: String::new(),
            input_schema: ValueSchema::default(),
            output_schema: ValueSchema::default(),
            pre,
            post,
            pre_check: None,
            post_check: None,
            execute: String::new(),
            pre_tools: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ProtocolError> {
        let m: ToolManifest = serde_json::from_str(text).map_err(|e| ProtocolError::Json {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        m.check()?;
        Ok(m)
    }

    /// Structural invariants: identifier name, object input schema, and
    /// every `$param` in `post` naming a declared input.
    pub fn check(&self) -> Result<(), ProtocolError> {
        let fail = |message: String| ProtocolError::Manifest {
            name: self.name.clone(),
            message,
        };
        if !is_identifier(&self.name) {
            return Err(fail("tool name must be an identifier".into()));
        }
        if self.input_schema.kind != SchemaKind::Object {
            return Err(fail("input_schema must be an object schema".into()));
        }
        for param in self.post.param_refs() {
            if self.input_schema.property(param).is_none() {
                return Err(fail(format!(
                    "post refers to `${param}` but input_schema declares no such parameter"
                )));
            }
        }
        for param in self.pre_tools.keys() {
            if self.input_schema.property(param).is_none() {
                return Err(fail(format!(
                    "pre_tools names undeclared parameter `{param}`"
                )));
            }
        }
        Ok(())
    }

    /// Advisory findings that do not make the manifest invalid.
    pub fn lint(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (key, pattern) in self.pre.iter() {
            if let StatePattern::ParamRef(p) = pattern {
                out.push(format!(
                    "{}: pre key `{key}` uses parameter reference `${p}`; matched symmetrically",
                    self.name
                ));
            }
        }
        out
    }
}

/// All manifests available to a planner, keyed by tool name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ManifestSet {
    tools: BTreeMap<String, ToolManifest>,
}

impl ManifestSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_manifests(
        manifests: impl IntoIterator<Item = ToolManifest>,
    ) -> Result<Self, ProtocolError> {
        let mut set = ManifestSet::new();
        for m in manifests {
            set.insert(m)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, manifest: ToolManifest) -> Result<(), ProtocolError> {
        manifest.check()?;
        if self.tools.contains_key(&manifest.name) {
            return Err(ProtocolError::DuplicateTool(manifest.name));
        }
        self.tools.insert(manifest.name.clone(), manifest);
        Ok(())
    }

    /// Load every `*.json` file in `dir`, one manifest per file.
    pub fn load_dir(dir: &Path) -> Result<Self, ProtocolError> {
        let io_err = |path: &Path, e: std::io::Error| ProtocolError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        let mut set = ManifestSet::new();
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let manifest: ToolManifest =
                serde_json::from_str(&text).map_err(|e| ProtocolError::Json {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            set.insert(manifest)?;
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Option<&ToolManifest> {
        self.tools.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolManifest> {
        self.tools.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn lint(&self) -> Vec<String> {
        self.tools.values().flat_map(ToolManifest::lint).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_pattern;
    use serde_json::json;

    const ADD_TO_CART: &str = r#"{
      "name": "add_to_cart",
      "description": "Adds a specific item to the shopping cart.",
      "type": "setFields",
      "input_schema": {
        "type": "object",
        "properties": {
          "item_name": { "type": "string", "description": "The name of the item to add." },
          "customizations": { "type": "string" }
        },
        "required": ["item_name"]
      },
      "output_schema": {
        "type": "object",
        "properties": {
          "success": { "type": "boolean" },
          "item_added": { "type": "string" },
          "cart_count": { "type": "integer" },
          "error": { "type": "string" }
        },
        "required": ["success"]
      },
      "pre": { "page_type": "store" },
      "post": { "page_type": "store" },
      "pre_check": "return document.body.textContent.includes('Full Menu') ? true : [false, 'Not on a store page'];",
      "post_check": "return output.success === true ? true : [false, output.error];",
      "execute": "// fuzzy-match and click",
      "pre_tools": { "item_name": ["list_menu_items"], "customizations": ["get_item_details"] },
      "x-owner": "dashdish"
    }"#;

    #[test]
    fn loads_full_manifest_and_preserves_unknown_fields() {
        let m = ToolManifest::from_json_str(ADD_TO_CART).unwrap();
        assert_eq!(m.tool_type, ToolType::SetFields);
        assert_eq!(m.pre.get("page_type"), Some(&parse_pattern("store")));
        assert_eq!(
            m.pre_tools["item_name"],
            vec!["list_menu_items".to_string()]
        );
        assert_eq!(m.extra.get("x-owner"), Some(&json!("dashdish")));
        let back: ToolManifest = serde_json::from_value(serde_json::to_value(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_tool_type_is_other() {
        let m = ToolManifest::from_json_str(r#"{"name": "t", "type": "teleport"}"#).unwrap();
        assert_eq!(m.tool_type, ToolType::Other);
    }

    #[test]
    fn param_ref_must_name_an_input() {
        let text = r#"{
          "name": "goto_restaurant",
          "input_schema": {"rId": "string"},
          "output_schema": {},
          "pre": {"page": "*"},
          "post": {"page": "detail", "selectedRestaurant": "$rId"}
        }"#;
        assert!(ToolManifest::from_json_str(text).is_ok());
        let bad = text.replace("$rId", "$other");
        assert!(matches!(
            ToolManifest::from_json_str(&bad),
            Err(ProtocolError::Manifest { .. })
        ));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let a = ToolManifest::new("a", AbstractState::new(), AbstractState::new());
        let err = ManifestSet::from_manifests([a.clone(), a]).unwrap_err();
        assert!(matches!(err, ProtocolError::DuplicateTool(n) if n == "a"));
    }

    #[test]
    fn load_dir_reads_json_files_only() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("add_to_cart.json"), ADD_TO_CART).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let set = ManifestSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.names().collect::<Vec<_>>(), ["add_to_cart"]);

        std::fs::write(dir.path().join("copy.json"), ADD_TO_CART).unwrap();
        assert!(matches!(
            ManifestSet::load_dir(dir.path()),
            Err(ProtocolError::DuplicateTool(_))
        ));
    }

    #[test]
    fn lint_flags_param_refs_in_pre() {
        let m = ToolManifest::from_json_str(
            r#"{"name": "t", "input_schema": {"x": "string"}, "pre": {"sel": "$x"}}"#,
        )
        .unwrap();
        assert_eq!(m.lint().len(), 1);
    }
}
