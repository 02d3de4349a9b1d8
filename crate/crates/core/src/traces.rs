//! Execution traces and the offline caches built from them.
//!
//! A trace file holds one [`TraceRecord`] or an array of them. Ingestion
//! groups step latencies by element, then [`build_scheduler_cache`] fits one
//! distribution per element. The planner cache index maps an action name to
//! the manifest file that implements it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::distributions::{fit, DistError, ElementStats, SchedulerCache};
use crate::protocol::{ManifestSet, ProtocolError, ToolManifest};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("{}: malformed trace: {reason}", path.display())]
    MalformedTrace { path: PathBuf, reason: String },
    #[error("fitting `{element}`: {source}")]
    Fit { element: String, source: DistError },
    #[error("{0}")]
    Io(String),
    #[error("planner cache entry `{action}`: {source}")]
    Manifest {
        action: String,
        source: ProtocolError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: u32,
    pub element: String,
    #[serde(default)]
    pub page: String,
    pub latency_s: f64,
    pub success: bool,
    #[serde(default)]
    pub is_modal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub task_id: String,
    pub steps: Vec<TraceStep>,
}

impl TraceRecord {
    /// Indices strictly increase and latencies are finite and nonnegative.
    pub fn check(&self) -> Result<(), String> {
        let mut prev: Option<u32> = None;
        for s in &self.steps {
            if prev.is_some_and(|p| s.index <= p) {
                return Err(format!("step index {} does not increase", s.index));
            }
            if !(s.latency_s.is_finite() && s.latency_s >= 0.0) {
                return Err(format!("step {} has latency {}", s.index, s.latency_s));
            }
            prev = Some(s.index);
        }
        Ok(())
    }
}

/// Parse a trace document: one record or an array of records.
pub fn parse_traces(text: &str, path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let malformed = |reason: String| TraceError::MalformedTrace {
        path: path.to_path_buf(),
        reason,
    };
    let doc: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let records: Vec<TraceRecord> = match doc {
        Value::Array(_) => serde_json::from_value(doc),
        _ => serde_json::from_value(doc).map(|r| vec![r]),
    }
    .map_err(|e| malformed(e.to_string()))?;
    for r in &records {
        r.check()
            .map_err(|e| malformed(format!("task `{}`: {e}", r.task_id)))?;
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    pub include_failures: bool,
}

/// Latencies grouped by element.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observations {
    pub latencies: BTreeMap<String, Vec<f64>>,
    /// Pages each element was seen on, with counts.
    pub pages: BTreeMap<String, BTreeMap<String, usize>>,
    pub n_records: usize,
    pub n_steps: usize,
    pub n_excluded: usize,
}

impl Observations {
    pub fn add_record(&mut self, record: &TraceRecord, opts: IngestOptions) {
        self.n_records += 1;
        for s in &record.steps {
            if !s.success && !opts.include_failures {
                self.n_excluded += 1;
                continue;
            }
            self.n_steps += 1;
            self.latencies
                .entry(s.element.clone())
                .or_default()
                .push(s.latency_s);
            *self
                .pages
                .entry(s.element.clone())
                .or_default()
                .entry(s.page.clone())
                .or_default() += 1;
        }
    }

    /// The page an element was seen on most often; ties go to the
    /// alphabetically first.
    pub fn page_of(&self, element: &str) -> &str {
        let mut best: Option<(&str, usize)> = None;
        for (page, &n) in self.pages.get(element).into_iter().flatten() {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((page, n));
            }
        }
        best.map_or("", |(p, _)| p)
    }
}

pub fn ingest_records<'a>(
    records: impl IntoIterator<Item = &'a TraceRecord>,
    opts: IngestOptions,
) -> Observations {
    let mut obs = Observations::default();
    for r in records {
        obs.add_record(r, opts);
    }
    obs
}

/// Read trace files in the order given.
pub fn ingest(files: &[PathBuf], opts: IngestOptions) -> Result<Observations, TraceError> {
    let mut obs = Observations::default();
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| TraceError::MalformedTrace {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        for r in parse_traces(&text, path)? {
            obs.add_record(&r, opts);
        }
    }
    Ok(obs)
}

/// Fit every observed element.
pub fn build_scheduler_cache<S: Real>(obs: &Observations) -> Result<SchedulerCache<S>, TraceError> {
    let mut cache = SchedulerCache::new();
    for (element, xs) in &obs.latencies {
        let xs: Vec<S> = xs.iter().map(|&x| S::lit(x)).collect();
        let dist = fit(&xs).map_err(|source| TraceError::Fit {
            element: element.clone(),
            source,
        })?;
        cache.insert(ElementStats::from_observations(
            element,
            obs.page_of(element),
            dist,
            &xs,
        ));
    }
    Ok(cache)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerCacheEntry {
    pub manifest: PathBuf,
    #[serde(default)]
    pub created_from: Vec<String>,
}

/// `{action: {manifest, created_from}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlannerCacheIndex {
    pub entries: BTreeMap<String, PlannerCacheEntry>,
}

impl PlannerCacheIndex {
    pub fn add(
        &mut self,
        action: &str,
        manifest: impl Into<PathBuf>,
        created_from: impl IntoIterator<Item = String>,
    ) {
        let entry = self
            .entries
            .entry(action.to_string())
            .or_insert_with(|| PlannerCacheEntry {
                manifest: PathBuf::new(),
                created_from: vec![],
            });
        entry.manifest = manifest.into();
        for t in created_from {
            if !entry.created_from.contains(&t) {
                entry.created_from.push(t);
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path)
            .map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let mut text = serde_json::to_string_pretty(self).expect("index serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))
    }

    /// Load every referenced manifest, with relative paths taken from
    /// `base`. Each manifest must pass protocol checks and carry the
    /// action's name.
    pub fn resolve(&self, base: &Path) -> Result<ManifestSet, TraceError> {
        let mut set = ManifestSet::new();
        for (action, entry) in &self.entries {
            let wrap = |source| TraceError::Manifest {
                action: action.clone(),
                source,
            };
            let path = base.join(&entry.manifest);
            let text = fs::read_to_string(&path).map_err(|e| {
                wrap(ProtocolError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })
            })?;
            let m = ToolManifest::from_json_str(&text).map_err(wrap)?;
            if &m.name != action {
                return Err(wrap(ProtocolError::Manifest {
                    name: m.name,
                    message: format!("indexed under `{action}`"),
                }));
            }
            set.insert(m).map_err(wrap)?;
        }
        Ok(set)
    }
}
