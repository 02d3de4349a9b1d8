//! Scheduler cache: element name to fitted latency distribution.
//!
//! ```json
//! {"schema_version": 1,
//!  "elements": {"restaurantCard": {"family": "weibull",
//!                                  "params": {"shape": 3.6, "scale": 10.25},
//!                                  "n_obs": 20, "mean_s": 9.24, "std_s": 2.85,
//!                                  "page": "main"}}}
//! ```
//!
//! A bare element map without the wrapper is also accepted on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DistError, LatencyDistribution};
use crate::scalar::Real;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct ElementStats<S> {
    /// Filled from the map key on load.
    #[serde(skip)]
    pub element: String,
    #[serde(default)]
    pub page: String,
    #[serde(flatten)]
    pub distribution: LatencyDistribution<S>,
    #[serde(default)]
    pub n_obs: usize,
    pub mean_s: S,
    pub std_s: S,
}

impl<S: Real> ElementStats<S> {
    /// Stats whose mean and standard deviation come from the distribution.
    pub fn new(
        element: &str,
        page: &str,
        distribution: LatencyDistribution<S>,
        n_obs: usize,
    ) -> Self {
        ElementStats {
            element: element.to_string(),
            page: page.to_string(),
            mean_s: distribution.mean(),
            std_s: distribution.std(),
            distribution,
            n_obs,
        }
    }

    /// Stats whose mean and sample standard deviation come from the
    /// observations the distribution was fitted to.
    pub fn from_observations(
        element: &str,
        page: &str,
        distribution: LatencyDistribution<S>,
        obs: &[S],
    ) -> Self {
        let n = obs.len();
        let mean = obs.iter().map(|x| x.as_f64()).sum::<f64>() / n.max(1) as f64;
        let ss = obs.iter().map(|x| (x.as_f64() - mean).powi(2)).sum::<f64>();
        let std = if n > 1 {
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        ElementStats {
            element: element.to_string(),
            page: page.to_string(),
            distribution,
            n_obs: n,
            mean_s: S::lit(mean),
            std_s: S::lit(std),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchedulerCache<S> {
    pub elements: BTreeMap<String, ElementStats<S>>,
}

#[derive(Serialize)]
#[serde(bound = "S: Real")]
struct Versioned<'a, S> {
    schema_version: u32,
    elements: &'a BTreeMap<String, ElementStats<S>>,
}

impl<S: Real> SchedulerCache<S> {
    pub fn new() -> Self {
        SchedulerCache {
            elements: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, stats: ElementStats<S>) {
        self.elements.insert(stats.element.clone(), stats);
    }

    pub fn get(&self, element: &str) -> Option<&ElementStats<S>> {
        self.elements.get(element)
    }

    pub fn distribution(&self, element: &str) -> Option<&LatencyDistribution<S>> {
        self.elements.get(element).map(|s| &s.distribution)
    }

    /// Pretty JSON with elements in name order. Identical caches give
    /// identical bytes.
    pub fn to_json_string(&self) -> String {
        let doc = Versioned {
            schema_version: SCHEMA_VERSION,
            elements: &self.elements,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("cache serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self, CacheError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| CacheError::Json(e.to_string()))?;
        Self::from_json(doc)
    }

    pub fn from_json(mut doc: Value) -> Result<Self, CacheError> {
        let body = match doc.as_object_mut() {
            Some(obj) if obj.contains_key("elements") => {
                if let Some(v) = obj.get("schema_version") {
                    if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                        return Err(CacheError::Version(v.to_string()));
                    }
                }
                obj.remove("elements").expect("checked above")
            }
            Some(_) => doc,
            None => return Err(CacheError::Json("expected an object".into())),
        };
        let raw: BTreeMap<String, ElementStats<S>> =
            serde_json::from_value(body).map_err(|e| CacheError::Json(e.to_string()))?;
        let mut elements = BTreeMap::new();
        for (name, mut stats) in raw {
            stats
                .distribution
                .validate()
                .map_err(|e| CacheError::Invalid(name.clone(), e))?;
            stats.element = name.clone();
            elements.insert(name, stats);
        }
        Ok(SchedulerCache { elements })
    }

    pub fn load(path: &Path) -> Result<Self, CacheError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CacheError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        fs::write(path, self.to_json_string())
            .map_err(|e| CacheError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CacheError {
    #[error("malformed cache JSON: {0}")]
    Json(String),
    #[error("unsupported cache schema_version {0}")]
    Version(String),
    #[error("element `{0}`: {1}")]
    Invalid(String, DistError),
    #[error("{0}")]
    Io(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cache() -> SchedulerCache<f64> {
        let mut c = SchedulerCache::new();
        c.insert(ElementStats::new(
            "restaurantCard",
            "main",
            LatencyDistribution::weibull(3.6, 10.25).unwrap(),
            20,
        ));
        c.insert(ElementStats::new(
            "modal.addToCartButton",
            "store",
            LatencyDistribution::fixed(9.0).unwrap(),
            5,
        ));
        c.insert(ElementStats::new(
            "z",
            "p",
            LatencyDistribution::empirical(vec![0.1, 0.30000000000000004]).unwrap(),
            2,
        ));
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample_cache();
        let text = c.to_json_string();
        let back = SchedulerCache::<f64>::from_json_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn entry_shape_and_order() {
        let v: Value = serde_json::from_str(&sample_cache().to_json_string()).unwrap();
        assert_eq!(v["schema_version"], 1);
        let keys: Vec<_> = v["elements"].as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["modal.addToCartButton", "restaurantCard", "z"]);
        let e = &v["elements"]["restaurantCard"];
        assert_eq!(e["family"], "weibull");
        assert_eq!(e["params"]["shape"], 3.6);
        assert_eq!(e["n_obs"], 20);
        assert_eq!(e["page"], "main");
    }

    #[test]
    fn bare_map_and_validation() {
        let bare =
            r#"{"a": {"family": "fixed", "params": {"value": 2.0}, "mean_s": 2.0, "std_s": 0.0}}"#;
        let c = SchedulerCache::<f64>::from_json_str(bare).unwrap();
        assert_eq!(c.get("a").unwrap().element, "a");
        let bad = r#"{"a": {"family": "gamma", "params": {"shape": -1.0, "scale": 2.0}, "mean_s": 2.0, "std_s": 0.0}}"#;
        assert!(matches!(
            SchedulerCache::<f64>::from_json_str(bad),
            Err(CacheError::Invalid(..))
        ));
        let future = r#"{"schema_version": 9, "elements": {}}"#;
        assert!(matches!(
            SchedulerCache::<f64>::from_json_str(future),
            Err(CacheError::Version(_))
        ));
    }

    #[test]
    fn stats_agree_with_distribution() {
        for s in sample_cache().elements.values() {
            assert!((s.mean_s - s.distribution.mean()).abs() < 1e-6);
            assert!((s.std_s - s.distribution.std()).abs() < 1e-6);
        }
    }
}
