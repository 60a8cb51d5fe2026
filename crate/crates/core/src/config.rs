//! JSON run configuration used by `simulate` and by scenario presets.
//!
//! ```json
//! {
//!   "kernel": { "k0": 1.0, "alpha": 0.5, "beta": 0.5, "theta": 0.0 },
//!   "fusion": { "r": 1.0, "mu": 1.0 },
//!   "initial": { "kind": "monodisperse_sphere", "n": 10000, "v": 1.0, "total_volume": 1.0 },
//!   "engine": { "t_end": 10.0, "record_every": 0.5 },
//!   "replicas": 8
//! }
//! ```
//!
//! `fusion` may be omitted (no fusion). `truncation` (`eps`, `big_r`, `delta`)
//! is required when `engine.frame` is `self_similar` and rejected otherwise.
//! Unlisted engine fields take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coag_mc::EngineConfig;
use crate::error::{Error, Result};
use crate::experiments::InitialConfig;
use crate::kernels::{FusionSpec, KernelSpec, TruncationConfig, TruncationParams};
use crate::state::Frame;

/// Fusion parameters; `γ` is taken from the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionSection {
    pub r: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub fusion: Option<FusionSection>,
    #[serde(default)]
    pub truncation: Option<TruncationConfig>,
    pub initial: InitialConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

fn default_replicas() -> usize {
    1
}

/// Validated parameter objects of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub kernel: KernelSpec,
    pub fusion: FusionSpec,
    pub trunc: Option<TruncationParams>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn fusion_spec(&self) -> Result<FusionSpec> {
        match self.fusion {
            Some(f) => FusionSpec::new(f.r, f.mu, self.kernel.gamma()),
            None => FusionSpec::disabled(self.kernel.gamma()),
        }
    }

    /// Checks every section and builds the parameter objects.
    pub fn model(&self) -> Result<Model> {
        self.engine.validate()?;
        self.initial.validate()?;
        if self.replicas == 0 {
            return Err(Error::InvalidParams("replicas must be at least 1".into()));
        }
        let fusion = self.fusion_spec()?;
        let trunc = match (self.engine.frame, &self.truncation) {
            (Frame::SelfSimilar, Some(t)) => Some(TruncationParams::from_config(t, &fusion)?),
            (Frame::SelfSimilar, None) => {
                return Err(Error::InvalidParams("self-similar runs need a truncation section".into()))
            }
            (Frame::Physical, Some(_)) => {
                return Err(Error::InvalidParams("truncation applies to self-similar runs only".into()))
            }
            (Frame::Physical, None) => None,
        };
        Ok(Model { kernel: self.kernel, fusion, trunc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
      "kernel": { "k0": 1.0, "alpha": 0.5, "beta": 0.5, "theta": 0.0 },
      "fusion": { "r": 1.0, "mu": 1.0 },
      "initial": { "kind": "monodisperse_sphere", "n": 10000, "v": 1.0, "total_volume": 1.0 },
      "engine": { "t_end": 10.0, "record_every": 0.5 },
      "replicas": 8
    }"#;

    #[test]
    fn module_doc_example_parses() {
        let cfg = RunConfig::from_json(DOC).unwrap();
        let m = cfg.model().unwrap();
        assert_eq!(m.fusion.mu(), 1.0);
        assert_eq!(m.fusion.gamma(), 0.0);
        assert!(m.trunc.is_none());
        assert_eq!(cfg.engine.t_end, 10.0);
        assert_eq!(cfg.replicas, 8);
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn frame_and_truncation_must_agree() {
        let mut cfg = RunConfig::from_json(DOC).unwrap();
        cfg.engine.frame = Frame::SelfSimilar;
        assert!(cfg.model().is_err());
        cfg.truncation = Some(TruncationConfig { eps: 1e-3, big_r: 100.0, delta: 1e-3 });
        assert!(cfg.model().unwrap().trunc.is_some());
        cfg.engine.frame = Frame::Physical;
        assert!(cfg.model().is_err());
    }

    #[test]
    fn bad_documents_rejected() {
        assert!(RunConfig::from_json(&DOC.replace("\"alpha\": 0.5", "\"alpha\": -0.5")).is_err());
        assert!(RunConfig::from_json(&DOC.replace("\"replicas\"", "\"replica\"")).is_err());
        let cfg = RunConfig::from_json(&DOC.replace("\"replicas\": 8", "\"replicas\": 0")).unwrap();
        assert!(cfg.model().is_err());
    }
}
