//! Pipeline configuration: one struct covering every stage, loadable from
//! TOML or JSON with unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::completion::CompletionParams;
use crate::error::{Error, Result};
use crate::filter::{Plane, WorkspaceModel};
use crate::grasp::GripperParams;
use crate::noise::NoiseParams;
use crate::segmentation::SegmentationParams;

/// Which images the planner sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Plan directly on the real camera image (no completion).
    RealView,
    /// Full pipeline, but only the top-down virtual view.
    TopOnly,
    /// Full pipeline with all six virtual views.
    #[default]
    AllViews,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::RealView => "real-view",
            Method::TopOnly => "top-only",
            Method::AllViews => "all-views",
        }
    }

    pub const ALL: [Method; 3] = [Method::RealView, Method::TopOnly, Method::AllViews];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real-view" => Ok(Method::RealView),
            "top-only" => Ok(Method::TopOnly),
            "all-views" => Ok(Method::AllViews),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected real-view, top-only or all-views)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    /// Height of the horizontal support plane (m).
    pub plane_height: f64,
    pub background_depth: f64,
    pub plane_tolerance: f64,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        let d = WorkspaceModel::default_tabletop();
        WorkspaceConfig {
            plane_height: d.support_plane.offset,
            background_depth: d.background_depth,
            plane_tolerance: d.plane_tolerance,
            bounds_min: d.bounds.0.into(),
            bounds_max: d.bounds.1.into(),
        }
    }
}

impl WorkspaceConfig {
    pub fn model(&self) -> Result<WorkspaceModel> {
        WorkspaceModel::new(
            Plane::horizontal(self.plane_height),
            self.background_depth,
            self.plane_tolerance,
            (Vector3::from(self.bounds_min), Vector3::from(self.bounds_max)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewpointConfig {
    /// Virtual camera distance from the scene center (m).
    pub radius: f64,
    /// Render the support plane in virtual views.
    pub render_support_plane: bool,
}

impl Default for ViewpointConfig {
    fn default() -> Self {
        ViewpointConfig {
            radius: 0.7,
            render_support_plane: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Real-camera elevations above the plane (degrees).
    pub elevations_deg: Vec<f64>,
    /// Object yaw angles per elevation (degrees).
    pub yaws_deg: Vec<f64>,
    /// Run the clutter protocol instead of single-object trials.
    pub clutter: bool,
    pub clutter_scenes: usize,
    pub clutter_objects: usize,
    /// Grasp attempts per clutter scene.
    pub budget: usize,
    /// Friction coefficient of the success oracle.
    pub friction_mu: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            elevations_deg: vec![30.0, 45.0, 90.0],
            yaws_deg: vec![0.0, 72.0, 144.0, 216.0, 288.0],
            clutter: false,
            clutter_scenes: 5,
            clutter_objects: 6,
            budget: 12,
            friction_mu: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random draw in a run derives from it.
    pub seed: u64,
    pub method: Method,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workspace: WorkspaceConfig,
    pub segmentation: SegmentationParams,
    pub completion: CompletionParams,
    pub viewpoints: ViewpointConfig,
    pub noise: NoiseParams,
    pub gripper: GripperParams,
    pub experiment: ExperimentConfig,
}

impl PipelineConfig {
    /// Load from a `.toml` or `.json` file; unknown keys are errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => {
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            }
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            other => Err(Error::Config(format!(
                "unsupported config extension {other:?} (expected toml or json)"
            ))),
        }
    }

    /// Stable content digest (FNV-1a over the canonical JSON form), used to
    /// name run directories.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
