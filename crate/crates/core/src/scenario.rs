//! Scenario files: TOML with every section optional except `[path]`.

use crate::avoidance::AvoidanceConfig;
use crate::control::IhcConfig;
use crate::costs::CostConfig;
use crate::error::{Error, Result};
use crate::esdf::{build_esdf, EsdfGrid, VoxelGrid, DEFAULT_MAX_DIST, GRID_HEADER};
use crate::interpolation::InterpolationParams;
use crate::kinematics::{ArmModel, EePose};
use crate::optimizer::SolverOptions;
use crate::sim::{SimLimits, SimOptions, TaskSpec, Terrain};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmSpec {
    pub upper_arm: f64,
    pub forearm: f64,
    pub base_height: f64,
    pub tool_length: f64,
    pub mount_offset: [f64; 2],
}

impl Default for ArmSpec {
    fn default() -> Self {
        let a = ArmModel::desk_default();
        Self {
            upper_arm: a.upper_arm,
            forearm: a.forearm,
            base_height: a.base_height,
            tool_length: a.tool_length,
            mount_offset: [a.mount_offset.x, a.mount_offset.y],
        }
    }
}

impl ArmSpec {
    pub fn build(&self) -> Result<ArmModel> {
        Ok(ArmModel::new(self.upper_arm, self.forearm, self.base_height)?
            .with_limits(ArmModel::industrial_limits())?
            .with_tool_length(self.tool_length)
            .with_mount_offset(Vector2::from(self.mount_offset)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub z: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Distance-field source: a grid file, or primitives rasterized into a
/// fresh occupancy grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// `esdf-grid` or `esdf-voxels` file, relative to the scenario file.
    pub file: Option<PathBuf>,
    pub origin: [f64; 3],
    pub resolution: f64,
    pub dims: [usize; 3],
    pub max_dist: f64,
    pub boxes: Vec<BoxSpec>,
    pub cylinders: Vec<CylinderSpec>,
    pub spheres: Vec<SphereSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            file: None,
            origin: [-1.0, -1.0, -0.2],
            resolution: 0.02,
            dims: [100, 100, 80],
            max_dist: DEFAULT_MAX_DIST,
            boxes: Vec::new(),
            cylinders: Vec::new(),
            spheres: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn occupancy(&self) -> Result<VoxelGrid> {
        let mut g = VoxelGrid::new(Vector3::from(self.origin), self.resolution, self.dims)?;
        for b in &self.boxes {
            g.add_box(Vector3::from(b.min), Vector3::from(b.max));
        }
        for c in &self.cylinders {
            g.add_cylinder(c.center, c.radius, c.z[0], c.z[1]);
        }
        for s in &self.spheres {
            g.add_sphere(Vector3::from(s.center), s.radius);
        }
        Ok(g)
    }

    /// Builds or loads the distance field; `base_dir` resolves relative files.
    pub fn esdf(&self, base_dir: &Path) -> Result<EsdfGrid> {
        match &self.file {
            Some(f) => {
                let path = if f.is_absolute() { f.clone() } else { base_dir.join(f) };
                let text = std::fs::read_to_string(&path)?;
                if text.trim_start().starts_with(GRID_HEADER) {
                    EsdfGrid::parse(&text)
                } else {
                    build_esdf(&VoxelGrid::parse(&text)?, self.max_dist)
                }
            }
            None => build_esdf(&self.occupancy()?, self.max_dist),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMode {
    #[default]
    ElbowUp,
    ElbowDown,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSpec {
    /// Base polyline `[x, y]`.
    pub waypoints: Vec<[f64; 2]>,
    /// Spacing of initial waypoints along the polyline, m.
    pub step_size: f64,
    /// Initial end-effector pose in the base frame, `[x, y, z, roll, pitch, yaw]`.
    pub ee_in_base: [f64; 6],
    pub joint_mode: JointMode,
    /// One configuration per initial waypoint when `joint_mode = "explicit"`.
    pub explicit: Vec<[f64; 6]>,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            waypoints: Vec::new(),
            step_size: 0.06,
            ee_in_base: [0.55, 0.0, 0.6, 0.0, 1.2, 0.0],
            joint_mode: JointMode::ElbowUp,
            explicit: Vec::new(),
        }
    }
}

impl PathSpec {
    pub fn ee_in_base(&self) -> EePose {
        let p = self.ee_in_base;
        EePose::from_parts(p[0], p[1], p[2], p[3], p[4], p[5])
    }

    /// Points every `step_size` along the polyline, both ends included.
    pub fn resample(&self) -> Vec<Vector2<f64>> {
        let pts: Vec<Vector2<f64>> = self.waypoints.iter().map(|p| Vector2::from(*p)).collect();
        let mut out = vec![pts[0]];
        let mut carry = 0.0;
        for w in pts.windows(2) {
            let d = w[1] - w[0];
            let len = d.norm();
            let mut s = self.step_size - carry;
            while s <= len + 1e-12 {
                out.push(w[0] + d * (s / len).min(1.0));
                s += self.step_size;
            }
            carry = len - (s - self.step_size);
        }
        if (out.last().unwrap() - pts.last().unwrap()).norm() > 1e-9 {
            out.push(*pts.last().unwrap());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSpec {
    /// Optimize/avoid rounds before giving up on leftover collisions.
    pub rounds: usize,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self { rounds: 3 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub arm: ArmSpec,
    pub terrain: Terrain,
    pub scene: Option<SceneSpec>,
    pub path: PathSpec,
    pub task: TaskSpec,
    pub costs: CostConfig,
    pub avoidance: AvoidanceConfig,
    pub interpolation: InterpolationParams,
    pub solver: SolverOptions,
    pub control: IhcConfig,
    pub limits: SimLimits,
    pub sim: SimOptions,
    pub pipeline: PipelineSpec,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scn: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Contract(format!("scenario serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.arm.build()?;
        self.terrain.validate()?;
        self.task.validate()?;
        self.costs.validate()?;
        self.avoidance.validate()?;
        self.interpolation.validate()?;
        self.control.validate()?;
        let p = &self.path;
        if !(p.step_size > 0.0 && p.step_size.is_finite()) {
            return Err(Error::validation("step_size", "must be > 0"));
        }
        if p.waypoints.is_empty() {
            return Err(Error::validation("path.waypoints", "at least one point required"));
        }
        let swing = matches!(self.task, TaskSpec::Swing { .. });
        if !swing && p.waypoints.len() < 2 {
            return Err(Error::validation("path.waypoints", "at least two points required"));
        }
        if p.joint_mode == JointMode::Explicit && p.explicit.is_empty() {
            return Err(Error::validation("path.explicit", "required when joint_mode = \"explicit\""));
        }
        if let Some(s) = &self.scene {
            if !(s.resolution > 0.0) || s.dims.contains(&0) {
                return Err(Error::validation("scene.resolution", "resolution must be > 0 and dims nonzero"));
            }
        }
        if !(self.sim.dt > 0.0 && self.sim.max_duration > 0.0) {
            return Err(Error::validation("sim.dt", "dt and max_duration must be > 0"));
        }
        if self.pipeline.rounds == 0 {
            return Err(Error::validation("pipeline.rounds", "must be >= 1"));
        }
        Ok(())
    }
}
