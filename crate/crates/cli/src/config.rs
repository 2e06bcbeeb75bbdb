//! Run configuration: the TOML schema, its validation, and resolution
//! into the library's mesh, wind, sensing, and solver objects.
//!
//! A written manifest is itself a valid configuration — every path is
//! absolutized at load time, so a run can be reproduced by pointing
//! `--config` at the manifest of a previous run.

use anyhow::{anyhow, bail, Context, Result};
use plumetrace_core::mesh::{classify_boundary, Mesh};
use plumetrace_core::sensing::{BumpParams, ObservationOperator};
use plumetrace_core::source::{PathPoint, ShapeBasis, SourcePath, SourceShape};
use plumetrace_core::transport::{TimeGrid, TransportSolver};
use plumetrace_core::wind::{WindField, WindModel};
use plumetrace_core::{fem::OperatorSet, pdap::InversionStack};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Diffusion coefficient used by the transport solver.
    pub kappa: f64,
    pub mesh: MeshConfig,
    pub wind: WindConfig,
    pub time: TimeConfig,
    pub shape: ShapeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<SensorsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdap: Option<PdapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    pub output: OutputConfig,
    /// Present only in written manifests; records what produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestMeta>,
}

/// Mesh source: either a generated rectangle (all four geometry fields)
/// or a mesh file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
}

/// Wind source: either a list of analytic components (summed) or a
/// per-node table file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<WindComponentConfig>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WindComponentConfig {
    Uniform { vx: f64, vy: f64 },
    Vortex { cx: f64, cy: f64, strength: f64 },
    Shear { rate: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    /// Steps covered by sensor observations.
    pub observation_steps: usize,
    /// Total marched steps for simulation and forecasting; defaults to the
    /// observation window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

/// The release to simulate: waypoints of a moving source, linearly
/// interpolated, inactive outside the waypoint time span.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub path: Vec<PathPointConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathPointConfig {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsConfig {
    /// Readings per sensor, equally spaced over the observation window,
    /// endpoints included.
    pub samples_per_sensor: usize,
    /// Spatial averaging radius of each reading.
    pub rho_x: f64,
    /// Temporal averaging radius of each reading.
    pub rho_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plateau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SensorGridConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorGridConfig {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Signal-to-noise ratio; omit for noiseless measurements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdapSection {
    /// Charge per unit release weight.
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insert_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Candidate diffusion coefficients; defaults to one per decade from
    /// 1e-5 to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_grid: Option<Vec<f64>>,
    /// When no reference readings file is supplied, generate the reference
    /// with this coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_kappa: Option<f64>,
    pub patch: PatchConfig,
    pub line: LineConfig,
}

/// Axis-aligned box held at a fixed concentration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub value: f64,
}

/// Downstream sampling line of the calibration experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    pub length: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write visualization files alongside the tabular outputs.
    #[serde(default)]
    pub vtk: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMeta {
    pub tool: String,
    pub version: String,
    pub command: String,
}

impl Config {
    /// Parses a configuration file and absolutizes every path it contains
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: Config = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let absolutize = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        if let Some(file) = config.mesh.file.as_mut() {
            absolutize(file);
        }
        if let Some(file) = config.wind.file.as_mut() {
            absolutize(file);
        }
        absolutize(&mut config.output.dir);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            bail!("kappa must be positive and finite, got {}", self.kappa);
        }
        match (&self.mesh.file, self.mesh.width, self.mesh.height, self.mesh.nx, self.mesh.ny) {
            (Some(_), None, None, None, None) => {}
            (None, Some(_), Some(_), Some(_), Some(_)) => {}
            _ => bail!(
                "[mesh] must give either `file` or all of `width`, `height`, `nx`, `ny`"
            ),
        }
        match (&self.wind.file, &self.wind.components) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => bail!("[wind] must give either `file` or `components`"),
        }
        if !(self.time.dt > 0.0) || !self.time.dt.is_finite() {
            bail!("[time] dt must be positive and finite, got {}", self.time.dt);
        }
        if self.time.observation_steps == 0 {
            bail!("[time] observation_steps must be positive");
        }
        if let Some(f) = self.time.forecast_steps {
            if f < self.time.observation_steps {
                bail!(
                    "[time] forecast_steps ({f}) must not be shorter than observation_steps ({})",
                    self.time.observation_steps
                );
            }
        }
        if let Some(sensors) = &self.sensors {
            match (&sensors.positions, &sensors.grid) {
                (Some(p), None) if !p.is_empty() => {}
                (None, Some(g)) if g.nx >= 1 && g.ny >= 1 => {}
                (None, Some(_)) => bail!("[sensors.grid] nx and ny must be at least 1"),
                (Some(_), None) => bail!("[sensors] positions must not be empty"),
                _ => bail!("[sensors] must give either `positions` or `grid`"),
            }
            if sensors.samples_per_sensor < 2 {
                bail!("[sensors] samples_per_sensor must be at least 2");
            }
        }
        if let Some(truth) = &self.truth {
            if truth.path.is_empty() {
                bail!("[truth] path must contain at least one waypoint");
            }
        }
        Ok(())
    }

    /// Total number of marched steps (forecast horizon).
    pub fn horizon_steps(&self) -> usize {
        self.time.forecast_steps.unwrap_or(self.time.observation_steps)
    }

    pub fn source_shape(&self) -> SourceShape {
        let mut shape = SourceShape::new(self.shape.radius);
        if let Some(eps) = self.shape.eps {
            shape.eps = eps;
        }
        if let Some(cap) = self.shape.cap {
            shape.cap = cap;
        }
        shape
    }

    /// Builds the mesh and the wind together (a nodal wind table needs the
    /// mesh size, classification needs the wind) and classifies the
    /// boundary.
    pub fn build_mesh_and_wind(&self) -> Result<(Mesh, WindField)> {
        let mut mesh = match &self.mesh.file {
            Some(file) => Mesh::load(file)
                .with_context(|| format!("cannot load mesh {}", file.display()))?,
            None => Mesh::generate_rect(
                self.mesh.width.unwrap(),
                self.mesh.height.unwrap(),
                self.mesh.nx.unwrap(),
                self.mesh.ny.unwrap(),
            )?,
        };
        let wind = match (&self.wind.file, &self.wind.components) {
            (Some(file), None) => read_wind_table(file, mesh.n_nodes())?,
            (None, Some(components)) => WindField::Analytic(
                components
                    .iter()
                    .map(|c| match *c {
                        WindComponentConfig::Uniform { vx, vy } => WindModel::Uniform { vx, vy },
                        WindComponentConfig::Vortex { cx, cy, strength } => {
                            WindModel::Vortex { cx, cy, strength }
                        }
                        WindComponentConfig::Shear { rate } => WindModel::Shear { rate },
                    })
                    .collect(),
            ),
            _ => unreachable!("validated"),
        };
        classify_boundary(&mut mesh, &wind, None)?;
        Ok((mesh, wind))
    }

    pub fn sensor_positions(&self) -> Result<Vec<[f64; 2]>> {
        let sensors =
            self.sensors.as_ref().ok_or_else(|| anyhow!("[sensors] section required"))?;
        if let Some(positions) = &sensors.positions {
            return Ok(positions.clone());
        }
        let g = sensors.grid.as_ref().unwrap();
        let mut out = Vec::with_capacity(g.nx * g.ny);
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let fx = if g.nx == 1 { 0.0 } else { ix as f64 / (g.nx - 1) as f64 };
                let fy = if g.ny == 1 { 0.0 } else { iy as f64 / (g.ny - 1) as f64 };
                out.push([g.x0 + fx * (g.x1 - g.x0), g.y0 + fy * (g.y1 - g.y0)]);
            }
        }
        Ok(out)
    }

    /// Sample instants: equally spaced over the observation window,
    /// endpoints included.
    pub fn sample_times(&self) -> Result<Vec<f64>> {
        let sensors =
            self.sensors.as_ref().ok_or_else(|| anyhow!("[sensors] section required"))?;
        let t_end = self.time.dt * self.time.observation_steps as f64;
        let s = sensors.samples_per_sensor;
        Ok((0..s).map(|i| t_end * i as f64 / (s - 1) as f64).collect())
    }

    pub fn truth_path(&self) -> Result<SourcePath> {
        let truth = self.truth.as_ref().ok_or_else(|| anyhow!("[truth] section required"))?;
        let points = truth
            .path
            .iter()
            .map(|p| PathPoint { t: p.t, pos: [p.x, p.y], intensity: p.intensity })
            .collect();
        Ok(SourcePath::new(points)?)
    }

    /// Assembles the full inversion stack this configuration describes.
    pub fn build_stack(&self) -> Result<(Mesh, WindField, InversionStack)> {
        let (mesh, wind) = self.build_mesh_and_wind()?;
        let ops = OperatorSet::assemble(&mesh, &wind, self.kappa)?;
        let solver = TransportSolver::new(ops, self.time.dt)?;
        let basis = ShapeBasis::assemble(&mesh, &self.source_shape())?;
        let sensors =
            self.sensors.as_ref().ok_or_else(|| anyhow!("[sensors] section required"))?;
        let mut params = BumpParams::new(sensors.rho_x, sensors.rho_t);
        if let Some(p) = sensors.plateau {
            params.plateau = p;
        }
        let grid = TimeGrid::new(self.time.dt, self.time.observation_steps)?;
        let obs = ObservationOperator::assemble(
            &mesh,
            &solver.ops().mass,
            &grid,
            &self.sensor_positions()?,
            &self.sample_times()?,
            &params,
        )?;
        let stack = InversionStack::new(solver, basis, obs)?;
        Ok((mesh, wind, stack))
    }
}

/// Reads a per-node wind table: CSV with columns `node_id,vx,vy`, one row
/// per mesh node, each node appearing exactly once.
fn read_wind_table(path: &Path, n_nodes: usize) -> Result<WindField> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read wind table {}", path.display()))?;
    {
        let headers = reader.headers()?;
        let expected = ["node_id", "vx", "vy"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            bail!(
                "wind table {} must have header `node_id,vx,vy`, found {:?}",
                path.display(),
                headers
            );
        }
    }
    let mut table = vec![None; n_nodes];
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| anyhow!("missing column {i}"))?
                .trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("row {}: {e}", line + 2))
        };
        let node: usize = record
            .get(0)
            .ok_or_else(|| anyhow!("missing node_id"))?
            .trim()
            .parse()
            .map_err(|e| anyhow!("row {}: bad node_id: {e}", line + 2))?;
        if node >= n_nodes {
            bail!("wind table row {} names node {node}, mesh has {n_nodes}", line + 2);
        }
        if table[node].is_some() {
            bail!("wind table lists node {node} twice");
        }
        table[node] = Some([parse(1)?, parse(2)?]);
    }
    let table: Option<Vec<[f64; 2]>> = table.into_iter().collect();
    match table {
        Some(t) => Ok(WindField::Nodal(t)),
        None => bail!("wind table does not cover every mesh node (need {n_nodes} rows)"),
    }
}

/// The manifest is the resolved configuration plus provenance of the run
/// that wrote it; `--config manifest.toml` reproduces the run.
pub fn manifest_text(config: &Config, command: &str) -> Result<String> {
    let mut stamped = config.clone();
    stamped.manifest = Some(ManifestMeta {
        tool: "plume-trace".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
    });
    Ok(toml::to_string(&stamped)?)
}
