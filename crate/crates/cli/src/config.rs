//! Run configuration: JSON with every section optional and unknown keys
//! rejected.

use std::path::{Path, PathBuf};

use cwsbie::geometry::{CoefficientTable, FourierTorus, SurfaceGrid, VolumeGrid};
use cwsbie::layer_potentials::QuadratureOptions;
use cwsbie::reconstruction::KernelRoute;
use cwsbie::vec3::Vec3;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub surface: SurfaceConfig,
    pub plasma: PlasmaConfig,
    pub target: TargetConfig,
    pub step1: Step1Config,
    pub step2: Step2Config,
    pub kernel: KernelConfig,
    pub tikhonov: TikhonovConfig,
    /// Output directory; `--output` takes precedence.
    pub output: Option<PathBuf>,
    /// Writes the current's field on a box around the surface as legacy VTK.
    pub vtk: Option<VtkConfig>,
    /// Writes the assembled operator matrices to `operators.bin`.
    pub dump_operators: bool,
    /// Loads operators from an earlier `operators.bin` instead of assembling
    /// them. The dump must match the surface grid. Relative paths are
    /// resolved against the config file.
    pub operators: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            surface: SurfaceConfig::default(),
            plasma: PlasmaConfig::default(),
            target: TargetConfig::Uniform([0.0, 0.0, 1.0]),
            step1: Step1Config::default(),
            step2: Step2Config::default(),
            kernel: KernelConfig::default(),
            tikhonov: TikhonovConfig::default(),
            output: None,
            vtk: None,
            dump_operators: false,
            operators: None,
        }
    }
}

/// Winding surface: Fourier coefficients `[m, n, value]` and grid sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub nfp: u32,
    pub r_coeffs: Vec<(i32, i32, f64)>,
    pub z_coeffs: Vec<(i32, i32, f64)>,
    pub n_theta: usize,
    pub n_phi: usize,
    pub quadrature: QuadratureOptions,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        let table = CoefficientTable::circular(2.0, 1.0);
        Self {
            nfp: table.nfp,
            r_coeffs: table.r_coeffs,
            z_coeffs: table.z_coeffs,
            n_theta: 64,
            n_phi: 64,
            quadrature: QuadratureOptions::default(),
        }
    }
}

/// Plasma region: the surface shrunk toward its axis by `minor_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlasmaConfig {
    pub minor_scale: f64,
    pub n_s: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for PlasmaConfig {
    fn default() -> Self {
        Self { minor_scale: 0.5, n_s: 6, n_theta: 16, n_phi: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetConfig {
    /// Constant field `[Bx, By, Bz]`.
    Uniform(Vec3),
    /// Field of a circular filament loop.
    Loop(LoopTarget),
    /// CSV file with header `x,y,z,weight,Bx,By,Bz`; the rows replace the
    /// plasma grid. Relative paths are resolved against the config file.
    Samples(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopTarget {
    pub center: Vec3,
    pub radius: f64,
    pub normal: Vec3,
    pub current: f64,
    #[serde(default = "default_loop_segments")]
    pub segments: usize,
}

fn default_loop_segments() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Step1Config {
    pub n_modes: usize,
}

impl Default for Step1Config {
    fn default() -> Self {
        Self { n_modes: 49 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Step2Config {
    pub iterations: usize,
}

impl Default for Step2Config {
    fn default() -> Self {
        Self { iterations: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// Route whose current is written to `current.csv`.
    pub route: KernelRoute,
    /// Series length of the series route and of the leakage table.
    pub iterations: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { route: KernelRoute::Series, iterations: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TikhonovConfig {
    /// Regularization parameters, swept in the given order; empty skips the
    /// baseline.
    pub lambda_sweep: Vec<f64>,
    /// Largest `|m| + |n|` of the stream-function modes.
    pub max_degree: usize,
}

impl Default for TikhonovConfig {
    fn default() -> Self {
        Self { lambda_sweep: (2..=9).map(|k| 10f64.powi(-k)).collect(), max_degree: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VtkConfig {
    /// Samples per axis of the box.
    pub dims: [usize; 3],
    /// Extra space around the surface's bounding box.
    pub margin: f64,
}

impl Default for VtkConfig {
    fn default() -> Self {
        Self { dims: [24, 24, 12], margin: 0.5 }
    }
}

/// Parses a config, naming the offending key on failure.
pub fn parse(text: &str) -> CliResult<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        // Depending on nesting, the path of an unknown key may stop at the
        // enclosing object.
        let key = match unknown_key(&message) {
            Some(k) if path == "." => k,
            Some(k) if path != k && !path.ends_with(&format!(".{k}")) => format!("{path}.{k}"),
            _ => path,
        };
        CliError::config(Some(key), message)
    })?;
    config.validate()?;
    Ok(config)
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(None, format!("cannot read config {}: {e}", path.display())))?;
    let mut config = parse(&text)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let resolve = |file: &mut PathBuf| {
        if file.is_relative() {
            *file = dir.join(&*file);
        }
    };
    if let TargetConfig::Samples(file) = &mut config.target {
        resolve(file);
    }
    if let Some(file) = &mut config.operators {
        resolve(file);
    }
    Ok(config)
}

/// Parses `NTHETAxNPHI`, or a single `N` for a square grid.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad grid size '{v}': {e}"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((n(a)?, n(b)?)),
        None => n(s).map(|v| (v, v)),
    }
}

impl RunConfig {
    fn validate(&self) -> CliResult<()> {
        let bad = |key: &str, msg: &str| Err(CliError::config(Some(key.to_string()), msg.to_string()));
        if self.step1.n_modes == 0 {
            return bad("step1.n_modes", "must be positive");
        }
        if !(self.plasma.minor_scale > 0.0 && self.plasma.minor_scale < 1.0) {
            return bad("plasma.minor_scale", "must lie in (0, 1)");
        }
        if self.tikhonov.lambda_sweep.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("tikhonov.lambda_sweep", "entries must be positive and finite");
        }
        if let TargetConfig::Loop(l) = &self.target {
            if !(l.radius > 0.0) || l.segments < 3 {
                return bad("target.loop", "needs a positive radius and at least 3 segments");
            }
        }
        Ok(())
    }

    pub fn torus(&self) -> CliResult<FourierTorus> {
        let table = CoefficientTable {
            nfp: self.surface.nfp,
            r_coeffs: self.surface.r_coeffs.clone(),
            z_coeffs: self.surface.z_coeffs.clone(),
        };
        FourierTorus::new(&table).map_err(|e| CliError::config(Some("surface".into()), e.to_string()))
    }

    pub fn surface_grid(&self, torus: &FourierTorus) -> CliResult<std::sync::Arc<SurfaceGrid>> {
        SurfaceGrid::new(torus, self.surface.n_theta, self.surface.n_phi)
            .map_err(|e| CliError::config(Some("surface.n_theta".into()), e.to_string()))
    }

    pub fn plasma_grid(&self, torus: &FourierTorus) -> CliResult<VolumeGrid> {
        let p = &self.plasma;
        VolumeGrid::new(torus, p.n_s, p.n_theta, p.n_phi, p.minor_scale)
            .map_err(|e| CliError::config(Some("plasma".into()), e.to_string()))
    }
}
