//! The `reconstruct` and `kernel` commands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cwsbie::fields::{bs_filament, bs_surface_current, toroidal_circulation, BoxGrid, FilamentLoop};
use cwsbie::geometry::{ReferenceCurves, SurfaceGrid, VolumeGrid};
use cwsbie::layer_potentials::LayerOperators;
use cwsbie::reconstruction::{
    geometric_fit, KernelRoute, PreimageResult, Reconstruction, TikhonovPoint, WindingCertificate,
};
use cwsbie::surface_fields::{FourierSeries, SurfaceCurrent};
use cwsbie::vec3::{self, Vec3};
use serde::Serialize;

use crate::artifacts::{vector_csv, OutputDir, Table};
use crate::config::{RunConfig, TargetConfig};
use crate::error::{CliError, CliResult};

/// Settings shared by the commands after flags are applied.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub config: RunConfig,
    pub output: PathBuf,
    pub seed: u64,
}

impl RunOptions {
    /// Applies the `--grid` and `--output` overrides.
    pub fn new(mut config: RunConfig, output: Option<PathBuf>, grid: Option<(usize, usize)>, seed: u64) -> Self {
        if let Some((nt, np)) = grid {
            config.surface.n_theta = nt;
            config.surface.n_phi = np;
        }
        let output = output.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("cwsbie-out"));
        Self { config, output, seed }
    }
}

#[derive(Serialize)]
struct SurfaceReport {
    n_theta: usize,
    n_phi: usize,
    nodes: usize,
    area: f64,
    /// `max |W·1 + ½|` before singularity subtraction.
    solid_angle_defect: f64,
}

#[derive(Serialize)]
struct ContractionReport {
    lambda_hat: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct Step1Report {
    alpha0: f64,
    alphas: Vec<f64>,
    /// Modes as `cos(m,n)` or `sin(m,n)`.
    basis_keys: Vec<String>,
    residual_history: Vec<f64>,
    residual: f64,
    effective_rank: usize,
    target_circulation: Option<f64>,
}

#[derive(Serialize)]
struct PreimageReport {
    iterations: Option<usize>,
    series_term_norms: Vec<f64>,
    increment_norms: Vec<f64>,
    residual_vs_fit: f64,
    residual_vs_target: f64,
    windings: WindingCertificate,
}

impl From<&PreimageResult> for PreimageReport {
    fn from(p: &PreimageResult) -> Self {
        Self {
            iterations: p.iterations,
            series_term_norms: p.series_term_norms.clone(),
            increment_norms: p.increment_norms.clone(),
            residual_vs_fit: p.residual_vs_fit,
            residual_vs_target: p.residual_vs_target,
            windings: p.windings,
        }
    }
}

#[derive(Serialize)]
struct TikhonovReport {
    max_degree: usize,
    sweep: Vec<TikhonovPoint>,
    operator_norm_sq: f64,
    /// Residual at the last λ divided by the two-step residual.
    ratio_to_two_step: f64,
}

#[derive(Serialize)]
struct CurrentReport {
    /// Relative `L²(Σ)` mismatch between the nodal current and its
    /// stream-function representation in `current.json`.
    representation_mismatch: f64,
    alpha: f64,
    beta: f64,
    stream_terms: usize,
}

#[derive(Serialize)]
struct ReconstructReport {
    command: &'static str,
    seed: u64,
    surface: SurfaceReport,
    plasma_points: usize,
    contraction: ContractionReport,
    target_norm: f64,
    step1: Step1Report,
    step2: PreimageReport,
    exact: PreimageReport,
    tikhonov: Option<TikhonovReport>,
    current: CurrentReport,
}

#[derive(Serialize)]
struct RouteReport {
    route: KernelRoute,
    leakage: f64,
    windings: WindingCertificate,
    removed_flux_mean: f64,
}

#[derive(Serialize)]
struct KernelReport {
    command: &'static str,
    seed: u64,
    surface: SurfaceReport,
    plasma_points: usize,
    contraction: ContractionReport,
    selected_route: KernelRoute,
    iterations: usize,
    routes: Vec<RouteReport>,
    /// `‖j_exact − j_exterior‖ / ‖j_exact‖` in `L²(Σ)`.
    exact_vs_exterior: f64,
    series_leakage: Vec<f64>,
    series_increments: Vec<f64>,
    fitted_decay_ratio: f64,
    fitted_decay_constant: f64,
    current: CurrentReport,
}

/// Surface, operators, plasma region and target values.
struct Setup {
    rec: Reconstruction,
    target: Vec<Vec3>,
    circulation: Option<f64>,
    out: OutputDir,
}

fn read_samples(path: &Path) -> CliResult<(Vec<Vec3>, Vec<f64>, Vec<Vec3>)> {
    let key = Some("target.samples".to_string());
    let bad = |msg: String| CliError::config(key.clone(), msg);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    if header != ["x", "y", "z", "weight", "Bx", "By", "Bz"] {
        return Err(bad(format!("expected header x,y,z,weight,Bx,By,Bz, found {}", header.join(","))));
    }
    let (mut points, mut weights, mut values) = (Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let row: Vec<f64> = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        points.push([row[0], row[1], row[2]]);
        weights.push(row[3]);
        values.push([row[4], row[5], row[6]]);
    }
    Ok((points, weights, values))
}

fn setup(opts: &RunOptions) -> CliResult<Setup> {
    let config = &opts.config;
    let torus = config.torus()?;
    let grid = config.surface_grid(&torus)?;
    let out = OutputDir::create(&opts.output)?;
    let ops = match &config.operators {
        Some(path) => LayerOperators::read_binary(grid.clone(), path)
            .map_err(|e| CliError::config(Some("operators".into()), format!("{}: {e}", path.display())))?,
        None => LayerOperators::assemble_with(grid.clone(), config.surface.quadrature.clone())
            .map_err(|e| CliError::config(Some("surface.quadrature".into()), e.to_string()))?,
    };
    if config.dump_operators {
        ops.write_binary(&out.path("operators.bin"))?;
    }
    let axis = ReferenceCurves::axis_loop(&torus, 256);
    let (plasma, target, circulation) = match &config.target {
        TargetConfig::Uniform(b) => {
            let plasma = config.plasma_grid(&torus)?;
            let target = vec![*b; plasma.len()];
            let circ = toroidal_circulation(|p| Ok(vec![*b; p.len()]), &axis)?;
            (plasma, target, Some(circ))
        }
        TargetConfig::Loop(l) => {
            let filament = FilamentLoop::circle(l.center, l.radius, l.normal, l.segments, l.current)
                .map_err(|e| CliError::config(Some("target.loop".into()), e.to_string()))?;
            let plasma = config.plasma_grid(&torus)?;
            let target = bs_filament(&filament, &plasma.points)?;
            let circ = toroidal_circulation(|p| bs_filament(&filament, p), &axis)?;
            (plasma, target, Some(circ))
        }
        TargetConfig::Samples(path) => {
            let (points, weights, values) = read_samples(path)?;
            let plasma = VolumeGrid::from_samples(points, weights, config.plasma.minor_scale)
                .map_err(|e| CliError::config(Some("target.samples".into()), e.to_string()))?;
            (plasma, values, None)
        }
    };
    let rec = Reconstruction::new(Arc::new(ops), plasma)
        .map_err(|e| match e {
            cwsbie::Error::InvalidArgument(m) => CliError::config(Some("plasma".into()), m),
            other => other.into(),
        })?
        .with_seed(opts.seed);
    Ok(Setup { rec, target, circulation, out })
}

fn surface_report(rec: &Reconstruction) -> SurfaceReport {
    let grid = rec.grid();
    SurfaceReport {
        n_theta: grid.n_theta,
        n_phi: grid.n_phi,
        nodes: grid.len(),
        area: grid.area,
        solid_angle_defect: rec.operators().solid_angle_defect(),
    }
}

fn contraction_report(rec: &Reconstruction) -> CliResult<ContractionReport> {
    let c = rec.contraction()?;
    Ok(ContractionReport { lambda_hat: c.lambda, iterations: c.ratios.len() })
}

/// Writes `current.csv` and `current.json` for a nodal current.
fn write_current(out: &OutputDir, rec: &Reconstruction, j: &[Vec3]) -> CliResult<CurrentReport> {
    let grid: &SurfaceGrid = rec.grid();
    out.write("current.csv", &vector_csv("j", &grid.points, j))?;
    let (current, mismatch) = SurfaceCurrent::from_nodal(grid, &rec.basis, j)?;
    out.write_json("current.json", &current)?;
    let FourierSeries { cos, sin } = &current.stream_coeffs;
    Ok(CurrentReport {
        representation_mismatch: mismatch,
        alpha: current.alpha,
        beta: current.beta,
        stream_terms: cos.len() + sin.len(),
    })
}

fn write_vtk(opts: &RunOptions, out: &OutputDir, grid: &SurfaceGrid, j: &[Vec3]) -> CliResult<()> {
    let Some(vtk) = &opts.config.vtk else {
        return Ok(());
    };
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &grid.points {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c] - vtk.margin);
            hi[c] = hi[c].max(p[c] + vtk.margin);
        }
    }
    let bx = BoxGrid::new(lo, hi, vtk.dims).map_err(|e| CliError::config(Some("vtk.dims".into()), e.to_string()))?;
    let field = bs_surface_current(grid, j, &bx.points());
    bx.write_vtk(&out.path("field.vtk"), "B", &field)?;
    Ok(())
}

pub fn reconstruct(opts: &RunOptions) -> CliResult<()> {
    let config = &opts.config;
    let Setup { rec, target, circulation, out } = setup(opts)?;
    let contraction = contraction_report(&rec)?;
    let s1 = rec.step1_fit(&target, config.step1.n_modes, circulation)?;
    let step2 = rec.step2_preimage(&s1, config.step2.iterations)?;
    let exact = rec.exact_preimage(&s1)?;
    let tikhonov = if config.tikhonov.lambda_sweep.is_empty() {
        None
    } else {
        let t = rec.regularized_fit(&target, &config.tikhonov.lambda_sweep, config.tikhonov.max_degree)?;
        let last = t.sweep.last().map(|p| p.residual).unwrap_or(f64::NAN);
        Some(TikhonovReport {
            max_degree: config.tikhonov.max_degree,
            ratio_to_two_step: last / step2.residual_vs_target,
            operator_norm_sq: t.operator_norm_sq,
            sweep: t.sweep,
        })
    };

    let grid = rec.grid().clone();
    let field = rec.field_on_plasma(&step2.current);
    out.write("field_on_plasma.csv", &vector_csv("B", &rec.plasma.points, &field))?;
    let current = write_current(&out, &rec, &step2.current)?;
    write_vtk(opts, &out, &grid, &step2.current)?;

    let mut table = Table::new();
    table.push_series("step1_residual", 0, &s1.residual_history);
    table.push_series("step2_series_term_norm", 0, &step2.series_term_norms);
    table.push_series("step2_increment_norm", 1, &step2.increment_norms);
    if let Some(t) = &tikhonov {
        for p in &t.sweep {
            table.push("tikhonov_residual", p.lambda, p.residual);
        }
    }
    out.write("residuals.csv", &table.into_string())?;

    let report = ReconstructReport {
        command: "reconstruct",
        seed: opts.seed,
        surface: surface_report(&rec),
        plasma_points: rec.plasma.len(),
        contraction,
        target_norm: rec.plasma_norm(&target),
        step1: Step1Report {
            alpha0: s1.alpha0,
            alphas: s1.alphas.clone(),
            basis_keys: s1
                .basis_keys
                .iter()
                .map(|k| format!("{}({},{})", format!("{:?}", k.kind).to_lowercase(), k.m, k.n))
                .collect(),
            residual_history: s1.residual_history.clone(),
            residual: s1.residual,
            effective_rank: s1.effective_rank,
            target_circulation: s1.circulation,
        },
        step2: (&step2).into(),
        exact: (&exact).into(),
        tikhonov,
        current,
    };
    out.write_json("report.json", &report)
}

pub fn kernel(opts: &RunOptions) -> CliResult<()> {
    let config = &opts.config;
    let Setup { rec, out, .. } = setup(opts)?;
    let n = config.kernel.iterations;
    let contraction = contraction_report(&rec)?;
    let elements = [KernelRoute::Series, KernelRoute::Exact, KernelRoute::Exterior]
        .into_iter()
        .map(|r| rec.kernel_element(r, n))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = rec.grid().clone();
    let (exact, exterior) = (&elements[1].current, &elements[2].current);
    let diff: Vec<Vec3> = exact.iter().zip(exterior.iter()).map(|(a, b)| vec3::sub(*a, *b)).collect();
    let exact_vs_exterior = cwsbie::surface_fields::TangentField(diff).l2_norm(&grid) / exact.l2_norm(&grid);
    let study = rec.kernel_series_study(n)?;
    let (ratio, constant) = geometric_fit(&study.leakage);
    let selected = elements.iter().find(|e| e.route == config.kernel.route).expect("all routes computed");
    let current = write_current(&out, &rec, &selected.current)?;
    write_vtk(opts, &out, &grid, &selected.current)?;

    let mut table = Table::new();
    table.push_series("series_leakage", 0, &study.leakage);
    table.push_series("series_increment_norm", 1, &study.increments);
    out.write("leakage.csv", &table.into_string())?;

    let report = KernelReport {
        command: "kernel",
        seed: opts.seed,
        surface: surface_report(&rec),
        plasma_points: rec.plasma.len(),
        contraction,
        selected_route: config.kernel.route,
        iterations: n,
        routes: elements
            .iter()
            .map(|e| RouteReport {
                route: e.route,
                leakage: e.leakage,
                windings: e.windings,
                removed_flux_mean: e.removed_flux_mean,
            })
            .collect(),
        exact_vs_exterior,
        series_leakage: study.leakage,
        series_increments: study.increments,
        fitted_decay_ratio: ratio,
        fitted_decay_constant: constant,
        current,
    };
    out.write_json("report.json", &report)
}
