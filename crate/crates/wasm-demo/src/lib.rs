//! Browser bindings for three small computations on a circular torus: the
//! solid-angle check of the double layer, a uniform-field reconstruction and
//! the kernel current. Every export returns a JSON string.

use std::sync::Arc;

use cwsbie::geometry::{FourierTorus, SurfaceGrid, VolumeGrid};
use cwsbie::layer_potentials::LayerOperators;
use cwsbie::reconstruction::{KernelRoute, Reconstruction};
use cwsbie::vec3::{self, Vec3};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest grid accepted by the demo; the dense operators grow as `n⁴`.
pub const MAX_GRID: usize = 40;

/// `|j|` on the `(θ, φ)` grid, row-major in `θ`.
#[derive(Debug, Serialize)]
pub struct CurrentMap {
    pub n_theta: usize,
    pub n_phi: usize,
    pub magnitude: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct SolidAngleReport {
    pub n: usize,
    pub defect: f64,
    pub assembled_defect: f64,
}

#[derive(Debug, Serialize)]
pub struct ReconstructReport {
    pub n: usize,
    pub step1_residual: f64,
    pub residual_vs_target: f64,
    pub series_term_norms: Vec<f64>,
    pub qbar_relative: f64,
    pub map: CurrentMap,
}

#[derive(Debug, Serialize)]
pub struct KernelReport {
    pub n: usize,
    pub leakage: f64,
    pub qbar_relative: f64,
    pub pbar_relative: f64,
    pub map: CurrentMap,
}

fn grid(major: f64, minor: f64, n: usize) -> cwsbie::Result<Arc<SurfaceGrid>> {
    if !(8..=MAX_GRID).contains(&n) {
        return Err(cwsbie::Error::InvalidArgument(format!("grid size must lie in 8..={MAX_GRID}, got {n}")));
    }
    SurfaceGrid::new(&FourierTorus::circular(major, minor)?, n, n)
}

fn reconstruction(major: f64, minor: f64, n: usize) -> cwsbie::Result<Reconstruction> {
    let grid = grid(major, minor, n)?;
    let plasma = VolumeGrid::new(&grid.torus, 3, 8, 16, 0.4)?;
    Reconstruction::new(Arc::new(LayerOperators::assemble(grid)?), plasma)
}

fn current_map(grid: &SurfaceGrid, j: &[Vec3]) -> CurrentMap {
    CurrentMap { n_theta: grid.n_theta, n_phi: grid.n_phi, magnitude: j.iter().map(|v| vec3::norm(*v)).collect() }
}

pub fn solid_angle_report(major: f64, minor: f64, n: usize) -> cwsbie::Result<SolidAngleReport> {
    let ops = LayerOperators::assemble(grid(major, minor, n)?)?;
    Ok(SolidAngleReport { n, defect: ops.solid_angle_defect(), assembled_defect: ops.row_sum_defect() })
}

/// Fits the uniform field `b` in the inner half of the torus with `modes`
/// harmonic modes, then solves for the current.
pub fn reconstruct_report(
    major: f64,
    minor: f64,
    n: usize,
    b: Vec3,
    modes: usize,
) -> cwsbie::Result<ReconstructReport> {
    let rec = reconstruction(major, minor, n)?;
    let target = vec![b; rec.plasma.len()];
    let s1 = rec.step1_fit(&target, modes, None)?;
    let pre = rec.step2_preimage(&s1, 12)?;
    Ok(ReconstructReport {
        n,
        step1_residual: s1.residual,
        residual_vs_target: pre.residual_vs_target,
        series_term_norms: pre.series_term_norms,
        qbar_relative: pre.windings.qbar_relative,
        map: current_map(rec.grid(), &pre.current),
    })
}

pub fn kernel_report(major: f64, minor: f64, n: usize) -> cwsbie::Result<KernelReport> {
    let rec = reconstruction(major, minor, n)?;
    let k = rec.kernel_element(KernelRoute::Exact, 0)?;
    Ok(KernelReport {
        n,
        leakage: k.leakage,
        qbar_relative: k.windings.qbar_relative,
        pbar_relative: k.windings.pbar_relative,
        map: current_map(rec.grid(), &k.current),
    })
}

fn to_js<T: Serialize>(r: cwsbie::Result<T>) -> Result<String, String> {
    r.map(|v| serde_json::to_string(&v).expect("reports serialize")).map_err(|e| e.to_string())
}

/// `max |W·1 + ½|` before and after the diagonal correction.
#[wasm_bindgen]
pub fn solid_angle(major: f64, minor: f64, n: usize) -> Result<String, String> {
    to_js(solid_angle_report(major, minor, n))
}

#[wasm_bindgen]
pub fn reconstruct_uniform(
    major: f64,
    minor: f64,
    n: usize,
    bx: f64,
    by: f64,
    bz: f64,
    modes: usize,
) -> Result<String, String> {
    to_js(reconstruct_report(major, minor, n, [bx, by, bz], modes))
}

/// Current whose field vanishes inside the torus.
#[wasm_bindgen]
pub fn kernel_current(major: f64, minor: f64, n: usize) -> Result<String, String> {
    to_js(kernel_report(major, minor, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_run_on_a_small_grid() {
        let s = solid_angle_report(2.0, 1.0, 16).unwrap();
        assert!(s.defect < 1e-2 && s.assembled_defect < 1e-12);

        let r = reconstruct_report(2.0, 1.0, 24, [0.0, 0.0, 1.0], 9).unwrap();
        assert_eq!(r.map.magnitude.len(), 24 * 24);
        assert!(r.residual_vs_target < 0.05 && r.qbar_relative < 1e-6, "{r:?}");

        let k = kernel_report(2.0, 1.0, 24).unwrap();
        assert!(k.leakage < 1e-2 && k.pbar_relative < 1e-6 && k.qbar_relative > 0.1, "{k:?}");
        let json = kernel_current(2.0, 1.0, 24).unwrap();
        assert!(json.starts_with("{\"n\":24"));
    }

    #[test]
    fn grid_limits_are_reported() {
        let err = solid_angle(2.0, 1.0, 200).unwrap_err();
        assert!(err.contains("grid size"));
        assert!(kernel_current(1.0, 2.0, 16).is_err());
    }
}
