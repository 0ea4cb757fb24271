//! Measured constants of two norm equivalences on the solid torus `Ω`:
//!
//! - harmonic functions: `‖∇f‖_{L²(Ω)} / ‖N·∇f‖_{W^{−1/2}}` over random
//!   band-limited Neumann data;
//! - surface currents without a `γ_p × N` part:
//!   `‖j‖_{W^{−1/2}} / ‖BS_Σ(j)‖_{L²(Ω)}`.
//!
//! Volume integrals use a Gauss grid filling `Ω`. Its outer nodes sit close to
//! the surface, so densities and currents are first moved to a finer surface
//! grid (spectral interpolation, or exact evaluation for currents) before the
//! kernels are summed with the trapezoid rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bvp::BoundarySolver;
use crate::error::{Error, Result};
use crate::fields::bs_surface_current_many;
use crate::geometry::{SurfaceGrid, VolumeGrid};
use crate::layer_potentials::single_layer_gradient_many;
use crate::surface_fields::{random_series, HarmonicSurfaceBasis, SurfaceCurrent};
use crate::vec3::{self, Vec3};

/// Sampling and quadrature parameters of a survey.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurveyOptions {
    pub samples: usize,
    /// Largest total Fourier degree `|m| + |n|` of the random data.
    pub max_degree: i32,
    pub seed: u64,
    /// Refinement factor of the surface grid used for volume evaluation.
    pub upsample: usize,
    /// Gauss nodes in the radial direction of the volume grid.
    pub radial_nodes: usize,
    pub volume_theta: usize,
    pub volume_phi: usize,
}

impl Default for SurveyOptions {
    fn default() -> Self {
        Self { samples: 20, max_degree: 3, seed: 7, upsample: 4, radial_nodes: 6, volume_theta: 24, volume_phi: 48 }
    }
}

/// Ratios measured over random samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioSurvey {
    pub ratios: Vec<f64>,
    /// The same ratios from an independent route (Green's identity, or the
    /// unrefined surface grid), to expose quadrature error.
    pub cross_check: Vec<f64>,
}

impl RatioSurvey {
    pub fn min(&self) -> f64 {
        self.ratios.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max / min` of the measured ratios.
    pub fn spread(&self) -> f64 {
        self.max() / self.min()
    }

    /// Largest factor by which either end of the interval moves between two
    /// surveys.
    pub fn drift(&self, other: &Self) -> f64 {
        let f = |a: f64, b: f64| (a / b).max(b / a);
        f(self.min(), other.min()).max(f(self.max(), other.max()))
    }

    /// Largest relative gap between `ratios` and `cross_check`.
    pub fn cross_check_gap(&self) -> f64 {
        self.ratios.iter().zip(&self.cross_check).map(|(a, b)| (a - b).abs() / a.abs()).fold(0.0, f64::max)
    }
}

fn check(opts: &SurveyOptions) -> Result<()> {
    if opts.samples == 0 || opts.max_degree < 1 || opts.upsample == 0 {
        return Err(Error::InvalidArgument("survey needs samples, max_degree >= 1 and upsample >= 1".into()));
    }
    Ok(())
}

fn volume_and_fine(grid: &SurfaceGrid, opts: &SurveyOptions) -> Result<(VolumeGrid, std::sync::Arc<SurfaceGrid>)> {
    let volume = VolumeGrid::new(&grid.torus, opts.radial_nodes, opts.volume_theta, opts.volume_phi, 1.0)?;
    let fine = SurfaceGrid::new(&grid.torus, grid.n_theta * opts.upsample, grid.n_phi * opts.upsample)?;
    Ok((volume, fine))
}

fn volume_norm(volume: &VolumeGrid, v: &[Vec3]) -> f64 {
    v.iter().zip(&volume.weights).map(|(x, w)| vec3::dot(*x, *x) * w).sum::<f64>().sqrt()
}

/// `‖∇f‖_{L²(Ω)} / ‖b‖_{W^{−1/2}}` for harmonic `f` with random mean-zero
/// Neumann data `b`. The cross-check uses `‖∇f‖² = ∫_Σ f b`.
pub fn neumann_energy_survey(solver: &BoundarySolver, opts: &SurveyOptions) -> Result<RatioSurvey> {
    check(opts)?;
    let ops = solver.operators();
    let grid = ops.grid();
    let (volume, fine) = volume_and_fine(grid, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut densities = Vec::with_capacity(opts.samples);
    let mut survey = RatioSurvey::default();
    let mut dual = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let mut b = random_series(&mut rng, opts.max_degree).sample(grid).0;
        let m = grid.mean(&b);
        b.iter_mut().for_each(|v| *v -= m);
        let sol = solver.solve_neumann_interior(&b)?;
        let norm = ops.duality_norm(&b);
        dual.push(norm);
        survey.cross_check.push(grid.inner(&sol.trace, &b).max(0.0).sqrt() / norm);
        densities.push(grid.spectral.upsample(&sol.density, fine.n_theta, fine.n_phi));
    }
    let grads = single_layer_gradient_many(&fine, &densities, &volume.points);
    survey.ratios = grads.iter().zip(&dual).map(|(g, d)| volume_norm(&volume, g) / d).collect();
    Ok(survey)
}

/// `‖j‖_{W^{−1/2}} / ‖BS_Σ(j)‖_{L²(Ω)}` for random currents with `β = 0`.
/// The cross-check evaluates the field from the unrefined grid.
pub fn current_norm_survey(solver: &BoundarySolver, opts: &SurveyOptions) -> Result<RatioSurvey> {
    check(opts)?;
    let ops = solver.operators();
    let grid = ops.grid();
    let (volume, fine) = volume_and_fine(grid, opts)?;
    let basis = HarmonicSurfaceBasis::new(grid)?;
    let fine_basis = HarmonicSurfaceBasis::new(&fine)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut coarse = Vec::with_capacity(opts.samples);
    let mut refined = Vec::with_capacity(opts.samples);
    let mut dual = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let stream_coeffs = random_series(&mut rng, opts.max_degree);
        let alpha = rand::Rng::random_range(&mut rng, -1.0..1.0);
        let current = SurfaceCurrent { stream_coeffs, alpha, beta: 0.0 };
        let j = current.realize(grid, &basis).0;
        dual.push(ops.duality_norm_vector(&j));
        coarse.push(j);
        refined.push(current.realize(&fine, &fine_basis).0);
    }
    let fields = bs_surface_current_many(&fine, &refined, &volume.points);
    let fields_coarse = bs_surface_current_many(grid, &coarse, &volume.points);
    let ratio =
        |f: &[Vec<Vec3>]| -> Vec<f64> { f.iter().zip(&dual).map(|(b, d)| d / volume_norm(&volume, b)).collect() };
    Ok(RatioSurvey { ratios: ratio(&fields), cross_check: ratio(&fields_coarse) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FourierTorus;
    use crate::layer_potentials::LayerOperators;
    use std::sync::Arc;

    #[test]
    fn interval_statistics() {
        let a = RatioSurvey { ratios: vec![1.0, 2.0, 4.0], cross_check: vec![1.0, 2.2, 4.0] };
        let b = RatioSurvey { ratios: vec![1.5, 3.0], cross_check: vec![] };
        assert_eq!(a.spread(), 4.0);
        assert_eq!(a.drift(&b), 1.5);
        assert!((a.cross_check_gap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn surveys_on_a_coarse_grid_are_bounded() {
        let torus = FourierTorus::circular(2.0, 1.0).unwrap();
        let grid = SurfaceGrid::new(&torus, 32, 32).unwrap();
        let solver = BoundarySolver::new(Arc::new(LayerOperators::assemble(grid).unwrap()));
        let opts = SurveyOptions { samples: 5, ..Default::default() };
        let c1 = neumann_energy_survey(&solver, &opts).unwrap();
        assert_eq!(c1.ratios.len(), 5);
        assert!(c1.spread() < 20.0 && c1.cross_check_gap() < 0.05, "{c1:?}");
        let d3 = current_norm_survey(&solver, &opts).unwrap();
        assert!(d3.min() > 0.0 && d3.spread() < 20.0);
        assert!(neumann_energy_survey(&solver, &SurveyOptions { samples: 0, ..opts }).is_err());
    }
}
