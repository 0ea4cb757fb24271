//! Laplace boundary value problems in the solid torus and its exterior,
//! all represented by single layers `f = v[ψ]`.
//!
//! The normal derivative of `v[ψ]` on the boundary is `(½ − Wᵀʳ)ψ` from the
//! inside and `−(½ + Wᵀʳ)ψ` from the outside, so only second-kind operators
//! appear in the Neumann problems. The Dirichlet problem is the first-kind
//! equation `Vψ = κ`, solved through the symmetric Gram matrix with a
//! truncated spectrum.

use std::sync::{Arc, OnceLock};

use crate::dense::{DenseMatrix, LuFactor, SymmetricEigen};
use crate::error::{Error, Result};
use crate::layer_potentials::LayerOperators;
use crate::surface_fields::{surface_gradient, ScalarDensity, TangentField};
use crate::vec3::Vec3;

/// Relative eigenvalue cutoff for the Dirichlet solve.
pub const DIRICHLET_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Interior,
    Exterior,
}

/// Accuracy bookkeeping of a boundary solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    /// Relative residual of the boundary equation.
    pub residual: f64,
    /// Condition estimate of the factored operator, when known.
    pub condition: Option<f64>,
    /// Spectral modes discarded by the truncated Dirichlet solve.
    pub dropped_modes: usize,
}

/// A harmonic function given as the single layer of `density`.
#[derive(Clone, Debug)]
pub struct HarmonicSolution {
    ops: Arc<LayerOperators>,
    pub side: Side,
    pub density: ScalarDensity,
    /// Boundary values, shifted by `offset`.
    pub trace: ScalarDensity,
    /// `∇_Σ` of the trace.
    pub tangential_gradient: TangentField,
    /// `N·∇f` on the boundary from `side`.
    pub normal_derivative: ScalarDensity,
    /// Constant subtracted from the single layer to normalize the trace.
    pub offset: f64,
    pub report: SolveReport,
}

impl HarmonicSolution {
    fn new(ops: &Arc<LayerOperators>, side: Side, psi: Vec<f64>, normalize: bool, report: SolveReport) -> Self {
        let grid = ops.grid();
        let mut trace = ops.apply_single(&psi);
        let offset = if normalize { grid.mean(&trace) } else { 0.0 };
        trace.iter_mut().for_each(|t| *t -= offset);
        let tangential_gradient = surface_gradient(grid, &trace);
        let normal_derivative = match side {
            Side::Interior => ops.apply_half_minus_wt(&psi),
            Side::Exterior => ops.apply_half_plus_wt(&psi).iter().map(|v| -v).collect(),
        };
        Self {
            ops: ops.clone(),
            side,
            density: ScalarDensity(psi),
            trace: ScalarDensity(trace),
            tangential_gradient,
            normal_derivative: ScalarDensity(normal_derivative),
            offset,
            report,
        }
    }

    /// `f` at off-surface points.
    pub fn value_at(&self, points: &[Vec3]) -> Vec<f64> {
        let mut v = self.ops.single_layer_at(&self.density, points);
        v.iter_mut().for_each(|x| *x -= self.offset);
        v
    }

    /// `∇f` at off-surface points.
    pub fn gradient_at(&self, points: &[Vec3]) -> Vec<Vec3> {
        self.ops.single_layer_gradient_at(&self.density, points)
    }

    /// `∇_Σ f × N` on the boundary.
    pub fn rotated_tangential_gradient(&self) -> TangentField {
        crate::surface_fields::cross_normal(self.ops.grid(), &self.tangential_gradient)
    }
}

/// Boundary value solvers sharing one operator set; factorizations are
/// computed on first use and reused.
#[derive(Debug)]
pub struct BoundarySolver {
    ops: Arc<LayerOperators>,
    gram_eigen: OnceLock<std::result::Result<SymmetricEigen, String>>,
    interior_lu: OnceLock<std::result::Result<LuFactor, String>>,
    exterior_lu: OnceLock<std::result::Result<LuFactor, String>>,
}

fn cached<T>(cell: &OnceLock<std::result::Result<T, String>>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    cell.get_or_init(|| init().map_err(|e| e.to_string())).as_ref().map_err(|e| Error::SolveFailure(e.clone()))
}

fn relative_residual(lhs: &[f64], rhs: &[f64]) -> f64 {
    let num: f64 = lhs.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

impl BoundarySolver {
    pub fn new(ops: Arc<LayerOperators>) -> Self {
        Self { ops, gram_eigen: OnceLock::new(), interior_lu: OnceLock::new(), exterior_lu: OnceLock::new() }
    }

    pub fn operators(&self) -> &Arc<LayerOperators> {
        &self.ops
    }

    fn check_finite(values: &[f64], what: &str) -> Result<()> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{what} contains non-finite values")))
        }
    }

    fn check_mean_zero(&self, b: &[f64]) -> Result<()> {
        let grid = self.ops.grid();
        let mean = grid.mean(b);
        let norm = grid.l2_norm(b);
        if mean != 0.0 && mean.abs() * grid.area.sqrt() > 1e-8 * norm {
            return Err(Error::NotMeanZero { mean, norm });
        }
        Ok(())
    }

    fn gram_eigen(&self) -> Result<&SymmetricEigen> {
        cached(&self.gram_eigen, || SymmetricEigen::new(self.ops.gram()))
    }

    /// Condition number of the Gram matrix.
    pub fn gram_condition(&self) -> Result<f64> {
        Ok(self.gram_eigen()?.condition())
    }

    /// Smallest eigenvalue of the Gram matrix.
    pub fn gram_min_eigenvalue(&self) -> Result<f64> {
        Ok(self.gram_eigen()?.values()[0])
    }

    /// Harmonic `f` in the solid torus with `f = κ` on the boundary.
    pub fn solve_dirichlet_interior(&self, kappa: &[f64]) -> Result<HarmonicSolution> {
        Self::check_finite(kappa, "Dirichlet data")?;
        let eig = self.gram_eigen()?;
        let w = &self.ops.grid().weights;
        let rhs: Vec<f64> = kappa.iter().zip(w).map(|(k, w)| k * w).collect();
        let (psi, dropped) = eig.solve_truncated(&rhs, DIRICHLET_CUTOFF);
        let residual = relative_residual(&self.ops.apply_single(&psi), kappa);
        let report = SolveReport { residual, condition: Some(eig.condition()), dropped_modes: dropped };
        Ok(HarmonicSolution::new(&self.ops, Side::Interior, psi, false, report))
    }

    /// [`Self::solve_dirichlet_interior`] for several data sets sharing one
    /// batched spectral solve.
    pub fn solve_dirichlet_interior_many(&self, data: &[Vec<f64>]) -> Result<Vec<HarmonicSolution>> {
        for kappa in data {
            Self::check_finite(kappa, "Dirichlet data")?;
        }
        let eig = self.gram_eigen()?;
        let w = &self.ops.grid().weights;
        let rhs: Vec<Vec<f64>> = data.iter().map(|kappa| kappa.iter().zip(w).map(|(k, w)| k * w).collect()).collect();
        let (psis, dropped) = eig.solve_truncated_many(&rhs, DIRICHLET_CUTOFF);
        Ok(psis
            .into_iter()
            .zip(data)
            .map(|(psi, kappa)| {
                let residual = relative_residual(&self.ops.apply_single(&psi), kappa);
                let report = SolveReport { residual, condition: Some(eig.condition()), dropped_modes: dropped };
                HarmonicSolution::new(&self.ops, Side::Interior, psi, false, report)
            })
            .collect())
    }

    fn interior_lu(&self) -> Result<&LuFactor> {
        cached(&self.interior_lu, || {
            let n = self.ops.len();
            let w = &self.ops.grid().weights;
            let wt = self.ops.double_layer_transpose();
            // Rank-one deflation of the equilibrium density.
            let a = DenseMatrix::from_fn(n, n, |i, j| -wt.get(i, j) + w[j] + if i == j { 0.5 } else { 0.0 });
            LuFactor::new(&a)
        })
    }

    fn exterior_lu(&self) -> Result<&LuFactor> {
        cached(&self.exterior_lu, || LuFactor::new(&self.ops.half_plus_wt_matrix(1.0)))
    }

    /// Harmonic `f` in the solid torus with `N·∇f = b`, normalized to a
    /// mean-zero boundary trace. `b` must have zero mean.
    pub fn solve_neumann_interior(&self, b: &[f64]) -> Result<HarmonicSolution> {
        Self::check_finite(b, "Neumann data")?;
        self.check_mean_zero(b)?;
        let psi = self.interior_lu()?.solve(b)?;
        let residual = relative_residual(&self.ops.apply_half_minus_wt(&psi), b);
        if residual > 1e-6 {
            return Err(Error::SolveFailure(format!("interior Neumann residual {residual:.3e}")));
        }
        let report = SolveReport { residual, ..Default::default() };
        Ok(HarmonicSolution::new(&self.ops, Side::Interior, psi, true, report))
    }

    /// Harmonic `g` outside the torus, decaying at infinity, with `N·∇g = b`
    /// for the outward normal `N`. The exterior problem is uniquely solvable
    /// for any data, so `b` need not have zero mean (a nonzero mean is the
    /// monopole moment of `g`).
    pub fn solve_neumann_exterior(&self, b: &[f64]) -> Result<HarmonicSolution> {
        Self::check_finite(b, "Neumann data")?;
        let rhs: Vec<f64> = b.iter().map(|v| -v).collect();
        let psi = self.solve_half_plus_wt(&rhs)?;
        let residual = relative_residual(&self.ops.apply_half_plus_wt(&psi), &rhs);
        let report = SolveReport { residual, ..Default::default() };
        Ok(HarmonicSolution::new(&self.ops, Side::Exterior, psi, false, report))
    }

    /// Dense solve of `(½ + Wᵀʳ) x = rhs`.
    pub fn solve_half_plus_wt(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let x = self.exterior_lu()?.solve(rhs)?;
        let residual = relative_residual(&self.ops.apply_half_plus_wt(&x), rhs);
        if residual > 1e-6 {
            return Err(Error::SolveFailure(format!("(1/2 + W^T) residual {residual:.3e}")));
        }
        Ok(x)
    }
}
