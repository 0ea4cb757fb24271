//! Two-step reconstruction of a surface current from a target field in the
//! plasma region, the kernel of the Biot–Savart operator, and a Tikhonov
//! baseline.
//!
//! Step 1 fits `B = α₀Γ + Σ αᵢ∇fᵢ` in `L²(P)`, where each `fᵢ` is the
//! harmonic extension of a Fourier mode `κᵢ`. Step 2 turns `B` into a
//! current `jₙ = α₀ Γ×N + ∇_Σfₙ×N` whose Neumann data is a partial sum of
//! the series `Σ (½ − Wᵀʳ)ᵏ (B·N)`.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::bvp::BoundarySolver;
use crate::dense::{DenseMatrix, LuFactor, SymmetricEigen};
use crate::error::{Error, Result};
use crate::fields::{bs_surface_current, bs_surface_current_many, weighted_norm, HarmonicNeumannField};
use crate::geometry::{ReferenceCurves, SurfaceGrid, VolumeGrid};
use crate::layer_potentials::{ContractionEstimate, LayerOperators};
use crate::surface_fields::{
    avg_windings, cross_normal, fourier_modes_by_degree, FourierMode, FourierSeries, HarmonicSurfaceBasis, ModeKind,
    SurfaceCurrent, TangentField,
};
use crate::vec3::{self, Vec3};

/// Relative eigenvalue cutoff of the small least-squares systems.
const LSQ_CUTOFF: f64 = 1e-12;

/// Shared state of a reconstruction on one surface and plasma region.
#[derive(Debug)]
pub struct Reconstruction {
    pub solver: BoundarySolver,
    pub basis: HarmonicSurfaceBasis,
    pub gamma: HarmonicNeumannField,
    pub plasma: VolumeGrid,
    gamma_on_plasma: Vec<Vec3>,
    seed: u64,
    contraction: OnceLock<std::result::Result<ContractionEstimate, String>>,
}

/// Result of the Step-1 fit.
#[derive(Clone, Debug)]
pub struct Step1Result {
    pub alpha0: f64,
    pub alphas: Vec<f64>,
    pub basis_keys: Vec<FourierMode>,
    /// Relative `L²(P)` residual after fitting `Γ` plus the first `k` modes,
    /// for `k = 0..=N`.
    pub residual_history: Vec<f64>,
    /// Relative residual of the final fit.
    pub residual: f64,
    /// Numerical rank of the final normal equations.
    pub effective_rank: usize,
    /// Circulation of the target around the toroidal axis loop, when the
    /// target can be evaluated there.
    pub circulation: Option<f64>,
    /// Single-layer density of `Σ αᵢ fᵢ`.
    pub density: Vec<f64>,
    /// Fitted field at the plasma points.
    pub field: Vec<Vec3>,
    /// Target at the plasma points.
    pub target: Vec<Vec3>,
}

/// A Step-2 (or exact) preimage.
#[derive(Clone, Debug)]
pub struct PreimageResult {
    pub current: TangentField,
    /// Series length `n`, or `None` for the exact preimage.
    pub iterations: Option<usize>,
    /// Duality norm of every series term `(½ − Wᵀʳ)ᵏ (B·N)`.
    pub series_term_norms: Vec<f64>,
    /// `‖jₖ − jₖ₋₁‖` in the componentwise duality norm, `k = 1..=n`.
    pub increment_norms: Vec<f64>,
    /// `‖BS_Σ(j) − B‖_{L²(P)} / ‖B‖_{L²(P)}` against the Step-1 field.
    pub residual_vs_fit: f64,
    /// Same against the original target.
    pub residual_vs_target: f64,
    pub windings: WindingCertificate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelRoute {
    Series,
    Exact,
    Exterior,
}

impl std::str::FromStr for KernelRoute {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(Self::Series),
            "exact" => Ok(Self::Exact),
            "exterior" => Ok(Self::Exterior),
            other => Err(Error::InvalidArgument(format!("unknown kernel route '{other}'"))),
        }
    }
}

/// A current whose field vanishes in the solid torus.
#[derive(Clone, Debug)]
pub struct KernelElement {
    pub route: KernelRoute,
    pub current: TangentField,
    /// `‖BS_Σ(j₀)‖_{L²(P)} / ‖Γ‖_{L²(P)}`.
    pub leakage: f64,
    pub windings: WindingCertificate,
    /// Mean of `N·BS_Ω(Γ)` removed before the series or solves.
    pub removed_flux_mean: f64,
}

/// Average windings of a current with scale-free versions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindingCertificate {
    pub qbar: f64,
    pub pbar: f64,
    /// `|∫ j·γ_t| / (‖j‖ ‖γ_t‖)` in `L²(Σ)`.
    pub qbar_relative: f64,
    /// `|∫ j·γ_p| / (‖j‖ ‖γ_p‖)` in `L²(Σ)`.
    pub pbar_relative: f64,
}

/// One point of a Tikhonov sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TikhonovPoint {
    pub lambda: f64,
    /// Relative `L²(P)` residual.
    pub residual: f64,
    /// `‖j‖_{L²(Σ)}`.
    pub current_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TikhonovResult {
    pub sweep: Vec<TikhonovPoint>,
    /// Current at the last (smallest) λ of the sweep.
    pub current: SurfaceCurrent,
    /// Largest eigenvalue of the weighted normal matrix, `‖A‖²`.
    pub operator_norm_sq: f64,
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

impl Reconstruction {
    pub fn new(ops: Arc<LayerOperators>, plasma: VolumeGrid) -> Result<Self> {
        let grid = ops.grid().clone();
        let clearance = plasma.points.iter().map(|p| grid.nearest_node_distance(*p)).fold(f64::INFINITY, f64::min);
        if clearance < 0.5 * grid.max_spacing() {
            return Err(Error::InvalidArgument(format!("plasma points come within {clearance:.3e} of the surface")));
        }
        let basis = HarmonicSurfaceBasis::new(&grid)?;
        let solver = BoundarySolver::new(ops);
        let gamma = HarmonicNeumannField::build(&solver)?;
        let gamma_on_plasma = gamma.eval(&plasma.points)?;
        Ok(Self { solver, basis, gamma, plasma, gamma_on_plasma, seed: 0x5eed, contraction: OnceLock::new() })
    }

    /// Seed of the random start vector of the contraction estimate.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.contraction = OnceLock::new();
        self
    }

    pub fn grid(&self) -> &Arc<SurfaceGrid> {
        self.solver.operators().grid()
    }

    pub fn operators(&self) -> &Arc<LayerOperators> {
        self.solver.operators()
    }

    pub fn gamma_on_plasma(&self) -> &[Vec3] {
        &self.gamma_on_plasma
    }

    /// `λ̂` from [`LayerOperators::contraction_estimate`], computed once.
    pub fn contraction(&self) -> Result<&ContractionEstimate> {
        self.contraction
            .get_or_init(|| self.operators().contraction_estimate(500, self.seed).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::SolveFailure(e.clone()))
    }

    /// `L²(P)` norm of a field sampled at the plasma points.
    pub fn plasma_norm(&self, v: &[Vec3]) -> f64 {
        weighted_norm(v, Some(&self.plasma.weights))
    }

    fn plasma_distance(&self, a: &[Vec3], b: &[Vec3]) -> f64 {
        let d: Vec<Vec3> = a.iter().zip(b).map(|(x, y)| vec3::sub(*x, *y)).collect();
        self.plasma_norm(&d)
    }

    /// Field of a nodal surface current at the plasma points.
    pub fn field_on_plasma(&self, j: &[Vec3]) -> Vec<Vec3> {
        bs_surface_current(self.grid(), j, &self.plasma.points)
    }

    /// Winding averages of a current.
    pub fn qbar_certificate(&self, j: &[Vec3]) -> WindingCertificate {
        let grid = self.grid();
        let (qbar, pbar) = avg_windings(grid, &self.basis, j);
        let jn = TangentField(j.to_vec()).l2_norm(grid);
        let scale = |gamma: &TangentField| jn * gamma.l2_norm(grid) / grid.area;
        WindingCertificate {
            qbar,
            pbar,
            qbar_relative: relative(qbar.abs(), scale(&self.basis.gamma_t)),
            pbar_relative: relative(pbar.abs(), scale(&self.basis.gamma_p)),
        }
    }

    /// Least-squares fit of `α₀Γ + Σ αᵢ∇fᵢ` to `target` (values at the
    /// plasma points) with the first `n_modes` Fourier modes.
    pub fn step1_fit(&self, target: &[Vec3], n_modes: usize, circulation: Option<f64>) -> Result<Step1Result> {
        if target.len() != self.plasma.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} target values for {} plasma points",
                target.len(),
                self.plasma.len()
            )));
        }
        if n_modes == 0 {
            return Err(Error::InvalidArgument("step 1 needs at least one mode".into()));
        }
        let grid = self.grid();
        let keys = fourier_modes_by_degree(n_modes);
        let data: Vec<Vec<f64>> = keys.iter().map(|key| key.sample(grid).to_vec()).collect();
        let densities: Vec<Vec<f64>> =
            self.solver.solve_dirichlet_interior_many(&data)?.into_iter().map(|sol| sol.density.0).collect();
        let mut columns = vec![self.gamma_on_plasma.clone()];
        columns.extend(self.operators().single_layer_gradient_at_many(&densities, &self.plasma.points));
        let w = &self.plasma.weights;
        let k = columns.len();
        let inner =
            |a: &[Vec3], b: &[Vec3]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), w)| vec3::dot(*x, *y) * w).sum() };
        let gram = DenseMatrix::from_fn(k, k, |a, b| inner(&columns[a], &columns[b]));
        let rhs: Vec<f64> = columns.iter().map(|c| inner(c, target)).collect();
        let target_norm = self.plasma_norm(target);
        let combine = |coeffs: &[f64]| -> Vec<Vec3> {
            let mut out = vec![vec3::ZERO; target.len()];
            for (c, col) in coeffs.iter().zip(&columns) {
                for (o, v) in out.iter_mut().zip(col) {
                    *o = vec3::axpy(*o, *c, *v);
                }
            }
            out
        };
        let mut history = Vec::with_capacity(k);
        let mut last = (Vec::new(), 0);
        for size in 1..=k {
            let (coeffs, rank) = solve_scaled(&gram, &rhs, size)?;
            let fit = combine(&coeffs);
            history.push(relative(self.plasma_distance(&fit, target), target_norm));
            last = (coeffs, rank);
        }
        let (coeffs, effective_rank) = last;
        let mut density = vec![0.0; grid.len()];
        for (c, psi) in coeffs[1..].iter().zip(&densities) {
            density.iter_mut().zip(psi).for_each(|(d, p)| *d += c * p);
        }
        let field = combine(&coeffs);
        Ok(Step1Result {
            alpha0: coeffs[0],
            alphas: coeffs[1..].to_vec(),
            basis_keys: keys,
            residual: *history.last().expect("nonempty history"),
            residual_history: history,
            effective_rank,
            circulation,
            density,
            field,
            target: target.to_vec(),
        })
    }

    /// `B·N` on the surface for a Step-1 field: `(½ − Wᵀʳ)` of its density.
    pub fn normal_trace(&self, s1: &Step1Result) -> Vec<f64> {
        self.operators().apply_half_minus_wt(&s1.density)
    }

    fn current_from_neumann(&self, alpha0: f64, data: &[f64]) -> Result<TangentField> {
        let sol = self.solver.solve_neumann_interior(data)?;
        let rot = sol.rotated_tangential_gradient();
        Ok(rot.axpy(alpha0, &self.gamma.cross_normal))
    }

    fn finish_preimage(
        &self,
        s1: &Step1Result,
        current: TangentField,
        iterations: Option<usize>,
        series_term_norms: Vec<f64>,
        increment_norms: Vec<f64>,
    ) -> PreimageResult {
        let field = self.field_on_plasma(&current);
        let residual_vs_fit = relative(self.plasma_distance(&field, &s1.field), self.plasma_norm(&s1.field));
        let residual_vs_target = relative(self.plasma_distance(&field, &s1.target), self.plasma_norm(&s1.target));
        let windings = self.qbar_certificate(&current);
        PreimageResult {
            current,
            iterations,
            series_term_norms,
            increment_norms,
            residual_vs_fit,
            residual_vs_target,
            windings,
        }
    }

    /// Step 2 with `n` series iterations.
    pub fn step2_preimage(&self, s1: &Step1Result, n: usize) -> Result<PreimageResult> {
        let ops = self.operators();
        let bn = self.normal_trace(s1);
        let series = ops.neumann_series(&bn, n, 0)?;
        let current = self.current_from_neumann(s1.alpha0, &series.sum)?;
        // jₖ − jₖ₋₁ is the rotated gradient of the Neumann solution for the k-th term.
        let mut increments = Vec::with_capacity(n);
        let mut term = bn;
        for _ in 1..=n {
            term = ops.apply_half_minus_wt(&term);
            let delta = self.current_from_neumann(0.0, &term)?;
            increments.push(ops.duality_norm_vector(&delta));
        }
        Ok(self.finish_preimage(s1, current, Some(n), series.term_norms, increments))
    }

    /// Step 2 with the series replaced by a dense solve of `(½ + Wᵀʳ)x = B·N`.
    pub fn exact_preimage(&self, s1: &Step1Result) -> Result<PreimageResult> {
        let bn = self.normal_trace(s1);
        let mut x = self.solver.solve_half_plus_wt(&bn)?;
        let m = self.grid().mean(&x);
        x.iter_mut().for_each(|v| *v -= m);
        let current = self.current_from_neumann(s1.alpha0, &x)?;
        Ok(self.finish_preimage(s1, current, None, Vec::new(), Vec::new()))
    }

    /// `BS_Ω(Γ)` on the surface and its mean-free normal component.
    fn kernel_data(&self) -> (Vec<Vec3>, Vec<f64>, f64) {
        let grid = self.grid();
        let a = self.gamma.bs_volume_trace();
        let mut data: Vec<f64> = a.iter().zip(&grid.normals).map(|(v, n)| vec3::dot(*v, *n)).collect();
        let mean = grid.mean(&data);
        data.iter_mut().for_each(|d| *d -= mean);
        (a, data, mean)
    }

    /// Kernel element through one of the three routes; `n` is the series
    /// length and is ignored by the other routes.
    pub fn kernel_element(&self, route: KernelRoute, n: usize) -> Result<KernelElement> {
        let grid = self.grid();
        let ops = self.operators();
        let (a, data, removed_flux_mean) = self.kernel_data();
        let a_cross = cross_normal(grid, &a);
        let rot = match route {
            KernelRoute::Series => {
                let b = ops.neumann_series(&data, n, 1)?;
                self.solver.solve_neumann_interior(&b.sum)?.rotated_tangential_gradient()
            }
            KernelRoute::Exact => {
                let mut b = self.solver.solve_half_plus_wt(&ops.apply_half_minus_wt(&data))?;
                let m = grid.mean(&b);
                b.iter_mut().for_each(|v| *v -= m);
                self.solver.solve_neumann_interior(&b)?.rotated_tangential_gradient()
            }
            KernelRoute::Exterior => {
                let neg: Vec<f64> = data.iter().map(|v| -v).collect();
                self.solver.solve_neumann_exterior(&neg)?.rotated_tangential_gradient()
            }
        };
        let current = TangentField(a_cross.iter().zip(rot.iter()).map(|(x, y)| vec3::add(*x, *y)).collect());
        let leakage =
            relative(self.plasma_norm(&self.field_on_plasma(&current)), self.plasma_norm(&self.gamma_on_plasma));
        let windings = self.qbar_certificate(&current);
        Ok(KernelElement { route, current, leakage, windings, removed_flux_mean })
    }

    /// Leakage of the series kernel element for `n = 0..=n_max`, together
    /// with the increments `‖jₙ − jₙ₋₁‖` in the duality norm.
    pub fn kernel_series_study(&self, n_max: usize) -> Result<KernelSeriesStudy> {
        let ops = self.operators();
        let grid = self.grid();
        let (a, data, _) = self.kernel_data();
        let base = cross_normal(grid, &a);
        let gamma_norm = self.plasma_norm(&self.gamma_on_plasma);
        let mut term = data;
        let mut sum = vec![0.0; grid.len()];
        let mut leakage = Vec::with_capacity(n_max + 1);
        let mut increments = Vec::with_capacity(n_max);
        for n in 0..=n_max {
            // b_n includes terms k = 1..=n.
            if n > 0 {
                term = ops.apply_half_minus_wt(&term);
                sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
                let delta = self.solver.solve_neumann_interior(&term)?.rotated_tangential_gradient();
                increments.push(ops.duality_norm_vector(&delta));
            }
            let rot = self.solver.solve_neumann_interior(&sum)?.rotated_tangential_gradient();
            let j: Vec<Vec3> = base.iter().zip(rot.iter()).map(|(x, y)| vec3::add(*x, *y)).collect();
            leakage.push(relative(self.plasma_norm(&self.field_on_plasma(&j)), gamma_norm));
        }
        Ok(KernelSeriesStudy { leakage, increments })
    }

    /// Tikhonov-regularized fit over stream-function modes up to total degree
    /// `max_degree` plus the two harmonic currents, for every λ in `lambdas`
    /// (processed in the given order).
    pub fn regularized_fit(&self, target: &[Vec3], lambdas: &[f64], max_degree: usize) -> Result<TikhonovResult> {
        if lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidArgument("Tikhonov parameters must be positive".into()));
        }
        if target.len() != self.plasma.len() {
            return Err(Error::DimensionMismatch("target does not match plasma points".into()));
        }
        let grid = self.grid();
        let count: usize = (1..=max_degree).map(|d| 4 * d).sum();
        let modes = fourier_modes_by_degree(count);
        let mut currents: Vec<TangentField> = modes
            .iter()
            .map(|m| SurfaceCurrent { stream_coeffs: m.series(1.0), alpha: 0.0, beta: 0.0 }.realize(grid, &self.basis))
            .collect();
        currents.push(self.basis.gamma_t_cross_n.clone());
        currents.push(self.basis.gamma_p_cross_n.clone());
        let raw: Vec<Vec<Vec3>> = currents.iter().map(|j| j.0.clone()).collect();
        let fields = bs_surface_current_many(grid, &raw, &self.plasma.points);
        let k = currents.len();
        let w = &self.plasma.weights;
        let pin =
            |a: &[Vec3], b: &[Vec3]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), w)| vec3::dot(*x, *y) * w).sum() };
        let sin = |a: &[Vec3], b: &[Vec3]| -> f64 {
            a.iter().zip(b).zip(&grid.weights).map(|((x, y), w)| vec3::dot(*x, *y) * w).sum()
        };
        let normal = DenseMatrix::from_fn(k, k, |a, b| pin(&fields[a], &fields[b]));
        let penalty = DenseMatrix::from_fn(k, k, |a, b| sin(&currents[a], &currents[b]));
        let rhs: Vec<f64> = fields.iter().map(|f| pin(f, target)).collect();
        let operator_norm_sq = *SymmetricEigen::new(&normal)?.values().last().expect("nonempty");
        let target_norm = self.plasma_norm(target);
        let mut sweep = Vec::with_capacity(lambdas.len());
        let mut coeffs = vec![0.0; k];
        for &lambda in lambdas {
            let sys = DenseMatrix::from_fn(k, k, |a, b| normal.get(a, b) + lambda * penalty.get(a, b));
            coeffs = LuFactor::new(&sys)?.solve(&rhs)?;
            let mut field = vec![vec3::ZERO; target.len()];
            let mut j = vec![vec3::ZERO; grid.len()];
            for (c, (f, cur)) in coeffs.iter().zip(fields.iter().zip(&currents)) {
                field.iter_mut().zip(f).for_each(|(o, v)| *o = vec3::axpy(*o, *c, *v));
                j.iter_mut().zip(cur.iter()).for_each(|(o, v)| *o = vec3::axpy(*o, *c, *v));
            }
            sweep.push(TikhonovPoint {
                lambda,
                residual: relative(self.plasma_distance(&field, target), target_norm),
                current_norm: TangentField(j).l2_norm(grid),
            });
        }
        let mut stream = FourierSeries::default();
        for (m, c) in modes.iter().zip(&coeffs) {
            match m.kind {
                ModeKind::Cos => stream.cos.push((m.m, m.n, *c)),
                ModeKind::Sin => stream.sin.push((m.m, m.n, *c)),
            }
        }
        let current = SurfaceCurrent { stream_coeffs: stream, alpha: coeffs[k - 2], beta: coeffs[k - 1] };
        Ok(TikhonovResult { sweep, current, operator_norm_sq })
    }

    /// Circulation of a field evaluator around the toroidal axis loop.
    pub fn axis_circulation(&self, field: impl Fn(&[Vec3]) -> Result<Vec<Vec3>>) -> Result<f64> {
        let curve = ReferenceCurves::axis_loop(&self.grid().torus, 256);
        crate::fields::toroidal_circulation(field, &curve)
    }
}

/// Solves the leading `size × size` block of a symmetric system after
/// Jacobi scaling, truncating tiny eigenvalues. Returns coefficients and rank.
fn solve_scaled(gram: &DenseMatrix, rhs: &[f64], size: usize) -> Result<(Vec<f64>, usize)> {
    let d: Vec<f64> = (0..size).map(|i| gram.get(i, i).max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled = DenseMatrix::from_fn(size, size, |a, b| gram.get(a, b) / (d[a] * d[b]));
    let r: Vec<f64> = (0..size).map(|i| rhs[i] / d[i]).collect();
    let eig = SymmetricEigen::new(&scaled)?;
    let (y, dropped) = eig.solve_truncated(&r, LSQ_CUTOFF);
    Ok((y.iter().zip(&d).map(|(y, d)| y / d).collect(), size - dropped))
}

#[derive(Clone, Debug)]
pub struct KernelSeriesStudy {
    /// `‖BS_Σ(jₙ)‖_{L²(P)} / ‖Γ‖_{L²(P)}` for `n = 0..=n_max`.
    pub leakage: Vec<f64>,
    pub increments: Vec<f64>,
}

/// Least-squares fit of `log yₖ ≈ a + k log r`; returns `(r, e^a)`.
pub fn geometric_fit(values: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> =
        values.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(k, v)| (k as f64, v.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope.exp(), (my - slope * mx).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FourierTorus;

    fn setup(n: usize) -> Reconstruction {
        let torus = FourierTorus::circular(2.0, 1.0).unwrap();
        let grid = SurfaceGrid::new(&torus, n, n).unwrap();
        let ops = Arc::new(LayerOperators::assemble(grid).unwrap());
        let plasma = VolumeGrid::new(&torus, 3, 8, 16, 0.5).unwrap();
        Reconstruction::new(ops, plasma).unwrap()
    }

    #[test]
    fn gamma_target_is_recovered_by_both_steps() {
        let rec = setup(24);
        let target = rec.gamma_on_plasma().to_vec();
        let s1 = rec.step1_fit(&target, 12, Some(1.0)).unwrap();
        assert!((s1.alpha0 - 1.0).abs() < 1e-8, "alpha0 = {}", s1.alpha0);
        assert!(s1.alphas.iter().all(|a| a.abs() < 1e-8));
        assert!(s1.residual_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let p = rec.step2_preimage(&s1, 5).unwrap();
        assert!(p.residual_vs_target < 2e-2, "{}", p.residual_vs_target);
        assert!(p.windings.qbar_relative < 1e-6);
    }

    #[test]
    fn step1_history_is_monotone_for_a_uniform_target() {
        let rec = setup(24);
        let target = vec![[0.0, 0.0, 1.0]; rec.plasma.len()];
        let s1 = rec.step1_fit(&target, 20, None).unwrap();
        assert_eq!(s1.residual_history.len(), 21);
        assert!(s1.residual_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(s1.residual < 1e-2);
        assert!(rec.step1_fit(&target[1..], 4, None).is_err());
        assert!(rec.step1_fit(&target, 0, None).is_err());
    }

    #[test]
    fn kernel_routes_agree_and_wind_toroidally() {
        let rec = setup(24);
        let grid = rec.grid().clone();
        let exact = rec.kernel_element(KernelRoute::Exact, 0).unwrap();
        let exterior = rec.kernel_element(KernelRoute::Exterior, 0).unwrap();
        let diff: Vec<Vec3> =
            exact.current.iter().zip(exterior.current.iter()).map(|(a, b)| vec3::sub(*a, *b)).collect();
        assert!(TangentField(diff).l2_norm(&grid) < 1e-8 * exact.current.l2_norm(&grid));
        assert!(exact.windings.pbar_relative < 1e-6);
        assert!(exact.windings.qbar_relative > 0.1);
        let series = rec.kernel_element(KernelRoute::Series, 6).unwrap();
        assert!(series.leakage > exact.leakage);
        let study = rec.kernel_series_study(4).unwrap();
        assert!(study.leakage.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn tikhonov_checks_arguments_and_decreases_residual() {
        let rec = setup(24);
        let target = vec![[0.0, 0.0, 1.0]; rec.plasma.len()];
        assert!(rec.regularized_fit(&target, &[0.0], 2).is_err());
        let fit = rec.regularized_fit(&target, &[1e-2, 1e-4], 2).unwrap();
        assert!(fit.sweep[1].residual < fit.sweep[0].residual);
        assert!(fit.operator_norm_sq > 0.0);
    }

    #[test]
    fn geometric_fit_recovers_ratio() {
        let v: Vec<f64> = (0..8).map(|k| 3.0 * 0.4f64.powi(k)).collect();
        let (r, c) = geometric_fit(&v);
        assert!((r - 0.4).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
        assert!(geometric_fit(&[1.0]).0.is_nan());
        assert_eq!("exterior".parse::<KernelRoute>().unwrap(), KernelRoute::Exterior);
        assert!("bogus".parse::<KernelRoute>().is_err());
    }
}
