//! Nyström discretization of the single-layer operator `V`, the double-layer
//! operator `W` and its transpose `Wᵀʳ`, plus the duality inner product built
//! on the Newtonian kernel.
//!
//! Kernels, for `x, y` on the surface and `N` the outward normal:
//!
//! - single layer `1 / (4π|x − y|)`,
//! - double layer `N(y)·(x − y) / (4π|x − y|³)`, so that `W·1 = −½`,
//! - transpose `N(x)·(x − y) / (4π|x − y|³)`.
//!
//! Both weakly singular integrals are split with a smooth partition of unity
//! supported on a disc of `patch_radius` cells around the target node. The
//! smooth remainder uses the plain trapezoid rule; the local part is
//! integrated in polar coordinates centred at the target, with the surface
//! evaluated exactly and the density interpolated from the grid. The
//! double-layer diagonal is then fixed by singularity subtraction against
//! `W·1 = −½`, and `Wᵀʳ` is formed as the negated weighted transpose of `W`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::geometry::SurfaceGrid;
use crate::par;
use crate::quadrature::gauss_legendre_on;
use crate::vec3::{self, Vec3};

const FOUR_PI: f64 = 4.0 * PI;
const DUMP_MAGIC: &[u8; 8] = b"CWSBLAYR";
const DUMP_VERSION: u32 = 1;

/// Gradients of the single layers of several densities on `grid` at
/// off-surface points, evaluating the kernel once per point pair. The result
/// is indexed `[density][point]`.
pub fn single_layer_gradient_many(grid: &SurfaceGrid, densities: &[Vec<f64>], points: &[Vec3]) -> Vec<Vec<Vec3>> {
    let k = densities.len();
    let per_point = par::map_indices(points.len(), |p| {
        let x = points[p];
        let mut acc = vec![vec3::ZERO; k];
        for q in 0..grid.len() {
            let d = vec3::sub(x, grid.points[q]);
            let r = vec3::norm(d);
            let kernel = vec3::scale(d, -grid.weights[q] / (FOUR_PI * r * r * r));
            for (a, psi) in acc.iter_mut().zip(densities) {
                *a = vec3::axpy(*a, psi[q], kernel);
            }
        }
        acc
    });
    (0..k).map(|i| per_point.iter().map(|acc| acc[i]).collect()).collect()
}

/// Parameters of the local polar correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureOptions {
    /// Radius of the partition-of-unity disc, in grid cells.
    pub patch_radius: f64,
    /// Gauss–Legendre nodes along the radius of the disc.
    pub radial_nodes: usize,
    /// Trapezoid nodes around the disc.
    pub angular_nodes: usize,
    /// Points per direction of the tensor Lagrange interpolation stencil.
    pub interpolation_order: usize,
    /// Flips the sign of the `−½` term in the singularity-subtracted
    /// double-layer diagonal. Only useful for checking that the validation
    /// harness notices a broken operator.
    #[serde(skip)]
    pub flip_double_layer_diagonal: bool,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            patch_radius: 8.0,
            radial_nodes: 24,
            angular_nodes: 64,
            interpolation_order: 8,
            flip_double_layer_diagonal: false,
        }
    }
}

impl QuadratureOptions {
    fn validate(&self) -> Result<()> {
        if !(self.patch_radius >= 1.0 && self.patch_radius.is_finite()) {
            return Err(Error::InvalidArgument("patch_radius must be at least one cell".into()));
        }
        if self.radial_nodes < 2 || self.angular_nodes < 4 {
            return Err(Error::InvalidArgument("too few polar quadrature nodes".into()));
        }
        if self.interpolation_order < 2 || !self.interpolation_order.is_multiple_of(2) {
            return Err(Error::InvalidArgument("interpolation_order must be even and >= 2".into()));
        }
        Ok(())
    }
}

/// Smooth bump equal to 1 at 0 and vanishing to all orders at `ρ = 1`.
pub fn partition_bump(rho: f64) -> f64 {
    if rho <= 0.0 {
        1.0
    } else if rho >= 1.0 {
        0.0
    } else {
        (2.0 * (-1.0 / rho).exp() / (rho - 1.0)).exp()
    }
}

/// Lagrange weights for interpolating at fractional position `a` from the
/// `order` integer nodes surrounding it. Returns the first node and weights.
fn lagrange_stencil(a: f64, order: usize) -> (isize, Vec<f64>) {
    let first = a.floor() as isize - order as isize / 2 + 1;
    let nodes: Vec<f64> = (0..order).map(|k| (first + k as isize) as f64).collect();
    let w = (0..order)
        .map(|k| (0..order).filter(|&m| m != k).map(|m| (a - nodes[m]) / (nodes[k] - nodes[m])).product())
        .collect();
    (first, w)
}

/// Row-independent description of the local polar correction.
struct PolarPatch {
    /// `(a, b, weight)` in cell units; the weight includes the bump, the polar
    /// Jacobian and both quadrature weights.
    nodes: Vec<(f64, f64, f64)>,
    /// Grid offsets touched by the interpolation stencils.
    offsets: Vec<(isize, isize)>,
    /// For every polar node, `(offset index, interpolation weight)`.
    stencils: Vec<Vec<(usize, f64)>>,
    /// Half-width of the window where the far part is damped.
    window: isize,
    /// `1 − bump` on the `(2·window + 1)²` offsets of that window.
    far_factor: Vec<f64>,
}

impl PolarPatch {
    fn new(opts: &QuadratureOptions, n_min: usize) -> Self {
        // The disc must not overlap its own periodic images.
        let radius = opts.patch_radius.min(n_min as f64 / 2.0 - 1.0);
        let (rs, rw) = gauss_legendre_on(opts.radial_nodes, 0.0, radius);
        let nt = opts.angular_nodes;
        let wt = 2.0 * PI / nt as f64;
        let mut nodes = Vec::with_capacity(rs.len() * nt);
        for (r, w) in rs.iter().zip(&rw) {
            let base = w * r * partition_bump(r / radius) * wt;
            for k in 0..nt {
                let (s, c) = (k as f64 * wt).sin_cos();
                nodes.push((r * c, r * s, base));
            }
        }
        let mut offsets = Vec::new();
        let mut lookup = std::collections::HashMap::new();
        let stencils = nodes
            .iter()
            .map(|&(a, b, _)| {
                let (fa, wa) = lagrange_stencil(a, opts.interpolation_order);
                let (fb, wb) = lagrange_stencil(b, opts.interpolation_order);
                let mut st = Vec::with_capacity(wa.len() * wb.len());
                for (p, la) in wa.iter().enumerate() {
                    for (q, lb) in wb.iter().enumerate() {
                        let key = (fa + p as isize, fb + q as isize);
                        let idx = *lookup.entry(key).or_insert_with(|| {
                            offsets.push(key);
                            offsets.len() - 1
                        });
                        st.push((idx, la * lb));
                    }
                }
                st
            })
            .collect();
        let window = radius.ceil() as isize;
        let side = (2 * window + 1) as usize;
        let mut far_factor = vec![1.0; side * side];
        for di in -window..=window {
            for dj in -window..=window {
                let rho = ((di * di + dj * dj) as f64).sqrt() / radius;
                far_factor[((di + window) as usize) * side + (dj + window) as usize] = 1.0 - partition_bump(rho);
            }
        }
        Self { nodes, offsets, stencils, window, far_factor }
    }

    #[inline]
    fn far(&self, di: isize, dj: isize) -> f64 {
        if di.abs() > self.window || dj.abs() > self.window {
            1.0
        } else {
            let side = 2 * self.window + 1;
            self.far_factor[((di + self.window) * side + dj + self.window) as usize]
        }
    }
}

#[inline]
fn wrap(d: isize, n: usize) -> isize {
    let n = n as isize;
    let d = d.rem_euclid(n);
    if d >= n / 2 {
        d - n
    } else {
        d
    }
}

/// Assembles one row of the single and double layer matrices (double
/// diagonal not yet corrected). Either output may be skipped.
fn assemble_row(
    grid: &SurfaceGrid,
    patch: &PolarPatch,
    row: usize,
    mut v_row: Option<&mut [f64]>,
    mut w_row: Option<&mut [f64]>,
) -> Result<()> {
    let (nt, np) = (grid.n_theta, grid.n_phi);
    let (ti, tj) = (row / np, row % np);
    let x = grid.points[row];
    for k in 0..grid.len() {
        let di = wrap(k as isize / np as isize - ti as isize, nt);
        let dj = wrap((k % np) as isize - tj as isize, np);
        let cut = patch.far(di, dj);
        let (vk, wk) = if cut == 0.0 {
            (0.0, 0.0)
        } else {
            let d = vec3::sub(x, grid.points[k]);
            let r = vec3::norm(d);
            if r == 0.0 {
                return Err(Error::AssemblyFailure { row, col: k });
            }
            let c = cut * grid.weights[k] / (FOUR_PI * r);
            (c, c * vec3::dot(grid.normals[k], d) / (r * r))
        };
        if let Some(v) = v_row.as_deref_mut() {
            v[k] = vk;
        }
        if let Some(w) = w_row.as_deref_mut() {
            w[k] = wk;
        }
    }
    let mut local_v = vec![0.0; patch.offsets.len()];
    let mut local_w = vec![0.0; patch.offsets.len()];
    let cell = grid.h_theta * grid.h_phi;
    let (theta0, phi0) = (grid.theta(ti), grid.phi(tj));
    for (p, &(a, b, base)) in patch.nodes.iter().enumerate() {
        let sp = grid.torus.eval(theta0 + a * grid.h_theta, phi0 + b * grid.h_phi);
        let an = grid.torus.area_normal(&sp);
        let d = vec3::sub(x, sp.x);
        let r = vec3::norm(d);
        let c = base * cell / (FOUR_PI * r);
        let cv = c * vec3::norm(an);
        let cw = c * vec3::dot(an, d) / (r * r);
        if !(cv.is_finite() && cw.is_finite()) {
            return Err(Error::AssemblyFailure { row, col: row });
        }
        for &(o, l) in &patch.stencils[p] {
            local_v[o] += cv * l;
            local_w[o] += cw * l;
        }
    }
    for (o, &(di, dj)) in patch.offsets.iter().enumerate() {
        let i = (ti as isize + di).rem_euclid(nt as isize) as usize;
        let j = (tj as isize + dj).rem_euclid(np as isize) as usize;
        let k = i * np + j;
        if let Some(v) = v_row.as_deref_mut() {
            v[k] += local_v[o];
        }
        if let Some(w) = w_row.as_deref_mut() {
            w[k] += local_w[o];
        }
    }
    Ok(())
}

/// `max_i |(W·1)(x_i) + ½|` of the corrected quadrature before singularity
/// subtraction, computed row by row without storing any matrix.
pub fn solid_angle_defect(grid: &SurfaceGrid, opts: &QuadratureOptions) -> Result<f64> {
    opts.validate()?;
    let patch = PolarPatch::new(opts, grid.n_theta.min(grid.n_phi));
    let defects: Vec<Result<f64>> = par::map_indices(grid.len(), |i| {
        let mut row = vec![0.0; grid.len()];
        assemble_row(grid, &patch, i, None, Some(&mut row))?;
        Ok((row.iter().sum::<f64>() + 0.5).abs())
    });
    defects.into_iter().try_fold(0.0f64, |m, d| Ok(m.max(d?)))
}

/// Assembled boundary operators on one grid.
#[derive(Debug)]
pub struct LayerOperators {
    grid: Arc<SurfaceGrid>,
    options: QuadratureOptions,
    /// Nyström single-layer matrix, `(Vψ)_i ≈ ∫ ψ(y) / (4π|x_i − y|) dσ`.
    single: DenseMatrix,
    /// Symmetric Gram matrix of the duality inner product.
    gram: DenseMatrix,
    double: DenseMatrix,
    double_t: DenseMatrix,
    solid_angle_defect: f64,
}

impl LayerOperators {
    pub fn assemble(grid: Arc<SurfaceGrid>) -> Result<Self> {
        Self::assemble_with(grid, QuadratureOptions::default())
    }

    pub fn assemble_with(grid: Arc<SurfaceGrid>, options: QuadratureOptions) -> Result<Self> {
        options.validate()?;
        let n = grid.len();
        let patch = PolarPatch::new(&options, grid.n_theta.min(grid.n_phi));
        let mut single = DenseMatrix::zeros(n, n);
        let mut double = DenseMatrix::zeros(n, n);
        // Rows are assembled in parallel, one shared buffer per matrix.
        let status: Vec<Result<f64>> = {
            let v_rows: Vec<&mut [f64]> = single.data_mut().chunks_mut(n).collect();
            let w_rows: Vec<&mut [f64]> = double.data_mut().chunks_mut(n).collect();
            let rows: Vec<(usize, &mut [f64], &mut [f64])> =
                v_rows.into_iter().zip(w_rows).enumerate().map(|(i, (v, w))| (i, v, w)).collect();
            par_rows(rows, |(i, v, w)| {
                assemble_row(&grid, &patch, i, Some(v), Some(&mut *w))?;
                let sum: f64 = w.iter().sum();
                w[i] -= sum + 0.5;
                if options.flip_double_layer_diagonal {
                    w[i] += 1.0;
                }
                Ok((sum + 0.5).abs())
            })
        };
        let mut defect = 0.0f64;
        for s in status {
            defect = defect.max(s?);
        }
        let weights = &grid.weights;
        let gram =
            DenseMatrix::from_fn(n, n, |i, j| 0.5 * (weights[i] * single.get(i, j) + weights[j] * single.get(j, i)));
        let single = DenseMatrix::from_fn(n, n, |i, j| gram.get(i, j) / weights[i]);
        let double_t = DenseMatrix::from_fn(n, n, |i, j| -double.get(j, i) * weights[j] / weights[i]);
        if single.data().iter().chain(double.data()).any(|v| !v.is_finite()) {
            return Err(Error::AssemblyFailure { row: 0, col: 0 });
        }
        Ok(Self { grid, options, single, gram, double, double_t, solid_angle_defect: defect })
    }

    pub fn grid(&self) -> &Arc<SurfaceGrid> {
        &self.grid
    }

    pub fn options(&self) -> &QuadratureOptions {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn single_layer(&self) -> &DenseMatrix {
        &self.single
    }

    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    pub fn double_layer(&self) -> &DenseMatrix {
        &self.double
    }

    pub fn double_layer_transpose(&self) -> &DenseMatrix {
        &self.double_t
    }

    /// Solid-angle defect of the corrected quadrature before the diagonal
    /// was fixed by singularity subtraction.
    pub fn solid_angle_defect(&self) -> f64 {
        self.solid_angle_defect
    }

    /// `max_i |(W·1)_i + ½|` of the assembled matrix. Zero up to rounding
    /// unless the diagonal was tampered with.
    pub fn row_sum_defect(&self) -> f64 {
        let ones = vec![1.0; self.len()];
        self.double.matvec(&ones).iter().fold(0.0, |m, v| m.max((v + 0.5).abs()))
    }

    pub fn apply_single(&self, psi: &[f64]) -> Vec<f64> {
        self.single.matvec(psi)
    }

    pub fn apply_double(&self, f: &[f64]) -> Vec<f64> {
        self.double.matvec(f)
    }

    pub fn apply_double_transpose(&self, phi: &[f64]) -> Vec<f64> {
        self.double_t.matvec(phi)
    }

    /// `(½ − Wᵀʳ) φ`, the interior normal derivative of the single layer of `φ`.
    pub fn apply_half_minus_wt(&self, phi: &[f64]) -> Vec<f64> {
        let t = self.apply_double_transpose(phi);
        phi.iter().zip(t).map(|(p, t)| 0.5 * p - t).collect()
    }

    /// `(½ + Wᵀʳ) φ`, minus the exterior normal derivative of the single layer.
    pub fn apply_half_plus_wt(&self, phi: &[f64]) -> Vec<f64> {
        let t = self.apply_double_transpose(phi);
        phi.iter().zip(t).map(|(p, t)| 0.5 * p + t).collect()
    }

    /// Dense `½I ± Wᵀʳ`.
    pub fn half_plus_wt_matrix(&self, sign: f64) -> DenseMatrix {
        DenseMatrix::from_fn(self.len(), self.len(), |i, j| {
            sign * self.double_t.get(i, j) + if i == j { 0.5 } else { 0.0 }
        })
    }

    /// The duality inner product `⟨ψ, φ⟩ = ∫∫ ψ(x) φ(y) / (4π|x − y|)`.
    pub fn duality_inner_product(&self, psi: &[f64], phi: &[f64]) -> f64 {
        dot(psi, &self.gram.matvec(phi))
    }

    /// Norm induced by [`Self::duality_inner_product`].
    pub fn duality_norm(&self, psi: &[f64]) -> f64 {
        self.duality_inner_product(psi, psi).max(0.0).sqrt()
    }

    /// Sum of the duality norms of the three Cartesian components, used as
    /// the norm of a tangent field.
    pub fn duality_norm_vector(&self, v: &[Vec3]) -> f64 {
        (0..3)
            .map(|c| {
                let comp: Vec<f64> = v.iter().map(|x| x[c]).collect();
                self.duality_inner_product(&comp, &comp).max(0.0)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn check_mean_zero(&self, b: &[f64]) -> Result<()> {
        let mean = self.grid.mean(b);
        let norm = self.grid.l2_norm(b);
        if mean.abs() * self.grid.area.sqrt() > 1e-8 * norm.max(f64::MIN_POSITIVE) && mean != 0.0 {
            return Err(Error::NotMeanZero { mean, norm });
        }
        Ok(())
    }

    /// `Σ_{k=k_start}^{n} (½ − Wᵀʳ)^k b0` by repeated application.
    pub fn neumann_series(&self, b0: &[f64], n: usize, k_start: usize) -> Result<SeriesResult> {
        if k_start > 1 {
            return Err(Error::InvalidArgument("k_start must be 0 or 1".into()));
        }
        self.check_mean_zero(b0)?;
        let mut term = b0.to_vec();
        let mut sum = vec![0.0; b0.len()];
        let mut term_norms = Vec::with_capacity(n + 1);
        for k in 0..=n {
            if k > 0 {
                term = self.apply_half_minus_wt(&term);
            }
            term_norms.push(self.duality_norm(&term));
            if k >= k_start {
                sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
            }
        }
        Ok(SeriesResult { sum, term_norms })
    }

    /// Power iteration of `½ − Wᵀʳ` on mean-zero densities with norms taken in
    /// the duality inner product; returns the converged growth ratio. Stops
    /// early once the last ratios agree to 1e-12.
    pub fn contraction_estimate(&self, iters: usize, seed: u64) -> Result<ContractionEstimate> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut psi: Vec<f64> = (0..self.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let mut ratios = Vec::with_capacity(iters);
        let project = |v: &mut Vec<f64>| {
            let m = self.grid.mean(v);
            v.iter_mut().for_each(|x| *x -= m);
        };
        project(&mut psi);
        let mut norm = self.duality_norm(&psi);
        psi.iter_mut().for_each(|x| *x /= norm);
        let spread = |r: &[f64]| {
            let tail = &r[r.len().saturating_sub(4)..];
            let last = tail.last().copied().unwrap_or(0.0);
            tail.iter().fold(0.0f64, |m, x| m.max((x - last).abs()))
        };
        for _ in 0..iters {
            let mut next = self.apply_half_minus_wt(&psi);
            project(&mut next);
            norm = self.duality_norm(&next);
            if norm == 0.0 {
                return Ok(ContractionEstimate { lambda: 0.0, ratios });
            }
            ratios.push(norm);
            next.iter_mut().for_each(|x| *x /= norm);
            psi = next;
            if ratios.len() >= 8 && spread(&ratios) < 1e-10 * norm {
                break;
            }
        }
        let s = spread(&ratios);
        if ratios.len() < 4 || s > 1e-4 {
            return Err(Error::NoConvergence { spread: s, iterations: iters });
        }
        Ok(ContractionEstimate { lambda: norm, ratios })
    }

    /// Single layer `∫ ψ(y) / (4π|x − y|)` at off-surface points.
    pub fn single_layer_at(&self, psi: &[f64], points: &[Vec3]) -> Vec<f64> {
        let g = &self.grid;
        par::map_indices(points.len(), |p| {
            let x = points[p];
            (0..g.len()).map(|k| psi[k] * g.weights[k] / vec3::dist(x, g.points[k])).sum::<f64>() / FOUR_PI
        })
    }

    /// Gradient of the single layer at off-surface points.
    pub fn single_layer_gradient_at(&self, psi: &[f64], points: &[Vec3]) -> Vec<Vec3> {
        let g = &self.grid;
        par::map_indices(points.len(), |p| {
            let x = points[p];
            let mut acc = vec3::ZERO;
            for k in 0..g.len() {
                let d = vec3::sub(x, g.points[k]);
                let r = vec3::norm(d);
                acc = vec3::axpy(acc, -psi[k] * g.weights[k] / (r * r * r), d);
            }
            vec3::scale(acc, 1.0 / FOUR_PI)
        })
    }

    /// [`Self::single_layer_gradient_at`] for several densities.
    pub fn single_layer_gradient_at_many(&self, densities: &[Vec<f64>], points: &[Vec3]) -> Vec<Vec<Vec3>> {
        single_layer_gradient_many(&self.grid, densities, points)
    }

    /// Double-layer potential `W_Ω(f)(x)` at off-surface points.
    pub fn double_layer_at(&self, f: &[f64], points: &[Vec3]) -> Vec<f64> {
        let g = &self.grid;
        par::map_indices(points.len(), |p| {
            let x = points[p];
            (0..g.len())
                .map(|k| {
                    let d = vec3::sub(x, g.points[k]);
                    let r = vec3::norm(d);
                    f[k] * g.weights[k] * vec3::dot(g.normals[k], d) / (r * r * r)
                })
                .sum::<f64>()
                / FOUR_PI
        })
    }

    /// Indices of points closer to the surface than half a grid spacing,
    /// where the off-surface quadratures lose accuracy.
    pub fn near_surface_points(&self, points: &[Vec3]) -> Vec<usize> {
        let h = 0.5 * self.grid.max_spacing();
        (0..points.len()).filter(|&p| self.grid.nearest_node_distance(points[p]) < h).collect()
    }

    /// Writes `V`, the Gram matrix and `W` in a little-endian binary file.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(DUMP_MAGIC)?;
        f.write_all(&DUMP_VERSION.to_le_bytes())?;
        for n in [self.grid.n_theta as u64, self.grid.n_phi as u64] {
            f.write_all(&n.to_le_bytes())?;
        }
        let opts = serde_json::to_vec(&self.options)?;
        f.write_all(&(opts.len() as u64).to_le_bytes())?;
        f.write_all(&opts)?;
        f.write_all(&self.solid_angle_defect.to_le_bytes())?;
        for m in [&self.single, &self.gram, &self.double] {
            for v in m.data() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    /// Reads operators written by [`Self::write_binary`] for the same grid.
    pub fn read_binary(grid: Arc<SurfaceGrid>, path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        let mut u32b = [0u8; 4];
        f.read_exact(&mut u32b)?;
        if &magic != DUMP_MAGIC || u32::from_le_bytes(u32b) != DUMP_VERSION {
            return Err(Error::InvalidArgument("not a layer-operator dump".into()));
        }
        let mut u64b = [0u8; 8];
        let mut read_u64 = |f: &mut std::io::BufReader<std::fs::File>| -> Result<u64> {
            f.read_exact(&mut u64b)?;
            Ok(u64::from_le_bytes(u64b))
        };
        let nt = read_u64(&mut f)? as usize;
        let np = read_u64(&mut f)? as usize;
        if (nt, np) != (grid.n_theta, grid.n_phi) {
            return Err(Error::DimensionMismatch(format!(
                "dump is {nt}x{np}, grid is {}x{}",
                grid.n_theta, grid.n_phi
            )));
        }
        let olen = read_u64(&mut f)? as usize;
        let mut obuf = vec![0u8; olen];
        f.read_exact(&mut obuf)?;
        let options: QuadratureOptions = serde_json::from_slice(&obuf)?;
        let read_f64 = |f: &mut std::io::BufReader<std::fs::File>| -> Result<f64> {
            let mut b = [0u8; 8];
            f.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let defect = read_f64(&mut f)?;
        let n = nt * np;
        let read_matrix = |f: &mut std::io::BufReader<std::fs::File>| -> Result<DenseMatrix> {
            let mut bytes = vec![0u8; n * n * 8];
            f.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
            DenseMatrix::from_row_major(n, n, data)
        };
        let single = read_matrix(&mut f)?;
        let gram = read_matrix(&mut f)?;
        let double = read_matrix(&mut f)?;
        let w = &grid.weights;
        let double_t = DenseMatrix::from_fn(n, n, |i, j| -double.get(j, i) * w[j] / w[i]);
        Ok(Self { grid, options, single, gram, double, double_t, solid_angle_defect: defect })
    }
}

fn par_rows<T: Send, R: Send>(rows: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        rows.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        rows.into_iter().map(f).collect()
    }
}

/// Partial sum of the Neumann series and the duality norms of its terms.
#[derive(Clone, Debug)]
pub struct SeriesResult {
    pub sum: Vec<f64>,
    /// Norm of the `k`-th term for `k = 0..=n`, including skipped leading terms.
    pub term_norms: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ContractionEstimate {
    pub lambda: f64,
    /// Norm ratio at every power-iteration step.
    pub ratios: Vec<f64>,
}
