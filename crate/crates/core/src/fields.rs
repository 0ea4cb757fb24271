//! Biot–Savart fields of filaments and surface currents, and the harmonic
//! Neumann field `Γ` of the solid torus.
//!
//! All fields use `B(x) = (1/4π) ∫ J(y) × (x − y) / |x − y|³`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::bvp::{BoundarySolver, HarmonicSolution};
use crate::error::{Error, Result};
use crate::geometry::{SampledCurve, SurfaceGrid};
use crate::layer_potentials::LayerOperators;
use crate::par;
use crate::surface_fields::{cross_normal, tangential_part, TangentField};
use crate::vec3::{self, Vec3};

const FOUR_PI: f64 = 4.0 * PI;

/// Closed polyline carrying unit current; the last point connects back to
/// the first.
#[derive(Clone, Debug, PartialEq)]
pub struct FilamentLoop {
    points: Vec<Vec3>,
    current: f64,
}

impl FilamentLoop {
    pub fn new(points: Vec<Vec3>, current: f64) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidArgument("a filament needs at least 3 vertices".into()));
        }
        if !current.is_finite() {
            return Err(Error::InvalidArgument("filament current must be finite".into()));
        }
        let l = Self { points, current };
        if l.segments().any(|(a, b)| vec3::dist(a, b) == 0.0) {
            return Err(Error::InvalidArgument("filament has a zero-length segment".into()));
        }
        Ok(l)
    }

    /// Circle of the given radius around `normal` (right-handed orientation).
    pub fn circle(center: Vec3, radius: f64, normal: Vec3, segments: usize, current: f64) -> Result<Self> {
        let n = vec3::norm(normal);
        if !(radius > 0.0) || n == 0.0 {
            return Err(Error::InvalidArgument("circle needs positive radius and nonzero normal".into()));
        }
        let n = vec3::scale(normal, 1.0 / n);
        let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let u = vec3::cross(n, helper);
        let u = vec3::scale(u, 1.0 / vec3::norm(u));
        let v = vec3::cross(n, u);
        let points = (0..segments)
            .map(|k| {
                let (s, c) = (2.0 * PI * k as f64 / segments as f64).sin_cos();
                vec3::add(center, vec3::add(vec3::scale(u, radius * c), vec3::scale(v, radius * s)))
            })
            .collect();
        Self::new(points, current)
    }

    /// Rectangle in the `xz` half-plane running up the `z` axis from
    /// `(0, 0, −half_length)` to `(0, 0, half_length)` and returning at
    /// `x = return_radius`. Each side is split into `per_side` segments.
    pub fn axis_rectangle(half_length: f64, return_radius: f64, per_side: usize) -> Result<Self> {
        let corners = [
            [0.0, 0.0, -half_length],
            [0.0, 0.0, half_length],
            [return_radius, 0.0, half_length],
            [return_radius, 0.0, -half_length],
        ];
        let mut points = Vec::with_capacity(4 * per_side);
        for c in 0..4 {
            let (a, b) = (corners[c], corners[(c + 1) % 4]);
            for k in 0..per_side {
                let t = k as f64 / per_side as f64;
                points.push(vec3::add(a, vec3::scale(vec3::sub(b, a), t)));
            }
        }
        Self::new(points, 1.0)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points, current: self.current }
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        let n = self.points.len();
        (0..n).map(move |k| (self.points[k], self.points[(k + 1) % n]))
    }

    /// Distance from `x` to the polyline.
    pub fn distance(&self, x: Vec3) -> f64 {
        self.segments()
            .map(|(a, b)| {
                let ab = vec3::sub(b, a);
                let t = (vec3::dot(vec3::sub(x, a), ab) / vec3::dot(ab, ab)).clamp(0.0, 1.0);
                vec3::dist(x, vec3::axpy(a, t, ab))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Field of one straight segment from `a` to `b` carrying unit current.
#[inline]
fn segment_field(x: Vec3, a: Vec3, b: Vec3) -> Vec3 {
    let r1 = vec3::sub(x, a);
    let r2 = vec3::sub(x, b);
    let (n1, n2) = (vec3::norm(r1), vec3::norm(r2));
    let denom = n1 * n2 * (n1 * n2 + vec3::dot(r1, r2));
    vec3::scale(vec3::cross(r1, r2), (n1 + n2) / (denom * FOUR_PI))
}

/// Points with optional quadrature weights and vector values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldSamples {
    pub points: Vec<Vec3>,
    pub weights: Option<Vec<f64>>,
    pub values: Vec<Vec3>,
}

impl FieldSamples {
    pub fn new(points: Vec<Vec3>, weights: Option<Vec<f64>>, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != points.len() || weights.as_ref().is_some_and(|w| w.len() != points.len()) {
            return Err(Error::DimensionMismatch("field samples of unequal lengths".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field samples contain non-finite values".into()));
        }
        Ok(Self { points, weights, values })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted L² norm (unit weights when none are attached).
    pub fn l2_norm(&self) -> f64 {
        weighted_norm(&self.values, self.weights.as_deref())
    }

    /// Weighted L² norm of `self − other` on the same points.
    pub fn l2_distance(&self, other: &[Vec3]) -> f64 {
        let diff: Vec<Vec3> = self.values.iter().zip(other).map(|(a, b)| vec3::sub(*a, *b)).collect();
        weighted_norm(&diff, self.weights.as_deref())
    }

    /// CSV with header `x,y,z,Bx,By,Bz`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z,Bx,By,Bz\n");
        for (p, v) in self.points.iter().zip(&self.values) {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", p[0], p[1], p[2], v[0], v[1], v[2]);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn weighted_norm(values: &[Vec3], weights: Option<&[f64]>) -> f64 {
    match weights {
        Some(w) => values.iter().zip(w).map(|(v, w)| vec3::dot(*v, *v) * w).sum::<f64>().sqrt(),
        None => values.iter().map(|v| vec3::dot(*v, *v)).sum::<f64>().sqrt(),
    }
}

/// Exact field of a polygonal filament at `points`.
pub fn bs_filament(lp: &FilamentLoop, points: &[Vec3]) -> Result<Vec<Vec3>> {
    if let Some(d) = points.iter().map(|p| lp.distance(*p)).find(|d| *d < 1e-9) {
        return Err(Error::OnFilament { distance: d });
    }
    Ok(par::map_indices(points.len(), |k| {
        let x = points[k];
        let b = lp.segments().fold(vec3::ZERO, |acc, (a, b)| vec3::add(acc, segment_field(x, a, b)));
        vec3::scale(b, lp.current)
    }))
}

/// Field of a nodal surface current at off-surface points (plain quadrature).
pub fn bs_surface_current(grid: &SurfaceGrid, j: &[Vec3], points: &[Vec3]) -> Vec<Vec3> {
    par::map_indices(points.len(), |p| {
        let x = points[p];
        let mut b = vec3::ZERO;
        for k in 0..grid.len() {
            let d = vec3::sub(x, grid.points[k]);
            let r = vec3::norm(d);
            b = vec3::axpy(b, grid.weights[k] / (r * r * r), vec3::cross(j[k], d));
        }
        vec3::scale(b, 1.0 / FOUR_PI)
    })
}

/// [`bs_surface_current`] for several currents, evaluating the kernel once
/// per point pair. The result is indexed `[current][point]`.
pub fn bs_surface_current_many(grid: &SurfaceGrid, currents: &[Vec<Vec3>], points: &[Vec3]) -> Vec<Vec<Vec3>> {
    let k = currents.len();
    let per_point = par::map_indices(points.len(), |p| {
        let x = points[p];
        let mut acc = vec![vec3::ZERO; k];
        for q in 0..grid.len() {
            let d = vec3::sub(x, grid.points[q]);
            let r = vec3::norm(d);
            let d = vec3::scale(d, grid.weights[q] / (FOUR_PI * r * r * r));
            for (a, j) in acc.iter_mut().zip(currents) {
                *a = vec3::add(*a, vec3::cross(j[q], d));
            }
        }
        acc
    });
    (0..k).map(|i| per_point.iter().map(|acc| acc[i]).collect()).collect()
}

/// Samples of a legacy-VTK structured-points box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxGrid {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
}

impl BoxGrid {
    /// Box covering `[lo, hi]` with `dims` points per axis.
    pub fn new(lo: Vec3, hi: Vec3, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|d| *d < 2) {
            return Err(Error::InvalidGrid("box dimensions must be at least 2".into()));
        }
        let spacing = [0, 1, 2].map(|c| (hi[c] - lo[c]) / (dims[c] - 1) as f64);
        Ok(Self { origin: lo, spacing, dims })
    }

    /// Points with `x` varying fastest, as VTK expects.
    pub fn points(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.dims.iter().product());
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    out.push([
                        self.origin[0] + i as f64 * self.spacing[0],
                        self.origin[1] + j as f64 * self.spacing[1],
                        self.origin[2] + k as f64 * self.spacing[2],
                    ]);
                }
            }
        }
        out
    }

    /// Legacy VTK `STRUCTURED_POINTS` text with one vector field.
    pub fn write_vtk(&self, path: &Path, name: &str, values: &[Vec3]) -> Result<()> {
        let n: usize = self.dims.iter().product();
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!("{} values for {n} box points", values.len())));
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# vtk DataFile Version 3.0")?;
        writeln!(f, "{name}")?;
        writeln!(f, "ASCII")?;
        writeln!(f, "DATASET STRUCTURED_POINTS")?;
        writeln!(f, "DIMENSIONS {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(f, "ORIGIN {} {} {}", self.origin[0], self.origin[1], self.origin[2])?;
        writeln!(f, "SPACING {} {} {}", self.spacing[0], self.spacing[1], self.spacing[2])?;
        writeln!(f, "POINT_DATA {n}")?;
        writeln!(f, "VECTORS {name} double")?;
        for v in values {
            writeln!(f, "{:e} {:e} {:e}", v[0], v[1], v[2])?;
        }
        f.flush()?;
        Ok(())
    }
}

/// The harmonic Neumann field `Γ = B_filament + ∇u` of the solid torus,
/// normalized to unit circulation around the toroidal direction.
#[derive(Clone, Debug)]
pub struct HarmonicNeumannField {
    pub filament: FilamentLoop,
    pub correction: HarmonicSolution,
    ops: Arc<LayerOperators>,
    /// `Γ` at the surface nodes (tangent to the surface).
    pub on_surface: TangentField,
    /// `Γ × N` at the surface nodes.
    pub cross_normal: TangentField,
    /// Mean of `N·B_filament` removed before the Neumann solve.
    pub removed_flux_mean: f64,
}

impl HarmonicNeumannField {
    /// Default filament: the `z` axis closed by a return leg far outside,
    /// both at 100 diameters of the torus.
    pub fn default_filament(grid: &SurfaceGrid) -> Result<FilamentLoop> {
        let diameter = 2.0 * (grid.torus.major_radius() + grid.torus.max_minor_radius());
        FilamentLoop::axis_rectangle(100.0 * diameter, 100.0 * diameter, 16)
    }

    pub fn build(solver: &BoundarySolver) -> Result<Self> {
        let filament = Self::default_filament(solver.operators().grid())?;
        Self::build_with(solver, filament)
    }

    pub fn build_with(solver: &BoundarySolver, filament: FilamentLoop) -> Result<Self> {
        let ops = solver.operators().clone();
        let grid = ops.grid().clone();
        let required = 0.1 * grid.torus.min_minor_radius();
        let dmin =
            sample_filament(&filament, 8).iter().map(|p| grid.nearest_node_distance(*p)).fold(f64::INFINITY, f64::min);
        if dmin < required {
            return Err(Error::FilamentIntersectsDomain { distance: dmin, required });
        }
        let b_fil = bs_filament(&filament, &grid.points)?;
        let mut data: Vec<f64> = (0..grid.len()).map(|k| -vec3::dot(grid.normals[k], b_fil[k])).collect();
        let removed_flux_mean = grid.mean(&data);
        data.iter_mut().for_each(|v| *v -= removed_flux_mean);
        let correction = solver.solve_neumann_interior(&data)?;
        let tan = tangential_part(&grid, &b_fil);
        let on_surface = TangentField(
            tan.iter().zip(correction.tangential_gradient.iter()).map(|(a, b)| vec3::add(*a, *b)).collect(),
        );
        let cross = cross_normal(&grid, &on_surface);
        Ok(Self { filament, correction, ops, on_surface, cross_normal: cross, removed_flux_mean })
    }

    pub fn grid(&self) -> &Arc<SurfaceGrid> {
        self.ops.grid()
    }

    /// `Γ` at points inside the solid torus.
    pub fn eval(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        let b = bs_filament(&self.filament, points)?;
        let g = self.correction.gradient_at(points);
        Ok(b.iter().zip(g).map(|(a, b)| vec3::add(*a, b)).collect())
    }

    /// `BS_Ω(Γ)` on the surface: the corrected single layer applied to each
    /// Cartesian component of `Γ × N`. The field is continuous across the
    /// surface, so this is its boundary value from either side.
    pub fn bs_volume_trace(&self) -> Vec<Vec3> {
        let mut out = vec![vec3::ZERO; self.ops.len()];
        for c in 0..3 {
            let comp: Vec<f64> = self.cross_normal.iter().map(|v| v[c]).collect();
            for (o, v) in out.iter_mut().zip(self.ops.apply_single(&comp)) {
                o[c] = v;
            }
        }
        out
    }

    /// `BS_Ω(Γ)` at off-surface points by plain quadrature.
    pub fn bs_volume_at(&self, points: &[Vec3]) -> Vec<Vec3> {
        let grid = self.ops.grid();
        par::map_indices(points.len(), |p| {
            let x = points[p];
            let mut acc = vec3::ZERO;
            for k in 0..grid.len() {
                acc = vec3::axpy(acc, grid.weights[k] / vec3::dist(x, grid.points[k]), self.cross_normal[k]);
            }
            vec3::scale(acc, 1.0 / FOUR_PI)
        })
    }
}

fn sample_filament(lp: &FilamentLoop, per_segment: usize) -> Vec<Vec3> {
    lp.segments()
        .flat_map(|(a, b)| {
            (0..per_segment).map(move |k| vec3::add(a, vec3::scale(vec3::sub(b, a), k as f64 / per_segment as f64)))
        })
        .collect()
}

/// `∮ B·dl` along a closed curve for a field given as a batch evaluator.
pub fn toroidal_circulation(field: impl Fn(&[Vec3]) -> Result<Vec<Vec3>>, curve: &SampledCurve) -> Result<f64> {
    let values = field(&curve.points[..curve.len()])?;
    Ok(curve.circulation(&values))
}
