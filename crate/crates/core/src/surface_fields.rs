//! Tangential calculus on a [`SurfaceGrid`]: spectral gradients and
//! divergence, the harmonic tangent basis `(γ_p, γ_t)`, divergence-free
//! surface currents in stream-function form, and the winding averages.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SurfaceGrid;
use crate::spectral::wavenumber;
use crate::vec3::{self, Vec3};

/// Scalar samples at the surface nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarDensity(pub Vec<f64>);

impl ScalarDensity {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn from_fn(grid: &SurfaceGrid, f: impl Fn(Vec3) -> f64) -> Self {
        Self(grid.points.iter().map(|x| f(*x)).collect())
    }

    /// Samples `f(θ, φ)` at the grid parameters.
    pub fn from_params(grid: &SurfaceGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut v = Vec::with_capacity(grid.len());
        for i in 0..grid.n_theta {
            for j in 0..grid.n_phi {
                v.push(f(grid.theta(i), grid.phi(j)));
            }
        }
        Self(v)
    }

    pub fn mean(&self, grid: &SurfaceGrid) -> f64 {
        grid.mean(&self.0)
    }

    /// Removes the weighted mean.
    pub fn project_mean_zero(&mut self, grid: &SurfaceGrid) {
        let m = self.mean(grid);
        self.0.iter_mut().for_each(|x| *x -= m);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for ScalarDensity {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ScalarDensity {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

/// Vectors at the surface nodes, tangent to the surface.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TangentField(pub Vec<Vec3>);

impl TangentField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![vec3::ZERO; n])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| vec3::scale(*v, s)).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &TangentField) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| vec3::axpy(*a, s, *b)).collect())
    }

    pub fn l2_norm(&self, grid: &SurfaceGrid) -> f64 {
        self.0.iter().zip(&grid.weights).map(|(v, w)| vec3::dot(*v, *v) * w).sum::<f64>().sqrt()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|v| vec3::norm(*v)).fold(0.0, f64::max)
    }

    /// Largest `|N·v|` over the grid.
    pub fn max_normal_component(&self, grid: &SurfaceGrid) -> f64 {
        self.0.iter().zip(&grid.normals).map(|(v, n)| vec3::dot(*v, *n).abs()).fold(0.0, f64::max)
    }

    /// Cartesian component `c` as a density.
    pub fn component(&self, c: usize) -> ScalarDensity {
        ScalarDensity(self.0.iter().map(|v| v[c]).collect())
    }
}

impl Deref for TangentField {
    type Target = Vec<Vec3>;
    fn deref(&self) -> &Vec<Vec3> {
        &self.0
    }
}

/// `∇_Σ f` from nodal values, derivatives taken spectrally.
pub fn surface_gradient(grid: &SurfaceGrid, f: &[f64]) -> TangentField {
    let ft = grid.spectral.d_theta(f);
    let fp = grid.spectral.d_phi(f);
    gradient_from_partials(grid, &ft, &fp)
}

/// `∇_Σ f` given `∂_θ f` and `∂_φ f` at the nodes.
pub fn gradient_from_partials(grid: &SurfaceGrid, ft: &[f64], fp: &[f64]) -> TangentField {
    TangentField(
        (0..grid.len())
            .map(|k| {
                let [itt, itp, ipp] = grid.inv_metric[k];
                let ct = itt * ft[k] + itp * fp[k];
                let cp = itp * ft[k] + ipp * fp[k];
                vec3::add(vec3::scale(grid.e_theta[k], ct), vec3::scale(grid.e_phi[k], cp))
            })
            .collect(),
    )
}

/// `∇_Σ f × N` given `∂_θ f` and `∂_φ f`.
pub fn rotated_gradient_from_partials(grid: &SurfaceGrid, ft: &[f64], fp: &[f64]) -> TangentField {
    let s = grid.torus.orientation();
    TangentField(
        (0..grid.len())
            .map(|k| {
                let c = s / grid.sqrt_g[k];
                vec3::add(vec3::scale(grid.e_theta[k], c * fp[k]), vec3::scale(grid.e_phi[k], -c * ft[k]))
            })
            .collect(),
    )
}

/// `∇_Σ f × N` from nodal values.
pub fn rotated_gradient(grid: &SurfaceGrid, f: &[f64]) -> TangentField {
    let ft = grid.spectral.d_theta(f);
    let fp = grid.spectral.d_phi(f);
    rotated_gradient_from_partials(grid, &ft, &fp)
}

/// Contravariant components `(v^θ, v^φ)` of a tangent field.
fn contravariant(grid: &SurfaceGrid, v: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
    (0..grid.len())
        .map(|k| {
            let [itt, itp, ipp] = grid.inv_metric[k];
            let a = vec3::dot(v[k], grid.e_theta[k]);
            let b = vec3::dot(v[k], grid.e_phi[k]);
            (itt * a + itp * b, itp * a + ipp * b)
        })
        .unzip()
}

/// Surface divergence, the negative weighted adjoint of [`surface_gradient`].
pub fn surface_divergence(grid: &SurfaceGrid, v: &[Vec3]) -> Vec<f64> {
    let (vt, vp) = contravariant(grid, v);
    let ft: Vec<f64> = vt.iter().zip(&grid.sqrt_g).map(|(a, s)| a * s).collect();
    let fp: Vec<f64> = vp.iter().zip(&grid.sqrt_g).map(|(a, s)| a * s).collect();
    let dt = grid.spectral.d_theta(&ft);
    let dp = grid.spectral.d_phi(&fp);
    (0..grid.len()).map(|k| (dt[k] + dp[k]) / grid.sqrt_g[k]).collect()
}

/// Laplace–Beltrami operator `div_Σ ∇_Σ`.
pub fn laplace_beltrami(grid: &SurfaceGrid, f: &[f64]) -> Vec<f64> {
    surface_divergence(grid, &surface_gradient(grid, f))
}

/// Solves `Δ_Σ u = rhs` for mean-zero `u` by preconditioned conjugate
/// gradients. `rhs` must integrate to zero.
pub fn solve_surface_poisson(grid: &SurfaceGrid, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    let cell = grid.h_theta * grid.h_phi;
    let (ct, cp) = (0..n).fold((0.0, 0.0), |(a, b), k| {
        let s = grid.sqrt_g[k] * cell;
        (a + s * grid.inv_metric[k][0], b + s * grid.inv_metric[k][2])
    });
    let (ct, cp) = (ct / n as f64, cp / n as f64);
    // A u = w ⊙ (−Δ u) is symmetric positive semidefinite with constant kernel.
    let apply =
        |u: &[f64]| -> Vec<f64> { laplace_beltrami(grid, u).iter().zip(&grid.weights).map(|(l, w)| -l * w).collect() };
    let precondition = |r: &[f64]| -> Vec<f64> {
        grid.spectral.apply_symbol(r, |kt, kp| {
            let d = ct * kt * kt + cp * kp * kp;
            if d == 0.0 {
                0.0
            } else {
                1.0 / d
            }
        })
    };
    let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut b: Vec<f64> = rhs.iter().zip(&grid.weights).map(|(r, w)| -r * w).collect();
    let shift = b.iter().sum::<f64>() / n as f64;
    b.iter_mut().for_each(|x| *x -= shift);
    let bnorm = dotp(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dotp(&r, &z);
    let max_iter = 4 * n.max(100);
    for it in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / dotp(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let res = dotp(&r, &r).sqrt() / bnorm;
        if res < tol {
            let m = grid.mean(&x);
            x.iter_mut().for_each(|v| *v -= m);
            return Ok(x);
        }
        if it + 1 == max_iter {
            return Err(Error::PoissonNoConvergence { residual: res, iterations: max_iter });
        }
        z = precondition(&r);
        let rz_new = dotp(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    unreachable!()
}

/// Which coordinate circle a grid-line integral runs along.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridLoop {
    /// `φ = φ_j`, traversed with increasing `θ`.
    Poloidal(usize),
    /// `θ = θ_i`, traversed with increasing `φ`.
    Toroidal(usize),
}

/// `∮ v·dl` along a grid line (spectrally accurate periodic trapezoid rule).
pub fn grid_line_integral(grid: &SurfaceGrid, v: &[Vec3], path: GridLoop) -> f64 {
    match path {
        GridLoop::Poloidal(j) => {
            (0..grid.n_theta)
                .map(|i| {
                    let k = grid.index(i, j);
                    vec3::dot(v[k], grid.e_theta[k])
                })
                .sum::<f64>()
                * grid.h_theta
        }
        GridLoop::Toroidal(i) => {
            (0..grid.n_phi)
                .map(|j| {
                    let k = grid.index(i, j);
                    vec3::dot(v[k], grid.e_phi[k])
                })
                .sum::<f64>()
                * grid.h_phi
        }
    }
}

/// Harmonic tangent fields normalized by their periods over
/// `σ_p = {φ = 0}` and `σ_t = {θ = 0}`.
#[derive(Clone, Debug)]
pub struct HarmonicSurfaceBasis {
    pub gamma_p: TangentField,
    pub gamma_t: TangentField,
    /// Rows: `σ_p`, `σ_t`; columns: the harmonic parts of `∇θ`, `∇φ`.
    pub period_matrix: [[f64; 2]; 2],
    /// `γ_p × N` and `γ_t × N`.
    pub gamma_p_cross_n: TangentField,
    pub gamma_t_cross_n: TangentField,
}

impl HarmonicSurfaceBasis {
    pub fn new(grid: &SurfaceGrid) -> Result<Self> {
        let n = grid.len();
        // Closed fields dual to dθ and dφ.
        let dual = |c: usize| -> Vec<Vec3> {
            (0..n)
                .map(|k| {
                    let im = grid.inv_metric[k];
                    let (a, b) = if c == 0 { (im[0], im[1]) } else { (im[1], im[2]) };
                    vec3::add(vec3::scale(grid.e_theta[k], a), vec3::scale(grid.e_phi[k], b))
                })
                .collect()
        };
        let harmonic = |v: Vec<Vec3>| -> Result<TangentField> {
            let div = surface_divergence(grid, &v);
            let u = solve_surface_poisson(grid, &div, 1e-13)?;
            let gu = surface_gradient(grid, &u);
            Ok(TangentField(v.iter().zip(gu.iter()).map(|(a, b)| vec3::sub(*a, *b)).collect()))
        };
        let h_theta = harmonic(dual(0))?;
        let h_phi = harmonic(dual(1))?;
        let per = |h: &TangentField| {
            (grid_line_integral(grid, h, GridLoop::Poloidal(0)), grid_line_integral(grid, h, GridLoop::Toroidal(0)))
        };
        let (a_p, a_t) = per(&h_theta);
        let (b_p, b_t) = per(&h_phi);
        let period_matrix = [[a_p, b_p], [a_t, b_t]];
        let det = a_p * b_t - b_p * a_t;
        if det.abs() < 1e-10 {
            return Err(Error::SingularPeriodMatrix { det });
        }
        // Solve period_matrix · (c_θ, c_φ) = e for e = (1,0) and (0,1).
        let combine = |e: [f64; 2]| -> TangentField {
            let ct = (e[0] * b_t - b_p * e[1]) / det;
            let cp = (a_p * e[1] - a_t * e[0]) / det;
            TangentField(
                h_theta
                    .iter()
                    .zip(h_phi.iter())
                    .map(|(x, y)| vec3::add(vec3::scale(*x, ct), vec3::scale(*y, cp)))
                    .collect(),
            )
        };
        let gamma_p = combine([1.0, 0.0]);
        let gamma_t = combine([0.0, 1.0]);
        let gamma_p_cross_n = cross_normal(grid, &gamma_p);
        let gamma_t_cross_n = cross_normal(grid, &gamma_t);
        Ok(Self { gamma_p, gamma_t, period_matrix, gamma_p_cross_n, gamma_t_cross_n })
    }
}

/// `v × N` nodewise.
pub fn cross_normal(grid: &SurfaceGrid, v: &[Vec3]) -> TangentField {
    TangentField(v.iter().zip(&grid.normals).map(|(a, n)| vec3::cross(*a, *n)).collect())
}

/// Tangential part `v − (v·N) N`.
pub fn tangential_part(grid: &SurfaceGrid, v: &[Vec3]) -> TangentField {
    TangentField(v.iter().zip(&grid.normals).map(|(a, n)| vec3::axpy(*a, -vec3::dot(*a, *n), *n)).collect())
}

/// Average toroidal and poloidal windings `(Q̄, P̄)` of a current.
pub fn avg_windings(grid: &SurfaceGrid, basis: &HarmonicSurfaceBasis, j: &[Vec3]) -> (f64, f64) {
    let mut q = 0.0;
    let mut p = 0.0;
    for k in 0..grid.len() {
        let w = grid.weights[k];
        q += vec3::dot(j[k], basis.gamma_t[k]) * w;
        p += vec3::dot(j[k], basis.gamma_p[k]) * w;
    }
    (q / grid.area, p / grid.area)
}

/// Real Fourier coefficients `c·cos(mθ − nφ) + s·sin(mθ − nφ)` of a
/// single-valued function on the torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    #[serde(default)]
    pub cos: Vec<(i32, i32, f64)>,
    #[serde(default)]
    pub sin: Vec<(i32, i32, f64)>,
}

impl FourierSeries {
    /// Values and both partial derivatives at `(θ, φ)`.
    pub fn eval_with_partials(&self, theta: f64, phi: f64) -> (f64, f64, f64) {
        let (mut f, mut ft, mut fp) = (0.0, 0.0, 0.0);
        for &(m, n, c) in &self.cos {
            let (s, co) = (m as f64 * theta - n as f64 * phi).sin_cos();
            f += c * co;
            ft -= c * m as f64 * s;
            fp += c * n as f64 * s;
        }
        for &(m, n, c) in &self.sin {
            let (s, co) = (m as f64 * theta - n as f64 * phi).sin_cos();
            f += c * s;
            ft += c * m as f64 * co;
            fp -= c * n as f64 * co;
        }
        (f, ft, fp)
    }

    /// `(f, ∂_θ f, ∂_φ f)` at every grid node.
    pub fn sample(&self, grid: &SurfaceGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut f = Vec::with_capacity(grid.len());
        let mut ft = Vec::with_capacity(grid.len());
        let mut fp = Vec::with_capacity(grid.len());
        for i in 0..grid.n_theta {
            for j in 0..grid.n_phi {
                let (a, b, c) = self.eval_with_partials(grid.theta(i), grid.phi(j));
                f.push(a);
                ft.push(b);
                fp.push(c);
            }
        }
        (f, ft, fp)
    }

    pub fn is_empty(&self) -> bool {
        self.cos.is_empty() && self.sin.is_empty()
    }
}

/// Divergence-free surface current `∇f × N + α γ_t × N + β γ_p × N`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceCurrent {
    pub stream_coeffs: FourierSeries,
    pub alpha: f64,
    pub beta: f64,
}

impl SurfaceCurrent {
    pub fn realize(&self, grid: &SurfaceGrid, basis: &HarmonicSurfaceBasis) -> TangentField {
        let mut j = if self.stream_coeffs.is_empty() {
            TangentField::zeros(grid.len())
        } else {
            let (_, ft, fp) = self.stream_coeffs.sample(grid);
            rotated_gradient_from_partials(grid, &ft, &fp)
        };
        if self.alpha != 0.0 {
            j = j.axpy(self.alpha, &basis.gamma_t_cross_n);
        }
        if self.beta != 0.0 {
            j = j.axpy(self.beta, &basis.gamma_p_cross_n);
        }
        j
    }
}

impl SurfaceCurrent {
    /// Splits a nodal divergence-free current into a stream function and the
    /// two harmonic coefficients. The stream function comes from
    /// `Δ_Σ s = div_Σ(N × j)`; `α, β` from the `L²(Σ)` projection of the rest.
    /// Returns the representation and the relative `L²(Σ)` mismatch of
    /// realizing it again.
    pub fn from_nodal(grid: &SurfaceGrid, basis: &HarmonicSurfaceBasis, j: &[Vec3]) -> Result<(Self, f64)> {
        if j.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!("{} current values for {} nodes", j.len(), grid.len())));
        }
        let rotated: Vec<Vec3> = cross_normal(grid, j).iter().map(|v| vec3::scale(*v, -1.0)).collect();
        let mut div = surface_divergence(grid, &rotated);
        let m = grid.mean(&div);
        div.iter_mut().for_each(|d| *d -= m);
        let stream = solve_surface_poisson(grid, &div, 1e-13)?;
        let stream_coeffs = FourierSeries::from_samples(grid, &stream, 1e-13);
        let exact = SurfaceCurrent { stream_coeffs: stream_coeffs.clone(), alpha: 0.0, beta: 0.0 }.realize(grid, basis);
        let rest: Vec<Vec3> = j.iter().zip(exact.iter()).map(|(a, b)| vec3::sub(*a, *b)).collect();
        let (a, b) = (&basis.gamma_t_cross_n, &basis.gamma_p_cross_n);
        let ip = |u: &[Vec3], v: &[Vec3]| -> f64 {
            u.iter().zip(v).zip(&grid.weights).map(|((x, y), w)| vec3::dot(*x, *y) * w).sum()
        };
        let (aa, ab, bb) = (ip(a, a), ip(a, b), ip(b, b));
        let (ra, rb) = (ip(a, &rest), ip(b, &rest));
        let det = aa * bb - ab * ab;
        if det.abs() <= 1e-14 * aa * bb {
            return Err(Error::SingularPeriodMatrix { det });
        }
        let current =
            SurfaceCurrent { stream_coeffs, alpha: (ra * bb - rb * ab) / det, beta: (rb * aa - ra * ab) / det };
        let again = current.realize(grid, basis);
        let diff: Vec<Vec3> = again.iter().zip(j).map(|(x, y)| vec3::sub(*x, *y)).collect();
        let norm = TangentField(j.to_vec()).l2_norm(grid);
        let mismatch = TangentField(diff).l2_norm(grid);
        Ok((current, if norm > 0.0 { mismatch / norm } else { mismatch }))
    }
}

impl FourierSeries {
    /// Coefficients of grid samples in the `cos/sin(mθ − nφ)` basis, without
    /// the mean and the Nyquist modes. Terms below `rel_tol` times the largest
    /// are dropped.
    pub fn from_samples(grid: &SurfaceGrid, f: &[f64], rel_tol: f64) -> Self {
        let (nt, np) = (grid.n_theta, grid.n_phi);
        let spec = grid.spectral.forward(f);
        let scale = 2.0 / (nt * np) as f64;
        let mut terms = Vec::new();
        for i in 0..nt {
            for k in 0..np {
                let (m, n) = (wavenumber(i, nt) as i32, -(wavenumber(k, np) as i32));
                let nyquist = (nt % 2 == 0 && i == nt / 2) || (np % 2 == 0 && k == np / 2);
                if nyquist || !(m > 0 || (m == 0 && n > 0)) {
                    continue;
                }
                let c = spec[i * np + k];
                terms.push((m, n, c.re * scale, -c.im * scale));
            }
        }
        let max = terms.iter().fold(0.0f64, |a, t| a.max(t.2.abs()).max(t.3.abs()));
        let keep = |v: f64| v.abs() > rel_tol * max;
        let mut out = FourierSeries::default();
        for (m, n, c, s) in terms {
            if keep(c) {
                out.cos.push((m, n, c));
            }
            if keep(s) {
                out.sin.push((m, n, s));
            }
        }
        out
    }
}

/// Real Fourier modes ordered by total degree `|m| + |n|`, constant excluded.
///
/// Within one degree, modes are ordered by `m`, then `n` descending, with the
/// cosine before the sine of each `(m, n)`. Only the half-plane `m > 0` or
/// `m = 0, n > 0` is used, so every function appears once.
pub fn fourier_modes_by_degree(count: usize) -> Vec<FourierMode> {
    let mut out = Vec::with_capacity(count);
    let mut degree = 1;
    while out.len() < count {
        for m in 0..=degree {
            let rest = degree - m;
            let ns: Vec<i32> = if m == 0 {
                vec![rest]
            } else if rest == 0 {
                vec![0]
            } else {
                vec![rest, -rest]
            };
            for n in ns {
                for kind in [ModeKind::Cos, ModeKind::Sin] {
                    if out.len() < count {
                        out.push(FourierMode { m, n, kind });
                    }
                }
            }
        }
        degree += 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Cos,
    Sin,
}

/// `cos(mθ − nφ)` or `sin(mθ − nφ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierMode {
    pub m: i32,
    pub n: i32,
    pub kind: ModeKind,
}

impl FourierMode {
    pub fn series(&self, amplitude: f64) -> FourierSeries {
        let entry = vec![(self.m, self.n, amplitude)];
        match self.kind {
            ModeKind::Cos => FourierSeries { cos: entry, sin: vec![] },
            ModeKind::Sin => FourierSeries { cos: vec![], sin: entry },
        }
    }

    pub fn sample(&self, grid: &SurfaceGrid) -> ScalarDensity {
        ScalarDensity(self.series(1.0).sample(grid).0)
    }
}

/// Random band-limited Fourier series with modes up to total degree
/// `max_degree` and coefficients uniform in `[-1, 1]`, scaled by `1/(1+deg)`.
pub fn random_series(rng: &mut impl rand::Rng, max_degree: i32) -> FourierSeries {
    let mut s = FourierSeries::default();
    let count = (1..=max_degree).map(|d| 4 * d as usize).sum();
    for md in fourier_modes_by_degree(count) {
        let c = rng.random_range(-1.0..1.0) / (1.0 + (md.m.abs() + md.n.abs()) as f64);
        match md.kind {
            ModeKind::Cos => s.cos.push((md.m, md.n, c)),
            ModeKind::Sin => s.sin.push((md.m, md.n, c)),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CoefficientTable, FourierTorus};
    use rand::SeedableRng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn circular(n: usize) -> Arc<SurfaceGrid> {
        SurfaceGrid::new(&FourierTorus::circular(2.0, 1.0).unwrap(), n, n).unwrap()
    }

    fn shaped(n: usize) -> Arc<SurfaceGrid> {
        let table = CoefficientTable {
            nfp: 2,
            r_coeffs: vec![(0, 0, 3.0), (1, 0, 1.0), (1, 1, 0.2), (2, 0, 0.1)],
            z_coeffs: vec![(1, 0, 1.2), (1, 1, 0.2)],
        };
        SurfaceGrid::new(&FourierTorus::new(&table).unwrap(), n, n + 8).unwrap()
    }

    #[test]
    fn gradient_of_constant_vanishes_and_of_sin_theta_is_analytic() {
        let g = circular(32);
        let c = vec![3.5; g.len()];
        assert!(surface_gradient(&g, &c).max_norm() < 1e-12);
        let f = ScalarDensity::from_params(&g, |t, _| t.sin());
        let grad = surface_gradient(&g, &f);
        for i in 0..g.n_theta {
            let k = g.index(i, 3);
            assert!((vec3::norm(grad[k]) - g.theta(i).cos().abs()).abs() < 1e-12);
        }
        let f = ScalarDensity::from_params(&g, |t, p| (t + 2.0 * p).cos() * t.sin());
        let grad = surface_gradient(&g, &f);
        assert!(grid_line_integral(&g, &grad, GridLoop::Poloidal(5)).abs() < 1e-12);
        assert!(grid_line_integral(&g, &grad, GridLoop::Toroidal(2)).abs() < 1e-12);
        assert!(grad.max_normal_component(&g) < 1e-12);
    }

    #[test]
    fn harmonic_basis_on_circular_torus_matches_closed_form() {
        let g = circular(48);
        let b = HarmonicSurfaceBasis::new(&g).unwrap();
        // Node 0 is (3, 0, 0).
        let gt = b.gamma_t[0];
        let gp = b.gamma_p[0];
        assert!(vec3::dist(gt, [0.0, 1.0 / (6.0 * PI), 0.0]) < 1e-9, "{gt:?}");
        let c = 3f64.sqrt() / (6.0 * PI);
        assert!(vec3::dist(gp, [0.0, 0.0, c]) < 1e-9, "{gp:?}");
    }

    #[test]
    fn harmonic_basis_is_normalized_and_divergence_free() {
        for g in [circular(24), shaped(32)] {
            let b = HarmonicSurfaceBasis::new(&g).unwrap();
            let per = |v: &TangentField, l| grid_line_integral(&g, v, l);
            assert!((per(&b.gamma_t, GridLoop::Toroidal(0)) - 1.0).abs() < 1e-6);
            assert!(per(&b.gamma_t, GridLoop::Poloidal(0)).abs() < 1e-6);
            assert!((per(&b.gamma_p, GridLoop::Poloidal(0)) - 1.0).abs() < 1e-6);
            assert!(per(&b.gamma_p, GridLoop::Toroidal(0)).abs() < 1e-6);
            for f in [&b.gamma_p, &b.gamma_t, &b.gamma_p_cross_n, &b.gamma_t_cross_n] {
                let div = surface_divergence(&g, f);
                assert!(div.iter().all(|d| d.abs() < 1e-8));
                assert!(f.max_normal_component(&g) < 1e-10);
            }
            // Periods over any other grid line agree (closedness).
            assert!((per(&b.gamma_t, GridLoop::Toroidal(5)) - 1.0).abs() < 1e-6);
            assert!((per(&b.gamma_p, GridLoop::Poloidal(7)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn winding_identities() {
        let g = circular(32);
        let b = HarmonicSurfaceBasis::new(&g).unwrap();
        let (q, _) = avg_windings(&g, &b, &b.gamma_p_cross_n);
        assert!((q.abs() * g.area - 1.0).abs() < 1e-8, "{}", q * g.area);
        let (q, p) = avg_windings(&g, &b, &b.gamma_t_cross_n);
        assert!(q.abs() < 1e-12);
        assert!((p.abs() * g.area - 1.0).abs() < 1e-8);
        let f = ScalarDensity::from_params(&g, |t, p| (2.0 * t - p).sin() + t.cos());
        let (q, p) = avg_windings(&g, &b, &rotated_gradient(&g, &f));
        assert!(q.abs() < 1e-12 && p.abs() < 1e-12);
    }

    #[test]
    fn riemann_bilinear_identity_on_shaped_torus() {
        let g = shaped(32);
        let b = HarmonicSurfaceBasis::new(&g).unwrap();
        let (q, _) = avg_windings(&g, &b, &b.gamma_p_cross_n);
        assert!((q.abs() * g.area - 1.0).abs() < 1e-6);
    }

    #[test]
    fn realized_currents_are_divergence_free_and_linear() {
        let g = shaped(32);
        let b = HarmonicSurfaceBasis::new(&g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let c = SurfaceCurrent { stream_coeffs: random_series(&mut rng, 5), alpha: 0.7, beta: -0.3 };
        let j = c.realize(&g, &b);
        assert!(surface_divergence(&g, &j).iter().all(|d| d.abs() < 1e-8));
        assert!(j.max_normal_component(&g) < 1e-10);
        assert_eq!(SurfaceCurrent::default().realize(&g, &b).max_norm(), 0.0);
        let only_alpha = SurfaceCurrent { alpha: 1.0, ..Default::default() }.realize(&g, &b);
        assert_eq!(only_alpha, b.gamma_t_cross_n);
        // Q̄ sees only β.
        let (q, _) = avg_windings(&g, &b, &j);
        let (q1, _) = avg_windings(&g, &b, &b.gamma_p_cross_n);
        assert!((q - c.beta * q1).abs() < 1e-8);
    }

    #[test]
    fn nodal_currents_decompose_back_into_stream_form() {
        let grid = shaped(32);
        let basis = HarmonicSurfaceBasis::new(&grid).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let original = SurfaceCurrent { stream_coeffs: random_series(&mut rng, 4), alpha: 0.7, beta: -1.3 };
        let j = original.realize(&grid, &basis);
        let (back, mismatch) = SurfaceCurrent::from_nodal(&grid, &basis, &j).unwrap();
        assert!(mismatch < 1e-9, "{mismatch}");
        assert!((back.alpha - 0.7).abs() < 1e-9 && (back.beta + 1.3).abs() < 1e-9);
        let (a, b) = (original.stream_coeffs.sample(&grid).0, back.stream_coeffs.sample(&grid).0);
        let err: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        assert!(SurfaceCurrent::from_nodal(&grid, &basis, &j[1..]).is_err());
    }

    #[test]
    fn hodge_orthogonality() {
        let g = shaped(24);
        let b = HarmonicSurfaceBasis::new(&g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let s = random_series(&mut rng, 4);
            let (_, ft, fp) = s.sample(&g);
            let j = rotated_gradient_from_partials(&g, &ft, &fp);
            for gamma in [&b.gamma_p, &b.gamma_t] {
                let ip: f64 = (0..g.len()).map(|k| vec3::dot(j[k], gamma[k]) * g.weights[k]).sum();
                assert!(ip.abs() < 1e-7 * j.l2_norm(&g) * gamma.l2_norm(&g));
            }
        }
    }

    #[test]
    fn poisson_solve_inverts_laplacian() {
        let g = shaped(24);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (u, _, _) = random_series(&mut rng, 3).sample(&g);
        let mut u = u;
        let m = g.mean(&u);
        u.iter_mut().for_each(|x| *x -= m);
        let rhs = laplace_beltrami(&g, &u);
        let sol = solve_surface_poisson(&g, &rhs, 1e-12).unwrap();
        for (a, b) in sol.iter().zip(&u) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mode_enumeration_is_ordered_and_unique() {
        let modes = fourier_modes_by_degree(49);
        assert_eq!(modes.len(), 49);
        let degrees: Vec<i32> = modes.iter().map(|m| m.m.abs() + m.n.abs()).collect();
        assert!(degrees.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(&degrees[..4], &[1, 1, 1, 1]);
        let mut seen = std::collections::HashSet::new();
        assert!(modes.iter().all(|m| seen.insert((m.m, m.n, m.kind as u8))));
    }
}
