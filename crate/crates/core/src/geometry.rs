//! Fourier-parametrized toroidal surfaces and the quadrature grids built on them.
//!
//! The embedding is `x(θ, φ) = (R cos φ, R sin φ, Z)` with
//! `R = Σ R_mn cos(mθ − n·nfp·φ)` and `Z = Σ Z_mn sin(mθ − n·nfp·φ)`.
//! Both angles run over `[0, 2π)` on every grid, i.e. grids always cover the
//! full torus rather than a single field period.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::spectral::Spectral;
use crate::vec3::{self, Vec3};

/// Grid used to validate a freshly built surface.
const PROBE_GRID: usize = 64;

/// Coefficient table as ingested from JSON: `(m, n, value)` triples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    #[serde(default = "default_nfp")]
    pub nfp: u32,
    pub r_coeffs: Vec<(i32, i32, f64)>,
    #[serde(default)]
    pub z_coeffs: Vec<(i32, i32, f64)>,
}

fn default_nfp() -> u32 {
    1
}

impl CoefficientTable {
    /// Circular torus of revolution with major radius `major` and minor radius `minor`.
    pub fn circular(major: f64, minor: f64) -> Self {
        Self { nfp: 1, r_coeffs: vec![(0, 0, major), (1, 0, minor)], z_coeffs: vec![(1, 0, minor)] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Mode {
    m: f64,
    n: f64,
    value: f64,
}

/// Position and coordinate tangents at one parameter point.
#[derive(Clone, Copy, Debug)]
pub struct SurfacePoint {
    pub x: Vec3,
    pub e_theta: Vec3,
    pub e_phi: Vec3,
}

#[derive(Clone, Debug)]
pub struct FourierTorus {
    nfp: u32,
    r_modes: Vec<Mode>,
    z_modes: Vec<Mode>,
    /// `+1` if `e_θ × e_φ` points out of the enclosed volume, `-1` otherwise.
    orientation: f64,
    table: CoefficientTable,
}

impl FourierTorus {
    pub fn new(table: &CoefficientTable) -> Result<Self> {
        if table.nfp == 0 {
            return Err(Error::InvalidCoefficients("nfp must be positive".into()));
        }
        if table.r_coeffs.is_empty() {
            return Err(Error::InvalidCoefficients("r_coeffs is empty".into()));
        }
        let r00: f64 = table.r_coeffs.iter().filter(|(m, n, _)| *m == 0 && *n == 0).map(|c| c.2).sum();
        if r00 <= 0.0 {
            return Err(Error::InvalidCoefficients("the (0,0) radius coefficient must be positive".into()));
        }
        for &(m, _, v) in table.r_coeffs.iter().chain(&table.z_coeffs) {
            if m < 0 {
                return Err(Error::InvalidCoefficients(format!(
                    "poloidal mode numbers must be non-negative (got m = {m})"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidCoefficients("non-finite coefficient".into()));
            }
        }
        let nfp = table.nfp as f64;
        let to_modes = |c: &[(i32, i32, f64)]| {
            c.iter()
                .filter(|c| c.2 != 0.0)
                .map(|&(m, n, value)| Mode { m: m as f64, n: n as f64 * nfp, value })
                .collect::<Vec<_>>()
        };
        let mut torus = Self {
            nfp: table.nfp,
            r_modes: to_modes(&table.r_coeffs),
            z_modes: to_modes(&table.z_coeffs),
            orientation: 1.0,
            table: table.clone(),
        };
        torus.validate_and_orient()?;
        Ok(torus)
    }

    pub fn circular(major: f64, minor: f64) -> Result<Self> {
        Self::new(&CoefficientTable::circular(major, minor))
    }

    fn validate_and_orient(&mut self) -> Result<()> {
        let n = PROBE_GRID;
        let h = 2.0 * PI / n as f64;
        let mut signed_volume = 0.0;
        let mut scale: f64 = 0.0;
        let mut min_sqrt_g = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let (theta, phi) = (i as f64 * h, j as f64 * h);
                let (r, _) = self.cylindrical(theta, phi);
                if r <= 0.0 {
                    return Err(Error::AxisIntersection { radius: r, theta, phi });
                }
                let p = self.eval(theta, phi);
                let an = vec3::cross(p.e_theta, p.e_phi);
                let sg = vec3::norm(an);
                scale = scale.max(vec3::norm(p.e_theta) * vec3::norm(p.e_phi));
                if sg < min_sqrt_g.0 {
                    min_sqrt_g = (sg, theta, phi);
                }
                signed_volume += vec3::dot(an, p.x);
            }
        }
        if !(min_sqrt_g.0 > 1e-10 * scale) {
            return Err(Error::NonEmbedded { sqrt_g: min_sqrt_g.0, theta: min_sqrt_g.1, phi: min_sqrt_g.2 });
        }
        self.orientation = if signed_volume >= 0.0 { 1.0 } else { -1.0 };
        Ok(())
    }

    pub fn nfp(&self) -> u32 {
        self.nfp
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// `(R, Z)` at a parameter point.
    pub fn cylindrical(&self, theta: f64, phi: f64) -> (f64, f64) {
        let r = self.r_modes.iter().map(|md| md.value * (md.m * theta - md.n * phi).cos()).sum();
        let z = self.z_modes.iter().map(|md| md.value * (md.m * theta - md.n * phi).sin()).sum();
        (r, z)
    }

    pub fn eval(&self, theta: f64, phi: f64) -> SurfacePoint {
        let (mut r, mut r_t, mut r_p) = (0.0, 0.0, 0.0);
        for md in &self.r_modes {
            let (s, c) = (md.m * theta - md.n * phi).sin_cos();
            r += md.value * c;
            r_t -= md.value * md.m * s;
            r_p += md.value * md.n * s;
        }
        let (mut z, mut z_t, mut z_p) = (0.0, 0.0, 0.0);
        for md in &self.z_modes {
            let (s, c) = (md.m * theta - md.n * phi).sin_cos();
            z += md.value * s;
            z_t += md.value * md.m * c;
            z_p -= md.value * md.n * c;
        }
        let (sp, cp) = phi.sin_cos();
        SurfacePoint {
            x: [r * cp, r * sp, z],
            e_theta: [r_t * cp, r_t * sp, z_t],
            e_phi: [r_p * cp - r * sp, r_p * sp + r * cp, z_p],
        }
    }

    /// Outward normal scaled by the area element, `±(e_θ × e_φ)`.
    #[inline]
    pub fn area_normal(&self, p: &SurfacePoint) -> Vec3 {
        vec3::scale(vec3::cross(p.e_theta, p.e_phi), self.orientation)
    }

    /// Cross-section centre `(R, Z)` at toroidal angle `φ` (the `m = 0` part).
    pub fn axis(&self, phi: f64) -> (f64, f64) {
        let r = self.r_modes.iter().filter(|md| md.m == 0.0).map(|md| md.value * (md.n * phi).cos()).sum();
        let z = self.z_modes.iter().filter(|md| md.m == 0.0).map(|md| -md.value * (md.n * phi).sin()).sum();
        (r, z)
    }

    pub fn axis_point(&self, phi: f64) -> Vec3 {
        let (r, z) = self.axis(phi);
        [r * phi.cos(), r * phi.sin(), z]
    }

    /// Point of the solid region obtained by scaling the cross-section toward
    /// the axis by `minor_scale * s`.
    pub fn scaled_point(&self, s: f64, theta: f64, phi: f64, minor_scale: f64) -> Vec3 {
        let (ra, za) = self.axis(phi);
        let (r, z) = self.cylindrical(theta, phi);
        let f = s * minor_scale;
        let rr = ra + f * (r - ra);
        [rr * phi.cos(), rr * phi.sin(), za + f * (z - za)]
    }

    /// The `(0,0)` radius coefficient.
    pub fn major_radius(&self) -> f64 {
        self.table.r_coeffs.iter().filter(|(m, n, _)| *m == 0 && *n == 0).map(|c| c.2).sum()
    }

    /// Largest distance from the axis circle to the surface in any cross-section.
    pub fn max_minor_radius(&self) -> f64 {
        let n = 64;
        let mut a: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (t, p) = (2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / n as f64);
                let (ra, za) = self.axis(p);
                let (r, z) = self.cylindrical(t, p);
                a = a.max(((r - ra).powi(2) + (z - za).powi(2)).sqrt());
            }
        }
        a
    }

    /// Smallest distance from the axis circle to the surface in any cross-section.
    pub fn min_minor_radius(&self) -> f64 {
        let n = 64;
        let mut a = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let (t, p) = (2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / n as f64);
                let (ra, za) = self.axis(p);
                let (r, z) = self.cylindrical(t, p);
                a = a.min(((r - ra).powi(2) + (z - za).powi(2)).sqrt());
            }
        }
        a
    }
}

/// Nodes, normals, frames and trapezoid weights on a uniform `(θ, φ)` grid.
///
/// Node `k` sits at `(θ_i, φ_j)` with `k = i * n_phi + j`.
#[derive(Debug)]
pub struct SurfaceGrid {
    pub torus: FourierTorus,
    pub n_theta: usize,
    pub n_phi: usize,
    pub h_theta: f64,
    pub h_phi: f64,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub e_theta: Vec<Vec3>,
    pub e_phi: Vec<Vec3>,
    pub sqrt_g: Vec<f64>,
    /// Covariant metric `(g_θθ, g_θφ, g_φφ)`.
    pub metric: Vec<[f64; 3]>,
    /// Contravariant metric `(g^θθ, g^θφ, g^φφ)`.
    pub inv_metric: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub area: f64,
    pub spectral: Spectral,
}

impl SurfaceGrid {
    pub fn new(torus: &FourierTorus, n_theta: usize, n_phi: usize) -> Result<Arc<Self>> {
        for (name, n) in [("n_theta", n_theta), ("n_phi", n_phi)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be even and >= 8")));
            }
        }
        let h_theta = 2.0 * PI / n_theta as f64;
        let h_phi = 2.0 * PI / n_phi as f64;
        let size = n_theta * n_phi;
        let mut g = Self {
            torus: torus.clone(),
            n_theta,
            n_phi,
            h_theta,
            h_phi,
            points: Vec::with_capacity(size),
            normals: Vec::with_capacity(size),
            e_theta: Vec::with_capacity(size),
            e_phi: Vec::with_capacity(size),
            sqrt_g: Vec::with_capacity(size),
            metric: Vec::with_capacity(size),
            inv_metric: Vec::with_capacity(size),
            weights: Vec::with_capacity(size),
            area: 0.0,
            spectral: Spectral::new(n_theta, n_phi),
        };
        for i in 0..n_theta {
            for j in 0..n_phi {
                let (theta, phi) = (i as f64 * h_theta, j as f64 * h_phi);
                let p = torus.eval(theta, phi);
                let an = torus.area_normal(&p);
                let sg = vec3::norm(an);
                if !(sg > 0.0) {
                    return Err(Error::NonEmbedded { sqrt_g: sg, theta, phi });
                }
                let gtt = vec3::dot(p.e_theta, p.e_theta);
                let gtp = vec3::dot(p.e_theta, p.e_phi);
                let gpp = vec3::dot(p.e_phi, p.e_phi);
                let det = gtt * gpp - gtp * gtp;
                g.points.push(p.x);
                g.normals.push(vec3::scale(an, 1.0 / sg));
                g.e_theta.push(p.e_theta);
                g.e_phi.push(p.e_phi);
                g.sqrt_g.push(sg);
                g.metric.push([gtt, gtp, gpp]);
                g.inv_metric.push([gpp / det, -gtp / det, gtt / det]);
                g.weights.push(sg * h_theta * h_phi);
            }
        }
        g.area = g.weights.iter().sum();
        Ok(Arc::new(g))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.h_theta
    }

    pub fn phi(&self, j: usize) -> f64 {
        j as f64 * self.h_phi
    }

    /// Enclosed volume by the divergence theorem, `(1/3) Σ N·x w`.
    pub fn enclosed_volume(&self) -> f64 {
        self.points.iter().zip(&self.normals).zip(&self.weights).map(|((x, n), w)| vec3::dot(*x, *n) * w).sum::<f64>()
            / 3.0
    }

    /// Largest physical node spacing along either coordinate direction.
    pub fn max_spacing(&self) -> f64 {
        self.metric.iter().map(|m| (m[0].sqrt() * self.h_theta).max(m[2].sqrt() * self.h_phi)).fold(0.0, f64::max)
    }

    /// Distance from `x` to the nearest grid node.
    pub fn nearest_node_distance(&self, x: Vec3) -> f64 {
        self.points.iter().map(|p| vec3::dist(*p, x)).fold(f64::INFINITY, f64::min)
    }

    /// Weighted mean `Σ f w / Σ w`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() / self.area
    }

    /// Weighted L² inner product on the surface.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }
}

/// Solid region bounded by a (possibly scaled) copy of a Fourier surface,
/// with Gauss-Legendre nodes in the radial coordinate and trapezoid nodes
/// in both angles.
#[derive(Clone, Debug)]
pub struct VolumeGrid {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub n_s: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub minor_scale: f64,
}

impl VolumeGrid {
    pub fn new(torus: &FourierTorus, n_s: usize, n_theta: usize, n_phi: usize, minor_scale: f64) -> Result<Self> {
        if !(minor_scale > 0.0 && minor_scale <= 1.0) {
            return Err(Error::InvalidArgument(format!("minor_scale = {minor_scale} must lie in (0, 1]")));
        }
        if n_s == 0 || n_theta == 0 || n_phi == 0 {
            return Err(Error::InvalidGrid("volume grid sizes must be positive".into()));
        }
        let (s_nodes, s_weights) = gauss_legendre_on(n_s, 0.0, 1.0);
        let ht = 2.0 * PI / n_theta as f64;
        let hp = 2.0 * PI / n_phi as f64;
        let c = minor_scale;
        let mut points = Vec::with_capacity(n_s * n_theta * n_phi);
        let mut weights = Vec::with_capacity(points.capacity());
        let mut sign = 0.0;
        for (&s, &ws) in s_nodes.iter().zip(&s_weights) {
            for i in 0..n_theta {
                for j in 0..n_phi {
                    let (theta, phi) = (i as f64 * ht, j as f64 * hp);
                    let (ra, za) = torus.axis(phi);
                    let p = torus.eval(theta, phi);
                    let (r, z) = torus.cylindrical(theta, phi);
                    let (sp, cp) = phi.sin_cos();
                    // ∂R/∂θ and ∂Z/∂θ from the Cartesian tangent.
                    let r_t = p.e_theta[0] * cp + p.e_theta[1] * sp;
                    let z_t = p.e_theta[2];
                    let rr = ra + s * c * (r - ra);
                    let jac = rr * s * c * c * ((r - ra) * z_t - (z - za) * r_t);
                    let sgn = jac.signum();
                    if jac == 0.0 || (sign != 0.0 && sgn != sign) {
                        return Err(Error::DegenerateCell { jacobian: jac, theta, phi });
                    }
                    sign = sgn;
                    points.push([rr * cp, rr * sp, za + s * c * (z - za)]);
                    weights.push(jac.abs() * ws * ht * hp);
                }
            }
        }
        Ok(Self { points, weights, n_s, n_theta, n_phi, minor_scale })
    }

    /// Arbitrary weighted points, e.g. user-supplied target samples. The
    /// structured sizes are left at zero.
    pub fn from_samples(points: Vec<Vec3>, weights: Vec<f64>, minor_scale: f64) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidGrid(format!("{} points with {} weights", points.len(), weights.len())));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidGrid("sample weights must be finite and non-negative".into()));
        }
        Ok(Self { points, weights, n_s: 0, n_theta: 0, n_phi: 0, minor_scale })
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A closed curve sampled uniformly in its parameter `t ∈ [0, 2π]`;
/// the last sample repeats the first.
#[derive(Clone, Debug)]
pub struct SampledCurve {
    pub points: Vec<Vec3>,
    /// `dx/dt` at each sample.
    pub tangents: Vec<Vec3>,
    pub dt: f64,
}

impl SampledCurve {
    pub fn from_fn(n: usize, f: impl Fn(f64) -> (Vec3, Vec3)) -> Self {
        let dt = 2.0 * PI / n as f64;
        let (mut points, mut tangents): (Vec<_>, Vec<_>) = (0..n).map(|k| f(k as f64 * dt)).unzip();
        points.push(points[0]);
        tangents.push(tangents[0]);
        Self { points, tangents, dt }
    }

    /// Number of distinct samples.
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Periodic trapezoid rule for `∮ v·dl`, `v` given at the distinct samples.
    pub fn circulation(&self, values: &[Vec3]) -> f64 {
        values.iter().zip(&self.tangents).take(self.len()).map(|(v, t)| vec3::dot(*v, *t)).sum::<f64>() * self.dt
    }

    /// `∮ field·dl` for a field evaluated at the curve samples.
    pub fn circulation_of(&self, field: impl Fn(Vec3) -> Vec3) -> f64 {
        let values: Vec<Vec3> = self.points[..self.len()].iter().map(|p| field(*p)).collect();
        self.circulation(&values)
    }
}

/// Poloidal (`φ = 0`) and toroidal (`θ = 0`) coordinate circles on the surface.
#[derive(Clone, Debug)]
pub struct ReferenceCurves {
    pub poloidal: SampledCurve,
    pub toroidal: SampledCurve,
}

impl ReferenceCurves {
    pub fn new(torus: &FourierTorus, samples: usize) -> Self {
        let poloidal = SampledCurve::from_fn(samples, |t| {
            let p = torus.eval(t, 0.0);
            (p.x, p.e_theta)
        });
        let toroidal = SampledCurve::from_fn(samples, |t| {
            let p = torus.eval(0.0, t);
            (p.x, p.e_phi)
        });
        Self { poloidal, toroidal }
    }

    /// Toroidal loop along the cross-section centres, which lies inside every
    /// scaled copy of the solid torus.
    pub fn axis_loop(torus: &FourierTorus, samples: usize) -> SampledCurve {
        SampledCurve::from_fn(samples, |t| {
            let eps = 1e-6;
            let a = torus.axis_point(t - eps);
            let b = torus.axis_point(t + eps);
            (torus.axis_point(t), vec3::scale(vec3::sub(b, a), 0.5 / eps))
        })
    }
}
