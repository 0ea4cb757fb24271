//! FFT-based differentiation and resampling on the periodic `(θ, φ)` grid.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Spectral {
    n_theta: usize,
    n_phi: usize,
    fwd_theta: Arc<dyn Fft<f64>>,
    inv_theta: Arc<dyn Fft<f64>>,
    fwd_phi: Arc<dyn Fft<f64>>,
    inv_phi: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("n_theta", &self.n_theta).field("n_phi", &self.n_phi).finish()
    }
}

/// Signed integer wavenumber of FFT bin `k`; the Nyquist bin maps to `n/2`.
#[inline]
pub fn wavenumber(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

impl Spectral {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_theta,
            n_phi,
            fwd_theta: planner.plan_fft_forward(n_theta),
            inv_theta: planner.plan_fft_inverse(n_theta),
            fwd_phi: planner.plan_fft_forward(n_phi),
            inv_phi: planner.plan_fft_inverse(n_phi),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    /// `∂f/∂θ` with the Nyquist mode dropped, so the operator is exactly
    /// skew-adjoint under the uniform trapezoid rule.
    pub fn d_theta(&self, f: &[f64]) -> Vec<f64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        assert_eq!(f.len(), nt * np);
        let mut out = vec![0.0; f.len()];
        let mut buf = vec![Complex64::default(); nt];
        for j in 0..np {
            for i in 0..nt {
                buf[i] = Complex64::new(f[i * np + j], 0.0);
            }
            self.fwd_theta.process(&mut buf);
            differentiate(&mut buf);
            self.inv_theta.process(&mut buf);
            for i in 0..nt {
                out[i * np + j] = buf[i].re / nt as f64;
            }
        }
        out
    }

    /// `∂f/∂φ`, see [`Spectral::d_theta`].
    pub fn d_phi(&self, f: &[f64]) -> Vec<f64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        assert_eq!(f.len(), nt * np);
        let mut out = vec![0.0; f.len()];
        let mut buf = vec![Complex64::default(); np];
        for i in 0..nt {
            for j in 0..np {
                buf[j] = Complex64::new(f[i * np + j], 0.0);
            }
            self.fwd_phi.process(&mut buf);
            differentiate(&mut buf);
            self.inv_phi.process(&mut buf);
            for j in 0..np {
                out[i * np + j] = buf[j].re / np as f64;
            }
        }
        out
    }

    /// Forward 2D transform (unnormalized).
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let mut data: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for row in data.chunks_mut(np) {
            self.fwd_phi.process(row);
        }
        let mut col = vec![Complex64::default(); nt];
        for j in 0..np {
            for i in 0..nt {
                col[i] = data[i * np + j];
            }
            self.fwd_theta.process(&mut col);
            for i in 0..nt {
                data[i * np + j] = col[i];
            }
        }
        data
    }

    /// Inverse of [`Spectral::forward`], real part, normalized.
    pub fn inverse(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let mut col = vec![Complex64::default(); nt];
        for j in 0..np {
            for i in 0..nt {
                col[i] = data[i * np + j];
            }
            self.inv_theta.process(&mut col);
            for i in 0..nt {
                data[i * np + j] = col[i];
            }
        }
        for row in data.chunks_mut(np) {
            self.inv_phi.process(row);
        }
        let scale = 1.0 / (nt * np) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    /// Multiplies the 2D spectrum by `symbol(k_θ, k_φ)`.
    pub fn apply_symbol(&self, f: &[f64], symbol: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let mut data = self.forward(f);
        for i in 0..nt {
            let kt = wavenumber(i, nt);
            for j in 0..np {
                data[i * np + j] *= symbol(kt, wavenumber(j, np));
            }
        }
        self.inverse(data)
    }

    /// Trigonometric interpolation onto a finer `(nt_out, np_out)` grid.
    ///
    /// Nyquist modes of the input are split evenly between `±n/2` so real
    /// input stays real.
    pub fn upsample(&self, f: &[f64], nt_out: usize, np_out: usize) -> Vec<f64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        assert!(nt_out >= nt && np_out >= np);
        let spec = self.forward(f);
        let mut out = vec![Complex64::default(); nt_out * np_out];
        let map = |k: usize, n: usize, n_out: usize| -> Vec<(usize, f64)> {
            let kn = wavenumber(k, n) as i64;
            let wrap = |kk: i64| kk.rem_euclid(n_out as i64) as usize;
            if n.is_multiple_of(2) && k == n / 2 && n_out > n {
                vec![(wrap(kn), 0.5), (wrap(-kn), 0.5)]
            } else {
                vec![(wrap(kn), 1.0)]
            }
        };
        for i in 0..nt {
            for (io, si) in map(i, nt, nt_out) {
                for j in 0..np {
                    for (jo, sj) in map(j, np, np_out) {
                        out[io * np_out + jo] += spec[i * np + j] * (si * sj);
                    }
                }
            }
        }
        let scale = (nt_out * np_out) as f64 / (nt * np) as f64;
        Spectral::new(nt_out, np_out).inverse(out).into_iter().map(|x| x * scale).collect()
    }
}

fn differentiate(buf: &mut [Complex64]) {
    let n = buf.len();
    for (k, c) in buf.iter_mut().enumerate() {
        if n.is_multiple_of(2) && k == n / 2 {
            *c = Complex64::default();
        } else {
            *c *= Complex64::new(0.0, wavenumber(k, n));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample(nt: usize, np: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(nt * np);
        for i in 0..nt {
            for j in 0..np {
                v.push(f(2.0 * PI * i as f64 / nt as f64, 2.0 * PI * j as f64 / np as f64));
            }
        }
        v
    }

    #[test]
    fn derivatives_of_trig_polynomials_are_exact() {
        let s = Spectral::new(16, 12);
        let f = sample(16, 12, |t, p| (3.0 * t - 2.0 * p).sin() + (t + 5.0 * p).cos());
        let dt = sample(16, 12, |t, p| 3.0 * (3.0 * t - 2.0 * p).cos() - (t + 5.0 * p).sin());
        let dp = sample(16, 12, |t, p| -2.0 * (3.0 * t - 2.0 * p).cos() - 5.0 * (t + 5.0 * p).sin());
        for (a, b) in s.d_theta(&f).iter().zip(&dt) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s.d_phi(&f).iter().zip(&dp) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_is_skew_adjoint() {
        let s = Spectral::new(8, 10);
        let a: Vec<f64> = (0..80).map(|k| ((k * 37 % 11) as f64).sin()).collect();
        let b: Vec<f64> = (0..80).map(|k| ((k * 13 % 7) as f64).cos()).collect();
        let lhs: f64 = s.d_theta(&a).iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(s.d_theta(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs + rhs).abs() < 1e-12);
        let lhs: f64 = s.d_phi(&a).iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(s.d_phi(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs + rhs).abs() < 1e-12);
    }

    #[test]
    fn upsampling_reproduces_band_limited_functions() {
        let f = |t: f64, p: f64| (2.0 * t + p).cos() + 0.5 * (4.0 * p).sin() + 0.25 * (4.0 * t).cos();
        let coarse = sample(8, 10, f);
        let fine = Spectral::new(8, 10).upsample(&coarse, 24, 20);
        let exact = sample(24, 20, f);
        for (a, b) in fine.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
