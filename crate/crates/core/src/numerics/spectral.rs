//! Fourier kernels on a periodic [`Grid`]: differentiation, zero-mean
//! antiderivative, band-limited interpolation and the 2/3 dealiasing filter.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Grid, NumericsError};

/// Relative tolerance on the mean for [`Spectral::antiderivative_zero_mean`].
pub const MEAN_TOLERANCE: f64 = 1e-9;

/// Fourier coefficients below this fraction of the largest are treated as round-off.
pub const NOISE_FLOOR: f64 = 1e-14;

/// FFT plans and wavenumbers for one grid. Cheap to clone; plans are shared.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        Spectral {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k: grid.wavenumbers(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        assert_eq!(f.len(), self.grid.n(), "sample count does not match grid");
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse(&self, mut hat: Vec<Complex64>) -> Vec<f64> {
        let scale = 1.0 / self.grid.n() as f64;
        self.inverse.process(&mut hat);
        hat.iter().map(|c| c.re * scale).collect()
    }

    /// Multiplier `(ik)^order`; the Nyquist mode is dropped for odd orders.
    pub fn derivative_symbol(&self, order: u32) -> Vec<Complex64> {
        let n = self.grid.n();
        self.k
            .iter()
            .enumerate()
            .map(|(m, &k)| {
                if order % 2 == 1 && m == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k).powu(order)
                }
            })
            .collect()
    }

    pub fn derivative_hat(&self, hat: &[Complex64], order: u32) -> Vec<f64> {
        if order == 0 {
            return self.inverse(hat.to_vec());
        }
        let sym = self.derivative_symbol(order);
        let buf = hat.iter().zip(&sym).map(|(a, s)| a * s).collect();
        self.inverse(buf)
    }

    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        if order == 0 {
            return f.to_vec();
        }
        self.derivative_hat(&self.forward(f), order)
    }

    /// Derivatives of orders `0..=max_order`, sharing one forward transform.
    pub fn jets(&self, f: &[f64], max_order: u32) -> Vec<Vec<f64>> {
        let hat = self.forward(f);
        (0..=max_order)
            .map(|o| if o == 0 { f.to_vec() } else { self.derivative_hat(&hat, o) })
            .collect()
    }

    /// The unique zero-mean primitive of `f`.
    pub fn antiderivative_zero_mean(&self, f: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let n = self.grid.n();
        let mean = f.iter().sum::<f64>() / n as f64;
        let sup = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tolerance = MEAN_TOLERANCE * sup;
        if mean.abs() > tolerance {
            return Err(NumericsError::MeanNotZero { mean, tolerance });
        }
        Ok(self.primitive_of_oscillation(f))
    }

    /// Zero-mean primitive of `f − mean(f)`, without checking the mean.
    pub fn primitive_of_oscillation(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let mut hat = self.forward(f);
        for (m, h) in hat.iter_mut().enumerate() {
            if m == 0 || m == n / 2 {
                *h = Complex64::new(0.0, 0.0);
            } else {
                *h /= Complex64::new(0.0, self.k[m]);
            }
        }
        self.inverse(hat)
    }

    /// Zero out round-off level modes (below [`NOISE_FLOOR`] of the peak), so
    /// that high derivatives do not amplify them.
    pub fn denoise(&self, hat: &mut [Complex64]) {
        let peak = hat.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        for c in hat.iter_mut() {
            if c.norm() < NOISE_FLOOR * peak {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Forward transform followed by [`Spectral::denoise`].
    pub fn forward_clean(&self, f: &[f64]) -> Vec<Complex64> {
        let mut hat = self.forward(f);
        self.denoise(&mut hat);
        hat
    }

    /// Zero out modes above the 2/3 cutoff (in place, Fourier space).
    pub fn dealias(&self, hat: &mut [Complex64]) {
        let n = self.grid.n() as i64;
        let cut = n / 3;
        for (m, h) in hat.iter_mut().enumerate() {
            let m = m as i64;
            let j = if m < n / 2 { m } else { m - n };
            if j.abs() > cut {
                *h = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Ratio of the largest coefficient above the 2/3 cutoff to the largest
    /// coefficient overall; 0 for the zero function.
    pub fn tail_ratio(&self, f: &[f64]) -> f64 {
        let hat = self.forward(f);
        tail_ratio_hat(&hat)
    }

    /// Band-limited resampling onto `factor·n` equispaced points.
    pub fn refine(&self, f: &[f64], factor: usize) -> Vec<f64> {
        if factor == 1 {
            return f.to_vec();
        }
        let n = self.grid.n();
        let big = n * factor;
        let hat = self.forward(f);
        let mut padded = vec![Complex64::new(0.0, 0.0); big];
        for m in 0..n / 2 {
            padded[m] = hat[m];
        }
        for m in 1..n / 2 {
            padded[big - m] = hat[n - m];
        }
        // split the Nyquist coefficient symmetrically
        let nyq = hat[n / 2] * 0.5;
        padded[n / 2] = nyq;
        padded[big - n / 2] = nyq;
        let mut planner = FftPlanner::new();
        let inv = planner.plan_fft_inverse(big);
        inv.process(&mut padded);
        let scale = 1.0 / n as f64;
        padded.iter().map(|c| c.re * scale).collect()
    }

    /// Evaluate the trigonometric interpolant of `hat` at an arbitrary point.
    pub fn eval_at(&self, hat: &[Complex64], x: f64) -> f64 {
        let n = self.grid.n();
        let s = x - self.grid.origin();
        let mut acc = hat[0].re;
        for m in 1..n / 2 {
            let phase = Complex64::from_polar(1.0, self.k[m] * s);
            acc += 2.0 * (hat[m] * phase).re;
        }
        let nyq = self.k[n / 2];
        acc += hat[n / 2].re * (nyq * s).cos();
        acc / n as f64
    }
}

pub(crate) fn tail_ratio_hat(hat: &[Complex64]) -> f64 {
    let n = hat.len() as i64;
    let cut = n / 3;
    let mut peak = 0.0_f64;
    let mut tail = 0.0_f64;
    for (m, h) in hat.iter().enumerate() {
        let m = m as i64;
        let j = if m < n / 2 { m } else { m - n };
        let a = h.norm();
        peak = peak.max(a);
        if j.abs() > cut {
            tail = tail.max(a);
        }
    }
    if peak == 0.0 {
        0.0
    } else {
        tail / peak
    }
}

/// `order`-th spectral derivative of periodic samples on `grid`.
pub fn spectral_derivative(grid: &Grid, f: &[f64], order: u32) -> Vec<f64> {
    Spectral::new(*grid).derivative(f, order)
}

/// Zero-mean primitive of periodic samples on `grid`.
pub fn antiderivative_zero_mean(grid: &Grid, f: &[f64]) -> Result<Vec<f64>, NumericsError> {
    Spectral::new(*grid).antiderivative_zero_mean(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn second_derivative_of_sine() {
        let g = grid(64);
        let f: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let d2 = spectral_derivative(&g, &f, 2);
        let want: Vec<f64> = f.iter().map(|v| -v).collect();
        assert!(max_diff(&d2, &want) < 1e-12);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = grid(32);
        let f = vec![3.5; 32];
        for order in 1..5 {
            let d = spectral_derivative(&g, &f, order);
            assert!(d.iter().all(|v| v.abs() < 1e-12), "order {order}");
        }
    }

    #[test]
    fn sech_squared_third_derivative() {
        // d³/dx³ sech²x = 8 sech²x tanh x (2 - 3 sech²x) ... computed by hand:
        // f = s², f' = -2 s² t, f'' = 4 s² t² - 2 s⁴, f''' = -8 s² t³ + 16 s⁴ t
        let g = Grid::centered(1024, 60.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| 1.0 / x.cosh().powi(2)).collect();
        let d3 = spectral_derivative(&g, &f, 3);
        let want: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&x| {
                let s2 = 1.0 / x.cosh().powi(2);
                let t = x.tanh();
                -8.0 * s2 * t.powi(3) + 16.0 * s2 * s2 * t
            })
            .collect();
        assert!(max_diff(&d3, &want) < 1e-8);
    }

    #[test]
    fn antiderivative_examples() {
        let g = grid(64);
        let x = g.nodes();
        let cos: Vec<f64> = x.iter().map(|x| x.cos()).collect();
        let sin: Vec<f64> = x.iter().map(|x| x.sin()).collect();
        assert!(max_diff(&antiderivative_zero_mean(&g, &cos).unwrap(), &sin) < 1e-13);
        let s2: Vec<f64> = x.iter().map(|x| (2.0 * x).sin()).collect();
        let want: Vec<f64> = x.iter().map(|x| -(2.0 * x).cos() / 2.0).collect();
        assert!(max_diff(&antiderivative_zero_mean(&g, &s2).unwrap(), &want) < 1e-13);
        let shifted: Vec<f64> = cos.iter().map(|v| v + 0.1).collect();
        assert!(matches!(
            antiderivative_zero_mean(&g, &shifted),
            Err(NumericsError::MeanNotZero { .. })
        ));
    }

    #[test]
    fn refine_and_eval_match_analytic() {
        let g = grid(32);
        let f: Vec<f64> = g.nodes().iter().map(|x| (3.0 * x).cos() + x.sin()).collect();
        let sp = Spectral::new(g);
        let fine = sp.refine(&f, 4);
        for (i, v) in fine.iter().enumerate() {
            let x = i as f64 * g.dx() / 4.0;
            assert!((v - ((3.0 * x).cos() + x.sin())).abs() < 1e-13);
        }
        let hat = sp.forward(&f);
        let x = 0.123;
        assert!((sp.eval_at(&hat, x) - ((3.0 * x).cos() + x.sin())).abs() < 1e-13);
    }

    #[test]
    fn tail_ratio_detects_rough_data() {
        let g = grid(64);
        let smooth: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        assert!(Spectral::new(g).tail_ratio(&smooth) < 1e-12);
        let rough: Vec<f64> = (0..64).map(|m| if m % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(Spectral::new(g).tail_ratio(&rough) > 0.5);
    }
}
