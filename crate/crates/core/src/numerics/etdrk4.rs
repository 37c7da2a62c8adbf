//! Time stepping for `v_t = L v + N(v)` in Fourier space, with `L` diagonal.
//!
//! ETDRK4 coefficients are computed by averaging over a circle of complex
//! points around each `h·L(k)`, which avoids the cancellation in the
//! `(e^z − 1 − z …)/z³` formulas for small `z`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{NumericsError, Spectral};

const CONTOUR_POINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Etdrk4,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "etdrk4" => Ok(Scheme::Etdrk4),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme '{other}' (expected etdrk4 or rk4)")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Etdrk4 => "etdrk4",
            Scheme::Rk4 => "rk4",
        })
    }
}

/// Precomputed ETDRK4 coefficients for one linear symbol and step size.
#[derive(Clone, Debug)]
pub struct Etdrk4 {
    dt: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl Etdrk4 {
    pub fn new(linear: &[Complex64], dt: f64) -> Self {
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let m = CONTOUR_POINTS as f64;
        let n = linear.len();
        let mut out = Etdrk4 {
            dt,
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for &l in linear {
            let hl = l * dt;
            out.e.push(hl.exp());
            out.e2.push((hl * 0.5).exp());
            let (mut q, mut f1, mut f2, mut f3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for r in &roots {
                let z = hl + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z * 0.5).exp() - 1.0) / z;
                f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                f2 += (2.0 + z + ez * (z - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            // the symbol is real or imaginary-dominated; keep the full complex average
            out.q.push(q * (dt / m));
            out.f1.push(f1 * (dt / m));
            out.f2.push(f2 * (dt / m));
            out.f3.push(f3 * (dt / m));
        }
        out
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, v: &[Complex64], mut nonlinear: impl FnMut(&[Complex64]) -> Vec<Complex64>) -> Vec<Complex64> {
        let nv = nonlinear(v);
        let a: Vec<Complex64> = (0..v.len()).map(|i| self.e2[i] * v[i] + self.q[i] * nv[i]).collect();
        let na = nonlinear(&a);
        let b: Vec<Complex64> = (0..v.len()).map(|i| self.e2[i] * v[i] + self.q[i] * na[i]).collect();
        let nb = nonlinear(&b);
        let c: Vec<Complex64> =
            (0..v.len()).map(|i| self.e2[i] * a[i] + self.q[i] * (nb[i] * 2.0 - nv[i])).collect();
        let nc = nonlinear(&c);
        (0..v.len())
            .map(|i| {
                self.e[i] * v[i] + nv[i] * self.f1[i] + (na[i] + nb[i]) * 2.0 * self.f2[i] + nc[i] * self.f3[i]
            })
            .collect()
    }
}

/// A fixed-step integrator for `v_t = L v + N(v)` in Fourier space.
#[derive(Clone, Debug)]
pub struct Stepper {
    scheme: Scheme,
    dt: f64,
    linear: Vec<Complex64>,
    etd: Option<Etdrk4>,
}

impl Stepper {
    pub fn new(scheme: Scheme, linear: Vec<Complex64>, dt: f64) -> Self {
        let etd = match scheme {
            Scheme::Etdrk4 => Some(Etdrk4::new(&linear, dt)),
            Scheme::Rk4 => None,
        };
        Stepper { scheme, dt, linear, etd }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, v: &[Complex64], mut nonlinear: impl FnMut(&[Complex64]) -> Vec<Complex64>) -> Vec<Complex64> {
        match &self.etd {
            Some(etd) => etd.step(v, nonlinear),
            None => {
                let h = self.dt;
                let mut rhs = |u: &[Complex64]| -> Vec<Complex64> {
                    let n = nonlinear(u);
                    u.iter().zip(&self.linear).zip(n).map(|((u, l), n)| l * u + n).collect()
                };
                let axpy = |u: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> {
                    u.iter().zip(k).map(|(u, k)| u + k * s).collect()
                };
                let k1 = rhs(v);
                let k2 = rhs(&axpy(v, &k1, 0.5 * h));
                let k3 = rhs(&axpy(v, &k2, 0.5 * h));
                let k4 = rhs(&axpy(v, &k3, h));
                (0..v.len())
                    .map(|i| v[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0))
                    .collect()
            }
        }
    }
}

/// One ETDRK4 step on real samples.
///
/// `nonlinear` maps real samples to real samples; `linear_symbol` is the
/// Fourier multiplier of the linear part. A step larger than `max_dt` is
/// rejected.
pub fn etdrk4_step(
    spectral: &Spectral,
    q: &[f64],
    mut nonlinear: impl FnMut(&[f64]) -> Vec<f64>,
    linear_symbol: &[Complex64],
    dt: f64,
    max_dt: f64,
) -> Result<Vec<f64>, NumericsError> {
    if dt > max_dt {
        return Err(NumericsError::CflRejected { dt, bound: max_dt });
    }
    let n = spectral.grid().n();
    if q.len() != n {
        return Err(NumericsError::LengthMismatch { got: q.len(), want: n });
    }
    let etd = Etdrk4::new(linear_symbol, dt);
    let v = spectral.forward(q);
    let next = etd.step(&v, |u| {
        let real = spectral.inverse(u.to_vec());
        spectral.forward(&nonlinear(&real))
    });
    Ok(spectral.inverse(next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    fn third_derivative_symbol(sp: &Spectral, c: f64) -> Vec<Complex64> {
        sp.derivative_symbol(3).into_iter().map(|s| s * c).collect()
    }

    #[test]
    fn zero_stays_zero() {
        let sp = Spectral::new(Grid::new(32, 2.0 * PI).unwrap());
        let sym = third_derivative_symbol(&sp, 0.25);
        let out = etdrk4_step(&sp, &[0.0; 32], |u| u.iter().map(|v| v * v).collect(), &sym, 0.1, 1.0).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_dispersion_is_exact() {
        // q_t = q_xxx/4 on sin x: q = sin(x − t/4)
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let sp = Spectral::new(g);
        let sym = third_derivative_symbol(&sp, 0.25);
        let mut q: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let dt = 0.05;
        for _ in 0..40 {
            q = etdrk4_step(&sp, &q, |u| vec![0.0; u.len()], &sym, dt, 1.0).unwrap();
        }
        let t = 40.0 * dt;
        for (x, v) in g.nodes().iter().zip(&q) {
            assert!((v - (x - t / 4.0).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let sp = Spectral::new(Grid::new(16, 1.0).unwrap());
        let sym = vec![Complex64::default(); 16];
        let err = etdrk4_step(&sp, &[0.0; 16], |u| u.to_vec(), &sym, 0.5, 0.1).unwrap_err();
        assert!(matches!(err, NumericsError::CflRejected { .. }));
    }

    fn logistic_error(scheme: Scheme, steps: usize) -> f64 {
        // scalar test v' = -v + v² on a single mode: exact v = 1/(1 + (1/v0 − 1)e^t)
        let lin = vec![Complex64::new(-1.0, 0.0)];
        let t = 1.0;
        let st = Stepper::new(scheme, lin, t / steps as f64);
        let mut v = vec![Complex64::new(0.5, 0.0)];
        for _ in 0..steps {
            v = st.step(&v, |u| u.iter().map(|z| z * z).collect());
        }
        let exact = 1.0 / (1.0 + (1.0 / 0.5 - 1.0) * t.exp());
        (v[0].re - exact).abs()
    }

    #[test]
    fn observed_order_is_four() {
        for scheme in [Scheme::Etdrk4, Scheme::Rk4] {
            let e1 = logistic_error(scheme, 10);
            let e2 = logistic_error(scheme, 20);
            let order = (e1 / e2).log2();
            assert!(order >= 3.8, "{scheme}: observed order {order}");
        }
    }
}
