//! Grids, spectral kernels, finite differences and time steppers.

mod etdrk4;
pub mod fd;
mod grid;
mod mat2;
mod ode;
mod spectral;

pub use etdrk4::{etdrk4_step, Etdrk4, Scheme, Stepper};
pub use grid::Grid;
pub use mat2::{det2, Mat2};
pub use ode::{magnus4_step, rk4_matrix, rk4_matrix_staged, rk4_step, Axis, Mat2Path, MatPair, OdeState, Stage, DET_DRIFT_PER_STEP};
pub use spectral::{antiderivative_zero_mean, spectral_derivative, Spectral, MEAN_TOLERANCE, NOISE_FLOOR};

pub use rustfft::num_complex::Complex64;

pub(crate) use spectral::tail_ratio_hat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("mean {mean:e} exceeds tolerance {tolerance:e}; input is outside the range of the derivative")]
    MeanNotZero { mean: f64, tolerance: f64 },
    #[error("step {step} rejected: determinant drift {drift:e}")]
    StepRejected { step: usize, drift: f64 },
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    CflRejected { dt: f64, bound: f64 },
    #[error("sample count {got} does not match grid size {want}")]
    LengthMismatch { got: usize, want: usize },
}
