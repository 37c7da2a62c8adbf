use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use super::{Mat2, NumericsError};

/// Per-step determinant drift above which an SL(2) integration is rejected,
/// relative to `max(1, |g|²)`.
pub const DET_DRIFT_PER_STEP: f64 = 1e-10;

/// Which RK4 stage a right-hand side is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Start,
    Mid,
    End,
}

impl Stage {
    /// Offset of the stage within the step, in units of the step size.
    pub fn fraction(self) -> f64 {
        match self {
            Stage::Start => 0.0,
            Stage::Mid => 0.5,
            Stage::End => 1.0,
        }
    }
}

pub trait OdeState: Copy + Add<Output = Self> + Mul<f64, Output = Self> {}
impl<T> OdeState for T where T: Copy + Add<Output = T> + Mul<f64, Output = T> {}

/// One classical RK4 step.
pub fn rk4_step<S: OdeState>(y: S, h: f64, mut f: impl FnMut(Stage, S) -> S) -> S {
    let k1 = f(Stage::Start, y);
    let k2 = f(Stage::Mid, y + k1 * (0.5 * h));
    let k3 = f(Stage::Mid, y + k2 * (0.5 * h));
    let k4 = f(Stage::End, y + k3 * h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Fourth-order Magnus step for `g' = g·A` from samples of `A` at the start,
/// midpoint and end of the step. Preserves `det g` when `A` is trace-free.
pub fn magnus4_step(g: Mat2, h: f64, a0: Mat2, a1: Mat2, a2: Mat2) -> Mat2 {
    let omega = (a0 + a1 * 4.0 + a2) * (h / 6.0) + a1.commutator(&(a2 - a0)) * (h * h / 12.0);
    g * omega.exp_traceless()
}

/// A frame `E` together with its λ-derivative `E₁`, integrated jointly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatPair(pub Mat2, pub Mat2);

impl Add for MatPair {
    type Output = MatPair;
    fn add(self, o: MatPair) -> MatPair {
        MatPair(self.0 + o.0, self.1 + o.1)
    }
}

impl Mul<f64> for MatPair {
    type Output = MatPair;
    fn mul(self, s: f64) -> MatPair {
        MatPair(self.0 * s, self.1 * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    T,
}

/// Samples of a 2×2-matrix-valued path along one parameter axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mat2Path {
    pub axis: Axis,
    pub positions: Vec<f64>,
    pub samples: Vec<Mat2>,
    /// Whether the path is expected to stay in SL(2).
    pub sl2: bool,
    /// Largest `|det g − det g(start)|` observed.
    pub det_drift: f64,
}

impl Mat2Path {
    pub fn last(&self) -> Mat2 {
        *self.samples.last().expect("path has at least one sample")
    }

    pub fn first(&self) -> Mat2 {
        self.samples[0]
    }
}

/// Integrate `g' = g·A(s)` from `initial` over `span` with `steps` RK4 steps.
///
/// When every evaluated coefficient is trace-free the path is flagged SL(2)
/// and a step whose determinant moves by more than [`DET_DRIFT_PER_STEP`]
/// (relative to `max(1, |g|²)`) is rejected.
pub fn rk4_matrix(
    initial: Mat2,
    coefficient: impl Fn(f64) -> Mat2,
    span: (f64, f64),
    steps: usize,
    axis: Axis,
) -> Result<Mat2Path, NumericsError> {
    let steps = steps.max(1);
    let h = (span.1 - span.0) / steps as f64;
    rk4_matrix_staged(initial, |i, stage| coefficient(span.0 + (i as f64 + stage.fraction()) * h), span.0, h, steps, axis)
}

/// Like [`rk4_matrix`], with the coefficient supplied per (step, stage).
pub fn rk4_matrix_staged(
    initial: Mat2,
    coefficient: impl Fn(usize, Stage) -> Mat2,
    start: f64,
    h: f64,
    steps: usize,
    axis: Axis,
) -> Result<Mat2Path, NumericsError> {
    let mut positions = Vec::with_capacity(steps + 1);
    let mut samples = Vec::with_capacity(steps + 1);
    positions.push(start);
    samples.push(initial);
    let det0 = initial.det();
    let mut g = initial;
    let mut sl2 = true;
    let mut det_drift = 0.0_f64;
    for i in 0..steps {
        let next = rk4_step(g, h, |stage, y| {
            let a = coefficient(i, stage);
            if a.trace().abs() > 1e-13 * a.max_abs().max(1.0) {
                sl2 = false;
            }
            y * a
        });
        if sl2 {
            let scale = g.max_abs().max(next.max_abs()).max(1.0).powi(2);
            let step_drift = (next.det() - g.det()).abs() / scale;
            if step_drift > DET_DRIFT_PER_STEP {
                return Err(NumericsError::StepRejected { step: i, drift: step_drift });
            }
            det_drift = det_drift.max((next.det() - det0).abs());
        }
        g = next;
        positions.push(start + (i + 1) as f64 * h);
        samples.push(g);
    }
    Ok(Mat2Path { axis, positions, samples, sl2, det_drift })
}
