//! Bäcklund transformations for KdV and for the curve flow.
//!
//! A BT is parametrized by a simple factor `r_{ξ,k}(λ) = [[ξ, ξ²−k²+λ], [1, ξ]]`.
//! Given an extended frame `E` of a solution, `y = E(x,t,k²)⁻¹(−ξ, 1)ᵗ` and
//! `ξ̃ = −y₁/y₂` produce the new solution `q̃ = −q + 2(ξ̃² − k²)` together with
//! the new curve `γ̃ = (ξ̃γ − γ_x)/k`. Records keep the undressed product
//! `r_{ξ,k} E r_{−ξ̃,k} / (λ − k²)` as their extended frame, so that BTs can be
//! chained and composed by permutability.

mod record;
mod riccati;
mod soliton;

pub use record::{
    bt_apply, bt_apply_k0, certificate, extended_frame_at, BTState, BtOutput, Certificate, CurvePoint, Domain, Dressed,
    NumericBackground, SolutionRecord,
};
pub use riccati::{bt_ode_solve, RiccatiSolution};
pub use soliton::{
    catalog, one_soliton, permute, smooth_two_soliton_parts, smooth_two_soliton_xi, soliton_curve, two_soliton_xi, Permuted,
    SolitonPoint,
};

use serde::{Deserialize, Serialize};

use crate::flows::FlowError;
use crate::geometry::GeometryError;
use crate::numerics::{Mat2, NumericsError};

/// Zero guard for `y₂` (relative to `|y|`) and for `ξ̃₁ − ξ̃₂`.
pub const SINGULAR_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BacklundError {
    #[error("y₂ vanishes at t = {t} for x in [{x_lo}, {x_hi}]")]
    SingularBT { t: f64, x_lo: f64, x_hi: f64 },
    #[error("ξ̃₁ − ξ̃₂ vanishes at t = {t} for x in [{x_lo}, {x_hi}]")]
    CoincidentFactors { t: f64, x_lo: f64, x_hi: f64 },
    #[error("({x}, {t}) is not a sample point of the background")]
    OffGrid { x: f64, t: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleFactor {
    pub xi: f64,
    pub k: f64,
}

impl SimpleFactor {
    pub fn new(xi: f64, k: f64) -> Self {
        SimpleFactor { xi, k }
    }

    /// The pole `λ = k²`.
    pub fn lambda(&self) -> f64 {
        self.k * self.k
    }

    pub fn eval(&self, lambda: f64) -> Mat2 {
        simple_factor_eval(*self, lambda)
    }
}

/// `r_{ξ,k}(λ)`.
pub fn simple_factor_eval(f: SimpleFactor, lambda: f64) -> Mat2 {
    let SimpleFactor { xi, k } = f;
    Mat2::new(xi, xi * xi - k * k + lambda, 1.0, xi)
}

/// The factors `(η₁, k₁)`, `(η₂, k₂)` with `r_{η₂,k₂} r_{ξ₁,k₁} = r_{η₁,k₁} r_{ξ₂,k₂}`.
pub fn permuted_factors(f1: SimpleFactor, f2: SimpleFactor) -> Result<(SimpleFactor, SimpleFactor), BacklundError> {
    let gap = f1.xi - f2.xi;
    if gap.abs() < SINGULAR_EPS {
        return Err(BacklundError::InvalidInput(format!("ξ₁ = ξ₂ = {}", f1.xi)));
    }
    let d = (f1.lambda() - f2.lambda()) / gap;
    Ok((SimpleFactor::new(-f2.xi + d, f1.k), SimpleFactor::new(-f1.xi + d, f2.k)))
}

/// First index pair `(i, i+1)` across which `v` changes sign or nearly
/// vanishes, as a bracketing interval of `xs`.
pub(crate) fn crossing(xs: &[f64], v: &[f64], scale: &[f64]) -> Option<(f64, f64)> {
    for i in 0..v.len() {
        if v[i].abs() <= SINGULAR_EPS * scale[i] {
            let lo = if i > 0 { xs[i - 1] } else { xs[i] };
            let hi = if i + 1 < xs.len() { xs[i + 1] } else { xs[i] };
            return Some((lo, hi));
        }
        if i + 1 < v.len() && v[i].signum() != v[i + 1].signum() && xs[i + 1] > xs[i] {
            return Some((xs[i], xs[i + 1]));
        }
    }
    None
}
