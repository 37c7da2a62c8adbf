//! Pairings of tangent fields on closed curves and the conserved functionals.
//!
//! For lifts `X = ξ̃`, `Y = η̃` of scalars `ξ`, `η` on a closed normalized curve:
//! `w = −∮ ξ_x η`, `ŵ₃ = −2∮ (det(X_x, Y_x) + q det(X, Y))`, and
//! `ŵ₅ = −4∮ det(X, Y)`. Since `∮ det(X, Y) = w`, the last equals `−4w`.

use serde::Serialize;

use crate::diffpoly::DiffPolyError;
use crate::flows::{conserved_values, Trajectory};
use crate::geometry::{curvature, lift, CurvatureField, GeometryError, PlaneCurve, TangentField};
use crate::hierarchy::{hamiltonian, PoissonOp};
use crate::numerics::{det2, Mat2, NumericsError, Spectral};

/// Step of the centred difference in [`gradient_check`] and [`pullback_check`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HamiltonianError {
    #[error("pairings need a closed curve")]
    OpenCurve,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    DiffPoly(#[from] DiffPolyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    PinkallW,
    W3,
    W5,
}

/// Value of a form on one direction of its kernel paired with `Y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelCheck {
    pub direction: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairingReport {
    pub form: Form,
    pub value: f64,
    /// `|ω(X, Y) + ω(Y, X)|`.
    pub skew_defect: f64,
    pub degenerate_directions_checked: Vec<KernelCheck>,
}

fn quad(c: &PlaneCurve, f: impl Iterator<Item = f64>) -> f64 {
    f.sum::<f64>() * c.grid().dx()
}

fn check_fields(c: &PlaneCurve, fields: &[&TangentField]) -> Result<(), HamiltonianError> {
    if !c.closed() {
        return Err(HamiltonianError::OpenCurve);
    }
    let n = c.points().len();
    for f in fields {
        if f.xi.len() != n || f.lifted.len() != n {
            return Err(NumericsError::LengthMismatch { got: f.xi.len(), want: n }.into());
        }
    }
    Ok(())
}

/// `w = −∮ ξ_x η`.
pub fn pinkall_w(c: &PlaneCurve, x: &TangentField, y: &TangentField) -> Result<f64, HamiltonianError> {
    check_fields(c, &[x, y])?;
    let xi_x = c.differentiator().derivative(&x.xi, 1);
    Ok(-quad(c, xi_x.iter().zip(&y.xi).map(|(a, b)| a * b)))
}

/// `ŵ₅ = −4∮ det(X, Y)`.
pub fn w5(c: &PlaneCurve, x: &TangentField, y: &TangentField) -> Result<f64, HamiltonianError> {
    check_fields(c, &[x, y])?;
    Ok(-4.0 * quad(c, x.lifted.iter().zip(&y.lifted).map(|(a, b)| det2(*a, *b))))
}

/// `ŵ₃ = −2∮ (det(X_x, Y_x) + q det(X, Y))`.
pub fn w3_geometric(c: &PlaneCurve, x: &TangentField, y: &TangentField) -> Result<f64, HamiltonianError> {
    check_fields(c, &[x, y])?;
    let q = curvature(c)?;
    let d = c.differentiator();
    let (xx, yx) = (d.derivative_points(&x.lifted, 1), d.derivative_points(&y.lifted, 1));
    let terms = (0..q.values().len()).map(|m| det2(xx[m], yx[m]) + q.values()[m] * det2(x.lifted[m], y.lifted[m]));
    Ok(-2.0 * quad(c, terms))
}

/// `ŵ₃ = −4∮ (L₃ξ) η`.
pub fn w3_operator(c: &PlaneCurve, x: &TangentField, y: &TangentField) -> Result<f64, HamiltonianError> {
    check_fields(c, &[x, y])?;
    let q = curvature(c)?;
    let sp = Spectral::new(*c.grid());
    let l3 = PoissonOp::L3.apply_numeric(&sp, &x.xi, q.values());
    Ok(-4.0 * quad(c, l3.iter().zip(&y.xi).map(|(a, b)| a * b)))
}

fn evaluate(form: Form, c: &PlaneCurve, x: &TangentField, y: &TangentField) -> Result<f64, HamiltonianError> {
    match form {
        Form::PinkallW => pinkall_w(c, x, y),
        Form::W3 => w3_operator(c, x, y),
        Form::W5 => w5(c, x, y),
    }
}

/// Scalars whose lifts span the kernel of `form` at `c`: the constants for
/// `w` and `ŵ₅`, and `det(γ, Aγ)` for `A` in a basis of `sl(2)` for `ŵ₃`.
pub fn kernel_directions(form: Form, c: &PlaneCurve) -> Vec<(String, Vec<f64>)> {
    let g = c.points();
    match form {
        Form::PinkallW | Form::W5 => vec![("constant".into(), vec![1.0; g.len()])],
        Form::W3 => [("e12", Mat2::E12), ("e21", Mat2::E21), ("h", Mat2::new(1.0, 0.0, 0.0, -1.0))]
            .into_iter()
            .map(|(name, a)| (format!("sl2:{name}"), g.iter().map(|p| det2(*p, a.apply(*p))).collect()))
            .collect(),
    }
}

/// Evaluates `form` on `(X, Y)` with its skew defect and its value on each
/// kernel direction paired with `Y`.
pub fn pairing(form: Form, c: &PlaneCurve, x: &TangentField, y: &TangentField) -> Result<PairingReport, HamiltonianError> {
    let value = evaluate(form, c, x, y)?;
    let skew_defect = (value + evaluate(form, c, y, x)?).abs();
    let mut checks = Vec::new();
    for (direction, xi) in kernel_directions(form, c) {
        let k = lift(&xi, c)?;
        checks.push(KernelCheck { direction, value: evaluate(form, c, &k, y)? });
    }
    Ok(PairingReport { form, value, skew_defect, degenerate_directions_checked: checks })
}

/// `[H₁, H₃, H₅]` per snapshot and their largest relative drifts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub times: Vec<f64>,
    pub values: Vec<[f64; 3]>,
    pub drift: [f64; 3],
}

pub fn conserved_report(traj: &Trajectory<CurvatureField>) -> ConservationReport {
    let values: Vec<[f64; 3]> =
        traj.states.iter().map(|q| conserved_values(&Spectral::new(*q.grid()), q.values())).collect();
    let first = values.first().copied().unwrap_or([0.0; 3]);
    let mut drift = [0.0_f64; 3];
    for row in &values {
        for k in 0..3 {
            let scale = if first[k] == 0.0 { 1.0 } else { first[k].abs() };
            drift[k] = drift[k].max((row[k] - first[k]).abs() / scale);
        }
    }
    ConservationReport { times: traj.times.clone(), values, drift }
}

fn functional(j: usize, sp: &Spectral, q: &[f64]) -> f64 {
    let density = hamiltonian(j).density.compile();
    let jets = sp.jets(q, density.max_order());
    density.eval_jets(&jets).iter().sum::<f64>() * sp.grid().dx()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    /// `⟨∇H, v⟩`.
    pub analytic: f64,
    /// `(H(q + εv) − H(q − εv))/2ε`.
    pub finite_difference: f64,
    /// `|analytic − finite_difference| / max(1, |analytic|)`.
    pub residual: f64,
}

/// Compares the variational gradient of `H_{2j+1}` with a centred difference.
pub fn gradient_check(j: usize, q: &CurvatureField, v: &[f64]) -> Result<GradientCheck, HamiltonianError> {
    if !q.periodic() {
        return Err(HamiltonianError::InvalidInput("gradient checks need a periodic q".into()));
    }
    if v.len() != q.values().len() {
        return Err(NumericsError::LengthMismatch { got: v.len(), want: q.values().len() }.into());
    }
    let sp = Spectral::new(*q.grid());
    let grad = hamiltonian(j).gradient.evaluate(&sp, q.values())?;
    let dx = q.grid().dx();
    let analytic = grad.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * dx;
    let shifted = |s: f64| -> Vec<f64> { q.values().iter().zip(v).map(|(a, b)| a + s * FD_STEP * b).collect() };
    let finite_difference = (functional(j, &sp, &shifted(1.0)) - functional(j, &sp, &shifted(-1.0))) / (2.0 * FD_STEP);
    let residual = (analytic - finite_difference).abs() / analytic.abs().max(1.0);
    Ok(GradientCheck { analytic, finite_difference, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PullbackCheck {
    /// `max |δq + 2L₃ξ| / max |2L₃ξ|` with `δq` the centred difference of
    /// the curvature along `ξ̃`.
    pub variation_defect: f64,
    /// `∮ 2L₃(∇H)·ξ`.
    pub analytic: f64,
    /// Centred difference of `H∘q` along `ξ̃`.
    pub finite_difference: f64,
    pub residual: f64,
}

/// Checks the curvature variation `δq = −2L₃ξ` along `ξ̃` and the resulting
/// gradient `dĤ(ξ̃) = ∮ 2L₃(∇H)·ξ` of the pullback of `H_{2j+1}`.
pub fn pullback_check(j: usize, c: &PlaneCurve, xi: &[f64]) -> Result<PullbackCheck, HamiltonianError> {
    if !c.closed() {
        return Err(HamiltonianError::OpenCurve);
    }
    let x = lift(xi, c)?;
    let q = curvature(c)?;
    let sp = Spectral::new(*c.grid());
    let moved = |s: f64| -> Result<CurvatureField, HamiltonianError> {
        let pts = c.points().iter().zip(&x.lifted).map(|(g, v)| [g[0] + s * FD_STEP * v[0], g[1] + s * FD_STEP * v[1]]).collect();
        Ok(curvature(&PlaneCurve::new(*c.grid(), pts, true)?)?)
    };
    let (qp, qm) = (moved(1.0)?, moved(-1.0)?);
    let l3xi = PoissonOp::L3.apply_numeric(&sp, xi, q.values());
    let scale = l3xi.iter().fold(0.0_f64, |m, v| m.max(2.0 * v.abs())).max(f64::MIN_POSITIVE);
    let variation_defect = (0..xi.len())
        .map(|m| ((qp.values()[m] - qm.values()[m]) / (2.0 * FD_STEP) + 2.0 * l3xi[m]).abs())
        .fold(0.0, f64::max)
        / scale;
    let grad = hamiltonian(j).gradient.evaluate(&sp, q.values())?;
    let l3grad = PoissonOp::L3.apply_numeric(&sp, &grad, q.values());
    let analytic = 2.0 * l3grad.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() * c.grid().dx();
    let finite_difference = (functional(j, &sp, qp.values()) - functional(j, &sp, qm.values())) / (2.0 * FD_STEP);
    let residual = (analytic - finite_difference).abs() / analytic.abs().max(1.0);
    Ok(PullbackCheck { variation_defect, analytic, finite_difference, residual })
}

/// `(ŵ₅(ξ̃, η̃), w(ξ̃, η̃), dĤ(η̃))` for the curve-flow field `ξ = −q/2` and
/// `Ĥ` the pullback of `½∮q`.
pub fn hamiltonian_consistency(c: &PlaneCurve, eta: &[f64]) -> Result<(f64, f64, f64), HamiltonianError> {
    let q = curvature(c)?;
    let xi: Vec<f64> = q.values().iter().map(|v| -v / 2.0).collect();
    let (x, y) = (lift(&xi, c)?, lift(eta, c)?);
    let sp = Spectral::new(*c.grid());
    let l3 = PoissonOp::L3.apply_numeric(&sp, &vec![0.5; eta.len()], q.values());
    let dh = 2.0 * l3.iter().zip(eta).map(|(a, b)| a * b).sum::<f64>() * c.grid().dx();
    Ok((w5(c, &x, &y)?, pinkall_w(c, &x, &y)?, dh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{evolve_q, EvolveOptions};
    use crate::geometry::{reparametrize, RawCurve};
    use crate::numerics::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn circle(n: usize) -> PlaneCurve {
        PlaneCurve::from_fn(Grid::new(n, 2.0 * PI).unwrap(), true, |x| [x.cos(), x.sin()])
    }

    fn wavy_curve() -> PlaneCurve {
        let raw = RawCurve::sample(|s| { let r = 1.0 + 0.15 * (3.0 * s).cos(); [r * s.cos(), r * s.sin()] }, 0.0, 2.0 * PI / 256.0, 256, true);
        reparametrize(&raw, None).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, c: &PlaneCurve) -> Vec<f64> {
        let period = c.grid().period();
        let coeffs: Vec<(f64, f64)> = (0..5).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        c.grid()
            .nodes()
            .iter()
            .map(|x| {
                coeffs.iter().enumerate().map(|(m, (a, b))| {
                    let w = 2.0 * PI * m as f64 / period;
                    a * (w * x).cos() + b * (w * x).sin()
                }).sum()
            })
            .collect()
    }

    #[test]
    fn w5_on_the_circle() {
        let c = circle(64);
        let xs = c.grid().nodes();
        let x = lift(&xs.iter().map(|v| v.sin()).collect::<Vec<_>>(), &c).unwrap();
        let y = lift(&xs.iter().map(|v| v.cos()).collect::<Vec<_>>(), &c).unwrap();
        let r = pairing(Form::W5, &c, &x, &y).unwrap();
        assert!((r.value - 4.0 * PI).abs() < 1e-12);
        assert!(r.skew_defect < 1e-12);
        let one = lift(&vec![1.0; 64], &c).unwrap();
        assert!(w5(&c, &one, &y).unwrap().abs() < 1e-12);
    }

    #[test]
    fn w3_kernel_on_the_circle() {
        let c = circle(64);
        let xs = c.grid().nodes();
        let k = lift(&xs.iter().map(|v| (2.0 * v).cos()).collect::<Vec<_>>(), &c).unwrap();
        let y = lift(&xs.iter().map(|v| (3.0 * v).sin() + 0.2).collect::<Vec<_>>(), &c).unwrap();
        assert!(w3_operator(&c, &k, &y).unwrap().abs() < 1e-9);
        assert!(w3_geometric(&c, &k, &y).unwrap().abs() < 1e-9);
    }

    #[test]
    fn forms_on_random_fields() {
        let c = wavy_curve();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let x = lift(&random_field(&mut rng, &c), &c).unwrap();
            let y = lift(&random_field(&mut rng, &c), &c).unwrap();
            for form in [Form::PinkallW, Form::W3, Form::W5] {
                let r = pairing(form, &c, &x, &y).unwrap();
                assert!(r.skew_defect < 1e-10, "{form:?}: {}", r.skew_defect);
                for k in &r.degenerate_directions_checked {
                    assert!(k.value.abs() < 1e-9, "{form:?} {}: {}", k.direction, k.value);
                }
            }
            let (g, o) = (w3_geometric(&c, &x, &y).unwrap(), w3_operator(&c, &x, &y).unwrap());
            assert!((g - o).abs() < 1e-9, "{g} vs {o}");
            let (a, b) = (w5(&c, &x, &y).unwrap(), pinkall_w(&c, &x, &y).unwrap());
            assert!((a + 4.0 * b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn open_curves_are_rejected() {
        let c = PlaneCurve::from_fn(Grid::new(32, 1.0).unwrap(), false, |x| [1.0, x]);
        let x = lift(&vec![1.0; 32], &c).unwrap();
        assert_eq!(pairing(Form::W5, &c, &x, &x).unwrap_err(), HamiltonianError::OpenCurve);
    }

    #[test]
    fn h3_of_the_soliton() {
        let grid = Grid::centered(1024, 60.0).unwrap();
        let q: Vec<f64> = grid.nodes().iter().map(|x| -2.0 / x.cosh().powi(2)).collect();
        let h = conserved_values(&Spectral::new(grid), &q);
        assert!((h[1] - 8.0 / 3.0).abs() < 1e-6, "{}", h[1]);
    }

    #[test]
    fn conservation_on_soliton_run() {
        let grid = Grid::centered(512, 40.0).unwrap();
        let q0 = CurvatureField::from_fn(grid, true, |x| -2.0 / x.cosh().powi(2));
        let traj = evolve_q(&q0, 1, 1.0, &EvolveOptions::default()).unwrap();
        let r = conserved_report(&traj);
        assert!(r.drift.iter().all(|d| *d <= 1e-6), "{:?}", r.drift);
        let still = evolve_q(&CurvatureField::from_fn(grid, true, |_| -0.5), 1, 0.1, &EvolveOptions::default()).unwrap();
        assert_eq!(conserved_report(&still).drift, [0.0; 3]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let grid = Grid::new(128, 2.0 * PI).unwrap();
        let q = CurvatureField::from_fn(grid, true, |x| -1.0 + 0.3 * x.cos() + 0.1 * (2.0 * x).sin());
        let v: Vec<f64> = grid.nodes().iter().map(|x| (3.0 * x).cos() + 0.5 * x.sin() + 0.2).collect();
        for (j, tol) in [(0, 1e-8), (1, 1e-7), (2, 1e-6)] {
            let g = gradient_check(j, &q, &v).unwrap();
            assert!(g.residual <= tol, "j = {j}: {g:?}");
        }
    }

    #[test]
    fn pullback_of_hamiltonians() {
        let c = wavy_curve();
        let xs = c.grid().nodes();
        let period = c.grid().period();
        let xi: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x / period).sin() + 0.3).collect();
        for j in 0..3 {
            let p = pullback_check(j, &c, &xi).unwrap();
            assert!(p.variation_defect < 1e-5, "{p:?}");
            assert!(p.residual < 1e-6, "j = {j}: {p:?}");
        }
    }

    #[test]
    fn curve_flow_is_hamiltonian() {
        let c = wavy_curve();
        let period = c.grid().period();
        let mut ratios = Vec::new();
        for (m, phase) in [(3.0, 0.5), (3.0, 1.0), (6.0, 0.4)] {
            let eta: Vec<f64> = c.grid().nodes().iter().map(|x| (2.0 * PI * m * x / period + phase).cos()).collect();
            let (w5, w, dh) = hamiltonian_consistency(&c, &eta).unwrap();
            ratios.push((w5 / dh, w / dh));
        }
        for (a, b) in ratios {
            assert!((a - 4.0).abs() < 1e-8 && (b + 1.0).abs() < 1e-8, "{a} {b}");
        }
    }
}
