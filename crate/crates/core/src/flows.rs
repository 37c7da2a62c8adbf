//! Cauchy solvers for the hierarchy flows and the matching curve flows.
//!
//! Curvature fields are advanced pseudo-spectrally. The stiff linear part of
//! each flow (its degree-one terms plus the linearization of the nonlinear
//! terms about the conserved mean of `q`) is integrated exactly by ETDRK4;
//! plain RK4 is available as a fallback.
//!
//! Curves are evolved either through the frame (evolve `q`, carry the frame
//! along `x = 0` in `t`, rebuild each snapshot in `x`) or directly by the
//! method of lines on `γ_t = A_j(q)γ + C_j(q)γ_x`.

use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::diffpoly::{CompiledPoly, DiffPoly, DiffPolyError, Monomial};
use crate::geometry::{curvature, FRAME_STEP_SCALE, lift, reconstruct_from, CurvatureField, GeometryError, PlaneCurve};
use crate::hierarchy::{flow_rhs, generate, hamiltonian, lax_pair, CompiledLax};
use crate::numerics::{magnus4_step, tail_ratio_hat, Complex64, Grid, Mat2, NumericsError, Scheme, Spectral, Stepper};

/// Spectral tail (relative) at which a run is aborted as under-resolved.
pub const RESOLUTION_LIMIT: f64 = 1e-4;
/// Largest `|det(γ, γ_x) − 1|` tolerated by the direct curve solver.
pub const DRIFT_LIMIT: f64 = 1e-4;
/// RK4 stability radius on the imaginary axis.
const RK4_RADIUS: f64 = 2.8;
/// Automatic steps keep `dt·ρ_N` below this, `ρ_N` being the nonlinear rate.
const ACCURACY_SCALE: f64 = 0.005;
/// Nodes at each end of an open curve that the direct solver holds fixed.
pub const FROZEN_BOUNDARY: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("resolution lost at t = {time}: spectral tail {tail:e}")]
    ResolutionLost { time: f64, tail: f64 },
    #[error("normalization drift {defect:e} at t = {time}")]
    Drift { time: f64, defect: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    DiffPoly(#[from] DiffPolyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Time step; chosen from the stability estimate when absent.
    pub dt: Option<f64>,
    pub scheme: Scheme,
    /// Number of snapshot intervals in `[0, T]`.
    pub snapshots: usize,
    /// Fraction of the stability bound used by the automatic step.
    pub safety: f64,
    /// Upper bound on the automatic step.
    pub max_dt: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { dt: None, scheme: Scheme::Etdrk4, snapshots: 10, safety: 0.5, max_dt: 1e-3 }
    }
}

/// How a run was stepped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepInfo {
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
    pub stability_bound: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub flow_order: usize,
    pub times: Vec<f64>,
    pub states: Vec<S>,
    /// `[H₁, H₃, H₅]` per snapshot.
    pub conservation_log: Vec<[f64; 3]>,
    /// `max |γ(L) − γ(0)|` per snapshot (curve runs on closed curves).
    pub closure_defects: Vec<Option<f64>>,
    /// `max |det(γ, γ_x) − 1|` per snapshot (curve runs).
    pub normalization_defects: Vec<f64>,
    pub stepping: StepInfo,
}

impl<S> Trajectory<S> {
    /// Largest relative change of each conserved quantity from its initial value
    /// (absolute when the initial value is zero).
    pub fn conservation_drift(&self) -> [f64; 3] {
        let first = self.conservation_log[0];
        let mut out = [0.0_f64; 3];
        for row in &self.conservation_log {
            for k in 0..3 {
                let scale = if first[k] == 0.0 { 1.0 } else { first[k].abs() };
                out[k] = out[k].max((row[k] - first[k]).abs() / scale);
            }
        }
        out
    }
}

/// `[H₁, H₃, H₅]` of a periodic field, without the resolution guard of
/// [`crate::hierarchy::HamiltonianEntry::value`] so that marginal runs can still be logged.
pub fn conserved_values(spectral: &Spectral, q: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, slot) in out.iter_mut().enumerate() {
        let density = hamiltonian(j).density.compile();
        let jets = spectral.jets(q, density.max_order());
        *slot = density.eval_jets(&jets).iter().sum::<f64>() * spectral.grid().dx();
    }
    out
}

/// A flow split as `q_t = L q + N(q)` on one grid.
#[derive(Clone, Debug)]
pub struct FlowOperator {
    j: usize,
    spectral: Spectral,
    linear: Vec<Complex64>,
    /// Symbol of the linearized nonlinear part, subtracted back from `N`.
    shift: Vec<Complex64>,
    nonlinear: CompiledPoly,
    nonlinear_poly: DiffPoly,
    mean: f64,
    max_order: u32,
}

fn symbol_of(spectral: &Spectral, terms: &[(f64, u32)]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); spectral.grid().n()];
    for &(c, order) in terms {
        for (o, s) in out.iter_mut().zip(spectral.derivative_symbol(order)) {
            *o += s * c;
        }
    }
    out
}

impl FlowOperator {
    /// Splits `flow_rhs(j)` about the constant background `mean`.
    pub fn new(spectral: Spectral, j: usize, mean: f64) -> Self {
        let rhs = flow_rhs(j);
        let linear_poly = rhs.homogeneous_part(1);
        let nonlinear_poly = &rhs - &linear_poly;
        let mut lin_terms = Vec::new();
        for (m, c) in linear_poly.terms() {
            lin_terms.push((c.to_f64().unwrap_or(0.0), m.orders()[0]));
        }
        // d/dε N(mean + ε v) at ε = 0, for a constant background
        let mut shift_terms = Vec::new();
        for (m, c) in nonlinear_poly.terms() {
            let orders = m.orders();
            let c = c.to_f64().unwrap_or(0.0);
            for (i, &o) in orders.iter().enumerate() {
                if orders.iter().enumerate().all(|(l, &ol)| l == i || ol == 0) {
                    shift_terms.push((c * mean.powi(orders.len() as i32 - 1), o));
                }
            }
        }
        let linear_base = symbol_of(&spectral, &lin_terms);
        let shift = symbol_of(&spectral, &shift_terms);
        let linear = linear_base.iter().zip(&shift).map(|(a, b)| a + b).collect();
        FlowOperator {
            j,
            max_order: rhs.max_order().unwrap_or(0),
            nonlinear: nonlinear_poly.compile(),
            nonlinear_poly,
            spectral,
            linear,
            shift,
            mean,
        }
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn linear_symbol(&self) -> &[Complex64] {
        &self.linear
    }

    /// `N(v̂)`, dealiased.
    pub fn nonlinear_hat(&self, v: &[Complex64]) -> Vec<Complex64> {
        let sp = &self.spectral;
        let mut out = if self.nonlinear.is_zero() {
            vec![Complex64::new(0.0, 0.0); v.len()]
        } else {
            let jets: Vec<Vec<f64>> = (0..=self.max_order).map(|o| sp.derivative_hat(v, o)).collect();
            let mut h = sp.forward(&self.nonlinear.eval_jets(&jets));
            sp.dealias(&mut h);
            h
        };
        for ((o, s), v) in out.iter_mut().zip(&self.shift).zip(v) {
            *o -= s * v;
        }
        out
    }

    /// Spectral radius estimate of the linearized `N` at `q`.
    pub fn nonlinear_radius(&self, q: &[f64]) -> f64 {
        let sp = &self.spectral;
        let kmax = sp.grid().dealiased_kmax();
        let hat = sp.forward(q);
        let norms: Vec<f64> = (0..=self.max_order)
            .map(|o| sp.derivative_hat(&hat, o).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect();
        let mut rho = 0.0;
        for (m, c) in self.nonlinear_poly.terms() {
            let c = c.abs().to_f64().unwrap_or(0.0);
            let orders = m.orders();
            for (i, &o) in orders.iter().enumerate() {
                let others: f64 = orders.iter().enumerate().filter(|(l, _)| *l != i).map(|(_, &ol)| norms[ol as usize]).product();
                let background = if orders.iter().enumerate().all(|(l, &ol)| l == i || ol == 0) {
                    self.mean.abs().powi(orders.len() as i32 - 1)
                } else {
                    0.0
                };
                rho += c * (others - background).max(0.0) * kmax.powi(o as i32);
            }
        }
        rho
    }

    /// Largest stable step for `scheme` at `q`.
    pub fn stability_bound(&self, scheme: Scheme, q: &[f64]) -> f64 {
        let mut rho = self.nonlinear_radius(q);
        if scheme == Scheme::Rk4 {
            rho += self.linear.iter().fold(0.0_f64, |m, l| m.max(l.norm()));
        }
        if rho == 0.0 {
            f64::INFINITY
        } else {
            RK4_RADIUS / rho
        }
    }
}

/// Values of `∂ˣᵒq` at node `m`, for `o = 0..=max_order`, from `q̂`.
fn point_jet(spectral: &Spectral, hat: &[Complex64], m: usize, max_order: u32) -> Vec<f64> {
    let n = spectral.grid().n();
    let k = spectral.wavenumbers();
    let phases: Vec<Complex64> =
        (0..n).map(|i| hat[i] * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ((i * m) % n) as f64 / n as f64)).collect();
    (0..=max_order)
        .map(|o| {
            let mut acc = 0.0;
            for i in 0..n {
                if o % 2 == 1 && i == n / 2 {
                    continue;
                }
                acc += (phases[i] * Complex64::new(0.0, k[i]).powu(o)).re;
            }
            acc / n as f64
        })
        .collect()
}

/// Output of [`evolve_q`]; `anchor_jets[s]` holds `∂ˣᵒq` at the anchor node
/// after `s` steps.
#[derive(Clone, Debug)]
pub struct QRun {
    pub trajectory: Trajectory<CurvatureField>,
    pub anchor_jets: Vec<Vec<f64>>,
    pub steps_per_snapshot: usize,
}

/// Spectral tail measured against unit amplitude, so that round-off on a
/// vanishing field is not mistaken for lost resolution.
fn resolution_tail(hat: &[Complex64]) -> f64 {
    let n = hat.len() as f64;
    let peak = hat.iter().fold(0.0_f64, |m, h| m.max(h.norm()));
    tail_ratio_hat(hat) * peak / peak.max(n)
}

fn plan_steps(total: f64, snapshots: usize, dt: f64) -> (usize, f64) {
    let interval = total / snapshots as f64;
    let mut per = (interval / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    per += per % 2;
    (per, interval / per as f64)
}

/// Evolves `q0` under the `(2j+1)`-th flow to time `t_end`.
pub fn evolve_q(q0: &CurvatureField, j: usize, t_end: f64, opts: &EvolveOptions) -> Result<Trajectory<CurvatureField>, FlowError> {
    Ok(evolve_q_recording(q0, j, t_end, opts, None)?.trajectory)
}

/// As [`evolve_q`], recording at every step the jets up to order `o` at node
/// `m` when `record = Some((m, o))`.
pub fn evolve_q_recording(
    q0: &CurvatureField,
    j: usize,
    t_end: f64,
    opts: &EvolveOptions,
    record: Option<(usize, u32)>,
) -> Result<QRun, FlowError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(FlowError::InvalidInput(format!("final time must be positive, got {t_end}")));
    }
    if opts.snapshots == 0 {
        return Err(FlowError::InvalidInput("need at least one snapshot interval".into()));
    }
    let grid = *q0.grid();
    let sp = Spectral::new(grid);
    let q_init = q0.values();
    let mean = q_init.iter().sum::<f64>() / q_init.len() as f64;
    let op = FlowOperator::new(sp.clone(), j, mean);
    let bound = op.stability_bound(opts.scheme, q_init) * opts.safety;
    let dt_target = match opts.dt {
        Some(dt) if dt > bound => return Err(NumericsError::CflRejected { dt, bound }.into()),
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(FlowError::InvalidInput(format!("time step must be positive, got {dt}"))),
        None => opts.max_dt.min(bound).min(ACCURACY_SCALE / op.nonlinear_radius(q_init)),
    };
    let (per, dt) = plan_steps(t_end, opts.snapshots, dt_target);
    let stepper = Stepper::new(opts.scheme, op.linear_symbol().to_vec(), dt);

    let mut v = sp.forward(q_init);
    let tail = resolution_tail(&v);
    if tail > RESOLUTION_LIMIT {
        return Err(FlowError::ResolutionLost { time: 0.0, tail });
    }
    let mut anchor_jets = Vec::new();
    if let Some((anchor, o)) = record {
        anchor_jets.push(point_jet(&sp, &v, anchor, o));
    }
    let mut times = vec![0.0];
    let mut states = vec![q0.clone()];
    let mut log = vec![conserved_values(&sp, q_init)];
    for snap in 1..=opts.snapshots {
        for _ in 0..per {
            v = stepper.step(&v, |u| op.nonlinear_hat(u));
            let tail = resolution_tail(&v);
            if tail > RESOLUTION_LIMIT || v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                let time = (snap - 1) as f64 * t_end / opts.snapshots as f64;
                return Err(FlowError::ResolutionLost { time, tail });
            }
            if let Some((anchor, o)) = record {
                anchor_jets.push(point_jet(&sp, &v, anchor, o));
            }
        }
        let q = sp.inverse(v.clone());
        log.push(conserved_values(&sp, &q));
        times.push(snap as f64 * t_end / opts.snapshots as f64);
        states.push(CurvatureField::new(grid, q, true)?);
    }
    let trajectory = Trajectory {
        flow_order: 2 * j + 1,
        times,
        states,
        conservation_log: log,
        closure_defects: Vec::new(),
        normalization_defects: Vec::new(),
        stepping: StepInfo { scheme: opts.scheme, dt, steps: per * opts.snapshots, stability_bound: bound },
    };
    Ok(QRun { trajectory, anchor_jets, steps_per_snapshot: per })
}

/// Integrates the frame along the anchor in `t` from per-step jets, with
/// Magnus steps of `2·dt` whose midpoint is the intermediate PDE step.
pub(crate) fn carry_anchor_frame(lax: &CompiledLax, lambda: f64, jets: &[Vec<f64>], dt: f64, g0: Mat2) -> Vec<Mat2> {
    let mut out = Vec::with_capacity(jets.len() / 2 + 1);
    let mut g = g0;
    out.push(g);
    for w in jets.windows(3).step_by(2) {
        let [a0, a1, a2] = [&w[0], &w[1], &w[2]].map(|jet| lax.eval(lambda, jet));
        g = magnus4_step(g, 2.0 * dt, a0, a1, a2);
        out.push(g);
    }
    out
}

fn periodic_field(q: &CurvatureField) -> Result<CurvatureField, GeometryError> {
    if q.periodic() {
        Ok(q.clone())
    } else {
        CurvatureField::new(*q.grid(), q.values().to_vec(), true)
    }
}

/// Curve flow by frame transport: `q` by [`evolve_q`], the frame at the
/// anchor by `E_t = E·M_j`, and each snapshot rebuilt in `x`.
pub fn evolve_curve_frame(c0: &PlaneCurve, j: usize, t_end: f64, opts: &EvolveOptions) -> Result<Trajectory<PlaneCurve>, FlowError> {
    let q0 = periodic_field(&curvature(c0)?)?;
    let lax = lax_pair(j).compile();
    let jets = Spectral::new(*q0.grid()).jets(q0.values(), lax.max_order());
    let m_max = (0..q0.values().len())
        .map(|m| {
            let jet: Vec<f64> = jets.iter().map(|d| d[m]).collect();
            lax.eval(0.0, &jet).max_abs()
        })
        .fold(0.0_f64, f64::max);
    let mut opts = opts.clone();
    if m_max > 0.0 {
        opts.max_dt = opts.max_dt.min(0.5 * FRAME_STEP_SCALE / m_max);
    }
    let anchor = c0.grid().anchor();
    let run = evolve_q_recording(&q0, j, t_end, &opts, Some((anchor, lax.max_order())))?;
    let g0 = c0.frames()[anchor];
    let path = carry_anchor_frame(&lax, 0.0, &run.anchor_jets, run.trajectory.stepping.dt, g0);
    let stride = run.steps_per_snapshot / 2;
    let mut states = Vec::with_capacity(run.trajectory.states.len());
    let mut closure = Vec::new();
    let mut norms = Vec::new();
    for (i, q) in run.trajectory.states.iter().enumerate() {
        let rec = reconstruct_from(q, path[i * stride], anchor)?;
        let curve = PlaneCurve::new(*c0.grid(), rec.curve.points().to_vec(), c0.closed())?;
        closure.push(if c0.closed() { rec.closure_defect } else { None });
        norms.push(curve.normalization_defect());
        states.push(curve);
    }
    let t = run.trajectory;
    Ok(Trajectory {
        flow_order: t.flow_order,
        times: t.times,
        states,
        conservation_log: t.conservation_log,
        closure_defects: closure,
        normalization_defects: norms,
        stepping: t.stepping,
    })
}

/// Velocity `A_j(q)γ + C_j(q)γ_x` of the curve flow, zero on frozen end nodes
/// of open curves.
pub fn curve_velocity(c: &PlaneCurve, cj: &DiffPoly) -> Result<Vec<[f64; 2]>, FlowError> {
    let q = curvature(c)?;
    let xi = cj.compile().eval_jets(&q.jets(cj.max_order().unwrap_or(0)));
    let mut v = lift(&xi, c)?.lifted;
    if c.closed() {
        let sp = Spectral::new(*c.grid());
        let filter = smoothing_filter(&sp);
        for d in 0..2 {
            let mut hat = sp.forward(&v.iter().map(|p| p[d]).collect::<Vec<_>>());
            for (h, f) in hat.iter_mut().zip(&filter) {
                *h *= f;
            }
            for (p, val) in v.iter_mut().zip(sp.inverse(hat)) {
                p[d] = val;
            }
        }
    } else {
        let n = v.len();
        for m in (0..FROZEN_BOUNDARY.min(n)).chain(n.saturating_sub(FROZEN_BOUNDARY)..n) {
            v[m] = [0.0, 0.0];
        }
    }
    Ok(v)
}

/// Exponential filter `exp(−36 (|k|/k_N)^36)`, which leaves all but the
/// top modes untouched.
fn smoothing_filter(sp: &Spectral) -> Vec<f64> {
    let k = sp.wavenumbers();
    let k_nyquist = k.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    k.iter().map(|v| (-36.0 * (v.abs() / k_nyquist).powi(36)).exp()).collect()
}

fn direct_stability_bound(c: &PlaneCurve, j: usize, cj: &DiffPoly) -> f64 {
    let k = std::f64::consts::PI / c.grid().dx();
    if j == 0 {
        return RK4_RADIUS / k;
    }
    let top = cj.max_order().unwrap_or(0);
    let c_top = cj.coefficient(&Monomial::new(vec![top])).abs().to_f64().unwrap_or(1.0);
    let t = c.tangent();
    let (mut s1, mut s2) = (0.0_f64, 0.0_f64);
    for (g, tx) in c.points().iter().zip(&t) {
        let (ng, nt) = (g[0].hypot(g[1]), tx[0].hypot(tx[1]));
        s1 = s1.max(ng * nt);
        s2 = s2.max(nt * nt);
    }
    let rho = c_top * (0.5 * k.powi(top as i32 + 3) * s1 + k.powi(top as i32 + 2) * s2);
    RK4_RADIUS / rho
}

/// Curve flow by the method of lines on `γ` itself.
pub fn evolve_curve_direct(c0: &PlaneCurve, j: usize, t_end: f64, opts: &EvolveOptions) -> Result<Trajectory<PlaneCurve>, FlowError> {
    if !(t_end > 0.0 && t_end.is_finite()) || opts.snapshots == 0 {
        return Err(FlowError::InvalidInput("need a positive final time and at least one snapshot".into()));
    }
    let cj = generate(j).get(j).c.clone();
    let bound = direct_stability_bound(c0, j, &cj) * opts.safety;
    let dt_target = match opts.dt {
        Some(dt) => dt.min(bound),
        None => opts.max_dt.min(bound),
    };
    let (per, dt) = plan_steps(t_end, opts.snapshots, dt_target);
    let grid = *c0.grid();
    let closed = c0.closed();
    let sp = Spectral::new(grid);

    let mut pts = c0.points().to_vec();
    let mut states = vec![c0.clone()];
    let mut times = vec![0.0];
    let mut log = vec![conserved_values(&sp, curvature(c0)?.values())];
    let mut norms = vec![c0.normalization_defect()];
    let mut closure = vec![closed.then_some(0.0)];
    let rhs = |p: &[[f64; 2]]| -> Result<Vec<[f64; 2]>, FlowError> {
        curve_velocity(&PlaneCurve::new(grid, p.to_vec(), closed)?, &cj)
    };
    let axpy = |p: &[[f64; 2]], k: &[[f64; 2]], s: f64| -> Vec<[f64; 2]> {
        p.iter().zip(k).map(|(a, b)| [a[0] + s * b[0], a[1] + s * b[1]]).collect()
    };
    for snap in 1..=opts.snapshots {
        for _ in 0..per {
            let k1 = rhs(&pts)?;
            let k2 = rhs(&axpy(&pts, &k1, 0.5 * dt))?;
            let k3 = rhs(&axpy(&pts, &k2, 0.5 * dt))?;
            let k4 = rhs(&axpy(&pts, &k3, dt))?;
            for m in 0..pts.len() {
                for d in 0..2 {
                    pts[m][d] += dt / 6.0 * (k1[m][d] + 2.0 * k2[m][d] + 2.0 * k3[m][d] + k4[m][d]);
                }
            }
        }
        let time = snap as f64 * t_end / opts.snapshots as f64;
        let curve = PlaneCurve::new(grid, pts.clone(), closed)?;
        let defect = curve.normalization_defect();
        if defect > DRIFT_LIMIT || !defect.is_finite() {
            return Err(FlowError::Drift { time, defect });
        }
        let q = curvature(&curve)?;
        if closed {
            let tail = resolution_tail(&sp.forward(q.values()));
            if tail > RESOLUTION_LIMIT {
                return Err(FlowError::ResolutionLost { time, tail });
            }
        }
        log.push(conserved_values(&sp, q.values()));
        norms.push(defect);
        closure.push(closed.then_some(0.0));
        times.push(time);
        states.push(curve);
    }
    Ok(Trajectory {
        flow_order: 2 * j + 1,
        times,
        states,
        conservation_log: log,
        closure_defects: closure,
        normalization_defects: norms,
        stepping: StepInfo { scheme: Scheme::Rk4, dt, steps: per * opts.snapshots, stability_bound: bound },
    })
}

/// The curve grid for a `q` trajectory snapshot, for callers that need one.
pub fn snapshot_grid(t: &Trajectory<CurvatureField>) -> Grid {
    *t.states[0].grid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sech2(x: f64) -> f64 {
        1.0 / x.cosh().powi(2)
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn zero_and_constants_are_fixed() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let opts = EvolveOptions { snapshots: 2, ..Default::default() };
        for c in [0.0, -1.0, 0.7] {
            let t = evolve_q(&CurvatureField::from_fn(g, true, |_| c), 1, 0.5, &opts).unwrap();
            assert!(t.states.last().unwrap().values().iter().all(|v| (v - c).abs() < 1e-13));
        }
    }

    #[test]
    fn translation_flow_is_exact() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let q0 = CurvatureField::from_fn(g, true, |x| x.sin() + 0.5 * (2.0 * x).cos());
        let t = evolve_q(&q0, 0, 0.7, &EvolveOptions::default()).unwrap();
        let want: Vec<f64> = g.nodes().iter().map(|x| (x + 0.7).sin() + 0.5 * (2.0 * (x + 0.7)).cos()).collect();
        assert!(max_diff(t.states.last().unwrap().values(), &want) < 1e-12);
    }

    #[test]
    fn short_soliton_run() {
        let g = Grid::centered(256, 30.0).unwrap();
        let q0 = CurvatureField::from_fn(g, true, |x| -2.0 * sech2(x));
        let opts = EvolveOptions { snapshots: 2, ..Default::default() };
        let t = evolve_q(&q0, 1, 0.2, &opts).unwrap();
        let want: Vec<f64> = g.nodes().iter().map(|x| -2.0 * sech2(x + 0.2)).collect();
        assert!(max_diff(t.states.last().unwrap().values(), &want) < 1e-6);
        let drift = t.conservation_drift();
        assert!(drift.iter().all(|d| *d < 1e-8), "{drift:?}");
    }

    #[test]
    fn rk4_fallback_agrees() {
        let g = Grid::centered(256, 30.0).unwrap();
        let q0 = CurvatureField::from_fn(g, true, |x| -2.0 * sech2(x));
        let opts = EvolveOptions { snapshots: 1, scheme: Scheme::Rk4, ..Default::default() };
        let t = evolve_q(&q0, 1, 0.05, &opts).unwrap();
        let want: Vec<f64> = g.nodes().iter().map(|x| -2.0 * sech2(x + 0.05)).collect();
        assert!(max_diff(t.states.last().unwrap().values(), &want) < 1e-5);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let g = Grid::centered(256, 30.0).unwrap();
        let q0 = CurvatureField::from_fn(g, true, |x| -2.0 * sech2(x));
        let opts = EvolveOptions { dt: Some(1.0), ..Default::default() };
        assert!(matches!(evolve_q(&q0, 1, 1.0, &opts), Err(FlowError::Numerics(NumericsError::CflRejected { .. }))));
    }

    #[test]
    fn under_resolved_data_is_reported() {
        let g = Grid::centered(64, 30.0).unwrap();
        let q0 = CurvatureField::from_fn(g, true, |x| -18.0 * sech2(3.0 * x));
        let opts = EvolveOptions { snapshots: 1, ..Default::default() };
        assert!(matches!(evolve_q(&q0, 1, 0.2, &opts), Err(FlowError::ResolutionLost { .. })));
    }

    #[test]
    fn point_jet_matches_derivatives() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let sp = Spectral::new(g);
        let q: Vec<f64> = g.nodes().iter().map(|x| (x + 0.3).sin()).collect();
        let jet = point_jet(&sp, &sp.forward(&q), 5, 3);
        let x = g.x(5) + 0.3;
        let want = [x.sin(), x.cos(), -x.sin(), -x.cos()];
        for (a, b) in jet.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_frame_and_direct_rotate() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let c = PlaneCurve::from_fn(g, true, |x| [x.cos(), x.sin()]);
        let opts = EvolveOptions { snapshots: 4, ..Default::default() };
        let frame = evolve_curve_frame(&c, 1, 1.0, &opts).unwrap();
        let direct = evolve_curve_direct(&c, 1, 1.0, &opts).unwrap();
        for (i, t) in frame.times.iter().enumerate() {
            let want = PlaneCurve::from_fn(g, true, |x| [(x + t / 2.0).cos(), (x + t / 2.0).sin()]);
            assert!(frame.states[i].max_distance(&want) < 1e-7, "frame t={t}");
            assert!(direct.states[i].max_distance(&want) < 1e-7, "direct t={t}");
        }
    }

    #[test]
    fn reparametrization_flow() {
        let raw = crate::geometry::RawCurve::sample(|s| [s.cos() + 0.2 * (2.0 * s).cos(), 1.5 * s.sin()], 0.0, 2.0 * PI / 128.0, 128, true);
        let c = crate::geometry::reparametrize(&raw, None).unwrap();
        let opts = EvolveOptions { snapshots: 1, ..Default::default() };
        let t = 0.3;
        let direct = evolve_curve_direct(&c, 0, t, &opts).unwrap();
        let frame = evolve_curve_frame(&c, 0, t, &opts).unwrap();
        // γ0(x + t) by trigonometric interpolation
        let sp = Spectral::new(*c.grid());
        let (h1, h2) = (
            sp.forward(&c.points().iter().map(|p| p[0]).collect::<Vec<_>>()),
            sp.forward(&c.points().iter().map(|p| p[1]).collect::<Vec<_>>()),
        );
        let want = PlaneCurve::from_fn(*c.grid(), true, |x| [sp.eval_at(&h1, x + t), sp.eval_at(&h2, x + t)]);
        assert!(direct.states[1].max_distance(&want) < 1e-8);
        assert!(frame.states[1].max_distance(&want) < 1e-8);
    }

    #[test]
    fn circle_keeps_normalization_and_closure() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let c = PlaneCurve::from_fn(g, true, |x| [x.cos(), x.sin()]);
        let opts = EvolveOptions { snapshots: 4, ..Default::default() };
        for t in [evolve_curve_frame(&c, 1, 1.0, &opts).unwrap(), evolve_curve_direct(&c, 1, 1.0, &opts).unwrap()] {
            assert!(t.normalization_defects.iter().all(|d| *d < 1e-8), "{:?}", t.normalization_defects);
            assert!(t.closure_defects.iter().all(|d| d.unwrap() < 1e-6));
        }
    }

    #[test]
    fn line_is_stationary() {
        let g = Grid::centered(64, 20.0).unwrap();
        let c = PlaneCurve::from_fn(g, false, |x| [1.0, x]);
        let opts = EvolveOptions { snapshots: 2, ..Default::default() };
        let frame = evolve_curve_frame(&c, 1, 1.0, &opts).unwrap();
        let direct = evolve_curve_direct(&c, 1, 1.0, &opts).unwrap();
        assert!(frame.states[2].max_distance(&c) < 1e-10);
        assert!(direct.states[2].max_distance(&c) < 1e-10);
        assert!(frame.closure_defects.iter().all(Option::is_none));
    }

    #[test]
    fn ellipse_slides_at_one_eighth() {
        let raw = crate::geometry::RawCurve::sample(|s| [s.cos(), 2.0 * s.sin()], 0.0, 2.0 * PI / 128.0, 128, true);
        let c = crate::geometry::reparametrize(&raw, None).unwrap();
        let sp = Spectral::new(*c.grid());
        let h1 = sp.forward(&c.points().iter().map(|p| p[0]).collect::<Vec<_>>());
        let h2 = sp.forward(&c.points().iter().map(|p| p[1]).collect::<Vec<_>>());
        let opts = EvolveOptions { snapshots: 2, ..Default::default() };
        let frame = evolve_curve_frame(&c, 1, 1.0, &opts).unwrap();
        let direct = evolve_curve_direct(&c, 1, 1.0, &opts).unwrap();
        for (i, t) in frame.times.iter().enumerate() {
            let want = PlaneCurve::from_fn(*c.grid(), true, |x| [sp.eval_at(&h1, x + t / 8.0), sp.eval_at(&h2, x + t / 8.0)]);
            assert!(frame.states[i].max_distance(&want) < 1e-7);
            assert!(direct.states[i].max_distance(&want) < 1e-7);
        }
    }

    fn wavy_closed_curve(n: usize) -> PlaneCurve {
        let raw = crate::geometry::RawCurve::sample(
            |s| {
                let r = 1.0 + 0.1 * (2.0 * s).cos();
                [r * s.cos(), r * s.sin()]
            },
            0.0,
            2.0 * PI / n as f64,
            n,
            true,
        );
        crate::geometry::reparametrize(&raw, None).unwrap()
    }

    #[test]
    fn curvature_is_natural_along_both_methods() {
        let c = wavy_closed_curve(128);
        let q0 = curvature(&c).unwrap();
        let opts = EvolveOptions { snapshots: 2, ..Default::default() };
        let q = evolve_q(&q0, 1, 1.0, &opts).unwrap();
        let frame = evolve_curve_frame(&c, 1, 1.0, &opts).unwrap();
        let direct = evolve_curve_direct(&c, 1, 1.0, &opts).unwrap();
        for i in 0..q.states.len() {
            let want = q.states[i].values();
            assert!(max_diff(curvature(&frame.states[i]).unwrap().values(), want) < 1e-5);
            assert!(max_diff(curvature(&direct.states[i]).unwrap().values(), want) < 1e-5);
            assert!(frame.states[i].max_distance(&direct.states[i]) < 1e-6);
        }
    }

    #[test]
    fn frame_method_is_equivariant() {
        let c = wavy_closed_curve(128);
        let a = Mat2::new(2.0, 0.3, 1.0, 0.65);
        let opts = EvolveOptions { snapshots: 1, ..Default::default() };
        let moved = evolve_curve_frame(&c.transform(&a), 1, 0.3, &opts).unwrap();
        let base = evolve_curve_frame(&c, 1, 0.3, &opts).unwrap();
        assert!(moved.states[1].max_distance(&base.states[1].transform(&a)) < 1e-8);
    }

    #[test]
    fn smooth_periodic_data_conserves() {
        let g = Grid::new(512, 2.0 * PI).unwrap();
        let q0 = CurvatureField::from_fn(g, true, |x| -1.0 + 0.3 * x.cos() + 0.1 * (2.0 * x).sin());
        let t = evolve_q(&q0, 1, 1.0, &EvolveOptions::default()).unwrap();
        let drift = t.conservation_drift();
        assert!(drift.iter().all(|d| *d < 1e-6), "{drift:?}");
    }

    #[test]
    fn flows_one_and_three_commute() {
        let g = Grid::new(128, 2.0 * PI).unwrap();
        let q0 = CurvatureField::from_fn(g, true, |x| -1.0 + 0.3 * x.cos() + 0.1 * (2.0 * x).sin());
        let opts = EvolveOptions { snapshots: 1, ..Default::default() };
        let last = |t: Trajectory<CurvatureField>| t.states.last().unwrap().clone();
        let ab = last(evolve_q(&last(evolve_q(&q0, 1, 0.3, &opts).unwrap()), 2, 0.2, &opts).unwrap());
        let ba = last(evolve_q(&last(evolve_q(&q0, 2, 0.2, &opts).unwrap()), 1, 0.3, &opts).unwrap());
        assert!(max_diff(ab.values(), ba.values()) < 1e-6);
    }
}
