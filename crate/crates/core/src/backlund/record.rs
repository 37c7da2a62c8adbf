use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use super::{crossing, simple_factor_eval, BacklundError, SimpleFactor};
use crate::flows::{carry_anchor_frame, evolve_q_recording, EvolveOptions};
use crate::geometry::{curvature, node_frames, stage_samples, substeps_for, CurvatureField, PlaneCurve};
use crate::hierarchy::{flow_rhs, lax_pair, x_matrix, CompiledLax};
use crate::numerics::fd::fd_derivative;
use crate::numerics::{det2, rk4_step, Grid, Mat2, MatPair};

/// `q`, `γ` and `γ_x` at one sample point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub q: f64,
    pub gamma: [f64; 2],
    pub gamma_x: [f64; 2],
}

impl CurvePoint {
    /// `(γ, γ_x)`.
    pub fn frame(&self) -> Mat2 {
        Mat2::from_columns(self.gamma, self.gamma_x)
    }
}

/// Sample points `xs × ts`; both ascending.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Domain {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl Domain {
    pub fn new(xs: Vec<f64>, ts: Vec<f64>) -> Self {
        Domain { xs, ts }
    }

    /// Every node of `grid` at the given times.
    pub fn on_grid(grid: &Grid, ts: Vec<f64>) -> Self {
        Domain { xs: grid.nodes(), ts }
    }
}

/// Extended frame of `q = 0` with `E(0, 0, λ) = I`.
pub(crate) fn stationary_frame(lambda: f64, x: f64, t: f64) -> Mat2 {
    let s = x + lambda * t;
    if lambda > 0.0 {
        let z = lambda.sqrt();
        let (c, sh) = ((z * s).cosh(), (z * s).sinh());
        Mat2::new(c, z * sh, sh / z, c)
    } else if lambda < 0.0 {
        let w = (-lambda).sqrt();
        let (c, sn) = ((w * s).cos(), (w * s).sin());
        Mat2::new(c, -w * sn, sn / w, c)
    } else {
        Mat2::new(1.0, 0.0, x, 1.0)
    }
}

/// `det(m)·m⁻¹`.
pub(crate) fn adjugate(m: Mat2) -> Mat2 {
    let [[a, b], [c, d]] = m.0;
    Mat2::new(d, -b, -c, a)
}

type FrameCache<K> = Mutex<HashMap<K, Arc<Vec<Mat2>>>>;

/// A periodic KdV solution computed numerically, with its extended frames.
///
/// Frames are carried in `t` along the anchor node and then in `x` across
/// each stored snapshot; all evaluations are restricted to grid nodes at
/// snapshot times.
#[derive(Debug)]
pub struct NumericBackground {
    grid: Grid,
    anchor: usize,
    frame0: Mat2,
    times: Vec<f64>,
    states: Vec<CurvatureField>,
    jets: Vec<Vec<f64>>,
    dt: f64,
    magnus_per_snapshot: usize,
    lax: CompiledLax,
    anchor_cache: FrameCache<u64>,
    slice_cache: FrameCache<(usize, u64)>,
    anchor_pairs: OnceLock<Vec<MatPair>>,
    pair_cache: Mutex<HashMap<usize, Arc<Vec<MatPair>>>>,
}

impl NumericBackground {
    /// Evolves `q0` under KdV to `t_end` and fixes `E(x_anchor, 0, λ) = frame0`
    /// for every `λ`. `t_end = 0` gives a single time slice.
    pub fn new(q0: &CurvatureField, anchor: usize, frame0: Mat2, t_end: f64, opts: &EvolveOptions) -> Result<Self, BacklundError> {
        if !q0.periodic() {
            return Err(BacklundError::InvalidInput("numeric backgrounds need a periodic curvature".into()));
        }
        if anchor >= q0.grid().n() {
            return Err(BacklundError::InvalidInput(format!("anchor node {anchor} outside the grid")));
        }
        if (frame0.det() - 1.0).abs() > 1e-10 {
            return Err(BacklundError::InvalidInput(format!("initial frame has det {}", frame0.det())));
        }
        let lax = lax_pair(1).compile();
        let (times, states, jets, dt, per) = if t_end == 0.0 {
            (vec![0.0], vec![q0.clone()], Vec::new(), 0.0, 0)
        } else {
            let run = evolve_q_recording(q0, 1, t_end, opts, Some((anchor, lax.max_order())))?;
            let dt = run.trajectory.stepping.dt;
            (run.trajectory.times, run.trajectory.states, run.anchor_jets, dt, run.steps_per_snapshot / 2)
        };
        Ok(NumericBackground {
            grid: *q0.grid(),
            anchor,
            frame0,
            times,
            states,
            jets,
            dt,
            magnus_per_snapshot: per,
            lax,
            anchor_cache: Mutex::default(),
            slice_cache: Mutex::default(),
            anchor_pairs: OnceLock::new(),
            pair_cache: Mutex::default(),
        })
    }

    /// Background of a closed curve, with `E(0, 0, λ) = (γ, γ_x)` at the anchor.
    pub fn from_curve(c: &PlaneCurve, t_end: f64, opts: &EvolveOptions) -> Result<Self, BacklundError> {
        if !c.closed() {
            return Err(BacklundError::InvalidInput("numeric backgrounds need a closed curve".into()));
        }
        let q = curvature(c)?;
        let anchor = c.grid().anchor();
        NumericBackground::new(&q, anchor, c.frames()[anchor], t_end, opts)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[CurvatureField] {
        &self.states
    }

    /// Time step of the underlying run (zero for a single slice).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub(crate) fn anchor_jets(&self) -> &[Vec<f64>] {
        &self.jets
    }

    pub(crate) fn magnus_per_snapshot(&self) -> usize {
        self.magnus_per_snapshot
    }

    pub fn time_index(&self, t: f64) -> Result<usize, BacklundError> {
        let tol = 1e-9 * self.times.last().copied().unwrap_or(1.0).abs().max(1.0);
        self.times
            .iter()
            .position(|s| (s - t).abs() <= tol)
            .ok_or(BacklundError::OffGrid { x: self.grid.x(self.anchor), t })
    }

    pub(crate) fn node_indices(&self, xs: &[f64], t: f64) -> Result<Vec<usize>, BacklundError> {
        xs.iter().map(|&x| self.grid.node_of(x).ok_or(BacklundError::OffGrid { x, t })).collect()
    }

    fn anchor_frame(&self, i: usize, lambda: f64) -> Mat2 {
        if i == 0 {
            return self.frame0;
        }
        let path = {
            let mut cache = self.anchor_cache.lock().expect("frame cache");
            cache
                .entry(lambda.to_bits())
                .or_insert_with(|| Arc::new(carry_anchor_frame(&self.lax, lambda, &self.jets, self.dt, self.frame0)))
                .clone()
        };
        path[i * self.magnus_per_snapshot]
    }

    fn slice(&self, i: usize, lambda: f64) -> Result<Arc<Vec<Mat2>>, BacklundError> {
        if let Some(s) = self.slice_cache.lock().expect("frame cache").get(&(i, lambda.to_bits())) {
            return Ok(s.clone());
        }
        let g = self.anchor_frame(i, lambda);
        let frames = Arc::new(node_frames(&self.states[i], lambda, self.anchor, g)?.samples);
        self.slice_cache.lock().expect("frame cache").insert((i, lambda.to_bits()), frames.clone());
        Ok(frames)
    }

    /// `(E, ∂E/∂λ)` at `λ = 0` along the anchor, one entry per snapshot.
    fn carry_anchor_pairs(&self) -> Vec<MatPair> {
        let mut out = vec![MatPair(self.frame0, Mat2::ZERO)];
        let mut y = out[0];
        for (s, w) in self.jets.windows(3).step_by(2).enumerate() {
            y = rk4_step(y, 2.0 * self.dt, |stage, MatPair(e, e1)| {
                let jet = &w[(stage.fraction() * 2.0) as usize];
                let (v0, v1) = (self.lax.eval(0.0, jet), self.lax.eval_lambda_derivative(0.0, jet));
                MatPair(e * v0, e1 * v0 + e * v1)
            });
            if (s + 1) % self.magnus_per_snapshot == 0 {
                out.push(y);
            }
        }
        out
    }

    fn slice_pairs(&self, i: usize) -> Arc<Vec<MatPair>> {
        let mut cache = self.pair_cache.lock().expect("frame cache");
        if let Some(s) = cache.get(&i) {
            return s.clone();
        }
        let start = self.anchor_pairs.get_or_init(|| self.carry_anchor_pairs())[i];
        let pairs = Arc::new(pair_x_leg(&self.states[i], self.anchor, start));
        cache.insert(i, pairs.clone());
        pairs
    }
}

/// `(E, E₁)_x = (E·U₀, E₁·U₀ + E·e₁₂)` from node `base` to every node.
fn pair_x_leg(q: &CurvatureField, base: usize, start: MatPair) -> Vec<MatPair> {
    let substeps = substeps_for(q, 0.0);
    let fine = stage_samples(q, substeps);
    let n = q.grid().n();
    let last = if q.periodic() { n } else { n - 1 };
    let h = q.grid().dx() / substeps as f64;
    let mut out = vec![start; last + 1];
    for (dir, target) in [(1_isize, last), (-1, 0)] {
        let mut y = start;
        let mut node = base;
        while node != target {
            for s in 0..substeps {
                let k0 = (2 * substeps * node) as isize + dir * 2 * s as isize;
                y = rk4_step(y, dir as f64 * h, |stage, MatPair(e, e1)| {
                    let k = k0 + dir * (stage.fraction() * 2.0) as isize;
                    let u = x_matrix(0.0, fine[k as usize]);
                    MatPair(e * u, e1 * u + e * Mat2::E12)
                });
            }
            node = (node as isize + dir) as usize;
            out[node] = y;
        }
    }
    out
}

/// A solution dressed by one simple factor.
#[derive(Debug)]
pub struct Dressed {
    parent: SolutionRecord,
    factor: SimpleFactor,
}

impl Dressed {
    pub fn parent(&self) -> &SolutionRecord {
        &self.parent
    }

    pub fn factor(&self) -> SimpleFactor {
        self.factor
    }

    /// `y = E(x, t, k²)⁻¹(−ξ, 1)ᵗ` over `xs`, failing where `y₂` vanishes.
    pub fn solve(&self, xs: &[f64], t: f64) -> Result<Vec<[f64; 2]>, BacklundError> {
        let frames = self.parent.frames(xs, t, self.factor.lambda())?;
        let ys: Vec<[f64; 2]> = frames.iter().map(|e| adjugate(*e).apply([-self.factor.xi, 1.0])).collect();
        let y2: Vec<f64> = ys.iter().map(|y| y[1]).collect();
        let norms: Vec<f64> = ys.iter().map(|y| y[0].hypot(y[1])).collect();
        if let Some((x_lo, x_hi)) = crossing(xs, &y2, &norms) {
            return Err(BacklundError::SingularBT { t, x_lo, x_hi });
        }
        Ok(ys)
    }

    /// `ξ̃ = −y₁/y₂`.
    pub fn xi_tilde(&self, xs: &[f64], t: f64) -> Result<Vec<f64>, BacklundError> {
        Ok(self.solve(xs, t)?.iter().map(|y| -y[0] / y[1]).collect())
    }
}

/// An immutable solution of KdV together with a curve-flow solution and its
/// extended frames `E(x, t, λ)`, where `E(x, t, 0) = C·(γ, γ_x)` for the
/// constant [`SolutionRecord::curve_constant`] `C`.
#[derive(Clone, Debug)]
pub enum SolutionRecord {
    /// `q = 0`, `γ = (1, x)ᵗ`.
    Stationary,
    Numeric(Arc<NumericBackground>),
    Dressed(Arc<Dressed>),
}

impl SolutionRecord {
    pub fn numeric(bg: NumericBackground) -> Self {
        SolutionRecord::Numeric(Arc::new(bg))
    }

    /// The record dressed by `f`; nothing is evaluated until sampled.
    pub fn dress(&self, f: SimpleFactor) -> Self {
        SolutionRecord::Dressed(Arc::new(Dressed { parent: self.clone(), factor: f }))
    }

    /// Numeric background at the root of the dressing chain, if any.
    pub fn background(&self) -> Option<&NumericBackground> {
        match self {
            SolutionRecord::Stationary => None,
            SolutionRecord::Numeric(bg) => Some(bg),
            SolutionRecord::Dressed(d) => d.parent.background(),
        }
    }

    /// Number of BTs applied to the seed.
    pub fn depth(&self) -> usize {
        match self {
            SolutionRecord::Dressed(d) => 1 + d.parent.depth(),
            _ => 0,
        }
    }

    /// `x` at which frames are normalized at `t = 0`.
    pub fn reference_x(&self) -> f64 {
        match self.background() {
            Some(bg) => bg.grid.x(bg.anchor),
            None => 0.0,
        }
    }

    /// `C` with `E(x, t, 0) = C·(γ, γ_x)`.
    pub fn curve_constant(&self) -> Mat2 {
        match self {
            SolutionRecord::Dressed(d) if d.factor.k != 0.0 => {
                simple_factor_eval(d.factor, 0.0) * d.parent.curve_constant() * (1.0 / d.factor.k)
            }
            _ => Mat2::IDENTITY,
        }
    }

    pub fn frames(&self, xs: &[f64], t: f64, lambda: f64) -> Result<Vec<Mat2>, BacklundError> {
        match self {
            SolutionRecord::Stationary => Ok(xs.iter().map(|&x| stationary_frame(lambda, x, t)).collect()),
            SolutionRecord::Numeric(bg) => {
                let i = bg.time_index(t)?;
                let slice = bg.slice(i, lambda)?;
                Ok(bg.node_indices(xs, t)?.into_iter().map(|m| slice[m]).collect())
            }
            SolutionRecord::Dressed(d) => {
                let f = d.factor;
                let xi_t = d.xi_tilde(xs, t)?;
                if lambda == f.lambda() {
                    if f.k != 0.0 {
                        return Err(BacklundError::Unsupported(format!("frame at the pole λ = {lambda}")));
                    }
                    let e0 = d.parent.frames(xs, t, 0.0)?;
                    let e1 = d.parent.frames_e1(xs, t)?;
                    let r = simple_factor_eval(f, 0.0);
                    return Ok((0..xs.len())
                        .map(|m| {
                            let rt = simple_factor_eval(SimpleFactor::new(-xi_t[m], 0.0), 0.0);
                            Mat2::E12 * e0[m] * rt + r * e1[m] * rt + r * e0[m] * Mat2::E12
                        })
                        .collect());
                }
                let e = d.parent.frames(xs, t, lambda)?;
                let r = simple_factor_eval(f, lambda);
                let s = 1.0 / (lambda - f.lambda());
                Ok(e.iter()
                    .zip(&xi_t)
                    .map(|(e, &a)| r * *e * simple_factor_eval(SimpleFactor::new(-a, f.k), lambda) * s)
                    .collect())
            }
        }
    }

    /// `∂E/∂λ` at `λ = 0`.
    pub fn frames_e1(&self, xs: &[f64], t: f64) -> Result<Vec<Mat2>, BacklundError> {
        match self {
            SolutionRecord::Stationary => Ok(xs.iter().map(|&x| Mat2::new(x * x / 2.0, x, t + x.powi(3) / 6.0, x * x / 2.0)).collect()),
            SolutionRecord::Numeric(bg) => {
                let i = bg.time_index(t)?;
                let pairs = bg.slice_pairs(i);
                Ok(bg.node_indices(xs, t)?.into_iter().map(|m| pairs[m].1).collect())
            }
            SolutionRecord::Dressed(d) => {
                let f = d.factor;
                if f.k == 0.0 {
                    return Err(BacklundError::Unsupported("λ-derivative of a frame dressed with k = 0".into()));
                }
                let xi_t = d.xi_tilde(xs, t)?;
                let e0 = d.parent.frames(xs, t, 0.0)?;
                let e1 = d.parent.frames_e1(xs, t)?;
                let r = simple_factor_eval(f, 0.0);
                let k2 = f.lambda();
                Ok((0..xs.len())
                    .map(|m| {
                        let rt = simple_factor_eval(SimpleFactor::new(-xi_t[m], f.k), 0.0);
                        let n0 = r * e0[m] * rt;
                        let n1 = Mat2::E12 * e0[m] * rt + r * e1[m] * rt + r * e0[m] * Mat2::E12;
                        n0 * (-1.0 / (k2 * k2)) + n1 * (-1.0 / k2)
                    })
                    .collect())
            }
        }
    }

    pub fn points(&self, xs: &[f64], t: f64) -> Result<Vec<CurvePoint>, BacklundError> {
        match self {
            SolutionRecord::Stationary => {
                Ok(xs.iter().map(|&x| CurvePoint { q: 0.0, gamma: [1.0, x], gamma_x: [0.0, 1.0] }).collect())
            }
            SolutionRecord::Numeric(bg) => {
                let i = bg.time_index(t)?;
                let slice = bg.slice(i, 0.0)?;
                let q = bg.states[i].values();
                Ok(bg
                    .node_indices(xs, t)?
                    .into_iter()
                    .map(|m| CurvePoint { q: q[m], gamma: slice[m].col(0), gamma_x: slice[m].col(1) })
                    .collect())
            }
            SolutionRecord::Dressed(d) => {
                let SimpleFactor { k, .. } = d.factor;
                let xi_t = d.xi_tilde(xs, t)?;
                let parent = d.parent.points(xs, t)?;
                if k == 0.0 {
                    let e = self.frames(xs, t, 0.0)?;
                    return Ok((0..xs.len())
                        .map(|m| CurvePoint { q: -parent[m].q + 2.0 * xi_t[m] * xi_t[m], gamma: e[m].col(0), gamma_x: e[m].col(1) })
                        .collect());
                }
                Ok(parent
                    .iter()
                    .zip(&xi_t)
                    .map(|(p, &a)| {
                        let (g, gx) = (p.gamma, p.gamma_x);
                        let b = k * k - a * a;
                        CurvePoint {
                            q: -p.q - 2.0 * b,
                            gamma: [(a * g[0] - gx[0]) / k, (a * g[1] - gx[1]) / k],
                            gamma_x: [(b * g[0] + a * gx[0]) / k, (b * g[1] + a * gx[1]) / k],
                        }
                    })
                    .collect())
            }
        }
    }

    /// `(q, q_x, q_xx)`.
    pub fn q_jets(&self, xs: &[f64], t: f64) -> Result<Vec<[f64; 3]>, BacklundError> {
        match self {
            SolutionRecord::Stationary => Ok(vec![[0.0; 3]; xs.len()]),
            SolutionRecord::Numeric(bg) => {
                let i = bg.time_index(t)?;
                let jets = bg.states[i].jets(2);
                Ok(bg.node_indices(xs, t)?.into_iter().map(|m| [jets[0][m], jets[1][m], jets[2][m]]).collect())
            }
            SolutionRecord::Dressed(d) => {
                let k2 = d.factor.lambda();
                let xi_t = d.xi_tilde(xs, t)?;
                let parent = d.parent.q_jets(xs, t)?;
                Ok(parent
                    .iter()
                    .zip(&xi_t)
                    .map(|(&[q, qx, qxx], &a)| {
                        let ax = q - a * a + k2;
                        let axx = qx - 2.0 * a * ax;
                        [-q + 2.0 * (a * a - k2), -qx + 4.0 * a * ax, -qxx + 4.0 * (ax * ax + a * axx)]
                    })
                    .collect())
            }
        }
    }
}

/// The extended frame normalized to `E(x₀, 0, λ) = c0` at the record's
/// reference point `x₀`.
pub fn extended_frame_at(sol: &SolutionRecord, lambda: f64, x: f64, t: f64, c0: Mat2) -> Result<Mat2, BacklundError> {
    if (c0.det() - 1.0).abs() > 1e-10 {
        return Err(BacklundError::InvalidInput(format!("initial frame has det {}", c0.det())));
    }
    let e = sol.frames(&[x], t, lambda)?[0];
    let e00 = sol.frames(&[sol.reference_x()], 0.0, lambda)?[0];
    Ok(c0 * adjugate(e00) * (1.0 / e00.det()) * e)
}

/// Frame-solve data of one BT over a domain.
#[derive(Clone, Debug)]
pub struct BTState {
    pub factor: SimpleFactor,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// `(y₁, y₂)` per time, per `x`.
    pub y: Vec<Vec<[f64; 2]>>,
    pub xi_tilde: Vec<Vec<f64>>,
    pub source: SolutionRecord,
}

#[derive(Clone, Debug)]
pub struct BtOutput {
    pub record: SolutionRecord,
    pub state: BTState,
    /// `(q̃, γ̃, γ̃_x)` per time, per `x`.
    pub slices: Vec<Vec<CurvePoint>>,
}

/// Applies the BT with factor `f` to `sol` on `domain`. `k = 0` gives the
/// variant whose curve comes from the λ-derivative of the frame.
pub fn bt_apply(sol: &SolutionRecord, f: SimpleFactor, domain: &Domain) -> Result<BtOutput, BacklundError> {
    if !(f.xi.is_finite() && f.k.is_finite()) {
        return Err(BacklundError::InvalidInput(format!("non-finite factor {f:?}")));
    }
    let record = sol.dress(f);
    let SolutionRecord::Dressed(d) = &record else { unreachable!() };
    let mut y = Vec::with_capacity(domain.ts.len());
    let mut xi_tilde = Vec::with_capacity(domain.ts.len());
    let mut slices = Vec::with_capacity(domain.ts.len());
    for &t in &domain.ts {
        let ys = d.solve(&domain.xs, t)?;
        xi_tilde.push(ys.iter().map(|v| -v[0] / v[1]).collect());
        y.push(ys);
        slices.push(record.points(&domain.xs, t)?);
    }
    let state = BTState { factor: f, xs: domain.xs.clone(), ts: domain.ts.clone(), y, xi_tilde, source: sol.clone() };
    Ok(BtOutput { record, state, slices })
}

/// The `k = 0` BT, `ξ̃ = (1, ξ)γ_x / (1, ξ)γ` for seeds with `C = I`.
pub fn bt_apply_k0(sol: &SolutionRecord, xi: f64, domain: &Domain) -> Result<BtOutput, BacklundError> {
    bt_apply(sol, SimpleFactor::new(xi, 0.0), domain)
}

/// The four residuals that certify a BT output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// `max |q̃_t − flow_rhs(1)(q̃)|`.
    pub kdv: f64,
    /// `max |det(γ̃, γ̃_x) − 1|`.
    pub normalization: f64,
    /// `max |det(γ̃_xx, γ̃_x) − q̃|`.
    pub curvature: f64,
    /// `max |γ̃_t − (q̃_x/4)γ̃ + (q̃/2)γ̃_x|`.
    pub curve_flow: f64,
}

impl Certificate {
    pub fn max(&self) -> f64 {
        self.kdv.max(self.normalization).max(self.curvature).max(self.curve_flow)
    }
}

/// Nodes at each end of an open grid left out of the residuals.
const EDGE: usize = 8;

/// Re-derives the certificate of `record` at time `t` from samples at the
/// uniformly spaced `xs`, with finite differences in `x` and the five-point
/// stencil of width `h` in `t`. The outermost nodes are left out.
pub fn certificate(record: &SolutionRecord, xs: &[f64], t: f64, h: f64) -> Result<Certificate, BacklundError> {
    if xs.len() < 2 * EDGE + 1 {
        return Err(BacklundError::InvalidInput(format!("need at least {} samples", 2 * EDGE + 1)));
    }
    let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let d = |f: &[f64], o: u32| fd_derivative(f, dx, o);
    let d_points = |p: &[[f64; 2]], o: u32| -> Vec<[f64; 2]> {
        let (a, b): (Vec<f64>, Vec<f64>) = p.iter().map(|v| (v[0], v[1])).unzip();
        d(&a, o).into_iter().zip(d(&b, o)).map(|(u, v)| [u, v]).collect()
    };
    let mut around = Vec::with_capacity(5);
    for m in [-2.0, -1.0, 1.0, 2.0] {
        around.push(record.points(xs, t + m * h)?);
    }
    let now = record.points(xs, t)?;
    let q: Vec<f64> = now.iter().map(|p| p.q).collect();
    let g: Vec<[f64; 2]> = now.iter().map(|p| p.gamma).collect();
    let jets: Vec<Vec<f64>> = (0..=3).map(|o| d(&q, o)).collect();
    let rhs = flow_rhs(1).compile().eval_jets(&jets);
    let gx = d_points(&g, 1);
    let gxx = d_points(&g, 2);
    let stencil = [1.0, -8.0, 8.0, -1.0];
    let d_dt = |f: &dyn Fn(&CurvePoint) -> f64, m: usize| {
        stencil.iter().zip(&around).map(|(w, s)| w * f(&s[m])).sum::<f64>() / (12.0 * h)
    };
    let mut c = Certificate { kdv: 0.0, normalization: 0.0, curvature: 0.0, curve_flow: 0.0 };
    for m in EDGE..xs.len() - EDGE {
        let qt = d_dt(&|p| p.q, m);
        c.kdv = c.kdv.max((qt - rhs[m]).abs());
        c.normalization = c.normalization.max((det2(g[m], gx[m]) - 1.0).abs());
        c.curvature = c.curvature.max((det2(gxx[m], gx[m]) - q[m]).abs());
        for i in 0..2 {
            let gt = d_dt(&|p| p.gamma[i], m);
            let want = jets[1][m] / 4.0 * g[m][i] - q[m] / 2.0 * gx[m][i];
            c.curve_flow = c.curve_flow.max((gt - want).abs());
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rk4_matrix, Axis};

    fn soliton_domain() -> Domain {
        Domain::new((0..=200).map(|i| -5.0 + 0.05 * i as f64).collect(), vec![-0.3, 0.0, 0.4])
    }

    #[test]
    fn stationary_frame_solves_both_legs() {
        for lambda in [0.7, -0.5, 0.0] {
            let x_leg = rk4_matrix(Mat2::IDENTITY, |_| x_matrix(lambda, 0.0), (0.0, 1.3), 2000, Axis::X).unwrap().last();
            let v = Mat2::new(0.0, lambda * lambda, lambda, 0.0);
            let full = rk4_matrix(x_leg, |_| v, (0.0, -0.8), 2000, Axis::T).unwrap().last();
            assert!((full - stationary_frame(lambda, 1.3, -0.8)).max_abs() < 1e-12, "λ = {lambda}");
        }
        assert_eq!(stationary_frame(0.0, 2.0, 5.0), Mat2::new(1.0, 0.0, 2.0, 1.0));
        assert!((stationary_frame(1e-12, 2.0, 5.0) - Mat2::new(1.0, 0.0, 2.0, 1.0)).max_abs() < 1e-10);
    }

    #[test]
    fn stationary_lambda_derivative() {
        let s = SolutionRecord::Stationary;
        let (x, t, h) = (0.7, -0.4, 1e-4);
        let fd = (s.frames(&[x], t, h).unwrap()[0] - s.frames(&[x], t, -h).unwrap()[0]) * (0.5 / h);
        assert!((fd - s.frames_e1(&[x], t).unwrap()[0]).max_abs() < 1e-7);
    }

    #[test]
    fn soliton_from_stationary_seed() {
        let dom = soliton_domain();
        for k in [1.0, 0.6] {
            let out = bt_apply(&SolutionRecord::Stationary, SimpleFactor::new(0.0, k), &dom).unwrap();
            for (i, &t) in dom.ts.iter().enumerate() {
                for (m, &x) in dom.xs.iter().enumerate() {
                    let th = k * x + k.powi(3) * t;
                    let p = out.slices[i][m];
                    assert!((out.state.xi_tilde[i][m] - k * th.tanh()).abs() < 1e-12);
                    assert!((p.q + 2.0 * k * k / th.cosh().powi(2)).abs() < 1e-10);
                    assert!((p.gamma[0] - th.tanh()).abs() < 1e-10);
                    assert!((p.gamma[1] - (x * th.tanh() - 1.0 / k)).abs() < 1e-10);
                    assert!((det2(p.gamma, p.gamma_x) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn singular_bt_reports_crossing() {
        let dom = Domain::new((0..=100).map(|i| -2.0 + 0.04 * i as f64).collect(), vec![0.0]);
        match bt_apply(&SolutionRecord::Stationary, SimpleFactor::new(2.0, 1.0), &dom) {
            Err(BacklundError::SingularBT { t, x_lo, x_hi }) => {
                let root = (-0.5_f64).atanh();
                assert_eq!(t, 0.0);
                assert!(x_lo <= root && root <= x_hi && x_hi - x_lo < 0.1, "[{x_lo}, {x_hi}]");
            }
            other => panic!("expected SingularBT, got {other:?}"),
        }
    }

    #[test]
    fn dressed_frames_match_curves() {
        let one = SolutionRecord::Stationary.dress(SimpleFactor::new(0.3, 1.0));
        let two = one.dress(SimpleFactor::new(0.0, 1.7));
        let xs: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        for rec in [&one, &two] {
            let c = rec.curve_constant();
            assert!((c.det() - 1.0).abs() < 1e-12);
            let e = rec.frames(&xs, 0.2, 0.0).unwrap();
            for (p, e) in rec.points(&xs, 0.2).unwrap().iter().zip(&e) {
                assert!((c * p.frame() - *e).max_abs() < 1e-11 * e.max_abs().max(1.0));
            }
        }
    }

    #[test]
    fn dressed_frame_equations() {
        let rec = SolutionRecord::Stationary.dress(SimpleFactor::new(0.2, 1.0)).dress(SimpleFactor::new(-0.1, 1.5));
        let (x, t, h, lambda) = (0.4, 0.1, 1e-4, 0.3);
        let at = |x: f64, t: f64| rec.frames(&[x], t, lambda).unwrap()[0];
        let e = at(x, t);
        assert!((e.det() - 1.0).abs() < 1e-12);
        let jets = rec.q_jets(&[x], t).unwrap()[0];
        let ex = (at(x + h, t) - at(x - h, t)) * (0.5 / h);
        assert!((ex - e * x_matrix(lambda, jets[0])).max_abs() < 1e-7);
        let v = lax_pair(1).compile().eval(lambda, &jets);
        let et = (at(x, t + h) - at(x, t - h)) * (0.5 / h);
        assert!((et - e * v).max_abs() < 1e-6);
        let q = |x: f64| rec.points(&[x], t).unwrap()[0].q;
        assert!(((q(x + h) - q(x - h)) / (2.0 * h) - jets[1]).abs() < 1e-7);
        assert!(((q(x + h) - 2.0 * q(x) + q(x - h)) / (h * h) - jets[2]).abs() < 1e-5);
    }

    #[test]
    fn dressed_lambda_derivative() {
        let rec = SolutionRecord::Stationary.dress(SimpleFactor::new(0.3, 1.2));
        let (x, t, h) = (-0.6, 0.25, 1e-4);
        let fd = (rec.frames(&[x], t, h).unwrap()[0] - rec.frames(&[x], t, -h).unwrap()[0]) * (0.5 / h);
        assert!((fd - rec.frames_e1(&[x], t).unwrap()[0]).max_abs() < 1e-7);
    }

    #[test]
    fn k0_on_stationary_is_trivial() {
        let dom = Domain::new(vec![-1.0, 0.0, 2.0], vec![0.0, 1.0]);
        let out = bt_apply_k0(&SolutionRecord::Stationary, 0.0, &dom).unwrap();
        for (row, slice) in out.state.xi_tilde.iter().zip(&out.slices) {
            for (a, p) in row.iter().zip(slice) {
                assert_eq!(*a, 0.0);
                assert_eq!(p.q, 0.0);
            }
        }
    }

    #[test]
    fn k0_on_soliton_passes_certificate() {
        let seed = SolutionRecord::Stationary.dress(SimpleFactor::new(0.0, 1.0));
        let xs: Vec<f64> = (0..=500).map(|i| -0.5 + 0.002 * i as f64).collect();
        let out = bt_apply_k0(&seed, 0.5, &Domain::new(xs.clone(), vec![0.0])).unwrap();
        let a = &out.state.xi_tilde[0];
        let q = seed.points(&xs, 0.0).unwrap();
        let ax = fd_derivative(a, 0.002, 1);
        for m in 0..xs.len() {
            assert!((ax[m] - (q[m].q - a[m] * a[m])).abs() < 1e-7);
            assert!((out.slices[0][m].q - (-q[m].q + 2.0 * a[m] * a[m])).abs() < 1e-12);
        }
        let c = certificate(&out.record, &xs, 0.0, 1e-3).unwrap();
        assert!(c.max() < 1e-6, "{c:?}");
    }

    #[test]
    fn certificate_of_two_levels() {
        let rec = SolutionRecord::Stationary.dress(SimpleFactor::new(0.0, 1.0)).dress(SimpleFactor::new(0.0, 1.6));
        let xs: Vec<f64> = (0..=1000).map(|i| -5.0 + 0.01 * i as f64).collect();
        let c = certificate(&rec, &xs, 0.3, 1e-3).unwrap();
        assert!(c.max() < 1e-5, "{c:?}");
    }

    fn soliton_background(t_end: f64, snapshots: usize, anchor_x: f64, lambda_frame: Option<(&SolutionRecord, f64)>) -> NumericBackground {
        let grid = Grid::centered(1024, 40.0).unwrap();
        let q0 = CurvatureField::from_fn(grid, true, |x| -2.0 / x.cosh().powi(2));
        let anchor = grid.node_of(anchor_x).unwrap();
        let frame0 = match lambda_frame {
            Some((rec, lambda)) => rec.frames(&[anchor_x], 0.0, lambda).unwrap()[0],
            None => Mat2::IDENTITY,
        };
        let opts = EvolveOptions { max_dt: 2.5e-4, snapshots, ..EvolveOptions::default() };
        NumericBackground::new(&q0, anchor, frame0, t_end, &opts).unwrap()
    }

    #[test]
    fn numeric_flat_background_matches_closed_form() {
        let grid = Grid::centered(64, 2.0 * std::f64::consts::PI).unwrap();
        let q0 = CurvatureField::from_fn(grid, true, |_| 0.0);
        let opts = EvolveOptions { snapshots: 2, ..EvolveOptions::default() };
        let rec = SolutionRecord::numeric(NumericBackground::new(&q0, grid.anchor(), Mat2::IDENTITY, 0.5, &opts).unwrap());
        let xs = grid.nodes();
        for lambda in [0.8, -0.6, 0.0] {
            let e = rec.frames(&xs, 0.5, lambda).unwrap();
            for (x, e) in xs.iter().zip(&e) {
                let want = stationary_frame(lambda, *x, 0.5);
                assert!((*e - want).max_abs() < 1e-9 * want.max_abs(), "λ = {lambda}, x = {x}");
            }
        }
        let e1 = rec.frames_e1(&xs, 0.5).unwrap();
        let s1 = SolutionRecord::Stationary.frames_e1(&xs, 0.5).unwrap();
        for (a, b) in e1.iter().zip(&s1) {
            assert!((*a - *b).max_abs() < 1e-9 * (1.0 + b.max_abs()));
        }
    }

    #[test]
    fn numeric_frames_are_path_independent() {
        let lambda = 0.5;
        let first = SolutionRecord::numeric(soliton_background(0.4, 2, 0.0, None));
        let second = SolutionRecord::numeric(soliton_background(0.4, 2, 3.125, Some((&first, lambda))));
        let xs: Vec<f64> = first.background().unwrap().grid().nodes();
        for &t in &[0.2, 0.4] {
            let a = first.frames(&xs, t, lambda).unwrap();
            let b = second.frames(&xs, t, lambda).unwrap();
            let worst = a.iter().zip(&b).map(|(a, b)| (*a - *b).max_abs() / a.max_abs().max(1.0)).fold(0.0, f64::max);
            assert!(worst < 1e-8, "t = {t}: {worst:e}");
        }
    }

    #[test]
    fn numeric_background_passes_certificate() {
        let rec = SolutionRecord::numeric(soliton_background(0.2, 40, 0.0, None));
        let out = bt_apply(&rec, SimpleFactor::new(0.0, 1.5), &Domain::new(vec![0.0], vec![0.1])).unwrap();
        let xs = rec.background().unwrap().grid().nodes();
        let c = certificate(&out.record, &xs, 0.1, 0.005).unwrap();
        assert!(c.max() < 1e-5, "{c:?}");
    }

    #[test]
    fn k0_on_numeric_seed() {
        let grid = Grid::centered(1024, 20.0).unwrap();
        let q0 = CurvatureField::from_fn(grid, true, |x| -2.0 / x.cosh().powi(2));
        let opts = EvolveOptions { max_dt: 2.5e-4, snapshots: 20, ..EvolveOptions::default() };
        let rec = SolutionRecord::numeric(NumericBackground::new(&q0, grid.anchor(), Mat2::IDENTITY, 0.1, &opts).unwrap());
        let xs: Vec<f64> = grid.nodes().into_iter().filter(|x| x.abs() <= 0.9).collect();
        let out = bt_apply_k0(&rec, 0.0, &Domain::new(xs.clone(), vec![0.05])).unwrap();
        let c = certificate(&out.record, &xs, 0.05, 0.005).unwrap();
        assert!(c.curvature < 1e-6, "{c:?}");
        let a = &out.state.xi_tilde[0];
        let q = rec.points(&xs, 0.05).unwrap();
        let ax = fd_derivative(a, grid.dx(), 1);
        for m in EDGE..xs.len() - EDGE {
            assert!((ax[m] - (q[m].q - a[m] * a[m])).abs() < 1e-7, "x = {}", xs[m]);
        }
    }

    #[test]
    fn extended_frame_normalization() {
        let rec = SolutionRecord::Stationary.dress(SimpleFactor::new(0.1, 1.0));
        let c0 = Mat2::new(2.0, 1.0, 1.0, 1.0);
        assert!((extended_frame_at(&rec, 0.3, 0.0, 0.0, c0).unwrap() - c0).max_abs() < 1e-13);
        let e = extended_frame_at(&SolutionRecord::Stationary, 0.49, 1.0, 0.5, Mat2::IDENTITY).unwrap();
        let th = 0.7 * 1.0 + 0.7_f64.powi(3) * 0.5;
        assert!((e - Mat2::new(th.cosh(), 0.7 * th.sinh(), th.sinh() / 0.7, th.cosh())).max_abs() < 1e-13);
        assert!(extended_frame_at(&rec, 0.3, 0.0, 0.0, Mat2::IDENTITY * 2.0).is_err());
    }
}
