//! Central affine geometry of plane curves.
//!
//! A curve is normalized when `det(γ, γ_x) = 1`; its curvature is
//! `q = det(γ_xx, γ_x)`, equivalently `γ_xx = qγ`. The frame `g = (γ, γ_x)`
//! solves `g_x = g·[[0, q], [1, 0]]`.
//!
//! Closed curves use spectral derivatives. Open curves use finite
//! differences and are flagged as lower accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diffpoly::{DiffPoly, DiffPolyError};
use crate::numerics::fd::{cumulative_integral, fd_derivative, interpolate};
use crate::numerics::{det2, rk4_matrix_staged, Axis, Grid, Mat2, Mat2Path, NumericsError, Spectral, Stage};

/// Largest `|det(γ, γ_x) − 1|` accepted by [`curvature`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;
/// Holonomy within this distance of the identity counts as closed.
pub const CLOSURE_TOLERANCE: f64 = 1e-6;
/// Spectral tail below which a curvature field counts as resolved.
pub const RESOLVED_TAIL: f64 = 1e-8;
/// Upper bound for `h·√max(|q|, 1)` in frame integration.
pub(crate) const FRAME_STEP_SCALE: f64 = 0.005;
const INTERPOLATION_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate curve: det(γ, γ_s) vanishes or changes sign near sample {index}")]
    DegenerateCurve { index: usize },
    #[error("curve is not normalized: max |det(γ, γ_x) − 1| = {defect:e}")]
    NotNormalized { defect: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    DiffPoly(#[from] DiffPolyError),
}

/// 17 significant digits, locale independent.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Derivatives on a grid, spectral when periodic and finite-difference otherwise.
#[derive(Clone, Debug)]
pub struct Differentiator {
    grid: Grid,
    spectral: Option<Spectral>,
}

impl Differentiator {
    pub fn new(grid: Grid, periodic: bool) -> Self {
        Differentiator { grid, spectral: periodic.then(|| Spectral::new(grid)) }
    }

    pub fn periodic(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn spectral(&self) -> Option<&Spectral> {
        self.spectral.as_ref()
    }

    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        if order == 0 {
            return f.to_vec();
        }
        match &self.spectral {
            Some(sp) => sp.derivative_hat(&sp.forward_clean(f), order),
            None => fd_derivative(f, self.grid.dx(), order),
        }
    }

    pub fn derivative_points(&self, pts: &[[f64; 2]], order: u32) -> Vec<[f64; 2]> {
        let (a, b) = split(pts);
        zip(&self.derivative(&a, order), &self.derivative(&b, order))
    }
}

fn split(pts: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    (pts.iter().map(|p| p[0]).collect(), pts.iter().map(|p| p[1]).collect())
}

fn zip(a: &[f64], b: &[f64]) -> Vec<[f64; 2]> {
    a.iter().zip(b).map(|(&u, &v)| [u, v]).collect()
}

/// Curve samples with an arbitrary, uniformly spaced parameter `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCurve {
    pub s: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl RawCurve {
    /// Samples `f` at `n` uniform parameters from `start` with spacing `ds`.
    pub fn sample(f: impl Fn(f64) -> [f64; 2], start: f64, ds: f64, n: usize, closed: bool) -> Self {
        let s: Vec<f64> = (0..n).map(|i| start + i as f64 * ds).collect();
        let points = s.iter().map(|&v| f(v)).collect();
        RawCurve { s, points, closed }
    }
}

/// Samples of γ on a uniform grid in the curve parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneCurve {
    grid: Grid,
    points: Vec<[f64; 2]>,
    closed: bool,
}

impl PlaneCurve {
    pub fn new(grid: Grid, points: Vec<[f64; 2]>, closed: bool) -> Result<Self, GeometryError> {
        if points.len() != grid.n() {
            return Err(NumericsError::LengthMismatch { got: points.len(), want: grid.n() }.into());
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidInput("non-finite curve sample".into()));
        }
        Ok(PlaneCurve { grid, points, closed })
    }

    /// Samples `f(x)` at the nodes of `grid`.
    pub fn from_fn(grid: Grid, closed: bool, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let points = grid.nodes().into_iter().map(f).collect();
        PlaneCurve { grid, points, closed }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn differentiator(&self) -> Differentiator {
        Differentiator::new(self.grid, self.closed)
    }

    /// `γ_x` at every node.
    pub fn tangent(&self) -> Vec<[f64; 2]> {
        self.differentiator().derivative_points(&self.points, 1)
    }

    /// Frames `(γ, γ_x)` at every node.
    pub fn frames(&self) -> Vec<Mat2> {
        self.points.iter().zip(self.tangent()).map(|(g, t)| Mat2::from_columns(*g, t)).collect()
    }

    /// `det(γ, γ_x)` at every node.
    pub fn normalization(&self) -> Vec<f64> {
        self.points.iter().zip(self.tangent()).map(|(g, t)| det2(*g, t)).collect()
    }

    /// `max |det(γ, γ_x) − 1|`.
    pub fn normalization_defect(&self) -> f64 {
        self.normalization().iter().fold(0.0_f64, |m, d| m.max((d - 1.0).abs()))
    }

    /// `A·γ`.
    pub fn transform(&self, a: &Mat2) -> PlaneCurve {
        PlaneCurve { grid: self.grid, points: self.points.iter().map(|p| a.apply(*p)).collect(), closed: self.closed }
    }

    pub fn max_distance(&self, other: &PlaneCurve) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .fold(0.0_f64, |m, (a, b)| m.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs()))
    }

    /// CSV with header `x,g1,g2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,g1,g2\n");
        for (x, p) in self.grid.nodes().iter().zip(&self.points) {
            let _ = writeln!(out, "{},{},{}", format_float(*x), format_float(p[0]), format_float(p[1]));
        }
        out
    }

    /// Single-polyline SVG with an automatic view box.
    pub fn to_svg(&self) -> String {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let (w, h) = (hi[0] - lo[0] + 2.0 * pad, hi[1] - lo[1] + 2.0 * pad);
        let mut pts: Vec<String> =
            self.points.iter().map(|p| format!("{:.6},{:.6}", p[0], hi[1] + lo[1] - p[1])).collect();
        if self.closed {
            pts.push(pts[0].clone());
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.6} {:.6} {:.6} {:.6}\">\n\
             <polyline fill=\"none\" stroke=\"black\" stroke-width=\"{:.6}\" points=\"{}\"/>\n</svg>\n",
            lo[0] - pad,
            lo[1] - pad,
            w,
            h,
            0.005 * w.max(h),
            pts.join(" ")
        )
    }
}

/// Parses CSV with header `x,g1,g2` (extra columns ignored).
pub fn read_curve_csv(text: &str, closed: bool) -> Result<RawCurve, GeometryError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| GeometryError::InvalidInput("empty curve file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| GeometryError::InvalidInput(format!("missing column '{name}' in header '{header}'")))
    };
    let (ix, i1, i2) = (find("x")?, find("g1")?, find("g2")?);
    let mut s = Vec::new();
    let mut points = Vec::new();
    for (row, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| -> Result<f64, GeometryError> {
            f.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| GeometryError::InvalidInput(format!("bad value in row {}", row + 2)))
        };
        s.push(get(ix)?);
        points.push([get(i1)?, get(i2)?]);
    }
    if points.len() < 2 {
        return Err(GeometryError::InvalidInput("curve needs at least two samples".into()));
    }
    Ok(RawCurve { s, points, closed })
}

/// Sampled curvature `q` on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureField {
    grid: Grid,
    q: Vec<f64>,
    periodic: bool,
    /// Spectral tail below [`RESOLVED_TAIL`]; always false for open curves.
    pub resolved: bool,
    /// Computed with one-sided finite differences.
    pub degraded: bool,
}

impl CurvatureField {
    pub fn new(grid: Grid, q: Vec<f64>, periodic: bool) -> Result<Self, GeometryError> {
        if q.len() != grid.n() {
            return Err(NumericsError::LengthMismatch { got: q.len(), want: grid.n() }.into());
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidInput("non-finite curvature sample".into()));
        }
        let resolved = periodic && Spectral::new(grid).tail_ratio(&q) < RESOLVED_TAIL;
        Ok(CurvatureField { grid, q, periodic, resolved, degraded: !periodic })
    }

    pub fn from_fn(grid: Grid, periodic: bool, f: impl Fn(f64) -> f64) -> Self {
        let q = grid.nodes().into_iter().map(f).collect();
        CurvatureField::new(grid, q, periodic).expect("finite samples")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    /// Pointwise values of a differential polynomial in this `q`.
    pub fn evaluate(&self, p: &DiffPoly) -> Result<Vec<f64>, GeometryError> {
        if self.periodic {
            Ok(p.evaluate(&Spectral::new(self.grid), &self.q)?)
        } else {
            Ok(p.compile().eval_jets(&self.jets(p.max_order().unwrap_or(0))))
        }
    }

    /// `∂ˣᵒq` for `o = 0..=max_order`, with no resolution check.
    pub fn jets(&self, max_order: u32) -> Vec<Vec<f64>> {
        if self.periodic {
            let sp = Spectral::new(self.grid);
            let hat = sp.forward_clean(&self.q);
            (0..=max_order).map(|o| if o == 0 { self.q.clone() } else { sp.derivative_hat(&hat, o) }).collect()
        } else {
            let d = Differentiator::new(self.grid, false);
            (0..=max_order).map(|o| d.derivative(&self.q, o)).collect()
        }
    }

    /// CSV with header `x,q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,q\n");
        for (x, q) in self.grid.nodes().iter().zip(&self.q) {
            let _ = writeln!(out, "{},{}", format_float(*x), format_float(*q));
        }
        out
    }
}

/// A scalar `ξ` and its lift `X = −(ξ_x/2)γ + ξγ_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    pub xi: Vec<f64>,
    pub lifted: Vec<[f64; 2]>,
}

/// Resamples a curve onto a uniform grid in central affine arclength.
///
/// `n_out` defaults to the raw sample count. For closed curves the raw
/// count must be a power of two and the samples cover one period.
pub fn reparametrize(raw: &RawCurve, n_out: Option<usize>) -> Result<PlaneCurve, GeometryError> {
    let n = raw.points.len();
    if raw.s.len() != n || n < 2 {
        return Err(GeometryError::InvalidInput("parameter and sample counts differ".into()));
    }
    let ds = (raw.s[n - 1] - raw.s[0]) / (n - 1) as f64;
    if !(ds > 0.0) {
        return Err(GeometryError::InvalidInput("parameter must be increasing".into()));
    }
    let n_out = n_out.unwrap_or(n);
    let s_grid = Grid::with_origin(n, n as f64 * ds, raw.s[0])?;
    let diff = Differentiator::new(s_grid, raw.closed);
    let mut points = raw.points.clone();
    let mut det = det_along(&diff, &points);
    if det.iter().sum::<f64>() < 0.0 {
        points = if raw.closed {
            (0..n).map(|i| raw.points[(n - i) % n]).collect()
        } else {
            raw.points.iter().rev().copied().collect()
        };
        det = det_along(&diff, &points);
    }
    let peak = det.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(index) = det.iter().position(|&d| d <= 1e-10 * peak) {
        return Err(GeometryError::DegenerateCurve { index });
    }
    if raw.closed {
        reparametrize_closed(&s_grid, &points, &det, n_out)
    } else {
        reparametrize_open(&s_grid, &points, &det, n_out)
    }
}

fn det_along(diff: &Differentiator, points: &[[f64; 2]]) -> Vec<f64> {
    let ts = diff.derivative_points(points, 1);
    points.iter().zip(&ts).map(|(g, t)| det2(*g, *t)).collect()
}

fn reparametrize_closed(
    s_grid: &Grid,
    points: &[[f64; 2]],
    det: &[f64],
    n_out: usize,
) -> Result<PlaneCurve, GeometryError> {
    let sp = Spectral::new(*s_grid);
    let n = det.len();
    let mean = det.iter().sum::<f64>() / n as f64;
    let prim_hat = sp.forward(&sp.primitive_of_oscillation(det));
    let det_hat = sp.forward(det);
    let (g1, g2) = split(points);
    let (h1, h2) = (sp.forward(&g1), sp.forward(&g2));
    let s0 = s_grid.origin();
    let p0 = sp.eval_at(&prim_hat, s0);
    let length = mean * s_grid.period();
    let grid = Grid::new(n_out, length)?;
    let mut out = Vec::with_capacity(n_out);
    for x in grid.nodes() {
        let mut s = s0 + x / mean;
        for _ in 0..60 {
            let fx = mean * (s - s0) + sp.eval_at(&prim_hat, s) - p0 - x;
            let step = fx / sp.eval_at(&det_hat, s);
            s -= step;
            if step.abs() < 1e-15 * s_grid.period() {
                break;
            }
        }
        out.push([sp.eval_at(&h1, s), sp.eval_at(&h2, s)]);
    }
    PlaneCurve::new(grid, out, true)
}

fn reparametrize_open(
    s_grid: &Grid,
    points: &[[f64; 2]],
    det: &[f64],
    n_out: usize,
) -> Result<PlaneCurve, GeometryError> {
    let n = det.len();
    let ds = s_grid.dx();
    let xs = cumulative_integral(det, ds);
    // put x = 0 at the sample whose parameter is closest to 0, when in range
    let r0 = ((-s_grid.origin()) / ds).clamp(0.0, (n - 1) as f64);
    let x_shift = interpolate(&xs, r0, INTERPOLATION_WIDTH);
    let x_lo = -x_shift;
    let x_hi = xs[n - 1] - x_shift;
    let mut dx = (x_hi - x_lo) / (n_out - 1) as f64;
    // shrink the spacing slightly so that x = 0 is a node
    let m0 = (-x_lo / dx - 1e-9).ceil();
    if m0 >= 1.0 {
        dx = -x_lo / m0;
    }
    let grid = Grid::with_origin(n_out, n_out as f64 * dx, x_lo)?;
    let (g1, g2) = split(points);
    let mut out = Vec::with_capacity(n_out);
    let mut r = 0.0_f64;
    for m in 0..n_out {
        let target = x_lo + m as f64 * dx + x_shift;
        for _ in 0..60 {
            let fx = interpolate(&xs, r, INTERPOLATION_WIDTH) - target;
            let step = fx / (interpolate(det, r, INTERPOLATION_WIDTH) * ds);
            r = (r - step).clamp(0.0, (n - 1) as f64);
            if step.abs() < 1e-14 * n as f64 {
                break;
            }
        }
        out.push([interpolate(&g1, r, INTERPOLATION_WIDTH), interpolate(&g2, r, INTERPOLATION_WIDTH)]);
    }
    PlaneCurve::new(grid, out, false)
}

/// `q = det(γ_xx, γ_x)`.
pub fn curvature(c: &PlaneCurve) -> Result<CurvatureField, GeometryError> {
    let diff = c.differentiator();
    let t = diff.derivative_points(&c.points, 1);
    let tt = diff.derivative_points(&c.points, 2);
    let defect = c.points.iter().zip(&t).fold(0.0_f64, |m, (g, t)| m.max((det2(*g, *t) - 1.0).abs()));
    if defect > NORMALIZATION_TOLERANCE {
        return Err(GeometryError::NotNormalized { defect });
    }
    let q = tt.iter().zip(&t).map(|(a, b)| det2(*a, *b)).collect();
    CurvatureField::new(c.grid, q, c.closed)
}

/// Values of `q` at RK4 stage points, `fine[k]` at `x_0 + k·h/2`.
pub(crate) fn stage_samples(q: &CurvatureField, substeps: usize) -> Vec<f64> {
    let factor = 2 * substeps;
    let n = q.grid.n();
    if q.periodic {
        let mut fine = Spectral::new(q.grid).refine(&q.q, factor);
        fine.push(fine[0]);
        fine
    } else {
        (0..=(n - 1) * factor)
            .map(|k| interpolate(&q.q, k as f64 / factor as f64, INTERPOLATION_WIDTH))
            .collect()
    }
}

/// RK4 substeps per grid cell for `g_x = g·[[0,q],[1,0]]`.
pub fn frame_substeps(q: &CurvatureField) -> usize {
    substeps_for(q, 0.0)
}

pub(crate) fn substeps_for(q: &CurvatureField, lambda: f64) -> usize {
    let rate = q.q.iter().fold(1.0_f64, |m, v| m.max((v + lambda).abs()));
    let h = FRAME_STEP_SCALE / rate.sqrt();
    (q.grid.dx() / h).ceil().max(1.0) as usize
}

/// Integrates `g_x = g·[[0, λ+q], [1, 0]]` over node indices `from → to`
/// (either direction) starting from `g_from`.
pub(crate) fn integrate_frame(
    fine: &[f64],
    substeps: usize,
    dx: f64,
    lambda: f64,
    from: usize,
    to: usize,
    g_from: Mat2,
) -> Result<Mat2Path, GeometryError> {
    let h = dx / substeps as f64;
    let steps = from.abs_diff(to) * substeps;
    let forward = to >= from;
    let base = 2 * substeps * from;
    let coef = |i: usize, stage: Stage| {
        let off = 2 * i + (stage.fraction() * 2.0) as usize;
        let k = if forward { base + off } else { base - off };
        Mat2::new(0.0, lambda + fine[k], 1.0, 0.0)
    };
    let h = if forward { h } else { -h };
    Ok(rk4_matrix_staged(g_from, coef, from as f64 * dx, h, steps, Axis::X)?)
}

/// Result of [`reconstruct`].
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub curve: PlaneCurve,
    /// Frames at the nodes (plus the node at `x = origin + L` for periodic `q`).
    pub frames: Mat2Path,
    /// `max |γ(L) − γ(0)|`, periodic `q` only.
    pub closure_defect: Option<f64>,
}

/// Integrates the frame equation from `g0` at the node closest to `x = 0`
/// and returns `γ` = first column.
pub fn reconstruct(q: &CurvatureField, g0: Mat2) -> Result<Reconstruction, GeometryError> {
    reconstruct_from(q, g0, q.grid.anchor())
}

/// As [`reconstruct`] with the initial frame given at node `base`.
pub fn reconstruct_from(q: &CurvatureField, g0: Mat2, base: usize) -> Result<Reconstruction, GeometryError> {
    if (g0.det() - 1.0).abs() > 1e-10 {
        return Err(GeometryError::InvalidInput(format!("initial frame has det {}", g0.det())));
    }
    let n = q.grid.n();
    let frames = node_frames(q, 0.0, base, g0)?;
    let closure_defect = q.periodic.then(|| {
        let (a, b) = (frames.samples[0].col(0), frames.samples[n].col(0));
        (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
    });
    let holonomy_closed = q.periodic && {
        let h = frames.samples[0].inverse().map(|inv| inv * frames.samples[n]);
        h.is_some_and(|h| (h - Mat2::IDENTITY).max_abs() <= CLOSURE_TOLERANCE)
    };
    let points = frames.samples[..n].iter().map(|g| g.col(0)).collect();
    let curve = PlaneCurve::new(q.grid, points, holonomy_closed)?;
    Ok(Reconstruction { curve, frames, closure_defect })
}

/// Solution of `g_x = g·[[0, λ+q], [1, 0]]` with `g = g0` at node `base`,
/// sampled at every node (plus the node at `x = origin + L` for periodic `q`).
pub fn node_frames(q: &CurvatureField, lambda: f64, base: usize, g0: Mat2) -> Result<Mat2Path, GeometryError> {
    let n = q.grid.n();
    let substeps = substeps_for(q, lambda);
    let fine = stage_samples(q, substeps);
    let dx = q.grid.dx();
    let last = if q.periodic { n } else { n - 1 };
    let up = integrate_frame(&fine, substeps, dx, lambda, base, last, g0)?;
    let down = integrate_frame(&fine, substeps, dx, lambda, base, 0, g0)?;
    let mut samples = Vec::with_capacity(last + 1);
    samples.extend(down.samples.iter().step_by(substeps).rev());
    samples.extend(up.samples.iter().step_by(substeps).skip(1));
    let positions = (0..=last).map(|m| q.grid.origin() + m as f64 * dx).collect();
    Ok(Mat2Path {
        axis: Axis::X,
        positions,
        samples,
        sl2: true,
        det_drift: up.det_drift.max(down.det_drift),
    })
}

/// `g(L)` for `g(0) = I`; for open fields, the frame at the last node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Holonomy {
    pub matrix: Mat2,
    pub is_closed: bool,
}

pub fn holonomy(q: &CurvatureField) -> Result<Holonomy, GeometryError> {
    let substeps = frame_substeps(q);
    let fine = stage_samples(q, substeps);
    let last = if q.periodic { q.grid.n() } else { q.grid.n() - 1 };
    let path = integrate_frame(&fine, substeps, q.grid.dx(), 0.0, 0, last, Mat2::IDENTITY)?;
    let matrix = path.last();
    Ok(Holonomy { matrix, is_closed: (matrix - Mat2::IDENTITY).max_abs() <= CLOSURE_TOLERANCE })
}

/// `X = −(ξ_x/2)γ + ξγ_x`.
pub fn lift(xi: &[f64], c: &PlaneCurve) -> Result<TangentField, GeometryError> {
    if xi.len() != c.points.len() {
        return Err(NumericsError::LengthMismatch { got: xi.len(), want: c.points.len() }.into());
    }
    let diff = c.differentiator();
    let xi_x = diff.derivative(xi, 1);
    let t = diff.derivative_points(&c.points, 1);
    let lifted = (0..xi.len())
        .map(|m| {
            let (a, b) = (-0.5 * xi_x[m], xi[m]);
            [a * c.points[m][0] + b * t[m][0], a * c.points[m][1] + b * t[m][1]]
        })
        .collect();
    Ok(TangentField { xi: xi.to_vec(), lifted })
}

/// `max |det(X, γ_x) + det(γ, X_x)|`; zero for fields tangent to normalized curves.
pub fn tangency_defect(c: &PlaneCurve, x: &[[f64; 2]]) -> f64 {
    let diff = c.differentiator();
    let t = diff.derivative_points(&c.points, 1);
    let xx = diff.derivative_points(x, 1);
    (0..x.len()).fold(0.0_f64, |m, i| m.max((det2(x[i], t[i]) + det2(c.points[i], xx[i])).abs()))
}
