//! The KdV hierarchy generated from `Q(q,λ)² = λI`.
//!
//! `Q = e₁₂λ + Σⱼ Q₋ⱼ λ⁻ʲ` with `Q₋ⱼ = [[A_j, B_j], [C_j, −A_j]]` and
//! `Q₀ = [[0, q/2], [1, 0]]`. Matching powers of λ in `Q² = λI` and in
//! `[∂ₓ + U, Q] = 0` gives
//!
//! ```text
//! C_{j+1}  = −(A_j' + q C_j − B_j)
//! A_{j+1}  = B_j'/2 − q A_j
//! 2B_{j+1} = A_{j+1}' + q C_{j+1} − Σ_{i=0}^{j+1} A_i A_{j+1−i} − Σ_{i=0}^{j} B_i C_{j+1−i}
//! ```

use std::sync::{Mutex, OnceLock};

use num_rational::BigRational;
use serde::Serialize;

use crate::diffpoly::{rat, CompiledPoly, DiffPoly, DiffPolyError};
use crate::numerics::{Mat2, Spectral};

/// Largest order the CLI accepts by default.
pub const DEFAULT_MAX_ORDER: usize = 8;

/// One `Q₋ⱼ = [[A, B], [C, −A]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QEntry {
    pub a: DiffPoly,
    pub b: DiffPoly,
    pub c: DiffPoly,
}

impl QEntry {
    pub fn matrix(&self) -> [[DiffPoly; 2]; 2] {
        [[self.a.clone(), self.b.clone()], [self.c.clone(), -&self.a]]
    }
}

/// `Q₋ⱼ` for `j = 0..=J`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HierarchyTable {
    pub entries: Vec<QEntry>,
}

impl HierarchyTable {
    pub fn order(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn get(&self, j: usize) -> &QEntry {
        &self.entries[j]
    }
}

fn cache() -> &'static Mutex<Vec<QEntry>> {
    static CACHE: OnceLock<Mutex<Vec<QEntry>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(Vec::new()))
}

fn q() -> DiffPoly {
    DiffPoly::q(0)
}

fn next_entry(entries: &[QEntry]) -> QEntry {
    let j = entries.len() - 1;
    let e = &entries[j];
    let c = -(e.a.derivative() + &q() * &e.c - &e.b);
    let a = e.b.derivative().scale(&rat(1, 2)) - &q() * &e.a;
    // A_{j+1} and C_{j+1} join the sums below
    let a_at = |i: usize| if i == j + 1 { &a } else { &entries[i].a };
    let c_at = |i: usize| if i == j + 1 { &c } else { &entries[i].c };
    let mut rhs = a.derivative() + &q() * &c;
    for i in 0..=j + 1 {
        rhs = rhs - a_at(i) * a_at(j + 1 - i);
    }
    for i in 0..=j {
        rhs = rhs - &entries[i].b * c_at(j + 1 - i);
    }
    let b = rhs.scale(&rat(1, 2));
    QEntry { a, b, c }
}

/// The table `Q₋₀ … Q₋_J`. Results are memoized across calls.
pub fn generate(order: usize) -> HierarchyTable {
    let mut entries = cache().lock().unwrap_or_else(|e| e.into_inner());
    if entries.is_empty() {
        entries.push(QEntry { a: DiffPoly::zero(), b: q().scale(&rat(1, 2)), c: DiffPoly::one() });
    }
    while entries.len() <= order {
        let next = next_entry(&entries);
        entries.push(next);
    }
    HierarchyTable { entries: entries[..=order].to_vec() }
}

/// Right-hand side of the `(2j+1)`-th flow: `(B_j − C_{j+1})ₓ − 2q A_j`.
pub fn flow_rhs(j: usize) -> DiffPoly {
    let t = generate(j + 1);
    let (e, next) = (t.get(j), t.get(j + 1));
    (&e.b - &next.c).derivative() - (&q() * &e.a).scale(&rat(2, 1))
}

/// Conserved density of `H_{2j+1}` and its gradient.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HamiltonianEntry {
    pub order: usize,
    pub density: DiffPoly,
    pub gradient: DiffPoly,
}

impl HamiltonianEntry {
    /// `∮ density dx` on periodic samples.
    pub fn value(&self, spectral: &Spectral, q: &[f64]) -> Result<f64, DiffPolyError> {
        let dens = self.density.evaluate(spectral, q)?;
        Ok(dens.iter().sum::<f64>() * spectral.grid().dx())
    }
}

/// `H_{2j+1}` with density `4/(2j+1)·C_{j+1}`.
pub fn hamiltonian(j: usize) -> HamiltonianEntry {
    let c = generate(j + 1).get(j + 1).c.clone();
    let density = c.scale(&rat(4, 2 * j as i64 + 1));
    let gradient = density.variational_derivative();
    HamiltonianEntry { order: 2 * j + 1, density, gradient }
}

/// Polynomial in λ with [`DiffPoly`] coefficients; `coeffs[i]` multiplies `λⁱ`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LambdaPoly {
    pub coeffs: Vec<DiffPoly>,
}

impl LambdaPoly {
    pub fn constant(p: DiffPoly) -> Self {
        LambdaPoly { coeffs: vec![p] }.trimmed()
    }

    pub fn monomial(p: DiffPoly, power: usize) -> Self {
        let mut coeffs = vec![DiffPoly::zero(); power + 1];
        coeffs[power] = p;
        LambdaPoly { coeffs }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.last().is_some_and(DiffPoly::is_zero) {
            self.coeffs.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(DiffPoly::is_zero)
    }

    pub fn coeff(&self, power: usize) -> DiffPoly {
        self.coeffs.get(power).cloned().unwrap_or_default()
    }

    pub fn at_zero(&self) -> DiffPoly {
        self.coeff(0)
    }

    pub fn derivative(&self) -> LambdaPoly {
        LambdaPoly { coeffs: self.coeffs.iter().map(DiffPoly::derivative).collect() }.trimmed()
    }

    pub fn add(&self, o: &LambdaPoly) -> LambdaPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        LambdaPoly { coeffs: (0..n).map(|i| self.coeff(i) + o.coeff(i)).collect() }.trimmed()
    }

    pub fn sub(&self, o: &LambdaPoly) -> LambdaPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        LambdaPoly { coeffs: (0..n).map(|i| self.coeff(i) - o.coeff(i)).collect() }.trimmed()
    }

    pub fn mul(&self, o: &LambdaPoly) -> LambdaPoly {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return LambdaPoly::default();
        }
        let mut coeffs = vec![DiffPoly::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (k, b) in o.coeffs.iter().enumerate() {
                coeffs[i + k] = &coeffs[i + k] + a * b;
            }
        }
        LambdaPoly { coeffs }.trimmed()
    }
}

impl std::fmt::Display for LambdaPoly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format!("({c})"),
                1 => format!("({c})*L"),
                _ => format!("({c})*L^{i}"),
            })
            .collect();
        if parts.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&parts.join(" + "))
        }
    }
}

pub type LaxMatrix = [[LambdaPoly; 2]; 2];

fn lax_mul(a: &LaxMatrix, b: &LaxMatrix) -> LaxMatrix {
    std::array::from_fn(|i| std::array::from_fn(|k| a[i][0].mul(&b[0][k]).add(&a[i][1].mul(&b[1][k]))))
}

fn lax_zip(a: &LaxMatrix, b: &LaxMatrix, f: impl Fn(&LambdaPoly, &LambdaPoly) -> LambdaPoly) -> LaxMatrix {
    std::array::from_fn(|i| std::array::from_fn(|k| f(&a[i][k], &b[i][k])))
}

/// Lax pair of the `(2j+1)`-th flow: `E_x = E·x_part`, `E_t = E·t_part`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LaxPairMatrices {
    pub j: usize,
    pub x_part: LaxMatrix,
    pub t_part: LaxMatrix,
    pub t_part_at_zero: [[DiffPoly; 2]; 2],
}

/// The projection that moves the lower-left entry to the upper-right slot.
pub fn lower_left_to_upper_right(m: &[[DiffPoly; 2]; 2]) -> [[DiffPoly; 2]; 2] {
    [[DiffPoly::zero(), m[1][0].clone()], [DiffPoly::zero(), DiffPoly::zero()]]
}

pub fn lax_pair(j: usize) -> LaxPairMatrices {
    let table = generate(j + 1);
    let zero = LambdaPoly::default;
    let x_part: LaxMatrix = [
        [zero(), LambdaPoly { coeffs: vec![q(), DiffPoly::one()] }],
        [LambdaPoly::constant(DiffPoly::one()), zero()],
    ];
    // (Q λʲ)₊ = e₁₂ λ^{j+1} + Σ_{i≤j} Q₋ᵢ λ^{j−i}
    let mut t_part: LaxMatrix = std::array::from_fn(|_| std::array::from_fn(|_| zero()));
    t_part[0][1] = LambdaPoly::monomial(DiffPoly::one(), j + 1);
    for i in 0..=j {
        let m = table.get(i).matrix();
        for r in 0..2 {
            for c in 0..2 {
                t_part[r][c] = t_part[r][c].add(&LambdaPoly::monomial(m[r][c].clone(), j - i));
            }
        }
    }
    let proj = lower_left_to_upper_right(&table.get(j + 1).matrix());
    t_part[0][1] = t_part[0][1].sub(&LambdaPoly::constant(proj[0][1].clone()));
    let t_part_at_zero = std::array::from_fn(|r| std::array::from_fn(|c| t_part[r][c].at_zero()));
    LaxPairMatrices { j, x_part, t_part, t_part_at_zero }
}

impl LaxPairMatrices {
    /// `t_part_x + [x_part, t_part] − ∂_t x_part` with `q_t = flow_rhs(j)`;
    /// identically zero when the Lax pair encodes the flow.
    pub fn zero_curvature_defect(&self) -> LaxMatrix {
        let u = &self.x_part;
        let v = &self.t_part;
        let vx: LaxMatrix = std::array::from_fn(|r| std::array::from_fn(|c| v[r][c].derivative()));
        let comm = lax_zip(&lax_mul(u, v), &lax_mul(v, u), LambdaPoly::sub);
        let mut out = lax_zip(&vx, &comm, LambdaPoly::add);
        out[0][1] = out[0][1].sub(&LambdaPoly::constant(flow_rhs(self.j)));
        out
    }

    pub fn compile(&self) -> CompiledLax {
        CompiledLax {
            t_part: std::array::from_fn(|r| {
                std::array::from_fn(|c| self.t_part[r][c].coeffs.iter().map(DiffPoly::compile).collect())
            }),
            max_order: self
                .t_part
                .iter()
                .flatten()
                .flat_map(|p| p.coeffs.iter())
                .filter_map(DiffPoly::max_order)
                .max()
                .unwrap_or(0),
        }
    }
}

/// Floating-point `t_part` for frame integration.
#[derive(Clone, Debug)]
pub struct CompiledLax {
    t_part: [[Vec<CompiledPoly>; 2]; 2],
    max_order: u32,
}

impl CompiledLax {
    /// Highest derivative of `q` the t-part needs.
    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    /// `t_part(λ)` at a point with `jet[i] = ∂ˣⁱq`.
    pub fn eval(&self, lambda: f64, jet: &[f64]) -> Mat2 {
        let mut m = Mat2::ZERO;
        for r in 0..2 {
            for c in 0..2 {
                m[(r, c)] = self.t_part[r][c].iter().rev().fold(0.0, |acc, p| acc * lambda + p.eval_point(jet));
            }
        }
        m
    }

    /// `∂t_part/∂λ` at `λ`.
    pub fn eval_lambda_derivative(&self, lambda: f64, jet: &[f64]) -> Mat2 {
        let mut m = Mat2::ZERO;
        for r in 0..2 {
            for c in 0..2 {
                let coeffs = &self.t_part[r][c];
                m[(r, c)] = (1..coeffs.len()).rev().fold(0.0, |acc, i| acc * lambda + i as f64 * coeffs[i].eval_point(jet));
            }
        }
        m
    }
}

/// `x_part(λ) = [[0, λ+q], [1, 0]]`.
pub fn x_matrix(lambda: f64, q: f64) -> Mat2 {
    Mat2::new(0.0, lambda + q, 1.0, 0.0)
}

/// The two Poisson operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PoissonOp {
    /// `L₁ v = v_x`
    L1,
    /// `L₃ v = (v_xxx − 4q v_x − 2q_x v)/4`
    L3,
}

impl PoissonOp {
    pub fn apply_symbolic(self, v: &DiffPoly) -> DiffPoly {
        match self {
            PoissonOp::L1 => v.derivative(),
            PoissonOp::L3 => {
                let vx = v.derivative();
                let vxxx = vx.derivative().derivative();
                (vxxx - (&q() * &vx).scale(&rat(4, 1)) - (&DiffPoly::q(1) * v).scale(&rat(2, 1))).scale(&rat(1, 4))
            }
        }
    }

    /// Same operator on periodic samples of `v` and `q`.
    pub fn apply_numeric(self, spectral: &Spectral, v: &[f64], q: &[f64]) -> Vec<f64> {
        match self {
            PoissonOp::L1 => spectral.derivative(v, 1),
            PoissonOp::L3 => {
                let hv = spectral.forward_clean(v);
                let vx = spectral.derivative_hat(&hv, 1);
                let vxxx = spectral.derivative_hat(&hv, 3);
                let qx = spectral.derivative_hat(&spectral.forward_clean(q), 1);
                (0..v.len()).map(|m| 0.25 * (vxxx[m] - 4.0 * q[m] * vx[m] - 2.0 * qx[m] * v[m])).collect()
            }
        }
    }
}

/// `P = L₁⁻¹L₃` on differential polynomials, using the formal primitive.
pub fn recursion_symbolic(v: &DiffPoly) -> Result<DiffPoly, DiffPolyError> {
    PoissonOp::L3.apply_symbolic(v).integrate_exact()
}

/// How the constant of integration is fixed at each `L₁⁻¹` stage of
/// [`recursion_apply`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Gauge {
    /// Zero-mean primitive at every stage. Agrees with `flow_rhs(j)` modulo
    /// lower flows.
    ZeroMean,
    /// Primitive whose mean equals that of the formal primitive (the
    /// differential polynomial with no constant term); agrees with
    /// `flow_rhs(j)` exactly.
    Formal,
}

/// `(L₃L₁⁻¹)ʲ q_x` on periodic samples.
pub fn recursion_apply(spectral: &Spectral, q: &[f64], j: usize, gauge: Gauge) -> Result<Vec<f64>, DiffPolyError> {
    let mut v = spectral.derivative(q, 1);
    let mut formal = DiffPoly::q(1);
    for _ in 0..j {
        let mut w = spectral.antiderivative_zero_mean(&v)?;
        if gauge == Gauge::Formal {
            formal = formal.integrate_exact()?;
            let vals = formal.evaluate(spectral, q)?;
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            w.iter_mut().for_each(|x| *x += mean);
            formal = PoissonOp::L3.apply_symbolic(&formal);
        }
        v = PoissonOp::L3.apply_numeric(spectral, &w, q);
    }
    Ok(v)
}

/// `−2Pʲ(1)`, the gradient of `H_{2j+1}` by the Lenard recursion.
pub fn lenard_gradient(j: usize) -> Result<DiffPoly, DiffPolyError> {
    let mut v = DiffPoly::one();
    for _ in 0..j {
        v = recursion_symbolic(&v)?;
    }
    Ok(v.scale(&-BigRational::from_integer(2.into())))
}
