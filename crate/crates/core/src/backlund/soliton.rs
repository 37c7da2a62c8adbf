//! Closed-form solitons built from the stationary seed, and the algebraic
//! composition of two BTs.

use serde::Serialize;
use serde_json::{json, Value};

use super::record::{adjugate, stationary_frame, BTState, BtOutput, CurvePoint, SolutionRecord};
use super::{crossing, simple_factor_eval, BacklundError, SimpleFactor, SINGULAR_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolitonPoint {
    pub gamma: [f64; 2],
    pub gamma_x: [f64; 2],
    pub q: f64,
    /// `ξ̃` of the last level.
    pub xi_tilde: f64,
    /// The family is not certified smooth on all of `ℝ²`.
    pub singular_family: bool,
}

fn new_point(parent: &SolitonPoint, a: f64, k: f64, singular_family: bool) -> SolitonPoint {
    let (g, gx) = (parent.gamma, parent.gamma_x);
    let b = k * k - a * a;
    SolitonPoint {
        gamma: [(a * g[0] - gx[0]) / k, (a * g[1] - gx[1]) / k],
        gamma_x: [(b * g[0] + a * gx[0]) / k, (b * g[1] + a * gx[1]) / k],
        q: -parent.q - 2.0 * b,
        xi_tilde: a,
        singular_family,
    }
}

fn seed(x: f64) -> SolitonPoint {
    SolitonPoint { gamma: [1.0, x], gamma_x: [0.0, 1.0], q: 0.0, xi_tilde: 0.0, singular_family: false }
}

/// One BT of the stationary seed: `ξ̃ = k(ξ + k tanh θ)/(k + ξ tanh θ)` with
/// `θ = kx + k³t` (`k` taken positive in `θ`); singular somewhere iff `|ξ| > |k|`.
pub fn one_soliton(f: SimpleFactor, x: f64, t: f64) -> Result<SolitonPoint, BacklundError> {
    let z = f.k.abs();
    if z == 0.0 {
        return Err(BacklundError::InvalidInput("closed forms need k ≠ 0".into()));
    }
    let th = (z * x + z.powi(3) * t).tanh();
    let den = z + f.xi * th;
    if den.abs() <= SINGULAR_EPS * (z + f.xi.abs()) {
        return Err(BacklundError::SingularBT { t, x_lo: x, x_hi: x });
    }
    let a = z * (f.xi + z * th) / den;
    Ok(new_point(&seed(x), a, f.k, f.xi.abs() > z))
}

/// Successive BTs of the stationary seed, each applied to the previous
/// undressed frame. One and two levels are closed forms; two levels are
/// certified smooth for `ξ₁ = ξ₂ = 0`, `k₂ > k₁ > 0`. Longer chains and
/// `k = 0` levels are evaluated through dressed records.
pub fn soliton_curve(levels: &[SimpleFactor], x: f64, t: f64) -> Result<SolitonPoint, BacklundError> {
    match levels {
        [] => Err(BacklundError::InvalidInput("no levels".into())),
        _ if levels.iter().any(|f| f.k == 0.0) || levels.len() > 2 => chained(levels, x, t),
        [f] => one_soliton(*f, x, t),
        [f1, f2] => {
            let p1 = one_soliton(*f1, x, t)?;
            let l2 = f2.lambda();
            let e_inv = adjugate(stationary_frame(l2, x, t));
            let m = simple_factor_eval(SimpleFactor::new(p1.xi_tilde, f1.k), l2)
                * e_inv
                * simple_factor_eval(SimpleFactor::new(-f1.xi, f1.k), l2);
            let y = m.apply([-f2.xi, 1.0]);
            if y[1].abs() <= SINGULAR_EPS * y[0].hypot(y[1]) {
                return Err(BacklundError::SingularBT { t, x_lo: x, x_hi: x });
            }
            let smooth = f1.xi == 0.0 && f2.xi == 0.0 && f2.k > f1.k && f1.k > 0.0;
            Ok(new_point(&p1, -y[0] / y[1], f2.k, !smooth))
        }
        _ => unreachable!(),
    }
}

fn chained(levels: &[SimpleFactor], x: f64, t: f64) -> Result<SolitonPoint, BacklundError> {
    let mut record = SolutionRecord::Stationary;
    for f in levels {
        record = record.dress(*f);
    }
    let SolutionRecord::Dressed(d) = &record else { unreachable!() };
    let xi_tilde = d.xi_tilde(&[x], t)?[0];
    let p = record.points(&[x], t)?[0];
    Ok(SolitonPoint { gamma: p.gamma, gamma_x: p.gamma_x, q: p.q, xi_tilde, singular_family: true })
}

/// `ξ̃₁₂` for levels `(0, k₁)`, `(0, k₂)` composed by permutability, with
/// `m_i = k_i x + k_i³ t`.
pub fn two_soliton_xi(k1: f64, k2: f64, x: f64, t: f64) -> f64 {
    let (m1, m2) = (k1 * x + k1.powi(3) * t, k2 * x + k2.powi(3) * t);
    -k1 * m1.tanh()
        + (k1 * k1 - k2 * k2) * ((m1 + m2).cosh() + (m1 - m2).cosh())
            / ((k1 - k2) * (m1 + m2).sinh() + (k1 + k2) * (m1 - m2).sinh())
}

/// Numerator and denominator of `ξ̃₁₂` for the sequential levels `(0, k₁)`,
/// `(0, k₂)`.
pub fn smooth_two_soliton_parts(k1: f64, k2: f64, x: f64, t: f64) -> (f64, f64) {
    let (m1, m2) = (k1 * x + k1.powi(3) * t, k2 * x + k2.powi(3) * t);
    let (s1, c1, s2, c2) = (m1.sinh(), m1.cosh(), m2.sinh(), m2.cosh());
    let num = -2.0 * (k1 * k2 * s1 * c1 * c2 - k2 * k2 * s2 * c1 * c1 + k1 * k1 * s2);
    let den = c1 * ((k2 - k1) * (m1 + m2).cosh() + (k1 + k2) * (m1 - m2).cosh());
    (num, den)
}

pub fn smooth_two_soliton_xi(k1: f64, k2: f64, x: f64, t: f64) -> f64 {
    let (num, den) = smooth_two_soliton_parts(k1, k2, x, t);
    num / den
}

/// Second-level solution composed from two first-level BTs of one record.
#[derive(Clone, Debug)]
pub struct Permuted {
    pub k1: f64,
    pub k2: f64,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub xi_tilde: Vec<Vec<f64>>,
    /// `(q₁₂, γ₁₂, γ₁₂_x)` per time, per `x`.
    pub slices: Vec<Vec<CurvePoint>>,
}

/// `ξ̃₁₂ = −ξ̃₁ + (k₁² − k₂²)/(ξ̃₁ − ξ̃₂)`, `q₁₂ = −q₁ + 2(ξ̃₁₂² − k₂²)` and
/// `γ₁₂ = (ξ̃₁₂γ₁ − γ₁_x)/k₂`, where `sol1` is the output of `state1`'s BT.
pub fn permute(state1: &BTState, state2: &BTState, sol1: &BtOutput) -> Result<Permuted, BacklundError> {
    let (k1, k2) = (state1.factor.k, state2.factor.k);
    if k2 == 0.0 || k1 * k1 == k2 * k2 {
        return Err(BacklundError::InvalidInput(format!("need k₂ ≠ 0 and k₁² ≠ k₂², got {k1}, {k2}")));
    }
    if state1.xs != state2.xs || state1.ts != state2.ts || sol1.state.xs != state1.xs || sol1.state.ts != state1.ts {
        return Err(BacklundError::InvalidInput("BT states on different domains".into()));
    }
    let d = k1 * k1 - k2 * k2;
    let mut xi_tilde = Vec::with_capacity(state1.ts.len());
    let mut slices = Vec::with_capacity(state1.ts.len());
    for (i, &t) in state1.ts.iter().enumerate() {
        let (a1, a2) = (&state1.xi_tilde[i], &state2.xi_tilde[i]);
        let gap: Vec<f64> = a1.iter().zip(a2).map(|(u, v)| u - v).collect();
        if let Some((x_lo, x_hi)) = crossing(&state1.xs, &gap, &vec![1.0; gap.len()]) {
            return Err(BacklundError::CoincidentFactors { t, x_lo, x_hi });
        }
        let a12: Vec<f64> = a1.iter().zip(&gap).map(|(u, g)| -u + d / g).collect();
        let slice = sol1.slices[i]
            .iter()
            .zip(&a12)
            .map(|(p, &a)| {
                let (g, gx) = (p.gamma, p.gamma_x);
                let b = k2 * k2 - a * a;
                CurvePoint {
                    q: -p.q - 2.0 * b,
                    gamma: [(a * g[0] - gx[0]) / k2, (a * g[1] - gx[1]) / k2],
                    gamma_x: [(b * g[0] + a * gx[0]) / k2, (b * g[1] + a * gx[1]) / k2],
                }
            })
            .collect();
        xi_tilde.push(a12);
        slices.push(slice);
    }
    Ok(Permuted { k1, k2, xs: state1.xs.clone(), ts: state1.ts.clone(), xi_tilde, slices })
}

/// Metadata of the closed-form families.
pub fn catalog() -> Value {
    json!({
        "seed": {
            "q": "0",
            "gamma": "(1, x)",
            "frame": "[[cosh(z s), z sinh(z s)], [sinh(z s)/z, cosh(z s)]], s = x + z^2 t, lambda = z^2"
        },
        "families": [
            {
                "name": "one-soliton",
                "levels": 1,
                "parameters": ["xi", "k"],
                "theta": "k x + k^3 t",
                "xi_tilde": "k (xi + k tanh(theta)) / (k + xi tanh(theta))",
                "q": "2 (xi_tilde^2 - k^2)",
                "gamma": "(xi_tilde (1, x) - (0, 1)) / k",
                "smooth_when": "|xi| <= |k|",
                "example": {"xi": 0.0, "k": 1.0, "q": "-2 sech^2(x + t)", "gamma": "(tanh(x + t), x tanh(x + t) - 1)"}
            },
            {
                "name": "two-soliton (permutability)",
                "levels": 2,
                "parameters": ["k1", "k2"],
                "m_i": "k_i x + k_i^3 t",
                "xi_tilde": "-k1 tanh(m1) + (k1^2 - k2^2)(cosh(m1+m2) + cosh(m1-m2)) / ((k1-k2) sinh(m1+m2) + (k1+k2) sinh(m1-m2))",
                "q": "2 k1^2 sech^2(m1) + 2 (xi_tilde^2 - k2^2)",
                "smooth_when": "never (singular where k1 tanh(m1) = k2 tanh(m2))"
            },
            {
                "name": "two-soliton (sequential)",
                "levels": 2,
                "parameters": ["k1", "k2"],
                "m_i": "k_i x + k_i^3 t",
                "xi_tilde": "-2 (k1 k2 sinh(m1) cosh(m1) cosh(m2) - k2^2 sinh(m2) cosh(m1)^2 + k1^2 sinh(m2)) / (cosh(m1) ((k2-k1) cosh(m1+m2) + (k1+k2) cosh(m1-m2)))",
                "q": "2 k1^2 sech^2(m1) + 2 (xi_tilde^2 - k2^2)",
                "gamma": "(xi_tilde gamma_1 - (gamma_1)_x) / k2",
                "smooth_when": "k2 > k1 > 0"
            }
        ]
    })
}
