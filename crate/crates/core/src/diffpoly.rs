//! Differential polynomials in one function `q(x)` with exact rational coefficients.
//!
//! A monomial is a multiset of derivative orders: `[0, 0, 1]` is `q²·q_x`.
//! Rendering writes `qN` for the N-th derivative, e.g. `1/16*q3 - 3/8*q*q1`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::numerics::{tail_ratio_hat, NumericsError, Spectral};

/// Largest acceptable spectral tail (relative) of the highest derivative
/// needed by [`DiffPoly::evaluate`].
pub const RESOLUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffPolyError {
    #[error("not a total derivative: {0}")]
    NotExactDerivative(String),
    #[error("under-resolved: spectral tail {tail:e} of derivative order {order} exceeds {tolerance:e}")]
    Resolution { order: u32, tail: f64, tolerance: f64 },
    #[error("cannot parse differential polynomial: {0}")]
    Parse(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Rational `n/d`.
pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Sorted multiset of derivative orders.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn new(mut orders: Vec<u32>) -> Self {
        orders.sort_unstable();
        Monomial(orders)
    }

    pub fn orders(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn max_order(&self) -> Option<u32> {
        self.0.last().copied()
    }

    pub fn multiplicity(&self, order: u32) -> usize {
        self.0.iter().filter(|&&o| o == order).count()
    }

    fn times(&self, other: &Monomial) -> Monomial {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Monomial::new(v)
    }

    fn without_one(&self, order: u32) -> Monomial {
        let mut v = self.0.clone();
        let pos = v.iter().position(|&o| o == order).expect("order present");
        v.remove(pos);
        Monomial(v)
    }

    fn with_one(&self, order: u32) -> Monomial {
        let mut v = self.0.clone();
        v.push(order);
        Monomial::new(v)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        let mut first = true;
        let mut i = 0;
        while i < self.0.len() {
            let o = self.0[i];
            let mut e = 1;
            while i + e < self.0.len() && self.0[i + e] == o {
                e += 1;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if o == 0 {
                f.write_str("q")?;
            } else {
                write!(f, "q{o}")?;
            }
            if e > 1 {
                write!(f, "^{e}")?;
            }
            i += e;
        }
        Ok(())
    }
}

/// Polynomial in `q, q_x, q_xx, …` with rational coefficients. Zero
/// coefficients are never stored, so structural equality is mathematical
/// equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DiffPoly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl DiffPoly {
    pub fn zero() -> Self {
        DiffPoly::default()
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        Self::term(c, Monomial::one())
    }

    /// The `order`-th derivative of `q`.
    pub fn q(order: u32) -> Self {
        Self::term(BigRational::one(), Monomial(vec![order]))
    }

    pub fn term(c: BigRational, m: Monomial) -> Self {
        let mut p = DiffPoly::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, BigRational)>) -> Self {
        let mut p = DiffPoly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Highest derivative order present; `None` for constants.
    pub fn max_order(&self) -> Option<u32> {
        self.terms.keys().filter_map(Monomial::max_order).max()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn constant_term(&self) -> BigRational {
        self.coefficient(&Monomial::one())
    }

    pub fn scale(&self, c: &BigRational) -> DiffPoly {
        if c.is_zero() {
            return DiffPoly::zero();
        }
        DiffPoly { terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect() }
    }

    /// Terms of the given total degree.
    pub fn homogeneous_part(&self, degree: usize) -> DiffPoly {
        DiffPoly {
            terms: self.terms.iter().filter(|(m, _)| m.degree() == degree).map(|(m, c)| (m.clone(), c.clone())).collect(),
        }
    }

    /// Total x-derivative.
    pub fn derivative(&self) -> DiffPoly {
        let mut out = DiffPoly::zero();
        for (m, c) in &self.terms {
            for i in 0..m.0.len() {
                let mut v = m.0.clone();
                v[i] += 1;
                out.add_term(Monomial::new(v), c.clone());
            }
        }
        out
    }

    pub fn nth_derivative(&self, n: u32) -> DiffPoly {
        (0..n).fold(self.clone(), |p, _| p.derivative())
    }

    /// Partial derivative with respect to the jet variable `q_order`.
    pub fn partial(&self, order: u32) -> DiffPoly {
        let mut out = DiffPoly::zero();
        for (m, c) in &self.terms {
            let e = m.multiplicity(order);
            if e > 0 {
                out.add_term(m.without_one(order), c * BigRational::from_integer(BigInt::from(e)));
            }
        }
        out
    }

    /// Euler operator `Σᵢ (−D)ⁱ ∂p/∂qᵢ`.
    pub fn variational_derivative(&self) -> DiffPoly {
        let Some(top) = self.max_order() else {
            return DiffPoly::zero();
        };
        let mut out = DiffPoly::zero();
        for i in 0..=top {
            let mut t = self.partial(i);
            for _ in 0..i {
                t = -t.derivative();
            }
            out = out + t;
        }
        out
    }

    /// The primitive `r` (without constant term) with `derivative(r) = self`.
    pub fn integrate_exact(&self) -> Result<DiffPoly, DiffPolyError> {
        if !self.variational_derivative().is_zero() {
            return Err(DiffPolyError::NotExactDerivative(format!(
                "{self} has nonzero variational derivative"
            )));
        }
        let mut rest = self.clone();
        let mut primitive = DiffPoly::zero();
        while !rest.is_zero() {
            let top = match rest.max_order() {
                Some(n) if n > 0 => n,
                _ => {
                    return Err(DiffPolyError::NotExactDerivative(format!("{self} leaves remainder {rest}")));
                }
            };
            let mut lead = DiffPoly::zero();
            for (m, c) in &rest.terms {
                match m.multiplicity(top) {
                    0 => {}
                    1 => lead.add_term(m.without_one(top), c.clone()),
                    _ => {
                        return Err(DiffPolyError::NotExactDerivative(format!(
                            "{self} is nonlinear in q{top}"
                        )));
                    }
                }
            }
            // ∫ lead d(q_{top-1}): its total derivative reproduces lead·q_top
            let mut step = DiffPoly::zero();
            for (m, c) in &lead.terms {
                let e = m.multiplicity(top - 1) as i64 + 1;
                step.add_term(m.with_one(top - 1), c / BigRational::from_integer(BigInt::from(e)));
            }
            rest = rest - step.derivative();
            primitive = primitive + step;
        }
        Ok(primitive)
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self)
    }

    /// Pointwise values on periodic samples of `q`, with derivatives taken spectrally.
    pub fn evaluate(&self, spectral: &Spectral, q: &[f64]) -> Result<Vec<f64>, DiffPolyError> {
        let n = spectral.grid().n();
        if q.len() != n {
            return Err(NumericsError::LengthMismatch { got: q.len(), want: n }.into());
        }
        let top = self.max_order().unwrap_or(0);
        let hat = spectral.forward_clean(q);
        let mut jets = Vec::with_capacity(top as usize + 1);
        jets.push(q.to_vec());
        for o in 1..=top {
            jets.push(spectral.derivative_hat(&hat, o));
        }
        let top_hat = if top == 0 { hat } else { spectral.forward(&jets[top as usize]) };
        let tail = tail_ratio_hat(&top_hat);
        if tail > RESOLUTION_TOLERANCE {
            return Err(DiffPolyError::Resolution { order: top, tail, tolerance: RESOLUTION_TOLERANCE });
        }
        Ok(self.compile().eval_jets(&jets))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}

/// Floating-point form of a [`DiffPoly`] for fast pointwise evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<u32>)>,
    max_order: u32,
}

impl CompiledPoly {
    pub fn new(p: &DiffPoly) -> Self {
        let terms = p
            .terms
            .iter()
            .map(|(m, c)| (c.to_f64().expect("finite coefficient"), m.0.clone()))
            .collect();
        CompiledPoly { terms, max_order: p.max_order().unwrap_or(0) }
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value at one point given `jet[i] = ∂ˣⁱq`.
    pub fn eval_point(&self, jet: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, orders)| orders.iter().fold(*c, |acc, &o| acc * jet[o as usize]))
            .sum()
    }

    /// Values at every node given `jets[i][m] = ∂ˣⁱq(x_m)`.
    pub fn eval_jets(&self, jets: &[Vec<f64>]) -> Vec<f64> {
        let n = jets[0].len();
        let mut out = vec![0.0; n];
        for (c, orders) in &self.terms {
            for (m, slot) in out.iter_mut().enumerate() {
                *slot += orders.iter().fold(*c, |acc, &o| acc * jets[o as usize][m]);
            }
        }
        out
    }
}

fn render_coeff(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for DiffPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c.is_negative() {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if c.is_negative() { " - " } else { " + " })?;
            }
            if m.0.is_empty() {
                f.write_str(&render_coeff(&mag))?;
            } else if mag.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", render_coeff(&mag))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTerm {
    monomial: Vec<u32>,
    coeff: String,
}

impl Serialize for DiffPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<JsonTerm> = self
            .terms
            .iter()
            .map(|(m, c)| JsonTerm { monomial: m.0.clone(), coeff: format!("{}/{}", c.numer(), c.denom()) })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiffPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<JsonTerm>::deserialize(d)?;
        let mut p = DiffPoly::zero();
        for t in v {
            let c = parse_rational(&t.coeff).map_err(serde::de::Error::custom)?;
            p.add_term(Monomial::new(t.monomial), c);
        }
        Ok(p)
    }
}

fn parse_rational(s: &str) -> Result<BigRational, DiffPolyError> {
    let bad = || DiffPolyError::Parse(format!("bad number '{s}'"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.trim().parse().map_err(|_| bad())?)),
    }
}

fn parse_factor(tok: &str) -> Result<(BigRational, Vec<u32>), DiffPolyError> {
    let tok = tok.trim();
    if tok.is_empty() {
        return Err(DiffPolyError::Parse("empty factor".into()));
    }
    let Some(rest) = tok.strip_prefix('q') else {
        return Ok((parse_rational(tok)?, Vec::new()));
    };
    let (order, power) = match rest.split_once('^') {
        Some((o, p)) => (o, p.trim().parse::<usize>().map_err(|_| DiffPolyError::Parse(format!("bad power in '{tok}'")))?),
        None => (rest, 1),
    };
    let order = if order.trim().is_empty() {
        0
    } else {
        order.trim().parse::<u32>().map_err(|_| DiffPolyError::Parse(format!("bad order in '{tok}'")))?
    };
    Ok((BigRational::one(), vec![order; power]))
}

impl FromStr for DiffPoly {
    type Err = DiffPolyError;

    /// Parses the rendering produced by `Display`: terms joined by `+`/`-`,
    /// factors joined by `*`, each factor a rational or `qN[^e]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(DiffPolyError::Parse("empty input".into()));
        }
        let mut p = DiffPoly::zero();
        let mut start = 0;
        let bytes = s.as_bytes();
        let mut pieces = Vec::new();
        for i in 1..=bytes.len() {
            if i == bytes.len() || ((bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'^') {
                pieces.push(&s[start..i]);
                start = i;
            }
        }
        for piece in pieces {
            let (sign, body) = match piece.as_bytes()[0] {
                b'-' => (-BigRational::one(), &piece[1..]),
                b'+' => (BigRational::one(), &piece[1..]),
                _ => (BigRational::one(), piece),
            };
            let mut coeff = sign;
            let mut orders = Vec::new();
            for tok in body.split('*') {
                let (c, o) = parse_factor(tok)?;
                coeff *= c;
                orders.extend(o);
            }
            p.add_term(Monomial::new(orders), coeff);
        }
        Ok(p)
    }
}

impl Add for &DiffPoly {
    type Output = DiffPoly;
    fn add(self, o: &DiffPoly) -> DiffPoly {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &DiffPoly {
    type Output = DiffPoly;
    fn sub(self, o: &DiffPoly) -> DiffPoly {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &DiffPoly {
    type Output = DiffPoly;
    fn mul(self, o: &DiffPoly) -> DiffPoly {
        let mut out = DiffPoly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                out.add_term(m1.times(m2), c1 * c2);
            }
        }
        out
    }
}

impl Neg for &DiffPoly {
    type Output = DiffPoly;
    fn neg(self) -> DiffPoly {
        DiffPoly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for DiffPoly {
            type Output = DiffPoly;
            fn $f(self, o: DiffPoly) -> DiffPoly {
                (&self).$f(&o)
            }
        }
        impl $tr<&DiffPoly> for DiffPoly {
            type Output = DiffPoly;
            fn $f(self, o: &DiffPoly) -> DiffPoly {
                (&self).$f(o)
            }
        }
        impl $tr<DiffPoly> for &DiffPoly {
            type Output = DiffPoly;
            fn $f(self, o: DiffPoly) -> DiffPoly {
                self.$f(&o)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for DiffPoly {
    type Output = DiffPoly;
    fn neg(self) -> DiffPoly {
        -&self
    }
}

impl Mul<&BigRational> for &DiffPoly {
    type Output = DiffPoly;
    fn mul(self, c: &BigRational) -> DiffPoly {
        self.scale(c)
    }
}

impl Mul<BigRational> for DiffPoly {
    type Output = DiffPoly;
    fn mul(self, c: BigRational) -> DiffPoly {
        self.scale(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;
    use proptest::prelude::*;
    use proptest::strategy::ValueTree;
    use std::f64::consts::PI;

    fn p(s: &str) -> DiffPoly {
        s.parse().unwrap()
    }

    #[test]
    fn render_and_parse_roundtrip() {
        let x = p("1/16*q3 - 3/8*q*q1");
        assert_eq!(x.to_string(), "1/16*q3 - 3/8*q*q1");
        assert_eq!(p("q^2*q1 + 2").to_string(), "2 + q^2*q1");
        assert_eq!(DiffPoly::zero().to_string(), "0");
        assert_eq!(p("-q2").to_string(), "-q2");
        assert_eq!(p("q - q"), DiffPoly::zero());
    }

    #[test]
    fn json_shape() {
        let x = p("1/4*q3 - 3/2*q*q1");
        let v = x.to_json();
        assert_eq!(v[0]["monomial"], serde_json::json!([3]));
        assert_eq!(v[0]["coeff"], "1/4");
        assert_eq!(v[1]["monomial"], serde_json::json!([0, 1]));
        assert_eq!(v[1]["coeff"], "-3/2");
        let back: DiffPoly = serde_json::from_value(v).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(p("q^2").derivative(), p("2*q*q1"));
        assert_eq!(p("q1*q2").derivative(), p("q2^2 + q1*q3"));
        assert_eq!(p("7").derivative(), DiffPoly::zero());
        let c2 = p("3/8*q^2 - 1/8*q2");
        assert_eq!(c2.derivative(), p("3/4*q*q1 - 1/8*q3"));
        assert_eq!(c2.derivative().scale(&rat(-1, 2)), p("1/16*q3 - 3/8*q*q1"));
    }

    #[test]
    fn variational_examples() {
        assert_eq!(p("1/2*q^2").variational_derivative(), p("q"));
        assert_eq!(p("-1/8*q1^2 - 1/4*q^3").variational_derivative(), p("1/4*q2 - 3/4*q^2"));
        assert_eq!(p("q2").variational_derivative(), DiffPoly::zero());
    }

    #[test]
    fn integrate_examples() {
        assert_eq!(p("2*q*q1").integrate_exact().unwrap(), p("q^2"));
        assert_eq!(p("q3 - 6*q*q1").integrate_exact().unwrap(), p("q2 - 3*q^2"));
        assert!(matches!(p("q^2").integrate_exact(), Err(DiffPolyError::NotExactDerivative(_))));
        assert!(matches!(p("1").integrate_exact(), Err(DiffPolyError::NotExactDerivative(_))));
    }

    #[test]
    fn evaluate_examples() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let sp = Spectral::new(g);
        let q: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let z = p("q2 + q").evaluate(&sp, &q).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let w = p("q*q1").evaluate(&sp, &q).unwrap();
        for (x, v) in g.nodes().iter().zip(&w) {
            assert!((v - 0.5 * (2.0 * x).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_reports_under_resolution() {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let sp = Spectral::new(g);
        let q: Vec<f64> = (0..32).map(|m| if m == 3 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(p("q3").evaluate(&sp, &q), Err(DiffPolyError::Resolution { .. })));
    }

    fn arb_poly() -> impl Strategy<Value = DiffPoly> {
        let term = (prop::collection::vec(0u32..4, 0..4), -6i64..7, 1i64..5);
        prop::collection::vec(term, 0..5).prop_map(|ts| {
            DiffPoly::from_terms(ts.into_iter().map(|(o, n, d)| (Monomial::new(o), rat(n, d))))
        })
    }

    proptest! {
        #[test]
        fn derivative_is_a_derivation(a in arb_poly(), b in arb_poly()) {
            prop_assert_eq!((&a * &b).derivative(), &a.derivative() * &b + &a * &b.derivative());
        }

        #[test]
        fn euler_kills_total_derivatives(a in arb_poly()) {
            prop_assert!(a.derivative().variational_derivative().is_zero());
        }

        #[test]
        fn integrate_inverts_derivative(a in arb_poly()) {
            let a = &a - &DiffPoly::constant(a.constant_term());
            prop_assert_eq!(a.derivative().integrate_exact().unwrap(), a);
        }

        #[test]
        fn rendering_roundtrips(a in arb_poly()) {
            prop_assert_eq!(a.to_string().parse::<DiffPoly>().unwrap(), a);
        }
    }

    #[test]
    fn evaluate_commutes_with_derivative() {
        let g = Grid::new(256, 2.0 * PI).unwrap();
        let sp = Spectral::new(g);
        let q: Vec<f64> = g.nodes().iter().map(|x| (x.sin()).exp() * 0.3 + (2.0 * x).cos()).collect();
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        for _ in 0..20 {
            let a = arb_poly().new_tree(&mut runner).unwrap().current();
            let lhs = a.derivative().evaluate(&sp, &q).unwrap();
            let rhs = sp.derivative(&a.evaluate(&sp, &q).unwrap(), 1);
            let scale = rhs.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for (l, r) in lhs.iter().zip(&rhs) {
                assert!((l - r).abs() < 1e-10 * scale, "{a}: {l} vs {r}");
            }
        }
    }
}
