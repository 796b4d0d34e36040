//! Parameter coefficient expressions.
//!
//! Affine decompositions store their coefficient functions Θ_q(μ) as small
//! expression trees over the parameter components, rather than as opaque
//! closures. Trees make proportionality detection, deterministic hashing and
//! archive serialization straightforward.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

/// Expression tree over the parameter vector μ.
///
/// Nodes are reference counted so shared subtrees (inverse-map determinants,
/// rotation angles) are built once per region and reused across entries.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamExpr {
    Const(f64),
    /// Component μ_i (0-based).
    Param(usize),
    Add(Rc<ParamExpr>, Rc<ParamExpr>),
    Sub(Rc<ParamExpr>, Rc<ParamExpr>),
    Mul(Rc<ParamExpr>, Rc<ParamExpr>),
    Div(Rc<ParamExpr>, Rc<ParamExpr>),
    Pow(Rc<ParamExpr>, i32),
    Sin(Rc<ParamExpr>),
    Cos(Rc<ParamExpr>),
}

impl ParamExpr {
    pub fn constant(v: f64) -> Self {
        ParamExpr::Const(v)
    }

    pub fn param(i: usize) -> Self {
        ParamExpr::Param(i)
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        match self {
            ParamExpr::Const(v) => *v,
            ParamExpr::Param(i) => mu[*i],
            ParamExpr::Add(a, b) => a.eval(mu) + b.eval(mu),
            ParamExpr::Sub(a, b) => a.eval(mu) - b.eval(mu),
            ParamExpr::Mul(a, b) => a.eval(mu) * b.eval(mu),
            ParamExpr::Div(a, b) => a.eval(mu) / b.eval(mu),
            ParamExpr::Pow(a, k) => a.eval(mu).powi(*k),
            ParamExpr::Sin(a) => a.eval(mu).sin(),
            ParamExpr::Cos(a) => a.eval(mu).cos(),
        }
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self, ParamExpr::Const(v) if *v == 0.0)
    }

    pub fn is_one_const(&self) -> bool {
        matches!(self, ParamExpr::Const(v) if *v == 1.0)
    }

    /// Highest parameter index referenced, if any.
    pub fn max_param(&self) -> Option<usize> {
        match self {
            ParamExpr::Const(_) => None,
            ParamExpr::Param(i) => Some(*i),
            ParamExpr::Add(a, b)
            | ParamExpr::Sub(a, b)
            | ParamExpr::Mul(a, b)
            | ParamExpr::Div(a, b) => a.max_param().max(b.max_param()),
            ParamExpr::Pow(a, _) | ParamExpr::Sin(a) | ParamExpr::Cos(a) => a.max_param(),
        }
    }

    /// True when no node references a parameter component.
    pub fn is_parameter_free(&self) -> bool {
        self.max_param().is_none()
    }

    pub fn pow(self, k: i32) -> Self {
        match (&self, k) {
            (_, 1) => self,
            (ParamExpr::Const(v), _) => ParamExpr::Const(v.powi(k)),
            _ => ParamExpr::Pow(Rc::new(self), k),
        }
    }

    pub fn sin(self) -> Self {
        match &self {
            ParamExpr::Const(v) => ParamExpr::Const(v.sin()),
            _ => ParamExpr::Sin(Rc::new(self)),
        }
    }

    pub fn cos(self) -> Self {
        match &self {
            ParamExpr::Const(v) => ParamExpr::Const(v.cos()),
            _ => ParamExpr::Cos(Rc::new(self)),
        }
    }
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamExpr::Const(v) => write!(f, "{v}"),
            ParamExpr::Param(i) => write!(f, "mu{}", i + 1),
            ParamExpr::Add(a, b) => write!(f, "({a} + {b})"),
            ParamExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            ParamExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            ParamExpr::Div(a, b) => write!(f, "({a} / {b})"),
            ParamExpr::Pow(a, k) => write!(f, "{a}^{k}"),
            ParamExpr::Sin(a) => write!(f, "sin({a})"),
            ParamExpr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

// Constant folding keeps the trees produced by symbolic map solving small:
// most map entries are 0 or 1 at the reference configuration.
impl Add for ParamExpr {
    type Output = ParamExpr;
    fn add(self, rhs: ParamExpr) -> ParamExpr {
        match (&self, &rhs) {
            (ParamExpr::Const(a), ParamExpr::Const(b)) => ParamExpr::Const(a + b),
            (ParamExpr::Const(z), _) if *z == 0.0 => rhs,
            (_, ParamExpr::Const(z)) if *z == 0.0 => self,
            _ => ParamExpr::Add(Rc::new(self), Rc::new(rhs)),
        }
    }
}

impl Sub for ParamExpr {
    type Output = ParamExpr;
    fn sub(self, rhs: ParamExpr) -> ParamExpr {
        match (&self, &rhs) {
            (ParamExpr::Const(a), ParamExpr::Const(b)) => ParamExpr::Const(a - b),
            (_, ParamExpr::Const(z)) if *z == 0.0 => self,
            _ => ParamExpr::Sub(Rc::new(self), Rc::new(rhs)),
        }
    }
}

impl Mul for ParamExpr {
    type Output = ParamExpr;
    fn mul(self, rhs: ParamExpr) -> ParamExpr {
        match (&self, &rhs) {
            (ParamExpr::Const(a), ParamExpr::Const(b)) => ParamExpr::Const(a * b),
            (ParamExpr::Const(z), _) | (_, ParamExpr::Const(z)) if *z == 0.0 => {
                ParamExpr::Const(0.0)
            }
            (ParamExpr::Const(o), _) if *o == 1.0 => rhs,
            (_, ParamExpr::Const(o)) if *o == 1.0 => self,
            _ => ParamExpr::Mul(Rc::new(self), Rc::new(rhs)),
        }
    }
}

impl Div for ParamExpr {
    type Output = ParamExpr;
    fn div(self, rhs: ParamExpr) -> ParamExpr {
        match (&self, &rhs) {
            (ParamExpr::Const(a), ParamExpr::Const(b)) => ParamExpr::Const(a / b),
            (ParamExpr::Const(z), _) if *z == 0.0 => ParamExpr::Const(0.0),
            (_, ParamExpr::Const(o)) if *o == 1.0 => self,
            _ => ParamExpr::Div(Rc::new(self), Rc::new(rhs)),
        }
    }
}

impl Neg for ParamExpr {
    type Output = ParamExpr;
    fn neg(self) -> ParamExpr {
        ParamExpr::Const(-1.0) * self
    }
}

/// Bivariate polynomial in the reference coordinates (x1, x2) whose
/// coefficients are parameter expressions.
///
/// Cartesian formulations only ever use the (0,0) monomial; the axisymmetric
/// change of variables introduces x1 powers up to degree three.
#[derive(Clone, Debug, Default)]
pub struct MonomialPoly {
    /// (m, n, coefficient) triples for x1^m x2^n, kept sorted by (m, n).
    terms: Vec<(u8, u8, ParamExpr)>,
}

impl MonomialPoly {
    pub fn zero() -> Self {
        MonomialPoly { terms: Vec::new() }
    }

    pub fn constant(e: ParamExpr) -> Self {
        Self::monomial(0, 0, e)
    }

    pub fn monomial(m: u8, n: u8, e: ParamExpr) -> Self {
        if e.is_zero_const() {
            return Self::zero();
        }
        MonomialPoly {
            terms: vec![(m, n, e)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[(u8, u8, ParamExpr)] {
        &self.terms
    }

    pub fn add_term(&mut self, m: u8, n: u8, e: ParamExpr) {
        if e.is_zero_const() {
            return;
        }
        match self.terms.binary_search_by_key(&(m, n), |t| (t.0, t.1)) {
            Ok(k) => {
                let old = self.terms[k].2.clone();
                self.terms[k].2 = old + e;
            }
            Err(k) => self.terms.insert(k, (m, n, e)),
        }
    }

    pub fn add(&self, other: &MonomialPoly) -> MonomialPoly {
        let mut out = self.clone();
        for (m, n, e) in &other.terms {
            out.add_term(*m, *n, e.clone());
        }
        out
    }

    pub fn scale(&self, e: &ParamExpr) -> MonomialPoly {
        if e.is_zero_const() {
            return MonomialPoly::zero();
        }
        MonomialPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, n, c)| (*m, *n, c.clone() * e.clone()))
                .collect(),
        }
    }

    pub fn mul(&self, other: &MonomialPoly) -> MonomialPoly {
        let mut out = MonomialPoly::zero();
        for (m1, n1, c1) in &self.terms {
            for (m2, n2, c2) in &other.terms {
                out.add_term(m1 + m2, n1 + n2, c1.clone() * c2.clone());
            }
        }
        out
    }

    /// Substitute x1 -> a*x1 + b, expanding powers binomially. Used to pull
    /// the original-domain radial coordinate back to the reference domain for
    /// axis-aligned maps.
    pub fn substitute_x1(&self, a: &ParamExpr, b: &ParamExpr) -> MonomialPoly {
        let mut out = MonomialPoly::zero();
        for (m, n, c) in &self.terms {
            // (a*x1 + b)^m = sum_k C(m,k) a^k b^(m-k) x1^k
            for k in 0..=*m {
                let binom = binomial(*m as u64, k as u64) as f64;
                let coeff = ParamExpr::constant(binom)
                    * c.clone()
                    * a.clone().pow(k as i32)
                    * b.clone().pow((*m - k) as i32);
                out.add_term(k, *n, coeff);
            }
        }
        out
    }

    pub fn eval(&self, mu: &[f64], x1: f64, x2: f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, n, c)| c.eval(mu) * x1.powi(*m as i32) * x2.powi(*n as i32))
            .sum()
    }

    pub fn max_degree(&self) -> u8 {
        self.terms.iter().map(|(m, n, _)| m + n).max().unwrap_or(0)
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_basic_tree() {
        let mu = [2.0, 3.0];
        let e = (ParamExpr::param(0) + ParamExpr::constant(1.0)) * ParamExpr::param(1);
        assert_eq!(e.eval(&mu), 9.0);
        let d = ParamExpr::param(1) / ParamExpr::param(0);
        assert_eq!(d.eval(&mu), 1.5);
        let p = ParamExpr::param(0).pow(3);
        assert_eq!(p.eval(&mu), 8.0);
    }

    #[test]
    fn trig_nodes() {
        let mu = [std::f64::consts::FRAC_PI_3];
        let c = ParamExpr::param(0).cos();
        let s = ParamExpr::param(0).sin();
        let one = c.clone() * c + s.clone() * s;
        assert!((one.eval(&mu) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn const_folding_collapses() {
        let e = ParamExpr::constant(2.0) * ParamExpr::constant(3.0) + ParamExpr::constant(0.0);
        assert_eq!(e, ParamExpr::Const(6.0));
        let z = ParamExpr::constant(0.0) * ParamExpr::param(0);
        assert!(z.is_zero_const());
    }

    #[test]
    fn poly_substitution_expands_binomially() {
        // x1^2 with x1 -> 2*x1 + 1 must give 4 x1^2 + 4 x1 + 1
        let p = MonomialPoly::monomial(2, 0, ParamExpr::constant(1.0));
        let s = p.substitute_x1(&ParamExpr::constant(2.0), &ParamExpr::constant(1.0));
        let mu: [f64; 0] = [];
        for x in [0.0, 0.5, 1.3] {
            let direct = (2.0 * x + 1.0_f64).powi(2);
            assert!((s.eval(&mu, x, 0.0) - direct).abs() < 1e-14);
        }
        assert_eq!(s.terms().len(), 3);
    }

    #[test]
    fn poly_mul_degrees() {
        let a = MonomialPoly::monomial(1, 0, ParamExpr::constant(2.0));
        let b = MonomialPoly::monomial(2, 1, ParamExpr::constant(3.0));
        let c = a.mul(&b);
        assert_eq!(c.terms().len(), 1);
        assert_eq!(c.terms()[0].0, 3);
        assert_eq!(c.terms()[0].1, 1);
    }
}
