//! Sparse multivariate polynomials with exact coefficients.
//!
//! Terms are kept in a `BTreeMap` from dense exponent vectors to nonzero
//! coefficients, so equality of canonical forms is equality of polynomials.

use std::collections::BTreeMap;
use std::fmt::{self, Debug, Display};
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, ToPrimitive};

use crate::error::{Error, Result};

/// Coefficient ring.
pub trait Coefficient: Clone + Num + Neg<Output = Self> + FromPrimitive + ToPrimitive + Debug + Display {}

impl<C> Coefficient for C where C: Clone + Num + Neg<Output = C> + FromPrimitive + ToPrimitive + Debug + Display {}

pub type Exponents = Vec<u16>;

#[derive(Clone, PartialEq, Eq)]
pub struct Polynomial<C> {
    nvars: usize,
    terms: BTreeMap<Exponents, C>,
}

pub type RationalPolynomial = Polynomial<BigRational>;

impl<C: Coefficient> Polynomial<C> {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn from_int(nvars: usize, c: i64) -> Self {
        Self::constant(nvars, C::from_i64(c).expect("integer coefficient"))
    }

    /// The monomial `x_k`.
    pub fn var(nvars: usize, k: usize) -> Self {
        assert!(k < nvars, "variable {k} out of range");
        let mut e = vec![0; nvars];
        e[k] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, C::one());
        p
    }

    /// Builds from `(exponents, coefficient)` pairs, merging duplicates.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Exponents, C)>) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::DimensionMismatch { expected: nvars, actual: e.len() });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree in the variables selected by `mask`.
    pub fn degree_in(&self, mask: impl Fn(usize) -> bool) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().enumerate().filter(|(k, _)| mask(*k)).map(|(_, &d)| d as u32).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, e: Exponents, c: C) {
        debug_assert_eq!(e.len(), self.nvars);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    fn check(&self, other: &Self) {
        assert_eq!(self.nvars, other.nvars, "polynomials over different variable sets");
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        Self { nvars: self.nvars, terms: self.terms.iter().map(|(e, v)| (e.clone(), v.clone() * c.clone())).collect() }
    }

    /// `x^e · self`.
    pub fn mul_monomial(&self, e: &[u16], c: &C) -> Self {
        let mut out = Self::zero(self.nvars);
        for (f, v) in &self.terms {
            let g: Exponents = f.iter().zip(e).map(|(a, b)| a + b).collect();
            out.add_term(g, v.clone() * c.clone());
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::from_int(self.nvars, 1);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn derivative(&self, k: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[k] > 0 {
                let mut f = e.clone();
                f[k] -= 1;
                out.add_term(f, c.clone() * C::from_u16(e[k]).expect("small exponent"));
            }
        }
        out
    }

    /// Replaces `x_k` by `q`.
    pub fn substitute(&self, k: usize, q: &Self) -> Self {
        self.check(q);
        let mut powers: Vec<Self> = vec![Self::from_int(self.nvars, 1)];
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let d = e[k] as usize;
            while powers.len() <= d {
                let next = powers.last().expect("nonempty") * q;
                powers.push(next);
            }
            let mut rest = e.clone();
            rest[k] = 0;
            out = out + powers[d].mul_monomial(&rest, c);
        }
        out
    }

    /// Evaluates with coefficients converted to `f64`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point has the wrong dimension");
        self.terms
            .iter()
            .map(|(e, c)| {
                let m: f64 = e.iter().zip(x).filter(|(&d, _)| d > 0).map(|(&d, &v)| v.powi(d as i32)).product();
                c.to_f64().expect("coefficient converts to f64") * m
            })
            .sum()
    }

    /// Formats with the given variable names.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> impl Display + 'a {
        PolyDisplay { p: self, names }
    }
}

struct PolyDisplay<'a, C> {
    p: &'a Polynomial<C>,
    names: &'a [String],
}

impl<C: Coefficient> Display for PolyDisplay<'_, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.p.terms.iter().rev().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            for (v, &d) in e.iter().enumerate() {
                match d {
                    0 => {}
                    1 => write!(f, "*{}", self.names[v])?,
                    _ => write!(f, "*{}^{d}", self.names[v])?,
                }
            }
        }
        Ok(())
    }
}

impl<C: Coefficient> Debug for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars).map(|k| format!("x{k}")).collect();
        let shown = self.display_with(&names).to_string();
        f.write_str(&shown)
    }
}

impl<C: Coefficient> Add for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Polynomial<C> {
        self.check(rhs);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl<C: Coefficient> Add for Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(mut self, rhs: Self) -> Polynomial<C> {
        self.check(&rhs);
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self
    }
}

impl<C: Coefficient> Neg for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        Polynomial { nvars: self.nvars, terms: self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect() }
    }
}

impl<C: Coefficient> Sub for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        self + &(-rhs)
    }
}

impl<C: Coefficient> Sub for Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        self + -&rhs
    }
}

impl<C: Coefficient> Mul for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        self.check(rhs);
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &rhs.terms {
            for (f, d) in &self.terms {
                let g: Exponents = f.iter().zip(e).map(|(a, b)| a + b).collect();
                out.add_term(g, d.clone() * c.clone());
            }
        }
        out
    }
}

impl<C: Coefficient> Mul for Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        &self * &rhs
    }
}

/// Exact rational `p/q`.
pub fn rational(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

impl<C: Coefficient> Polynomial<C> {
    /// `Σ_k x_k` over the given variable indices.
    pub fn sum_of(nvars: usize, vars: impl IntoIterator<Item = usize>) -> Self {
        vars.into_iter().fold(Self::zero(nvars), |acc, k| acc + Self::var(nvars, k))
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.iter().next().is_some_and(|(e, c)| e.iter().all(|&d| d == 0) && c.is_one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type P = RationalPolynomial;

    fn x(k: usize) -> P {
        P::var(4, k)
    }

    #[test]
    fn additive_identity_and_cancellation() {
        let p = &(&x(0) * &x(1)) + &P::from_int(4, 3);
        assert_eq!(&p + &P::zero(4), p);
        assert!((&p - &p).is_zero());
    }

    #[test]
    fn distributivity_expands_sums() {
        let ys = P::sum_of(4, [0, 1]);
        let zs = P::sum_of(4, [2, 3]);
        let prod = &ys * &zs;
        assert_eq!(prod.len(), 4);
        let expected = [(0, 2), (0, 3), (1, 2), (1, 3)].iter().fold(P::zero(4), |acc, &(i, j)| acc + &x(i) * &x(j));
        assert_eq!(prod, expected);
    }

    #[test]
    fn derivative_and_substitution() {
        // d/dx0 (x0³ x1) = 3 x0² x1
        let p = &x(0).pow(3) * &x(1);
        assert_eq!(p.derivative(0), (&x(0).pow(2) * &x(1)).scale(&rational(3, 1)));
        assert!(p.derivative(2).is_zero());
        // x1 ← 1 - x0 in x0 x1 gives x0 - x0².
        let one = P::from_int(4, 1);
        let q = p.substitute(1, &(&one - &x(0)));
        assert_eq!(q, &x(0).pow(3) - &x(0).pow(4));
    }

    #[test]
    fn evaluation_and_display() {
        let p = &(&x(0) * &x(1)).scale(&rational(1, 2)) - &P::from_int(4, 2);
        assert!((p.eval(&[2.0, 3.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        assert_eq!(p.display_with(&names).to_string(), "(1/2)*a*b + (-2)");
        assert!(P::from_int(4, 1).is_one());
    }

    #[test]
    fn works_over_floats() {
        let p = &Polynomial::<f64>::var(2, 0) * &Polynomial::<f64>::var(2, 1);
        assert_eq!(p.eval(&[2.0, 5.0]), 10.0);
    }

    fn arb_poly() -> impl Strategy<Value = P> {
        prop::collection::vec((prop::collection::vec(0u16..3, 4), -5i64..5, 1i64..4), 0..6)
            .prop_map(|ts| P::from_terms(4, ts.into_iter().map(|(e, p, q)| (e, rational(p, q)))).unwrap())
    }

    proptest! {
        #[test]
        fn ring_laws(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            let pt = [0.3, -1.2, 0.7, 2.0];
            prop_assert!(((&a * &b).eval(&pt) - a.eval(&pt) * b.eval(&pt)).abs() < 1e-9);
        }
    }
}
