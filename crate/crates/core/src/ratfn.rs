//! Rational functions over nulls in a canonical sparse form.
//!
//! A [`RatFn`] is a numerator/denominator pair of sparse polynomials with
//! binary64 coefficients. Normalization drops cancelled terms, divides out
//! common monomial factors, collapses proportional numerator and denominator
//! to a constant, and scales the denominator so that its leading coefficient
//! is 1. Two expressions that normalize to the same form denote the same
//! function; a numerator that does not vanish identically has a zero set of
//! measure zero, which is what the conditional-world semantics relies on.
//!
//! There is no polynomial GCD: `(n1² − 1)/(n1 − 1)` stays a proper fraction.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::expr::{Arith, ExprError, RatExpr};
use crate::model::{NullId, Valuation, Value};

/// Product of nulls with positive exponents, sorted by null.
type Monomial = Vec<(NullId, u32)>;

// Relative size below which the sum of two coefficients counts as exact
// cancellation.
const CANCEL: f64 = 8.0 * f64::EPSILON;

#[derive(Debug, Clone, Default)]
struct Poly(BTreeMap<Monomial, f64>);

impl Poly {
    fn constant(c: f64) -> Poly {
        let mut p = Poly::default();
        if c != 0.0 {
            p.0.insert(Vec::new(), c);
        }
        p
    }

    fn var(id: NullId) -> Poly {
        Poly([(vec![(id, 1)], 1.0)].into())
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn as_constant(&self) -> Option<f64> {
        match self.0.len() {
            0 => Some(0.0),
            1 => self.0.get(&Vec::new()).copied(),
            _ => None,
        }
    }

    fn from_accumulator(acc: BTreeMap<Monomial, (f64, f64)>) -> Poly {
        Poly(
            acc.into_iter()
                .filter(|(_, (sum, magnitude))| sum.abs() > CANCEL * magnitude)
                .map(|(m, (sum, _))| (m, if sum == 0.0 { 0.0 } else { sum }))
                .collect(),
        )
    }

    fn add_scaled(&self, other: &Poly, sign: f64) -> Poly {
        let mut acc: BTreeMap<Monomial, (f64, f64)> =
            self.0.iter().map(|(m, c)| (m.clone(), (*c, c.abs()))).collect();
        for (m, c) in &other.0 {
            let slot = acc.entry(m.clone()).or_insert((0.0, 0.0));
            slot.0 += sign * c;
            slot.1 += c.abs();
        }
        Poly::from_accumulator(acc)
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut acc: BTreeMap<Monomial, (f64, f64)> = BTreeMap::new();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &other.0 {
                let term = ca * cb;
                let slot = acc.entry(mul_monomials(ma, mb)).or_insert((0.0, 0.0));
                slot.0 += term;
                slot.1 += term.abs();
            }
        }
        Poly::from_accumulator(acc)
    }

    fn scale(&self, k: f64) -> Poly {
        Poly(self.0.iter().map(|(m, c)| (m.clone(), c * k)).collect())
    }

    fn leading(&self) -> Option<f64> {
        self.0.values().next_back().copied()
    }

    fn eval(&self, v: &Valuation) -> Result<f64, ExprError> {
        let mut total = 0.0;
        for (m, c) in &self.0 {
            let mut term = *c;
            for (id, exp) in m {
                let x = v.get(*id).ok_or(ExprError::UnboundNull(*id))?;
                term *= x.powi(*exp as i32);
            }
            total += term;
        }
        Ok(total)
    }

    fn nulls(&self) -> impl Iterator<Item = NullId> + '_ {
        self.0.keys().flatten().map(|(id, _)| *id)
    }

    fn to_expr(&self) -> RatExpr {
        let mut out: Option<RatExpr> = None;
        // highest-order terms first
        for (m, c) in self.0.iter().rev() {
            let negative = c.is_sign_negative();
            let magnitude = c.abs();
            let body = monomial_expr(m, magnitude);
            out = Some(match out {
                None if negative => match body {
                    RatExpr::Const(x) => RatExpr::Const(-x),
                    other => RatExpr::neg(other),
                },
                None => body,
                Some(acc) if negative => RatExpr::sub(acc, body),
                Some(acc) => RatExpr::add(acc, body),
            });
        }
        out.unwrap_or(RatExpr::Const(0.0))
    }

    fn cmp_terms(&self, other: &Poly) -> Ordering {
        let mut a = self.0.iter();
        let mut b = other.0.iter();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some((ma, ca)), Some((mb, cb))) => {
                    let ord = ma.cmp(mb).then_with(|| ca.total_cmp(cb));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
            }
        }
    }

    /// Exponent of `id` shared by every term.
    fn min_exponent(&self, id: NullId) -> u32 {
        self.0
            .keys()
            .map(|m| m.iter().find(|(n, _)| *n == id).map_or(0, |(_, e)| *e))
            .min()
            .unwrap_or(0)
    }

    fn divide_monomial(&self, id: NullId, exp: u32) -> Poly {
        Poly(
            self.0
                .iter()
                .map(|(m, c)| {
                    let reduced: Monomial = m
                        .iter()
                        .filter_map(|(n, e)| {
                            if *n != id {
                                Some((*n, *e))
                            } else if *e > exp {
                                Some((*n, e - exp))
                            } else {
                                None
                            }
                        })
                        .collect();
                    (reduced, *c)
                })
                .collect(),
        )
    }

    /// `Some(k)` when `self = k · other` term by term.
    fn ratio_to(&self, other: &Poly) -> Option<f64> {
        if self.0.len() != other.0.len() || other.is_zero() {
            return None;
        }
        let mut ratio = None;
        for ((ma, ca), (mb, cb)) in self.0.iter().zip(&other.0) {
            if ma != mb {
                return None;
            }
            let r = ca / cb;
            match ratio {
                None => ratio = Some(r),
                Some(k) if ((r - k) / k).abs() <= CANCEL => {}
                Some(_) => return None,
            }
        }
        ratio
    }
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out: BTreeMap<NullId, u32> = a.iter().copied().collect();
    for (id, e) in b {
        *out.entry(*id).or_insert(0) += e;
    }
    out.into_iter().collect()
}

fn monomial_expr(m: &Monomial, coefficient: f64) -> RatExpr {
    let mut factors: Vec<RatExpr> = Vec::new();
    if coefficient != 1.0 || m.is_empty() {
        factors.push(RatExpr::Const(coefficient));
    }
    for (id, exp) in m {
        for _ in 0..*exp {
            factors.push(RatExpr::Null(*id));
        }
    }
    let mut it = factors.into_iter();
    let first = it.next().expect("monomial has at least one factor");
    it.fold(first, RatExpr::mul)
}

/// A canonical rational function over nulls.
#[derive(Debug, Clone)]
pub struct RatFn {
    num: Poly,
    den: Poly,
}

impl RatFn {
    pub fn constant(c: f64) -> RatFn {
        RatFn {
            num: Poly::constant(c),
            den: Poly::constant(1.0),
        }
    }

    pub fn var(id: NullId) -> RatFn {
        RatFn {
            num: Poly::var(id),
            den: Poly::constant(1.0),
        }
    }

    pub fn from_value(v: &Value) -> RatFn {
        match v {
            Value::Real(x) => RatFn::constant(*x),
            Value::Null(id) => RatFn::var(*id),
        }
    }

    /// Canonical form of an expression over nulls and constants.
    pub fn from_expr(e: &RatExpr) -> Result<RatFn, ExprError> {
        e.eval_in::<RatFn>(&|i| Err(ExprError::UnboundAttr(i)), &|id| Ok(RatFn::var(id)))
    }

    fn normalized(num: Poly, den: Poly) -> RatFn {
        if num.is_zero() {
            return RatFn::constant(0.0);
        }
        let (mut num, mut den) = (num, den);
        let shared: BTreeSet<NullId> = num.nulls().chain(den.nulls()).collect();
        for id in shared {
            let common = num.min_exponent(id).min(den.min_exponent(id));
            if common > 0 {
                num = num.divide_monomial(id, common);
                den = den.divide_monomial(id, common);
            }
        }
        if let Some(k) = num.ratio_to(&den) {
            return RatFn::constant(k);
        }
        let lead = den.leading().expect("denominator is nonzero");
        if lead != 1.0 {
            num = num.scale(1.0 / lead);
            den = den.scale(1.0 / lead);
        }
        RatFn { num, den }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// The value when the function does not depend on any null.
    pub fn as_constant(&self) -> Option<f64> {
        let n = self.num.as_constant()?;
        let d = self.den.as_constant()?;
        Some(n / d)
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn nulls(&self) -> BTreeSet<NullId> {
        self.num.nulls().chain(self.den.nulls()).collect()
    }

    pub fn eval(&self, v: &Valuation) -> Result<f64, ExprError> {
        let d = self.den.eval(v)?;
        if d == 0.0 {
            return Err(ExprError::DivByZero);
        }
        Ok(self.num.eval(v)? / d)
    }

    pub fn to_expr(&self) -> RatExpr {
        match self.den.as_constant() {
            Some(1.0) => self.num.to_expr(),
            _ => RatExpr::div(self.num.to_expr(), self.den.to_expr()),
        }
    }

    /// `(null, a, b)` when the function is `a·null + b` with `a ≠ 0`.
    pub fn as_affine(&self) -> Option<(NullId, f64, f64)> {
        let d = self.den.as_constant()?;
        let mut id = None;
        let (mut a, mut b) = (0.0, 0.0);
        for (m, c) in &self.num.0 {
            match m.as_slice() {
                [] => b = c / d,
                [(n, 1)] if id.is_none() || id == Some(*n) => {
                    id = Some(*n);
                    a = c / d;
                }
                _ => return None,
            }
        }
        id.map(|id| (id, a, b))
    }
}

impl Arith for RatFn {
    fn constant(x: f64) -> Self {
        RatFn::constant(x)
    }

    fn negate(self) -> Self {
        RatFn {
            num: self.num.scale(-1.0),
            den: self.den,
        }
    }

    fn plus(self, other: &Self) -> Self {
        if self.den.cmp_terms(&other.den) == Ordering::Equal {
            return RatFn::normalized(self.num.add_scaled(&other.num, 1.0), self.den);
        }
        let num = self
            .num
            .mul(&other.den)
            .add_scaled(&other.num.mul(&self.den), 1.0);
        RatFn::normalized(num, self.den.mul(&other.den))
    }

    fn minus(self, other: &Self) -> Self {
        self.plus(&other.clone().negate())
    }

    fn times(self, other: &Self) -> Self {
        RatFn::normalized(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    fn over(self, other: &Self) -> Result<Self, ExprError> {
        if other.is_zero() {
            return Err(ExprError::DivByZero);
        }
        Ok(RatFn::normalized(
            self.num.mul(&other.den),
            self.den.mul(&other.num),
        ))
    }
}

impl PartialEq for RatFn {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for RatFn {}

impl PartialOrd for RatFn {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RatFn {
    fn cmp(&self, other: &Self) -> Ordering {
        self.num
            .cmp_terms(&other.num)
            .then_with(|| self.den.cmp_terms(&other.den))
    }
}

impl fmt::Display for RatFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canon(text: &str) -> RatFn {
        RatFn::from_expr(&text.parse().unwrap()).unwrap()
    }

    #[test]
    fn identities_collapse() {
        assert_eq!(canon("n1 - n1"), RatFn::constant(0.0));
        assert_eq!(canon("n3 - (n1 + n3)"), canon("-n1"));
        assert_eq!(canon("n1 - 0"), canon("n1"));
        assert_eq!(canon("n1 / n1"), RatFn::constant(1.0));
        assert_eq!(canon("(2 * n1 * n2) / (4 * n2)"), canon("0.5 * n1"));
        assert_eq!(canon("(n1 + 1) * (n1 - 1)"), canon("n1 * n1 - 1"));
        assert_eq!(canon("1 / n1 + 1 / n2"), canon("(n1 + n2) / (n1 * n2)"));
    }

    #[test]
    fn constants_are_detected() {
        assert_eq!(canon("(n1 + 2) - n1").as_constant(), Some(2.0));
        assert!(!canon("n1 * n2").is_constant());
        assert!(RatFn::from_expr(&"$1".parse().unwrap()).is_err());
        assert_eq!(
            RatFn::from_expr(&"n1 / (n2 - n2)".parse().unwrap()),
            Err(ExprError::DivByZero)
        );
    }

    #[test]
    fn printing_reparses_to_the_same_function() {
        for text in ["n1 - 2", "-n1", "n1 * n1 * 3 - n2 / 4", "(n1 + 1) / (2 * n2 - n1)", "0"] {
            let f = canon(text);
            let back = RatFn::from_expr(&f.to_expr().to_string().parse().unwrap()).unwrap();
            assert_eq!(back, f, "{text} printed as {f}");
        }
        assert_eq!(canon("n3 - (n1 + n3)").to_string(), "-n1");
    }

    #[test]
    fn evaluation_matches_direct_arithmetic() {
        let v: Valuation = [(NullId(1), 0.75), (NullId(2), -2.5)].into_iter().collect();
        for text in ["n1 * n2 - 3", "(n1 + 1) / (n2 * n2)", "-(n1 - n2) * 2"] {
            let e: RatExpr = text.parse().unwrap();
            let direct = e
                .eval_in::<f64>(&|i| Err(ExprError::UnboundAttr(i)), &|id| {
                    v.get(id).ok_or(ExprError::UnboundNull(id))
                })
                .unwrap();
            let canonical = RatFn::from_expr(&e).unwrap().eval(&v).unwrap();
            assert!((direct - canonical).abs() <= 1e-12 * direct.abs().max(1.0), "{text}");
        }
    }

    #[test]
    fn affine_recognition() {
        assert_eq!(canon("2 * n4 - 1").as_affine(), Some((NullId(4), 2.0, -1.0)));
        assert_eq!(canon("(n4 + 3) / 2").as_affine(), Some((NullId(4), 0.5, 1.5)));
        assert_eq!(canon("n1 + n2").as_affine(), None);
        assert_eq!(canon("n1 * n1").as_affine(), None);
        assert_eq!(canon("1 / n1").as_affine(), None);
        assert_eq!(canon("3").as_affine(), None);
    }
}
