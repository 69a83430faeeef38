//! Rational-function expressions over attribute positions and nulls.
//!
//! Text syntax: `$k` for the k-th attribute (1-based), `n<k>` for null
//! `⊥ₖ`, decimal literals, `+ - * /`, unary minus and parentheses.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{NullId, Valuation, Value};
use crate::query::parser::{self, ParseError};

#[derive(Debug, Clone)]
pub enum RatExpr {
    Const(f64),
    Attr(usize),
    Null(NullId),
    Neg(Box<RatExpr>),
    Add(Box<RatExpr>, Box<RatExpr>),
    Sub(Box<RatExpr>, Box<RatExpr>),
    Mul(Box<RatExpr>, Box<RatExpr>),
    Div(Box<RatExpr>, Box<RatExpr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("division by zero")]
    DivByZero,
    #[error("attribute ${0} is not bound")]
    UnboundAttr(usize),
    #[error("null {0} is not bound")]
    UnboundNull(NullId),
    #[error("arithmetic on null {0}")]
    NullOperand(NullId),
}

impl RatExpr {
    pub fn constant(x: f64) -> Self {
        RatExpr::Const(x)
    }

    pub fn attr(i: usize) -> Self {
        RatExpr::Attr(i)
    }

    pub fn null(id: u64) -> Self {
        RatExpr::Null(NullId(id))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: RatExpr) -> Self {
        RatExpr::Neg(Box::new(e))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: RatExpr, b: RatExpr) -> Self {
        RatExpr::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: RatExpr, b: RatExpr) -> Self {
        RatExpr::Sub(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: RatExpr, b: RatExpr) -> Self {
        RatExpr::Mul(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: RatExpr, b: RatExpr) -> Self {
        RatExpr::Div(Box::new(a), Box::new(b))
    }

    /// Lifts a relation entry: reals become constants, nulls variables.
    pub fn from_value(v: &Value) -> Self {
        match v {
            Value::Real(x) => RatExpr::Const(*x),
            Value::Null(id) => RatExpr::Null(*id),
        }
    }

    fn children(&self) -> (Option<&RatExpr>, Option<&RatExpr>) {
        match self {
            RatExpr::Const(_) | RatExpr::Attr(_) | RatExpr::Null(_) => (None, None),
            RatExpr::Neg(a) => (Some(a), None),
            RatExpr::Add(a, b) | RatExpr::Sub(a, b) | RatExpr::Mul(a, b) | RatExpr::Div(a, b) => {
                (Some(a), Some(b))
            }
        }
    }

    fn visit(&self, f: &mut impl FnMut(&RatExpr)) {
        f(self);
        let (a, b) = self.children();
        if let Some(a) = a {
            a.visit(f);
        }
        if let Some(b) = b {
            b.visit(f);
        }
    }

    pub fn attrs(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let RatExpr::Attr(i) = e {
                out.insert(*i);
            }
        });
        out
    }

    pub fn nulls(&self) -> BTreeSet<NullId> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let RatExpr::Null(id) = e {
                out.insert(*id);
            }
        });
        out
    }

    pub fn max_attr(&self) -> Option<usize> {
        self.attrs().last().copied()
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Rewrites every node bottom-up through `f`.
    pub fn map_leaves(&self, f: &mut impl FnMut(&RatExpr) -> Option<RatExpr>) -> RatExpr {
        if let Some(replacement) = f(self) {
            return replacement;
        }
        match self {
            RatExpr::Const(_) | RatExpr::Attr(_) | RatExpr::Null(_) => self.clone(),
            RatExpr::Neg(a) => RatExpr::neg(a.map_leaves(f)),
            RatExpr::Add(a, b) => RatExpr::add(a.map_leaves(f), b.map_leaves(f)),
            RatExpr::Sub(a, b) => RatExpr::sub(a.map_leaves(f), b.map_leaves(f)),
            RatExpr::Mul(a, b) => RatExpr::mul(a.map_leaves(f), b.map_leaves(f)),
            RatExpr::Div(a, b) => RatExpr::div(a.map_leaves(f), b.map_leaves(f)),
        }
    }

    /// Renumbers attribute references through `f`.
    pub fn remap_attrs(&self, f: impl Fn(usize) -> usize) -> RatExpr {
        self.map_leaves(&mut |e| match e {
            RatExpr::Attr(i) => Some(RatExpr::Attr(f(*i))),
            _ => None,
        })
    }

    /// Evaluates over any arithmetic carrier.
    pub fn eval_in<T: Arith>(
        &self,
        attr: &dyn Fn(usize) -> Result<T, ExprError>,
        null: &dyn Fn(NullId) -> Result<T, ExprError>,
    ) -> Result<T, ExprError> {
        Ok(match self {
            RatExpr::Const(x) => T::constant(*x),
            RatExpr::Attr(i) => attr(*i)?,
            RatExpr::Null(id) => null(*id)?,
            RatExpr::Neg(a) => a.eval_in(attr, null)?.negate(),
            RatExpr::Add(a, b) => a.eval_in(attr, null)?.plus(&b.eval_in(attr, null)?),
            RatExpr::Sub(a, b) => a.eval_in(attr, null)?.minus(&b.eval_in(attr, null)?),
            RatExpr::Mul(a, b) => a.eval_in(attr, null)?.times(&b.eval_in(attr, null)?),
            RatExpr::Div(a, b) => a.eval_in(attr, null)?.over(&b.eval_in(attr, null)?)?,
        })
    }

    /// Evaluates with attributes taken from `row` (1-based) and nulls from
    /// `nulls`.
    pub fn eval_row(&self, row: &[f64], nulls: &Valuation) -> Result<f64, ExprError> {
        self.eval_in(
            &|i| {
                i.checked_sub(1)
                    .and_then(|k| row.get(k).copied())
                    .ok_or(ExprError::UnboundAttr(i))
            },
            &|id| nulls.get(id).ok_or(ExprError::UnboundNull(id)),
        )
    }

    pub fn is_const(&self) -> bool {
        let mut leafy = true;
        self.visit(&mut |e| {
            if matches!(e, RatExpr::Attr(_) | RatExpr::Null(_)) {
                leafy = false;
            }
        });
        leafy
    }

    fn rank(&self) -> u8 {
        match self {
            RatExpr::Const(_) => 0,
            RatExpr::Attr(_) => 1,
            RatExpr::Null(_) => 2,
            RatExpr::Neg(_) => 3,
            RatExpr::Add(..) => 4,
            RatExpr::Sub(..) => 5,
            RatExpr::Mul(..) => 6,
            RatExpr::Div(..) => 7,
        }
    }
}

/// Arithmetic carrier for expression evaluation.
pub trait Arith: Sized {
    fn constant(x: f64) -> Self;
    fn negate(self) -> Self;
    fn plus(self, other: &Self) -> Self;
    fn minus(self, other: &Self) -> Self;
    fn times(self, other: &Self) -> Self;
    fn over(self, other: &Self) -> Result<Self, ExprError>;
}

impl Arith for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn negate(self) -> Self {
        -self
    }
    fn plus(self, other: &Self) -> Self {
        self + other
    }
    fn minus(self, other: &Self) -> Self {
        self - other
    }
    fn times(self, other: &Self) -> Self {
        self * other
    }
    fn over(self, other: &Self) -> Result<Self, ExprError> {
        if *other == 0.0 {
            Err(ExprError::DivByZero)
        } else {
            Ok(self / other)
        }
    }
}

/// Explicit bindings for attributes and nulls.
#[derive(Debug, Clone, Default)]
pub struct Assignment {
    pub attr_values: BTreeMap<usize, f64>,
    pub null_values: Valuation,
}

impl Assignment {
    pub fn attrs(values: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Assignment {
            attr_values: values.into_iter().collect(),
            null_values: Valuation::new(),
        }
    }

    pub fn nulls(values: Valuation) -> Self {
        Assignment {
            attr_values: BTreeMap::new(),
            null_values: values,
        }
    }

    /// Union of two assignments; bindings of `other` win on overlap.
    pub fn merged(&self, other: &Assignment) -> Assignment {
        let mut out = self.clone();
        out.attr_values.extend(other.attr_values.iter().map(|(k, v)| (*k, *v)));
        for (id, x) in other.null_values.iter() {
            out.null_values.insert(id, x);
        }
        out
    }
}

pub fn eval_expr(e: &RatExpr, a: &Assignment) -> Result<f64, ExprError> {
    e.eval_in(
        &|i| a.attr_values.get(&i).copied().ok_or(ExprError::UnboundAttr(i)),
        &|id| a.null_values.get(id).ok_or(ExprError::UnboundNull(id)),
    )
}

/// Replaces every null variable by the constant `v` assigns to it.
pub fn substitute_nulls(e: &RatExpr, v: &Valuation) -> Result<RatExpr, ExprError> {
    if let Some(missing) = e.nulls().into_iter().find(|id| v.get(*id).is_none()) {
        return Err(ExprError::UnboundNull(missing));
    }
    Ok(e.map_leaves(&mut |node| match node {
        RatExpr::Null(id) => v.get(*id).map(RatExpr::Const),
        _ => None,
    }))
}

impl PartialEq for RatExpr {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for RatExpr {}

impl PartialOrd for RatExpr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RatExpr {
    fn cmp(&self, other: &Self) -> Ordering {
        use RatExpr::*;
        match (self, other) {
            (Const(a), Const(b)) => a.total_cmp(b),
            (Attr(a), Attr(b)) => a.cmp(b),
            (Null(a), Null(b)) => a.cmp(b),
            (Neg(a), Neg(b)) => a.cmp(b),
            (Add(a1, b1), Add(a2, b2))
            | (Sub(a1, b1), Sub(a2, b2))
            | (Mul(a1, b1), Mul(a2, b2))
            | (Div(a1, b1), Div(a2, b2)) => a1.cmp(a2).then_with(|| b1.cmp(b2)),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

// Binding strength used by the printer: sums 1, products 2, prefix minus 3.
fn precedence(e: &RatExpr) -> u8 {
    match e {
        RatExpr::Add(..) | RatExpr::Sub(..) => 1,
        RatExpr::Mul(..) | RatExpr::Div(..) => 2,
        RatExpr::Neg(_) => 3,
        RatExpr::Const(x) if x.is_sign_negative() => 3,
        _ => 4,
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &RatExpr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for RatExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatExpr::Const(x) => write!(f, "{x}"),
            RatExpr::Attr(i) => write!(f, "${i}"),
            RatExpr::Null(id) => write!(f, "{id}"),
            RatExpr::Neg(a) => {
                // `-3` would read back as the constant −3, so a negated
                // literal keeps its parentheses
                f.write_str("-")?;
                match **a {
                    RatExpr::Const(_) => write!(f, "({a})"),
                    _ => write_operand(f, a, 3),
                }
            }
            RatExpr::Add(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" + ")?;
                write_operand(f, b, 2)
            }
            RatExpr::Sub(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" - ")?;
                write_operand(f, b, 2)
            }
            RatExpr::Mul(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str(" * ")?;
                write_operand(f, b, 3)
            }
            RatExpr::Div(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str(" / ")?;
                write_operand(f, b, 3)
            }
        }
    }
}

impl FromStr for RatExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parser::parse_expr(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> RatExpr {
        s.parse().unwrap()
    }

    #[test]
    fn evaluates_rational_functions() {
        let e = parse("$1 * $1 / $2");
        assert_eq!(eval_expr(&e, &Assignment::attrs([(1, 2.0), (2, 4.0)])), Ok(1.0));
        let e = parse("n1 - 2");
        let a = Assignment::nulls([(NullId(1), 5.0)].into_iter().collect());
        assert_eq!(eval_expr(&e, &a), Ok(3.0));
        let e = parse("$1 / $2");
        assert_eq!(
            eval_expr(&e, &Assignment::attrs([(1, 1.0), (2, 0.0)])),
            Err(ExprError::DivByZero)
        );
        assert_eq!(
            eval_expr(&e, &Assignment::attrs([(1, 1.0)])),
            Err(ExprError::UnboundAttr(2))
        );
    }

    #[test]
    fn substitution_examples() {
        let v: Valuation = [(NullId(1), 1.0), (NullId(3), 2.0)].into_iter().collect();
        let e = substitute_nulls(&parse("n1 + n3"), &v).unwrap();
        assert!(e.nulls().is_empty());
        assert_eq!(eval_expr(&e, &Assignment::default()), Ok(3.0));

        assert_eq!(substitute_nulls(&RatExpr::Const(5.0), &v), Ok(RatExpr::Const(5.0)));

        let half: Valuation = [(NullId(1), 0.5)].into_iter().collect();
        let neg = parse("-n1");
        let direct = eval_expr(&neg, &Assignment::nulls(half.clone())).unwrap();
        let substituted = substitute_nulls(&neg, &half).unwrap();
        assert_eq!(eval_expr(&substituted, &Assignment::default()), Ok(direct));
        assert_eq!(direct, -0.5);

        assert_eq!(
            substitute_nulls(&parse("n9"), &v),
            Err(ExprError::UnboundNull(NullId(9)))
        );
    }

    #[test]
    fn free_variables() {
        let e = parse("($2 + n4) / (n1 * $7)");
        assert_eq!(e.attrs(), [2, 7].into());
        assert_eq!(e.nulls(), [NullId(1), NullId(4)].into());
        assert_eq!(e.max_attr(), Some(7));
    }

    #[test]
    fn printing_round_trips() {
        for text in [
            "$1 - ($2 - $3)",
            "$1 - $2 - $3",
            "-(3)",
            "-3",
            "-n1 * 2",
            "-(n1 + 2)",
            "1 / (2 / $1)",
            "0.1 + 1e-7",
            "(($1))",
        ] {
            let e = parse(text);
            let printed = e.to_string();
            assert_eq!(parse(&printed), e, "{text} printed as {printed}");
        }
        assert_eq!(parse("-3"), RatExpr::Const(-3.0));
        assert_eq!(parse("-(3)"), RatExpr::neg(RatExpr::Const(3.0)));
    }
}
