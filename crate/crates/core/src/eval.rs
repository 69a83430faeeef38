//! Bag-semantics evaluation.
//!
//! One evaluator serves three carriers through [`Scalar`]: complete
//! relations, relations with marked nulls treated as constants (naive
//! evaluation), and symbolic relations of rational functions over nulls.
//! Sugar nodes run natively; the desugarer is checked against them.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::expr::{Arith, ExprError, RatExpr};
use crate::model::{Bag, BagRelation, IncompleteDatabase, ModelError, NullId, Valuation, Value};
use crate::query::{check_arity, Bound, CmpOp, Condition, IntervalSpec, Query, Schema, TypeError};
use crate::ratfn::RatFn;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("order comparison on null {0}")]
    NullComparison(NullId),
    #[error("complete evaluation requested over input with nulls")]
    IncompleteInput,
    #[error("literal entry `{0}` is neither a constant nor a null")]
    BadLiteral(String),
    #[error("comparison `{0}` depends on the valuation")]
    Undecided(String),
}

impl EvalError {
    pub fn is_div_by_zero(&self) -> bool {
        matches!(self, EvalError::Expr(ExprError::DivByZero))
    }
}

/// Complete mode rejects nulls; naive mode treats them as constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Complete,
    Naive,
}

/// Entry type of an evaluable relation.
pub trait Scalar: Clone + Ord + fmt::Debug {
    fn from_entry(e: &RatExpr) -> Result<Self, EvalError>;
    fn from_real(x: f64) -> Result<Self, EvalError>;
    fn is_const(&self) -> bool;
    fn less(&self, other: &Self) -> Result<bool, EvalError>;
    /// `f` over the attributes of `row`.
    fn compute(f: &RatExpr, row: &[Self]) -> Result<Self, EvalError>;
    /// `Σ m·t` in iteration order.
    fn weighted_sum<'a>(terms: impl Iterator<Item = (&'a Self, u64)>) -> Result<Self, EvalError>
    where
        Self: 'a;

    fn compare(f: &RatExpr, op: CmpOp, g: &RatExpr, row: &[Self]) -> Result<bool, EvalError> {
        let a = Self::compute(f, row)?;
        let b = Self::compute(g, row)?;
        Ok(match op {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a.less(&b)?,
            CmpOp::Gt => b.less(&a)?,
            CmpOp::Le => a == b || a.less(&b)?,
            CmpOp::Ge => a == b || b.less(&a)?,
        })
    }

    fn within(i: usize, spec: &IntervalSpec, row: &[Self]) -> Result<bool, EvalError> {
        let x = &row[i - 1];
        let above = match spec.lower() {
            Bound::NegInf => true,
            Bound::PosInf => false,
            Bound::Finite(e) => {
                let lo = Self::compute(e, row)?;
                lo.less(x)? || (spec.lower_closed() && lo == *x)
            }
        };
        let below = match spec.upper() {
            Bound::PosInf => true,
            Bound::NegInf => false,
            Bound::Finite(e) => {
                let hi = Self::compute(e, row)?;
                x.less(&hi)? || (spec.upper_closed() && hi == *x)
            }
        };
        Ok(above && below)
    }

    fn holds(c: &Condition, row: &[Self]) -> Result<bool, EvalError> {
        Ok(match c {
            Condition::Eq(i, j) => row[i - 1] == row[j - 1],
            Condition::Lt(i, j) => row[i - 1].less(&row[j - 1])?,
            Condition::IsConst(i) => row[i - 1].is_const(),
            Condition::Cmp(f, op, g) => Self::compare(f, *op, g, row)?,
            Condition::In(i, spec) => Self::within(*i, spec, row)?,
            Condition::And(a, b) => Self::holds(a, row)? && Self::holds(b, row)?,
            Condition::Or(a, b) => Self::holds(a, row)? || Self::holds(b, row)?,
            Condition::Not(a) => !Self::holds(a, row)?,
        })
    }
}

fn real_of(v: &Value) -> Result<f64, EvalError> {
    match v {
        Value::Real(x) => Ok(*x),
        Value::Null(id) => Err(EvalError::NullComparison(*id)),
    }
}

impl Scalar for Value {
    fn from_entry(e: &RatExpr) -> Result<Self, EvalError> {
        match e {
            RatExpr::Null(id) => Ok(Value::Null(*id)),
            _ if e.is_const() => {
                let x = e.eval_in::<f64>(&|i| Err(ExprError::UnboundAttr(i)), &|id| {
                    Err(ExprError::UnboundNull(id))
                })?;
                Ok(Value::real(x)?)
            }
            _ => Err(EvalError::BadLiteral(e.to_string())),
        }
    }

    fn from_real(x: f64) -> Result<Self, EvalError> {
        Ok(Value::real(x)?)
    }

    fn is_const(&self) -> bool {
        !self.is_null()
    }

    fn less(&self, other: &Self) -> Result<bool, EvalError> {
        Ok(real_of(self)? < real_of(other)?)
    }

    fn compute(f: &RatExpr, row: &[Self]) -> Result<Self, EvalError> {
        Ok(Value::real(eval_real(f, row)?)?)
    }

    fn weighted_sum<'a>(terms: impl Iterator<Item = (&'a Self, u64)>) -> Result<Self, EvalError> {
        let mut acc = 0.0;
        for (t, m) in terms {
            let x = t
                .as_real()
                .ok_or_else(|| ExprError::NullOperand(t.as_null().expect("non-real is a null")))?;
            acc += x * m as f64;
        }
        Ok(Value::real(acc)?)
    }

    fn compare(f: &RatExpr, op: CmpOp, g: &RatExpr, row: &[Self]) -> Result<bool, EvalError> {
        Ok(op.holds(eval_real(f, row)?, eval_real(g, row)?))
    }

    fn within(i: usize, spec: &IntervalSpec, row: &[Self]) -> Result<bool, EvalError> {
        let x = real_of(&row[i - 1])?;
        let lo = match spec.lower() {
            Bound::Finite(e) => eval_real(e, row)?,
            _ => 0.0,
        };
        let hi = match spec.upper() {
            Bound::Finite(e) => eval_real(e, row)?,
            _ => 0.0,
        };
        Ok(spec.contains_with(x, lo, hi))
    }
}

fn eval_real(f: &RatExpr, row: &[Value]) -> Result<f64, EvalError> {
    Ok(f.eval_in::<f64>(
        &|i| match &row[i - 1] {
            Value::Real(x) => Ok(*x),
            Value::Null(id) => Err(ExprError::NullOperand(*id)),
        },
        &|id| Err(ExprError::UnboundNull(id)),
    )?)
}

impl Scalar for RatFn {
    fn from_entry(e: &RatExpr) -> Result<Self, EvalError> {
        Ok(RatFn::from_expr(e)?)
    }

    fn from_real(x: f64) -> Result<Self, EvalError> {
        Ok(RatFn::constant(x))
    }

    fn is_const(&self) -> bool {
        self.is_constant()
    }

    /// Decided only when the difference does not depend on the nulls.
    fn less(&self, other: &Self) -> Result<bool, EvalError> {
        let diff = self.clone().minus(other);
        match diff.as_constant() {
            Some(d) => Ok(d < 0.0),
            None => Err(EvalError::Undecided(format!("{self} < {other}"))),
        }
    }

    fn compute(f: &RatExpr, row: &[Self]) -> Result<Self, EvalError> {
        Ok(f.eval_in::<RatFn>(&|i| Ok(row[i - 1].clone()), &|id| Ok(RatFn::var(id)))?)
    }

    fn weighted_sum<'a>(terms: impl Iterator<Item = (&'a Self, u64)>) -> Result<Self, EvalError> {
        Ok(terms.fold(RatFn::constant(0.0), |acc, (t, m)| {
            acc.plus(&t.clone().times(&RatFn::constant(m as f64)))
        }))
    }
}

/// Evaluates `q` over `D`.
///
/// In [`Mode::Complete`] the database and every inline literal must be
/// null-free.
pub fn eval(q: &Query, db: &IncompleteDatabase, mode: Mode) -> Result<BagRelation, EvalError> {
    if mode == Mode::Complete && (!db.is_complete() || literal_has_nulls(q)) {
        return Err(EvalError::IncompleteInput);
    }
    eval_bags(q, db.relations())
}

fn literal_has_nulls(q: &Query) -> bool {
    match q {
        Query::Literal(lit) => lit
            .rows
            .iter()
            .any(|(row, _)| row.iter().any(|e| !e.nulls().is_empty())),
        _ => q.children().into_iter().any(literal_has_nulls),
    }
}

/// Arity-checks `q` against `relations` and evaluates it.
pub fn eval_bags<S: Scalar>(
    q: &Query,
    relations: &BTreeMap<String, Bag<S>>,
) -> Result<Bag<S>, EvalError> {
    let schema: Schema = relations
        .iter()
        .map(|(name, rel)| (name.clone(), rel.arity()))
        .collect();
    check_arity(q, &schema)?;
    eval_checked(q, relations)
}

fn eval_checked<S: Scalar>(
    q: &Query,
    relations: &BTreeMap<String, Bag<S>>,
) -> Result<Bag<S>, EvalError> {
    let sub = |q: &Query| eval_checked(q, relations);
    match q {
        Query::Base(name) => relations
            .get(name)
            .cloned()
            .ok_or_else(|| TypeError::UnknownRelation(name.clone()).into()),
        Query::Literal(lit) => {
            let mut out = Bag::new(lit.arity);
            for (row, mult) in &lit.rows {
                let row = row.iter().map(S::from_entry).collect::<Result<Vec<_>, _>>()?;
                out.insert(row, *mult)?;
            }
            Ok(out)
        }
        Query::Project(positions, input) => project(&sub(input)?, positions),
        Query::Select(c, input) => select(&sub(input)?, c),
        Query::Product(a, b) => product(&sub(a)?, &sub(b)?),
        Query::UnionAll(a, b) => union_all(&sub(a)?, &sub(b)?),
        Query::ExceptAll(a, b) => Ok(except_all(&sub(a)?, &sub(b)?)),
        Query::Apply(f, input) => apply(&sub(input)?, f),
        Query::SumGroup { group, sum, input } => sum_group(&sub(input)?, group, *sum),
        Query::Count { group, input } => count(&sub(input)?, group),
        Query::Avg { group, attr, input } => avg(&sub(input)?, group, *attr),
        Query::Min { group, attr, input } => extremum(&sub(input)?, group, *attr, true),
        Query::Max { group, attr, input } => extremum(&sub(input)?, group, *attr, false),
        Query::Dedup(input) => Ok(dedup(&sub(input)?)),
    }
}

fn pick<S: Clone>(row: &[S], positions: &[usize]) -> Vec<S> {
    positions.iter().map(|&i| row[i - 1].clone()).collect()
}

pub fn project<S: Scalar>(bag: &Bag<S>, positions: &[usize]) -> Result<Bag<S>, EvalError> {
    let mut out = Bag::new(positions.len());
    for (row, m) in bag.iter() {
        out.insert(pick(row, positions), m)?;
    }
    Ok(out)
}

pub fn select<S: Scalar>(bag: &Bag<S>, c: &Condition) -> Result<Bag<S>, EvalError> {
    let mut out = Bag::new(bag.arity());
    for (row, m) in bag.iter() {
        if S::holds(c, row)? {
            out.insert(row.clone(), m)?;
        }
    }
    Ok(out)
}

pub fn product<S: Scalar>(a: &Bag<S>, b: &Bag<S>) -> Result<Bag<S>, EvalError> {
    let mut out = Bag::new(a.arity() + b.arity());
    for (ra, ma) in a.iter() {
        for (rb, mb) in b.iter() {
            let m = ma.checked_mul(mb).ok_or(ModelError::MultiplicityOverflow)?;
            let mut row = ra.clone();
            row.extend(rb.iter().cloned());
            out.insert(row, m)?;
        }
    }
    Ok(out)
}

pub fn union_all<S: Scalar>(a: &Bag<S>, b: &Bag<S>) -> Result<Bag<S>, EvalError> {
    let mut out = a.clone();
    for (row, m) in b.iter() {
        out.insert(row.clone(), m)?;
    }
    Ok(out)
}

pub fn except_all<S: Scalar>(a: &Bag<S>, b: &Bag<S>) -> Bag<S> {
    let mut out = Bag::new(a.arity());
    for (row, m) in a.iter() {
        let left = m.saturating_sub(b.multiplicity(row));
        out.insert(row.clone(), left).expect("arity preserved");
    }
    out
}

pub fn apply<S: Scalar>(bag: &Bag<S>, f: &RatExpr) -> Result<Bag<S>, EvalError> {
    let mut out = Bag::new(bag.arity() + 1);
    for (row, m) in bag.iter() {
        let y = S::compute(f, row)?;
        let mut extended = row.clone();
        extended.push(y);
        out.insert(extended, m)?;
    }
    Ok(out)
}

/// Rows grouped by the values at `group`, in ascending key order.
fn groups<'a, S: Scalar>(bag: &'a Bag<S>, group: &[usize]) -> BTreeMap<Vec<S>, Vec<(&'a Vec<S>, u64)>> {
    let mut out: BTreeMap<Vec<S>, Vec<(&Vec<S>, u64)>> = BTreeMap::new();
    for (row, m) in bag.iter() {
        out.entry(pick(row, group)).or_default().push((row, m));
    }
    out
}

pub fn sum_group<S: Scalar>(bag: &Bag<S>, group: &[usize], sum: usize) -> Result<Bag<S>, EvalError> {
    let mut out = Bag::new(group.len() + 1);
    if group.is_empty() && bag.is_empty() {
        out.insert(vec![S::from_real(0.0)?], 1)?;
        return Ok(out);
    }
    for (key, rows) in groups(bag, group) {
        let total = S::weighted_sum(rows.iter().map(|(row, m)| (&row[sum - 1], *m)))?;
        let mut row = key;
        row.push(total);
        out.insert(row, 1)?;
    }
    Ok(out)
}

fn group_total<S>(rows: &[(&Vec<S>, u64)]) -> f64 {
    rows.iter().map(|(_, m)| *m as f64).sum()
}

pub fn count<S: Scalar>(bag: &Bag<S>, group: &[usize]) -> Result<Bag<S>, EvalError> {
    let mut out = Bag::new(group.len() + 1);
    if group.is_empty() && bag.is_empty() {
        out.insert(vec![S::from_real(0.0)?], 1)?;
        return Ok(out);
    }
    for (key, rows) in groups(bag, group) {
        let mut row = key;
        row.push(S::from_real(group_total(&rows))?);
        out.insert(row, 1)?;
    }
    Ok(out)
}

pub fn avg<S: Scalar>(bag: &Bag<S>, group: &[usize], attr: usize) -> Result<Bag<S>, EvalError> {
    let ratio = RatExpr::div(RatExpr::Attr(1), RatExpr::Attr(2));
    let mut out = Bag::new(group.len() + 1);
    if group.is_empty() && bag.is_empty() {
        return Err(ExprError::DivByZero.into());
    }
    for (key, rows) in groups(bag, group) {
        let total = S::weighted_sum(rows.iter().map(|(row, m)| (&row[attr - 1], *m)))?;
        let n = S::from_real(group_total(&rows))?;
        let mut row = key;
        row.push(S::compute(&ratio, &[total, n])?);
        out.insert(row, 1)?;
    }
    Ok(out)
}

pub fn extremum<S: Scalar>(
    bag: &Bag<S>,
    group: &[usize],
    attr: usize,
    is_min: bool,
) -> Result<Bag<S>, EvalError> {
    let mut out = Bag::new(group.len() + 1);
    for (key, rows) in groups(bag, group) {
        let mut best = &rows[0].0[attr - 1];
        for (row, _) in &rows[1..] {
            let candidate = &row[attr - 1];
            let better = if is_min {
                candidate.less(best)?
            } else {
                best.less(candidate)?
            };
            if better {
                best = candidate;
            }
        }
        let mut row = key;
        row.push(best.clone());
        out.insert(row, 1)?;
    }
    Ok(out)
}

pub fn dedup<S: Scalar>(bag: &Bag<S>) -> Bag<S> {
    bag.iter().map(|(row, _)| (row.clone(), 1)).fold(Bag::new(bag.arity()), |mut acc, (row, m)| {
        acc.insert(row, m).expect("arity preserved");
        acc
    })
}

/// An interval with its endpoints evaluated to reals.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundInterval {
    spec: IntervalSpec,
    lo: f64,
    hi: f64,
}

impl GroundInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.spec.contains_with(x, self.lo, self.hi)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

fn ground_endpoint(b: &Bound, v: &Valuation) -> Result<f64, EvalError> {
    match b {
        Bound::NegInf => Ok(f64::NEG_INFINITY),
        Bound::PosInf => Ok(f64::INFINITY),
        Bound::Finite(e) => Ok(e.eval_in::<f64>(&|i| Err(ExprError::UnboundAttr(i)), &|id| {
            v.get(id).ok_or(ExprError::UnboundNull(id))
        })?),
    }
}

/// `v(ā)`: every endpoint evaluated under `v`.
pub fn ground_intervals(a: &[IntervalSpec], v: &Valuation) -> Result<Vec<GroundInterval>, EvalError> {
    a.iter()
        .map(|spec| {
            Ok(GroundInterval {
                spec: spec.clone(),
                lo: ground_endpoint(spec.lower(), v)?,
                hi: ground_endpoint(spec.upper(), v)?,
            })
        })
        .collect()
}

/// Multiplicity-weighted number of tuples of `a` inside the grounded
/// intervals.
pub fn count_grounded(ground: &[GroundInterval], a: &BagRelation) -> Result<u64, EvalError> {
    if ground.len() != a.arity() {
        return Err(ModelError::ArityMismatch {
            expected: a.arity(),
            found: ground.len(),
        }
        .into());
    }
    let mut total: u64 = 0;
    for (row, m) in a.iter() {
        let mut inside = true;
        for (x, interval) in row.iter().zip(ground) {
            if !interval.contains(real_of(x)?) {
                inside = false;
                break;
            }
        }
        if inside {
            total = total.checked_add(m).ok_or(ModelError::MultiplicityOverflow)?;
        }
    }
    Ok(total)
}

/// `#(v(ā), A)`.
pub fn count_consistent(a: &[IntervalSpec], v: &Valuation, rel: &BagRelation) -> Result<u64, EvalError> {
    count_grounded(&ground_intervals(a, v)?, rel)
}
