//! The query language: extended relational algebra over bags.
//!
//! The core operators are base relations, inline literals, projection,
//! selection on `$i = $j`, `$i < $j` and `const($i)`, product, additive
//! union, truncating difference, `apply` of a rational function and grouped
//! summation. Aggregates, duplicate elimination and composite or arithmetic
//! conditions are sugar that [`desugar`] rewrites into the core.

pub mod arity;
pub mod desugar;
pub mod lexer;
pub mod parser;
mod print;

use std::sync::Arc;

use crate::expr::RatExpr;
use crate::model::{Bag, ModelError};

pub use arity::{check_arity, ArityTree, Schema, TypeError};
pub use desugar::desugar;
pub use parser::{parse, ParseError};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Query {
    Base(String),
    Literal(Arc<Literal>),
    Project(Vec<usize>, Box<Query>),
    Select(Condition, Box<Query>),
    Product(Box<Query>, Box<Query>),
    UnionAll(Box<Query>, Box<Query>),
    ExceptAll(Box<Query>, Box<Query>),
    Apply(RatExpr, Box<Query>),
    SumGroup {
        group: Vec<usize>,
        sum: usize,
        input: Box<Query>,
    },
    Count {
        group: Vec<usize>,
        input: Box<Query>,
    },
    Avg {
        group: Vec<usize>,
        attr: usize,
        input: Box<Query>,
    },
    Min {
        group: Vec<usize>,
        attr: usize,
        input: Box<Query>,
    },
    Max {
        group: Vec<usize>,
        attr: usize,
        input: Box<Query>,
    },
    Dedup(Box<Query>),
}

/// An inline bag whose entries are constant expressions or bare nulls.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Literal {
    pub arity: usize,
    pub rows: Vec<(Vec<RatExpr>, u64)>,
}

impl Literal {
    pub fn new(arity: usize, rows: Vec<(Vec<RatExpr>, u64)>) -> Result<Self, ModelError> {
        for (row, mult) in &rows {
            if row.len() != arity {
                return Err(ModelError::ArityMismatch {
                    expected: arity,
                    found: row.len(),
                });
            }
            if *mult == 0 {
                return Err(ModelError::ZeroMultiplicity);
            }
        }
        Ok(Literal { arity, rows })
    }

    /// The single empty tuple: the nullary "true".
    pub fn unit() -> Self {
        Literal {
            arity: 0,
            rows: vec![(Vec::new(), 1)],
        }
    }

    pub fn from_bag(bag: &Bag<crate::model::Value>) -> Self {
        Literal {
            arity: bag.arity(),
            rows: bag
                .iter()
                .map(|(t, m)| (t.iter().map(RatExpr::from_value).collect(), m))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// One endpoint of an interval.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bound {
    NegInf,
    PosInf,
    Finite(RatExpr),
}

/// An interval whose endpoints are rational expressions or infinities.
///
/// Closedness flags are forced to `false` on infinite endpoints.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IntervalSpec {
    lower: Bound,
    upper: Bound,
    lower_closed: bool,
    upper_closed: bool,
}

impl IntervalSpec {
    pub fn new(lower: Bound, lower_closed: bool, upper: Bound, upper_closed: bool) -> Self {
        let lower_closed = lower_closed && matches!(lower, Bound::Finite(_));
        let upper_closed = upper_closed && matches!(upper, Bound::Finite(_));
        IntervalSpec {
            lower,
            upper,
            lower_closed,
            upper_closed,
        }
    }

    pub fn closed(lo: RatExpr, hi: RatExpr) -> Self {
        Self::new(Bound::Finite(lo), true, Bound::Finite(hi), true)
    }

    pub fn open(lo: RatExpr, hi: RatExpr) -> Self {
        Self::new(Bound::Finite(lo), false, Bound::Finite(hi), false)
    }

    /// `[c, c]`.
    pub fn point(c: f64) -> Self {
        Self::closed(RatExpr::Const(c), RatExpr::Const(c))
    }

    /// `(−∞, +∞)`.
    pub fn everything() -> Self {
        Self::new(Bound::NegInf, false, Bound::PosInf, false)
    }

    pub fn lower(&self) -> &Bound {
        &self.lower
    }

    pub fn upper(&self) -> &Bound {
        &self.upper
    }

    pub fn lower_closed(&self) -> bool {
        self.lower_closed
    }

    pub fn upper_closed(&self) -> bool {
        self.upper_closed
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &RatExpr> {
        [&self.lower, &self.upper].into_iter().filter_map(|b| match b {
            Bound::Finite(e) => Some(e),
            _ => None,
        })
    }

    /// Whether `x` lies in the interval once the endpoints are the reals
    /// `lo` and `hi` (ignored when the endpoint is infinite).
    pub fn contains_with(&self, x: f64, lo: f64, hi: f64) -> bool {
        let above = match self.lower {
            Bound::NegInf => true,
            Bound::PosInf => false,
            Bound::Finite(_) if self.lower_closed => x >= lo,
            Bound::Finite(_) => x > lo,
        };
        let below = match self.upper {
            Bound::PosInf => true,
            Bound::NegInf => false,
            Bound::Finite(_) if self.upper_closed => x <= hi,
            Bound::Finite(_) => x < hi,
        };
        above && below
    }
}

/// A tuple of intervals describing a region of output tuples.
pub type IntervalTuple = Vec<IntervalSpec>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Condition {
    Eq(usize, usize),
    Lt(usize, usize),
    IsConst(usize),
    Cmp(RatExpr, CmpOp, RatExpr),
    In(usize, IntervalSpec),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
    Not(Box<Condition>),
}

impl Condition {
    pub fn and(a: Condition, b: Condition) -> Self {
        Condition::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Condition, b: Condition) -> Self {
        Condition::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Condition) -> Self {
        Condition::Not(Box::new(a))
    }

    pub fn is_core(&self) -> bool {
        matches!(self, Condition::Eq(..) | Condition::Lt(..) | Condition::IsConst(_))
    }

    /// Every attribute position the condition reads.
    pub fn positions(&self) -> Vec<usize> {
        match self {
            Condition::Eq(i, j) | Condition::Lt(i, j) => vec![*i, *j],
            Condition::IsConst(i) => vec![*i],
            Condition::Cmp(f, _, g) => f.attrs().into_iter().chain(g.attrs()).collect(),
            Condition::In(i, spec) => std::iter::once(*i)
                .chain(spec.endpoints().flat_map(|e| e.attrs()))
                .collect(),
            Condition::And(a, b) | Condition::Or(a, b) => {
                let mut out = a.positions();
                out.extend(b.positions());
                out
            }
            Condition::Not(a) => a.positions(),
        }
    }
}

impl Query {
    pub fn base(name: impl Into<String>) -> Self {
        Query::Base(name.into())
    }

    pub fn literal(lit: Literal) -> Self {
        Query::Literal(Arc::new(lit))
    }

    pub fn project(positions: Vec<usize>, q: Query) -> Self {
        Query::Project(positions, Box::new(q))
    }

    pub fn select(cond: Condition, q: Query) -> Self {
        Query::Select(cond, Box::new(q))
    }

    pub fn product(a: Query, b: Query) -> Self {
        Query::Product(Box::new(a), Box::new(b))
    }

    pub fn union_all(a: Query, b: Query) -> Self {
        Query::UnionAll(Box::new(a), Box::new(b))
    }

    pub fn except_all(a: Query, b: Query) -> Self {
        Query::ExceptAll(Box::new(a), Box::new(b))
    }

    pub fn apply(f: RatExpr, q: Query) -> Self {
        Query::Apply(f, Box::new(q))
    }

    pub fn sum_group(group: Vec<usize>, sum: usize, q: Query) -> Self {
        Query::SumGroup {
            group,
            sum,
            input: Box::new(q),
        }
    }

    pub fn count(group: Vec<usize>, q: Query) -> Self {
        Query::Count {
            group,
            input: Box::new(q),
        }
    }

    pub fn avg(group: Vec<usize>, attr: usize, q: Query) -> Self {
        Query::Avg {
            group,
            attr,
            input: Box::new(q),
        }
    }

    pub fn min(group: Vec<usize>, attr: usize, q: Query) -> Self {
        Query::Min {
            group,
            attr,
            input: Box::new(q),
        }
    }

    pub fn max(group: Vec<usize>, attr: usize, q: Query) -> Self {
        Query::Max {
            group,
            attr,
            input: Box::new(q),
        }
    }

    pub fn dedup(q: Query) -> Self {
        Query::Dedup(Box::new(q))
    }

    pub fn children(&self) -> Vec<&Query> {
        match self {
            Query::Base(_) | Query::Literal(_) => vec![],
            Query::Project(_, q)
            | Query::Select(_, q)
            | Query::Apply(_, q)
            | Query::Dedup(q)
            | Query::SumGroup { input: q, .. }
            | Query::Count { input: q, .. }
            | Query::Avg { input: q, .. }
            | Query::Min { input: q, .. }
            | Query::Max { input: q, .. } => vec![q],
            Query::Product(a, b) | Query::UnionAll(a, b) | Query::ExceptAll(a, b) => vec![a, b],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(Query::node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Query::depth)
            .max()
            .unwrap_or(0)
    }

    /// Whether only core operators and core condition atoms occur.
    pub fn is_core(&self) -> bool {
        let here = match self {
            Query::Count { .. }
            | Query::Avg { .. }
            | Query::Min { .. }
            | Query::Max { .. }
            | Query::Dedup(_) => false,
            Query::Select(c, _) => c.is_core(),
            _ => true,
        };
        here && self.children().into_iter().all(Query::is_core)
    }

    /// Names of the base relations referenced.
    pub fn base_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_bases(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_bases<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Query::Base(name) = self {
            out.push(name);
        }
        for c in self.children() {
            c.collect_bases(out);
        }
    }

    /// Rebuilds the tree with every base relation replaced by `f(name)`.
    pub fn replace_bases<E>(
        &self,
        f: &mut impl FnMut(&str) -> Result<Query, E>,
    ) -> Result<Query, E> {
        let mut sub = |q: &Query| q.replace_bases(f).map(Box::new);
        Ok(match self {
            Query::Base(name) => return f(name),
            Query::Literal(_) => self.clone(),
            Query::Project(p, q) => Query::Project(p.clone(), sub(q)?),
            Query::Select(c, q) => Query::Select(c.clone(), sub(q)?),
            Query::Apply(e, q) => Query::Apply(e.clone(), sub(q)?),
            Query::Dedup(q) => Query::Dedup(sub(q)?),
            Query::Product(a, b) => Query::Product(sub(a)?, sub(b)?),
            Query::UnionAll(a, b) => Query::UnionAll(sub(a)?, sub(b)?),
            Query::ExceptAll(a, b) => Query::ExceptAll(sub(a)?, sub(b)?),
            Query::SumGroup { group, sum, input } => Query::SumGroup {
                group: group.clone(),
                sum: *sum,
                input: sub(input)?,
            },
            Query::Count { group, input } => Query::Count {
                group: group.clone(),
                input: sub(input)?,
            },
            Query::Avg { group, attr, input } => Query::Avg {
                group: group.clone(),
                attr: *attr,
                input: sub(input)?,
            },
            Query::Min { group, attr, input } => Query::Min {
                group: group.clone(),
                attr: *attr,
                input: sub(input)?,
            },
            Query::Max { group, attr, input } => Query::Max {
                group: group.clone(),
                attr: *attr,
                input: sub(input)?,
            },
        })
    }
}
