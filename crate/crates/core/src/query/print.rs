use std::fmt;

use super::{Bound, CmpOp, Condition, IntervalSpec, Query};
use crate::expr::RatExpr;

fn attr_list(positions: &[usize]) -> String {
    positions
        .iter()
        .map(|i| format!("${i}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Base(name) => f.write_str(name),
            Query::Literal(lit) => {
                write!(f, "values[{}]{{", lit.arity)?;
                for (k, (row, mult)) in lit.rows.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
                    write!(f, "({})", cells.join(", "))?;
                    if *mult != 1 {
                        write!(f, " * {mult}")?;
                    }
                }
                f.write_str("}")
            }
            Query::Project(p, q) => write!(f, "project[{}]({q})", attr_list(p)),
            Query::Select(c, q) => write!(f, "select({c}, {q})"),
            Query::Product(a, b) => write!(f, "product({a}, {b})"),
            Query::UnionAll(a, b) => write!(f, "union({a}, {b})"),
            Query::ExceptAll(a, b) => write!(f, "except({a}, {b})"),
            Query::Apply(e, q) => write!(f, "apply({e}, {q})"),
            Query::SumGroup { group, sum, input } => {
                write!(f, "sum[{}; ${sum}]({input})", attr_list(group))
            }
            Query::Count { group, input } => write!(f, "count[{}]({input})", attr_list(group)),
            Query::Avg { group, attr, input } => {
                write!(f, "avg[{}; ${attr}]({input})", attr_list(group))
            }
            Query::Min { group, attr, input } => {
                write!(f, "min[{}; ${attr}]({input})", attr_list(group))
            }
            Query::Max { group, attr, input } => {
                write!(f, "max[{}; ${attr}]({input})", attr_list(group))
            }
            Query::Dedup(q) => write!(f, "dedup({q})"),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::NegInf => f.write_str("-inf"),
            Bound::PosInf => f.write_str("+inf"),
            Bound::Finite(e) => write!(f, "{e}"),
        }
    }
}

impl fmt::Display for IntervalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed() { '[' } else { '(' };
        let close = if self.upper_closed() { ']' } else { ')' };
        write!(f, "{open}{}, {}{close}", self.lower(), self.upper())
    }
}

// Bare attributes on both sides of `=`/`<` read back as a core atom, so an
// arithmetic comparison of that shape keeps parentheses.
fn cmp_side(e: &RatExpr, guard: bool) -> String {
    match e {
        RatExpr::Attr(_) if guard => format!("({e})"),
        _ => e.to_string(),
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Eq(i, j) => write!(f, "${i} = ${j}"),
            Condition::Lt(i, j) => write!(f, "${i} < ${j}"),
            Condition::IsConst(i) => write!(f, "const(${i})"),
            Condition::Cmp(a, op, b) => {
                let guard = matches!(op, CmpOp::Eq | CmpOp::Lt)
                    && matches!(a, RatExpr::Attr(_))
                    && matches!(b, RatExpr::Attr(_));
                write!(f, "{} {} {}", cmp_side(a, guard), op.symbol(), cmp_side(b, guard))
            }
            Condition::In(i, spec) => write!(f, "${i} in {spec}"),
            Condition::And(a, b) => write!(f, "({a} and {b})"),
            Condition::Or(a, b) => write!(f, "({a} or {b})"),
            Condition::Not(a) => write!(f, "not {a}"),
        }
    }
}
