//! Rewriting of aggregates, duplicate elimination and composite or
//! arithmetic selections into core operators.
//!
//! * `dedup(q)` ↦ `project[$1..$n](sum[$1..$n; $n+1](apply(1, q)))`
//! * `count[g](q)` ↦ `project[$1..$k+1](sum[g; $n+1](apply(1, q)))`
//! * `avg[g; $j](q)` joins the grouped sum with the grouped count on the
//!   group columns and divides
//! * `min`/`max` subtract the non-extremal values (found by a self-join on
//!   the group columns and an order comparison) from the deduplicated values
//! * `f ω g` extends the input with `f` and `g`, compares the two new
//!   columns and projects them away
//! * `and` nests, `or` is `(σ₁ ∪ σ₂) \ σ₂(σ₁)`, `not θ` is `q \ σ_θ(q)`

use super::arity::{arity_of, Schema, TypeError};
use super::{Bound, CmpOp, Condition, IntervalSpec, Query};
use crate::expr::RatExpr;

pub fn desugar(q: &Query, schema: &Schema) -> Result<Query, TypeError> {
    let d = |q: &Query| desugar(q, schema);
    Ok(match q {
        Query::Base(_) | Query::Literal(_) => q.clone(),
        Query::Project(p, input) => Query::project(p.clone(), d(input)?),
        Query::Apply(f, input) => Query::apply(f.clone(), d(input)?),
        Query::Product(a, b) => Query::product(d(a)?, d(b)?),
        Query::UnionAll(a, b) => Query::union_all(d(a)?, d(b)?),
        Query::ExceptAll(a, b) => Query::except_all(d(a)?, d(b)?),
        Query::SumGroup { group, sum, input } => Query::sum_group(group.clone(), *sum, d(input)?),
        Query::Select(c, input) => {
            let n = arity_of(input, schema)?;
            select(c, d(input)?, n)
        }
        Query::Dedup(input) => dedup(d(input)?, arity_of(input, schema)?),
        Query::Count { group, input } => count(group, d(input)?, arity_of(input, schema)?),
        Query::Avg { group, attr, input } => {
            avg(group, *attr, d(input)?, arity_of(input, schema)?)
        }
        Query::Min { group, attr, input } => extremum(group, *attr, d(input)?, true),
        Query::Max { group, attr, input } => extremum(group, *attr, d(input)?, false),
    })
}

fn range(from: usize, to: usize) -> Vec<usize> {
    (from..=to).collect()
}

fn dedup(q: Query, n: usize) -> Query {
    Query::project(
        range(1, n),
        Query::sum_group(range(1, n), n + 1, Query::apply(RatExpr::Const(1.0), q)),
    )
}

fn count(group: &[usize], q: Query, n: usize) -> Query {
    let k = group.len();
    Query::project(
        range(1, k + 1),
        Query::sum_group(group.to_vec(), n + 1, Query::apply(RatExpr::Const(1.0), q)),
    )
}

/// Nested equalities `$i = $(offset + i)` for `i = 1..=k`.
fn join_on_prefix(k: usize, offset: usize, q: Query) -> Query {
    (1..=k).fold(q, |acc, i| Query::select(Condition::Eq(i, offset + i), acc))
}

fn avg(group: &[usize], attr: usize, q: Query, n: usize) -> Query {
    let k = group.len();
    let sums = Query::sum_group(group.to_vec(), attr, q.clone());
    let counts = count(group, q, n);
    let joined = join_on_prefix(k, k + 1, Query::product(sums, counts));
    // (g, sum, count)
    let paired = Query::project(range(1, k + 1).into_iter().chain([2 * k + 2]).collect(), joined);
    let divided = Query::apply(
        RatExpr::div(RatExpr::Attr(k + 1), RatExpr::Attr(k + 2)),
        paired,
    );
    Query::project(range(1, k).into_iter().chain([k + 3]).collect(), divided)
}

fn extremum(group: &[usize], attr: usize, q: Query, is_min: bool) -> Query {
    let k = group.len();
    let values = Query::project(group.iter().copied().chain([attr]).collect(), q);
    let joined = join_on_prefix(k, k + 1, Query::product(values.clone(), values.clone()));
    // (g, v, w)
    let pairs = Query::project(range(1, k + 1).into_iter().chain([2 * k + 2]).collect(), joined);
    // v is not extremal when some w beats it
    let beaten = if is_min {
        Condition::Lt(k + 2, k + 1)
    } else {
        Condition::Lt(k + 1, k + 2)
    };
    let losers = Query::project(range(1, k + 1), Query::select(beaten, pairs));
    Query::except_all(dedup(values, k + 1), dedup(losers, k + 1))
}

/// Core form of `σ_c(q)` where `q` is already core and has arity `n`.
fn select(c: &Condition, q: Query, n: usize) -> Query {
    match c {
        Condition::Eq(..) | Condition::Lt(..) | Condition::IsConst(_) => Query::select(c.clone(), q),
        Condition::And(a, b) => {
            let inner = select(a, q, n);
            select(b, inner, n)
        }
        Condition::Or(a, b) => {
            let left = select(a, q.clone(), n);
            let right = select(b, q, n);
            let both = select(b, left.clone(), n);
            Query::except_all(Query::union_all(left, right), both)
        }
        Condition::Not(a) => {
            let matching = select(a, q.clone(), n);
            Query::except_all(q, matching)
        }
        Condition::Cmp(f, op, g) => {
            let extended = Query::apply(g.clone(), Query::apply(f.clone(), q));
            let (lhs, rhs) = (n + 1, n + 2);
            let test = match op {
                CmpOp::Eq => Condition::Eq(lhs, rhs),
                CmpOp::Lt => Condition::Lt(lhs, rhs),
                CmpOp::Gt => Condition::Lt(rhs, lhs),
                CmpOp::Ne => Condition::not(Condition::Eq(lhs, rhs)),
                CmpOp::Le => Condition::or(Condition::Lt(lhs, rhs), Condition::Eq(lhs, rhs)),
                CmpOp::Ge => Condition::or(Condition::Lt(rhs, lhs), Condition::Eq(lhs, rhs)),
            };
            Query::project(range(1, n), select(&test, extended, n + 2))
        }
        Condition::In(i, spec) => match interval_condition(*i, spec) {
            Some(cond) => select(&cond, q, n),
            None => q,
        },
    }
}

/// `$i ∈ spec` as comparisons against the finite endpoints.
pub fn interval_condition(i: usize, spec: &IntervalSpec) -> Option<Condition> {
    let x = RatExpr::Attr(i);
    let lower = match spec.lower() {
        Bound::Finite(lo) => {
            let op = if spec.lower_closed() { CmpOp::Ge } else { CmpOp::Gt };
            Some(Condition::Cmp(x.clone(), op, lo.clone()))
        }
        _ => None,
    };
    let upper = match spec.upper() {
        Bound::Finite(hi) => {
            let op = if spec.upper_closed() { CmpOp::Le } else { CmpOp::Lt };
            Some(Condition::Cmp(x, op, hi.clone()))
        }
        _ => None,
    };
    match (lower, upper) {
        (Some(a), Some(b)) => Some(Condition::and(a, b)),
        (a, b) => a.or(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;

    fn schema() -> Schema {
        [("R".to_string(), 1), ("S".to_string(), 2)].into()
    }

    fn core(text: &str) -> Query {
        desugar(&parse(text).unwrap(), &schema()).unwrap()
    }

    #[test]
    fn dedup_of_unary_relation() {
        assert_eq!(core("dedup(R)"), parse("project[$1](sum[$1; $2](apply(1, R)))").unwrap());
    }

    #[test]
    fn disjunction_expansion() {
        assert_eq!(
            core("select($1 < $2 or $2 < $1, S)"),
            parse("except(union(select($1 < $2, S), select($2 < $1, S)), select($2 < $1, select($1 < $2, S)))")
                .unwrap()
        );
    }

    #[test]
    fn core_queries_are_fixpoints() {
        for text in ["select($1 = $2, S × R)", "sum[; $1](apply($1 * 2, R))", "except(R, R)"] {
            assert_eq!(core(text), parse(text).unwrap());
        }
    }

    #[test]
    fn output_is_core_and_arity_is_stable() {
        for text in [
            "select($1 + 1 >= $2 and not $1 = $2, S)",
            "avg[$1; $2](S)",
            "min[; $1](R)",
            "max[$2; $1](S)",
            "count[](S)",
            "select($2 in (0, n1], S)",
        ] {
            let q = parse(text).unwrap();
            let d = desugar(&q, &schema()).unwrap();
            assert!(d.is_core(), "{text} → {d}");
            assert_eq!(arity_of(&d, &schema()), arity_of(&q, &schema()), "{text}");
        }
    }
}
