//! Random desk-scale instances shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ipdb::approx::{Comparator, LikelihoodQuery};
use ipdb::model::{Bag, IncompleteDatabase, NullId, Value};
use ipdb::query::{Bound, CmpOp, Condition, IntervalSpec, Query};
use ipdb::{Distribution, RatExpr};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const CONSTANTS: [f64; 5] = [-1.0, 0.0, 0.5, 1.0, 2.0];

fn distribution(r: &mut ChaCha8Rng) -> Distribution {
    match r.random_range(0..3) {
        0 => Distribution::Normal {
            mu: *CONSTANTS.choose(r).unwrap(),
            sigma: 1.0,
        },
        1 => Distribution::Uniform { lo: -1.0, hi: 2.0 },
        _ => Distribution::Exponential { lambda: 1.0 },
    }
}

/// `R` of arity 2 and `S` of arity 1 with at most `max_tuples` tuples in
/// total, drawing entries from `max_nulls` nulls and a few constants.
pub fn random_db(r: &mut ChaCha8Rng, max_nulls: u64, max_tuples: usize) -> IncompleteDatabase {
    let total = r.random_range(1..=max_tuples);
    let in_r = r.random_range(0..=total);
    let entry = |r: &mut ChaCha8Rng| {
        if max_nulls > 0 && r.random_bool(0.5) {
            Value::Null(NullId(r.random_range(1..=max_nulls)))
        } else {
            Value::Real(*CONSTANTS.choose(r).unwrap())
        }
    };
    let mut rel = Bag::new(2);
    for _ in 0..in_r {
        let row = vec![entry(r), entry(r)];
        rel.insert(row, r.random_range(1..=2)).unwrap();
    }
    let mut s = Bag::new(1);
    for _ in in_r..total {
        s.insert(vec![entry(r)], 1).unwrap();
    }
    let relations: BTreeMap<String, _> = [("R".to_string(), rel), ("S".to_string(), s)].into();
    let used: Vec<NullId> = relations
        .values()
        .flat_map(|b| b.nulls().collect::<Vec<_>>())
        .collect();
    let annotations = used.into_iter().map(|id| (id, distribution(r))).collect();
    IncompleteDatabase::new(relations, annotations).unwrap()
}

fn attr(r: &mut ChaCha8Rng, arity: usize) -> usize {
    r.random_range(1..=arity)
}

fn leaf(r: &mut ChaCha8Rng) -> (Query, usize) {
    if r.random_bool(0.6) {
        (Query::base("R"), 2)
    } else {
        (Query::base("S"), 1)
    }
}

/// Reshapes `q` of arity `from ≥ 1` to arity `to` by projection.
fn reshape(q: Query, from: usize, to: usize) -> Query {
    if from == to {
        return q;
    }
    Query::project((0..to).map(|k| k % from + 1).collect(), q)
}

/// The order selection every lifted case is required to contain.
pub fn order_selection(r: &mut ChaCha8Rng, q: Query, arity: usize) -> Query {
    if arity >= 2 {
        let i = attr(r, arity);
        let j = (i % arity) + 1;
        Query::select(Condition::Lt(i, j), q)
    } else {
        let c = *CONSTANTS.choose(r).unwrap();
        Query::select(Condition::Cmp(RatExpr::Attr(1), CmpOp::Lt, RatExpr::Const(c)), q)
    }
}

/// A random query of depth at most `depth` over `R(2)` and `S(1)`; sugar
/// operators appear when `sugar` is set. Arities stay within 1..=4.
pub fn random_query(r: &mut ChaCha8Rng, depth: usize, sugar: bool) -> (Query, usize) {
    if depth <= 1 || r.random_bool(0.15) {
        return leaf(r);
    }
    let (q, n) = random_query(r, depth - 1, sugar);
    let choices = if sugar { 12 } else { 8 };
    match r.random_range(0..choices) {
        0 => (order_selection(r, q, n), n),
        1 => {
            let (i, j) = (attr(r, n), attr(r, n));
            (Query::select(Condition::Eq(i, j), q), n)
        }
        2 => {
            let width = r.random_range(1..=n);
            let p = (0..width).map(|_| attr(r, n)).collect();
            (Query::project(p, q), width)
        }
        3 if n <= 2 => {
            let (b, m) = random_query(r, depth - 1, sugar);
            if n + m <= 4 {
                (Query::product(q, b), n + m)
            } else {
                (Query::product(q, Query::base("S")), n + 1)
            }
        }
        4 | 5 => {
            let (b, m) = random_query(r, depth - 1, sugar);
            let b = reshape(b, m, n);
            if r.random_bool(0.5) {
                (Query::union_all(q, b), n)
            } else {
                (Query::except_all(q, b), n)
            }
        }
        6 if n < 4 => {
            let a = RatExpr::Attr(attr(r, n));
            let f = match r.random_range(0..3) {
                0 => RatExpr::add(a, RatExpr::Attr(attr(r, n))),
                1 => RatExpr::mul(a, RatExpr::Const(*CONSTANTS.choose(r).unwrap())),
                _ => RatExpr::sub(a, RatExpr::Const(1.0)),
            };
            (Query::apply(f, q), n + 1)
        }
        7 => {
            let group: Vec<usize> = if n > 1 && r.random_bool(0.6) { vec![1] } else { vec![] };
            let sum = attr(r, n);
            let k = group.len();
            (Query::sum_group(group, sum, q), k + 1)
        }
        8 => {
            let group = if n > 1 { vec![attr(r, n)] } else { vec![] };
            let k = group.len();
            (Query::count(group, q), k + 1)
        }
        9 if n > 1 => {
            let g = attr(r, n);
            let a = attr(r, n);
            if r.random_bool(0.5) {
                (Query::min(vec![g], a, q), 2)
            } else {
                (Query::max(vec![g], a, q), 2)
            }
        }
        10 if n > 1 => (Query::avg(vec![1], 2, q), 2),
        11 => (Query::dedup(q), n),
        _ => (q, n),
    }
}

/// A query of depth at most `depth` containing at least one order selection.
pub fn query_with_order(r: &mut ChaCha8Rng, depth: usize, sugar: bool) -> (Query, usize) {
    let (q, n) = random_query(r, depth - 1, sugar);
    (order_selection(r, q, n), n)
}

fn interval(r: &mut ChaCha8Rng, nulls: &[NullId]) -> IntervalSpec {
    let c = |r: &mut ChaCha8Rng| RatExpr::Const(*CONSTANTS.choose(r).unwrap());
    match r.random_range(0..5) {
        0 => IntervalSpec::everything(),
        1 => {
            let (a, b) = (c(r), c(r));
            IntervalSpec::new(Bound::Finite(a), r.random_bool(0.5), Bound::Finite(RatExpr::add(b, RatExpr::Const(1.0))), r.random_bool(0.5))
        }
        2 => IntervalSpec::new(Bound::NegInf, false, Bound::Finite(c(r)), true),
        3 if !nulls.is_empty() => {
            let id = *nulls.choose(r).unwrap();
            IntervalSpec::new(Bound::Finite(RatExpr::Null(id)), true, Bound::PosInf, false)
        }
        _ => IntervalSpec::new(Bound::Finite(c(r)), false, Bound::PosInf, false),
    }
}

fn comparator(r: &mut ChaCha8Rng) -> Comparator {
    *[Comparator::Lt, Comparator::Eq, Comparator::Gt].choose(r).unwrap()
}

/// A random likelihood problem on a random database.
pub fn random_case(r: &mut ChaCha8Rng, sugar: bool) -> (LikelihoodQuery, IncompleteDatabase) {
    let db = random_db(r, 3, 5);
    let (q, n) = random_query(r, 4, sugar);
    let nulls: Vec<NullId> = db.annotations().keys().copied().collect();
    let intervals = (0..n).map(|_| interval(r, &nulls)).collect();
    let cmp = comparator(r);
    let k = r.random_range(0..3);
    (LikelihoodQuery::new(q, cmp, k, intervals), db)
}

/// A null-free database of the same shape as [`random_db`].
pub fn random_complete_db(r: &mut ChaCha8Rng) -> IncompleteDatabase {
    random_db(r, 0, 5)
}
