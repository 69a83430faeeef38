//! Compiling a sampling run into one query.
//!
//! The sampled values live in an inline `Rand` literal with one row
//! `(⊥, v₁(⊥), …, v_γ(⊥))` per null. For sample `i`, every base relation
//! `R` of arity `m` is replaced by
//!
//! ```text
//! R_i     = π[m+2, m+4, …, 3m](σθ(R × R_{i,1} × … × R_{i,m}))
//! R_{i,j} = dedup(σ[$1=$2](σ[const($1)](π[j]R × π[j]R)) ∪ π[1, i+1](Rand))
//! ```
//!
//! with `θ = ⋀ $j = $(m+2j−1)`. Naive evaluation of the compiled query
//! over the untouched database equals evaluation of the original query over
//! `v_i(D)`. Each selection of `θ` is applied right after the product that
//! brings its right operand in.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::approx::{val_sampler, ApproxConfig, ApproxError, Comparator, LikelihoodQuery};
use crate::eval::{ground_intervals, EvalError};
use crate::expr::RatExpr;
use crate::model::{IncompleteDatabase, ModelError, Valuation};
use crate::query::{
    arity::arity_of, desugar, Bound, CmpOp, Condition, IntervalSpec, Literal, Query, Schema,
    TypeError,
};

pub const DEFAULT_ARITY_CAP: usize = 3 * 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewriteError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("relation `{0}` has arity 0 and cannot be rewritten")]
    NullaryRelation(String),
    #[error("intermediate arity {arity} exceeds the cap of {cap}")]
    ArityOverflow { arity: usize, cap: usize },
    #[error("sample {index}: interval endpoint cannot be grounded: {source}")]
    Sample {
        index: u64,
        #[source]
        source: EvalError,
    },
}

/// The `Rand` literal for `gamma` samples under `seed`: column `j + 1` holds
/// the draws of sample `j` (1-based), identical to [`val_sampler`]'s.
pub fn build_rand(db: &IncompleteDatabase, gamma: u64, seed: u64) -> Literal {
    let samples: Vec<Valuation> = (0..gamma).map(|j| val_sampler(db, seed, j)).collect();
    let rows = db
        .nulls()
        .into_iter()
        .map(|id| {
            let mut row = vec![RatExpr::Null(id)];
            row.extend(samples.iter().map(|v| RatExpr::Const(v.get(id).expect("sampled"))));
            (row, 1)
        })
        .collect();
    Literal::new(gamma as usize + 1, rows).expect("rows have arity γ+1")
}

fn range(from: usize, to: usize) -> Vec<usize> {
    (from..=to).collect()
}

fn dedup_binary(q: Query) -> Query {
    Query::project(range(1, 2), Query::sum_group(range(1, 2), 3, Query::apply(RatExpr::Const(1.0), q)))
}

/// `R_{i,j}` for 1-based sample `i`.
fn attribute_gadget(name: &str, i: usize, j: usize, rand: &Arc<Literal>) -> Query {
    let column = Query::project(vec![j], Query::base(name));
    let constants = Query::select(
        Condition::Eq(1, 2),
        Query::select(Condition::IsConst(1), Query::product(column.clone(), column)),
    );
    let sampled = Query::project(vec![1, i + 1], Query::Literal(rand.clone()));
    dedup_binary(Query::union_all(constants, sampled))
}

/// `R_i`: the relation `name` of arity `m` under the `i`-th valuation.
fn relation_gadget(
    name: &str,
    m: usize,
    i: usize,
    rand: &Arc<Literal>,
    cap: usize,
) -> Result<Query, RewriteError> {
    if m == 0 {
        return Err(RewriteError::NullaryRelation(name.to_string()));
    }
    if 3 * m > cap {
        return Err(RewriteError::ArityOverflow { arity: 3 * m, cap });
    }
    let mut q = Query::base(name);
    for j in 1..=m {
        q = Query::select(
            Condition::Eq(j, m + 2 * j - 1),
            Query::product(q, attribute_gadget(name, i, j, rand)),
        );
    }
    Ok(Query::project((1..=m).map(|j| m + 2 * j).collect(), q))
}

/// `q̃_{v_i}`: the core query that computes `q(v_i(D))` under naive
/// evaluation. `q` may contain sugar; it is desugared first.
pub fn compile_valuation(
    q: &Query,
    i: usize,
    rand: &Arc<Literal>,
    schema: &Schema,
    cap: usize,
) -> Result<Query, RewriteError> {
    let core = desugar(q, schema)?;
    core.replace_bases(&mut |name| {
        let m = *schema
            .get(name)
            .ok_or_else(|| TypeError::UnknownRelation(name.to_string()))?;
        relation_gadget(name, m, i, rand, cap)
    })
}

/// Unions in a balanced tree so depth grows logarithmically in `γ`.
fn balanced_union(mut parts: Vec<Query>) -> Query {
    assert!(!parts.is_empty(), "at least one sample");
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Query::union_all(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("non-empty")
}

/// Child-index paths of the leaves of [`balanced_union`], in input order.
fn balanced_paths(n: usize) -> Vec<Vec<usize>> {
    let mut paths: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut groups: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
    while groups.len() > 1 {
        let mut next = Vec::with_capacity(groups.len().div_ceil(2));
        let mut it = groups.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => {
                    for &k in &a {
                        paths[k].push(0);
                    }
                    for &k in &b {
                        paths[k].push(1);
                    }
                    next.push(a.into_iter().chain(b).collect());
                }
                None => next.push(a),
            }
        }
        groups = next;
    }
    for p in &mut paths {
        p.reverse();
    }
    paths
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RewriteKind {
    Apx,
    Compute,
}

/// A compiled run together with the data needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct RewrittenQuery {
    pub ast: Query,
    pub kind: RewriteKind,
    pub gamma: u64,
    pub seed: u64,
    pub epsilon: f64,
    /// Sample index (1-based) → child-index path from `ast` to the
    /// subquery embedding that sample.
    pub provenance: BTreeMap<u64, Vec<usize>>,
}

impl RewrittenQuery {
    /// The subquery embedding sample `j`.
    pub fn subquery(&self, j: u64) -> Option<&Query> {
        let mut q = &self.ast;
        for &k in self.provenance.get(&j)? {
            q = *q.children().get(k)?;
        }
        Some(q)
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            kind: self.kind,
            gamma: self.gamma,
            seed: self.seed,
            epsilon: self.epsilon,
            node_count: self.ast.node_count(),
            depth: self.ast.depth(),
            provenance: self
                .provenance
                .iter()
                .map(|(j, path)| (j.to_string(), path.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sidecar {
    pub kind: RewriteKind,
    pub gamma: u64,
    pub seed: u64,
    pub epsilon: f64,
    pub node_count: usize,
    pub depth: usize,
    pub provenance: BTreeMap<String, Vec<usize>>,
}

/// `q_v = COUNT[$1..$n](q̃_v)` in core form.
fn counted(q_tilde: Query, n: usize) -> Query {
    Query::project(
        range(1, n + 1),
        Query::sum_group(range(1, n), n + 1, Query::apply(RatExpr::Const(1.0), q_tilde)),
    )
}

fn grounded(spec: &IntervalSpec, lo: f64, hi: f64) -> IntervalSpec {
    let bound = |b: &Bound, x: f64| match b {
        Bound::Finite(_) => Bound::Finite(RatExpr::Const(x)),
        other => other.clone(),
    };
    IntervalSpec::new(
        bound(spec.lower(), lo),
        spec.lower_closed(),
        bound(spec.upper(), hi),
        spec.upper_closed(),
    )
}

fn comparator_op(cmp: Comparator) -> CmpOp {
    match cmp {
        Comparator::Lt => CmpOp::Lt,
        Comparator::Eq => CmpOp::Eq,
        Comparator::Gt => CmpOp::Gt,
    }
}

/// `q_{v_j, ā, ∘k}` as a unary 0/1 indicator: `(1)` when sample `j`
/// satisfies the comparison and `(0)` otherwise.
fn sample_indicator(
    l: &LikelihoodQuery,
    q_tilde: Query,
    n: usize,
    v: &Valuation,
    index: u64,
) -> Result<Query, RewriteError> {
    let ground = ground_intervals(&l.intervals, v).map_err(|source| RewriteError::Sample { index, source })?;
    let mut selected = counted(q_tilde, n);
    for (i, (spec, g)) in l.intervals.iter().zip(&ground).enumerate() {
        let spec = grounded(spec, g.lo(), g.hi());
        if spec.lower() != &Bound::NegInf || spec.upper() != &Bound::PosInf {
            selected = Query::select(Condition::In(i + 1, spec), selected);
        }
    }
    let q_va = Query::project(vec![n + 1], selected);
    let test = Condition::Cmp(
        RatExpr::Attr(1),
        comparator_op(l.cmp),
        RatExpr::Const(l.k as f64),
    );
    let boolean = Query::project(vec![], Query::select(test, Query::sum_group(vec![], 1, q_va)));
    let unit = Query::literal(Literal::unit());
    Ok(Query::union_all(
        Query::apply(RatExpr::Const(1.0), boolean.clone()),
        Query::apply(RatExpr::Const(0.0), Query::except_all(unit, boolean)),
    ))
}

fn checked_schema(db: &IncompleteDatabase, q: &Query) -> Result<(Schema, usize), RewriteError> {
    let schema = db.schema();
    let n = arity_of(q, &schema)?;
    for name in q.base_names() {
        if schema.get(name) == Some(&0) {
            return Err(RewriteError::NullaryRelation(name.to_string()));
        }
    }
    Ok((schema, n))
}

/// `apx_ε`: naive evaluation yields the single tuple `(count/γ)`, equal to
/// [`crate::approx::like_apx`] under the same seed and `γ`.
pub fn build_apx_query(
    l: &LikelihoodQuery,
    db: &IncompleteDatabase,
    cfg: &ApproxConfig,
    cap: usize,
) -> Result<RewrittenQuery, RewriteError> {
    let gamma = cfg.gamma()?;
    l.prepare(db)?;
    let (schema, n) = checked_schema(db, &l.query)?;
    let rand = Arc::new(build_rand(db, gamma, cfg.seed));
    let mut parts = Vec::with_capacity(gamma as usize);
    for j in 1..=gamma {
        let q_tilde = compile_valuation(&l.query, j as usize, &rand, &schema, cap)?;
        let v = val_sampler(db, cfg.seed, j - 1);
        let indicator = sample_indicator(l, q_tilde, n, &v, j - 1)?;
        parts.push(desugar(&indicator, &schema)?);
    }
    let paths = balanced_paths(parts.len());
    let union = balanced_union(parts);
    let avg = desugar(&Query::avg(vec![], 1, union), &schema)?;
    // project → apply → project → product → sum, whose input is the union
    let prefix = vec![0, 0, 0, 0, 0];
    Ok(RewrittenQuery {
        ast: avg,
        kind: RewriteKind::Apx,
        gamma,
        seed: cfg.seed,
        epsilon: cfg.epsilon,
        provenance: provenance(prefix, paths),
    })
}

fn provenance(prefix: Vec<usize>, paths: Vec<Vec<usize>>) -> BTreeMap<u64, Vec<usize>> {
    paths
        .into_iter()
        .enumerate()
        .map(|(k, p)| (k as u64 + 1, prefix.iter().copied().chain(p).collect()))
        .collect()
}

/// `compute_ε`: rows `(t̄, b, p)` where `p` is the fraction of samples in
/// which `t̄` occurs exactly `b` times.
pub fn build_compute_query(
    q: &Query,
    db: &IncompleteDatabase,
    cfg: &ApproxConfig,
    cap: usize,
) -> Result<RewrittenQuery, RewriteError> {
    let gamma = cfg.gamma()?;
    let (schema, n) = checked_schema(db, q)?;
    let rand = Arc::new(build_rand(db, gamma, cfg.seed));
    let mut parts = Vec::with_capacity(gamma as usize);
    for j in 1..=gamma {
        let q_tilde = compile_valuation(q, j as usize, &rand, &schema, cap)?;
        parts.push(counted(q_tilde, n));
    }
    let paths = balanced_paths(parts.len());
    let union = balanced_union(parts);
    // (t̄, k', k'') → (t̄, k', k''/γ)
    let tallied = counted(union, n + 1);
    let scaled = Query::apply(
        RatExpr::div(RatExpr::Attr(n + 2), RatExpr::Const(gamma as f64)),
        tallied,
    );
    let ast = Query::project(range(1, n + 1).into_iter().chain([n + 3]).collect(), scaled);
    // project → apply → project → sum → apply → union
    let prefix = vec![0, 0, 0, 0, 0];
    Ok(RewrittenQuery {
        ast,
        kind: RewriteKind::Compute,
        gamma,
        seed: cfg.seed,
        epsilon: cfg.epsilon,
        provenance: provenance(prefix, paths),
    })
}

/// The value of an evaluated `apx_ε`.
pub fn apx_value(answer: &crate::model::BagRelation) -> Option<f64> {
    let mut rows = answer.iter();
    let (row, m) = rows.next()?;
    if rows.next().is_some() || m != 1 || row.len() != 1 {
        return None;
    }
    row[0].as_real()
}
