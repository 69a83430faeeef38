//! Conditional worlds: finite sets of (arithmetic database, condition)
//! pairs whose conditions are almost surely exhaustive and pairwise
//! disjoint.
//!
//! Entries and condition members are canonical rational functions over
//! nulls; a condition set `{e₁, …, e_k}` holds under `v` when every
//! `v(eᵢ) < 0`. Lifting an order selection `σ[$i<$j]` splits every pair on
//! the distinct non-constant differences `tᵢ − tⱼ`; differences that do not
//! depend on the nulls are decided on the spot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::eval::{self, EvalError};
use crate::expr::{Arith, ExprError};
use crate::model::{apply_valuation, Bag, BagRelation, IncompleteDatabase, ModelError, NullId, Valuation, Value};
use crate::query::{desugar, Condition, Query, Schema, TypeError};
use crate::random::{dist_sample, Distribution, RandomStream};
use crate::ratfn::RatFn;

pub const DEFAULT_BLOWUP_CAP: usize = 4096;

/// Name of the answer relation in a lifted world.
pub const ANSWER: &str = "Q";

/// Values within this distance of zero are treated as boundary hits.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

const MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("split would produce {pairs} conditional databases, above the cap of {cap}")]
    BlowupLimit { pairs: u128, cap: usize },
    #[error("const($i) has no lifted semantics")]
    UnsupportedIsConst,
    #[error("no condition holds under the valuation")]
    NoBranch,
    #[error("conditions {0} and {1} hold together under the valuation")]
    MultiBranch(usize, usize),
    #[error("null {0} has no distribution")]
    MissingAnnotation(NullId),
}

/// A conjunction of strict inequalities `e < 0`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConditionSet(BTreeSet<RatFn>);

impl ConditionSet {
    pub fn new(members: impl IntoIterator<Item = RatFn>) -> Self {
        ConditionSet(members.into_iter().collect())
    }

    /// `{−1}`: always true.
    pub fn always() -> Self {
        ConditionSet::new([RatFn::constant(-1.0)])
    }

    pub fn members(&self) -> impl Iterator<Item = &RatFn> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self, other: &ConditionSet) -> ConditionSet {
        ConditionSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn nulls(&self) -> BTreeSet<NullId> {
        self.0.iter().flat_map(RatFn::nulls).collect()
    }

    /// Contains a nonnegative constant or a member together with its
    /// negation.
    pub fn is_contradictory(&self) -> bool {
        self.0.iter().any(|e| match e.as_constant() {
            Some(c) => c >= 0.0,
            None => self.0.contains(&e.clone().negate()),
        })
    }
}

impl fmt::Display for ConditionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// `v(c)`.
pub fn cond_holds(c: &ConditionSet, v: &Valuation) -> Result<bool, ExprError> {
    for e in c.members() {
        if e.eval(v)? >= 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

pub type ArithmeticDatabase = BTreeMap<String, Bag<RatFn>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDatabase {
    pub relations: ArithmeticDatabase,
    pub condition: ConditionSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalWorld {
    pub pairs: Vec<ConditionalDatabase>,
    pub annotations: BTreeMap<NullId, Distribution>,
}

impl ConditionalWorld {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `Null(C)`.
    pub fn nulls(&self) -> BTreeSet<NullId> {
        let mut out = BTreeSet::new();
        for pair in &self.pairs {
            out.extend(pair.condition.nulls());
            for rel in pair.relations.values() {
                for (row, _) in rel.iter() {
                    out.extend(row.iter().flat_map(RatFn::nulls));
                }
            }
        }
        out
    }

    fn schema(&self) -> Schema {
        self.pairs
            .first()
            .map(|p| p.relations.iter().map(|(n, r)| (n.clone(), r.arity())).collect())
            .unwrap_or_default()
    }
}

/// `{(D, {−1})}`.
pub fn world_of(db: &IncompleteDatabase) -> ConditionalWorld {
    let relations = db
        .relations()
        .iter()
        .map(|(name, rel)| {
            let lifted = rel
                .try_map::<_, ModelError, _>(|v| Ok(RatFn::from_value(v)))
                .expect("lifting preserves arity");
            (name.clone(), lifted)
        })
        .collect();
    ConditionalWorld {
        pairs: vec![ConditionalDatabase {
            relations,
            condition: ConditionSet::always(),
        }],
        annotations: db.annotations().clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftOptions {
    pub blowup_cap: usize,
    /// Drop contradictory pairs after every operator.
    pub prune_intermediate: bool,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions {
            blowup_cap: DEFAULT_BLOWUP_CAP,
            prune_intermediate: false,
        }
    }
}

type Branches = Vec<(Bag<RatFn>, ConditionSet)>;
type UnaryOp<'a> = &'a dyn Fn(&Bag<RatFn>) -> Result<Bag<RatFn>, EvalError>;
type BinaryOp<'a> = &'a dyn Fn(&Bag<RatFn>, &Bag<RatFn>) -> Result<Bag<RatFn>, EvalError>;

/// `q(C)`: the lifted answer of `q`, stored under [`ANSWER`] in every pair.
pub fn lift(q: &Query, world: &ConditionalWorld, opts: LiftOptions) -> Result<ConditionalWorld, WorldError> {
    let core = desugar(q, &world.schema())?;
    let branches = lift_node(&core, world, opts)?;
    Ok(ConditionalWorld {
        pairs: branches
            .into_iter()
            .map(|(bag, condition)| ConditionalDatabase {
                relations: [(ANSWER.to_string(), bag)].into(),
                condition,
            })
            .collect(),
        annotations: world.annotations.clone(),
    })
}

fn finish(branches: Branches, opts: LiftOptions) -> Result<Branches, WorldError> {
    let kept: Branches = if opts.prune_intermediate {
        branches.into_iter().filter(|(_, c)| !c.is_contradictory()).collect()
    } else {
        branches
    };
    if kept.len() > opts.blowup_cap {
        return Err(WorldError::BlowupLimit {
            pairs: kept.len() as u128,
            cap: opts.blowup_cap,
        });
    }
    Ok(kept)
}

fn lift_node(q: &Query, world: &ConditionalWorld, opts: LiftOptions) -> Result<Branches, WorldError> {
    let unary = |input: &Query, f: UnaryOp| {
        lift_node(input, world, opts)?
            .into_iter()
            .map(|(bag, c)| Ok((f(&bag)?, c)))
            .collect::<Result<Branches, WorldError>>()
    };
    let binary = |a: &Query, b: &Query, f: BinaryOp| {
        let left = lift_node(a, world, opts)?;
        let right = lift_node(b, world, opts)?;
        let pairs = left.len() as u128 * right.len() as u128;
        if !opts.prune_intermediate && pairs > opts.blowup_cap as u128 {
            return Err(WorldError::BlowupLimit {
                pairs,
                cap: opts.blowup_cap,
            });
        }
        let mut out = Vec::new();
        for (x, cx) in &left {
            for (y, cy) in &right {
                out.push((f(x, y)?, cx.union(cy)));
            }
        }
        finish(out, opts)
    };
    let branches = match q {
        Query::Base(name) => world
            .pairs
            .iter()
            .map(|p| {
                let rel = p
                    .relations
                    .get(name)
                    .ok_or_else(|| TypeError::UnknownRelation(name.clone()))?;
                Ok((rel.clone(), p.condition.clone()))
            })
            .collect::<Result<Branches, WorldError>>()?,
        Query::Literal(_) => {
            let bag = eval::eval_bags::<RatFn>(q, &BTreeMap::new())?;
            vec![(bag, ConditionSet::default())]
        }
        Query::Project(p, input) => unary(input, &|b| eval::project(b, p))?,
        Query::Select(Condition::Lt(i, j), input) => {
            let mut out = Vec::new();
            for (bag, c) in lift_node(input, world, opts)? {
                out.extend(split(&bag, *i, *j, &c, opts)?);
            }
            finish(out, opts)?
        }
        Query::Select(Condition::IsConst(_), _) => return Err(WorldError::UnsupportedIsConst),
        Query::Select(c, input) => unary(input, &|b| eval::select(b, c))?,
        Query::Apply(f, input) => unary(input, &|b| eval::apply(b, f))?,
        Query::SumGroup { group, sum, input } => unary(input, &|b| eval::sum_group(b, group, *sum))?,
        Query::Product(a, b) => binary(a, b, &|x, y| eval::product(x, y))?,
        Query::UnionAll(a, b) => binary(a, b, &|x, y| eval::union_all(x, y))?,
        Query::ExceptAll(a, b) => binary(a, b, &|x, y| Ok(eval::except_all(x, y)))?,
        Query::Count { .. } | Query::Avg { .. } | Query::Min { .. } | Query::Max { .. } | Query::Dedup(_) => {
            unreachable!("desugared before lifting")
        }
    };
    Ok(branches)
}

/// The distinct non-constant differences `tᵢ − tⱼ` of a bag.
pub fn split_members(bag: &Bag<RatFn>, i: usize, j: usize) -> BTreeSet<RatFn> {
    bag.iter()
        .map(|(row, _)| row[i - 1].clone().minus(&row[j - 1]))
        .filter(|d| !d.is_constant())
        .collect()
}

fn split(
    bag: &Bag<RatFn>,
    i: usize,
    j: usize,
    c: &ConditionSet,
    opts: LiftOptions,
) -> Result<Branches, WorldError> {
    let members: Vec<RatFn> = split_members(bag, i, j).into_iter().collect();
    let count = 1u128.checked_shl(members.len() as u32).unwrap_or(u128::MAX);
    if !opts.prune_intermediate && count > opts.blowup_cap as u128 {
        return Err(WorldError::BlowupLimit {
            pairs: count,
            cap: opts.blowup_cap,
        });
    }
    if members.len() > 20 {
        return Err(WorldError::BlowupLimit {
            pairs: count,
            cap: opts.blowup_cap,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for mask in 0u64..(1u64 << members.len()) {
        let chosen = |k: usize| mask & (1 << k) != 0;
        let condition = c.union(&ConditionSet::new(members.iter().enumerate().map(|(k, e)| {
            if chosen(k) {
                e.clone()
            } else {
                e.clone().negate()
            }
        })));
        if opts.prune_intermediate && condition.is_contradictory() {
            continue;
        }
        let mut kept = Bag::new(bag.arity());
        for (row, m) in bag.iter() {
            let d = row[i - 1].clone().minus(&row[j - 1]);
            let keep = match d.as_constant() {
                Some(x) => x < 0.0,
                None => chosen(members.binary_search(&d).expect("member of the split")),
            };
            if keep {
                kept.insert(row.clone(), m)?;
            }
        }
        out.push((kept, condition));
    }
    Ok(out)
}

/// Drops pairs whose condition is syntactically unsatisfiable.
pub fn prune(world: &ConditionalWorld) -> ConditionalWorld {
    ConditionalWorld {
        pairs: world
            .pairs
            .iter()
            .filter(|p| !p.condition.is_contradictory())
            .cloned()
            .collect(),
        annotations: world.annotations.clone(),
    }
}

/// Valuation of `nulls` for sample `sample`; redraws while `reject` holds.
/// Returns the valuation and the number of redraws.
fn draw_valuation(
    annotations: &BTreeMap<NullId, Distribution>,
    nulls: &BTreeSet<NullId>,
    seed: u64,
    sample: u64,
    reject: impl Fn(&Valuation) -> bool,
) -> Result<(Valuation, u64), WorldError> {
    let mut attempt = 0;
    loop {
        let mut v = Valuation::new();
        for id in nulls {
            let dist = annotations.get(id).ok_or(WorldError::MissingAnnotation(*id))?;
            let mut stream = RandomStream::for_attempt(seed, sample, *id, attempt);
            v.insert(*id, dist_sample(dist, &mut stream));
        }
        if attempt + 1 >= MAX_ATTEMPTS || !reject(&v) {
            return Ok((v, attempt));
        }
        attempt += 1;
    }
}

fn near_boundary(world: &ConditionalWorld, v: &Valuation) -> bool {
    world.pairs.iter().any(|p| {
        p.condition.members().any(|e| match e.eval(v) {
            Ok(x) => x.abs() <= BOUNDARY_TOLERANCE,
            Err(_) => true,
        })
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct ValidationReport {
    pub samples: u64,
    pub coverage_hits: u64,
    pub coverage_misses: u64,
    pub disjointness_violations: u64,
    pub boundary_resamples: u64,
}

impl ValidationReport {
    /// Samples under which zero or several conditions hold.
    pub fn violations(&self) -> u64 {
        self.coverage_misses + self.disjointness_violations
    }
}

/// Checks coverage and disjointness on `n_samples` sampled valuations.
pub fn validate_world(world: &ConditionalWorld, n_samples: u64, seed: u64) -> Result<ValidationReport, WorldError> {
    let nulls = world.nulls();
    let mut report = ValidationReport {
        samples: n_samples,
        ..ValidationReport::default()
    };
    for j in 0..n_samples {
        let (v, redraws) = draw_valuation(&world.annotations, &nulls, seed, j, |v| near_boundary(world, v))?;
        report.boundary_resamples += redraws;
        let mut holding = 0;
        for p in &world.pairs {
            if cond_holds(&p.condition, &v)? {
                holding += 1;
            }
        }
        match holding {
            0 => report.coverage_misses += 1,
            1 => report.coverage_hits += 1,
            _ => report.disjointness_violations += 1,
        }
    }
    Ok(report)
}

/// `χ(v)`: the one pair whose condition holds, evaluated under `v`.
pub fn instantiate(world: &ConditionalWorld, v: &Valuation) -> Result<BTreeMap<String, BagRelation>, WorldError> {
    let mut chosen = None;
    for (k, p) in world.pairs.iter().enumerate() {
        if cond_holds(&p.condition, v)? {
            if let Some(first) = chosen {
                return Err(WorldError::MultiBranch(first, k));
            }
            chosen = Some(k);
        }
    }
    let pair = &world.pairs[chosen.ok_or(WorldError::NoBranch)?];
    pair.relations
        .iter()
        .map(|(name, rel)| {
            let bag = rel.try_map::<_, WorldError, _>(|e| Ok(Value::real(e.eval(v)?)?))?;
            Ok((name.clone(), bag))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ExtensionReport {
    pub samples: u64,
    pub mismatches: u64,
    pub skipped: u64,
    pub boundary_resamples: u64,
    pub pairs: usize,
    pub pruned: usize,
    pub first_mismatch: Option<String>,
}

/// Compares `q(v(D))` with `χ(v)` of the lifted world on sampled
/// valuations. Samples whose direct evaluation fails (e.g. division by
/// zero) are skipped and counted.
pub fn check_trivial_extension(
    q: &Query,
    db: &IncompleteDatabase,
    n_samples: u64,
    seed: u64,
    opts: LiftOptions,
) -> Result<ExtensionReport, WorldError> {
    let lifted = lift(q, &world_of(db), opts)?;
    let pruned = prune(&lifted);
    let mut report = ExtensionReport {
        samples: n_samples,
        pairs: lifted.len(),
        pruned: lifted.len() - pruned.len(),
        ..ExtensionReport::default()
    };
    let nulls: BTreeSet<NullId> = db.nulls().into_iter().chain(pruned.nulls()).collect();
    for j in 0..n_samples {
        let (v, redraws) = draw_valuation(db.annotations(), &nulls, seed, j, |v| {
            near_boundary(&pruned, v) || answers_near_boundary(&pruned, v)
        })?;
        report.boundary_resamples += redraws;
        let direct = match apply_valuation(&v, db)
            .map_err(EvalError::from)
            .and_then(|d| eval::eval(q, &d, eval::Mode::Complete))
        {
            Ok(bag) => bag,
            Err(_) => {
                report.skipped += 1;
                continue;
            }
        };
        let symbolic = instantiate(&pruned, &v).map(|mut rels| rels.remove(ANSWER).expect("answer relation"));
        let same = match &symbolic {
            Ok(bag) => bags_close(&direct, bag, 1e-9),
            Err(_) => false,
        };
        if !same {
            report.mismatches += 1;
            if report.first_mismatch.is_none() {
                report.first_mismatch = Some(format!(
                    "sample {j}: direct {:?} vs lifted {:?}",
                    direct.iter().collect::<Vec<_>>(),
                    symbolic.map(|b| b.iter().map(|(r, m)| (r.clone(), m)).collect::<Vec<_>>())
                ));
            }
        }
    }
    Ok(report)
}

/// Whether some answer entry is singular under `v`.
fn answers_near_boundary(world: &ConditionalWorld, v: &Valuation) -> bool {
    world.pairs.iter().any(|p| {
        p.relations
            .values()
            .any(|rel| rel.iter().any(|(row, _)| row.iter().any(|e| e.eval(v).is_err())))
    })
}

fn expanded(bag: &BagRelation) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = bag
        .iter()
        .flat_map(|(row, m)| {
            let reals: Vec<f64> = row.iter().map(|x| x.as_real().unwrap_or(f64::NAN)).collect();
            std::iter::repeat_n(reals, m as usize)
        })
        .collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

/// Equality of bags as sorted multisets of rows, entries compared with
/// relative tolerance `tol`.
pub fn bags_close(a: &BagRelation, b: &BagRelation, tol: f64) -> bool {
    if a.arity() != b.arity() || a.total() != b.total() {
        return false;
    }
    let (ra, rb) = (expanded(a), expanded(b));
    ra.iter().zip(&rb).all(|(x, y)| {
        x.iter()
            .zip(y)
            .all(|(p, q)| (p - q).abs() <= tol * p.abs().max(q.abs()).max(1.0))
    })
}

/// Symbolic evaluation of `q` on a single arithmetic database, deciding
/// order comparisons only when they do not depend on the nulls.
pub fn eval_symbolic(q: &Query, db: &ArithmeticDatabase) -> Result<Bag<RatFn>, EvalError> {
    eval::eval_bags::<RatFn>(q, db)
}
