//! Acceptance driver: runs every criterion and prints one PASS/FAIL line
//! each. Exits non-zero when any criterion fails.

mod common;

use std::sync::Arc;
use std::time::Instant;

use ipdb::approx::{like_apx, val_sampler, ApproxConfig, Comparator, LikelihoodQuery};
use ipdb::condworld::{
    check_trivial_extension, lift, prune, validate_world, ConditionSet, ConditionalDatabase,
    ConditionalWorld, LiftOptions,
};
use ipdb::model::{apply_valuation, Bag, IncompleteDatabase, NullId, Value};
use ipdb::oracle::{exact_likelihood_cells, grid_likelihood, DEFAULT_CELL_LIMIT};
use ipdb::query::{parse, IntervalSpec};
use ipdb::random::dist_cdf;
use ipdb::ratfn::RatFn;
use ipdb::rewrite::{apx_value, build_apx_query, build_rand, compile_valuation, DEFAULT_ARITY_CAP};
use ipdb::{eval, Distribution, Mode, RatExpr};

const SEEDS: u64 = 500;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn single_null(dist: Distribution) -> IncompleteDatabase {
    let mut r = Bag::new(1);
    r.insert(vec![Value::Null(NullId(1))], 1).unwrap();
    IncompleteDatabase::new([("R".to_string(), r)].into(), [(NullId(1), dist)].into()).unwrap()
}

fn below_one() -> LikelihoodQuery {
    LikelihoodQuery::new(parse("project[](select($1 < 1, R))").unwrap(), Comparator::Eq, 1, vec![])
}

fn exponential() -> IncompleteDatabase {
    single_null(Distribution::Exponential { lambda: 1.0 })
}

fn uniform() -> IncompleteDatabase {
    single_null(Distribution::Uniform { lo: 0.0, hi: 2.0 })
}

fn two_uniform() -> (LikelihoodQuery, IncompleteDatabase) {
    let mut r = Bag::new(2);
    r.insert(vec![Value::Null(NullId(1)), Value::Null(NullId(2))], 1).unwrap();
    let u = Distribution::Uniform { lo: 0.0, hi: 1.0 };
    let db = IncompleteDatabase::new([("R".to_string(), r)].into(), [(NullId(1), u), (NullId(2), u)].into()).unwrap();
    let q = parse("project[](select($1 < 0.5 and $2 < 0.5, R))").unwrap();
    (LikelihoodQuery::new(q, Comparator::Eq, 1, vec![]), db)
}

fn intro() -> (LikelihoodQuery, IncompleteDatabase) {
    let mut r = Bag::new(2);
    r.insert(vec![Value::Real(1.0), Value::Real(1.0)], 1).unwrap();
    r.insert(vec![Value::Real(1.0), Value::Null(NullId(1))], 1).unwrap();
    let db = IncompleteDatabase::new(
        [("R".to_string(), r)].into(),
        [(NullId(1), Distribution::Normal { mu: 2.0, sigma: 0.5 })].into(),
    )
    .unwrap();
    let q = parse("sum[$1; $2](select($2 >= 2, R))").unwrap();
    let a = vec![IntervalSpec::everything(), IntervalSpec::closed(RatExpr::Const(2.5), RatExpr::Const(3.5))];
    (LikelihoodQuery::new(q, Comparator::Eq, 1, a), db)
}

/// Fraction of seeds whose estimate lies within `eps` of `target`.
fn coverage(l: &LikelihoodQuery, db: &IncompleteDatabase, eps: f64, target: f64) -> f64 {
    let hits = (0..SEEDS)
        .filter(|&seed| {
            let est = like_apx(l, db, &ApproxConfig::new(eps, seed)).unwrap();
            (est.value - target).abs() <= eps
        })
        .count();
    hits as f64 / SEEDS as f64
}

fn exponential_fixture() -> Outcome {
    let target = 1.0 - (-1.0f64).exp();
    let start = Instant::now();
    let cov = coverage(&below_one(), &exponential(), 0.05, target);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        cov >= 0.70 && secs <= 60.0,
        format!("coverage {cov:.3} (need 0.70) around {target:.7}, {secs:.1} s (limit 60 s)"),
    )
}

fn uniform_fixture() -> Outcome {
    let exact = exact_likelihood_cells(&below_one(), &uniform(), DEFAULT_CELL_LIMIT).unwrap().value;
    let cov = coverage(&below_one(), &uniform(), 0.05, exact);
    outcome(
        exact == 0.5 && cov >= 0.70,
        format!("exact target {exact}, coverage {cov:.3} (need 0.70)"),
    )
}

fn coverage_law() -> Outcome {
    let epsilons = [0.2, 0.1, 0.05];
    let covs: Vec<f64> = epsilons.iter().map(|&e| coverage(&below_one(), &uniform(), e, 0.5)).collect();
    let each = covs.iter().all(|&c| c >= 0.70);
    // larger ε must not lose coverage beyond the slack
    let monotone = covs.windows(2).all(|w| w[0] + 0.05 >= w[1]);
    outcome(
        each && monotone,
        format!("coverage at ε = 0.2, 0.1, 0.05: {covs:.3?}; monotone within 0.05: {monotone}"),
    )
}

fn rewrite_bit_equality() -> Outcome {
    let mut r = common::rng(4);
    let (mut cases, mut mismatches, mut errors) = (0, 0, 0);
    while cases < 50 {
        let (l, db) = common::random_case(&mut r, true);
        cases += 1;
        for seed in 0..3 {
            let cfg = ApproxConfig::new(0.2, seed);
            let direct = like_apx(&l, &db, &cfg);
            let compiled = build_apx_query(&l, &db, &cfg, DEFAULT_ARITY_CAP)
                .map_err(|e| e.to_string())
                .and_then(|rq| eval(&rq.ast, &db, Mode::Naive).map_err(|e| e.to_string()));
            match (direct, compiled) {
                (Ok(est), Ok(answer)) => {
                    if apx_value(&answer).map(f64::to_bits) != Some(est.value.to_bits()) {
                        mismatches += 1;
                    }
                }
                (Err(_), Err(_)) => errors += 1,
                _ => mismatches += 1,
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{cases} cases x 3 seeds, {mismatches} mismatches, {errors} failing on both sides"),
    )
}

fn compilation_soundness() -> Outcome {
    let mut r = common::rng(5);
    let gamma = 25;
    let (mut checks, mut mismatches) = (0, 0);
    for case in 0..50u64 {
        let db = common::random_db(&mut r, 3, 5);
        let (q, _) = common::random_query(&mut r, 4, true);
        let rand = Arc::new(build_rand(&db, gamma, case));
        for i in 1..=gamma {
            let v = val_sampler(&db, case, i - 1);
            let direct = eval(&q, &apply_valuation(&v, &db).unwrap(), Mode::Complete);
            let compiled = compile_valuation(&q, i as usize, &rand, &db.schema(), DEFAULT_ARITY_CAP)
                .unwrap();
            let naive = eval(&compiled, &db, Mode::Naive);
            checks += 1;
            match (direct, naive) {
                (Ok(a), Ok(b)) if a == b => {}
                (Err(_), Err(_)) => {}
                _ => mismatches += 1,
            }
        }
    }
    outcome(mismatches == 0, format!("{checks} (case, sample) checks, {mismatches} mismatches"))
}

fn example_world() -> ConditionalWorld {
    let f = |t: &str| RatFn::from_expr(&ipdb::query::parser::parse_expr(t).unwrap()).unwrap();
    let mut r = Bag::new(2);
    for row in [["n1", "0"], ["n1", "n1"], ["n3", "n1 + n3"]] {
        r.insert(row.iter().map(|e| f(e)).collect(), 1).unwrap();
    }
    let normal = Distribution::Normal { mu: 0.0, sigma: 1.0 };
    ConditionalWorld {
        pairs: vec![ConditionalDatabase {
            relations: [("R".to_string(), r)].into(),
            condition: ConditionSet::always(),
        }],
        annotations: [(NullId(1), normal), (NullId(3), normal)].into(),
    }
}

fn split_count() -> Outcome {
    let lifted = lift(&parse("select($1 < $2, R)").unwrap(), &example_world(), LiftOptions::default()).unwrap();
    let n1 = RatFn::var(NullId(1));
    let minus_n1 = RatFn::constant(0.0);
    let minus_n1 = ipdb::expr::Arith::minus(minus_n1, &n1);
    let with_both = |c: &ConditionSet| {
        let members: Vec<&RatFn> = c.members().collect();
        members.contains(&&n1) && members.contains(&&minus_n1)
    };
    let flagged = lifted.pairs.iter().filter(|p| with_both(&p.condition)).count();
    let pruned = prune(&lifted);
    let survivors_clean = pruned.pairs.iter().all(|p| !with_both(&p.condition));
    let report = validate_world(&pruned, 10_000, 6).unwrap();
    outcome(
        lifted.len() == 4 && flagged > 0 && survivors_clean && report.violations() == 0,
        format!(
            "{} pairs before pruning, {} pruned (all containing n1 and -n1: {}), {} violations over 10^4 samples",
            lifted.len(),
            lifted.len() - pruned.len(),
            flagged == lifted.len() - pruned.len(),
            report.violations()
        ),
    )
}

fn trivial_extension() -> Outcome {
    let mut r = common::rng(7);
    let (mut cases, mut mismatches, mut skipped, mut blowups, mut split) = (0, 0, 0, 0, 0);
    while cases < 20 {
        let db = common::random_db(&mut r, 3, 5);
        let (q, _) = common::query_with_order(&mut r, 4, true);
        match check_trivial_extension(&q, &db, 100, cases, LiftOptions::default()) {
            Ok(report) => {
                cases += 1;
                mismatches += report.mismatches;
                split += usize::from(report.pairs - report.pruned > 1);
                skipped += report.skipped;
            }
            Err(ipdb::condworld::WorldError::BlowupLimit { .. }) => blowups += 1,
            Err(e) => panic!("{q}: {e}"),
        }
    }
    outcome(
        mismatches == 0,
        format!(
            "{cases} cases x 100 valuations ({split} with several feasible pairs), {mismatches} mismatches, \
             {skipped} skipped, {blowups} over the blowup cap redrawn"
        ),
    )
}

fn oracle_agreement() -> Outcome {
    let (two_l, two_db) = two_uniform();
    let (intro_l, intro_db) = intro();
    let fixtures = [
        ("exponential", below_one(), exponential()),
        ("uniform", below_one(), uniform()),
        ("two uniform", two_l, two_db),
        ("intro", intro_l, intro_db),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, l, db) in &fixtures {
        let exact = exact_likelihood_cells(l, db, DEFAULT_CELL_LIMIT).unwrap();
        let grid = grid_likelihood(l, db, 10_000).unwrap();
        let ok = (grid.value - exact.value).abs() <= grid.uncertainty && grid.uncertainty <= 5e-4;
        pass &= ok;
        parts.push(format!(
            "{name}: exact {:.6}, grid {:.6} ± {:.1e}",
            exact.value, grid.value, grid.uncertainty
        ));
    }
    outcome(pass, parts.join("; "))
}

fn partition_law() -> Outcome {
    let mut r = common::rng(9);
    let (mut cases, mut bad) = (0, 0);
    while cases < 50 {
        let (l, db) = common::random_case(&mut r, true);
        let cfg = ApproxConfig::new(0.1, cases);
        let with = |cmp| LikelihoodQuery { cmp, ..l.clone() };
        let values: Result<Vec<f64>, _> = [Comparator::Lt, Comparator::Eq, Comparator::Gt]
            .into_iter()
            .map(|c| like_apx(&with(c), &db, &cfg).map(|e| e.value))
            .collect();
        let Ok(values) = values else { continue };
        cases += 1;
        if values.iter().sum::<f64>() != 1.0 {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{cases} cases, {bad} whose three estimates do not sum to exactly 1"))
}

fn intro_example() -> Outcome {
    let (l, db) = intro();
    let normal = Distribution::Normal { mu: 2.0, sigma: 0.5 };
    // SUM ∈ [2.5, 3.5] only when the null survives the filter and lands there
    let target = dist_cdf(&normal, 3.5) - dist_cdf(&normal, 2.5);
    let exact = exact_likelihood_cells(&l, &db, DEFAULT_CELL_LIMIT).unwrap().value;
    let cov = coverage(&l, &db, 0.05, target);
    outcome(
        (exact - target).abs() < 1e-12 && cov >= 0.70,
        format!("target {target:.4}, cell oracle {exact:.4}, coverage {cov:.3} (need 0.70)"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exponential fixture", exponential_fixture),
        ("uniform fixture", uniform_fixture),
        ("coverage law", coverage_law),
        ("rewrite bit-equality", rewrite_bit_equality),
        ("compilation soundness", compilation_soundness),
        ("conditional-world split", split_count),
        ("trivial extension", trivial_extension),
        ("oracle agreement", oracle_agreement),
        ("partition law", partition_law),
        ("intro example", intro_example),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {name}: {} ({:.1} s)", k + 1, o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
