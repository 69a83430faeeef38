mod common;

use std::collections::BTreeMap;

use ipdb::approx::{like_apx, sample_count, val_sampler, ApproxConfig, Comparator, LikelihoodQuery};
use ipdb::condworld::bags_close;
use ipdb::eval::{product, union_all};
use ipdb::expr::{eval_expr, substitute_nulls, Assignment};
use ipdb::model::{apply_valuation, Bag, BagRelation, NullId, Valuation, Value};
use ipdb::query::{desugar, parse};
use ipdb::{eval, Mode, RatExpr};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>()) {
        let (q, _) = common::random_query(&mut common::rng(seed), 5, true);
        let text = q.to_string();
        prop_assert_eq!(parse(&text).unwrap(), q, "{}", text);
    }

    #[test]
    fn desugaring_preserves_answers(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let db = common::random_complete_db(&mut r);
        let (q, _) = common::random_query(&mut r, 4, true);
        let core = desugar(&q, &db.schema()).unwrap();
        prop_assert!(core.is_core());
        match (eval(&q, &db, Mode::Complete), eval(&core, &db, Mode::Complete)) {
            (Ok(a), Ok(b)) => prop_assert!(bags_close(&a, &b, 1e-9), "{}: {:?} vs {:?}", q, a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.is_div_by_zero(), b.is_div_by_zero()),
            (a, b) => prop_assert!(false, "{}: {:?} vs {:?}", q, a, b),
        }
    }

    #[test]
    fn substitution_then_evaluation_is_evaluation(seed in any::<u64>(), xs in prop::array::uniform3(-5.0f64..5.0)) {
        let e = random_expr(&mut common::rng(seed), 4);
        let v: Valuation = xs.iter().enumerate().map(|(k, &x)| (NullId(k as u64 + 1), x)).collect();
        let direct = eval_expr(&e, &Assignment::nulls(v.clone()));
        let substituted = substitute_nulls(&e, &v).unwrap();
        prop_assert!(substituted.nulls().is_empty());
        let composed = eval_expr(&substituted, &Assignment::nulls(Valuation::new()));
        match (direct, composed) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{}: {:?} vs {:?}", e, a, b),
        }
    }

    #[test]
    fn instantiating_then_evaluating_commutes_with_naive_on_complete_data(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let db = common::random_complete_db(&mut r);
        let (q, _) = common::random_query(&mut r, 4, false);
        let v = Valuation::new();
        let world = apply_valuation(&v, &db).unwrap();
        prop_assert_eq!(eval(&q, &world, Mode::Complete).ok(), eval(&q, &db, Mode::Naive).ok());
    }

    #[test]
    fn multiplicities_follow_the_expansion_oracle(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let a = random_bag(&mut r);
        let b = random_bag(&mut r);
        let expected_product = counts(expand(&a).iter().flat_map(|x| {
            expand(&b).into_iter().map(move |y| x.iter().chain(&y).copied().collect())
        }));
        prop_assert_eq!(as_counts(&product(&a, &b).unwrap()), expected_product);
        let expected_union = counts(expand(&a).into_iter().chain(expand(&b)));
        prop_assert_eq!(as_counts(&union_all(&a, &b).unwrap()), expected_union);
        prop_assert_eq!(union_all(&a, &b).unwrap(), union_all(&b, &a).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exactly_one_comparator_holds_per_sample(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (l, db) = common::random_case(&mut r, true);
        let core = l.prepare(&db).unwrap();
        for j in 0..20 {
            let v = val_sampler(&db, seed, j);
            if let Ok(c) = sample_count(&l, &core, &db, &v) {
                let held = [Comparator::Lt, Comparator::Eq, Comparator::Gt]
                    .iter()
                    .filter(|cmp| cmp.holds(c, l.k))
                    .count();
                prop_assert_eq!(held, 1);
            }
        }
    }

    #[test]
    fn estimates_are_monotone_in_k(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (l, db) = common::random_case(&mut r, true);
        let cfg = ApproxConfig::new(0.2, seed);
        let at = |cmp, k| like_apx(&LikelihoodQuery { cmp, k, ..l.clone() }, &db, &cfg).map(|e| e.value);
        let mut prev = (0.0, 1.0);
        for k in 0..4 {
            let (Ok(lt), Ok(gt)) = (at(Comparator::Lt, k), at(Comparator::Gt, k)) else { return Ok(()) };
            prop_assert!(lt >= prev.0 && gt <= prev.1);
            prev = (lt, gt);
        }
    }
}

fn random_expr(r: &mut rand_chacha::ChaCha8Rng, depth: usize) -> RatExpr {
    if depth == 0 || r.random_bool(0.3) {
        return match r.random_range(0..2) {
            0 => RatExpr::Null(NullId(r.random_range(1..=3))),
            _ => RatExpr::Const(r.random_range(-3..=3) as f64),
        };
    }
    let a = random_expr(r, depth - 1);
    let b = random_expr(r, depth - 1);
    match r.random_range(0..5) {
        0 => RatExpr::add(a, b),
        1 => RatExpr::sub(a, b),
        2 => RatExpr::mul(a, b),
        3 => RatExpr::div(a, b),
        _ => RatExpr::neg(a),
    }
}

fn random_bag(r: &mut rand_chacha::ChaCha8Rng) -> BagRelation {
    let mut bag = Bag::new(1);
    for _ in 0..r.random_range(0..4) {
        bag.insert(vec![Value::Real(r.random_range(0..3) as f64)], r.random_range(1..=3)).unwrap();
    }
    bag
}

/// The bag as a list with one entry per occurrence.
fn expand(bag: &BagRelation) -> Vec<Vec<f64>> {
    bag.iter()
        .flat_map(|(row, m)| {
            let row: Vec<f64> = row.iter().map(|v| v.as_real().unwrap()).collect();
            std::iter::repeat_n(row, m as usize)
        })
        .collect()
}

fn counts(rows: impl IntoIterator<Item = Vec<f64>>) -> BTreeMap<Vec<u64>, u64> {
    let mut out = BTreeMap::new();
    for row in rows {
        *out.entry(row.iter().map(|x| x.to_bits()).collect()).or_insert(0) += 1;
    }
    out
}

fn as_counts(bag: &BagRelation) -> BTreeMap<Vec<u64>, u64> {
    bag.iter()
        .map(|(row, m)| (row.iter().map(|v| v.as_real().unwrap().to_bits()).collect(), m))
        .collect()
}
