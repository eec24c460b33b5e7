mod common;

use std::collections::BTreeMap;

use common::Fixture;
use proptest::prelude::*;
use sfcm_core::agents::run;
use sfcm_core::config::ScenarioConfig;
use sfcm_core::fraud::{
    detect_fast_claims, is_fast_claim, plan_incentives, score_supplier, score_terms, supplier_stats, Classification,
    FraudParams, ScoreTerms,
};
use sfcm_core::{AccountId, DaoId, Error, Rate};

fn terms() -> impl Strategy<Value = ScoreTerms> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(t, d, p)| ScoreTerms { t, d, p })
}

fn classes() -> impl Strategy<Value = (BTreeMap<AccountId, Classification>, BTreeMap<AccountId, u64>)> {
    prop::collection::vec((any::<bool>(), 0..5_000u64), 1..8).prop_map(|rows| {
        let mut classes = BTreeMap::new();
        let mut balances = BTreeMap::new();
        for (i, (bad, balance)) in rows.into_iter().enumerate() {
            let id = AccountId::from(format!("gc-{i}"));
            let class = if bad { Classification::Bad } else { Classification::Good };
            classes.insert(id.clone(), class);
            balances.insert(id, balance);
        }
        (classes, balances)
    })
}

proptest! {
    #[test]
    fn worse_terms_never_improve_a_class(
        base in terms(),
        bump in 0.0..1.0f64,
        which in 0..3usize,
        weights in prop::array::uniform3(0.0..3.0f64),
        limit in 0.0..3.0f64,
    ) {
        let (score, class) = score_terms(base, weights, limit);
        let mut worse = base;
        match which {
            0 => worse.t += bump,
            1 => worse.d += bump,
            _ => worse.p += bump,
        }
        let (worse_score, worse_class) = score_terms(worse, weights, limit);
        prop_assert!(worse_score >= score);
        prop_assert!(worse_class >= class);

        let (_, relaxed) = score_terms(base, weights, limit + bump);
        prop_assert!(relaxed <= class);
    }

    #[test]
    fn fast_claim_flag_is_monotone(
        t in 0..500u64,
        num in 1..1_000_000u128,
        den in 1..1_000u128,
        s1 in 0..2_000_000u64,
        s2 in 0..2_000_000u64,
    ) {
        let (lo, hi) = (s1.min(s2), s1.max(s2));
        if is_fast_claim(t, num, den, Rate::from_ppm(lo)) {
            prop_assert!(is_fast_claim(t, num, den, Rate::from_ppm(hi)));
        }
        if is_fast_claim(t + 1, num, den, Rate::from_ppm(lo)) {
            prop_assert!(is_fast_claim(t, num, den, Rate::from_ppm(lo)));
        }
        // Exact oracle: t ≤ (s / 10^6)·(num / den) over the rationals.
        let lhs = u128::from(t) * den * 1_000_000;
        let rhs = u128::from(lo) * num;
        prop_assert_eq!(is_fast_claim(t, num, den, Rate::from_ppm(lo)), lhs <= rhs);
    }

    #[test]
    fn incentives_conserve_tokens((classes, balances) in classes(), penalty in 0..3_000u64) {
        let fallback = AccountId::from("fi");
        let plan = plan_incentives(&classes, &balances, penalty, &fallback);
        let debited: u64 = plan.debits.values().sum();
        let credited: u64 = plan.credits.values().sum();
        prop_assert_eq!(debited, credited);
        prop_assert_eq!(plan.deltas().values().sum::<i128>(), 0);
        let moved: u64 = plan.transfers.iter().map(|t| t.2).sum();
        prop_assert_eq!(moved, debited);

        for (id, amount) in &plan.debits {
            prop_assert_eq!(classes[id], Classification::Bad);
            prop_assert_eq!(*amount, penalty.min(balances[id]));
        }
        let goods: Vec<_> = classes.iter().filter(|(_, c)| **c == Classification::Good).map(|(id, _)| id).collect();
        if goods.is_empty() {
            prop_assert_eq!(plan.escrowed, debited);
        } else {
            prop_assert_eq!(plan.escrowed, 0);
            let shares: Vec<u64> = goods.iter().map(|id| plan.credits.get(*id).copied().unwrap_or(0)).collect();
            let (min, max) = (shares.iter().min().unwrap(), shares.iter().max().unwrap());
            prop_assert!(max - min <= 1);
        }
    }
}

#[test]
fn incentive_round_keeps_operator_supply() {
    let mut f = Fixture::new(1_000_000, 10_000_000);
    let (fi, gc) = (f.fi.clone(), f.gc.clone());
    let honest = f.engine.open_general_contractor("gc-honest", 10_000_000).unwrap();
    f.engine.freeze_and_mint(&fi, &gc, 5_000, Rate::ONE, None).unwrap();
    let supply = f.engine.state().ledger.operators.supply();
    let classes = BTreeMap::from([(gc.clone(), Classification::Bad), (honest.clone(), Classification::Good)]);
    let plan = f.engine.apply_incentives(&classes, 1_000).unwrap();
    assert_eq!(plan.debits[&gc], 1_000);
    let ledger = &f.engine.state().ledger;
    assert_eq!(ledger.operators.supply(), supply);
    assert_eq!(ledger.balance(&gc, DaoId::Operators), 4_000);
    assert_eq!(ledger.balance(&honest, DaoId::Operators), 1_000);
    assert_eq!(ledger.check_invariants(), Ok(()));
}

#[test]
fn contractor_without_history_is_not_scored() {
    let mut f = Fixture::new(0, 10_000_000);
    f.open(0, 1_000);
    let stats = supplier_stats(f.engine.state());
    assert_eq!(stats.len(), 1);
    assert!(matches!(
        score_supplier(&stats[0], 0.0, &FraudParams::default()),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn flags_grow_with_the_suspicion_rate_on_simulated_runs() {
    for seed in [3, 11, 42] {
        let outcome = run(&ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let flagged = |ppm: u64| -> Vec<_> {
            detect_fast_claims(&outcome.state, Rate::from_ppm(ppm))
                .into_iter()
                .map(|r| (r.workflow.clone(), r.states, r.flagged))
                .collect()
        };
        let none = flagged(0);
        assert!(none.iter().all(|r| !r.2), "seed {seed}: flags at s = 0");
        let mut previous = none;
        for ppm in [250_000, 500_000, 1_000_000, 2_000_000, 10_000_000] {
            let now = flagged(ppm);
            assert_eq!(now.len(), previous.len());
            for (a, b) in previous.iter().zip(&now) {
                assert_eq!((&a.0, a.1), (&b.0, b.1));
                assert!(!a.2 || b.2, "seed {seed}: flag lost when s rose to {ppm}");
            }
            previous = now;
        }
    }
}
