use std::collections::BTreeMap;

use proptest::prelude::*;
use sfcm_core::ledger::{payout_table, CreditState, LinkStatus};
use sfcm_core::{AccountId, CreditCode, DaoId, Engine, Params, Rate, Role};

#[derive(Debug, Clone)]
enum Op {
    Freeze { gc: usize, value: u64, rate_ppm: u64 },
    Transfer { from: usize, to: usize, amount: u64 },
    Redeem { holder: usize },
    Mature { credit: usize },
    Sell { credit: usize, price_pct: u64 },
    WriteOff { credit: usize },
    Tick,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..2usize, 1..5_000u64, 500_000..=1_000_000u64)
            .prop_map(|(gc, value, rate_ppm)| Op::Freeze { gc, value, rate_ppm }),
        3 => (0..4usize, 0..4usize, 0..3_000u64).prop_map(|(from, to, amount)| Op::Transfer { from, to, amount }),
        2 => (0..4usize).prop_map(|holder| Op::Redeem { holder }),
        1 => (0..8usize).prop_map(|credit| Op::Mature { credit }),
        2 => (0..8usize, 50..200u64).prop_map(|(credit, price_pct)| Op::Sell { credit, price_pct }),
        1 => (0..8usize).prop_map(|credit| Op::WriteOff { credit }),
        1 => Just(Op::Tick),
    ]
}

struct Market {
    engine: Engine,
    fi: AccountId,
    operators: Vec<AccountId>,
}

fn market(deposits: &[u64]) -> Market {
    let mut engine = Engine::new(Params::default()).unwrap();
    let fi = engine.open_account("fi", Role::FinancialInstitution).unwrap();
    for (i, &d) in deposits.iter().enumerate() {
        let inv = engine.open_account(format!("inv-{i}"), Role::Investor).unwrap();
        engine.mint_investor(&fi, &inv, d).unwrap();
    }
    let operators = vec![
        engine.open_general_contractor("gc-a", u64::MAX).unwrap(),
        engine.open_general_contractor("gc-b", u64::MAX).unwrap(),
        engine.open_account("sub", Role::SubContractor).unwrap(),
        engine.open_account("supplier", Role::Supplier).unwrap(),
    ];
    Market { engine, fi, operators }
}

fn credit(engine: &Engine, index: usize) -> CreditCode {
    let codes: Vec<_> = engine.state().ledger.credits.keys().cloned().collect();
    codes
        .get(index % codes.len().max(1))
        .cloned()
        .unwrap_or_else(|| CreditCode::from("TC-none"))
}

/// Applies `op`; returns the profit minted to the fund when a sale succeeds.
fn apply(m: &mut Market, op: &Op) -> Result<u64, String> {
    let e = &mut m.engine;
    let r = match *op {
        Op::Freeze { gc, value, rate_ppm } => e
            .freeze_and_mint(&m.fi, &m.operators[gc], value, Rate::from_ppm(rate_ppm), None)
            .map(|_| 0),
        Op::Transfer { from, to, amount } => e
            .transfer_operator(&m.operators[from], &m.operators[to], amount, "inv")
            .map(|_| 0),
        Op::Redeem { holder } => e.redeem_all(&m.fi, &m.operators[holder]).map(|_| 0),
        Op::Mature { credit: c } => {
            let code = credit(e, c);
            e.mature_credit(&code).map(|_| 0)
        }
        Op::Sell { credit: c, price_pct } => {
            let code = credit(e, c);
            let spend = e.state().ledger.credits.get(&code).map_or(0, |t| t.spend_amount);
            e.sell_credit(&m.fi, &code, spend * price_pct / 100).map(|o| o.profit)
        }
        Op::WriteOff { credit: c } => {
            let code = credit(e, c);
            e.write_off_credit(&m.fi, &code).map(|_| 0)
        }
        Op::Tick => {
            let t = e.clock() + 1;
            e.advance_clock(t).map(|_| 0)
        }
    };
    r.map_err(|err| err.to_string())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ledger_invariants_hold_under_random_operations(
        deposits in prop::collection::vec(1..20_000u64, 1..4),
        ops in prop::collection::vec(op(), 1..60),
    ) {
        let mut m = market(&deposits);
        let opening: u64 = deposits.iter().sum();
        let mut profits = 0u64;
        for op in &ops {
            let before = m.engine.state().clone();
            let log_len = m.engine.log().len();
            match apply(&mut m, op) {
                Ok(profit) => profits += profit,
                Err(_) => {
                    prop_assert_eq!(m.engine.state(), &before, "failed {:?} changed state", op);
                    prop_assert_eq!(m.engine.log().len(), log_len);
                }
            }
            let ledger = &m.engine.state().ledger;
            prop_assert_eq!(ledger.check_invariants(), Ok(()));

            let operator_held: u64 = ledger.accounts.values().map(|a| a.balances.operators).sum();
            let active: u64 = ledger
                .links
                .values()
                .filter(|l| l.status == LinkStatus::Active)
                .map(|l| l.frozen_amount)
                .sum();
            prop_assert_eq!(operator_held, active);

            let inv = &ledger.investors;
            prop_assert!(inv.frozen + inv.awaiting_sale <= inv.supply());
        }
        let ledger = &m.engine.state().ledger;
        let investor_held: u64 = ledger.accounts.values().map(|a| a.balances.investors).sum();
        // Losses are tallied, never burned.
        prop_assert_eq!(investor_held, opening + profits);
        let basis_lost: u64 = ledger
            .credits
            .values()
            .map(|c| {
                let basis = ledger.links[&c.credit_code].original_amount;
                match (c.state, c.sale_price) {
                    (CreditState::Sold, Some(price)) => basis.saturating_sub(price),
                    (CreditState::WrittenOff, _) => basis,
                    _ => 0,
                }
            })
            .sum();
        prop_assert_eq!(ledger.shortfall, basis_lost);

        let replayed = Engine::replay(m.engine.log()).unwrap();
        prop_assert_eq!(replayed.state(), m.engine.state());
    }

    #[test]
    fn sold_credits_release_their_whole_link(
        value in 1..10_000u64,
        rate_ppm in 100_000..=1_000_000u64,
        price_pct in 100..200u64,
    ) {
        let mut m = market(&[20_000]);
        let (fi, gc) = (m.fi.clone(), m.operators[0].clone());
        let code = m.engine.freeze_and_mint(&fi, &gc, value, Rate::from_ppm(rate_ppm), None).unwrap();
        let frozen = value * rate_ppm / 1_000_000;
        prop_assert_eq!(m.engine.state().ledger.balance(&gc, DaoId::Operators), frozen);
        prop_assert_eq!(m.engine.redeem_all(&fi, &gc).unwrap(), frozen);
        m.engine.mature_credit(&code).unwrap();
        let price = value * price_pct / 100;
        let outcome = m.engine.sell_credit(&fi, &code, price).unwrap();
        prop_assert_eq!(outcome.released, frozen);
        prop_assert_eq!(outcome.profit, price - frozen);
        let ledger = &m.engine.state().ledger;
        prop_assert_eq!(ledger.investors.frozen + ledger.investors.awaiting_sale, 0);
        prop_assert_eq!(ledger.investors.supply(), 20_000 + price - frozen);
        prop_assert_eq!(ledger.credits[&code].state, CreditState::Sold);
    }

    #[test]
    fn payouts_split_earnings_by_quota(
        quotas in prop::collection::vec(1..1_000_000u64, 1..8),
        earnings in 0..10_000_000u64,
    ) {
        let shares: BTreeMap<AccountId, u64> = quotas
            .iter()
            .enumerate()
            .map(|(i, &q)| (AccountId::from(format!("inv-{i:02}")), q))
            .collect();
        let opening: u64 = quotas.iter().sum();
        let closing = opening + earnings;
        let table = payout_table(&shares, closing).unwrap();

        prop_assert_eq!(table.values().sum::<u64>(), closing);
        for (id, &quota) in &shares {
            let paid = table[id];
            prop_assert!(paid >= quota);
            // Exact entitlement quota + earnings·quota/opening, as a rational.
            let numer = u128::from(earnings) * u128::from(quota);
            let den = u128::from(opening);
            let floor = u128::from(quota) + numer / den;
            let paid = u128::from(paid);
            prop_assert!(paid == floor || (paid == floor + 1 && numer % den != 0));
        }
        for (a, &qa) in &shares {
            for (b, &qb) in &shares {
                if qa > qb {
                    prop_assert!(table[a] >= table[b]);
                }
            }
        }
    }
}

#[test]
fn payout_rejects_a_shrunken_fund() {
    let shares = BTreeMap::from([(AccountId::from("a"), 10u64)]);
    assert!(payout_table(&shares, 9).is_err());
    assert_eq!(payout_table(&BTreeMap::new(), 0).unwrap(), BTreeMap::new());
}

#[test]
fn equal_quotas_tie_break_by_id() {
    let shares: BTreeMap<AccountId, u64> = ["c", "a", "b"].iter().map(|s| (AccountId::from(*s), 1)).collect();
    let table = payout_table(&shares, 5).unwrap();
    assert_eq!(table[&AccountId::from("a")], 2);
    assert_eq!(table[&AccountId::from("b")], 2);
    assert_eq!(table[&AccountId::from("c")], 1);
}
