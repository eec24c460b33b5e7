//! Contractor scoring with token incentives, and the fast-claim detector.
//!
//! Both work on durations recovered from the workflow records, which are
//! themselves rebuilt from the event log, so nothing here is hand-set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, ReplayError};
use crate::error::{Error, Result};
use crate::event::EventRecord;
use crate::state::State;
use crate::types::{AccountId, DaoId, Rate, Role, WorkflowId};
use crate::workflow::WorkflowState;

/// Own completed stays a contractor needs before its own averages are used.
pub const BOOTSTRAP_STAYS: usize = 3;

/// Consecutive state pairs a redemption claim can span.
pub const CLAIM_PAIRS: [(WorkflowState, WorkflowState); 3] = [
    (WorkflowState::Anticipation, WorkflowState::Sal1),
    (WorkflowState::Sal1, WorkflowState::Sal2),
    (WorkflowState::Sal2, WorkflowState::Eow),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// T = t_avg / t_max, D = 1 - discount, P = 1 - p_on_time.
    Normalized,
    /// t_avg, discount and p_on_time summed as they are.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FraudParams {
    pub suspicion_rate: Rate,
    /// w1 (time), w2 (discount), w3 (punctuality).
    pub weights: [Rate; 3],
    pub limit: Rate,
    /// Tokens taken from each Bad contractor at every WPS completion.
    pub penalty: u64,
    pub scoring: ScoringMode,
}

impl Default for FraudParams {
    fn default() -> Self {
        Self {
            suspicion_rate: Rate::from_ppm(500_000),
            weights: [Rate::ONE; 3],
            limit: Rate::from_ppm(2_000_000),
            penalty: 1_000,
            scoring: ScoringMode::Normalized,
        }
    }
}

/// Time one workflow spent in one state, for states it has left.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stay {
    pub gc: AccountId,
    pub workflow: WorkflowId,
    pub state: WorkflowState,
    pub entered: u64,
    pub left: u64,
}

impl Stay {
    pub fn ticks(&self) -> u64 {
        self.left - self.entered
    }
}

pub fn stays(state: &State) -> Vec<Stay> {
    state
        .workflows
        .values()
        .flat_map(|wf| {
            wf.completed_stays()
                .into_iter()
                .map(move |(s, entered, left)| Stay {
                    gc: wf.gc.clone(),
                    workflow: wf.id.clone(),
                    state: s,
                    entered,
                    left,
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierStats {
    pub subject: AccountId,
    pub t_avg_per_state: BTreeMap<WorkflowState, f64>,
    /// Mean stay over every completed state.
    pub t_avg: f64,
    /// Discount offered on invoices: 1 minus the mean freeze rate.
    pub discount: f64,
    /// Share of reached WPS stages entered by their scheduled tick.
    pub p_on_time: f64,
    pub observations: usize,
}

/// Statistics for every general contractor on the ledger.
pub fn supplier_stats(state: &State) -> Vec<SupplierStats> {
    let all = stays(state);
    state
        .ledger
        .accounts
        .values()
        .filter(|a| a.role == Role::GeneralContractor)
        .map(|gc| {
            let own: Vec<&Stay> = all.iter().filter(|s| s.gc == gc.id).collect();
            let mut per_state: BTreeMap<WorkflowState, (u64, u64)> = BTreeMap::new();
            for stay in &own {
                let e = per_state.entry(stay.state).or_default();
                e.0 += stay.ticks();
                e.1 += 1;
            }
            let total: u64 = own.iter().map(|s| s.ticks()).sum();
            let t_avg = if own.is_empty() {
                0.0
            } else {
                total as f64 / own.len() as f64
            };

            let rates: Vec<f64> = state
                .ledger
                .links
                .values()
                .filter(|l| l.gc == gc.id)
                .map(|l| l.discount_rate.as_f64())
                .collect();
            let discount = if rates.is_empty() {
                0.0
            } else {
                (1.0 - rates.iter().sum::<f64>() / rates.len() as f64).clamp(0.0, 1.0)
            };

            let (mut reached, mut on_time) = (0u64, 0u64);
            for wf in state.workflows.values().filter(|wf| wf.gc == gc.id) {
                for (stage, fraction) in WorkflowState::WPS.iter().zip(&wf.wps_fractions) {
                    if let Some(&at) = wf.state_entered_at.get(stage) {
                        reached += 1;
                        let due = wf.opened_at + fraction.apply_floor(state.params.schedule_ticks);
                        on_time += u64::from(at <= due);
                    }
                }
            }
            let p_on_time = if reached == 0 {
                1.0
            } else {
                on_time as f64 / reached as f64
            };

            SupplierStats {
                subject: gc.id.clone(),
                t_avg_per_state: per_state
                    .into_iter()
                    .map(|(s, (sum, n))| (s, sum as f64 / n as f64))
                    .collect(),
                t_avg,
                discount,
                p_on_time,
                observations: own.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTerms {
    pub t: f64,
    pub d: f64,
    pub p: f64,
}

impl ScoreTerms {
    pub fn normalized(stats: &SupplierStats, t_max: f64) -> Self {
        Self {
            t: if t_max > 0.0 { stats.t_avg / t_max } else { 0.0 },
            d: 1.0 - stats.discount,
            p: 1.0 - stats.p_on_time,
        }
    }

    pub fn raw(stats: &SupplierStats) -> Self {
        Self {
            t: stats.t_avg,
            d: stats.discount,
            p: stats.p_on_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    Good,
    Bad,
}

/// `w1·T + w2·D + w3·P`, Good iff at most `limit`.
pub fn score_terms(terms: ScoreTerms, weights: [f64; 3], limit: f64) -> (f64, Classification) {
    let score = weights[0] * terms.t + weights[1] * terms.d + weights[2] * terms.p;
    let class = if score <= limit {
        Classification::Good
    } else {
        Classification::Bad
    };
    (score, class)
}

pub fn score_supplier(
    stats: &SupplierStats,
    t_max: f64,
    params: &FraudParams,
) -> Result<(f64, Classification)> {
    if stats.observations == 0 {
        return Err(Error::InsufficientData(format!(
            "{} has no completed states",
            stats.subject
        )));
    }
    let terms = match params.scoring {
        ScoringMode::Normalized => ScoreTerms::normalized(stats, t_max),
        ScoringMode::Raw => ScoreTerms::raw(stats),
    };
    let weights = params.weights.map(Rate::as_f64);
    Ok(score_terms(terms, weights, params.limit.as_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub subject: AccountId,
    pub stats: SupplierStats,
    pub score: Option<f64>,
    pub classification: Option<Classification>,
}

/// Every contractor with its score; those without history are unclassified.
pub fn scoreboard(state: &State, params: &FraudParams) -> Vec<ScoreRow> {
    let stats = supplier_stats(state);
    let t_max = stats.iter().map(|s| s.t_avg).fold(0.0, f64::max);
    stats
        .into_iter()
        .map(|s| {
            let scored = score_supplier(&s, t_max, params).ok();
            ScoreRow {
                subject: s.subject.clone(),
                score: scored.map(|x| x.0),
                classification: scored.map(|x| x.1),
                stats: s,
            }
        })
        .collect()
}

pub fn classify_all(state: &State, params: &FraudParams) -> BTreeMap<AccountId, Classification> {
    scoreboard(state, params)
        .into_iter()
        .filter_map(|row| Some((row.subject, row.classification?)))
        .collect()
}

/// Token movements for one incentive round.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IncentivePlan {
    pub debits: BTreeMap<AccountId, u64>,
    pub credits: BTreeMap<AccountId, u64>,
    /// Part of the credits that went to the financial institution because
    /// nobody was Good.
    pub escrowed: u64,
    /// (from, to, amount), in execution order.
    pub transfers: Vec<(AccountId, AccountId, u64)>,
}

impl IncentivePlan {
    /// Net change per account.
    pub fn deltas(&self) -> BTreeMap<AccountId, i128> {
        let mut out: BTreeMap<AccountId, i128> = BTreeMap::new();
        for (id, amount) in &self.debits {
            *out.entry(id.clone()).or_default() -= i128::from(*amount);
        }
        for (id, amount) in &self.credits {
            *out.entry(id.clone()).or_default() += i128::from(*amount);
        }
        out
    }
}

/// Each Bad account pays `penalty` (clipped to its balance); the pot is split
/// equally among Good accounts, leftover units one each by ascending id.
/// With no Good account the pot goes to `fallback`.
pub fn plan_incentives(
    classes: &BTreeMap<AccountId, Classification>,
    balances: &BTreeMap<AccountId, u64>,
    penalty: u64,
    fallback: &AccountId,
) -> IncentivePlan {
    let mut plan = IncentivePlan::default();
    for (id, class) in classes {
        let take = penalty.min(balances.get(id).copied().unwrap_or(0));
        if *class == Classification::Bad && take > 0 {
            plan.debits.insert(id.clone(), take);
        }
    }
    let pot: u64 = plan.debits.values().sum();
    if pot == 0 {
        return plan;
    }
    let good: Vec<&AccountId> = classes
        .iter()
        .filter(|(_, c)| **c == Classification::Good)
        .map(|(id, _)| id)
        .collect();
    if good.is_empty() {
        plan.credits.insert(fallback.clone(), pot);
        plan.escrowed = pot;
    } else {
        let n = good.len() as u64;
        let (each, rest) = (pot / n, pot % n);
        for (i, id) in good.iter().enumerate() {
            let amount = each + u64::from((i as u64) < rest);
            if amount > 0 {
                plan.credits.insert((*id).clone(), amount);
            }
        }
    }

    let mut payers: Vec<(AccountId, u64)> = plan.debits.clone().into_iter().collect();
    let mut payees: Vec<(AccountId, u64)> = plan.credits.clone().into_iter().collect();
    let (mut i, mut j) = (0, 0);
    while i < payers.len() && j < payees.len() {
        let amount = payers[i].1.min(payees[j].1);
        plan.transfers
            .push((payers[i].0.clone(), payees[j].0.clone(), amount));
        payers[i].1 -= amount;
        payees[j].1 -= amount;
        if payers[i].1 == 0 {
            i += 1;
        }
        if payees[j].1 == 0 {
            j += 1;
        }
    }
    plan
}

impl Engine {
    /// Runs one incentive round over operator balances.
    pub fn apply_incentives(
        &mut self,
        classes: &BTreeMap<AccountId, Classification>,
        penalty: u64,
    ) -> Result<IncentivePlan> {
        let ledger = &self.state().ledger;
        let fallback = ledger
            .financial_institution
            .clone()
            .ok_or_else(|| Error::Validation("no financial institution to hold penalties".into()))?;
        let balances = classes
            .keys()
            .map(|id| (id.clone(), ledger.balance(id, DaoId::Operators)))
            .collect();
        let plan = plan_incentives(classes, &balances, penalty, &fallback);
        for (from, to, amount) in &plan.transfers {
            self.transfer_operator(from, to, *amount, "incentive")?;
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspicionReport {
    pub subject: AccountId,
    pub workflow: WorkflowId,
    pub states: (WorkflowState, WorkflowState),
    /// Tick at which the claim completed.
    pub tick: u64,
    pub t_actual: u64,
    pub t_expected: f64,
    pub s_rate: Rate,
    pub flagged: bool,
}

/// Exact test of `t_actual ≤ s × expected` with `expected = num / den`.
pub fn is_fast_claim(t_actual: u64, expected_num: u128, expected_den: u128, s_rate: Rate) -> bool {
    u128::from(t_actual) * u128::from(Rate::SCALE) * expected_den
        <= u128::from(s_rate.ppm()) * expected_num
}

/// Evaluates every completed claim over consecutive state pairs.
///
/// The expected time for a pair is the sum of the contractor's average
/// stays in both states, taken over stays of other workflows that ended
/// before the claim. Contractors with fewer than [`BOOTSTRAP_STAYS`] such
/// stays are measured against the population instead. Claims without any
/// history for one of the states are skipped.
pub fn detect_fast_claims(state: &State, s_rate: Rate) -> Vec<SuspicionReport> {
    let all = stays(state);
    let mut out = Vec::new();
    for wf in state.workflows.values() {
        for (x1, x2) in CLAIM_PAIRS {
            let (Some(&start), Some(&end)) = (
                wf.state_entered_at.get(&x1),
                x2.next().and_then(|n| wf.state_entered_at.get(&n)),
            ) else {
                continue;
            };
            let prior = |s: &&Stay| s.workflow != wf.id && s.left < end;
            let own: Vec<&Stay> = all.iter().filter(prior).filter(|s| s.gc == wf.gc).collect();
            let history = if own.len() >= BOOTSTRAP_STAYS {
                own
            } else {
                all.iter().filter(prior).collect()
            };
            let avg = |x: WorkflowState| {
                let (sum, n) = history
                    .iter()
                    .filter(|s| s.state == x)
                    .fold((0u128, 0u128), |(sum, n), s| (sum + u128::from(s.ticks()), n + 1));
                (n > 0).then_some((sum, n))
            };
            let (Some((s1, n1)), Some((s2, n2))) = (avg(x1), avg(x2)) else {
                continue;
            };
            let t_actual = end - start;
            let (num, den) = (s1 * n2 + s2 * n1, n1 * n2);
            out.push(SuspicionReport {
                subject: wf.gc.clone(),
                workflow: wf.id.clone(),
                states: (x1, x2),
                tick: end,
                t_actual,
                t_expected: num as f64 / den as f64,
                s_rate,
                flagged: is_fast_claim(t_actual, num, den, s_rate),
            });
        }
    }
    out.sort_by(|a, b| (a.tick, &a.workflow, a.states).cmp(&(b.tick, &b.workflow, b.states)));
    out
}

/// Replays `records` and runs the detector on the final state.
pub fn detect_fast_claims_in_log(
    records: &[EventRecord],
    s_rate: Rate,
) -> std::result::Result<Vec<SuspicionReport>, ReplayError> {
    let engine = Engine::replay(records)?;
    Ok(detect_fast_claims(engine.state(), s_rate))
}
