//! The six knowledge-base constraints, checked over a full snapshot.
//!
//! Operations enforce the same rules inline, so a log produced through the
//! engine with checks enabled audits clean. The checkers exist for logs
//! that were forged, produced with checks off, or corrupted.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::state::State;
use crate::types::AccountId;
use crate::workflow::{AsseverationKind, WorkflowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    /// Schedule compliance and one-hot state encoding.
    C1,
    /// Period token demand within the previous period's forecast.
    C2,
    /// A workflow never spends more than it received for a state.
    C3,
    /// At most two active workflows per client.
    C4,
    /// Both asseverations before leaving a state.
    C5,
    /// Active work per contractor within its SOA cap.
    C6,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 6] = [
        ConstraintId::C1,
        ConstraintId::C2,
        ConstraintId::C3,
        ConstraintId::C4,
        ConstraintId::C5,
        ConstraintId::C6,
    ];
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub subject: String,
    pub tick: u64,
    pub detail: String,
    /// The numbers that falsify the constraint.
    pub measured: BTreeMap<String, u64>,
}

impl Violation {
    fn new(
        constraint: ConstraintId,
        subject: impl fmt::Display,
        tick: u64,
        detail: String,
        measured: &[(&str, u64)],
    ) -> Self {
        Self {
            constraint,
            subject: subject.to_string(),
            tick,
            detail,
            measured: measured.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub period: u64,
    /// Forecast available to this period, f_{t-1}.
    pub forecast: u64,
    /// Tokens frozen during this period, d_t.
    pub demand: u64,
}

/// Demand and forecast per period, contiguous from the first funded period
/// to the last.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub rows: Vec<ForecastRow>,
}

impl ForecastSeries {
    /// Periods without funding requests carry the previous forecast less the
    /// previous demand.
    pub fn from_state(state: &State) -> Self {
        let (Some(&first), Some(&last)) = (state.demand.keys().next(), state.demand.keys().next_back())
        else {
            return Self::default();
        };
        let mut rows: Vec<ForecastRow> = Vec::new();
        for period in first..=last {
            let row = match state.demand.get(&period) {
                Some(book) => ForecastRow {
                    period,
                    forecast: book.forecast,
                    demand: book.demand,
                },
                None => {
                    let prev = rows.last().expect("first period is booked");
                    ForecastRow {
                        period,
                        forecast: prev.forecast.saturating_sub(prev.demand),
                        demand: 0,
                    }
                }
            };
            rows.push(row);
        }
        Self { rows }
    }
}

/// State flags must be one-hot, and no WPS stage may lag its projected
/// completion tick by more than the grace period. One violation per
/// workflow, for the earliest problem.
pub fn check_c1(state: &State) -> Vec<Violation> {
    let params = &state.params;
    let mut out = Vec::new();
    for wf in state.workflows.values() {
        let Some(current) = wf.state() else {
            out.push(Violation::new(
                ConstraintId::C1,
                &wf.id,
                state.tick,
                format!("state flags {:#08b} are not one-hot", wf.flags.0),
                &[("flags", u64::from(wf.flags.0))],
            ));
            continue;
        };
        for (&stage, fraction) in WorkflowState::WPS.iter().zip(&wf.wps_fractions) {
            let due = wf.opened_at + fraction.apply_floor(params.schedule_ticks);
            let deadline = due + params.c1_grace_ticks;
            let reached_at = if stage <= current {
                wf.state_entered_at.get(&stage).copied()
            } else {
                None
            };
            let late_by = match reached_at {
                Some(at) if at > deadline => Some(at),
                Some(_) => None,
                None if stage > current && state.tick > deadline => Some(state.tick),
                None => None,
            };
            if let Some(at) = late_by {
                out.push(Violation::new(
                    ConstraintId::C1,
                    &wf.id,
                    at,
                    format!("{stage} due at tick {due} still pending or late at tick {at}"),
                    &[("due_tick", due), ("grace", params.c1_grace_ticks), ("observed_tick", at)],
                ));
                break;
            }
        }
    }
    out
}

/// d_t ≤ f_{t-1} for every funded period.
pub fn check_c2(state: &State) -> Vec<Violation> {
    ForecastSeries::from_state(state)
        .rows
        .into_iter()
        .filter(|row| row.demand > row.forecast)
        .map(|row| {
            Violation::new(
                ConstraintId::C2,
                format!("period-{}", row.period),
                row.period * state.params.c2_period_ticks,
                format!("demand {} exceeds forecast {}", row.demand, row.forecast),
                &[("d_t", row.demand), ("f_prev", row.forecast)],
            )
        })
        .collect()
}

/// Escrow payments made while in a state never exceed the anticipation
/// received for it.
pub fn check_c3(state: &State) -> Vec<Violation> {
    let mut out = Vec::new();
    for wf in state.workflows.values() {
        for (&s, &sent) in &wf.payments_sent {
            let received = wf.received(s);
            if sent > received {
                out.push(Violation::new(
                    ConstraintId::C3,
                    &wf.id,
                    state.tick,
                    format!("{s}: sent {sent} against {received} received"),
                    &[("p_s", sent), ("p_r", received)],
                ));
            }
        }
    }
    out
}

/// At most `max_active_per_client` non-archived workflows per client.
pub fn check_c4(state: &State) -> Vec<Violation> {
    let mut active: BTreeMap<&AccountId, u64> = BTreeMap::new();
    for wf in state.workflows.values().filter(|wf| wf.is_active()) {
        *active.entry(&wf.client).or_default() += 1;
    }
    let limit = u64::from(state.params.max_active_per_client);
    active
        .into_iter()
        .filter(|(_, count)| *count > limit)
        .map(|(client, count)| {
            Violation::new(
                ConstraintId::C4,
                client,
                state.tick,
                format!("{count} active workflows, limit {limit}"),
                &[("active", count), ("limit", limit)],
            )
        })
        .collect()
}

/// Every state a workflow has left carries both asseverations.
pub fn check_c5(state: &State) -> Vec<Violation> {
    let mut out = Vec::new();
    for wf in state.workflows.values() {
        let Some(current) = wf.state() else {
            continue;
        };
        let missing = WorkflowState::ALL
            .iter()
            .take_while(|s| **s < current)
            .find(|s| !wf.fully_asseverated(**s));
        if let Some(&s) = missing {
            out.push(Violation::new(
                ConstraintId::C5,
                &wf.id,
                wf.state_entered_at.get(&current).copied().unwrap_or(state.tick),
                format!("left {s} without both asseverations, now {current}"),
                &[
                    ("state", s.index() as u64),
                    ("technical", u64::from(wf.has_asseveration(s, AsseverationKind::Technical))),
                    ("financial", u64::from(wf.has_asseveration(s, AsseverationKind::Financial))),
                ],
            ));
        }
    }
    out
}

/// Σ active workflow values per contractor within its SOA cap.
pub fn check_c6(state: &State) -> Vec<Violation> {
    let mut committed: BTreeMap<&AccountId, u64> = BTreeMap::new();
    for wf in state.workflows.values().filter(|wf| wf.is_active()) {
        *committed.entry(&wf.gc).or_default() += wf.total_value;
    }
    committed
        .into_iter()
        .filter_map(|(gc, total)| {
            let cap = state.ledger.accounts.get(gc)?.soa_cap?;
            (total > cap).then(|| {
                Violation::new(
                    ConstraintId::C6,
                    gc,
                    state.tick,
                    format!("active work {total} above SOA cap {cap}"),
                    &[("sum", total), ("cap", cap)],
                )
            })
        })
        .collect()
}

/// All checkers, ordered by (constraint, subject, tick).
pub fn check_all(state: &State) -> Vec<Violation> {
    let mut out: Vec<Violation> = [check_c1, check_c2, check_c3, check_c4, check_c5, check_c6]
        .iter()
        .flat_map(|check| check(state))
        .collect();
    out.sort_by(|a, b| {
        (a.constraint, &a.subject, a.tick).cmp(&(b.constraint, &b.subject, b.tick))
    });
    out
}
