//! Run report. Everything in it is recomputed from the event log, so the
//! report written at run time and one rebuilt by replay are identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{positions, run_status, RunStatus};
use crate::constraints::{check_all, Violation};
use crate::engine::{Engine, ReplayError};
use crate::event::EventRecord;
use crate::fraud::{detect_fast_claims, scoreboard, ScoreRow, SuspicionReport};
use crate::ledger::{TaxCredit, TokenPool};
use crate::state::State;
use crate::types::{AccountId, WorkflowId};
use crate::workflow::WorkflowState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub events: u64,
    pub final_tick: u64,
    pub head_hash: String,
    pub status: RunStatus,
    pub warnings: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowRow {
    pub id: WorkflowId,
    pub client: AccountId,
    pub gc: AccountId,
    /// `None` for a record whose state flags are corrupt.
    pub final_state: Option<WorkflowState>,
    pub total_value: u64,
    pub entered_at: BTreeMap<WorkflowState, u64>,
    /// Ticks spent in each state the workflow has left.
    pub state_ticks: BTreeMap<WorkflowState, u64>,
    pub payments_received: BTreeMap<WorkflowState, u64>,
    pub payments_sent: BTreeMap<WorkflowState, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub investors: TokenPool,
    pub operators: TokenPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: ReportMeta,
    pub workflows: Vec<WorkflowRow>,
    pub pools: Pools,
    pub credits: Vec<TaxCredit>,
    pub payouts: BTreeMap<AccountId, u64>,
    pub violations: Vec<Violation>,
    pub suspicions: Vec<SuspicionReport>,
    pub scoreboard: Vec<ScoreRow>,
    pub positions: BTreeMap<WorkflowId, Vec<(u64, usize)>>,
}

impl RunReport {
    pub fn build(state: &State, log: &[EventRecord]) -> Self {
        let fraud = &state.params.fraud;
        let workflows = state
            .workflows
            .values()
            .map(|wf| WorkflowRow {
                id: wf.id.clone(),
                client: wf.client.clone(),
                gc: wf.gc.clone(),
                final_state: wf.state(),
                total_value: wf.total_value,
                entered_at: wf.state_entered_at.clone(),
                state_ticks: wf
                    .completed_stays()
                    .into_iter()
                    .map(|(s, entered, left)| (s, left - entered))
                    .collect(),
                payments_received: wf.payments_received.clone(),
                payments_sent: wf.payments_sent.clone(),
            })
            .collect();
        Self {
            meta: ReportMeta {
                seed: state.meta.seed,
                config_digest: state.meta.config_digest.clone(),
                events: log.len() as u64,
                final_tick: state.tick,
                head_hash: log.last().map(|r| r.state_hash.clone()).unwrap_or_default(),
                status: run_status(state),
                warnings: state.warnings,
            },
            workflows,
            pools: Pools {
                investors: state.ledger.investors.clone(),
                operators: state.ledger.operators.clone(),
            },
            credits: state.ledger.credits.values().cloned().collect(),
            payouts: state.ledger.payouts.clone(),
            violations: check_all(state),
            suspicions: detect_fast_claims(state, fraud.suspicion_rate),
            scoreboard: scoreboard(state, fraud),
            positions: positions(log),
        }
    }

    /// Replays the log and builds the report from the result.
    pub fn from_log(log: &[EventRecord]) -> Result<Self, ReplayError> {
        let engine = Engine::replay(log)?;
        Ok(Self::build(engine.state(), engine.log()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
