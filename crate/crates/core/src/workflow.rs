//! Paperwork automaton for one Superbonus project.
//!
//! A workflow moves Open → Anticipation → Sal1 → Sal2 → Eow → Archived, one
//! step at a time. It leaves a state once the design architect and the tax
//! auditor have both asseverated it and the general contractor has paid the
//! anticipation due for the next state. Anticipations land in the
//! workflow's escrow wallet, which pays the site operators.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintId;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::event::EventBody;
use crate::ledger::{CreditState, Ledger};
use crate::state::Params;
use crate::types::{AccountId, CreditCode, Rate, Role, WorkflowId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WorkflowState {
    Open,
    Anticipation,
    Sal1,
    Sal2,
    Eow,
    Archived,
}

impl WorkflowState {
    pub const ALL: [WorkflowState; 6] = [
        WorkflowState::Open,
        WorkflowState::Anticipation,
        WorkflowState::Sal1,
        WorkflowState::Sal2,
        WorkflowState::Eow,
        WorkflowState::Archived,
    ];

    /// The three WPS checkpoints, in order.
    pub const WPS: [WorkflowState; 3] = [WorkflowState::Sal1, WorkflowState::Sal2, WorkflowState::Eow];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn next(self) -> Option<Self> {
        Self::from_index(self.index() + 1)
    }

    pub fn prev(self) -> Option<Self> {
        self.index().checked_sub(1).and_then(Self::from_index)
    }
}

impl fmt::Display for WorkflowState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One flag per state. A well-formed record has exactly one bit set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateFlags(pub u8);

impl StateFlags {
    pub fn only(state: WorkflowState) -> Self {
        StateFlags(1 << state.index())
    }

    pub fn is_set(self, state: WorkflowState) -> bool {
        self.0 & (1 << state.index()) != 0
    }

    /// The state if exactly one valid flag is set.
    pub fn single(self) -> Option<WorkflowState> {
        if self.0.count_ones() != 1 {
            return None;
        }
        WorkflowState::from_index(self.0.trailing_zeros() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AsseverationKind {
    Technical,
    Financial,
}

impl AsseverationKind {
    pub fn signer_role(self) -> Role {
        match self {
            AsseverationKind::Technical => Role::DesignArchitect,
            AsseverationKind::Financial => Role::TaxAuditor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asseveration {
    pub workflow: WorkflowId,
    pub state: WorkflowState,
    pub kind: AsseverationKind,
    pub signer: AccountId,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowRecord {
    pub id: WorkflowId,
    pub client: AccountId,
    pub gc: AccountId,
    pub engineer: AccountId,
    pub accountant: AccountId,
    pub escrow: AccountId,
    pub total_value: u64,
    pub flags: StateFlags,
    pub opened_at: u64,
    pub state_entered_at: BTreeMap<WorkflowState, u64>,
    pub payments_received: BTreeMap<WorkflowState, u64>,
    pub payments_sent: BTreeMap<WorkflowState, u64>,
    pub asseverations: Vec<Asseveration>,
    pub wps_fractions: Vec<Rate>,
    pub anticipation_fraction: Rate,
    pub credits: Vec<CreditCode>,
}

impl WorkflowRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn validate_new(
        ledger: &Ledger,
        params: &Params,
        id: &WorkflowId,
        client: &AccountId,
        gc: &AccountId,
        engineer: &AccountId,
        accountant: &AccountId,
        total_value: u64,
        tick: u64,
    ) -> Result<Self> {
        ledger.require_role(client, Role::Customer)?;
        ledger.require_role(gc, Role::GeneralContractor)?;
        ledger.require_role(engineer, Role::DesignArchitect)?;
        ledger.require_role(accountant, Role::TaxAuditor)?;
        if total_value == 0 {
            return Err(Error::Validation("total value must be positive".into()));
        }
        let escrow = AccountId(id.0.clone());
        if ledger.accounts.contains_key(&escrow) {
            return Err(Error::Duplicate(format!("account {escrow}")));
        }
        Ok(Self {
            id: id.clone(),
            client: client.clone(),
            gc: gc.clone(),
            engineer: engineer.clone(),
            accountant: accountant.clone(),
            escrow,
            total_value,
            flags: StateFlags::only(WorkflowState::Open),
            opened_at: tick,
            state_entered_at: BTreeMap::from([(WorkflowState::Open, tick)]),
            payments_received: BTreeMap::new(),
            payments_sent: BTreeMap::new(),
            asseverations: Vec::new(),
            wps_fractions: params.wps_fractions.clone(),
            anticipation_fraction: params.anticipation_fraction,
            credits: Vec::new(),
        })
    }

    pub fn state(&self) -> Option<WorkflowState> {
        self.flags.single()
    }

    pub fn current(&self) -> Result<WorkflowState> {
        self.state().ok_or_else(|| Error::State {
            workflow: self.id.clone(),
            detail: format!("state flags {:#08b} are not one-hot", self.flags.0),
        })
    }

    pub fn is_archived(&self) -> bool {
        self.state() == Some(WorkflowState::Archived)
    }

    /// Counted against client and contractor limits. A corrupt record counts.
    pub fn is_active(&self) -> bool {
        !self.is_archived()
    }

    /// Cumulative fraction of the total value paid once `state` is reached.
    fn cumulative(&self, state: WorkflowState) -> u64 {
        match state {
            WorkflowState::Sal1 => self.wps_fractions[0].apply_floor(self.total_value),
            WorkflowState::Sal2 => self.wps_fractions[1].apply_floor(self.total_value),
            WorkflowState::Eow => self.wps_fractions[2].apply_floor(self.total_value),
            _ => 0,
        }
    }

    /// Anticipation the contractor owes to enter `target`. `None` for states
    /// that take no payment (Open, Archived).
    pub fn required_anticipation(&self, target: WorkflowState) -> Option<u64> {
        match target {
            WorkflowState::Anticipation => Some(self.anticipation_fraction.apply_floor(self.total_value)),
            WorkflowState::Sal1 | WorkflowState::Sal2 | WorkflowState::Eow => {
                let prev = target.prev().expect("has predecessor");
                Some(self.cumulative(target) - self.cumulative(prev))
            }
            WorkflowState::Open | WorkflowState::Archived => None,
        }
    }

    pub fn received(&self, state: WorkflowState) -> u64 {
        self.payments_received.get(&state).copied().unwrap_or(0)
    }

    pub fn sent(&self, state: WorkflowState) -> u64 {
        self.payments_sent.get(&state).copied().unwrap_or(0)
    }

    /// Escrow still unspent for `state`.
    pub fn unspent(&self, state: WorkflowState) -> u64 {
        self.received(state).saturating_sub(self.sent(state))
    }

    pub fn has_asseveration(&self, state: WorkflowState, kind: AsseverationKind) -> bool {
        self.asseverations
            .iter()
            .any(|a| a.state == state && a.kind == kind)
    }

    pub fn fully_asseverated(&self, state: WorkflowState) -> bool {
        self.has_asseveration(state, AsseverationKind::Technical)
            && self.has_asseveration(state, AsseverationKind::Financial)
    }

    /// Whether the anticipation for `target` has been paid in full.
    pub fn anticipation_settled(&self, target: WorkflowState) -> bool {
        self.received(target) == self.required_anticipation(target).unwrap_or(0)
    }

    /// The advancement rule: current state asseverated by both technicians,
    /// anticipation for the next state paid, and not archived.
    pub fn can_advance(&self) -> bool {
        let Some(state) = self.state() else {
            return false;
        };
        let Some(next) = state.next() else {
            return false;
        };
        self.fully_asseverated(state) && self.anticipation_settled(next)
    }

    /// Ticks spent in each state that has been left.
    pub fn completed_stays(&self) -> Vec<(WorkflowState, u64, u64)> {
        WorkflowState::ALL
            .iter()
            .filter_map(|&state| {
                let entered = *self.state_entered_at.get(&state)?;
                let left = *self.state_entered_at.get(&state.next()?)?;
                Some((state, entered, left))
            })
            .collect()
    }

    pub(crate) fn validate_anticipation(&self, target: WorkflowState, amount: u64) -> Result<()> {
        let current = self.current()?;
        if Some(target) != current.next() {
            return Err(Error::Sequence {
                workflow: self.id.clone(),
                detail: format!("anticipation for {target} while in {current}"),
            });
        }
        let Some(required) = self.required_anticipation(target) else {
            return Err(Error::Sequence {
                workflow: self.id.clone(),
                detail: format!("{target} takes no anticipation"),
            });
        };
        if self.received(target) > 0 {
            return Err(Error::Duplicate(format!("anticipation for {} {target}", self.id)));
        }
        if amount != required {
            return Err(Error::Validation(format!(
                "anticipation for {target} must be {required}, got {amount}"
            )));
        }
        Ok(())
    }

    pub(crate) fn validate_asseveration(
        &self,
        ledger: &Ledger,
        state: WorkflowState,
        kind: AsseverationKind,
        signer: &AccountId,
    ) -> Result<()> {
        let assigned = match kind {
            AsseverationKind::Technical => &self.engineer,
            AsseverationKind::Financial => &self.accountant,
        };
        if signer != assigned {
            let role = ledger.account(signer)?.role;
            return Err(Error::role(
                signer,
                role,
                format!("{} assigned to {} for {kind:?} asseveration", assigned, self.id),
            ));
        }
        let current = self.current()?;
        if current == WorkflowState::Archived || state != current {
            return Err(Error::Sequence {
                workflow: self.id.clone(),
                detail: format!("cannot asseverate {state} while in {current}"),
            });
        }
        if self.has_asseveration(state, kind) {
            return Err(Error::Duplicate(format!("{kind:?} asseveration of {} {state}", self.id)));
        }
        Ok(())
    }

    pub(crate) fn validate_step(&self, from: WorkflowState, to: WorkflowState) -> Result<()> {
        let current = self.current()?;
        if current != from || from.next() != Some(to) {
            return Err(Error::Sequence {
                workflow: self.id.clone(),
                detail: format!("step {from} -> {to} from {current}"),
            });
        }
        Ok(())
    }

    pub(crate) fn push_asseveration(
        &mut self,
        state: WorkflowState,
        kind: AsseverationKind,
        signer: &AccountId,
        tick: u64,
    ) {
        self.asseverations.push(Asseveration {
            workflow: self.id.clone(),
            state,
            kind,
            signer: signer.clone(),
            tick,
        });
    }

    pub(crate) fn enter(&mut self, state: WorkflowState, tick: u64) {
        self.flags = StateFlags::only(state);
        self.state_entered_at.insert(state, tick);
    }

    /// Projected token demand of the WPS stages not reached yet.
    pub fn project_schedule(&self, profile: DurationProfile, ticks_per_month: u64) -> Result<Schedule> {
        let current = self.current()?;
        if current == WorkflowState::Archived {
            return Err(Error::State {
                workflow: self.id.clone(),
                detail: "archived".into(),
            });
        }
        let duration = profile.ticks(ticks_per_month);
        let points = WorkflowState::WPS
            .iter()
            .zip(&self.wps_fractions)
            .filter(|(state, _)| **state > current)
            .map(|(&state, fraction)| {
                let offset = fraction.apply_floor(duration);
                SchedulePoint {
                    state,
                    offset_ticks: offset,
                    due_tick: self.opened_at + offset,
                    amount: self.required_anticipation(state).expect("WPS state"),
                }
            })
            .collect();
        Ok(Schedule {
            workflow: self.id.clone(),
            ticks_per_month,
            points,
        })
    }
}

/// Expected length of a building site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DurationProfile {
    /// Energy plus seismic works: 8 months.
    Combined,
    /// Energy works only: 6 months.
    EcoOnly,
    CustomTicks(u64),
}

impl DurationProfile {
    pub fn ticks(self, ticks_per_month: u64) -> u64 {
        match self {
            DurationProfile::Combined => 8 * ticks_per_month,
            DurationProfile::EcoOnly => 6 * ticks_per_month,
            DurationProfile::CustomTicks(ticks) => ticks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub state: WorkflowState,
    /// Ticks after opening at which the stage is expected to complete.
    pub offset_ticks: u64,
    pub due_tick: u64,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub workflow: WorkflowId,
    pub ticks_per_month: u64,
    pub points: Vec<SchedulePoint>,
}

impl Schedule {
    pub fn months(&self, point: &SchedulePoint) -> f64 {
        point.offset_ticks as f64 / self.ticks_per_month as f64
    }

    /// Forecast token demand per period of `period_ticks`.
    pub fn per_period(&self, period_ticks: u64) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for point in &self.points {
            *out.entry(point.due_tick / period_ticks).or_default() += point.amount;
        }
        out
    }
}

// ---- operations ---------------------------------------------------------------

impl Engine {
    pub fn open_workflow(
        &mut self,
        client: &AccountId,
        gc: &AccountId,
        engineer: &AccountId,
        accountant: &AccountId,
        total_value: u64,
    ) -> Result<WorkflowId> {
        let state = self.state();
        if self.enforces_constraints() {
            let active = state
                .workflows
                .values()
                .filter(|wf| wf.client == *client && wf.is_active())
                .count();
            let limit = state.params.max_active_per_client as usize;
            if active + 1 > limit {
                return Err(Error::constraint(
                    ConstraintId::C4,
                    format!("client {client} already has {active} active workflows"),
                ));
            }
            let committed: u64 = state
                .workflows
                .values()
                .filter(|wf| wf.gc == *gc && wf.is_active())
                .map(|wf| wf.total_value)
                .sum();
            if let Some(cap) = state.ledger.account(gc)?.soa_cap {
                if committed + total_value > cap {
                    return Err(Error::constraint(
                        ConstraintId::C6,
                        format!(
                            "contractor {gc} would hold {} against SOA cap {cap}",
                            committed + total_value
                        ),
                    ));
                }
            }
        }
        let id = state.next_workflow_id();
        self.commit(
            client.as_str(),
            EventBody::WorkflowOpened {
                workflow: id.clone(),
                client: client.clone(),
                gc: gc.clone(),
                engineer: engineer.clone(),
                accountant: accountant.clone(),
                total_value,
            },
        )?;
        Ok(id)
    }

    /// The contractor pays the anticipation for `target_state` into the
    /// workflow escrow.
    pub fn record_anticipation(
        &mut self,
        workflow: &WorkflowId,
        target_state: WorkflowState,
        amount: u64,
    ) -> Result<()> {
        let wf = self.state().workflow(workflow)?;
        let gc = wf.gc.clone();
        self.commit(
            gc.as_str(),
            EventBody::AnticipationPaid {
                workflow: workflow.clone(),
                target_state,
                amount,
                invoice_ref: format!("{workflow}/{target_state}/anticipation"),
            },
        )
    }

    /// Stores an asseveration and pays its signer the configured share of
    /// the stage value from escrow.
    pub fn record_asseveration(
        &mut self,
        workflow: &WorkflowId,
        state: WorkflowState,
        kind: AsseverationKind,
        signer: &AccountId,
    ) -> Result<()> {
        self.commit(
            signer.as_str(),
            EventBody::Asseverated {
                workflow: workflow.clone(),
                state,
                kind,
                signer: signer.clone(),
            },
        )?;
        let share = match kind {
            AsseverationKind::Technical => self.state().params.architect_share,
            AsseverationKind::Financial => self.state().params.auditor_share,
        };
        let fee = self.stage_payment(workflow, state, share)?;
        let escrow = self.state().workflow(workflow)?.escrow.clone();
        self.transfer_operator(
            &escrow,
            signer,
            fee,
            &format!("{workflow}/{state}/{kind:?}-asseveration").to_lowercase(),
        )
    }

    /// `share` of the stage value, capped by what the escrow still holds for
    /// the stage.
    fn stage_payment(&self, workflow: &WorkflowId, state: WorkflowState, share: Rate) -> Result<u64> {
        let wf = self.state().workflow(workflow)?;
        let stage = wf.required_anticipation(state).unwrap_or(0);
        let balance = self
            .state()
            .ledger
            .balance(&wf.escrow, crate::types::DaoId::Operators);
        Ok(share.apply_floor(stage).min(wf.unspent(state)).min(balance))
    }

    /// Pays a supplier its share of the current stage value from escrow.
    pub fn pay_supplier(&mut self, workflow: &WorkflowId, supplier: &AccountId) -> Result<u64> {
        let wf = self.state().workflow(workflow)?;
        let state = wf.current()?;
        let escrow = wf.escrow.clone();
        let share = self.state().params.supplier_share;
        let amount = self.stage_payment(workflow, state, share)?;
        self.transfer_operator(&escrow, supplier, amount, &format!("{workflow}/{state}/supply"))?;
        Ok(amount)
    }

    /// Pays whatever the escrow still holds for the current state to the
    /// contractor.
    pub fn settle_stage(&mut self, workflow: &WorkflowId) -> Result<u64> {
        let wf = self.state().workflow(workflow)?;
        let state = wf.current()?;
        let (escrow, gc) = (wf.escrow.clone(), wf.gc.clone());
        let amount = self.stage_payment(workflow, state, Rate::ONE)?;
        self.transfer_operator(&escrow, &gc, amount, &format!("{workflow}/{state}/margin"))?;
        Ok(amount)
    }

    /// Advances the workflow one state if the rule holds. Leaving Eow
    /// matures the workflow's tax credits.
    pub fn try_advance(&mut self, workflow: &WorkflowId) -> Result<bool> {
        let wf = self.state().workflow(workflow)?;
        if !wf.can_advance() {
            return Ok(false);
        }
        let from = wf.current()?;
        let to = from.next().expect("can_advance implies a successor");
        let accruing: Vec<CreditCode> = wf
            .credits
            .iter()
            .filter(|code| {
                self.state()
                    .ledger
                    .credits
                    .get(*code)
                    .is_some_and(|c| c.state == CreditState::Accruing)
            })
            .cloned()
            .collect();
        self.commit(
            workflow.as_str(),
            EventBody::WorkflowAdvanced {
                workflow: workflow.clone(),
                from,
                to,
            },
        )?;
        if to == WorkflowState::Archived {
            for code in accruing {
                self.mature_credit(&code)?;
            }
        }
        Ok(true)
    }

    pub fn project_schedule(&self, workflow: &WorkflowId, profile: DurationProfile) -> Result<Schedule> {
        self.state()
            .workflow(workflow)?
            .project_schedule(profile, self.state().params.ticks_per_month)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_are_one_hot() {
        for state in WorkflowState::ALL {
            assert_eq!(StateFlags::only(state).single(), Some(state));
        }
        assert_eq!(StateFlags(0b11).single(), None);
        assert_eq!(StateFlags(0).single(), None);
        assert_eq!(StateFlags(1 << 6).single(), None);
    }

    #[test]
    fn ordering_is_total() {
        assert!(WorkflowState::ALL.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(WorkflowState::Archived.next(), None);
        assert_eq!(WorkflowState::Open.prev(), None);
    }

    #[test]
    fn duration_profiles() {
        assert_eq!(DurationProfile::Combined.ticks(30), 240);
        assert_eq!(DurationProfile::EcoOnly.ticks(30), 180);
        assert_eq!(DurationProfile::CustomTicks(17).ticks(30), 17);
    }
}
