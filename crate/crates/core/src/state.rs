//! The full system snapshot and the fold that applies one event to it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::EventBody;
use crate::fraud::FraudParams;
use crate::ledger::Ledger;
use crate::types::{AccountId, Rate, Role, WorkflowId};
use crate::workflow::WorkflowRecord;

/// Parameters that shape state transitions. Recorded in the genesis event so
/// a log replays without any outside configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    /// Tax credit face value per unit of spend (110%).
    pub accrual_factor: Rate,
    /// Cumulative WPS checkpoints for Sal1, Sal2 and Eow.
    pub wps_fractions: Vec<Rate>,
    /// Advance paid to enter the Anticipation state.
    pub anticipation_fraction: Rate,
    pub architect_share: Rate,
    pub auditor_share: Rate,
    pub supplier_share: Rate,
    pub ticks_per_month: u64,
    /// Projected duration of a building site.
    pub schedule_ticks: u64,
    pub c1_grace_ticks: u64,
    pub c2_period_ticks: u64,
    pub max_active_per_client: u32,
    pub fraud: FraudParams,
}

impl Default for Params {
    fn default() -> Self {
        let r = |x: f64| Rate::from_f64(x).expect("static rate");
        Self {
            accrual_factor: r(1.10),
            wps_fractions: vec![r(0.30), r(0.60), r(1.00)],
            anticipation_fraction: r(0.10),
            architect_share: r(0.20),
            auditor_share: r(0.10),
            supplier_share: r(0.30),
            ticks_per_month: 30,
            schedule_ticks: 240,
            c1_grace_ticks: 24,
            c2_period_ticks: 30,
            max_active_per_client: 2,
            fraud: FraudParams::default(),
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.wps_fractions.len() != 3 {
            return fail(format!(
                "expected 3 WPS fractions (Sal1, Sal2, Eow), got {}",
                self.wps_fractions.len()
            ));
        }
        if self.wps_fractions.windows(2).any(|w| w[0] >= w[1]) || self.wps_fractions[0] == Rate::ZERO {
            return fail("WPS fractions must be positive and strictly increasing".into());
        }
        if *self.wps_fractions.last().expect("len 3") != Rate::ONE {
            return fail("last WPS fraction must be 1.0".into());
        }
        if !self.anticipation_fraction.is_unit_interval() {
            return fail("anticipation fraction above 1".into());
        }
        let shares = self.architect_share.ppm() + self.auditor_share.ppm() + self.supplier_share.ppm();
        if shares > Rate::SCALE {
            return fail("technician and supplier shares exceed 100% of a stage".into());
        }
        if self.ticks_per_month == 0 || self.schedule_ticks == 0 || self.c2_period_ticks == 0 {
            return fail("tick lengths must be positive".into());
        }
        if self.max_active_per_client == 0 {
            return fail("max active workflows per client must be positive".into());
        }
        Ok(())
    }
}

/// Per-period book for the demand/forecast check. The forecast is the free
/// Investors-DAO supply when the period's first funding request arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodDemand {
    pub forecast: u64,
    pub demand: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub tick: u64,
    pub meta: RunMeta,
    pub params: Params,
    pub ledger: Ledger,
    pub workflows: BTreeMap<WorkflowId, WorkflowRecord>,
    pub demand: BTreeMap<u64, PeriodDemand>,
    pub warnings: u64,
    next_workflow: u64,
}

impl State {
    pub(crate) fn genesis(params: Params, meta: RunMeta) -> Self {
        Self {
            tick: 0,
            meta,
            params,
            ledger: Ledger::default(),
            workflows: BTreeMap::new(),
            demand: BTreeMap::new(),
            warnings: 0,
            next_workflow: 1,
        }
    }

    pub fn period_of(&self, tick: u64) -> u64 {
        tick / self.params.c2_period_ticks
    }

    pub fn next_workflow_id(&self) -> WorkflowId {
        WorkflowId(format!("WF-{:04}", self.next_workflow))
    }

    pub fn workflow(&self, id: &WorkflowId) -> Result<&WorkflowRecord> {
        self.workflows
            .get(id)
            .ok_or_else(|| Error::UnknownWorkflow(id.clone()))
    }

    pub fn workflow_by_escrow(&self, account: &AccountId) -> Option<&WorkflowRecord> {
        self.workflows.get(&WorkflowId(account.0.clone())).filter(|wf| wf.escrow == *account)
    }

    /// Canonical serialization used for hashing and snapshots.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("state serializes")
    }

    /// Applies one event. Operation preconditions and ledger invariants are
    /// enforced here; the six knowledge-base constraints are not, so a forged
    /// log still replays and the audit reports what it breaks.
    pub(crate) fn apply(&mut self, tick: u64, actor: &str, body: &EventBody) -> Result<()> {
        if tick < self.tick {
            return Err(Error::Validation(format!(
                "event tick {tick} precedes state tick {}",
                self.tick
            )));
        }
        let issuer = AccountId::from(actor);
        match body {
            EventBody::Genesis { .. } => {
                return Err(Error::Validation("genesis may only open a log".into()));
            }
            EventBody::AccountOpened {
                account,
                role,
                soa_cap,
            } => {
                if *role == Role::Workflow {
                    return Err(Error::Validation(
                        "workflow escrow accounts are opened with their workflow".into(),
                    ));
                }
                self.ledger.apply_account_opened(account, *role, *soa_cap)?;
            }
            EventBody::InvestorMinted { account, amount } => {
                self.ledger.apply_investor_minted(&issuer, account, *amount)?;
            }
            EventBody::FreezeMinted {
                credit_code,
                gc,
                requested_work_value,
                discount_rate,
                frozen_amount,
                face_value,
                workflow,
            } => {
                if let Some(id) = workflow {
                    let wf = self.workflow(id)?;
                    if wf.gc != *gc {
                        return Err(Error::Validation(format!("{gc} is not the contractor of {id}")));
                    }
                }
                let free_before = self.ledger.investors.free();
                self.ledger.apply_freeze_minted(
                    &issuer,
                    credit_code,
                    gc,
                    *requested_work_value,
                    *discount_rate,
                    *frozen_amount,
                    *face_value,
                    self.params.accrual_factor,
                    workflow.as_ref(),
                    tick,
                )?;
                let period = self.period_of(tick);
                let book = self.demand.entry(period).or_insert(PeriodDemand {
                    forecast: free_before,
                    demand: 0,
                });
                book.demand += frozen_amount;
                if let Some(id) = workflow {
                    self.workflows
                        .get_mut(id)
                        .expect("checked")
                        .credits
                        .push(credit_code.clone());
                }
            }
            EventBody::OperatorTransferred {
                from, to, amount, ..
            } => {
                if *amount == 0 {
                    return Err(Error::Validation("empty transfer".into()));
                }
                let payer = self
                    .workflow_by_escrow(from)
                    .map(|wf| wf.current().map(|s| (wf.id.clone(), s)))
                    .transpose()?;
                self.ledger.apply_transfer(from, to, *amount)?;
                if let Some((id, state)) = payer {
                    let wf = self.workflows.get_mut(&id).expect("checked");
                    *wf.payments_sent.entry(state).or_default() += amount;
                }
            }
            EventBody::BurnReleased {
                holder,
                credit_code,
                amount,
            } => {
                self.ledger
                    .apply_burn_released(&issuer, holder, credit_code, *amount)?;
            }
            EventBody::CreditMatured { credit_code } => {
                self.ledger.apply_credit_matured(credit_code)?;
            }
            EventBody::CreditSold {
                credit_code,
                sale_price,
                outcome,
            } => {
                self.ledger
                    .apply_credit_sold(&issuer, credit_code, *sale_price, outcome)?;
            }
            EventBody::CreditWrittenOff { credit_code } => {
                self.ledger.apply_credit_written_off(&issuer, credit_code)?;
            }
            EventBody::FundClosed {
                opening_supply,
                closing_supply,
                payouts,
            } => {
                if *opening_supply != self.ledger.opening_supply()
                    || *closing_supply != self.ledger.investors.supply()
                {
                    return Err(Error::Validation("fund closing supplies mismatch".into()));
                }
                self.ledger.apply_fund_closed(&issuer, payouts)?;
            }
            EventBody::WorkflowOpened {
                workflow,
                client,
                gc,
                engineer,
                accountant,
                total_value,
            } => {
                if *workflow != self.next_workflow_id() {
                    return Err(Error::Validation(format!(
                        "workflow id {workflow}, expected {}",
                        self.next_workflow_id()
                    )));
                }
                let record = WorkflowRecord::validate_new(
                    &self.ledger,
                    &self.params,
                    workflow,
                    client,
                    gc,
                    engineer,
                    accountant,
                    *total_value,
                    tick,
                )?;
                self.ledger
                    .apply_account_opened(&record.escrow, Role::Workflow, None)?;
                self.next_workflow += 1;
                self.workflows.insert(workflow.clone(), record);
            }
            EventBody::AnticipationPaid {
                workflow,
                target_state,
                amount,
                ..
            } => {
                let wf = self.workflow(workflow)?;
                wf.validate_anticipation(*target_state, *amount)?;
                let (gc, escrow) = (wf.gc.clone(), wf.escrow.clone());
                self.ledger.apply_transfer(&gc, &escrow, *amount)?;
                let wf = self.workflows.get_mut(workflow).expect("checked");
                *wf.payments_received.entry(*target_state).or_default() += amount;
            }
            EventBody::Asseverated {
                workflow,
                state,
                kind,
                signer,
            } => {
                let wf = self.workflow(workflow)?;
                wf.validate_asseveration(&self.ledger, *state, *kind, signer)?;
                self.workflows
                    .get_mut(workflow)
                    .expect("checked")
                    .push_asseveration(*state, *kind, signer, tick);
            }
            EventBody::WorkflowAdvanced { workflow, from, to } => {
                let wf = self.workflow(workflow)?;
                wf.validate_step(*from, *to)?;
                self.workflows
                    .get_mut(workflow)
                    .expect("checked")
                    .enter(*to, tick);
            }
            EventBody::AgentWarning { .. } => {
                self.warnings += 1;
            }
        }
        self.tick = tick;
        Ok(())
    }
}
