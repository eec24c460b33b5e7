//! Seeded multi-agent scheduler.
//!
//! One tick is one simulated day. Each tick runs three stages, each in an
//! order shuffled by the scheduler stream:
//!
//! 1. contractors, technicians and clients,
//! 2. workflow agents,
//! 3. the financial institution.
//!
//! Randomness comes from SplitMix64. A master generator seeded with the run
//! seed hands out, in order, the seed of the setup stream, the seed of the
//! scheduler stream and one seed per agent in declaration order. A draw
//! `u = (next_u64 >> 11) · 2^-53` approves iff `u < threshold`.

use std::collections::BTreeMap;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::event::{EventBody, EventRecord};
use crate::fraud::classify_all;
use crate::ledger::{CreditState, FundStatus, LinkStatus};
use crate::state::State;
use crate::types::{AccountId, DaoId, Rate, Role, WorkflowId};
use crate::workflow::{AsseverationKind, WorkflowState};

#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: SplitMix64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, n) by multiply-shift. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    pub fn approve(&mut self, threshold: f64) -> bool {
        self.uniform() < threshold
    }

    /// Fisher-Yates, walking down from the last element.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    Workflow,
    GeneralContractor,
    Technical,
    Financial,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub id: String,
    pub account: Option<AccountId>,
    pub workflow: Option<WorkflowId>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Every workflow archived and the fund closed.
    Completed,
    /// Every workflow archived, fund still open.
    FundOpen,
    /// `max_ticks` reached with workflows still open.
    MaxTicks,
}

#[derive(Debug, Clone)]
pub struct Model {
    engine: Engine,
    agents: Vec<AgentSpec>,
    streams: Vec<RandomSource>,
    scheduler: RandomSource,
    fi: AccountId,
    suppliers: Vec<AccountId>,
    discount_rate: Rate,
    sale_factor: Rate,
    max_ticks: u64,
    tick: u64,
}

pub const FINANCIAL_INSTITUTION: &str = "fi";

/// Opens the accounts, funds the investors' pool and opens every workflow
/// at tick 0.
pub fn build_model(config: &ScenarioConfig) -> Result<Model> {
    config.validate()?;
    let params = config.params()?;
    let mut engine = Engine::with_meta(params, Some(config.seed), Some(config.digest()))?;
    let mut master = RandomSource::new(config.seed);
    let mut setup = RandomSource::new(master.next_u64());
    let scheduler = RandomSource::new(master.next_u64());
    let counts = &config.agents;
    fn names(prefix: &str, n: u32) -> impl Iterator<Item = AccountId> + '_ {
        (1..=n).map(move |i| AccountId(format!("{prefix}-{i}")))
    }

    let fi = engine.open_account(FINANCIAL_INSTITUTION, Role::FinancialInstitution)?;
    for (i, &deposit) in config.economics.investor_deposits.iter().enumerate() {
        let investor = engine.open_account(format!("investor-{}", i + 1), Role::Investor)?;
        if deposit > 0 {
            engine.mint_investor(&fi, &investor, deposit)?;
        }
    }
    let gcs: Vec<AccountId> = names("gc", counts.general_contractors).collect();
    for (i, gc) in gcs.iter().enumerate() {
        let caps = &config.economics.soa_caps;
        engine.open_general_contractor(gc.clone(), caps[i % caps.len()])?;
    }
    let mut open_all = |prefix: &str, n: u32, role: Role| -> Result<Vec<AccountId>> {
        names(prefix, n).map(|id| engine.open_account(id, role)).collect()
    };
    let engineers = open_all("architect", counts.engineers, Role::DesignArchitect)?;
    let accountants = open_all("auditor", counts.accountants, Role::TaxAuditor)?;
    let suppliers = open_all("supplier", counts.suppliers, Role::Supplier)?;
    let clients = open_all("client", counts.clients, Role::Customer)?;

    let [lo, hi] = config.workflow.value_range;
    let mut workflows = Vec::new();
    for i in 0..counts.workflows as usize {
        let value = lo + setup.below(hi - lo + 1);
        let id = engine
            .open_workflow(
                &clients[i % clients.len()],
                &gcs[i % gcs.len()],
                &engineers[i % engineers.len()],
                &accountants[i % accountants.len()],
                value,
            )
            .map_err(|err| Error::Config(format!("cannot open workflow {}: {err}", i + 1)))?;
        workflows.push(id);
    }

    let spec = |kind, id: &str, account: Option<&AccountId>, workflow: Option<&WorkflowId>, threshold| AgentSpec {
        kind,
        id: id.to_owned(),
        account: account.cloned(),
        workflow: workflow.cloned(),
        threshold,
    };
    let thresholds = &config.thresholds;
    let mut agents = Vec::new();
    agents.extend(clients.iter().map(|c| spec(AgentKind::Client, c.as_str(), Some(c), None, 0.0)));
    agents.extend(gcs.iter().map(|g| {
        spec(AgentKind::GeneralContractor, g.as_str(), Some(g), None, thresholds.general_contractor)
    }));
    agents.extend(
        engineers
            .iter()
            .chain(&accountants)
            .map(|t| spec(AgentKind::Technical, t.as_str(), Some(t), None, thresholds.technical)),
    );
    agents.extend(workflows.iter().map(|w| spec(AgentKind::Workflow, w.as_str(), None, Some(w), 0.0)));
    agents.push(spec(AgentKind::Financial, fi.as_str(), Some(&fi), None, 0.0));
    let streams = agents.iter().map(|_| RandomSource::new(master.next_u64())).collect();

    let rate = |name, v| Rate::from_f64(v).ok_or_else(|| Error::Config(format!("{name} invalid")));
    Ok(Model {
        engine,
        agents,
        streams,
        scheduler,
        fi,
        suppliers,
        discount_rate: rate("discount_rate", config.economics.discount_rate)?,
        sale_factor: rate("sale_factor", config.economics.sale_factor)?,
        max_ticks: config.max_ticks,
        tick: 0,
    })
}

impl Model {
    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn state(&self) -> &State {
        self.engine.state()
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn all_archived(&self) -> bool {
        self.state().workflows.values().all(|wf| wf.is_archived())
    }

    pub fn is_terminated(&self) -> bool {
        self.all_archived() || self.tick >= self.max_ticks
    }

    pub fn status(&self) -> RunStatus {
        run_status(self.state())
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    /// Advances one tick. Does nothing once terminated.
    pub fn step(&mut self) {
        if self.is_terminated() {
            return;
        }
        self.tick += 1;
        self.engine
            .advance_clock(self.tick)
            .expect("model tick only grows");

        let stage = |kinds: &[AgentKind], agents: &[AgentSpec]| -> Vec<usize> {
            (0..agents.len()).filter(|&i| kinds.contains(&agents[i].kind)).collect()
        };
        let mut first = stage(
            &[AgentKind::GeneralContractor, AgentKind::Technical, AgentKind::Client],
            &self.agents,
        );
        self.scheduler.shuffle(&mut first);
        let mut second = stage(&[AgentKind::Workflow], &self.agents);
        self.scheduler.shuffle(&mut second);
        let third = stage(&[AgentKind::Financial], &self.agents);
        for index in first.into_iter().chain(second).chain(third) {
            self.activate(index);
        }
    }

    fn activate(&mut self, index: usize) {
        let agent = self.agents[index].clone();
        let outcome = match agent.kind {
            AgentKind::Client => Ok(()),
            AgentKind::GeneralContractor => self.act_contractor(index, &agent),
            AgentKind::Technical => self.act_technician(index, &agent),
            AgentKind::Workflow => self.act_workflow(&agent),
            AgentKind::Financial => self.act_financial(),
        };
        if let Err(err) = outcome {
            self.warn(&agent.id, &err);
        }
    }

    fn warn(&mut self, agent: &str, err: &Error) {
        log::debug!("tick {}: {agent}: {err}", self.tick);
        self.engine
            .inject(
                agent,
                EventBody::AgentWarning {
                    agent: agent.to_owned(),
                    detail: err.to_string(),
                },
            )
            .expect("warnings always apply");
    }

    /// Pays each pending anticipation with probability `threshold`,
    /// requesting new operator tokens for any shortfall in its wallet.
    fn act_contractor(&mut self, index: usize, agent: &AgentSpec) -> Result<()> {
        let gc = agent.account.clone().expect("contractor has an account");
        let pending: Vec<(WorkflowId, WorkflowState, u64)> = self
            .state()
            .workflows
            .values()
            .filter(|wf| wf.gc == gc)
            .filter_map(|wf| {
                let next = wf.state()?.next()?;
                let required = wf.required_anticipation(next)?;
                (wf.received(next) == 0).then(|| (wf.id.clone(), next, required))
            })
            .collect();
        for (workflow, next, required) in pending {
            if !self.streams[index].approve(agent.threshold) {
                continue;
            }
            let held = self.state().ledger.balance(&gc, DaoId::Operators);
            if held < required {
                let request = self
                    .discount_rate
                    .min_input_for(required - held)
                    .ok_or_else(|| Error::Validation("zero discount rate cannot fund work".into()))?;
                if let Err(err) =
                    self.engine
                        .freeze_and_mint(&self.fi, &gc, request, self.discount_rate, Some(&workflow))
                {
                    self.warn(&agent.id, &err);
                    continue;
                }
            }
            if let Err(err) = self.engine.record_anticipation(&workflow, next, required) {
                self.warn(&agent.id, &err);
            }
        }
        Ok(())
    }

    /// Signs each pending asseveration of its kind with probability
    /// `threshold`.
    fn act_technician(&mut self, index: usize, agent: &AgentSpec) -> Result<()> {
        let signer = agent.account.clone().expect("technician has an account");
        let kind = match self.state().ledger.account(&signer)?.role {
            Role::DesignArchitect => AsseverationKind::Technical,
            _ => AsseverationKind::Financial,
        };
        let pending: Vec<(WorkflowId, WorkflowState)> = self
            .state()
            .workflows
            .values()
            .filter(|wf| match kind {
                AsseverationKind::Technical => wf.engineer == signer,
                AsseverationKind::Financial => wf.accountant == signer,
            })
            .filter_map(|wf| {
                let s = wf.state()?;
                (s != WorkflowState::Archived && !wf.has_asseveration(s, kind)).then(|| (wf.id.clone(), s))
            })
            .collect();
        for (workflow, s) in pending {
            if !self.streams[index].approve(agent.threshold) {
                continue;
            }
            if let Err(err) = self.engine.record_asseveration(&workflow, s, kind, &signer) {
                self.warn(&agent.id, &err);
            }
        }
        Ok(())
    }

    /// Once the advancement rule holds: pays the contractor what is left
    /// for the current state, advances, pays the supplier its share of the
    /// new state and, on reaching a WPS checkpoint, runs an incentive round.
    fn act_workflow(&mut self, agent: &AgentSpec) -> Result<()> {
        let id = agent.workflow.clone().expect("workflow agent has a workflow");
        let wf = self.state().workflow(&id)?;
        if wf.is_archived() || !wf.can_advance() {
            return Ok(());
        }
        self.engine.settle_stage(&id)?;
        if !self.engine.try_advance(&id)? {
            return Ok(());
        }
        let wf = self.state().workflow(&id)?;
        let entered = wf.current()?;
        if !self.suppliers.is_empty() {
            let n = self.state().workflows.keys().position(|k| *k == id).unwrap_or(0);
            let supplier = self.suppliers[n % self.suppliers.len()].clone();
            self.engine.pay_supplier(&id, &supplier)?;
        }
        if WorkflowState::WPS.contains(&entered) {
            let fraud = self.state().params.fraud.clone();
            let classes = classify_all(self.state(), &fraud);
            if !classes.is_empty() {
                self.engine.apply_incentives(&classes, fraud.penalty)?;
            }
        }
        Ok(())
    }

    /// Redeems every operator wallet, sells the credits whose link is fully
    /// released and closes the fund once nothing is left open.
    fn act_financial(&mut self) -> Result<()> {
        let fi = self.fi.clone();
        let holders: Vec<AccountId> = self
            .state()
            .ledger
            .accounts
            .values()
            .filter(|a| a.role != Role::Workflow && a.balances.operators > 0)
            .map(|a| a.id.clone())
            .collect();
        for holder in holders {
            if let Err(err) = self.engine.redeem_all(&fi, &holder) {
                self.warn(fi.as_str(), &err);
            }
        }

        let ledger = &self.state().ledger;
        let saleable: Vec<(crate::types::CreditCode, u64)> = ledger
            .credits
            .values()
            .filter(|c| c.state == CreditState::Matured)
            .filter(|c| {
                ledger
                    .links
                    .get(&c.credit_code)
                    .is_some_and(|l| l.status == LinkStatus::Released)
            })
            .map(|c| (c.credit_code.clone(), self.sale_factor.apply_floor(c.spend_amount)))
            .collect();
        for (code, price) in saleable {
            if let Err(err) = self.engine.sell_credit(&fi, &code, price) {
                self.warn(fi.as_str(), &err);
            }
        }

        let ledger = &self.state().ledger;
        if self.all_archived() && ledger.fund != FundStatus::Closed && !ledger.credits.is_empty()
            && ledger.closing_blockers().is_none()
        {
            self.engine.close_fund_and_payout(&fi)?;
        }
        Ok(())
    }
}

pub fn run_status(state: &State) -> RunStatus {
    let archived = state.workflows.values().all(|wf| wf.is_archived());
    match (archived, state.ledger.fund) {
        (true, FundStatus::Closed) => RunStatus::Completed,
        (true, _) if state.ledger.credits.is_empty() => RunStatus::Completed,
        (true, _) => RunStatus::FundOpen,
        (false, _) => RunStatus::MaxTicks,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: State,
    pub log: Vec<EventRecord>,
    pub status: RunStatus,
    pub ticks: u64,
}

/// Steps a fresh model until every workflow is archived or `max_ticks`.
pub fn run(config: &ScenarioConfig) -> Result<RunOutcome> {
    let mut model = build_model(config)?;
    while !model.is_terminated() {
        model.step();
    }
    let status = model.status();
    let ticks = model.tick;
    let (state, log) = model.into_engine().into_parts();
    Ok(RunOutcome {
        state,
        log,
        status,
        ticks,
    })
}

/// Workflow grid position (state index) per tick, as recorded in the log.
pub fn positions(records: &[EventRecord]) -> BTreeMap<WorkflowId, Vec<(u64, usize)>> {
    let mut out: BTreeMap<WorkflowId, Vec<(u64, usize)>> = BTreeMap::new();
    for record in records {
        match record.body() {
            Ok(EventBody::WorkflowOpened { workflow, .. }) => {
                out.entry(workflow).or_default().push((record.tick, 0));
            }
            Ok(EventBody::WorkflowAdvanced { workflow, to, .. }) => {
                out.entry(workflow).or_default().push((record.tick, to.index()));
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // splitmix64.c, seeded with 1477776061723855037.
        let mut rng = RandomSource::new(1477776061723855037);
        assert_eq!(rng.next_u64(), 1985237415132408290);
        assert_eq!(rng.next_u64(), 2979275885539914483);
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = RandomSource::new(9);
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = RandomSource::new(3);
        let mut items: Vec<u32> = (0..20).collect();
        rng.shuffle(&mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn zero_workflows_end_at_tick_zero() {
        let mut config = ScenarioConfig::default();
        config.agents.workflows = 0;
        let outcome = run(&config).unwrap();
        assert_eq!(outcome.ticks, 0);
        assert_eq!(outcome.status, RunStatus::Completed);
    }

    #[test]
    fn certain_approval_archives_in_five_ticks() {
        let mut config = ScenarioConfig::default();
        config.thresholds.general_contractor = 1.0;
        config.thresholds.technical = 1.0;
        let outcome = run(&config).unwrap();
        assert_eq!(outcome.ticks, 5);
        assert_eq!(outcome.status, RunStatus::Completed);
    }
}
