#![allow(dead_code)]

use sfcm_core::event::EventBody;
use sfcm_core::{AccountId, AsseverationKind, ConstraintId, DaoId, Engine, Params, Rate, Role, WorkflowId, WorkflowState};

pub fn id(s: &str) -> AccountId {
    AccountId::from(s)
}

pub fn rate(x: f64) -> Rate {
    Rate::from_f64(x).unwrap()
}

/// A small market: one institution, one investor, one contractor, one
/// architect, one auditor, one supplier and three clients.
pub struct Fixture {
    pub engine: Engine,
    pub fi: AccountId,
    pub investor: AccountId,
    pub gc: AccountId,
    pub architect: AccountId,
    pub auditor: AccountId,
    pub supplier: AccountId,
    pub clients: Vec<AccountId>,
}

impl Fixture {
    pub fn new(deposit: u64, soa_cap: u64) -> Self {
        Self::with_params(Params::default(), deposit, soa_cap)
    }

    pub fn with_params(params: Params, deposit: u64, soa_cap: u64) -> Self {
        let mut engine = Engine::new(params).unwrap();
        let fi = engine.open_account("fi", Role::FinancialInstitution).unwrap();
        let investor = engine.open_account("investor", Role::Investor).unwrap();
        if deposit > 0 {
            engine.mint_investor(&fi, &investor, deposit).unwrap();
        }
        let gc = engine.open_general_contractor("gc", soa_cap).unwrap();
        let architect = engine.open_account("architect", Role::DesignArchitect).unwrap();
        let auditor = engine.open_account("auditor", Role::TaxAuditor).unwrap();
        let supplier = engine.open_account("supplier", Role::Supplier).unwrap();
        let clients = (1..=3)
            .map(|i| engine.open_account(format!("client-{i}"), Role::Customer).unwrap())
            .collect();
        Self {
            engine,
            fi,
            investor,
            gc,
            architect,
            auditor,
            supplier,
            clients,
        }
    }

    pub fn open(&mut self, client: usize, value: u64) -> WorkflowId {
        let client = self.clients[client].clone();
        let (gc, architect, auditor) = (self.gc.clone(), self.architect.clone(), self.auditor.clone());
        self.engine
            .open_workflow(&client, &gc, &architect, &auditor, value)
            .unwrap()
    }

    pub fn at(&mut self, tick: u64) -> &mut Self {
        self.engine.advance_clock(tick).unwrap();
        self
    }

    pub fn current(&self, wf: &WorkflowId) -> WorkflowState {
        self.engine.state().workflow(wf).unwrap().current().unwrap()
    }

    pub fn asseverate(&mut self, wf: &WorkflowId, kind: AsseverationKind) {
        let s = self.current(wf);
        let signer = match kind {
            AsseverationKind::Technical => self.architect.clone(),
            AsseverationKind::Financial => self.auditor.clone(),
        };
        self.engine.record_asseveration(wf, s, kind, &signer).unwrap();
    }

    /// Pays the anticipation for the next state, funding the contractor at
    /// rate 1 when its wallet is short. Returns false when the next state
    /// takes no anticipation.
    pub fn pay_next(&mut self, wf: &WorkflowId) -> bool {
        let record = self.engine.state().workflow(wf).unwrap();
        let next = record.current().unwrap().next().unwrap();
        let Some(required) = record.required_anticipation(next) else {
            return false;
        };
        let held = self.engine.state().ledger.balance(&self.gc, DaoId::Operators);
        if held < required {
            let (fi, gc) = (self.fi.clone(), self.gc.clone());
            self.engine
                .freeze_and_mint(&fi, &gc, required - held, Rate::ONE, Some(wf))
                .unwrap();
        }
        self.engine.record_anticipation(wf, next, required).unwrap();
        true
    }

    /// Satisfies the advancement rule for the current state and advances
    /// at `tick`.
    pub fn step(&mut self, wf: &WorkflowId, tick: u64) {
        self.at(tick);
        self.asseverate(wf, AsseverationKind::Technical);
        self.asseverate(wf, AsseverationKind::Financial);
        self.pay_next(wf);
        assert!(self.engine.try_advance(wf).unwrap(), "advance {wf} at {tick}");
    }

    /// Steps through states at the given ticks.
    pub fn walk(&mut self, wf: &WorkflowId, ticks: &[u64]) {
        for &tick in ticks {
            self.step(wf, tick);
        }
    }

    /// Drives a workflow from Open to `target`, one tick per state from
    /// the current clock.
    pub fn drive_to(&mut self, wf: &WorkflowId, target: WorkflowState) {
        while self.current(wf) < target {
            let tick = self.engine.clock() + 1;
            self.step(wf, tick);
        }
    }
}

/// A log-backed engine that breaks exactly `constraint` once.
pub fn fault_fixture(constraint: ConstraintId) -> Engine {
    match constraint {
        ConstraintId::C1 => {
            let mut f = Fixture::new(1_000_000, 10_000_000);
            f.open(0, 1_000);
            // Sal1 is due at floor(0.3 × 240) = 72 with 24 ticks of grace.
            f.at(97);
            f.engine
                .inject(
                    "system",
                    EventBody::AgentWarning {
                        agent: "clock".into(),
                        detail: "idle".into(),
                    },
                )
                .unwrap();
            f.engine
        }
        ConstraintId::C2 => {
            let mut f = Fixture::new(100, 10_000_000);
            let (fi, gc) = (f.fi.clone(), f.gc.clone());
            let code = f.engine.freeze_and_mint(&fi, &gc, 60, Rate::ONE, None).unwrap();
            f.engine.redeem_all(&fi, &gc).unwrap();
            f.engine.mature_credit(&code).unwrap();
            f.engine.sell_credit(&fi, &code, 66).unwrap();
            f.engine.set_constraint_enforcement(false);
            f.engine.freeze_and_mint(&fi, &gc, 60, Rate::ONE, None).unwrap();
            f.engine
        }
        ConstraintId::C3 => {
            let mut f = Fixture::new(1_000, 10_000_000);
            let wf = f.open(0, 1_000);
            let (fi, gc, supplier) = (f.fi.clone(), f.gc.clone(), f.supplier.clone());
            f.engine.freeze_and_mint(&fi, &gc, 10, Rate::ONE, Some(&wf)).unwrap();
            let escrow = AccountId(wf.0.clone());
            f.engine.transfer_operator(&gc, &escrow, 10, "top-up").unwrap();
            f.engine.set_constraint_enforcement(false);
            f.engine.transfer_operator(&escrow, &supplier, 10, "early").unwrap();
            f.engine
        }
        ConstraintId::C4 => {
            let mut f = Fixture::new(0, 10_000_000);
            f.engine.set_constraint_enforcement(false);
            for _ in 0..3 {
                f.open(0, 1_000);
            }
            f.engine
        }
        ConstraintId::C5 => {
            let mut f = Fixture::new(0, 10_000_000);
            let wf = f.open(0, 1_000);
            f.engine
                .inject(
                    wf.as_str(),
                    EventBody::WorkflowAdvanced {
                        workflow: wf.clone(),
                        from: WorkflowState::Open,
                        to: WorkflowState::Anticipation,
                    },
                )
                .unwrap();
            f.engine
        }
        ConstraintId::C6 => {
            let mut f = Fixture::new(0, 1_000_000);
            f.engine.set_constraint_enforcement(false);
            f.open(0, 600_000);
            f.open(1, 500_000);
            f.engine
        }
    }
}
