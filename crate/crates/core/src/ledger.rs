//! Dual-DAO token accounting.
//!
//! The Investors DAO is a closed fund: one token per euro deposited, frozen
//! whenever the Operators DAO mints against it, and burned when the fund
//! closes. Every Operators-DAO token is backed by exactly one frozen
//! Investors-DAO token through a [`FreezeLink`] until it is redeemed.
//!
//! Investor tokens go through two steps on the way back to the free pool.
//! Redeeming operator tokens (burn) moves the backing amount from `frozen`
//! to `awaiting_sale`; selling the matured tax credit releases it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::event::EventBody;
use crate::types::{AccountId, CreditCode, DaoId, Rate, Role, WorkflowId};
use crate::constraints::ConstraintId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balances {
    pub investors: u64,
    pub operators: u64,
}

impl Balances {
    pub fn get(&self, dao: DaoId) -> u64 {
        match dao {
            DaoId::Investors => self.investors,
            DaoId::Operators => self.operators,
        }
    }

    fn get_mut(&mut self, dao: DaoId) -> &mut u64 {
        match dao {
            DaoId::Investors => &mut self.investors,
            DaoId::Operators => &mut self.operators,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    pub role: Role,
    pub balances: Balances,
    /// SOA qualification cap, general contractors only. `None` is uncapped.
    pub soa_cap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPool {
    pub dao: DaoId,
    pub minted: u64,
    pub burned: u64,
    /// Investor tokens currently backing outstanding operator tokens.
    pub frozen: u64,
    /// Investor tokens whose operator counterpart was redeemed but whose
    /// tax credit is not sold yet.
    pub awaiting_sale: u64,
}

impl TokenPool {
    fn new(dao: DaoId) -> Self {
        Self {
            dao,
            minted: 0,
            burned: 0,
            frozen: 0,
            awaiting_sale: 0,
        }
    }

    pub fn supply(&self) -> u64 {
        self.minted - self.burned
    }

    /// Supply not committed to any link.
    pub fn free(&self) -> u64 {
        self.supply()
            .saturating_sub(self.frozen)
            .saturating_sub(self.awaiting_sale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkStatus {
    Active,
    Released,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeLink {
    pub credit_code: CreditCode,
    pub gc: AccountId,
    pub workflow: Option<WorkflowId>,
    pub discount_rate: Rate,
    /// Amount frozen at creation.
    pub original_amount: u64,
    pub frozen_amount: u64,
    pub operator_amount: u64,
    pub awaiting_sale: u64,
    pub status: LinkStatus,
    pub created_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CreditState {
    Accruing,
    Matured,
    Sold,
    WrittenOff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxCredit {
    pub credit_code: CreditCode,
    pub workflow: Option<WorkflowId>,
    pub spend_amount: u64,
    pub face_value: u64,
    pub state: CreditState,
    pub sale_price: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FundStatus {
    /// Accepting deposits.
    Open,
    /// Quotas fixed; the first freeze locks the fund.
    Locked,
    Closed,
}

/// Result of a credit sale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaleOutcome {
    pub released: u64,
    pub profit: u64,
    pub shortfall: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub accounts: BTreeMap<AccountId, Account>,
    pub investors: TokenPool,
    pub operators: TokenPool,
    pub links: BTreeMap<CreditCode, FreezeLink>,
    pub credits: BTreeMap<CreditCode, TaxCredit>,
    /// Investor quotas (deposits made while the fund was open).
    pub shares: BTreeMap<AccountId, u64>,
    pub fund: FundStatus,
    pub financial_institution: Option<AccountId>,
    /// Cumulative amount lost on credits sold below their frozen amount.
    pub shortfall: u64,
    pub payouts: BTreeMap<AccountId, u64>,
    next_credit: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Self {
            accounts: BTreeMap::new(),
            investors: TokenPool::new(DaoId::Investors),
            operators: TokenPool::new(DaoId::Operators),
            links: BTreeMap::new(),
            credits: BTreeMap::new(),
            shares: BTreeMap::new(),
            fund: FundStatus::Open,
            financial_institution: None,
            shortfall: 0,
            payouts: BTreeMap::new(),
            next_credit: 1,
        }
    }
}

impl Ledger {
    pub fn pool(&self, dao: DaoId) -> &TokenPool {
        match dao {
            DaoId::Investors => &self.investors,
            DaoId::Operators => &self.operators,
        }
    }

    fn pool_mut(&mut self, dao: DaoId) -> &mut TokenPool {
        match dao {
            DaoId::Investors => &mut self.investors,
            DaoId::Operators => &mut self.operators,
        }
    }

    pub fn account(&self, id: &AccountId) -> Result<&Account> {
        self.accounts
            .get(id)
            .ok_or_else(|| Error::UnknownAccount(id.clone()))
    }

    pub fn balance(&self, id: &AccountId, dao: DaoId) -> u64 {
        self.accounts
            .get(id)
            .map_or(0, |account| account.balances.get(dao))
    }

    pub fn link(&self, code: &CreditCode) -> Result<&FreezeLink> {
        self.links
            .get(code)
            .ok_or_else(|| Error::UnknownCredit(code.clone()))
    }

    pub fn credit(&self, code: &CreditCode) -> Result<&TaxCredit> {
        self.credits
            .get(code)
            .ok_or_else(|| Error::UnknownCredit(code.clone()))
    }

    pub fn next_credit_code(&self) -> CreditCode {
        CreditCode(format!("CR-{:06}", self.next_credit))
    }

    /// T': the pool at fund lock, i.e. the sum of quotas.
    pub fn opening_supply(&self) -> u64 {
        self.shares.values().sum()
    }

    pub fn active_links(&self) -> impl Iterator<Item = &FreezeLink> {
        self.links
            .values()
            .filter(|link| link.status == LinkStatus::Active)
    }

    pub(crate) fn require_role(&self, id: &AccountId, role: Role) -> Result<&Account> {
        let account = self.account(id)?;
        if account.role != role {
            return Err(Error::role(id, account.role, role.to_string()));
        }
        Ok(account)
    }

    pub(crate) fn require_fi(&self, issuer: &AccountId) -> Result<()> {
        match &self.financial_institution {
            Some(fi) if fi == issuer => Ok(()),
            Some(_) | None => {
                let actual = self.account(issuer)?.role;
                Err(Error::role(issuer, actual, "the financial institution"))
            }
        }
    }

    /// Checks every accounting invariant. Used after each applied event in
    /// debug builds and by the property tests.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for dao in [DaoId::Investors, DaoId::Operators] {
            let pool = self.pool(dao);
            if pool.burned > pool.minted {
                return Err(format!("{dao}: burned {} > minted {}", pool.burned, pool.minted));
            }
            let held: u64 = self.accounts.values().map(|a| a.balances.get(dao)).sum();
            if held != pool.supply() {
                return Err(format!(
                    "{dao}: balances {held} != minted - burned {}",
                    pool.supply()
                ));
            }
        }
        let inv = &self.investors;
        if inv.frozen + inv.awaiting_sale > inv.supply() {
            return Err(format!(
                "frozen {} + awaiting sale {} exceeds supply {}",
                inv.frozen,
                inv.awaiting_sale,
                inv.supply()
            ));
        }
        let active_frozen: u64 = self.active_links().map(|l| l.frozen_amount).sum();
        if active_frozen != inv.frozen {
            return Err(format!("pool frozen {} != linked {}", inv.frozen, active_frozen));
        }
        if active_frozen != self.operators.supply() {
            return Err(format!(
                "coverage: frozen {} != operator supply {}",
                active_frozen,
                self.operators.supply()
            ));
        }
        let pending: u64 = self.links.values().map(|l| l.awaiting_sale).sum();
        if pending != inv.awaiting_sale {
            return Err(format!("awaiting sale {} != linked {}", inv.awaiting_sale, pending));
        }
        for link in self.links.values() {
            if link.status == LinkStatus::Active && link.frozen_amount != link.operator_amount {
                return Err(format!("link {} unbalanced", link.credit_code));
            }
        }
        Ok(())
    }

    // ---- event application -------------------------------------------------
    //
    // Each `apply_*` validates everything first and only then mutates, so a
    // rejected event leaves the ledger untouched.

    pub(crate) fn apply_account_opened(
        &mut self,
        id: &AccountId,
        role: Role,
        soa_cap: Option<u64>,
    ) -> Result<()> {
        if id.as_str().is_empty() {
            return Err(Error::Validation("empty account id".into()));
        }
        if self.accounts.contains_key(id) {
            return Err(Error::Duplicate(format!("account {id}")));
        }
        if role == Role::FinancialInstitution && self.financial_institution.is_some() {
            return Err(Error::Duplicate("financial institution".into()));
        }
        if soa_cap.is_some() && role != Role::GeneralContractor {
            return Err(Error::Validation(format!("SOA cap on {role} account {id}")));
        }
        if role == Role::FinancialInstitution {
            self.financial_institution = Some(id.clone());
        }
        self.accounts.insert(
            id.clone(),
            Account {
                id: id.clone(),
                role,
                balances: Balances::default(),
                soa_cap,
            },
        );
        Ok(())
    }

    pub(crate) fn apply_investor_minted(
        &mut self,
        issuer: &AccountId,
        account: &AccountId,
        amount: u64,
    ) -> Result<()> {
        self.require_fi(issuer)?;
        self.require_role(account, Role::Investor)?;
        if self.fund != FundStatus::Open {
            return Err(Error::FundClosed);
        }
        if amount == 0 {
            return Err(Error::Validation("deposit must be positive".into()));
        }
        self.mint(DaoId::Investors, account, amount);
        *self.shares.entry(account.clone()).or_default() += amount;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn apply_freeze_minted(
        &mut self,
        issuer: &AccountId,
        code: &CreditCode,
        gc: &AccountId,
        requested: u64,
        rate: Rate,
        frozen: u64,
        face_value: u64,
        accrual: Rate,
        workflow: Option<&WorkflowId>,
        tick: u64,
    ) -> Result<()> {
        self.require_fi(issuer)?;
        self.require_role(gc, Role::GeneralContractor)?;
        if self.fund == FundStatus::Closed {
            return Err(Error::FundClosed);
        }
        if requested == 0 {
            return Err(Error::Validation("requested work value must be positive".into()));
        }
        if !rate.is_unit_interval() {
            return Err(Error::Validation(format!("discount rate {rate} above 1")));
        }
        if frozen != rate.apply_floor(requested) || frozen == 0 {
            return Err(Error::Validation(format!(
                "freeze of {frozen} does not match {rate} x {requested}"
            )));
        }
        if face_value != accrual.apply_floor(requested) {
            return Err(Error::Validation(format!("face value {face_value} mismatch")));
        }
        if *code != self.next_credit_code() {
            return Err(Error::Validation(format!(
                "credit code {code}, expected {}",
                self.next_credit_code()
            )));
        }
        let available = self.investors.free();
        if frozen > available {
            return Err(Error::Coverage {
                requested: frozen,
                available,
            });
        }

        self.fund = FundStatus::Locked;
        self.next_credit += 1;
        self.investors.frozen += frozen;
        self.mint(DaoId::Operators, gc, frozen);
        self.links.insert(
            code.clone(),
            FreezeLink {
                credit_code: code.clone(),
                gc: gc.clone(),
                workflow: workflow.cloned(),
                discount_rate: rate,
                original_amount: frozen,
                frozen_amount: frozen,
                operator_amount: frozen,
                awaiting_sale: 0,
                status: LinkStatus::Active,
                created_tick: tick,
            },
        );
        self.credits.insert(
            code.clone(),
            TaxCredit {
                credit_code: code.clone(),
                workflow: workflow.cloned(),
                spend_amount: requested,
                face_value,
                state: CreditState::Accruing,
                sale_price: None,
            },
        );
        Ok(())
    }

    pub(crate) fn apply_transfer(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        amount: u64,
    ) -> Result<()> {
        if from == to {
            return Err(Error::Validation("transfer to self".into()));
        }
        let source = self.account(from)?;
        let target = self.account(to)?;
        for account in [source, target] {
            if !account.role.belongs_to(DaoId::Operators) {
                return Err(Error::role(&account.id, account.role, "an Operators DAO role"));
            }
        }
        let available = source.balances.operators;
        if available < amount {
            return Err(Error::InsufficientBalance {
                account: from.clone(),
                requested: amount,
                available,
            });
        }
        self.accounts.get_mut(from).expect("checked").balances.operators -= amount;
        self.accounts.get_mut(to).expect("checked").balances.operators += amount;
        Ok(())
    }

    pub(crate) fn apply_burn_released(
        &mut self,
        issuer: &AccountId,
        holder: &AccountId,
        code: &CreditCode,
        amount: u64,
    ) -> Result<()> {
        self.require_fi(issuer)?;
        let link = self.link(code)?;
        if link.status != LinkStatus::Active {
            return Err(Error::link(code, "link already released"));
        }
        if amount == 0 {
            return Err(Error::Validation("redemption must be positive".into()));
        }
        if amount > link.operator_amount {
            return Err(Error::link(
                code,
                format!("redeem {amount} exceeds remainder {}", link.operator_amount),
            ));
        }
        let available = self.balance(holder, DaoId::Operators);
        if available < amount {
            self.account(holder)?;
            return Err(Error::InsufficientBalance {
                account: holder.clone(),
                requested: amount,
                available,
            });
        }

        self.burn(DaoId::Operators, holder, amount);
        self.investors.frozen -= amount;
        self.investors.awaiting_sale += amount;
        let link = self.links.get_mut(code).expect("checked");
        link.operator_amount -= amount;
        link.frozen_amount -= amount;
        link.awaiting_sale += amount;
        if link.operator_amount == 0 && link.frozen_amount == 0 {
            link.status = LinkStatus::Released;
        }
        Ok(())
    }

    pub(crate) fn apply_credit_matured(&mut self, code: &CreditCode) -> Result<()> {
        let credit = self.credit(code)?;
        if credit.state != CreditState::Accruing {
            return Err(Error::Validation(format!(
                "credit {code} is {:?}, not accruing",
                credit.state
            )));
        }
        self.credits.get_mut(code).expect("checked").state = CreditState::Matured;
        Ok(())
    }

    /// Computes the outcome of selling a credit without mutating.
    pub(crate) fn sale_outcome(&self, code: &CreditCode, sale_price: u64) -> Result<SaleOutcome> {
        let credit = self.credit(code)?;
        if credit.state != CreditState::Matured {
            return Err(Error::Maturity(code.clone()));
        }
        if sale_price == 0 {
            return Err(Error::Validation("sale price must be positive".into()));
        }
        let link = self.link(code)?;
        if link.status == LinkStatus::Active {
            return Err(Error::link(
                code,
                format!("{} operator tokens still outstanding", link.operator_amount),
            ));
        }
        let basis = link.original_amount;
        Ok(SaleOutcome {
            released: link.awaiting_sale,
            profit: sale_price.saturating_sub(basis),
            shortfall: basis.saturating_sub(sale_price),
        })
    }

    pub(crate) fn apply_credit_sold(
        &mut self,
        issuer: &AccountId,
        code: &CreditCode,
        sale_price: u64,
        recorded: &SaleOutcome,
    ) -> Result<()> {
        self.require_fi(issuer)?;
        let outcome = self.sale_outcome(code, sale_price)?;
        if outcome != *recorded {
            return Err(Error::Validation(format!(
                "sale outcome {recorded:?} does not match {outcome:?}"
            )));
        }
        self.release(code);
        if outcome.profit > 0 {
            self.mint(DaoId::Investors, issuer, outcome.profit);
        }
        self.shortfall += outcome.shortfall;
        let credit = self.credits.get_mut(code).expect("checked");
        credit.state = CreditState::Sold;
        credit.sale_price = Some(sale_price);
        Ok(())
    }

    pub(crate) fn apply_credit_written_off(
        &mut self,
        issuer: &AccountId,
        code: &CreditCode,
    ) -> Result<()> {
        self.require_fi(issuer)?;
        let credit = self.credit(code)?;
        if matches!(credit.state, CreditState::Sold | CreditState::WrittenOff) {
            return Err(Error::Validation(format!("credit {code} already resolved")));
        }
        let link = self.link(code)?;
        if link.status == LinkStatus::Active {
            return Err(Error::link(code, "operator tokens still outstanding"));
        }
        self.shortfall += link.original_amount;
        self.release(code);
        self.credits.get_mut(code).expect("checked").state = CreditState::WrittenOff;
        Ok(())
    }

    fn release(&mut self, code: &CreditCode) {
        let link = self.links.get_mut(code).expect("caller checked");
        self.investors.awaiting_sale -= link.awaiting_sale;
        link.awaiting_sale = 0;
    }

    pub(crate) fn closing_blockers(&self) -> Option<String> {
        if self.fund == FundStatus::Closed {
            return Some("fund already closed".into());
        }
        if let Some(link) = self.active_links().next() {
            return Some(format!("freeze link {} still active", link.credit_code));
        }
        if let Some(credit) = self
            .credits
            .values()
            .find(|c| !matches!(c.state, CreditState::Sold | CreditState::WrittenOff))
        {
            return Some(format!("credit {} unresolved", credit.credit_code));
        }
        None
    }

    pub(crate) fn apply_fund_closed(
        &mut self,
        issuer: &AccountId,
        payouts: &BTreeMap<AccountId, u64>,
    ) -> Result<()> {
        self.require_fi(issuer)?;
        if let Some(reason) = self.closing_blockers() {
            return Err(Error::FundOpen(reason));
        }
        let expected = payout_table(&self.shares, self.investors.supply())?;
        if expected != *payouts {
            return Err(Error::Validation("payout table mismatch".into()));
        }
        let holders: Vec<AccountId> = self
            .accounts
            .values()
            .filter(|a| a.balances.investors > 0)
            .map(|a| a.id.clone())
            .collect();
        for id in holders {
            let amount = self.balance(&id, DaoId::Investors);
            self.burn(DaoId::Investors, &id, amount);
        }
        self.fund = FundStatus::Closed;
        self.payouts = payouts.clone();
        Ok(())
    }

    fn mint(&mut self, dao: DaoId, to: &AccountId, amount: u64) {
        *self
            .accounts
            .get_mut(to)
            .expect("caller checked account")
            .balances
            .get_mut(dao) += amount;
        self.pool_mut(dao).minted += amount;
    }

    fn burn(&mut self, dao: DaoId, from: &AccountId, amount: u64) {
        *self
            .accounts
            .get_mut(from)
            .expect("caller checked account")
            .balances
            .get_mut(dao) -= amount;
        self.pool_mut(dao).burned += amount;
    }
}

/// Largest-remainder split of the fund at closing.
///
/// Each investor gets its quota back plus `(T'' - T') × quota / Σ quota`.
/// Floors are taken first; the leftover units go one each to the largest
/// fractional remainders, ties broken by ascending account id. The payouts
/// sum to `closing_supply` exactly.
pub fn payout_table(
    shares: &BTreeMap<AccountId, u64>,
    closing_supply: u64,
) -> Result<BTreeMap<AccountId, u64>> {
    let opening: u64 = shares.values().sum();
    if shares.is_empty() || opening == 0 {
        return if closing_supply == 0 {
            Ok(BTreeMap::new())
        } else {
            Err(Error::FundOpen(format!(
                "{closing_supply} tokens but no investor quotas"
            )))
        };
    }
    if closing_supply < opening {
        return Err(Error::Invariant(format!(
            "closing supply {closing_supply} below opening {opening}"
        )));
    }
    let earnings = u128::from(closing_supply - opening);
    let total = u128::from(opening);

    let mut table = BTreeMap::new();
    let mut remainders = Vec::with_capacity(shares.len());
    let mut distributed: u128 = 0;
    for (id, &quota) in shares {
        let numer = earnings * u128::from(quota);
        let whole = numer / total;
        distributed += whole;
        remainders.push((numer % total, id.clone()));
        table.insert(id.clone(), quota + whole as u64);
    }
    let mut leftover = earnings - distributed;
    // BTreeMap iteration already orders ids ascending; the stable sort keeps
    // that order among equal remainders.
    remainders.sort_by_key(|r| std::cmp::Reverse(r.0));
    for (_, id) in remainders {
        if leftover == 0 {
            break;
        }
        *table.get_mut(&id).expect("present") += 1;
        leftover -= 1;
    }
    Ok(table)
}

// ---- operations ---------------------------------------------------------------

impl Engine {
    pub fn open_account(&mut self, id: impl Into<AccountId>, role: Role) -> Result<AccountId> {
        let id = id.into();
        self.commit(
            id.as_str(),
            EventBody::AccountOpened {
                account: id.clone(),
                role,
                soa_cap: None,
            },
        )?;
        Ok(id)
    }

    pub fn open_general_contractor(
        &mut self,
        id: impl Into<AccountId>,
        soa_cap: u64,
    ) -> Result<AccountId> {
        let id = id.into();
        self.commit(
            id.as_str(),
            EventBody::AccountOpened {
                account: id.clone(),
                role: Role::GeneralContractor,
                soa_cap: Some(soa_cap),
            },
        )?;
        Ok(id)
    }

    /// Deposits fiat for an investor: one Investors-DAO token per euro.
    pub fn mint_investor(&mut self, issuer: &AccountId, account: &AccountId, amount: u64) -> Result<()> {
        self.commit(
            issuer.as_str(),
            EventBody::InvestorMinted {
                account: account.clone(),
                amount,
            },
        )
    }

    /// Freezes `floor(rate × requested)` investor tokens and mints the same
    /// amount of operator tokens to the contractor under a fresh credit code.
    pub fn freeze_and_mint(
        &mut self,
        issuer: &AccountId,
        gc: &AccountId,
        requested_work_value: u64,
        discount_rate: Rate,
        workflow: Option<&WorkflowId>,
    ) -> Result<CreditCode> {
        if requested_work_value == 0 {
            return Err(Error::Validation("requested work value must be positive".into()));
        }
        let frozen = discount_rate.apply_floor(requested_work_value);
        let available = self.state().ledger.investors.free();
        if frozen > available {
            return Err(Error::Coverage {
                requested: frozen,
                available,
            });
        }
        if self.enforces_constraints() {
            let state = self.state();
            let period = state.period_of(self.clock());
            let (forecast, demand) = match state.demand.get(&period) {
                Some(book) => (book.forecast, book.demand),
                None => (state.ledger.investors.free(), 0),
            };
            if demand + frozen > forecast {
                return Err(Error::constraint(
                    ConstraintId::C2,
                    format!(
                        "period {period} demand {} would exceed forecast {forecast}",
                        demand + frozen
                    ),
                ));
            }
        }
        let ledger = &self.state().ledger;
        let code = ledger.next_credit_code();
        let face_value = self.state().params.accrual_factor.apply_floor(requested_work_value);
        self.commit(
            issuer.as_str(),
            EventBody::FreezeMinted {
                credit_code: code.clone(),
                gc: gc.clone(),
                requested_work_value,
                discount_rate,
                frozen_amount: frozen,
                face_value,
                workflow: workflow.cloned(),
            },
        )?;
        Ok(code)
    }

    /// Moves operator tokens. A zero amount is a no-op and logs nothing.
    ///
    /// When the payer is a workflow escrow the payment counts against the
    /// anticipation received for the workflow's current state.
    pub fn transfer_operator(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        amount: u64,
        invoice_ref: &str,
    ) -> Result<()> {
        if amount == 0 {
            return Ok(());
        }
        if self.enforces_constraints() {
            if let Some(wf) = self.state().workflow_by_escrow(from) {
                let state = wf.current()?;
                let sent = wf.sent(state) + amount;
                let received = wf.received(state);
                if sent > received {
                    return Err(Error::constraint(
                        ConstraintId::C3,
                        format!(
                            "{} would send {sent} in {state:?} against {received} received",
                            wf.id
                        ),
                    ));
                }
            }
        }
        self.commit(
            from.as_str(),
            EventBody::OperatorTransferred {
                from: from.clone(),
                to: to.clone(),
                amount,
                invoice_ref: invoice_ref.to_owned(),
            },
        )
    }

    /// Burns operator tokens held by `holder` against one link and moves
    /// the matching frozen investor tokens to awaiting sale.
    pub fn burn_and_release(
        &mut self,
        issuer: &AccountId,
        holder: &AccountId,
        code: &CreditCode,
        amount: u64,
    ) -> Result<()> {
        self.commit(
            issuer.as_str(),
            EventBody::BurnReleased {
                holder: holder.clone(),
                credit_code: code.clone(),
                amount,
            },
        )
    }

    /// Redeems the holder's whole operator balance against active links,
    /// oldest first. Returns the amount redeemed.
    pub fn redeem_all(&mut self, issuer: &AccountId, holder: &AccountId) -> Result<u64> {
        let mut remaining = self.state().ledger.balance(holder, DaoId::Operators);
        let total = remaining;
        while remaining > 0 {
            let (code, available) = self
                .state()
                .ledger
                .active_links()
                .map(|l| (l.credit_code.clone(), l.operator_amount))
                .next()
                .ok_or_else(|| Error::Invariant("operator tokens without active link".into()))?;
            let amount = remaining.min(available);
            self.burn_and_release(issuer, holder, &code, amount)?;
            remaining -= amount;
        }
        Ok(total)
    }

    pub fn mature_credit(&mut self, code: &CreditCode) -> Result<()> {
        self.commit(
            "system",
            EventBody::CreditMatured {
                credit_code: code.clone(),
            },
        )
    }

    /// Sells a matured credit. The amount awaiting sale is released and any
    /// excess over the frozen amount is minted to the financial institution.
    /// A price below the frozen amount is recorded as a shortfall.
    pub fn sell_credit(
        &mut self,
        issuer: &AccountId,
        code: &CreditCode,
        sale_price: u64,
    ) -> Result<SaleOutcome> {
        let outcome = self.state().ledger.sale_outcome(code, sale_price)?;
        if outcome.shortfall > 0 {
            log::warn!("credit {code} sold at a loss of {}", outcome.shortfall);
        }
        self.commit(
            issuer.as_str(),
            EventBody::CreditSold {
                credit_code: code.clone(),
                sale_price,
                outcome,
            },
        )?;
        Ok(outcome)
    }

    pub fn write_off_credit(&mut self, issuer: &AccountId, code: &CreditCode) -> Result<()> {
        self.commit(
            issuer.as_str(),
            EventBody::CreditWrittenOff {
                credit_code: code.clone(),
            },
        )
    }

    /// Pays every investor its quota plus its share of the earnings and
    /// burns the whole Investors DAO.
    pub fn close_fund_and_payout(&mut self, issuer: &AccountId) -> Result<BTreeMap<AccountId, u64>> {
        let ledger = &self.state().ledger;
        ledger.require_fi(issuer)?;
        if let Some(reason) = ledger.closing_blockers() {
            return Err(Error::FundOpen(reason));
        }
        let opening = ledger.opening_supply();
        let closing = ledger.investors.supply();
        let payouts = payout_table(&ledger.shares, closing)?;
        self.commit(
            issuer.as_str(),
            EventBody::FundClosed {
                opening_supply: opening,
                closing_supply: closing,
                payouts: payouts.clone(),
            },
        )?;
        Ok(payouts)
    }
}
