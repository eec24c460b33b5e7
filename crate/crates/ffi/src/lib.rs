//! C ABI over `sfcm-core`.
//!
//! Engines and finished runs are opaque handles. Every fallible call returns
//! an [`SfcmStatus`]; on failure the message is available from
//! [`sfcm_last_error_message`] on the same thread. Strings handed out by the
//! library are NUL-terminated UTF-8 and must be released with
//! [`sfcm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sfcm_core::agents::{run, RunOutcome};
use sfcm_core::config::ScenarioConfig;
use sfcm_core::event::{log_bytes, read_log};
use sfcm_core::report::RunReport;
use sfcm_core::{check_all, AccountId, CreditCode, DaoId, Engine, Error, Params, Rate, Role};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfcmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Role = 4,
    Coverage = 5,
    Constraint = 6,
    InsufficientBalance = 7,
    Link = 8,
    Maturity = 9,
    Sequence = 10,
    State = 11,
    Duplicate = 12,
    NotFound = 13,
    Fund = 14,
    Config = 15,
    Integrity = 16,
    Internal = 17,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfcmRole {
    Investor = 0,
    Customer = 1,
    FinancialInstitution = 2,
    GeneralContractor = 3,
    SubContractor = 4,
    Supplier = 5,
    DesignArchitect = 6,
    TaxAuditor = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfcmDao {
    Investors = 0,
    Operators = 1,
}

/// Opaque engine handle.
pub struct SfcmEngine {
    engine: Engine,
}

/// Opaque handle to a finished scenario run.
pub struct SfcmRun {
    outcome: RunOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> SfcmStatus {
    match err {
        Error::Role { .. } => SfcmStatus::Role,
        Error::FundClosed | Error::FundOpen(_) => SfcmStatus::Fund,
        Error::Validation(_) | Error::InsufficientData(_) => SfcmStatus::Validation,
        Error::Coverage { .. } => SfcmStatus::Coverage,
        Error::Constraint { .. } => SfcmStatus::Constraint,
        Error::InsufficientBalance { .. } => SfcmStatus::InsufficientBalance,
        Error::Link { .. } => SfcmStatus::Link,
        Error::Maturity(_) => SfcmStatus::Maturity,
        Error::Sequence { .. } => SfcmStatus::Sequence,
        Error::State { .. } => SfcmStatus::State,
        Error::Duplicate(_) => SfcmStatus::Duplicate,
        Error::UnknownAccount(_) | Error::UnknownWorkflow(_) | Error::UnknownCredit(_) => SfcmStatus::NotFound,
        Error::Config(_) => SfcmStatus::Config,
        Error::Invariant(_) => SfcmStatus::Internal,
    }
}

/// Runs `body`, translating errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), SfcmStatus>) -> SfcmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SfcmStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            SfcmStatus::Internal
        }
    }
}

fn fail(err: Error) -> SfcmStatus {
    set_error(err.to_string());
    status_of(&err)
}

unsafe fn text<'a>(ptr: *const c_char) -> Result<&'a str, SfcmStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(SfcmStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        SfcmStatus::InvalidUtf8
    })
}

unsafe fn engine<'a>(handle: *mut SfcmEngine) -> Result<&'a mut Engine, SfcmStatus> {
    handle.as_mut().map(|h| &mut h.engine).ok_or_else(|| {
        set_error("null engine handle");
        SfcmStatus::NullArgument
    })
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), SfcmStatus> {
    if out.is_null() {
        set_error("null output pointer");
        return Err(SfcmStatus::NullArgument);
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, value: String) -> Result<(), SfcmStatus> {
    let owned = CString::new(value).map_err(|_| {
        set_error("output contains a NUL byte");
        SfcmStatus::Internal
    })?;
    write_out(out, owned.into_raw())
}

fn role(r: SfcmRole) -> Role {
    match r {
        SfcmRole::Investor => Role::Investor,
        SfcmRole::Customer => Role::Customer,
        SfcmRole::FinancialInstitution => Role::FinancialInstitution,
        SfcmRole::GeneralContractor => Role::GeneralContractor,
        SfcmRole::SubContractor => Role::SubContractor,
        SfcmRole::Supplier => Role::Supplier,
        SfcmRole::DesignArchitect => Role::DesignArchitect,
        SfcmRole::TaxAuditor => Role::TaxAuditor,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn sfcm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sfcm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an engine with default parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sfcm_engine_new(out: *mut *mut SfcmEngine) -> SfcmStatus {
    guard(|| {
        let engine = Engine::new(Params::default()).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(SfcmEngine { engine })))
    })
}

/// # Safety
/// `handle` must come from [`sfcm_engine_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sfcm_engine_free(handle: *mut SfcmEngine) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Moves the engine clock forward to `tick`.
///
/// # Safety
/// `handle` must be a live engine.
#[no_mangle]
pub unsafe extern "C" fn sfcm_advance_clock(handle: *mut SfcmEngine, tick: u64) -> SfcmStatus {
    guard(|| engine(handle)?.advance_clock(tick).map_err(fail))
}

/// # Safety
/// `handle` must be a live engine; `account` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sfcm_open_account(
    handle: *mut SfcmEngine,
    account: *const c_char,
    account_role: SfcmRole,
) -> SfcmStatus {
    guard(|| {
        let id = text(account)?;
        engine(handle)?.open_account(id, role(account_role)).map(drop).map_err(fail)
    })
}

/// # Safety
/// `handle` must be a live engine; `account` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sfcm_open_general_contractor(
    handle: *mut SfcmEngine,
    account: *const c_char,
    soa_cap: u64,
) -> SfcmStatus {
    guard(|| {
        let id = text(account)?;
        engine(handle)?.open_general_contractor(id, soa_cap).map(drop).map_err(fail)
    })
}

/// # Safety
/// `handle` must be a live engine; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sfcm_mint_investor(
    handle: *mut SfcmEngine,
    issuer: *const c_char,
    account: *const c_char,
    amount: u64,
) -> SfcmStatus {
    guard(|| {
        let (issuer, account) = (AccountId::from(text(issuer)?), AccountId::from(text(account)?));
        engine(handle)?.mint_investor(&issuer, &account, amount).map_err(fail)
    })
}

/// Freezes `floor(rate_ppm × requested / 10^6)` investor tokens and mints
/// as many operator tokens to `gc`. The new credit code is written to
/// `out_code`.
///
/// # Safety
/// `handle` must be a live engine; strings NUL-terminated; `out_code` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_freeze_and_mint(
    handle: *mut SfcmEngine,
    issuer: *const c_char,
    gc: *const c_char,
    requested_work_value: u64,
    rate_ppm: u64,
    out_code: *mut *mut c_char,
) -> SfcmStatus {
    guard(|| {
        let (issuer, gc) = (AccountId::from(text(issuer)?), AccountId::from(text(gc)?));
        let code = engine(handle)?
            .freeze_and_mint(&issuer, &gc, requested_work_value, Rate::from_ppm(rate_ppm), None)
            .map_err(fail)?;
        write_string(out_code, code.0)
    })
}

/// # Safety
/// `handle` must be a live engine; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sfcm_transfer(
    handle: *mut SfcmEngine,
    from: *const c_char,
    to: *const c_char,
    amount: u64,
    invoice_ref: *const c_char,
) -> SfcmStatus {
    guard(|| {
        let (from, to) = (AccountId::from(text(from)?), AccountId::from(text(to)?));
        let invoice = text(invoice_ref)?;
        engine(handle)?.transfer_operator(&from, &to, amount, invoice).map_err(fail)
    })
}

/// Burns the holder's whole operator balance; the amount is written to
/// `out_amount`.
///
/// # Safety
/// `handle` must be a live engine; strings NUL-terminated; `out_amount` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_redeem_all(
    handle: *mut SfcmEngine,
    issuer: *const c_char,
    holder: *const c_char,
    out_amount: *mut u64,
) -> SfcmStatus {
    guard(|| {
        let (issuer, holder) = (AccountId::from(text(issuer)?), AccountId::from(text(holder)?));
        let amount = engine(handle)?.redeem_all(&issuer, &holder).map_err(fail)?;
        write_out(out_amount, amount)
    })
}

/// # Safety
/// `handle` must be a live engine; `code` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sfcm_mature_credit(handle: *mut SfcmEngine, code: *const c_char) -> SfcmStatus {
    guard(|| {
        let code = CreditCode::from(text(code)?);
        engine(handle)?.mature_credit(&code).map_err(fail)
    })
}

/// Sells a matured credit; the profit minted to investors is written to
/// `out_profit`.
///
/// # Safety
/// `handle` must be a live engine; strings NUL-terminated; `out_profit` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_sell_credit(
    handle: *mut SfcmEngine,
    issuer: *const c_char,
    code: *const c_char,
    sale_price: u64,
    out_profit: *mut u64,
) -> SfcmStatus {
    guard(|| {
        let (issuer, code) = (AccountId::from(text(issuer)?), CreditCode::from(text(code)?));
        let outcome = engine(handle)?.sell_credit(&issuer, &code, sale_price).map_err(fail)?;
        write_out(out_profit, outcome.profit)
    })
}

/// Closes the fund. The payout table is written to `out_json` as a JSON
/// object mapping investor id to amount.
///
/// # Safety
/// `handle` must be a live engine; `issuer` NUL-terminated; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_close_fund(
    handle: *mut SfcmEngine,
    issuer: *const c_char,
    out_json: *mut *mut c_char,
) -> SfcmStatus {
    guard(|| {
        let issuer = AccountId::from(text(issuer)?);
        let payouts = engine(handle)?.close_fund_and_payout(&issuer).map_err(fail)?;
        write_string(out_json, serde_json::to_string(&payouts).expect("payouts serialize"))
    })
}

/// # Safety
/// `handle` must be a live engine; `account` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_balance(
    handle: *mut SfcmEngine,
    account: *const c_char,
    dao: SfcmDao,
    out: *mut u64,
) -> SfcmStatus {
    guard(|| {
        let id = AccountId::from(text(account)?);
        let engine = engine(handle)?;
        engine.state().ledger.account(&id).map_err(fail)?;
        let dao = match dao {
            SfcmDao::Investors => DaoId::Investors,
            SfcmDao::Operators => DaoId::Operators,
        };
        write_out(out, engine.state().ledger.balance(&id, dao))
    })
}

/// Writes the event log (one JSON record per line) to `out_jsonl`.
///
/// # Safety
/// `handle` must be a live engine; `out_jsonl` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_event_log(handle: *mut SfcmEngine, out_jsonl: *mut *mut c_char) -> SfcmStatus {
    guard(|| {
        let bytes = log_bytes(engine(handle)?.log());
        write_string(out_jsonl, String::from_utf8(bytes).expect("log is UTF-8"))
    })
}

/// Number of constraint violations in the engine's current state.
///
/// # Safety
/// `handle` must be a live engine; `out_count` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_violation_count(handle: *mut SfcmEngine, out_count: *mut u64) -> SfcmStatus {
    guard(|| {
        let count = check_all(engine(handle)?.state()).len() as u64;
        write_out(out_count, count)
    })
}

/// Replays a log and verifies its hash chain. On success the number of
/// constraint violations in the final state is written to
/// `out_violations`. A broken chain returns `SFCM_STATUS_INTEGRITY`.
///
/// # Safety
/// `jsonl` must be NUL-terminated; `out_violations` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_replay_verify(jsonl: *const c_char, out_violations: *mut u64) -> SfcmStatus {
    guard(|| {
        let input = text(jsonl)?;
        let records = match read_log(input.as_bytes()) {
            Ok(Ok(records)) => records,
            Ok(Err(failure)) => {
                set_error(format!("seq {}: {}", failure.line, failure.message));
                return Err(SfcmStatus::Integrity);
            }
            Err(err) => {
                set_error(err.to_string());
                return Err(SfcmStatus::Internal);
            }
        };
        let engine = Engine::replay(&records).map_err(|err| {
            set_error(err.to_string());
            SfcmStatus::Integrity
        })?;
        write_out(out_violations, check_all(engine.state()).len() as u64)
    })
}

/// Runs a scenario. `config_toml` may be NULL for the default scenario.
///
/// # Safety
/// `config_toml` must be NULL or NUL-terminated; `out_run` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_run_scenario(config_toml: *const c_char, out_run: *mut *mut SfcmRun) -> SfcmStatus {
    guard(|| {
        let config = if config_toml.is_null() {
            ScenarioConfig::default()
        } else {
            ScenarioConfig::from_toml(text(config_toml)?).map_err(fail)?
        };
        let outcome = run(&config).map_err(fail)?;
        write_out(out_run, Box::into_raw(Box::new(SfcmRun { outcome })))
    })
}

/// # Safety
/// `run` must come from [`sfcm_run_scenario`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sfcm_run_free(run: *mut SfcmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

unsafe fn finished<'a>(run: *const SfcmRun) -> Result<&'a RunOutcome, SfcmStatus> {
    run.as_ref().map(|r| &r.outcome).ok_or_else(|| {
        set_error("null run handle");
        SfcmStatus::NullArgument
    })
}

/// # Safety
/// `run` must be a live run handle; `out_jsonl` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_run_event_log(run: *const SfcmRun, out_jsonl: *mut *mut c_char) -> SfcmStatus {
    guard(|| {
        let bytes = log_bytes(&finished(run)?.log);
        write_string(out_jsonl, String::from_utf8(bytes).expect("log is UTF-8"))
    })
}

/// # Safety
/// `run` must be a live run handle; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn sfcm_run_report(run: *const SfcmRun, out_json: *mut *mut c_char) -> SfcmStatus {
    guard(|| {
        let outcome = finished(run)?;
        write_string(out_json, RunReport::build(&outcome.state, &outcome.log).to_json())
    })
}
