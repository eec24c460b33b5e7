use thiserror::Error;

use crate::constraints::ConstraintId;
use crate::types::{AccountId, CreditCode, Role, WorkflowId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("account {account} has role {actual}, expected {expected}")]
    Role {
        account: AccountId,
        actual: Role,
        expected: String,
    },
    #[error("investor fund is not accepting deposits")]
    FundClosed,
    #[error("fund cannot close: {0}")]
    FundOpen(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("free investor supply {available} cannot cover {requested}")]
    Coverage { requested: u64, available: u64 },
    #[error("constraint {id} violated: {detail}")]
    Constraint { id: ConstraintId, detail: String },
    #[error("account {account} holds {available}, needs {requested}")]
    InsufficientBalance {
        account: AccountId,
        requested: u64,
        available: u64,
    },
    #[error("freeze link {code}: {detail}")]
    Link { code: CreditCode, detail: String },
    #[error("tax credit {0} has not matured")]
    Maturity(CreditCode),
    #[error("workflow {workflow}: {detail}")]
    Sequence { workflow: WorkflowId, detail: String },
    #[error("duplicate: {0}")]
    Duplicate(String),
    #[error("workflow {workflow} is not active: {detail}")]
    State { workflow: WorkflowId, detail: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("unknown workflow {0}")]
    UnknownWorkflow(WorkflowId),
    #[error("unknown credit {0}")]
    UnknownCredit(CreditCode),
    #[error("ledger invariant broken: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn constraint(id: ConstraintId, detail: impl Into<String>) -> Self {
        Error::Constraint {
            id,
            detail: detail.into(),
        }
    }

    pub(crate) fn role(account: &AccountId, actual: Role, expected: impl Into<String>) -> Self {
        Error::Role {
            account: account.clone(),
            actual,
            expected: expected.into(),
        }
    }

    pub(crate) fn link(code: &CreditCode, detail: impl Into<String>) -> Self {
        Error::Link {
            code: code.clone(),
            detail: detail.into(),
        }
    }
}
