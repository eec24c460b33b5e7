//! Secured Fiscal Credits Model simulator.
//!
//! A dual-DAO token ledger for tax-credit funded renovation work, the
//! paperwork automaton each project goes through, the constraint knowledge
//! base, fraud heuristics and a seeded multi-agent scheduler that drives it
//! all. Every mutation goes through [`Engine`] and lands in a hash-chained
//! event log that replays to the same state.

pub mod agents;
pub mod cli;
pub mod config;
pub mod constraints;
pub mod engine;
pub mod error;
pub mod event;
pub mod fraud;
pub mod ledger;
pub mod report;
pub mod state;
pub mod types;
pub mod workflow;

pub use constraints::{check_all, ConstraintId, Violation};
pub use engine::{Engine, ReplayError, ReplayFailure};
pub use error::{Error, Result};
pub use event::{EventBody, EventRecord};
pub use state::{Params, State};
pub use types::{AccountId, CreditCode, DaoId, Rate, Role, WorkflowId};
pub use workflow::{AsseverationKind, WorkflowState};
