//! Append-only event log.
//!
//! One JSON object per line:
//! `{"seq":..,"tick":..,"kind":..,"actor":..,"payload":{..},"state_hash":..}`.
//!
//! `state_hash` chains the log: it is the SHA-256 (lowercase hex) of
//!
//! 1. the previous record's `state_hash` (64 zeros before the first record),
//! 2. a newline, then the record itself without `state_hash`, serialized as
//!    compact JSON with the field order above and payload keys sorted,
//! 3. a newline, then the compact JSON snapshot of the state after the
//!    event is applied.
//!
//! Changing any byte of a record, or any state the record produced, changes
//! that record's hash and every hash after it.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ledger::SaleOutcome;
use crate::state::{Params, State};
use crate::types::{AccountId, CreditCode, Rate, Role, WorkflowId};
use crate::workflow::{AsseverationKind, WorkflowState};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Genesis {
        params: Params,
        seed: Option<u64>,
        config_digest: Option<String>,
    },
    AccountOpened {
        account: AccountId,
        role: Role,
        soa_cap: Option<u64>,
    },
    InvestorMinted {
        account: AccountId,
        amount: u64,
    },
    FreezeMinted {
        credit_code: CreditCode,
        gc: AccountId,
        requested_work_value: u64,
        discount_rate: Rate,
        frozen_amount: u64,
        face_value: u64,
        workflow: Option<WorkflowId>,
    },
    OperatorTransferred {
        from: AccountId,
        to: AccountId,
        amount: u64,
        invoice_ref: String,
    },
    BurnReleased {
        holder: AccountId,
        credit_code: CreditCode,
        amount: u64,
    },
    CreditMatured {
        credit_code: CreditCode,
    },
    CreditSold {
        credit_code: CreditCode,
        sale_price: u64,
        outcome: SaleOutcome,
    },
    CreditWrittenOff {
        credit_code: CreditCode,
    },
    FundClosed {
        opening_supply: u64,
        closing_supply: u64,
        payouts: BTreeMap<AccountId, u64>,
    },
    WorkflowOpened {
        workflow: WorkflowId,
        client: AccountId,
        gc: AccountId,
        engineer: AccountId,
        accountant: AccountId,
        total_value: u64,
    },
    AnticipationPaid {
        workflow: WorkflowId,
        target_state: WorkflowState,
        amount: u64,
        invoice_ref: String,
    },
    Asseverated {
        workflow: WorkflowId,
        state: WorkflowState,
        kind: AsseverationKind,
        signer: AccountId,
    },
    WorkflowAdvanced {
        workflow: WorkflowId,
        from: WorkflowState,
        to: WorkflowState,
    },
    AgentWarning {
        agent: String,
        detail: String,
    },
}

impl EventBody {
    fn split(&self) -> (String, serde_json::Value) {
        let value = serde_json::to_value(self).expect("event serializes");
        let serde_json::Value::Object(mut map) = value else {
            unreachable!("adjacently tagged enum is an object")
        };
        let kind = match map.remove("kind") {
            Some(serde_json::Value::String(kind)) => kind,
            _ => unreachable!("tag present"),
        };
        let payload = map.remove("payload").unwrap_or(serde_json::Value::Null);
        (kind, payload)
    }

    pub fn kind(&self) -> String {
        self.split().0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub tick: u64,
    pub kind: String,
    pub actor: String,
    pub payload: serde_json::Value,
    pub state_hash: String,
}

#[derive(Serialize)]
struct RecordCore<'a> {
    seq: u64,
    tick: u64,
    kind: &'a str,
    actor: &'a str,
    payload: &'a serde_json::Value,
}

impl EventRecord {
    pub(crate) fn unsealed(seq: u64, tick: u64, actor: &str, body: &EventBody) -> Self {
        let (kind, payload) = body.split();
        Self {
            seq,
            tick,
            kind,
            actor: actor.to_owned(),
            payload,
            state_hash: String::new(),
        }
    }

    /// Decodes the typed body from `kind` and `payload`.
    pub fn body(&self) -> Result<EventBody, serde_json::Error> {
        let mut map = serde_json::Map::new();
        map.insert("kind".into(), serde_json::Value::String(self.kind.clone()));
        if !self.payload.is_null() {
            map.insert("payload".into(), self.payload.clone());
        }
        serde_json::from_value(serde_json::Value::Object(map))
    }

    /// Hash binding this record to its predecessor and to the post-state.
    pub fn chain_hash(&self, prev_hash: &str, post_state: &State) -> String {
        let core = RecordCore {
            seq: self.seq,
            tick: self.tick,
            kind: &self.kind,
            actor: &self.actor,
            payload: &self.payload,
        };
        let mut hasher = Sha256::new();
        hasher.update(prev_hash.as_bytes());
        hasher.update(b"\n");
        hasher.update(serde_json::to_vec(&core).expect("record serializes"));
        hasher.update(b"\n");
        hasher.update(post_state.canonical_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Writes one record per line.
pub fn write_log<W: Write>(mut out: W, records: &[EventRecord]) -> std::io::Result<()> {
    for record in records {
        out.write_all(record.to_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// A line that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    /// Zero-based line index, which equals `seq` in a well-formed log.
    pub line: u64,
    pub message: String,
}

/// Reads a log. Blank lines are skipped; the first undecodable line is
/// reported by index.
pub fn read_log<R: BufRead>(input: R) -> std::io::Result<Result<Vec<EventRecord>, ParseFailure>> {
    let mut records = Vec::new();
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EventRecord>(&line) {
            Ok(record) => records.push(record),
            Err(err) => {
                return Ok(Err(ParseFailure {
                    line: index as u64,
                    message: err.to_string(),
                }))
            }
        }
    }
    Ok(Ok(records))
}

/// Bytes of a log as written to disk.
pub fn log_bytes(records: &[EventRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_log(&mut out, records).expect("writing to a Vec cannot fail");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_round_trips_through_record() {
        let body = EventBody::OperatorTransferred {
            from: "gc".into(),
            to: "sup".into(),
            amount: 30,
            invoice_ref: "INV-1".into(),
        };
        let record = EventRecord::unsealed(3, 7, "gc", &body);
        assert_eq!(record.kind, "operator_transferred");
        assert_eq!(record.body().unwrap(), body);
        let line = record.to_line();
        assert!(line.starts_with(r#"{"seq":3,"tick":7,"kind":"operator_transferred","actor":"gc","payload":{"#));
    }

    #[test]
    fn unknown_kind_fails_to_decode() {
        let mut record = EventRecord::unsealed(
            0,
            0,
            "x",
            &EventBody::CreditMatured {
                credit_code: "CR-000001".into(),
            },
        );
        record.kind = "teleport".into();
        assert!(record.body().is_err());
    }

    #[test]
    fn read_reports_bad_line_index() {
        let text = "{\"seq\":0}\n";
        let parsed = read_log(text.as_bytes()).unwrap();
        assert_eq!(parsed.unwrap_err().line, 0);
    }
}
