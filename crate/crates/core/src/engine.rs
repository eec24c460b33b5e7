//! Single-writer command path: every mutation is validated, applied to the
//! state, sealed with its chain hash and appended to the log.

use std::fmt;

use crate::error::{Error, Result};
use crate::event::{EventBody, EventRecord, GENESIS_HASH};
use crate::state::{Params, RunMeta, State};

#[derive(Debug, Clone)]
pub struct Engine {
    state: State,
    log: Vec<EventRecord>,
    clock: u64,
    enforce_constraints: bool,
}

impl Engine {
    pub fn new(params: Params) -> Result<Self> {
        Self::with_meta(params, None, None)
    }

    pub fn with_meta(params: Params, seed: Option<u64>, config_digest: Option<String>) -> Result<Self> {
        params.validate()?;
        let body = EventBody::Genesis {
            params: params.clone(),
            seed,
            config_digest: config_digest.clone(),
        };
        let state = State::genesis(params, RunMeta { seed, config_digest });
        let mut record = EventRecord::unsealed(0, 0, "system", &body);
        record.state_hash = record.chain_hash(GENESIS_HASH, &state);
        Ok(Self {
            state,
            log: vec![record],
            clock: 0,
            enforce_constraints: true,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn into_parts(self) -> (State, Vec<EventRecord>) {
        (self.state, self.log)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Moves the clock forward. Events committed afterwards carry `tick`.
    pub fn advance_clock(&mut self, tick: u64) -> Result<()> {
        if tick < self.clock {
            return Err(Error::Validation(format!(
                "clock cannot move back from {} to {tick}",
                self.clock
            )));
        }
        self.clock = tick;
        Ok(())
    }

    pub fn enforces_constraints(&self) -> bool {
        self.enforce_constraints
    }

    /// Turns the inline knowledge-base checks on or off. With checks off the
    /// engine still enforces ledger invariants; it is how fault fixtures for
    /// the offline audit are produced.
    pub fn set_constraint_enforcement(&mut self, enabled: bool) {
        self.enforce_constraints = enabled;
    }

    /// Appends a raw event with no operation-level checks beyond what the
    /// state fold enforces.
    pub fn inject(&mut self, actor: &str, body: EventBody) -> Result<()> {
        self.commit(actor, body)
    }

    pub(crate) fn commit(&mut self, actor: &str, body: EventBody) -> Result<()> {
        let mut next = self.state.clone();
        next.apply(self.clock, actor, &body)?;
        debug_assert_eq!(next.ledger.check_invariants(), Ok(()));
        let mut record = EventRecord::unsealed(self.log.len() as u64, self.clock, actor, &body);
        let prev = &self.log.last().expect("genesis present").state_hash;
        record.state_hash = record.chain_hash(prev, &next);
        self.state = next;
        self.log.push(record);
        Ok(())
    }

    /// Rebuilds an engine from a log, checking sequence numbers and every
    /// chain hash.
    pub fn replay(records: &[EventRecord]) -> std::result::Result<Self, ReplayError> {
        let first = records.first().ok_or(ReplayError {
            seq: 0,
            failure: ReplayFailure::Empty,
        })?;
        let fail = |seq, failure| ReplayError { seq, failure };
        let (params, seed, config_digest) = match first.body() {
            Ok(EventBody::Genesis {
                params,
                seed,
                config_digest,
            }) => (params, seed, config_digest),
            Ok(_) => return Err(fail(first.seq, ReplayFailure::MissingGenesis)),
            Err(err) => return Err(fail(first.seq, ReplayFailure::Decode(err.to_string()))),
        };
        if first.seq != 0 || first.tick != 0 {
            return Err(fail(first.seq, ReplayFailure::MissingGenesis));
        }
        let mut engine = Self::with_meta(params, seed, config_digest)
            .map_err(|err| fail(0, ReplayFailure::Apply(err)))?;
        engine.log[0].actor.clone_from(&first.actor);
        let genesis_hash = engine.log[0].chain_hash(GENESIS_HASH, &engine.state);
        engine.log[0].state_hash = genesis_hash;
        if engine.log[0] != *first {
            return Err(fail(0, ReplayFailure::HashMismatch));
        }

        for (index, record) in records.iter().enumerate().skip(1) {
            if record.seq != index as u64 {
                return Err(fail(record.seq, ReplayFailure::Sequence { expected: index as u64 }));
            }
            let body = record
                .body()
                .map_err(|err| fail(record.seq, ReplayFailure::Decode(err.to_string())))?;
            if matches!(body, EventBody::Genesis { .. }) {
                return Err(fail(record.seq, ReplayFailure::MissingGenesis));
            }
            engine
                .advance_clock(record.tick)
                .map_err(|err| fail(record.seq, ReplayFailure::Apply(err)))?;
            let mut next = engine.state.clone();
            next.apply(record.tick, &record.actor, &body)
                .map_err(|err| fail(record.seq, ReplayFailure::Apply(err)))?;
            if let Err(detail) = next.ledger.check_invariants() {
                return Err(fail(record.seq, ReplayFailure::Apply(Error::Invariant(detail))));
            }
            let prev = &engine.log.last().expect("genesis present").state_hash;
            let expected = record.chain_hash(prev, &next);
            if expected != record.state_hash {
                return Err(fail(record.seq, ReplayFailure::HashMismatch));
            }
            engine.state = next;
            engine.log.push(record.clone());
        }
        Ok(engine)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayFailure {
    Empty,
    MissingGenesis,
    Decode(String),
    Sequence { expected: u64 },
    Apply(Error),
    HashMismatch,
}

/// First point where a log stops being a faithful history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayError {
    pub seq: u64,
    pub failure: ReplayFailure,
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            ReplayFailure::Empty => write!(f, "log is empty"),
            ReplayFailure::MissingGenesis => write!(f, "seq {}: expected a single genesis record first", self.seq),
            ReplayFailure::Decode(msg) => write!(f, "seq {}: undecodable event: {msg}", self.seq),
            ReplayFailure::Sequence { expected } => {
                write!(f, "seq {}: out of order, expected {expected}", self.seq)
            }
            ReplayFailure::Apply(err) => write!(f, "seq {}: event rejected: {err}", self.seq),
            ReplayFailure::HashMismatch => write!(f, "seq {}: state hash mismatch", self.seq),
        }
    }
}

impl std::error::Error for ReplayError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Role;

    #[test]
    fn genesis_only_log_replays() {
        let engine = Engine::new(Params::default()).unwrap();
        let replayed = Engine::replay(engine.log()).unwrap();
        assert_eq!(replayed.state(), engine.state());
    }

    #[test]
    fn rejected_command_leaves_no_trace() {
        let mut engine = Engine::new(Params::default()).unwrap();
        engine.open_account("fi", Role::FinancialInstitution).unwrap();
        let before = engine.state().clone();
        assert!(engine.open_account("fi", Role::Investor).is_err());
        assert_eq!(engine.state(), &before);
        assert_eq!(engine.log().len(), 2);
    }

    #[test]
    fn clock_is_monotone() {
        let mut engine = Engine::new(Params::default()).unwrap();
        engine.advance_clock(5).unwrap();
        assert!(engine.advance_clock(4).is_err());
    }

    #[test]
    fn tampered_amount_is_caught_at_its_seq() {
        let mut engine = Engine::new(Params::default()).unwrap();
        let fi = engine.open_account("fi", Role::FinancialInstitution).unwrap();
        let inv = engine.open_account("inv", Role::Investor).unwrap();
        engine.mint_investor(&fi, &inv, 100).unwrap();
        engine.mint_investor(&fi, &inv, 5).unwrap();
        let mut log = engine.log().to_vec();
        log[3].payload["amount"] = serde_json::json!(101);
        let err = Engine::replay(&log).unwrap_err();
        assert_eq!(err.seq, 3);
        assert_eq!(err.failure, ReplayFailure::HashMismatch);
    }
}
