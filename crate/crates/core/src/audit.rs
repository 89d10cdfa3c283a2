//! Per-slot invariant checks shared by every engine.

use serde::{Deserialize, Serialize};

/// Violation counts accumulated over a run, plus the first one seen.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditLog {
    pub conservation: u64,
    pub negative: u64,
    pub fifo: u64,
    pub token_bounds: u64,
    pub conflicts: u64,
    pub maximality: u64,
    pub first: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Conservation,
    Negative,
    Fifo,
    TokenBounds,
    Conflicts,
    Maximality,
}

impl AuditLog {
    pub fn total(&self) -> u64 {
        self.conservation
            + self.negative
            + self.fifo
            + self.token_bounds
            + self.conflicts
            + self.maximality
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }

    pub fn record(&mut self, check: Check, slot: u64, what: &str) {
        let counter = match check {
            Check::Conservation => &mut self.conservation,
            Check::Negative => &mut self.negative,
            Check::Fifo => &mut self.fifo,
            Check::TokenBounds => &mut self.token_bounds,
            Check::Conflicts => &mut self.conflicts,
            Check::Maximality => &mut self.maximality,
        };
        *counter += 1;
        if self.first.is_none() {
            self.first = Some(format!("slot {slot}: {what}"));
        }
    }

    /// Records `check` when `ok` is false.
    pub fn expect(&mut self, ok: bool, check: Check, slot: u64, what: &str) {
        if !ok {
            self.record(check, slot, what);
        }
    }
}
