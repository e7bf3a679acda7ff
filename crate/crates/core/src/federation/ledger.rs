//! Byte-exact communication accounting.
//!
//! Every round each of the K clients downloads the global model and
//! uploads its local model. Masked parameters are not transmitted in either
//! direction; the mask itself is charged separately as overhead and never
//! netted against the savings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BYTES_PER_PARAM: u64 = 8;
/// Decimal megabyte.
pub const MEGABYTE: f64 = 1e6;

pub fn to_mb(bytes: u64) -> f64 {
    bytes as f64 / MEGABYTE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub round: usize,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub mask_overhead_bytes: u64,
    /// Bytes withheld per single model transfer because of the mask.
    pub pruned_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub model_size_bytes: u64,
    pub num_clients: usize,
    pub rounds: Vec<RoundTraffic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub rounds: usize,
    pub num_clients: usize,
    pub model_size_bytes: u64,
    pub unpruned_total_bytes: u64,
    pub actual_total_bytes: u64,
    pub saved_bytes: u64,
    pub mask_overhead_bytes: u64,
}

impl LedgerSummary {
    pub fn unpruned_total_mb(&self) -> f64 {
        to_mb(self.unpruned_total_bytes)
    }

    pub fn saved_mb(&self) -> f64 {
        to_mb(self.saved_bytes)
    }

    pub fn model_size_mb(&self) -> f64 {
        to_mb(self.model_size_bytes)
    }
}

impl CommLedger {
    pub fn new(model_size_bytes: u64, num_clients: usize) -> Self {
        Self {
            model_size_bytes,
            num_clients,
            rounds: Vec::new(),
        }
    }

    pub fn record_round(&mut self, round: usize, pruned_bytes: u64, mask_overhead_bytes: u64) -> Result<RoundTraffic> {
        if pruned_bytes > self.model_size_bytes {
            return Err(Error::Config(format!(
                "round {round}: pruned bytes {pruned_bytes} exceed model size {}",
                self.model_size_bytes
            )));
        }
        let per_direction = (self.model_size_bytes - pruned_bytes) * self.num_clients as u64;
        let rec = RoundTraffic {
            round,
            uplink_bytes: per_direction,
            downlink_bytes: per_direction,
            mask_overhead_bytes,
            pruned_bytes,
        };
        self.rounds.push(rec);
        Ok(rec)
    }

    /// Savings accumulated up to and including the `n`-th recorded round.
    pub fn saved_through(&self, n: usize) -> u64 {
        self.rounds[..n]
            .iter()
            .map(|r| 2 * r.pruned_bytes * self.num_clients as u64)
            .sum()
    }

    pub fn totals(&self) -> LedgerSummary {
        let k = self.num_clients as u64;
        let unpruned = self.model_size_bytes * 2 * self.rounds.len() as u64 * k;
        let actual: u64 = self.rounds.iter().map(|r| r.uplink_bytes + r.downlink_bytes).sum();
        LedgerSummary {
            rounds: self.rounds.len(),
            num_clients: self.num_clients,
            model_size_bytes: self.model_size_bytes,
            unpruned_total_bytes: unpruned,
            actual_total_bytes: actual,
            saved_bytes: unpruned - actual,
            mask_overhead_bytes: self.rounds.iter().map(|r| r.mask_overhead_bytes).sum(),
        }
    }
}
