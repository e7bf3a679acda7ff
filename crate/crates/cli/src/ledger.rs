use std::fmt::Write;

use fedx_core::federation::{to_mb, CommLedger, LedgerSummary, BYTES_PER_PARAM};

use crate::error::CliResult;
use crate::output::{sig6, Manifest};

/// One row of the communication-cost table.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub label: String,
    pub q: f64,
    pub warmup: usize,
    pub totals: LedgerSummary,
}

impl LedgerRow {
    pub fn from_manifest(m: &Manifest) -> Self {
        Self {
            label: m.ledger.strategy.name().to_string(),
            q: m.ledger.q,
            warmup: m.ledger.warmup,
            totals: m.ledger.totals,
        }
    }
}

/// Ledger of a model of `model_bytes` bytes where every parameter is
/// prunable and a fraction `q` of them is withheld from round `warmup` on.
pub fn analytic_ledger(model_bytes: u64, clients: usize, rounds: usize, warmup: usize, q: f64) -> CliResult<CommLedger> {
    let params = model_bytes / BYTES_PER_PARAM;
    let pruned = fedx_core::pruning::prune_count(q, params as usize) as u64 * BYTES_PER_PARAM;
    let mut ledger = CommLedger::new(model_bytes, clients);
    for r in 1..=rounds {
        ledger.record_round(r, if r >= warmup { pruned } else { 0 }, 0)?;
    }
    Ok(ledger)
}

/// Whole megabytes, truncated.
pub fn whole_mb(bytes: u64) -> u64 {
    (to_mb(bytes) + 1e-9).floor() as u64
}

/// Table with one row per ledger: model size, unpruned total, and the
/// savings and mask overhead of its pruning setting.
pub fn render(rows: &[LedgerRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>10} {:>4} {:>4} {:>7} {:>6} {:>18} {:>12} {:>16}",
        "method", "model_MB", "K", "R", "warmup", "q", "unpruned_total_MB", "saved_MB", "mask_overhead_MB"
    );
    for r in rows {
        let t = &r.totals;
        let _ = writeln!(
            s,
            "{:<16} {:>10} {:>4} {:>4} {:>7} {:>6} {:>18} {:>12} {:>16}",
            r.label,
            sig6(t.model_size_mb()),
            t.num_clients,
            t.rounds,
            r.warmup,
            sig6(r.q),
            whole_mb(t.unpruned_total_bytes),
            sig6(t.saved_mb()),
            sig6(to_mb(t.mask_overhead_bytes)),
        );
    }
    s
}
