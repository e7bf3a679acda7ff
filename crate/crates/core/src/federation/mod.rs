//! FedAvg orchestration with server-side pruning, metrics and the
//! communication ledger.

mod aggregate;
mod ledger;
mod metrics;
mod run;

pub use aggregate::{aggregate, size_proportional_weights, WEIGHT_SUM_TOLERANCE};
pub use ledger::{to_mb, CommLedger, LedgerSummary, RoundTraffic, BYTES_PER_PARAM, MEGABYTE};
pub use metrics::{average_precision, evaluate_global, Metrics};
pub use run::{
    client_seed, run_federation, ClientHandle, FedConfig, Federation, FederationOutcome, FederationState,
    RoundRecord, Strategy,
};
