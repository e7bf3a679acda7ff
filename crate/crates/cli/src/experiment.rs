use fedx_core::data::{make_reference_set, partition, split_holdout, Dataset, ReferenceSet, Synthesizer};
use fedx_core::federation::{ClientHandle, FedConfig, Federation, FederationOutcome, FederationState, Strategy};
use fedx_core::nn::Network;
use fedx_core::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Test samples get ids above every training id.
const TEST_ID_OFFSET: u64 = 1 << 40;

/// Materialized data and initial model for one config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub net0: Network,
    pub clients: Vec<ClientHandle>,
    pub reference: ReferenceSet,
    pub test: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub federation: u64,
    pub data: u64,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let d = &config.data;
        let seed = config.fed.seed;
        let synth = Synthesizer::new(&d.synth)?;
        let pool = synth.sample_set(d.synth.samples_per_class, 0, 0)?;
        let test = synth.sample_set(d.test_per_class, 1, TEST_ID_OFFSET)?;
        let (train, holdout) = split_holdout(&pool, d.holdout_per_class, seed)?;
        let reference = make_reference_set(&holdout, d.reference_size, seed)?;
        let plan = partition(&train, config.fed.num_clients, d.partition, seed)?;
        let clients = plan
            .client_datasets(&train)
            .into_iter()
            .enumerate()
            .map(|(id, data)| ClientHandle::new(id, data))
            .collect::<Result<Vec<_>>>()?;
        let net0 = Network::build(&config.arch(), seed)?;
        Ok(Self {
            config: config.clone(),
            net0,
            clients,
            reference,
            test,
        })
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            federation: self.config.fed.seed,
            data: self.config.data.synth.seed,
        }
    }

    pub fn federation(&self, fed: FedConfig) -> Result<Federation<'_>> {
        Federation::new(fed, self.config.train.clone(), &self.clients, &self.reference, Some(&self.test))
    }

    pub fn run(&self) -> Result<FederationOutcome> {
        self.federation(self.config.fed.clone())?.run(&self.net0)
    }

    /// Runs every (method, q) cell in `methods × rates` order.
    pub fn sweep(&self, methods: &[Strategy], rates: &[f64]) -> Result<Vec<SweepCell>> {
        let grid: Vec<(Strategy, f64)> = methods
            .iter()
            .flat_map(|&m| rates.iter().map(move |&q| (m, q)))
            .collect();
        self.run_cells(&grid)
    }

    /// Runs the given (method, q) cells, in order. All cells share the
    /// unpruned trajectory of rounds `1..warmup`, which is computed once.
    pub fn run_cells(&self, cells: &[(Strategy, f64)]) -> Result<Vec<SweepCell>> {
        let base = self.federation(FedConfig {
            strategy: Strategy::NoPrune,
            ..self.config.fed.clone()
        })?;
        let mut warm: FederationState = base.initial_state(&self.net0);
        base.run_until(&mut warm, self.config.fed.warmup - 1)?;
        cells
            .par_iter()
            .map(|&(strategy, q)| {
                let fed = base.with_config(FedConfig {
                    strategy,
                    q,
                    ..self.config.fed.clone()
                })?;
                Ok(SweepCell {
                    strategy,
                    q,
                    outcome: fed.finish(warm.clone())?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub strategy: Strategy,
    pub q: f64,
    pub outcome: FederationOutcome,
}

impl SweepCell {
    pub fn final_metric(&self) -> f64 {
        self.outcome.final_metrics.map_or(f64::NAN, |m| m.value)
    }
}
