use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, size_proportional_weights};
use super::ledger::{CommLedger, BYTES_PER_PARAM};
use super::metrics::{evaluate_global, Metrics};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::pruning::{apply_mask, baseline_mask, compute_mask, Baseline, PruneMask, PruneMode};
use crate::relevance::{component_relevance, LrpRuleAssignment, Method, ReferenceSet, RelevanceMap, DEFAULT_IG_STEPS};
use crate::rng::{self, purpose};
use crate::trainer::{local_training, TrainConfig};

/// How the server derives the mask once pruning starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "lrp-layerwise")]
    LrpLayerwise,
    #[serde(rename = "lrp-global")]
    LrpGlobal,
    #[serde(rename = "ig-layerwise")]
    IgLayerwise,
    #[serde(rename = "ig-global")]
    IgGlobal,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "magnitude")]
    Magnitude,
    #[serde(rename = "no-prune")]
    NoPrune,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::LrpLayerwise,
        Strategy::LrpGlobal,
        Strategy::IgLayerwise,
        Strategy::IgGlobal,
        Strategy::Random,
        Strategy::Magnitude,
        Strategy::NoPrune,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::LrpLayerwise => "lrp-layerwise",
            Strategy::LrpGlobal => "lrp-global",
            Strategy::IgLayerwise => "ig-layerwise",
            Strategy::IgGlobal => "ig-global",
            Strategy::Random => "random",
            Strategy::Magnitude => "magnitude",
            Strategy::NoPrune => "no-prune",
        }
    }

    fn relevance(&self) -> Option<(bool, PruneMode)> {
        match self {
            Strategy::LrpLayerwise => Some((true, PruneMode::LayerWise)),
            Strategy::LrpGlobal => Some((true, PruneMode::Global)),
            Strategy::IgLayerwise => Some((false, PruneMode::LayerWise)),
            Strategy::IgGlobal => Some((false, PruneMode::Global)),
            _ => None,
        }
    }
}

fn default_ig_steps() -> usize {
    DEFAULT_IG_STEPS
}

fn default_epsilon() -> f64 {
    crate::relevance::DEFAULT_EPSILON
}

fn default_gamma() -> f64 {
    crate::relevance::DEFAULT_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub num_clients: usize,
    pub rounds: usize,
    /// Round (1-based) at which the mask is first computed.
    pub warmup: usize,
    pub q: f64,
    pub strategy: Strategy,
    /// Recompute the mask every this many rounds after the warm-up;
    /// 0 keeps the first mask for the rest of training.
    #[serde(default)]
    pub recompute_period: usize,
    pub seed: u64,
    #[serde(default = "default_ig_steps")]
    pub ig_steps: usize,
    #[serde(default = "default_epsilon")]
    pub lrp_epsilon: f64,
    #[serde(default = "default_gamma")]
    pub lrp_gamma: f64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            num_clients: 8,
            rounds: 20,
            warmup: 10,
            q: 0.5,
            strategy: Strategy::LrpLayerwise,
            recompute_period: 0,
            seed: 0,
            ig_steps: DEFAULT_IG_STEPS,
            lrp_epsilon: default_epsilon(),
            lrp_gamma: default_gamma(),
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_clients < 1 {
            return bad("num_clients must be >= 1".into());
        }
        if self.warmup < 1 || self.warmup > self.rounds {
            return bad(format!("warmup must lie in 1..=rounds ({}), got {}", self.rounds, self.warmup));
        }
        if !(0.0..1.0).contains(&self.q) {
            return bad(format!("q must lie in [0, 1), got {}", self.q));
        }
        if self.ig_steps < 1 {
            return bad("ig_steps must be >= 1".into());
        }
        if !(self.lrp_epsilon >= 0.0) || !(self.lrp_gamma >= 0.0) {
            return bad("lrp_epsilon and lrp_gamma must be >= 0".into());
        }
        Ok(())
    }

    /// Whether the server (re)computes the mask at the start of `round`.
    pub fn prunes_at(&self, round: usize) -> bool {
        if self.strategy == Strategy::NoPrune {
            return false;
        }
        round == self.warmup
            || (self.recompute_period > 0 && round > self.warmup && (round - self.warmup) % self.recompute_period == 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientHandle {
    pub id: usize,
    pub data: Dataset,
}

impl ClientHandle {
    pub fn new(id: usize, data: Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset(format!("client {id}")));
        }
        Ok(Self { id, data })
    }

    pub fn num_samples(&self) -> usize {
        self.data.len()
    }
}

/// Seed of the shuffling stream for one client in one round.
pub fn client_seed(fed_seed: u64, round: usize, client: usize) -> u64 {
    rng::derive_seed(fed_seed, &[purpose::SHUFFLE, round as u64, client as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub metric: Option<f64>,
    pub client_losses: Vec<f64>,
    pub loss_mean: f64,
    pub sparsity: f64,
    pub pruned_components: usize,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub mask_overhead_bytes: u64,
    pub saved_bytes_cum: u64,
}

/// Everything the orchestrator carries between rounds.
#[derive(Debug, Clone)]
pub struct FederationState {
    /// Rounds completed so far.
    pub round: usize,
    pub global: Network,
    pub mask: PruneMask,
    pub relevance: Option<RelevanceMap>,
    pub records: Vec<RoundRecord>,
    pub ledger: CommLedger,
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub network: Network,
    pub mask: PruneMask,
    pub relevance: Option<RelevanceMap>,
    pub records: Vec<RoundRecord>,
    pub ledger: CommLedger,
    pub final_metrics: Option<Metrics>,
}

/// One configured federation over a fixed set of clients.
#[derive(Debug, Clone)]
pub struct Federation<'a> {
    cfg: FedConfig,
    train: TrainConfig,
    clients: &'a [ClientHandle],
    reference: &'a ReferenceSet,
    test: Option<&'a Dataset>,
    weights: Vec<f64>,
}

impl<'a> Federation<'a> {
    pub fn new(
        cfg: FedConfig,
        train: TrainConfig,
        clients: &'a [ClientHandle],
        reference: &'a ReferenceSet,
        test: Option<&'a Dataset>,
    ) -> Result<Self> {
        cfg.validate()?;
        train.validate()?;
        if clients.len() != cfg.num_clients {
            return Err(Error::Config(format!(
                "num_clients is {} but {} clients were supplied",
                cfg.num_clients,
                clients.len()
            )));
        }
        let sizes: Vec<usize> = clients.iter().map(ClientHandle::num_samples).collect();
        Ok(Self {
            weights: size_proportional_weights(&sizes),
            cfg,
            train,
            clients,
            reference,
            test,
        })
    }

    pub fn config(&self) -> &FedConfig {
        &self.cfg
    }

    /// Same clients and data under a different configuration.
    pub fn with_config(&self, cfg: FedConfig) -> Result<Self> {
        Self::new(cfg, self.train.clone(), self.clients, self.reference, self.test)
    }

    pub fn initial_state(&self, net0: &Network) -> FederationState {
        FederationState {
            round: 0,
            global: net0.clone(),
            mask: PruneMask::all_ones(net0),
            relevance: None,
            records: Vec::new(),
            ledger: CommLedger::new(net0.params().byte_size(), self.cfg.num_clients),
        }
    }

    fn derive_mask(&self, global: &Network, round: usize) -> Result<(PruneMask, Option<RelevanceMap>)> {
        let cfg = &self.cfg;
        let (mask, rel) = match cfg.strategy {
            Strategy::NoPrune => (PruneMask::all_ones(global), None),
            Strategy::Random => {
                let seed = rng::derive_seed(cfg.seed, &[purpose::RANDOM_MASK, round as u64]);
                (baseline_mask(global, cfg.q, Baseline::Random { seed })?, None)
            }
            Strategy::Magnitude => (baseline_mask(global, cfg.q, Baseline::Magnitude)?, None),
            s => {
                let (lrp, mode) = s.relevance().expect("relevance strategy");
                let method = if lrp {
                    Method::Lrp
                } else {
                    Method::Ig { steps: cfg.ig_steps }
                };
                let rules = LrpRuleAssignment::four_part(global, cfg.lrp_epsilon, cfg.lrp_gamma);
                let mut rel = component_relevance(global, self.reference, &method, &rules)?;
                rel.round = round;
                (compute_mask(&rel, global, cfg.q, mode)?, Some(rel))
            }
        };
        Ok((mask.with_origin_round(round), rel))
    }

    /// Runs one communication round: optional (re)pruning at the server,
    /// broadcast, local training on every client, aggregation, evaluation.
    pub fn step(&self, state: &mut FederationState) -> Result<()> {
        let round = state.round + 1;
        if round > self.cfg.rounds {
            return Err(Error::Config(format!("all {} rounds already ran", self.cfg.rounds)));
        }
        let mut overhead = 0;
        if self.cfg.prunes_at(round) {
            let (mask, rel) = self.derive_mask(&state.global, round)?;
            state.global = state.global.with_params(apply_mask(state.global.params(), &mask)?)?;
            // One bit per component to every client.
            overhead = mask.component_bits().len().div_ceil(8) as u64 * self.cfg.num_clients as u64;
            state.mask = mask;
            if rel.is_some() {
                state.relevance = rel;
            }
        }

        let global = &state.global;
        let mask = &state.mask;
        let outcomes = self
            .clients
            .par_iter()
            .map(|c| {
                local_training(global, mask, &c.data, &self.train, client_seed(self.cfg.seed, round, c.id)).map_err(
                    |e| Error::Client {
                        round,
                        client: c.id,
                        source: Box::new(e),
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let client_losses: Vec<f64> = outcomes.iter().map(|o| o.final_loss()).collect();
        let updates: Vec<_> = outcomes
            .into_iter()
            .zip(&self.weights)
            .map(|(o, &a)| (o.params, a))
            .collect();
        state.global = state.global.with_params(aggregate(&updates)?)?;
        debug_assert!(state
            .global
            .params()
            .data()
            .iter()
            .zip(state.mask.param_mask())
            .all(|(&p, &k)| k || p == 0.0));

        let pruned_bytes = state.mask.pruned_param_count() as u64 * BYTES_PER_PARAM;
        let traffic = state.ledger.record_round(round, pruned_bytes, overhead)?;
        let metric = self.test.map(|t| evaluate_global(&state.global, t)).transpose()?;
        state.records.push(RoundRecord {
            round,
            metric: metric.map(|m| m.value),
            loss_mean: client_losses.iter().sum::<f64>() / client_losses.len() as f64,
            client_losses,
            sparsity: state.mask.sparsity(),
            pruned_components: state.mask.pruned_components().len(),
            uplink_bytes: traffic.uplink_bytes,
            downlink_bytes: traffic.downlink_bytes,
            mask_overhead_bytes: overhead,
            saved_bytes_cum: state.ledger.saved_through(state.ledger.rounds.len()),
        });
        state.round = round;
        Ok(())
    }

    /// Steps until `round` rounds have completed.
    pub fn run_until(&self, state: &mut FederationState, round: usize) -> Result<()> {
        while state.round < round.min(self.cfg.rounds) {
            self.step(state)?;
        }
        Ok(())
    }

    pub fn finish(&self, mut state: FederationState) -> Result<FederationOutcome> {
        self.run_until(&mut state, self.cfg.rounds)?;
        let final_metrics = self.test.map(|t| evaluate_global(&state.global, t)).transpose()?;
        Ok(FederationOutcome {
            network: state.global,
            mask: state.mask,
            relevance: state.relevance,
            records: state.records,
            ledger: state.ledger,
            final_metrics,
        })
    }

    pub fn run(&self, net0: &Network) -> Result<FederationOutcome> {
        self.finish(self.initial_state(net0))
    }
}

/// Runs every round of the configured federation from `net0`.
pub fn run_federation(
    cfg: &FedConfig,
    train: &TrainConfig,
    net0: &Network,
    clients: &[ClientHandle],
    reference: &ReferenceSet,
    test: Option<&Dataset>,
) -> Result<FederationOutcome> {
    Federation::new(cfg.clone(), train.clone(), clients, reference, test)?.run(net0)
}
