//! Everything needed to turn a threshold pair and a seed into a sample cost.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{sample_cost, sample_gradient, CostConfig, GradientReport};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Thresholds};
use crate::noise::{NoiseSettings, NoiseTrace};
use crate::sim::{simulate, SamplePath, SimConfig};

/// Cost weights. `PSA_init` and `T` come from the simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scenario {
    pub model: ModelParams,
    pub sim: SimConfig,
    pub noise: NoiseSettings,
    pub cost: CostWeights,
}

impl Scenario {
    /// The reference scenario with all noise switched off.
    pub fn deterministic() -> Self {
        let noise = NoiseSettings::zero(NoiseSettings::default().grid_dt);
        Self {
            noise,
            ..Self::default()
        }
    }

    pub fn cost_config(&self) -> CostConfig {
        CostConfig {
            w1: self.cost.w1,
            w2: self.cost.w2,
            psa_init: self.sim.initial_psa(),
            horizon: self.sim.horizon,
        }
    }

    pub fn validate(&self, th: &Thresholds) -> Result<()> {
        self.model.validate()?;
        self.noise.validate()?;
        th.validate()?;
        self.sim.validate_with(self.noise.grid_dt, th)?;
        self.cost_config().validate()
    }

    /// The noise realization for `seed` over the full horizon.
    pub fn trace(&self, seed: u64) -> Result<NoiseTrace> {
        NoiseTrace::generate(self.noise.with_seed(seed), self.sim.horizon)
    }

    pub fn path(&self, th: &Thresholds, noise: &NoiseTrace) -> Result<SamplePath> {
        simulate(&self.model, th, noise, &self.sim)
    }

    pub fn cost(&self, th: &Thresholds, noise: &NoiseTrace) -> Result<f64> {
        sample_cost(&self.path(th, noise)?, &self.cost_config())
    }

    pub fn gradient(&self, th: &Thresholds, noise: &NoiseTrace) -> Result<GradientReport> {
        sample_gradient(&self.path(th, noise)?, &self.cost_config())
    }
}

/// `n` path seeds derived from one master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Stream of seeds derived from a master seed, for resampling on demand.
#[derive(Debug, Clone)]
pub struct SeedStream(ChaCha8Rng);

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(master))
    }

    pub fn next_seed(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn take(&mut self, n: usize) -> Vec<u64> {
        (0..n).map(|_| self.next_seed()).collect()
    }
}

/// Errors that make a single path unusable but leave the estimator sound.
pub fn is_recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::TangentialCrossing { .. } | Error::RunawayChatter { .. }
    )
}
