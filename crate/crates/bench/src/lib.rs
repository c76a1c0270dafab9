//! Shared fixtures for the benchmarks: one channel realisation at the
//! default system settings with the optimised preamble pair.

use brp_cfo::channel::{build_block_model, sample_channel_with, simulate_exchange};
use brp_cfo::crb::stream_rng;
use brp_cfo::experiments::preamble_pair;
use brp_cfo::linalg::CVec;
use brp_cfo::{BlockModel, BrpSpec, PreambleMode, SystemConfig};

pub struct Fixture {
    pub config: SystemConfig,
    pub brp1: Option<BrpSpec>,
    pub brp2: BrpSpec,
    pub model: BlockModel,
    /// Received retained samples, noise included.
    pub r1: CVec,
}

impl Fixture {
    pub fn new(mode: PreambleMode, seed: u64) -> Self {
        let config = SystemConfig::default();
        let (brp1, brp2) = preamble_pair(mode, &config).expect("default config is valid");
        let mut rng = stream_rng(seed, 0);
        let channel = sample_channel_with(&config, &mut rng).expect("default config is valid");
        let model = build_block_model(&config, &channel, brp1.as_ref(), &brp2).expect("consistent sizes");
        let r1 = simulate_exchange(&config, &channel, brp1.as_ref(), &brp2, Some(&mut rng)).expect("consistent sizes");
        Self { config, brp1, brp2, model, r1 }
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new(PreambleMode::OptimizedBrp, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let f = Fixture::default();
        assert_eq!(f.r1.len(), f.config.num_samples());
        assert!(f.brp1.is_some());
        assert!(Fixture::new(PreambleMode::OneWay, 2).brp1.is_none());
    }
}
