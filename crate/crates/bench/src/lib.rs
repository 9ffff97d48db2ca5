//! Fixtures shared by the benchmarks.

use hybrid_cran::harness::{generate_channels, realization_seed, Preset};
use hybrid_cran::model::{ChannelRealization, NetworkConfig};
use hybrid_cran::sparse_beamforming::{effective_params, EffectiveParams};

/// One draw of the reference scenario at a uniform target.
pub struct Instance {
    pub cfg: NetworkConfig,
    pub ch: ChannelRealization,
    pub params: EffectiveParams,
}

pub fn instance(preset: &Preset, target_db: f64, realization: usize) -> Instance {
    let cfg = preset.config(target_db).expect("preset is valid");
    let ch = generate_channels(preset, &cfg, realization_seed(42, realization)).expect("channel draw");
    let params = effective_params(&cfg, &ch, &cfg.initial_budgets_for(&ch)).expect("positive budgets");
    Instance { cfg, ch, params }
}
