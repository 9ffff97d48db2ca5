//! Joint hybrid wireline/wireless backhaul and group-sparse beamforming for
//! power-minimizing cloud radio access networks.

pub mod backhaul;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod igsbpo;
pub mod model;
pub mod socp;
pub mod sparse_beamforming;

pub use error::{Error, Infeasibility, Result};
pub use model::{
    BackhaulAllocation, BackhaulKind, BeamformingSolution, ChannelRealization, NetworkConfig, NetworkSpec, RunTrace,
    StationSpec, TraceEntry,
};
