//! Reference stage-one selectors: all-on coordinated beamforming, the
//! unweighted sparsity pattern, greedy switch-off and exhaustive enumeration.

use crate::error::{Error, Infeasibility, Result};
use crate::model::{network_power, BeamformingSolution, ChannelRealization, NetworkConfig};
use crate::socp::SolverSettings;
use crate::sparse_beamforming::{
    bisect_switch_off, effective_params, solve_fixed_set_socp, solve_weighted_group_relaxation, switch_off_order,
    EffectiveParams, GroupWeights,
};

/// Largest network the exhaustive oracle enumerates by default.
pub const DEFAULT_ORACLE_CAP: usize = 10;

/// Every station on, minimum weighted transmit power.
pub fn coordinated_beamforming(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    budgets: &[f64],
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let params = effective_params(cfg, ch, budgets)?;
    coordinated_with(&params, ch, cfg, settings)
}

pub fn coordinated_with(
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let all: Vec<usize> = (0..cfg.num_bs()).collect();
    solve_fixed_set_socp(&all, params, ch, cfg, &params.beta, settings)
}

/// One unweighted mixed-norm relaxation, then the same ordering and
/// bisection as group-sparse beamforming.
pub fn sparsity_pattern(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    budgets: &[f64],
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let params = effective_params(cfg, ch, budgets)?;
    sparsity_pattern_with(&params, ch, cfg, settings)
}

pub fn sparsity_pattern_with(
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let ones = GroupWeights(vec![1.0; cfg.num_bs()]);
    let relaxed = solve_weighted_group_relaxation(&ones, params, ch, cfg, settings)?;
    let order = switch_off_order(&relaxed, params, ch, cfg);
    bisect_switch_off(&order, params, ch, cfg, settings)
}

fn try_subset(
    set: &[usize],
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<Option<BeamformingSolution>> {
    match solve_fixed_set_socp(set, params, ch, cfg, &params.beta, settings) {
        Ok(s) => Ok(Some(s)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(Error::NumericalFailure { iterations, .. }) => {
            log::warn!("subset {set:?}: solver failed after {iterations} iterations; skipped");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Starting from all stations on, repeatedly switch off the station whose
/// removal lowers network power the most; stop when no removal helps.
pub fn greedy_selection(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    budgets: &[f64],
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let params = effective_params(cfg, ch, budgets)?;
    greedy_with(&params, ch, cfg, settings)
}

pub fn greedy_with(
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let mut current = coordinated_with(params, ch, cfg, settings)?;
    let mut power = network_power(&current, cfg);
    while current.active_set.len() > 1 {
        let mut best: Option<(f64, BeamformingSolution)> = None;
        for &l in &current.active_set {
            let set: Vec<usize> = current.active_set.iter().copied().filter(|&m| m != l).collect();
            if let Some(sol) = try_subset(&set, params, ch, cfg, settings)? {
                let p = network_power(&sol, cfg);
                // strict comparison keeps the lowest index among ties
                if best.as_ref().is_none_or(|(bp, _)| p < *bp) {
                    best = Some((p, sol));
                }
            }
        }
        match best {
            Some((p, sol)) if p < power => {
                power = p;
                current = sol;
            }
            _ => break,
        }
    }
    Ok(current)
}

/// Minimum network power over all nonempty subsets of stations.
pub fn exhaustive_oracle(
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    budgets: &[f64],
    max_bs: usize,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let b = cfg.num_bs();
    if b > max_bs {
        return Err(Error::OracleTooLarge { num_bs: b, cap: max_bs });
    }
    let params = effective_params(cfg, ch, budgets)?;
    let mut best: Option<(f64, BeamformingSolution)> = None;
    for mask in 1u64..(1u64 << b) {
        let set: Vec<usize> = (0..b).filter(|&l| mask >> l & 1 == 1).collect();
        // a subset whose static power alone exceeds the incumbent cannot win
        let floor: f64 = set.iter().map(|&l| cfg.relative_power(l)).sum();
        if best.as_ref().is_some_and(|(p, _)| floor >= *p) {
            continue;
        }
        if let Some(sol) = try_subset(&set, &params, ch, cfg, settings)? {
            let p = network_power(&sol, cfg);
            if best.as_ref().is_none_or(|(bp, _)| p < *bp) {
                best = Some((p, sol));
            }
        }
    }
    best.map(|(_, s)| s)
        .ok_or(Error::Infeasible(Infeasibility::NoFeasibleSubset))
}
