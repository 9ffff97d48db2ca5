//! Outer loop alternating sparse beamforming (stage one) with wireless
//! backhaul power control (stage two).
//!
//! Stage one runs under the current per-BS budgets. Stage two sizes the
//! backhaul broadcast powers for the rates stage one delivers and feeds the
//! resulting received powers back as the budgets of the active wireless
//! stations. The loop stops when the network power settles, when the budgets
//! stop changing, or after a fixed number of rounds.

use crate::backhaul::{bs_rates, sinr_thresholds, solve_power_control};
use crate::error::{Error, Infeasibility, Result};
use crate::model::{network_power, BackhaulAllocation, BeamformingSolution, ChannelRealization, NetworkConfig, RunTrace, TraceEntry};
use crate::sparse_beamforming::{effective_params, gsbf_select, BeamformingSettings, EffectiveParams};

#[derive(Debug, Clone, Copy)]
pub struct IterationConfig {
    /// Relative change of network power that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    pub beamforming: BeamformingSettings,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            tol: 1e-3,
            max_iters: 10,
            beamforming: BeamformingSettings::default(),
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("at least one outer iteration is required".into()));
        }
        Ok(())
    }
}

/// One feasible round of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub iteration: usize,
    pub solution: BeamformingSolution,
    pub allocation: BackhaulAllocation,
    pub network_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Infeasible(Infeasibility),
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// Last feasible iterate; `None` unless the run ended feasibly.
    pub last: Option<Iterate>,
    /// Lowest network power among feasible rounds, even when a later round failed.
    pub best: Option<Iterate>,
    pub trace: RunTrace,
}

impl RunOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, RunStatus::Converged | RunStatus::MaxIterations)
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Whether the last two feasible entries differ by less than `tol` relative.
pub fn converged(trace: &RunTrace, itcfg: &IterationConfig) -> Result<bool> {
    let powers: Vec<f64> = trace.feasible_powers().collect();
    let [.., prev, last] = powers[..] else {
        return Err(Error::TraceTooShort {
            needed: 2,
            found: powers.len(),
        });
    };
    Ok((last - prev).abs() < itcfg.tol * prev.abs())
}

/// Stage two for a stage-one solution: thresholds from the delivered rates,
/// minimal broadcast powers, and the next budgets.
pub fn backhaul_stage(
    sol: &BeamformingSolution,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    budgets: &[f64],
) -> Result<(BackhaulAllocation, Vec<f64>)> {
    let gamma = sinr_thresholds(&bs_rates(sol, ch, cfg));
    let alloc = solve_power_control(&gamma, ch, cfg)?;
    let mut next = budgets.to_vec();
    for l in sol.active_wireless(cfg) {
        let slot = cfg.wireless_slot(l).expect("wireless station");
        next[l] = alloc.received_powers[slot];
    }
    Ok((alloc, next))
}

/// The full two-stage loop with group-sparse beamforming as stage one.
pub fn run(cfg: &NetworkConfig, ch: &ChannelRealization, itcfg: &IterationConfig) -> Result<RunOutcome> {
    let settings = itcfg.beamforming;
    run_with(cfg, ch, itcfg, |params, ch, cfg| {
        gsbf_select(ch, params, cfg, &settings).map(|s| s.solution)
    })
}

/// The outer loop with an arbitrary stage-one selector.
pub fn run_with<F>(cfg: &NetworkConfig, ch: &ChannelRealization, itcfg: &IterationConfig, stage_one: F) -> Result<RunOutcome>
where
    F: Fn(&EffectiveParams, &ChannelRealization, &NetworkConfig) -> Result<BeamformingSolution>,
{
    itcfg.validate()?;
    ch.check(cfg)?;
    let mut budgets = cfg.initial_budgets_for(ch);
    let mut trace = RunTrace::new();
    let mut best: Option<Iterate> = None;
    let mut last: Option<Iterate> = None;

    let fail = |status: RunStatus, trace: RunTrace, best: Option<Iterate>| RunOutcome {
        status,
        last: None,
        best,
        trace,
    };
    let infeasible_entry = |iteration: usize| TraceEntry {
        iteration,
        network_power: f64::INFINITY,
        active_set: Vec::new(),
        feasible: false,
        allocation: None,
    };

    for iteration in 1..=itcfg.max_iters {
        let params = effective_params(cfg, ch, &budgets)?;
        let sol = match stage_one(&params, ch, cfg) {
            Ok(sol) => sol,
            Err(Error::Infeasible(why)) => {
                trace.push(infeasible_entry(iteration));
                return Ok(fail(RunStatus::Infeasible(why), trace, best));
            }
            Err(Error::NumericalFailure { context, iterations }) => {
                log::warn!("outer iteration {iteration}: {context} failed after {iterations} solver iterations");
                trace.push(infeasible_entry(iteration));
                return Ok(fail(RunStatus::NumericalFailure, trace, best));
            }
            Err(e) => return Err(e),
        };
        let power = network_power(&sol, cfg);
        let (alloc, next) = match backhaul_stage(&sol, ch, cfg, &budgets) {
            Ok(v) => v,
            Err(Error::Infeasible(why)) => {
                trace.push(TraceEntry {
                    iteration,
                    network_power: power,
                    active_set: sol.active_set.clone(),
                    feasible: false,
                    allocation: None,
                });
                return Ok(fail(RunStatus::Infeasible(why), trace, best));
            }
            Err(e) => return Err(e),
        };
        trace.push(TraceEntry {
            iteration,
            network_power: power,
            active_set: sol.active_set.clone(),
            feasible: true,
            allocation: Some(alloc.clone()),
        });
        let current = Iterate {
            iteration,
            solution: sol,
            allocation: alloc,
            network_power: power,
        };
        if best.as_ref().is_none_or(|b| power < b.network_power) {
            best = Some(current.clone());
        }
        last = Some(current);

        let settled = iteration >= 2 && converged(&trace, itcfg)?;
        if settled || next == budgets {
            return Ok(RunOutcome {
                status: RunStatus::Converged,
                last,
                best,
                trace,
            });
        }
        budgets = next;
    }
    Ok(RunOutcome {
        status: RunStatus::MaxIterations,
        last,
        best,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::station;
    use crate::model::{validate_solution, BackhaulKind, NetworkSpec};
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn trace_of(powers: &[f64]) -> RunTrace {
        let mut t = RunTrace::new();
        for (i, &p) in powers.iter().enumerate() {
            t.push(TraceEntry {
                iteration: i + 1,
                network_power: p,
                active_set: vec![0],
                feasible: true,
                allocation: None,
            });
        }
        t
    }

    #[test]
    fn convergence_examples() {
        let it = IterationConfig::default();
        assert!(converged(&trace_of(&[10.0, 10.0]), &it).unwrap());
        assert!(!converged(&trace_of(&[10.0, 9.0]), &it).unwrap());
        let fine = IterationConfig { tol: 1e-4, ..it };
        assert!(converged(&trace_of(&[10.0, 10.0005]), &fine).unwrap());
        assert!(matches!(
            converged(&trace_of(&[10.0]), &it),
            Err(Error::TraceTooShort { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn rejects_bad_iteration_config() {
        assert!(IterationConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(IterationConfig { max_iters: 0, ..Default::default() }.validate().is_err());
    }

    fn net(stations: Vec<StationSpec>, users: usize, target: f64) -> NetworkConfig {
        NetworkConfig::new(NetworkSpec {
            stations,
            num_users: users,
            access_noise_power: 1e-4,
            backhaul_noise_power: 1e-4,
            sinr_targets: vec![target; users],
        })
        .unwrap()
    }
    use crate::model::StationSpec;

    #[test]
    fn wireline_only_network_stops_after_one_round() {
        let cfg = net(
            vec![station(BackhaulKind::Wireline, 2.0), station(BackhaulKind::Wireline, 3.0)],
            1,
            1.0,
        );
        let access = DMatrix::from_row_slice(2, 1, &[Complex64::new(0.5, 0.0), Complex64::new(0.2, 0.3)]);
        let ch = ChannelRealization::new(access, vec![], 0).unwrap();
        let out = run(&cfg, &ch, &IterationConfig::default()).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert_eq!(out.iterations(), 1);
        let last = out.last.unwrap();
        assert!(validate_solution(&last.solution, Some(&last.allocation), &ch, &cfg, 1e-6)
            .unwrap()
            .is_feasible());
    }

    #[test]
    fn single_wireless_link_chains_both_stages() {
        // the wireline station has no channel, so only the wireless one can serve
        let cfg = net(
            vec![station(BackhaulKind::Wireline, 5.0), station(BackhaulKind::Wireless, 1.0)],
            1,
            1.0,
        );
        let access = DMatrix::from_row_slice(2, 1, &[Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        let ch = ChannelRealization::new(access, vec![Complex64::new(1.0, 0.0)], 0).unwrap();
        let out = run(&cfg, &ch, &IterationConfig::default()).unwrap();
        assert!(out.is_feasible(), "{:?}", out.status);
        let last = out.last.unwrap();
        assert_eq!(last.solution.active_set, vec![1]);
        assert!((last.solution.weights[(1, 0)].norm() - 0.01).abs() < 1e-6 * 0.01);
        // one bit per channel use needs backhaul SINR 1, i.e. P = kappa^2 / |g|^2
        let rate = bs_rates(&last.solution, &ch, &cfg)[0];
        let gamma = (rate * std::f64::consts::LN_2).exp_m1();
        assert!((last.allocation.tx_powers[0] - gamma * 1e-4).abs() < 1e-12);
        assert!((last.allocation.tx_powers[0] - 1e-4).abs() < 1e-9);
        for e in out.trace.entries() {
            assert!(e.feasible);
        }
    }

    #[test]
    fn unreachable_targets_fail_in_first_round() {
        let cfg = net(vec![station(BackhaulKind::Wireline, 1.0)], 1, 1e8);
        let access = DMatrix::from_row_slice(1, 1, &[Complex64::new(0.1, 0.0)]);
        let ch = ChannelRealization::new(access, vec![], 0).unwrap();
        let out = run(&cfg, &ch, &IterationConfig::default()).unwrap();
        assert_eq!(out.status, RunStatus::Infeasible(Infeasibility::Beamforming));
        assert_eq!(out.trace.len(), 1);
        assert!(out.last.is_none() && out.best.is_none());
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = net(
            vec![
                station(BackhaulKind::Wireline, 2.0),
                station(BackhaulKind::Wireless, 1.0),
                station(BackhaulKind::Wireless, 1.5),
            ],
            2,
            1.0,
        );
        let access = DMatrix::from_row_slice(
            3,
            2,
            &[
                Complex64::new(0.04, 0.01),
                Complex64::new(-0.02, 0.03),
                Complex64::new(0.01, -0.05),
                Complex64::new(0.03, 0.02),
                Complex64::new(-0.04, 0.0),
                Complex64::new(0.0, 0.01),
            ],
        );
        let ch = ChannelRealization::new(access, vec![Complex64::new(0.04, 0.0), Complex64::new(0.0, 0.03)], 0).unwrap();
        let a = run(&cfg, &ch, &IterationConfig::default()).unwrap();
        let b = run(&cfg, &ch, &IterationConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
