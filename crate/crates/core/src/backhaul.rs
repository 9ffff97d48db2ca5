//! Stage two: wireless backhaul power control.
//!
//! Each active wireless station must receive from the cloud at least the rate
//! it delivers to its users. That rate fixes an SINR threshold, and the cloud
//! picks the smallest broadcast powers meeting every threshold. Because each
//! station sees the same gain on its own signal and on the interference, the
//! constraints are linear in the powers and the optimum makes all of them
//! tight.

use crate::error::{Error, Infeasibility, Result};
use crate::model::{BackhaulAllocation, BeamformingSolution, ChannelRealization, NetworkConfig};

/// Required rate and SINR threshold per wireless slot; inactive slots are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRequirements {
    pub rates: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl RateRequirements {
    pub fn new(rates: Vec<f64>) -> Self {
        let thresholds = sinr_thresholds(&rates);
        RateRequirements { rates, thresholds }
    }

    pub fn from_solution(sol: &BeamformingSolution, ch: &ChannelRealization, cfg: &NetworkConfig) -> Self {
        Self::new(bs_rates(sol, ch, cfg))
    }
}

/// Access rate each wireless station delivers, by wireless slot:
/// `R_l = sum_k log2(1 + |h_lk w_lk|^2 / (sum_{m != k} |h_lk w_lm|^2 + sigma^2))`.
/// Inactive stations get zero.
pub fn bs_rates(sol: &BeamformingSolution, ch: &ChannelRealization, cfg: &NetworkConfig) -> Vec<f64> {
    let kk = cfg.num_users();
    let noise = cfg.access_noise_power();
    (cfg.num_wireline()..cfg.num_bs())
        .map(|l| {
            if !sol.is_active(l) {
                return 0.0;
            }
            let received: Vec<f64> = (0..kk).map(|k| (ch.h(l, k) * sol.weights[(l, k)]).norm_sqr()).collect();
            (0..kk)
                .map(|k| {
                    let interference: f64 = (0..kk)
                        .filter(|&m| m != k)
                        .map(|m| (ch.h(l, k) * sol.weights[(l, m)]).norm_sqr())
                        .sum();
                    (received[k] / (interference + noise)).ln_1p()
                })
                .sum::<f64>()
                / std::f64::consts::LN_2
        })
        .collect()
}

/// `gamma = 2^R - 1` elementwise.
pub fn sinr_thresholds(rates: &[f64]) -> Vec<f64> {
    rates
        .iter()
        .map(|r| (r * std::f64::consts::LN_2).exp_m1())
        .collect()
}

/// `sum_l gamma_l / (1 + gamma_l)`; the threshold vector is feasible iff this is below one.
pub fn backhaul_load(gamma: &[f64]) -> f64 {
    gamma
        .iter()
        .map(|&g| if g.is_infinite() { 1.0 } else { g / (1.0 + g) })
        .sum()
}

/// Minimum total backhaul transmit power meeting every threshold
/// `P_l |g_l|^2 / (sum_{m != l} P_m |g_l|^2 + kappa^2) >= gamma_l`.
///
/// With `a_l = gamma_l / (1 + gamma_l)` and `u_l = kappa^2 / |g_l|^2` the tight
/// system `P_l = gamma_l (S - P_l + u_l)` has the solution
/// `P_l = a_l (S + u_l)` with `S = sum_l a_l u_l / (1 - sum_l a_l)`.
/// Slots with a zero threshold get zero power.
pub fn solve_power_control(gamma: &[f64], ch: &ChannelRealization, cfg: &NetworkConfig) -> Result<BackhaulAllocation> {
    ch.check(cfg)?;
    let n = cfg.num_wireless();
    if gamma.len() != n {
        return Err(Error::DimensionMismatch {
            what: "backhaul thresholds",
            expected: n,
            found: gamma.len(),
        });
    }
    if let Some(g) = gamma.iter().find(|g| g.is_nan() || **g < 0.0) {
        return Err(Error::InvalidConfig(format!("backhaul threshold {g} must be nonnegative")));
    }
    let load = backhaul_load(gamma);
    if load >= 1.0 {
        return Err(Error::Infeasible(Infeasibility::Backhaul { load }));
    }
    let kappa2 = cfg.backhaul_noise_power();
    let u: Vec<f64> = (0..n).map(|l| kappa2 / ch.backhaul_gain(l)).collect();
    let a: Vec<f64> = gamma.iter().map(|g| g / (1.0 + g)).collect();
    let weighted: f64 = a.iter().zip(&u).map(|(a, u)| a * u).sum();
    let total = weighted / (1.0 - load);
    let tx_powers: Vec<f64> = a
        .iter()
        .zip(&u)
        .map(|(&a, &u)| if a == 0.0 { 0.0 } else { a * (total + u) })
        .collect();
    let mut alloc = BackhaulAllocation {
        tx_powers,
        thresholds: gamma.to_vec(),
        received_powers: Vec::new(),
    };
    alloc.received_powers = received_powers(&alloc, ch, cfg);
    Ok(alloc)
}

/// Total received power `|g_l|^2 sum_m P_m + kappa^2` at each wireless station.
pub fn received_powers(alloc: &BackhaulAllocation, ch: &ChannelRealization, cfg: &NetworkConfig) -> Vec<f64> {
    let total = alloc.total_tx_power();
    (0..cfg.num_wireless())
        .map(|l| ch.backhaul_gain(l) * total + cfg.backhaul_noise_power())
        .collect()
}
