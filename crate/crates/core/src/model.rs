//! Network description, channel draws, beamforming solutions and the power /
//! SINR accounting every algorithm shares.
//!
//! Base stations are indexed from zero with all wireline-backhauled stations
//! first (`0..num_wireline`) and wireless-backhauled ones after. Loading a
//! [`NetworkSpec`] with interleaved kinds reorders the stations and remembers
//! the original positions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for [`validate_solution`].
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackhaulKind {
    Wireline,
    Wireless,
}

/// One base station as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub backhaul: BackhaulKind,
    /// Wireline capacity in bits per channel use; ignored for wireless stations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    pub drain_efficiency: f64,
    pub bs_power_active: f64,
    pub bs_power_sleep: f64,
    #[serde(default)]
    pub onu_power_active: f64,
    #[serde(default)]
    pub onu_power_sleep: f64,
    /// Starting transmit budget `P_l` (watts).
    pub initial_power: f64,
    /// Starting cloud transmit power toward this wireless station. When set,
    /// the station's starting budget is the power it would receive with every
    /// such station served at its starting level, and `initial_power` is unused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_backhaul_power: Option<f64>,
}

/// Serializable form of a [`NetworkConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub stations: Vec<StationSpec>,
    pub num_users: usize,
    /// `sigma^2`, watts.
    pub access_noise_power: f64,
    /// `kappa^2`, watts.
    pub backhaul_noise_power: f64,
    /// Linear per-user SINR targets.
    pub sinr_targets: Vec<f64>,
}

/// Validated, immutable network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpec", into = "NetworkSpec")]
pub struct NetworkConfig {
    stations: Vec<StationSpec>,
    original_index: Vec<usize>,
    num_wireline: usize,
    num_users: usize,
    access_noise_power: f64,
    backhaul_noise_power: f64,
    sinr_targets: Vec<f64>,
    relative_power: Vec<f64>,
}

impl TryFrom<NetworkSpec> for NetworkConfig {
    type Error = Error;

    fn try_from(spec: NetworkSpec) -> Result<Self> {
        NetworkConfig::new(spec)
    }
}

impl From<NetworkConfig> for NetworkSpec {
    fn from(cfg: NetworkConfig) -> Self {
        // restore the caller's station order
        let mut stations = vec![None; cfg.stations.len()];
        for (st, &orig) in cfg.stations.into_iter().zip(&cfg.original_index) {
            stations[orig] = Some(st);
        }
        NetworkSpec {
            stations: stations.into_iter().map(|s| s.expect("permutation")).collect(),
            num_users: cfg.num_users,
            access_noise_power: cfg.access_noise_power,
            backhaul_noise_power: cfg.backhaul_noise_power,
            sinr_targets: cfg.sinr_targets,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl NetworkConfig {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let mut order: Vec<usize> = (0..spec.stations.len()).collect();
        // stable: wireline first, original order within each kind
        order.sort_by_key(|&i| spec.stations[i].backhaul == BackhaulKind::Wireless);
        let stations: Vec<StationSpec> = order.iter().map(|&i| spec.stations[i].clone()).collect();
        let num_wireline = stations
            .iter()
            .filter(|s| s.backhaul == BackhaulKind::Wireline)
            .count();

        if num_wireline == 0 {
            return Err(invalid("at least one wireline base station is required"));
        }
        if spec.num_users == 0 {
            return Err(invalid("at least one user is required"));
        }
        if spec.sinr_targets.len() != spec.num_users {
            return Err(Error::DimensionMismatch {
                what: "sinr_targets",
                expected: spec.num_users,
                found: spec.sinr_targets.len(),
            });
        }
        if !(spec.access_noise_power > 0.0) || !(spec.backhaul_noise_power > 0.0) {
            return Err(invalid("noise powers must be positive"));
        }
        if let Some(d) = spec.sinr_targets.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(invalid(format!("SINR target {d} must be positive and finite")));
        }
        let mut relative_power = Vec::with_capacity(stations.len());
        for (l, st) in stations.iter().enumerate() {
            if !(st.drain_efficiency > 0.0 && st.drain_efficiency <= 1.0) {
                return Err(invalid(format!(
                    "station {l}: drain efficiency {} outside (0, 1]",
                    st.drain_efficiency
                )));
            }
            if !(st.initial_power > 0.0) {
                return Err(invalid(format!("station {l}: initial power must be positive")));
            }
            match (st.backhaul, st.initial_backhaul_power) {
                (_, None) => {}
                (BackhaulKind::Wireline, Some(_)) => {
                    return Err(invalid(format!("station {l}: initial backhaul power on a wireline station")))
                }
                (BackhaulKind::Wireless, Some(p)) if !(p >= 0.0 && p.is_finite()) => {
                    return Err(invalid(format!("station {l}: initial backhaul power {p} must be non-negative")))
                }
                _ => {}
            }
            let pc = match st.backhaul {
                BackhaulKind::Wireline => {
                    match st.capacity {
                        Some(c) if c > 0.0 && c.is_finite() => {}
                        _ => return Err(invalid(format!("station {l}: wireline capacity must be positive"))),
                    }
                    (st.bs_power_active + st.onu_power_active) - (st.bs_power_sleep + st.onu_power_sleep)
                }
                BackhaulKind::Wireless => st.bs_power_active - st.bs_power_sleep,
            };
            if !(pc >= 0.0 && pc.is_finite()) {
                return Err(invalid(format!("station {l}: relative backhaul power {pc} is negative")));
            }
            relative_power.push(pc);
        }
        Ok(NetworkConfig {
            stations,
            original_index: order,
            num_wireline,
            num_users: spec.num_users,
            access_noise_power: spec.access_noise_power,
            backhaul_noise_power: spec.backhaul_noise_power,
            sinr_targets: spec.sinr_targets,
            relative_power,
        })
    }

    /// Same network with different per-user SINR targets.
    pub fn with_sinr_targets(&self, targets: Vec<f64>) -> Result<Self> {
        let mut spec: NetworkSpec = self.clone().into();
        spec.sinr_targets = targets;
        NetworkConfig::new(spec)
    }

    /// Same network with every user at one target given in dB.
    pub fn with_uniform_target_db(&self, db: f64) -> Result<Self> {
        self.with_sinr_targets(vec![db_to_linear(db); self.num_users])
    }

    pub fn num_bs(&self) -> usize {
        self.stations.len()
    }

    pub fn num_wireline(&self) -> usize {
        self.num_wireline
    }

    pub fn num_wireless(&self) -> usize {
        self.stations.len() - self.num_wireline
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn is_wireline(&self, l: usize) -> bool {
        l < self.num_wireline
    }

    /// Position of a wireless station within the wireless block.
    pub fn wireless_slot(&self, l: usize) -> Option<usize> {
        (l >= self.num_wireline && l < self.num_bs()).then(|| l - self.num_wireline)
    }

    pub fn station(&self, l: usize) -> &StationSpec {
        &self.stations[l]
    }

    /// Index of station `l` in the configuration it was loaded from.
    pub fn original_index(&self, l: usize) -> usize {
        self.original_index[l]
    }

    /// Wireline capacity `C_l`; `None` for wireless stations.
    pub fn capacity(&self, l: usize) -> Option<f64> {
        if self.is_wireline(l) {
            self.stations[l].capacity
        } else {
            None
        }
    }

    pub fn drain_efficiency(&self, l: usize) -> f64 {
        self.stations[l].drain_efficiency
    }

    /// Cached `P^c_l`.
    pub fn relative_power(&self, l: usize) -> f64 {
        self.relative_power[l]
    }

    pub fn access_noise_power(&self) -> f64 {
        self.access_noise_power
    }

    pub fn backhaul_noise_power(&self) -> f64 {
        self.backhaul_noise_power
    }

    pub fn sinr_target(&self, k: usize) -> f64 {
        self.sinr_targets[k]
    }

    pub fn sinr_targets(&self) -> &[f64] {
        &self.sinr_targets
    }

    /// Configured `initial_power` of every station.
    pub fn initial_budgets(&self) -> Vec<f64> {
        self.stations.iter().map(|s| s.initial_power).collect()
    }

    /// Starting budgets for one channel draw. Wireless stations with an
    /// `initial_backhaul_power` receive `|g_l|^2 sum_m P~_m + kappa^2`.
    pub fn initial_budgets_for(&self, ch: &ChannelRealization) -> Vec<f64> {
        let total: f64 = self.stations.iter().filter_map(|s| s.initial_backhaul_power).sum();
        let mut budgets = self.initial_budgets();
        for (l, b) in budgets.iter_mut().enumerate() {
            if let (Some(slot), Some(_)) = (self.wireless_slot(l), self.stations[l].initial_backhaul_power) {
                *b = ch.backhaul_gain(slot) * total + self.backhaul_noise_power;
            }
        }
        budgets
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Relative backhaul power `P^c_l`: active minus sleep consumption of the BS,
/// plus its optical network unit when wireline-backhauled.
pub fn relative_backhaul_power(l: usize, cfg: &NetworkConfig) -> Result<f64> {
    if l >= cfg.num_bs() {
        return Err(Error::IndexOutOfRange {
            what: "base stations",
            index: l,
            len: cfg.num_bs(),
        });
    }
    Ok(cfg.relative_power(l))
}

/// One Monte Carlo draw of access and backhaul channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `B x K`, entry `(l, k)` is the channel from BS `l` to user `k`.
    access: DMatrix<Complex64>,
    /// Cloud-to-BS channel for each wireless station, in wireless order.
    backhaul: Vec<Complex64>,
    seed: u64,
}

impl ChannelRealization {
    pub fn new(access: DMatrix<Complex64>, backhaul: Vec<Complex64>, seed: u64) -> Result<Self> {
        if access.iter().chain(&backhaul).any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid("channel entries must be finite"));
        }
        if let Some(i) = backhaul.iter().position(|v| v.norm_sqr() == 0.0) {
            return Err(invalid(format!("wireless station {i} has a zero backhaul channel")));
        }
        Ok(ChannelRealization {
            access,
            backhaul,
            seed,
        })
    }

    /// Checks that the draw matches the network dimensions.
    pub fn check(&self, cfg: &NetworkConfig) -> Result<()> {
        let dims = [
            ("access channel rows", cfg.num_bs(), self.access.nrows()),
            ("access channel columns", cfg.num_users(), self.access.ncols()),
            ("backhaul channels", cfg.num_wireless(), self.backhaul.len()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }

    pub fn access(&self) -> &DMatrix<Complex64> {
        &self.access
    }

    pub fn h(&self, l: usize, k: usize) -> Complex64 {
        self.access[(l, k)]
    }

    pub fn backhaul(&self) -> &[Complex64] {
        &self.backhaul
    }

    /// `|h_hat_l|^2` for a wireless station, by wireless slot.
    pub fn backhaul_gain(&self, slot: usize) -> f64 {
        self.backhaul[slot].norm_sqr()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Beamformer for a chosen set of active base stations.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    /// `B x K`; rows of inactive stations are zero.
    pub weights: DMatrix<Complex64>,
    /// Active stations, ascending.
    pub active_set: Vec<usize>,
    /// `q_l^2` per wireline station; `None` for inactive ones.
    pub quant_noise: Vec<Option<f64>>,
    /// Per-BS power budgets `P_l` in force when the solution was computed.
    pub power_budgets: Vec<f64>,
}

impl BeamformingSolution {
    pub fn is_active(&self, l: usize) -> bool {
        self.active_set.binary_search(&l).is_ok()
    }

    pub fn active_wireline<'a>(&'a self, cfg: &'a NetworkConfig) -> impl Iterator<Item = usize> + 'a {
        self.active_set.iter().copied().filter(|&l| cfg.is_wireline(l))
    }

    pub fn active_wireless<'a>(&'a self, cfg: &'a NetworkConfig) -> impl Iterator<Item = usize> + 'a {
        self.active_set.iter().copied().filter(|&l| !cfg.is_wireline(l))
    }

    /// `sum_k |w_lk|^2`.
    pub fn bs_transmit_power(&self, l: usize) -> f64 {
        self.weights.row(l).iter().map(|w| w.norm_sqr()).sum()
    }

    /// `q_l^2`, zero when absent.
    pub fn quant_noise_of(&self, l: usize) -> f64 {
        self.quant_noise.get(l).copied().flatten().unwrap_or(0.0)
    }

    /// Sum of the power budgets of the active stations.
    pub fn total_budget(&self) -> f64 {
        self.active_set.iter().map(|&l| self.power_budgets[l]).sum()
    }
}

/// Wireless backhaul transmit powers and the thresholds they were sized for.
/// All vectors are indexed by wireless slot; inactive slots carry zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackhaulAllocation {
    pub tx_powers: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub received_powers: Vec<f64>,
}

impl BackhaulAllocation {
    /// Allocation for a network with no active wireless station.
    pub fn idle(cfg: &NetworkConfig) -> Self {
        let n = cfg.num_wireless();
        BackhaulAllocation {
            tx_powers: vec![0.0; n],
            thresholds: vec![0.0; n],
            received_powers: vec![cfg.backhaul_noise_power(); n],
        }
    }

    /// Achieved backhaul SINR of a wireless slot.
    pub fn sinr(&self, slot: usize, ch: &ChannelRealization, cfg: &NetworkConfig) -> f64 {
        let g = ch.backhaul_gain(slot);
        let interference: f64 = self
            .tx_powers
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != slot)
            .map(|(_, p)| p * g)
            .sum();
        self.tx_powers[slot] * g / (interference + cfg.backhaul_noise_power())
    }

    pub fn total_tx_power(&self) -> f64 {
        self.tx_powers.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub network_power: f64,
    pub active_set: Vec<usize>,
    pub feasible: bool,
    pub allocation: Option<BackhaulAllocation>,
}

/// Per-iteration record of an outer loop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    entries: Vec<TraceEntry>,
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; iteration indices must increase strictly.
    pub fn push(&mut self, entry: TraceEntry) {
        if let Some(last) = self.entries.last() {
            assert!(entry.iteration > last.iteration, "trace iterations must increase");
        }
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn feasible_powers(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter(|e| e.feasible).map(|e| e.network_power)
    }
}

/// Total network power: amplifier-scaled transmit power (plus quantization
/// noise power on wireline links) and the relative backhaul power of every
/// active station.
pub fn network_power(sol: &BeamformingSolution, cfg: &NetworkConfig) -> f64 {
    sol.active_set
        .iter()
        .map(|&l| {
            let mut tx = sol.bs_transmit_power(l);
            if cfg.is_wireline(l) {
                tx += sol.quant_noise_of(l);
            }
            tx / cfg.drain_efficiency(l) + cfg.relative_power(l)
        })
        .sum()
}

/// SINR of user `k` with quantization noise from active wireline stations.
pub fn user_sinr(k: usize, sol: &BeamformingSolution, ch: &ChannelRealization, cfg: &NetworkConfig) -> f64 {
    let inner = |i: usize| -> Complex64 {
        sol.active_set
            .iter()
            .map(|&l| ch.h(l, k).conj() * sol.weights[(l, i)])
            .sum()
    };
    let signal = inner(k).norm_sqr();
    let interference: f64 = (0..cfg.num_users())
        .filter(|&i| i != k)
        .map(|i| inner(i).norm_sqr())
        .sum();
    let quant: f64 = sol
        .active_wireline(cfg)
        .map(|l| ch.h(l, k).norm_sqr() * sol.quant_noise_of(l))
        .sum();
    signal / (interference + quant + cfg.access_noise_power())
}

/// A constraint of the joint design problem that a solution breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Sinr { user: usize, achieved: f64, target: f64 },
    InactiveWeights { bs: usize, power: f64 },
    /// Wireline rate `log2(1 + P/q^2)` above capacity (infinite when `q^2 = 0`).
    Capacity { bs: usize, rate: f64, capacity: f64 },
    PowerCap { bs: usize, used: f64, budget: f64 },
    BackhaulSinr { bs: usize, achieved: f64, threshold: f64 },
    /// Backhaul rate below the rate the station delivers to its users.
    RateConservation { bs: usize, backhaul_rate: f64, access_rate: f64 },
    NegativeBackhaulPower { bs: usize, power: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a solution (and optionally its backhaul allocation) against every
/// constraint of the joint problem, with relative tolerance `tol`.
pub fn validate_solution(
    sol: &BeamformingSolution,
    alloc: Option<&BackhaulAllocation>,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    tol: f64,
) -> Result<ViolationReport> {
    ch.check(cfg)?;
    let (b, k) = (cfg.num_bs(), cfg.num_users());
    if sol.weights.nrows() != b || sol.weights.ncols() != k {
        return Err(Error::DimensionMismatch {
            what: "beamforming weights",
            expected: b * k,
            found: sol.weights.nrows() * sol.weights.ncols(),
        });
    }
    for (what, expected, found) in [
        ("power budgets", b, sol.power_budgets.len()),
        ("quantization noise entries", cfg.num_wireline(), sol.quant_noise.len()),
    ] {
        if expected != found {
            return Err(Error::DimensionMismatch {
                what,
                expected,
                found,
            });
        }
    }
    if let Some(&l) = sol.active_set.iter().find(|&&l| l >= b) {
        return Err(Error::IndexOutOfRange {
            what: "active set",
            index: l,
            len: b,
        });
    }

    let mut v = Vec::new();
    for user in 0..k {
        let achieved = user_sinr(user, sol, ch, cfg);
        let target = cfg.sinr_target(user);
        if !(achieved >= target * (1.0 - tol)) {
            v.push(Violation::Sinr {
                user,
                achieved,
                target,
            });
        }
    }
    for l in 0..b {
        let power = sol.bs_transmit_power(l);
        if !sol.is_active(l) {
            if power > 0.0 {
                v.push(Violation::InactiveWeights { bs: l, power });
            }
            continue;
        }
        let mut used = power;
        if let Some(capacity) = cfg.capacity(l) {
            let q2 = sol.quant_noise_of(l);
            used += q2;
            if power > 0.0 {
                let rate = if q2 > 0.0 { (power / q2).ln_1p() / std::f64::consts::LN_2 } else { f64::INFINITY };
                if !(rate <= capacity * (1.0 + tol)) {
                    v.push(Violation::Capacity { bs: l, rate, capacity });
                }
            }
        }
        let budget = sol.power_budgets[l];
        if !(used <= budget * (1.0 + tol)) {
            v.push(Violation::PowerCap { bs: l, used, budget });
        }
    }

    if let Some(alloc) = alloc {
        for (what, found) in [
            ("backhaul powers", alloc.tx_powers.len()),
            ("backhaul thresholds", alloc.thresholds.len()),
        ] {
            if found != cfg.num_wireless() {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: cfg.num_wireless(),
                    found,
                });
            }
        }
        let rates = crate::backhaul::bs_rates(sol, ch, cfg);
        for slot in 0..cfg.num_wireless() {
            let bs = cfg.num_wireline() + slot;
            let p = alloc.tx_powers[slot];
            if p < 0.0 {
                v.push(Violation::NegativeBackhaulPower { bs, power: p });
            }
            let threshold = alloc.thresholds[slot];
            let achieved = alloc.sinr(slot, ch, cfg);
            if !(achieved >= threshold * (1.0 - tol)) {
                v.push(Violation::BackhaulSinr { bs, achieved, threshold });
            }
            let access_rate = rates[slot];
            let backhaul_rate = achieved.ln_1p() / std::f64::consts::LN_2;
            if !(backhaul_rate >= access_rate * (1.0 - tol)) {
                v.push(Violation::RateConservation {
                    bs,
                    backhaul_rate,
                    access_rate,
                });
            }
        }
    }
    Ok(ViolationReport { violations: v })
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    fn preset_like() -> NetworkConfig {
        // four stations with the closed-form P^c values 4.2 + l and l - 5.9 (1-based l)
        let mut stations: Vec<StationSpec> = (1..=2)
            .map(|l| station(BackhaulKind::Wireline, 4.2 + l as f64))
            .collect();
        stations.extend((9..=10).map(|l| station(BackhaulKind::Wireless, l as f64 - 5.9)));
        NetworkConfig::new(NetworkSpec {
            stations,
            num_users: 1,
            access_noise_power: 1e-4,
            backhaul_noise_power: 1e-4,
            sinr_targets: vec![1.0],
        })
        .unwrap()
    }

    fn single(kind: BackhaulKind, w: f64, q2: Option<f64>) -> (NetworkConfig, ChannelRealization, BeamformingSolution) {
        let mut st = vec![station(BackhaulKind::Wireline, 1.0)];
        if kind == BackhaulKind::Wireless {
            st.push(station(BackhaulKind::Wireless, 1.0));
        }
        let cfg = NetworkConfig::new(NetworkSpec {
            stations: st,
            num_users: 1,
            access_noise_power: 1e-4,
            backhaul_noise_power: 1e-4,
            sinr_targets: vec![1.0],
        })
        .unwrap();
        let ch = wireless_channel(&cfg, &vec![1.0; cfg.num_wireless()]);
        let l = cfg.num_bs() - 1;
        let mut weights = DMatrix::from_element(cfg.num_bs(), 1, Complex64::new(0.0, 0.0));
        weights[(l, 0)] = Complex64::new(w, 0.0);
        let sol = BeamformingSolution {
            weights,
            active_set: vec![l],
            quant_noise: vec![if kind == BackhaulKind::Wireline { q2 } else { None }],
            power_budgets: vec![1.0; cfg.num_bs()],
        };
        (cfg, ch, sol)
    }

    #[test]
    fn relative_power_examples() {
        let cfg = preset_like();
        assert!((relative_backhaul_power(0, &cfg).unwrap() - 5.2).abs() < 1e-12);
        assert!((relative_backhaul_power(2, &cfg).unwrap() - 3.1).abs() < 1e-12);
        assert!(matches!(
            relative_backhaul_power(4, &cfg),
            Err(Error::IndexOutOfRange { .. })
        ));
        let mut st = station(BackhaulKind::Wireline, 2.0);
        st.bs_power_sleep = 2.0;
        let cfg = NetworkConfig::new(NetworkSpec {
            stations: vec![st],
            num_users: 1,
            access_noise_power: 1e-4,
            backhaul_noise_power: 1e-4,
            sinr_targets: vec![1.0],
        })
        .unwrap();
        assert_eq!(relative_backhaul_power(0, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn onu_power_counts_on_wireline_only() {
        let mut wl = station(BackhaulKind::Wireline, 3.0);
        wl.onu_power_active = 2.0;
        wl.onu_power_sleep = 0.5;
        let mut wll = station(BackhaulKind::Wireless, 3.0);
        wll.onu_power_active = 2.0;
        let cfg = NetworkConfig::new(NetworkSpec {
            stations: vec![wll, wl],
            num_users: 1,
            access_noise_power: 1e-4,
            backhaul_noise_power: 1e-4,
            sinr_targets: vec![1.0],
        })
        .unwrap();
        // reordered: wireline first
        assert!(cfg.is_wireline(0));
        assert_eq!(cfg.original_index(0), 1);
        assert_eq!(cfg.relative_power(0), 4.5);
        assert_eq!(cfg.relative_power(1), 3.0);
    }

    #[test]
    fn network_power_examples() {
        let cfg = preset_like();
        let empty = BeamformingSolution {
            weights: DMatrix::from_element(4, 1, Complex64::new(0.0, 0.0)),
            active_set: vec![],
            quant_noise: vec![None; 2],
            power_budgets: vec![1.0; 4],
        };
        assert_eq!(network_power(&empty, &cfg), 0.0);

        let mut wireless = empty.clone();
        wireless.weights[(2, 0)] = Complex64::new(1.0, 0.0);
        wireless.active_set = vec![2];
        assert!((network_power(&wireless, &cfg) - 7.1).abs() < 1e-12);

        let mut wireline = empty;
        wireline.weights[(0, 0)] = Complex64::new(0.0, 1.0);
        wireline.active_set = vec![0];
        wireline.quant_noise[0] = Some(1.0);
        assert!((network_power(&wireline, &cfg) - 13.2).abs() < 1e-12);
    }

    #[test]
    fn sinr_examples() {
        let (cfg, ch, sol) = single(BackhaulKind::Wireless, 0.1, None);
        assert!((user_sinr(0, &sol, &ch, &cfg) - 100.0).abs() < 1e-9);
        let (cfg, ch, sol) = single(BackhaulKind::Wireline, 0.1, Some(0.0099));
        assert!((user_sinr(0, &sol, &ch, &cfg) - 1.0).abs() < 1e-12);
        let (cfg, ch, sol) = single(BackhaulKind::Wireless, 0.0, None);
        assert_eq!(user_sinr(0, &sol, &ch, &cfg), 0.0);
    }

    #[test]
    fn validation_examples() {
        let (cfg, ch, sol) = single(BackhaulKind::Wireless, 0.01, None);
        assert!(validate_solution(&sol, None, &ch, &cfg, DEFAULT_VALIDATION_TOL)
            .unwrap()
            .is_feasible());

        let mut half = sol.clone();
        half.weights *= Complex64::new(0.5, 0.0);
        let report = validate_solution(&half, None, &ch, &cfg, DEFAULT_VALIDATION_TOL).unwrap();
        assert!(matches!(report.violations.as_slice(), [Violation::Sinr { user: 0, .. }]));

        let (cfg, ch, sol) = single(BackhaulKind::Wireline, 0.1, Some(0.0));
        let report = validate_solution(&sol, None, &ch, &cfg, DEFAULT_VALIDATION_TOL).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Capacity { rate, .. } if rate.is_infinite())));
    }

    #[test]
    fn validation_checks_backhaul() {
        let (cfg, ch, sol) = single(BackhaulKind::Wireless, 0.01, None);
        // the station carries one bit, so it needs backhaul SINR 1: P = kappa^2
        let ok = BackhaulAllocation {
            tx_powers: vec![1e-4],
            thresholds: vec![1.0],
            received_powers: vec![2e-4],
        };
        assert!(validate_solution(&sol, Some(&ok), &ch, &cfg, 1e-6).unwrap().is_feasible());
        let short = BackhaulAllocation {
            tx_powers: vec![0.5e-4],
            ..ok
        };
        let v = validate_solution(&sol, Some(&short), &ch, &cfg, 1e-6).unwrap().violations;
        assert!(v.iter().any(|v| matches!(v, Violation::BackhaulSinr { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::RateConservation { .. })));
    }

    #[test]
    fn validation_flags_inactive_weights_and_caps() {
        let (cfg, ch, mut sol) = single(BackhaulKind::Wireless, 2.0, None);
        sol.weights[(0, 0)] = Complex64::new(0.1, 0.0);
        let v = validate_solution(&sol, None, &ch, &cfg, 1e-6).unwrap().violations;
        assert!(v.iter().any(|v| matches!(v, Violation::InactiveWeights { bs: 0, .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::PowerCap { bs: 1, .. })));
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = NetworkSpec {
            stations: vec![station(BackhaulKind::Wireline, 1.0)],
            num_users: 1,
            access_noise_power: 1e-4,
            backhaul_noise_power: 1e-4,
            sinr_targets: vec![1.0],
        };
        let mut s = base.clone();
        s.stations[0].capacity = Some(0.0);
        assert!(NetworkConfig::new(s).is_err());
        let mut s = base.clone();
        s.stations[0].drain_efficiency = 1.5;
        assert!(NetworkConfig::new(s).is_err());
        let mut s = base.clone();
        s.stations[0].bs_power_sleep = 5.0;
        assert!(NetworkConfig::new(s).is_err());
        let mut s = base.clone();
        s.stations[0].backhaul = BackhaulKind::Wireless;
        assert!(NetworkConfig::new(s).is_err());
        let mut s = base.clone();
        s.sinr_targets = vec![];
        assert!(matches!(NetworkConfig::new(s), Err(Error::DimensionMismatch { .. })));
        assert!(NetworkConfig::new(base).is_ok());
    }

    #[test]
    fn config_json_round_trip_keeps_original_order() {
        let spec = NetworkSpec {
            stations: vec![
                station(BackhaulKind::Wireless, 1.0),
                station(BackhaulKind::Wireline, 2.0),
            ],
            num_users: 1,
            access_noise_power: 1e-4,
            backhaul_noise_power: 1e-4,
            sinr_targets: vec![2.0],
        };
        let cfg = NetworkConfig::new(spec.clone()).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: NetworkConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(NetworkSpec::from(cfg), spec);
    }

    #[test]
    fn rejects_zero_backhaul_channel() {
        let access = DMatrix::from_element(2, 1, Complex64::new(1.0, 0.0));
        assert!(ChannelRealization::new(access, vec![Complex64::new(0.0, 0.0)], 0).is_err());
    }

    #[test]
    fn wireless_start_budget_is_broadcast_received_power() {
        let mut stations = vec![station(BackhaulKind::Wireline, 1.0)];
        for p in [Some(1.0), Some(0.5), None] {
            let mut st = station(BackhaulKind::Wireless, 1.0);
            st.initial_power = 0.3;
            st.initial_backhaul_power = p;
            stations.push(st);
        }
        let cfg = NetworkConfig::new(NetworkSpec {
            stations,
            num_users: 1,
            access_noise_power: 1e-4,
            backhaul_noise_power: 0.01,
            sinr_targets: vec![1.0],
        })
        .unwrap();
        let access = DMatrix::from_element(4, 1, Complex64::new(1.0, 0.0));
        let g = [0.1, 0.2, 0.3].map(|a: f64| Complex64::new(0.0, a.sqrt()));
        let ch = ChannelRealization::new(access, g.to_vec(), 0).unwrap();
        // total cloud power 1.5 W: 0.1 * 1.5 + 0.01 and 0.2 * 1.5 + 0.01; the last keeps its own value
        let b = cfg.initial_budgets_for(&ch);
        assert_eq!(b[0], 1.0);
        assert!((b[1] - 0.16).abs() < 1e-12);
        assert!((b[2] - 0.31).abs() < 1e-12);
        assert_eq!(b[3], 0.3);
        assert_eq!(cfg.initial_budgets(), vec![1.0, 0.3, 0.3, 0.3]);
    }

    #[test]
    fn initial_backhaul_power_is_wireless_only() {
        let mut wl = station(BackhaulKind::Wireline, 1.0);
        wl.initial_backhaul_power = Some(1.0);
        let mut neg = station(BackhaulKind::Wireless, 1.0);
        neg.initial_backhaul_power = Some(-1.0);
        for st in [wl, neg] {
            let spec = NetworkSpec {
                stations: vec![station(BackhaulKind::Wireline, 1.0), st],
                num_users: 1,
                access_noise_power: 1e-4,
                backhaul_noise_power: 1e-4,
                sinr_targets: vec![1.0],
            };
            assert!(matches!(NetworkConfig::new(spec), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((linear_to_db(100.0) - 20.0).abs() < 1e-12);
        assert_eq!(db_to_linear(0.0), 1.0);
    }

    proptest! {
        #[test]
        fn adding_idle_station_adds_its_static_power(
            w in prop::collection::vec(-1.0f64..1.0, 8),
            q2 in 0.0f64..1.0,
            extra in 0usize..4,
        ) {
            let cfg = preset_like();
            let mut weights = DMatrix::from_element(4, 1, Complex64::new(0.0, 0.0));
            let base: Vec<usize> = (0..4).filter(|&l| l != extra).collect();
            for &l in &base {
                weights[(l, 0)] = Complex64::new(w[2 * l], w[2 * l + 1]);
            }
            let mut quant_noise = vec![None; 2];
            for l in base.iter().copied().filter(|&l| l < 2) {
                quant_noise[l] = Some(q2);
            }
            let sol = BeamformingSolution {
                weights,
                active_set: base.clone(),
                quant_noise,
                power_budgets: vec![1.0; 4],
            };
            let mut grown = sol.clone();
            grown.active_set.push(extra);
            grown.active_set.sort_unstable();
            let mut expected = cfg.relative_power(extra);
            if extra < 2 {
                grown.quant_noise[extra] = Some(q2);
                expected += q2 / cfg.drain_efficiency(extra);
            }
            let diff = network_power(&grown, &cfg) - network_power(&sol, &cfg);
            prop_assert!((diff - expected).abs() < 1e-9);
        }

        #[test]
        fn single_user_sinr_scales_quadratically(w in 0.01f64..1.0, t in 1.0f64..10.0) {
            let (cfg, ch, sol) = single(BackhaulKind::Wireless, w, None);
            let mut scaled = sol.clone();
            scaled.weights *= Complex64::new(t, 0.0);
            let r = user_sinr(0, &scaled, &ch, &cfg) / user_sinr(0, &sol, &ch, &cfg);
            prop_assert!((r - t * t).abs() < 1e-9 * t * t);
        }
    }
}
