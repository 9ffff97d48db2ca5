//! The simulation preset and the channel generator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{db_to_linear, BackhaulKind, ChannelRealization, NetworkConfig, NetworkSpec, StationSpec};

/// Network constants of the reference scenario. Station `l` (1-based) has
/// `P^c = 4.2 + l` when wireline and `P^c = j + 0.1` when it is the `j`-th
/// wireless station, which is `l - 5.9` for the default six-and-six split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preset {
    pub num_bs: usize,
    pub num_wireline: usize,
    pub num_users: usize,
    pub capacity: f64,
    pub drain_efficiency: f64,
    /// Access noise standard deviation `sigma`.
    pub sigma: f64,
    /// Backhaul noise standard deviation `kappa`.
    pub kappa: f64,
    /// Starting budget of wireline stations.
    pub initial_power: f64,
    /// Starting cloud transmit power toward each wireless station.
    pub initial_backhaul_power: f64,
    /// Large-scale access gains, one per station group of equal size.
    pub large_scale: Vec<f64>,
    /// Large-scale gain of every cloud-to-BS wireless link.
    pub backhaul_large_scale: f64,
    /// Explicit `B x K` large-scale gains replacing the random grouping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub large_scale_matrix: Option<Vec<Vec<f64>>>,
}

impl Default for Preset {
    fn default() -> Self {
        Preset {
            num_bs: 12,
            num_wireline: 6,
            num_users: 4,
            capacity: 140.0,
            drain_efficiency: 0.25,
            sigma: 0.01,
            kappa: 0.01,
            initial_power: 1.0,
            initial_backhaul_power: 1.0,
            large_scale: vec![0.051, 0.041, 0.032],
            backhaul_large_scale: 0.042,
            large_scale_matrix: None,
        }
    }
}

impl Preset {
    pub fn from_json(text: &str) -> Result<Self> {
        let preset: Preset = serde_json::from_str(text)?;
        preset.check()?;
        Ok(preset)
    }

    /// Smaller variant used for the exhaustive comparison: 3 + 3 stations, 2 users.
    pub fn small() -> Self {
        Preset {
            num_bs: 6,
            num_wireline: 3,
            num_users: 2,
            ..Preset::default()
        }
    }

    pub fn relative_power(&self, l: usize) -> f64 {
        if l < self.num_wireline {
            4.2 + (l + 1) as f64
        } else {
            (l - self.num_wireline + 1) as f64 + 0.1
        }
    }

    /// Network with every user at the same target (dB).
    pub fn config(&self, target_db: f64) -> Result<NetworkConfig> {
        self.check()?;
        let stations = (0..self.num_bs)
            .map(|l| {
                let wireline = l < self.num_wireline;
                StationSpec {
                    backhaul: if wireline { BackhaulKind::Wireline } else { BackhaulKind::Wireless },
                    capacity: wireline.then_some(self.capacity),
                    drain_efficiency: self.drain_efficiency,
                    bs_power_active: self.relative_power(l),
                    bs_power_sleep: 0.0,
                    onu_power_active: 0.0,
                    onu_power_sleep: 0.0,
                    initial_power: self.initial_power,
                    initial_backhaul_power: (!wireline).then_some(self.initial_backhaul_power),
                }
            })
            .collect();
        NetworkConfig::new(NetworkSpec {
            stations,
            num_users: self.num_users,
            access_noise_power: self.sigma * self.sigma,
            backhaul_noise_power: self.kappa * self.kappa,
            sinr_targets: vec![db_to_linear(target_db); self.num_users],
        })
    }

    fn check(&self) -> Result<()> {
        if self.num_wireline == 0 || self.num_wireline > self.num_bs {
            return Err(Error::InvalidConfig(format!(
                "{} wireline stations out of {}",
                self.num_wireline, self.num_bs
            )));
        }
        match &self.large_scale_matrix {
            Some(m) => {
                if m.len() != self.num_bs || m.iter().any(|r| r.len() != self.num_users) {
                    return Err(Error::InvalidConfig("large-scale matrix must be B x K".into()));
                }
            }
            None => {
                let groups = self.large_scale.len();
                if groups == 0 || !self.num_bs.is_multiple_of(groups) {
                    return Err(Error::InvalidConfig(format!(
                        "{} stations cannot be split into {} equal groups; supply large_scale_matrix",
                        self.num_bs, groups
                    )));
                }
            }
        }
        Ok(())
    }
}

/// splitmix64 finalizer; spreads consecutive seeds over the whole state space.
pub fn split_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of realization `index` under a base seed.
pub fn realization_seed(base: u64, index: usize) -> u64 {
    split_seed(base.wrapping_add(index as u64))
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random equal-size assignment of stations to the large-scale groups;
/// entry `l` is the group of station `l`.
pub fn station_groups(num_bs: usize, groups: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..num_bs).collect();
    perm.shuffle(rng);
    let size = num_bs / groups;
    let mut group = vec![0; num_bs];
    for (pos, &l) in perm.iter().enumerate() {
        group[l] = pos / size;
    }
    group
}

/// Large-scale gains `D` of one draw together with the small-scale fading.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    pub realization: ChannelRealization,
    pub large_scale: DMatrix<f64>,
    pub groups: Option<Vec<usize>>,
}

/// `h_lk = D_lk g_lk` and `h_hat_l = D_tilde g_hat_l` with i.i.d. standard
/// complex Gaussian `g`. Draw order: grouping, access fading row by row,
/// then backhaul fading.
pub fn generate_channels_detailed(preset: &Preset, cfg: &NetworkConfig, seed: u64) -> Result<ChannelDraw> {
    preset.check()?;
    if cfg.num_bs() != preset.num_bs || cfg.num_users() != preset.num_users || cfg.num_wireline() != preset.num_wireline {
        return Err(Error::InvalidConfig("network does not match the preset dimensions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, k) = (preset.num_bs, preset.num_users);
    let (large_scale, groups) = match &preset.large_scale_matrix {
        Some(m) => (DMatrix::from_fn(b, k, |l, kk| m[l][kk]), None),
        None => {
            let groups = station_groups(b, preset.large_scale.len(), &mut rng);
            (DMatrix::from_fn(b, k, |l, _| preset.large_scale[groups[l]]), Some(groups))
        }
    };
    let mut access = DMatrix::from_element(b, k, Complex64::new(0.0, 0.0));
    for l in 0..b {
        for kk in 0..k {
            access[(l, kk)] = complex_gaussian(&mut rng) * large_scale[(l, kk)];
        }
    }
    let backhaul = (0..cfg.num_wireless())
        .map(|_| complex_gaussian(&mut rng) * preset.backhaul_large_scale)
        .collect();
    Ok(ChannelDraw {
        realization: ChannelRealization::new(access, backhaul, seed)?,
        large_scale,
        groups,
    })
}

pub fn generate_channels(preset: &Preset, cfg: &NetworkConfig, seed: u64) -> Result<ChannelRealization> {
    generate_channels_detailed(preset, cfg, seed).map(|d| d.realization)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_static_powers() {
        let p = Preset::default();
        let cfg = p.config(0.0).unwrap();
        assert!((cfg.relative_power(0) - 5.2).abs() < 1e-12);
        assert!((cfg.relative_power(5) - 10.2).abs() < 1e-12);
        // 1-based station 9 is the third wireless one
        assert!((cfg.relative_power(8) - 3.1).abs() < 1e-12);
        for l in 6..12 {
            assert!((cfg.relative_power(l) - ((l + 1) as f64 - 5.9)).abs() < 1e-12);
        }
        assert_eq!(cfg.access_noise_power(), 1e-4);
        let small = Preset::small().config(10.0).unwrap();
        assert!((small.relative_power(3) - 1.1).abs() < 1e-12);
        assert!((small.sinr_target(0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn groups_partition_the_stations() {
        let p = Preset::default();
        let cfg = p.config(0.0).unwrap();
        for seed in 0..20 {
            let d = generate_channels_detailed(&p, &cfg, seed).unwrap();
            let g = d.groups.unwrap();
            for j in 0..3 {
                assert_eq!(g.iter().filter(|&&x| x == j).count(), 4);
            }
            for l in 0..12 {
                assert_eq!(d.large_scale[(l, 0)], p.large_scale[g[l]]);
            }
        }
    }

    #[test]
    fn same_seed_same_channels() {
        let p = Preset::default();
        let cfg = p.config(0.0).unwrap();
        let a = generate_channels(&p, &cfg, 42).unwrap();
        let b = generate_channels(&p, &cfg, 42).unwrap();
        let c = generate_channels(&p, &cfg, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn small_scale_fading_has_unit_power() {
        let p = Preset::default();
        let cfg = p.config(0.0).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut seed = 0;
        while count < 100_000 {
            let d = generate_channels_detailed(&p, &cfg, realization_seed(7, seed)).unwrap();
            seed += 1;
            for (h, dl) in d.realization.access().iter().zip(d.large_scale.iter()) {
                sum += (h / dl).norm_sqr();
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((0.98..=1.02).contains(&mean), "{mean}");
    }

    #[test]
    fn uneven_grouping_needs_explicit_matrix() {
        let p = Preset {
            num_bs: 5,
            num_wireline: 2,
            ..Preset::default()
        };
        assert!(p.config(0.0).is_err());
        let p = Preset {
            large_scale_matrix: Some(vec![vec![0.05; 4]; 5]),
            ..p
        };
        let cfg = p.config(0.0).unwrap();
        let ch = generate_channels(&p, &cfg, 1).unwrap();
        assert_eq!(ch.access().nrows(), 5);
    }

    #[test]
    fn seeds_differ_per_realization() {
        let s: Vec<u64> = (0..100).map(|i| realization_seed(42, i)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 100);
    }
}
