//! Small-instance comparison of the outer loop against exhaustive search.

use serde::{Deserialize, Serialize};

use crate::baselines::exhaustive_oracle;
use crate::error::{Error, Result};
use crate::harness::channels::{generate_channels, realization_seed, Preset};
use crate::igsbpo::{run, IterationConfig};
use crate::model::network_power;

/// One instance. The oracle searches under the budgets of the outer loop's
/// final stage-one solve, so both values refer to the same constraint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub realization: usize,
    pub igsbpo_w: Option<f64>,
    pub oracle_w: Option<f64>,
    pub igsbpo_active: Vec<usize>,
    pub oracle_active: Vec<usize>,
}

impl OracleComparison {
    /// Relative excess of the outer loop over the optimum.
    pub fn gap(&self) -> Option<f64> {
        Some(self.igsbpo_w? / self.oracle_w? - 1.0)
    }
}

pub fn compare_with_oracle(
    preset: &Preset,
    target_db: f64,
    realizations: usize,
    seed: u64,
    itcfg: &IterationConfig,
    cap: usize,
) -> Result<Vec<OracleComparison>> {
    let cfg = preset.config(target_db)?;
    (0..realizations)
        .map(|r| {
            let ch = generate_channels(preset, &cfg, realization_seed(seed, r))?;
            let out = run(&cfg, &ch, itcfg)?;
            let mut cmp = OracleComparison {
                realization: r,
                igsbpo_w: None,
                oracle_w: None,
                igsbpo_active: Vec::new(),
                oracle_active: Vec::new(),
            };
            let Some(last) = out.last else { return Ok(cmp) };
            cmp.igsbpo_w = Some(last.network_power);
            cmp.igsbpo_active = last.solution.active_set.clone();
            match exhaustive_oracle(&ch, &cfg, &last.solution.power_budgets, cap, &itcfg.beamforming.solver) {
                Ok(sol) => {
                    cmp.oracle_w = Some(network_power(&sol, &cfg));
                    cmp.oracle_active = sol.active_set;
                }
                Err(Error::Infeasible(_)) => {}
                Err(e) => return Err(e),
            }
            Ok(cmp)
        })
        .collect()
}

/// Mean gap `sum igsbpo / sum oracle - 1` over instances where both are feasible.
pub fn mean_gap(rows: &[OracleComparison]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.igsbpo_w?, r.oracle_w?))).collect();
    if pairs.is_empty() {
        return None;
    }
    let (a, b) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Some(a / b - 1.0)
}
