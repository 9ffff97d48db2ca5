//! Monte Carlo sweeps over SINR targets and channel realizations.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    coordinated_beamforming, coordinated_with, exhaustive_oracle, greedy_selection, greedy_with, sparsity_pattern,
    sparsity_pattern_with, DEFAULT_ORACLE_CAP,
};
use crate::error::{Error, Result};
use crate::harness::channels::{generate_channels, realization_seed, Preset};
use crate::igsbpo::{run, run_with, Iterate, IterationConfig, RunOutcome, RunStatus};
use crate::model::{
    network_power, validate_solution, BackhaulAllocation, BeamformingSolution, ChannelRealization, NetworkConfig,
    DEFAULT_VALIDATION_TOL,
};
use crate::sparse_beamforming::{effective_params, gsbf_select, BeamformingSettings};

/// Suffix appended to an outer-loop label for its best-so-far iterate.
pub const BEST_SUFFIX: &str = "@best";

/// Algorithms the harness can sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    /// Group-sparse beamforming inside the backhaul outer loop.
    Igsbpo,
    /// Group-sparse beamforming once, under the initial budgets.
    Gsbf,
    Sp,
    Cb,
    Gs,
    Oracle,
    SpLoop,
    CbLoop,
    GsLoop,
}

/// How a number in the results was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Stage one alone with the initial budgets.
    SingleShot,
    /// Stage one alternated with backhaul power control.
    OuterLoop,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Igsbpo,
        Algorithm::Gsbf,
        Algorithm::Sp,
        Algorithm::Cb,
        Algorithm::Gs,
        Algorithm::Oracle,
        Algorithm::SpLoop,
        Algorithm::CbLoop,
        Algorithm::GsLoop,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Igsbpo => "igsbpo",
            Algorithm::Gsbf => "gsbf",
            Algorithm::Sp => "sp",
            Algorithm::Cb => "cb",
            Algorithm::Gs => "gs",
            Algorithm::Oracle => "oracle",
            Algorithm::SpLoop => "sp+loop",
            Algorithm::CbLoop => "cb+loop",
            Algorithm::GsLoop => "gs+loop",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Algorithm::Igsbpo | Algorithm::SpLoop | Algorithm::CbLoop | Algorithm::GsLoop => Mode::OuterLoop,
            _ => Mode::SingleShot,
        }
    }

    /// Labels this algorithm contributes to the result table.
    pub fn row_labels(self) -> Vec<String> {
        match self.mode() {
            Mode::SingleShot => vec![self.label().to_string()],
            Mode::OuterLoop => vec![self.label().to_string(), format!("{}{BEST_SUFFIX}", self.label())],
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == lower)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.label().to_string()
    }
}

/// A complete sweep description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub targets_db: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    /// Results file (`.csv`) or a directory receiving `results.csv` and companions.
    pub output: Option<PathBuf>,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub oracle_cap: usize,
    pub validation_tol: f64,
    /// Keep every feasible solution for later re-validation.
    pub dump_solutions: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            preset: Preset::default(),
            targets_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            realizations: 70,
            seed: 42,
            algorithms: vec![Algorithm::Igsbpo, Algorithm::Sp, Algorithm::Cb, Algorithm::Gs],
            output: None,
            workers: None,
            outer_tol: 1e-3,
            max_outer_iters: 10,
            oracle_cap: DEFAULT_ORACLE_CAP,
            validation_tol: DEFAULT_VALIDATION_TOL,
            dump_solutions: false,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.realizations == 0 {
            return invalid("at least one realization is required");
        }
        if self.targets_db.is_empty() {
            return invalid("the SINR target list is empty");
        }
        if self.targets_db.iter().any(|t| !t.is_finite()) {
            return invalid("SINR targets must be finite");
        }
        if self.algorithms.is_empty() {
            return invalid("the algorithm list is empty");
        }
        if self.workers == Some(0) {
            return invalid("worker count must be positive");
        }
        if !(self.validation_tol > 0.0) {
            return invalid("validation tolerance must be positive");
        }
        self.iteration_config().validate()?;
        // surfaces preset errors before any work starts
        self.preset.config(self.targets_db[0])?;
        Ok(())
    }

    pub fn iteration_config(&self) -> IterationConfig {
        IterationConfig {
            tol: self.outer_tol,
            max_iters: self.max_outer_iters,
            beamforming: BeamformingSettings::default(),
        }
    }

    /// Result labels in table order.
    pub fn labels(&self) -> Vec<String> {
        self.algorithms.iter().flat_map(|a| a.row_labels()).collect()
    }
}

/// One `(target, realization, label)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub target_sinr_db: f64,
    pub realization: usize,
    pub algorithm: String,
    pub network_power_w: Option<f64>,
    pub total_tx_power_w: Option<f64>,
    pub active_bs: usize,
    pub feasible: bool,
    pub iterations: usize,
    pub wall_ms: f64,
}

/// Per-(target, label) aggregate over feasible realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub target_sinr_db: f64,
    pub algorithm: String,
    pub mode: Mode,
    pub feasible: usize,
    pub infeasible: usize,
    pub failed: usize,
    pub mean_network_power_w: Option<f64>,
    pub mean_total_tx_power_w: Option<f64>,
    pub mean_active_bs: Option<f64>,
    pub mean_iterations: Option<f64>,
}

/// A cell that crashed instead of producing a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub target_sinr_db: f64,
    pub realization: usize,
    pub algorithm: String,
    pub message: String,
}

/// A feasible solution that broke a constraint on re-checking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidSolution {
    pub target_sinr_db: f64,
    pub realization: usize,
    pub algorithm: String,
    pub violations: String,
}

/// A stored feasible solution, enough to rebuild it for validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub target_sinr_db: f64,
    pub realization: usize,
    pub algorithm: String,
    pub seed: u64,
    /// `B x K` weights as `(re, im)` pairs, row per station.
    pub weights: Vec<Vec<(f64, f64)>>,
    pub active_set: Vec<usize>,
    pub quant_noise: Vec<Option<f64>>,
    pub power_budgets: Vec<f64>,
    pub backhaul: Option<BackhaulAllocation>,
}

impl SolutionRecord {
    fn new(
        key: (f64, usize, &str),
        seed: u64,
        sol: &BeamformingSolution,
        alloc: Option<&BackhaulAllocation>,
    ) -> Self {
        let weights = (0..sol.weights.nrows())
            .map(|l| (0..sol.weights.ncols()).map(|k| (sol.weights[(l, k)].re, sol.weights[(l, k)].im)).collect())
            .collect();
        SolutionRecord {
            target_sinr_db: key.0,
            realization: key.1,
            algorithm: key.2.to_string(),
            seed,
            weights,
            active_set: sol.active_set.clone(),
            quant_noise: sol.quant_noise.clone(),
            power_budgets: sol.power_budgets.clone(),
            backhaul: alloc.cloned(),
        }
    }

    pub fn solution(&self) -> Result<BeamformingSolution> {
        let b = self.weights.len();
        let k = self.weights.first().map_or(0, Vec::len);
        if self.weights.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidConfig("ragged weight matrix in solution record".into()));
        }
        Ok(BeamformingSolution {
            weights: nalgebra::DMatrix::from_fn(b, k, |l, kk| {
                let (re, im) = self.weights[l][kk];
                num_complex::Complex64::new(re, im)
            }),
            active_set: self.active_set.clone(),
            quant_noise: self.quant_noise.clone(),
            power_budgets: self.power_budgets.clone(),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub means: Vec<MeanRow>,
    pub failures: Vec<CellFailure>,
    pub invalid: Vec<InvalidSolution>,
    /// Number of feasible solutions checked against every constraint.
    pub validated: usize,
    pub solutions: Vec<SolutionRecord>,
}

/// What one algorithm produced on one instance.
struct Produced {
    entries: Vec<Entry>,
    iterations: usize,
}

struct Entry {
    label: String,
    solution: Option<(BeamformingSolution, Option<BackhaulAllocation>)>,
}

fn single_shot(label: &str, res: Result<BeamformingSolution>) -> Result<Produced> {
    let solution = match res {
        Ok(s) => Some((s, None)),
        Err(Error::Infeasible(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Produced {
        entries: vec![Entry {
            label: label.to_string(),
            solution,
        }],
        iterations: 1,
    })
}

fn looped(label: &str, out: RunOutcome) -> Result<Produced> {
    if out.status == RunStatus::NumericalFailure {
        return Err(Error::NumericalFailure {
            context: "outer loop",
            iterations: out.iterations(),
        });
    }
    let pack = |it: Option<Iterate>| it.map(|i| (i.solution, Some(i.allocation)));
    let feasible = out.is_feasible();
    let iterations = out.iterations();
    Ok(Produced {
        entries: vec![
            Entry {
                label: label.to_string(),
                solution: if feasible { pack(out.last) } else { None },
            },
            Entry {
                label: format!("{label}{BEST_SUFFIX}"),
                solution: pack(out.best),
            },
        ],
        iterations,
    })
}

/// One labeled result of [`run_algorithm`].
#[derive(Debug, Clone)]
pub struct Labeled {
    pub label: String,
    /// `None` when the instance was infeasible for this label.
    pub solution: Option<(BeamformingSolution, Option<BackhaulAllocation>)>,
    pub iterations: usize,
}

/// Runs one algorithm on one instance. Infeasibility is a result; any other
/// error is a crash of the cell.
pub fn run_algorithm(
    algo: Algorithm,
    spec: &ExperimentSpec,
    cfg: &NetworkConfig,
    ch: &ChannelRealization,
) -> Result<Vec<Labeled>> {
    let budgets = cfg.initial_budgets_for(ch);
    let itcfg = spec.iteration_config();
    let solver = itcfg.beamforming.solver;
    let label = algo.label();
    let produced = match algo {
        Algorithm::Igsbpo => looped(label, run(cfg, ch, &itcfg)?)?,
        Algorithm::Gsbf => {
            let res = effective_params(cfg, ch, &budgets)
                .and_then(|p| gsbf_select(ch, &p, cfg, &itcfg.beamforming))
                .map(|s| s.solution);
            single_shot(label, res)?
        }
        Algorithm::Sp => single_shot(label, sparsity_pattern(ch, cfg, &budgets, &solver))?,
        Algorithm::Cb => single_shot(label, coordinated_beamforming(ch, cfg, &budgets, &solver))?,
        Algorithm::Gs => single_shot(label, greedy_selection(ch, cfg, &budgets, &solver))?,
        Algorithm::Oracle => single_shot(label, exhaustive_oracle(ch, cfg, &budgets, spec.oracle_cap, &solver))?,
        Algorithm::SpLoop => looped(label, run_with(cfg, ch, &itcfg, |p, c, n| sparsity_pattern_with(p, c, n, &solver))?)?,
        Algorithm::CbLoop => looped(label, run_with(cfg, ch, &itcfg, |p, c, n| coordinated_with(p, c, n, &solver))?)?,
        Algorithm::GsLoop => looped(label, run_with(cfg, ch, &itcfg, |p, c, n| greedy_with(p, c, n, &solver))?)?,
    };
    Ok(produced
        .entries
        .into_iter()
        .map(|e| Labeled {
            label: e.label,
            solution: e.solution,
            iterations: produced.iterations,
        })
        .collect())
}

#[derive(Default)]
struct CellBatch {
    rows: Vec<ResultRow>,
    failures: Vec<CellFailure>,
    invalid: Vec<InvalidSolution>,
    validated: usize,
    solutions: Vec<SolutionRecord>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

fn run_instance(spec: &ExperimentSpec, target_db: f64, realization: usize) -> CellBatch {
    let mut batch = CellBatch::default();
    let seed = realization_seed(spec.seed, realization);
    let setup = spec
        .preset
        .config(target_db)
        .and_then(|cfg| generate_channels(&spec.preset, &cfg, seed).map(|ch| (cfg, ch)));
    let (cfg, ch) = match setup {
        Ok(v) => v,
        Err(e) => {
            for label in spec.labels() {
                batch.failures.push(CellFailure {
                    target_sinr_db: target_db,
                    realization,
                    algorithm: label,
                    message: e.to_string(),
                });
            }
            return batch;
        }
    };
    for &algo in &spec.algorithms {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run_algorithm(algo, spec, &cfg, &ch)));
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let produced = match outcome {
            Ok(Ok(p)) => p,
            Ok(Err(e)) => {
                fail_cell(&mut batch, algo, target_db, realization, e.to_string());
                Vec::new()
            }
            Err(p) => {
                fail_cell(&mut batch, algo, target_db, realization, panic_message(p));
                Vec::new()
            }
        };
        for Labeled { label, solution, iterations } in produced {
            let mut row = ResultRow {
                target_sinr_db: target_db,
                realization,
                algorithm: label.clone(),
                network_power_w: None,
                total_tx_power_w: None,
                active_bs: 0,
                feasible: false,
                iterations,
                wall_ms,
            };
            if let Some((sol, alloc)) = solution {
                row.network_power_w = Some(network_power(&sol, &cfg));
                row.total_tx_power_w = Some(sol.total_budget());
                row.active_bs = sol.active_set.len();
                row.feasible = true;
                batch.validated += 1;
                match validate_solution(&sol, alloc.as_ref(), &ch, &cfg, spec.validation_tol) {
                    Ok(report) if report.is_feasible() => {}
                    Ok(report) => {
                        log::warn!("{label} at {target_db} dB, realization {realization}: {:?}", report.violations);
                        batch.invalid.push(InvalidSolution {
                            target_sinr_db: target_db,
                            realization,
                            algorithm: label.clone(),
                            violations: format!("{:?}", report.violations),
                        });
                    }
                    Err(e) => batch.invalid.push(InvalidSolution {
                        target_sinr_db: target_db,
                        realization,
                        algorithm: label.clone(),
                        violations: e.to_string(),
                    }),
                }
                if spec.dump_solutions {
                    batch
                        .solutions
                        .push(SolutionRecord::new((target_db, realization, &label), seed, &sol, alloc.as_ref()));
                }
            }
            batch.rows.push(row);
        }
    }
    batch
}

fn fail_cell(batch: &mut CellBatch, algo: Algorithm, target_db: f64, realization: usize, message: String) {
    log::error!("{algo} at {target_db} dB, realization {realization} crashed: {message}");
    for label in algo.row_labels() {
        batch.failures.push(CellFailure {
            target_sinr_db: target_db,
            realization,
            algorithm: label,
            message: message.clone(),
        });
    }
}

/// Runs the whole sweep on a bounded worker pool; output ordering does not
/// depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = spec.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let items: Vec<(f64, usize)> = spec
        .targets_db
        .iter()
        .flat_map(|&t| (0..spec.realizations).map(move |r| (t, r)))
        .collect();
    let batches: Vec<CellBatch> = pool.install(|| items.par_iter().map(|&(t, r)| run_instance(spec, t, r)).collect());

    let mut result = ExperimentResult::default();
    for b in batches {
        result.rows.extend(b.rows);
        result.failures.extend(b.failures);
        result.invalid.extend(b.invalid);
        result.validated += b.validated;
        result.solutions.extend(b.solutions);
    }
    let labels = spec.labels();
    let rank = |label: &str| labels.iter().position(|l| l == label).unwrap_or(usize::MAX);
    result.rows.sort_by(|a, b| {
        a.target_sinr_db
            .total_cmp(&b.target_sinr_db)
            .then(a.realization.cmp(&b.realization))
            .then(rank(&a.algorithm).cmp(&rank(&b.algorithm)))
    });
    result.solutions.sort_by(|a, b| {
        a.target_sinr_db
            .total_cmp(&b.target_sinr_db)
            .then(a.realization.cmp(&b.realization))
            .then(rank(&a.algorithm).cmp(&rank(&b.algorithm)))
    });
    result.means = summarize(spec, &result.rows, &result.failures);
    Ok(result)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-(target, label) means over feasible realizations.
pub fn summarize(spec: &ExperimentSpec, rows: &[ResultRow], failures: &[CellFailure]) -> Vec<MeanRow> {
    let mut targets = spec.targets_db.clone();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let mut out = Vec::new();
    for &t in &targets {
        for algo in &spec.algorithms {
            for label in algo.row_labels() {
                let cell: Vec<&ResultRow> =
                    rows.iter().filter(|r| r.target_sinr_db == t && r.algorithm == label).collect();
                let ok: Vec<&&ResultRow> = cell.iter().filter(|r| r.feasible).collect();
                out.push(MeanRow {
                    target_sinr_db: t,
                    algorithm: label.clone(),
                    mode: algo.mode(),
                    feasible: ok.len(),
                    infeasible: cell.len() - ok.len(),
                    failed: failures.iter().filter(|f| f.target_sinr_db == t && f.algorithm == label).count(),
                    mean_network_power_w: mean(ok.iter().filter_map(|r| r.network_power_w)),
                    mean_total_tx_power_w: mean(ok.iter().filter_map(|r| r.total_tx_power_w)),
                    mean_active_bs: mean(ok.iter().map(|r| r.active_bs as f64)),
                    mean_iterations: mean(ok.iter().map(|r| r.iterations as f64)),
                });
            }
        }
    }
    out
}

/// Re-checks stored solutions against freshly regenerated channels.
pub fn revalidate(spec: &ExperimentSpec, records: &[SolutionRecord], tol: f64) -> Result<Vec<InvalidSolution>> {
    let mut bad = Vec::new();
    for rec in records {
        let cfg = spec.preset.config(rec.target_sinr_db)?;
        let ch = generate_channels(&spec.preset, &cfg, rec.seed)?;
        let sol = rec.solution()?;
        let report = validate_solution(&sol, rec.backhaul.as_ref(), &ch, &cfg, tol)?;
        if !report.is_feasible() {
            bad.push(InvalidSolution {
                target_sinr_db: rec.target_sinr_db,
                realization: rec.realization,
                algorithm: rec.algorithm.clone(),
                violations: format!("{:?}", report.violations),
            });
        }
    }
    Ok(bad)
}
