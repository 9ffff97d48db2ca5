//! Stage one: group-sparse beamforming with quantized wireline fronthaul.
//!
//! With the quantization noise tied to the beamformer by the rate-distortion
//! equality `q_l^2 = |w_l|^2 / (2^{C_l} - 1)`, the network power problem
//! becomes a weighted transmit-power program with per-BS caps `P_hat_l` and
//! cost multipliers `beta_l`. Which stations to switch off is decided by a
//! reweighted mixed l1/l2 relaxation followed by an ordered bisection over
//! fixed-set programs.
//!
//! Both programs share one conic layout. For active stations `j` the real
//! variables are the embedded weights `w_jk`, and an epigraph `t_j >= |w_j|`
//! that carries the group norm, the per-BS cap `t_j <= sqrt(P_hat_j)`, and the
//! quantization terms of the SINR cones (`w^H H_k w <= sum_j c_jk t_j^2`).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Infeasibility, Result};
use crate::model::{BeamformingSolution, ChannelRealization, NetworkConfig};
use crate::socp::{self, ComplexEmbedding, Cone, ConicProblem, SolveStatus, SolverSettings};

/// Per-BS quantities of the reformulated stage-one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveParams {
    /// Cost multiplier `beta_l`: `2^C / (xi (2^C - 1))` wireline, `1 / xi` wireless.
    pub beta: Vec<f64>,
    /// Effective cap `P_hat_l`: `P_l (2^C - 1) / 2^C` wireline, `P_l` wireless.
    pub p_hat: Vec<f64>,
    /// `num_wireline x K`, entry `|h_lk|^2 / (2^{C_l} - 1)`.
    pub quant_coupling: DMatrix<f64>,
    /// The budgets `P_l` the caps were derived from.
    pub budgets: Vec<f64>,
}

/// Nonnegative group weights of the mixed-norm objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeights(pub Vec<f64>);

#[derive(Debug, Clone, Copy)]
pub struct BeamformingSettings {
    pub solver: SolverSettings,
    pub mm_max_iters: usize,
    /// Relative decrease of the MM surrogate below which reweighting stops.
    pub mm_tol: f64,
    /// Reweighting regularizer; `None` means `1e-3 / B`.
    pub epsilon: Option<f64>,
}

impl Default for BeamformingSettings {
    fn default() -> Self {
        BeamformingSettings {
            solver: SolverSettings::default(),
            mm_max_iters: 20,
            mm_tol: 1e-4,
            epsilon: None,
        }
    }
}

impl BeamformingSettings {
    pub fn epsilon_for(&self, num_bs: usize) -> f64 {
        self.epsilon.unwrap_or(1e-3 / num_bs as f64)
    }
}

/// Grid on which switch-off priorities are compared, relative to the largest.
const THETA_RESOLUTION: f64 = 1e6;

/// `2^C - 1` without cancellation for small `C`.
fn pow2_minus_one(c: f64) -> f64 {
    (c * std::f64::consts::LN_2).exp_m1()
}

/// `(2^C - 1) / 2^C = 1 - 2^-C`.
fn one_minus_pow2_neg(c: f64) -> f64 {
    -(-c * std::f64::consts::LN_2).exp_m1()
}

pub fn effective_params(cfg: &NetworkConfig, ch: &ChannelRealization, budgets: &[f64]) -> Result<EffectiveParams> {
    ch.check(cfg)?;
    if budgets.len() != cfg.num_bs() {
        return Err(Error::DimensionMismatch {
            what: "power budgets",
            expected: cfg.num_bs(),
            found: budgets.len(),
        });
    }
    if let Some(p) = budgets.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidConfig(format!("power budget {p} must be positive")));
    }
    let b = cfg.num_bs();
    let mut beta = Vec::with_capacity(b);
    let mut p_hat = Vec::with_capacity(b);
    let mut quant_coupling = DMatrix::zeros(cfg.num_wireline(), cfg.num_users());
    for l in 0..b {
        let xi = cfg.drain_efficiency(l);
        match cfg.capacity(l) {
            Some(c) => {
                if !(c > 0.0) {
                    return Err(Error::InvalidConfig(format!("capacity {c} must be positive")));
                }
                let frac = one_minus_pow2_neg(c);
                beta.push(1.0 / (xi * frac));
                p_hat.push(budgets[l] * frac);
                let denom = pow2_minus_one(c);
                for k in 0..cfg.num_users() {
                    quant_coupling[(l, k)] = ch.h(l, k).norm_sqr() / denom;
                }
            }
            None => {
                beta.push(1.0 / xi);
                p_hat.push(budgets[l]);
            }
        }
    }
    Ok(EffectiveParams {
        beta,
        p_hat,
        quant_coupling,
        budgets: budgets.to_vec(),
    })
}

/// Quantization noise from the rate-distortion equality, one entry per
/// wireline station (`None` when inactive).
pub fn quantization_noise(sol: &BeamformingSolution, cfg: &NetworkConfig) -> Vec<Option<f64>> {
    (0..cfg.num_wireline())
        .map(|l| {
            sol.is_active(l).then(|| {
                let c = cfg.capacity(l).expect("wireline station has a capacity");
                sol.bs_transmit_power(l) / pow2_minus_one(c)
            })
        })
        .collect()
}

/// Group norm `|w_l|_2` of every station.
pub fn group_norms(sol: &BeamformingSolution) -> Vec<f64> {
    (0..sol.weights.nrows())
        .map(|l| sol.bs_transmit_power(l).sqrt())
        .collect()
}

enum Objective<'a> {
    /// minimize `sum_j cost_j |w_j|^2`, posed as minimizing its square root
    Quadratic(&'a [f64]),
    /// minimize `sum_j omega_j |w_j|`
    GroupNorm(&'a [f64]),
}

struct Layout<'a> {
    active: &'a [usize],
    users: usize,
    embed: ComplexEmbedding,
}

impl<'a> Layout<'a> {
    fn w(&self, j: usize, k: usize) -> usize {
        self.embed.re(j * self.users + k)
    }

    fn t(&self, j: usize) -> usize {
        self.embed.real_dim() + j
    }

    fn num_vars(&self, quadratic: bool) -> usize {
        self.embed.real_dim() + self.active.len() + usize::from(quadratic)
    }
}

/// Sparse rows accumulated before densifying.
#[derive(Default)]
struct RowBuilder {
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl RowBuilder {
    fn push(&mut self, entries: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(entries);
        self.rhs.push(rhs);
    }

    fn dense(&self, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut m = DMatrix::zeros(self.rows.len(), n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        (m, DVector::from_vec(self.rhs.clone()))
    }
}

fn solve_program(
    active: &[usize],
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    objective: Objective<'_>,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let (b, kk) = (cfg.num_bs(), cfg.num_users());
    let layout = Layout {
        active,
        users: kk,
        embed: ComplexEmbedding::new(active.len() * kk),
    };
    let quadratic = matches!(objective, Objective::Quadratic(_));
    let n = layout.num_vars(quadratic);
    let sigma = cfg.access_noise_power().sqrt();
    // SINR cones are scaled by 1/sigma so the noise entry is 1
    let rho = 1.0 / sigma;

    let mut g = RowBuilder::default();
    let mut cones = Vec::new();

    // group epigraphs t_j >= |w_j|
    for j in 0..active.len() {
        g.push(vec![(layout.t(j), -1.0)], 0.0);
        for k in 0..kk {
            let re = layout.w(j, k);
            g.push(vec![(re, -1.0)], 0.0);
            g.push(vec![(re + 1, -1.0)], 0.0);
        }
        cones.push(Cone::SecondOrder(1 + 2 * kk));
    }
    // per-BS caps t_j <= sqrt(P_hat)
    for (j, &l) in active.iter().enumerate() {
        g.push(vec![(layout.t(j), 1.0)], params.p_hat[l].sqrt());
    }
    cones.push(Cone::NonNegative(active.len()));

    // SINR cones and the phase-fixing equalities Im(h_k^H w_k) = 0
    let mut a = RowBuilder::default();
    let wireline: Vec<(usize, usize)> = active
        .iter()
        .enumerate()
        .filter(|(_, &l)| cfg.is_wireline(l))
        .map(|(j, &l)| (j, l))
        .collect();
    let inner_rows = |k: usize, i: usize| -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        // rows of h_k^H w_i over the embedded w_{.,i}
        let mut re = Vec::with_capacity(2 * active.len());
        let mut im = Vec::with_capacity(2 * active.len());
        for (j, &l) in active.iter().enumerate() {
            let h: Complex64 = ch.h(l, k);
            let col = layout.w(j, i);
            re.push((col, h.re));
            re.push((col + 1, h.im));
            im.push((col, -h.im));
            im.push((col + 1, h.re));
        }
        (re, im)
    };
    let scaled = |row: Vec<(usize, f64)>, f: f64| row.into_iter().map(|(c, v)| (c, v * f)).collect::<Vec<_>>();
    for k in 0..kk {
        let (re_kk, im_kk) = inner_rows(k, k);
        let head = -rho / cfg.sinr_target(k).sqrt();
        g.push(scaled(re_kk, head), 0.0);
        for i in (0..kk).filter(|&i| i != k) {
            let (re, im) = inner_rows(k, i);
            g.push(scaled(re, -rho), 0.0);
            g.push(scaled(im, -rho), 0.0);
        }
        for &(j, l) in &wireline {
            g.push(vec![(layout.t(j), -rho * params.quant_coupling[(l, k)].sqrt())], 0.0);
        }
        g.push(vec![], 1.0);
        cones.push(Cone::SecondOrder(2 * kk + wireline.len()));
        a.push(im_kk, 0.0);
    }

    let mut c = DVector::zeros(n);
    match objective {
        Objective::Quadratic(cost) => {
            let obj = n - 1;
            c[obj] = 1.0;
            g.push(vec![(obj, -1.0)], 0.0);
            for (j, &l) in active.iter().enumerate() {
                g.push(vec![(layout.t(j), -cost[l].sqrt())], 0.0);
            }
            cones.push(Cone::SecondOrder(1 + active.len()));
        }
        Objective::GroupNorm(omega) => {
            for (j, &l) in active.iter().enumerate() {
                c[layout.t(j)] = omega[l];
            }
        }
    }

    let (gm, h) = g.dense(n);
    let (am, bv) = a.dense(n);
    let problem = ConicProblem::new(c, am, bv, gm, h, cones)?;
    let sol = socp::solve(&problem, settings)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::Infeasible(Infeasibility::Beamforming)),
        SolveStatus::Unbounded | SolveStatus::NumericalFailure => {
            return Err(Error::NumericalFailure {
                context: "stage-one beamforming program",
                iterations: sol.iterations,
            })
        }
    }

    let mut weights = DMatrix::from_element(b, kk, Complex64::new(0.0, 0.0));
    for (j, &l) in active.iter().enumerate() {
        for k in 0..kk {
            let re = layout.w(j, k);
            weights[(l, k)] = Complex64::new(sol.x[re], sol.x[re + 1]);
        }
    }
    let mut solution = BeamformingSolution {
        weights,
        active_set: active.to_vec(),
        quant_noise: vec![None; cfg.num_wireline()],
        power_budgets: params.budgets.clone(),
    };
    solution.quant_noise = quantization_noise(&solution, cfg);
    Ok(solution)
}

fn check_active(active: &[usize], cfg: &NetworkConfig) -> Result<Vec<usize>> {
    if active.is_empty() {
        return Err(Error::InvalidConfig("active set must be nonempty".into()));
    }
    let mut set = active.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(&l) = set.iter().find(|&&l| l >= cfg.num_bs()) {
        return Err(Error::IndexOutOfRange {
            what: "base stations",
            index: l,
            len: cfg.num_bs(),
        });
    }
    Ok(set)
}

/// Minimum weighted transmit power beamformer on a fixed set of stations,
/// `min sum_{l in active} cost_l |w_l|^2` subject to the SINR cones and the
/// per-BS caps. With `cost = beta` this is the stage-one problem for a
/// given active set.
pub fn solve_fixed_set_socp(
    active: &[usize],
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    cost: &[f64],
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let set = check_active(active, cfg)?;
    if cost.len() != cfg.num_bs() {
        return Err(Error::DimensionMismatch {
            what: "per-BS cost",
            expected: cfg.num_bs(),
            found: cost.len(),
        });
    }
    solve_program(&set, params, ch, cfg, Objective::Quadratic(cost), settings)
}

/// Weighted mixed l1/l2 relaxation over all stations:
/// `min sum_l omega_l |w_l|_2` subject to the SINR cones and the caps.
pub fn solve_weighted_group_relaxation(
    weights: &GroupWeights,
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    if weights.0.len() != cfg.num_bs() {
        return Err(Error::DimensionMismatch {
            what: "group weights",
            expected: cfg.num_bs(),
            found: weights.0.len(),
        });
    }
    if weights.0.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidConfig("group weights must be nonnegative and finite".into()));
    }
    let all: Vec<usize> = (0..cfg.num_bs()).collect();
    solve_program(&all, params, ch, cfg, Objective::GroupNorm(&weights.0), settings)
}

/// `sqrt(beta_l P^c_l)`: the weight of the tightest positively homogeneous
/// lower bound of `beta_l |w_l|^2 + P^c_l 1{w_l != 0}`, up to a factor 2.
pub fn base_weights(params: &EffectiveParams, cfg: &NetworkConfig) -> GroupWeights {
    GroupWeights(
        (0..cfg.num_bs())
            .map(|l| (params.beta[l] * cfg.relative_power(l)).sqrt())
            .collect(),
    )
}

/// Majorization-minimization reweighting
/// `omega_l = sqrt(beta_l P^c_l) / (|w_l|_2 + epsilon)`.
pub fn mm_reweight(
    sol: &BeamformingSolution,
    params: &EffectiveParams,
    cfg: &NetworkConfig,
    epsilon: f64,
) -> GroupWeights {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let base = base_weights(params, cfg);
    GroupWeights(
        group_norms(sol)
            .into_iter()
            .zip(base.0)
            .map(|(norm, w)| w / (norm + epsilon))
            .collect(),
    )
}

/// Concave surrogate `sum_l sqrt(beta_l P^c_l) ln(|w_l|_2 + epsilon)` that the
/// reweighting iterations majorize; it never increases across MM steps.
pub fn mm_surrogate(sol: &BeamformingSolution, params: &EffectiveParams, cfg: &NetworkConfig, epsilon: f64) -> f64 {
    base_weights(params, cfg)
        .0
        .iter()
        .zip(group_norms(sol))
        .map(|(w, norm)| w * (norm + epsilon).ln())
        .sum()
}

/// Result of a relaxation-driven selection.
#[derive(Debug, Clone)]
pub struct Selection {
    pub active_set: Vec<usize>,
    pub solution: BeamformingSolution,
    /// MM surrogate after each relaxation solve (one entry when not reweighted).
    pub surrogate_trace: Vec<f64>,
}

/// Switch-off priority `theta_l = |h_l| / sqrt(beta_l P^c_l) * |w_l|`;
/// returns station indices in switch-off order (smallest theta first, ties by index).
pub fn switch_off_order(
    relaxed: &BeamformingSolution,
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
) -> Vec<usize> {
    let norms = group_norms(relaxed);
    let theta: Vec<f64> = (0..cfg.num_bs())
        .map(|l| {
            let gain: f64 = (0..cfg.num_users()).map(|k| ch.h(l, k).norm_sqr()).sum::<f64>().sqrt();
            let cost = (params.beta[l] * cfg.relative_power(l)).sqrt();
            if cost > 0.0 {
                gain / cost * norms[l]
            } else {
                f64::INFINITY
            }
        })
        .collect();
    // priorities closer than the solver accuracy count as ties
    let top = theta.iter().copied().filter(|t| t.is_finite()).fold(0.0, f64::max);
    let key = |t: f64| -> u64 {
        if !t.is_finite() {
            u64::MAX
        } else if top > 0.0 {
            (t / top * THETA_RESOLUTION).round() as u64
        } else {
            0
        }
    };
    let mut order: Vec<usize> = (0..cfg.num_bs()).collect();
    order.sort_by_key(|&l| (key(theta[l]), l));
    order
}

/// Largest prefix of `order` that can be switched off while the remaining
/// set stays feasible, found by bisection. Returns the beta-cost solution on
/// the retained set.
pub fn bisect_switch_off(
    order: &[usize],
    params: &EffectiveParams,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let b = order.len();
    let retained = |j: usize| -> Vec<usize> {
        let mut set = order[j..].to_vec();
        set.sort_unstable();
        set
    };
    let probe = |j: usize| -> Result<Option<BeamformingSolution>> {
        match solve_fixed_set_socp(&retained(j), params, ch, cfg, &params.beta, settings) {
            Ok(s) => Ok(Some(s)),
            Err(Error::Infeasible(_)) => Ok(None),
            Err(Error::NumericalFailure { iterations, .. }) => {
                log::warn!("fixed-set program failed after {iterations} iterations; treating set as infeasible");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    // lo: feasible switch-off count, hi: infeasible (or past the end)
    let mut best = match probe(0)? {
        Some(s) => s,
        None => return Err(Error::Infeasible(Infeasibility::Beamforming)),
    };
    let (mut lo, mut hi) = (0usize, b);
    if let Some(s) = probe(b - 1)? {
        return Ok(s);
    }
    hi = hi.min(b - 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match probe(mid)? {
            Some(s) => {
                lo = mid;
                best = s;
            }
            None => hi = mid,
        }
    }
    Ok(best)
}

/// Group-sparse beamforming selection: MM-reweighted relaxation, ordering by
/// switch-off priority, bisection on the number of switched-off stations and a
/// final beta-cost program on the retained set.
pub fn gsbf_select(
    ch: &ChannelRealization,
    params: &EffectiveParams,
    cfg: &NetworkConfig,
    settings: &BeamformingSettings,
) -> Result<Selection> {
    let eps = settings.epsilon_for(cfg.num_bs());
    let mut weights = base_weights(params, cfg);
    let mut relaxed = solve_weighted_group_relaxation(&weights, params, ch, cfg, &settings.solver)?;
    let mut trace = vec![mm_surrogate(&relaxed, params, cfg, eps)];
    for _ in 0..settings.mm_max_iters {
        weights = mm_reweight(&relaxed, params, cfg, eps);
        let next = match solve_weighted_group_relaxation(&weights, params, ch, cfg, &settings.solver) {
            Ok(s) => s,
            Err(Error::NumericalFailure { .. }) => {
                log::warn!("reweighted relaxation failed; keeping previous MM iterate");
                break;
            }
            Err(e) => return Err(e),
        };
        let prev = *trace.last().expect("nonempty");
        let cur = mm_surrogate(&next, params, cfg, eps);
        trace.push(cur);
        relaxed = next;
        if (prev - cur) < settings.mm_tol * prev.abs().max(1.0) {
            break;
        }
    }
    let order = switch_off_order(&relaxed, params, ch, cfg);
    let solution = bisect_switch_off(&order, params, ch, cfg, &settings.solver)?;
    Ok(Selection {
        active_set: solution.active_set.clone(),
        solution,
        surrogate_trace: trace,
    })
}
