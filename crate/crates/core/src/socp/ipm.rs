//! Homogeneous self-dual interior-point iterations.
//!
//! The embedding
//!
//! ```text
//! [0]   [ 0   A'  G'  c] [x]   [0]
//! [0] = [-A   0   0   b] [y] - [0]
//! [s]   [-G   0   0   h] [z]   [s]
//! [k]   [-c' -b' -h'  0] [t]   [k]
//! ```
//!
//! is driven to a complementary solution; `t > 0` recovers an optimum,
//! `k > 0` a certificate of infeasibility or unboundedness. Each Newton step
//! reduces to two solves with the quasi-definite system
//! `[[0, A', G'], [A, 0, 0], [G, 0, -W^2]]`, which in turn is reduced to
//! normal-equation form `G' W^{-2} G` and factored densely.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::cone::{Cone, NtScaling};
use super::{ConicProblem, ConicSolution, KktResiduals, SolveStatus, SolverSettings};

const STEP_FRACTION: f64 = 0.99;
const STATIC_REG: f64 = 1e-13;
const REFINE_STEPS: usize = 8;

struct Blocks<'a> {
    cones: &'a [Cone],
    offsets: Vec<usize>,
}

impl<'a> Blocks<'a> {
    fn new(cones: &'a [Cone]) -> Self {
        let mut offsets = Vec::with_capacity(cones.len() + 1);
        let mut off = 0;
        for k in cones {
            offsets.push(off);
            off += k.dim();
        }
        offsets.push(off);
        Blocks { cones, offsets }
    }

    fn iter(&self) -> impl Iterator<Item = (usize, &Cone, std::ops::Range<usize>)> + '_ {
        self.cones
            .iter()
            .enumerate()
            .map(move |(i, k)| (i, k, self.offsets[i]..self.offsets[i + 1]))
    }

    fn degree(&self) -> usize {
        self.cones.iter().map(Cone::degree).sum()
    }

    fn min_eigenvalue(&self, x: &DVector<f64>) -> f64 {
        self.iter()
            .map(|(_, k, r)| k.min_eigenvalue(&x.as_slice()[r]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Shifts `x` into the interior along the identity if needed.
    fn push_interior(&self, x: &mut DVector<f64>) {
        let shift = -self.min_eigenvalue(x);
        if shift >= 0.0 {
            for (_, k, r) in self.iter() {
                k.add_identity(&mut x.as_mut_slice()[r], 1.0 + shift);
            }
        }
    }

    fn max_step(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        self.iter()
            .map(|(_, k, r)| k.max_step(&x.as_slice()[r.clone()], &d.as_slice()[r]))
            .fold(f64::INFINITY, f64::min)
    }

    fn jordan_product(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for (_, k, r) in self.iter() {
            k.jordan_product(&u.as_slice()[r.clone()], &v.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
        }
        out
    }

    fn jordan_divide(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for (_, k, r) in self.iter() {
            k.jordan_divide(&u.as_slice()[r.clone()], &v.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
        }
        out
    }

    fn add_identity(&self, x: &mut DVector<f64>, alpha: f64) {
        for (_, k, r) in self.iter() {
            k.add_identity(&mut x.as_mut_slice()[r], alpha);
        }
    }
}

struct Scaling<'b> {
    blocks: &'b Blocks<'b>,
    nt: Vec<NtScaling>,
}

impl<'b> Scaling<'b> {
    fn identity(blocks: &'b Blocks<'b>) -> Self {
        let nt = blocks
            .iter()
            .map(|(_, k, r)| {
                let mut e = vec![0.0; r.len()];
                k.add_identity(&mut e, 1.0);
                NtScaling::new(k, &e, &e)
            })
            .collect();
        Scaling { blocks, nt }
    }

    fn nesterov_todd(blocks: &'b Blocks<'b>, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let nt = blocks
            .iter()
            .map(|(_, k, r)| NtScaling::new(k, &s.as_slice()[r.clone()], &z.as_slice()[r]))
            .collect();
        Scaling { blocks, nt }
    }

    fn apply(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for (i, _, r) in self.blocks.iter() {
            self.nt[i].apply(&v[r.clone()], &mut out.as_mut_slice()[r]);
        }
        out
    }

    fn apply_inverse(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for (i, _, r) in self.blocks.iter() {
            self.nt[i].apply_inverse(&v[r.clone()], &mut out.as_mut_slice()[r]);
        }
        out
    }
}

/// Factored reduced KKT system for one scaling.
struct Kkt<'p, 'b> {
    p: &'p ConicProblem,
    w: Scaling<'b>,
    lu: LU<f64, Dyn, Dyn>,
}

impl<'p, 'b> Kkt<'p, 'b> {
    fn factor(p: &'p ConicProblem, w: Scaling<'b>) -> Option<Self> {
        let (n, neq, m) = (p.num_vars(), p.num_eq(), p.num_slack());
        let mut ghat = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let col = w.apply_inverse(&p.g.as_slice()[j * m..(j + 1) * m]);
            ghat.set_column(j, &col);
        }
        let hmat = ghat.tr_mul(&ghat);
        let reg = STATIC_REG;
        let mut kmat = DMatrix::<f64>::zeros(n + neq, n + neq);
        kmat.view_mut((0, 0), (n, n)).copy_from(&hmat);
        for i in 0..n {
            kmat[(i, i)] += reg * hmat[(i, i)].max(1.0);
        }
        for i in 0..neq {
            for j in 0..n {
                kmat[(n + i, j)] = p.a[(i, j)];
                kmat[(j, n + i)] = p.a[(i, j)];
            }
            kmat[(n + i, n + i)] = -reg;
        }
        let lu = kmat.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Kkt { p, w, lu })
    }

    fn w2(&self, v: &DVector<f64>) -> DVector<f64> {
        let t = self.w.apply(v.as_slice());
        self.w.apply(t.as_slice())
    }

    fn w2_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        let t = self.w.apply_inverse(v.as_slice());
        self.w.apply_inverse(t.as_slice())
    }

    fn solve_once(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let (n, neq) = (self.p.num_vars(), self.p.num_eq());
        let mut rhs = DVector::<f64>::zeros(n + neq);
        let top = r1 + self.p.g.tr_mul(&self.w2_inverse(r3));
        rhs.rows_mut(0, n).copy_from(&top);
        rhs.rows_mut(n, neq).copy_from(r2);
        let sol = self.lu.solve(&rhs)?;
        let x = sol.rows(0, n).into_owned();
        let y = sol.rows(n, neq).into_owned();
        let z = self.w2_inverse(&(&self.p.g * &x - r3));
        Some((x, y, z))
    }

    /// Solves the full `[[0, A', G'], [A, 0, 0], [G, 0, -W^2]]` system with
    /// iterative refinement.
    fn solve(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let (mut x, mut y, mut z) = self.solve_once(r1, r2, r3)?;
        let scale = 1.0 + r1.amax().max(r2.amax()).max(r3.amax());
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let e1 = r1 - self.p.a.tr_mul(&y) - self.p.g.tr_mul(&z);
            let e2 = r2 - &self.p.a * &x;
            let e3 = r3 - &self.p.g * &x + self.w2(&z);
            let err = e1.amax().max(e2.amax()).max(e3.amax());
            if !err.is_finite() {
                return None;
            }
            if err <= 1e-15 * scale || err >= 0.5 * last {
                break;
            }
            last = err;
            let (dx, dy, dz) = self.solve_once(&e1, &e2, &e3)?;
            x += dx;
            y += dy;
            z += dz;
        }
        Some((x, y, z))
    }
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    rx: DVector<f64>,
    ry: DVector<f64>,
    rz: DVector<f64>,
    rt: f64,
}

fn residuals(p: &ConicProblem, it: &Iterate) -> Residuals {
    Residuals {
        rx: p.a.tr_mul(&it.y) + p.g.tr_mul(&it.z) + &p.c * it.tau,
        ry: -(&p.a * &it.x) + &p.b * it.tau,
        rz: -(&p.g * &it.x) + &p.h * it.tau - &it.s,
        rt: -p.c.dot(&it.x) - p.b.dot(&it.y) - p.h.dot(&it.z) - it.kappa,
    }
}

struct Direction {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

pub(crate) fn solve_hsde(p: &ConicProblem, settings: &SolverSettings) -> ConicSolution {
    let blocks = Blocks::new(&p.cones);
    if p.num_vars() == 0 {
        return solve_without_variables(p, &blocks);
    }
    let (n, neq, m) = (p.num_vars(), p.num_eq(), p.num_slack());
    let failure = |iterations| ConicSolution {
        status: SolveStatus::NumericalFailure,
        x: DVector::zeros(n),
        y: DVector::zeros(neq),
        z: DVector::zeros(m),
        s: DVector::zeros(m),
        objective: f64::NAN,
        residuals: KktResiduals {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
        },
        iterations,
    };

    // initial point from two least-squares solves with W = I
    let Some(kkt0) = Kkt::factor(p, Scaling::identity(&blocks)) else {
        return failure(0);
    };
    let Some((x, _, zp)) = kkt0.solve(&DVector::zeros(n), &p.b, &p.h) else {
        return failure(0);
    };
    let mut s = -zp;
    blocks.push_interior(&mut s);
    let Some((_, y, mut z)) = kkt0.solve(&-&p.c, &DVector::zeros(neq), &DVector::zeros(m)) else {
        return failure(0);
    };
    blocks.push_interior(&mut z);
    drop(kkt0);
    let mut it = Iterate {
        x,
        y,
        z,
        s,
        tau: 1.0,
        kappa: 1.0,
    };

    let nu = blocks.degree() as f64;
    let tol = settings.tol;
    let bh_norm = (p.b.norm_squared() + p.h.norm_squared()).sqrt().max(1.0);
    let c_norm = p.c.norm().max(1.0);
    let mut last = failure(0);

    for iter in 0..=settings.max_iters {
        let r = residuals(p, &it);

        // termination in the normalized (x/tau, ...) variables
        let pres = (r.ry.norm_squared() + r.rz.norm_squared()).sqrt() / it.tau / bh_norm;
        let dres = r.rx.norm() / it.tau / c_norm;
        let pcost = p.c.dot(&it.x) / it.tau;
        let dcost = -(p.b.dot(&it.y) + p.h.dot(&it.z)) / it.tau;
        let scale = pcost.abs().max(1.0);
        let gap = (pcost - dcost).abs() / scale;
        let compl = it.s.dot(&it.z) / (it.tau * it.tau) / scale;
        if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
            return last;
        }
        last = ConicSolution {
            status: SolveStatus::NumericalFailure,
            x: &it.x / it.tau,
            y: &it.y / it.tau,
            z: &it.z / it.tau,
            s: &it.s / it.tau,
            objective: pcost,
            residuals: KktResiduals {
                primal: pres,
                dual: dres,
                gap,
            },
            iterations: iter,
        };
        if pres <= tol && dres <= tol && gap <= tol && compl <= tol {
            last.status = SolveStatus::Optimal;
            return last;
        }
        let hz = p.b.dot(&it.y) + p.h.dot(&it.z);
        if hz < 0.0 {
            let ray = (p.a.tr_mul(&it.y) + p.g.tr_mul(&it.z)).norm() / -hz;
            if ray <= tol {
                return ConicSolution {
                    status: SolveStatus::Infeasible,
                    x: DVector::zeros(n),
                    y: &it.y / -hz,
                    z: &it.z / -hz,
                    s: DVector::zeros(m),
                    objective: f64::INFINITY,
                    residuals: KktResiduals {
                        primal: f64::INFINITY,
                        dual: ray,
                        gap: 0.0,
                    },
                    iterations: iter,
                };
            }
        }
        let cx = p.c.dot(&it.x);
        if cx < 0.0 {
            let ray = ((&p.a * &it.x).norm_squared() + (&p.g * &it.x + &it.s).norm_squared()).sqrt() / -cx;
            if ray <= tol {
                return ConicSolution {
                    status: SolveStatus::Unbounded,
                    x: &it.x / -cx,
                    y: DVector::zeros(neq),
                    z: DVector::zeros(m),
                    s: &it.s / -cx,
                    objective: f64::NEG_INFINITY,
                    residuals: KktResiduals {
                        primal: ray,
                        dual: f64::INFINITY,
                        gap: 0.0,
                    },
                    iterations: iter,
                };
            }
        }
        if iter == settings.max_iters {
            break;
        }

        let w = Scaling::nesterov_todd(&blocks, &it.s, &it.z);
        let lambda = w.apply(it.z.as_slice());
        let Some(kkt) = Kkt::factor(p, w) else {
            return last;
        };
        let Some((x1, y1, z1)) = kkt.solve(&-&p.c, &p.b, &p.h) else {
            return last;
        };
        let denom_tau = it.kappa / it.tau - p.c.dot(&x1) - p.b.dot(&y1) - p.h.dot(&z1);

        let direction = |dx_rhs: DVector<f64>,
                         dy_rhs: DVector<f64>,
                         dz_rhs: DVector<f64>,
                         dt_rhs: f64,
                         ds_rhs: DVector<f64>,
                         dk_rhs: f64|
         -> Option<Direction> {
            let t = blocks.jordan_divide(&lambda, &ds_rhs);
            let wt = kkt.w.apply(t.as_slice());
            let (x2, y2, z2) = kkt.solve(&dx_rhs, &-dy_rhs, &(-dz_rhs - &wt))?;
            let dtau = (dt_rhs + dk_rhs / it.tau + p.c.dot(&x2) + p.b.dot(&y2) + p.h.dot(&z2)) / denom_tau;
            let dx = x2 + &x1 * dtau;
            let dy = y2 + &y1 * dtau;
            let dz = z2 + &z1 * dtau;
            let wdz = kkt.w.apply(dz.as_slice());
            let ds = kkt.w.apply((t - wdz).as_slice());
            let dkappa = (dk_rhs - it.kappa * dtau) / it.tau;
            Some(Direction {
                x: dx,
                y: dy,
                z: dz,
                s: ds,
                tau: dtau,
                kappa: dkappa,
            })
        };
        let step_to_boundary = |d: &Direction| {
            let mut a = blocks.max_step(&it.s, &d.s).min(blocks.max_step(&it.z, &d.z));
            if d.tau < 0.0 {
                a = a.min(-it.tau / d.tau);
            }
            if d.kappa < 0.0 {
                a = a.min(-it.kappa / d.kappa);
            }
            a
        };

        // predictor
        let lam_sq = blocks.jordan_product(&lambda, &lambda);
        let Some(aff) = direction(
            -&r.rx,
            -&r.ry,
            -&r.rz,
            -r.rt,
            -&lam_sq,
            -it.tau * it.kappa,
        ) else {
            return last;
        };
        let alpha_aff = step_to_boundary(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);
        let mu = (it.s.dot(&it.z) + it.tau * it.kappa) / (nu + 1.0);

        // Mehrotra corrector
        let ds_scaled = kkt.w.apply_inverse(aff.s.as_slice());
        let dz_scaled = kkt.w.apply(aff.z.as_slice());
        let mut ds_rhs = -lam_sq - blocks.jordan_product(&ds_scaled, &dz_scaled);
        blocks.add_identity(&mut ds_rhs, sigma * mu);
        let dk_rhs = -it.tau * it.kappa - aff.tau * aff.kappa + sigma * mu;
        let f = 1.0 - sigma;
        let Some(dir) = direction(-&r.rx * f, -&r.ry * f, -&r.rz * f, -r.rt * f, ds_rhs, dk_rhs) else {
            return last;
        };
        let alpha = (STEP_FRACTION * step_to_boundary(&dir)).min(1.0);
        if !(alpha.is_finite() && alpha > 1e-12) {
            return last;
        }
        it.x.axpy(alpha, &dir.x, 1.0);
        it.y.axpy(alpha, &dir.y, 1.0);
        it.z.axpy(alpha, &dir.z, 1.0);
        it.s.axpy(alpha, &dir.s, 1.0);
        it.tau += alpha * dir.tau;
        it.kappa += alpha * dir.kappa;
    }
    last
}

/// With no variables the problem is a membership test `b = 0`, `h in K`.
fn solve_without_variables(p: &ConicProblem, blocks: &Blocks<'_>) -> ConicSolution {
    let (neq, m) = (p.num_eq(), p.num_slack());
    let mut sol = ConicSolution {
        status: SolveStatus::Optimal,
        x: DVector::zeros(0),
        y: DVector::zeros(neq),
        z: DVector::zeros(m),
        s: p.h.clone(),
        objective: 0.0,
        residuals: KktResiduals::default(),
        iterations: 0,
    };
    if let Some(i) = p.b.iter().position(|v| *v != 0.0) {
        sol.status = SolveStatus::Infeasible;
        sol.y[i] = -1.0 / p.b[i];
        return sol;
    }
    // a cone block containing h is certified by the projection of -h
    for (_, k, r) in blocks.iter() {
        let h = &p.h.as_slice()[r.clone()];
        let neg: Vec<f64> = h.iter().map(|v| -v).collect();
        let mut proj = vec![0.0; h.len()];
        k.project(&neg, &mut proj);
        let hz: f64 = h.iter().zip(&proj).map(|(a, b)| a * b).sum();
        if hz < 0.0 {
            sol.status = SolveStatus::Infeasible;
            for (i, v) in r.zip(proj) {
                sol.z[i] = v / -hz;
            }
            return sol;
        }
    }
    sol
}
