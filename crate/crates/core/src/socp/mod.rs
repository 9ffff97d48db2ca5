//! Dense second-order cone programming.
//!
//! Problems are posed in the standard conic form
//!
//! ```text
//! minimize    c'x
//! subject to  A x = b
//!             G x + s = h,   s in K = K_1 x ... x K_r
//! ```
//!
//! with each `K_i` a nonnegative orthant or a second-order cone. The dual is
//! `maximize -b'y - h'z  s.t.  c + A'y + G'z = 0,  z in K`.
//!
//! [`solve`] runs a homogeneous self-dual interior-point method with
//! Nesterov-Todd scaling and Mehrotra predictor-corrector steps. All linear
//! algebra is dense, which is the right trade-off for the few-hundred-variable
//! beamforming programs this crate produces.

mod cone;
mod embed;
mod ipm;
mod presolve;

use nalgebra::{DMatrix, DVector};

pub use cone::Cone;
pub use embed::ComplexEmbedding;

use crate::error::{Error, Result};

/// A conic program in standard form; see the module docs.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProblem {
    /// Builds a problem, checking that all dimensions agree.
    pub fn new(
        c: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
        cones: Vec<Cone>,
    ) -> Result<Self> {
        let p = ConicProblem {
            c,
            a,
            b,
            g,
            h,
            cones,
        };
        p.check_dimensions()?;
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b.len()
    }

    pub fn num_slack(&self) -> usize {
        self.h.len()
    }

    pub(crate) fn check_dimensions(&self) -> Result<()> {
        let n = self.c.len();
        let check = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found,
                })
            }
        };
        check("A columns", n, self.a.ncols())?;
        check("A rows", self.b.len(), self.a.nrows())?;
        check("G columns", n, self.g.ncols())?;
        check("G rows", self.h.len(), self.g.nrows())?;
        let cone_total: usize = self.cones.iter().map(Cone::dim).sum();
        check("cone dimensions", self.h.len(), cone_total)?;
        if self.cones.iter().any(|k| matches!(k, Cone::SecondOrder(0))) {
            return Err(Error::InvalidConfig(
                "second-order cone of dimension 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// `y`, `z` of the solution hold a Farkas certificate normalized to `b'y + h'z = -1`.
    Infeasible,
    /// `x` of the solution holds a recession direction normalized to `c'x = -1`.
    Unbounded,
    NumericalFailure,
}

/// Normalized KKT residuals; see [`kkt_residuals`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    /// Equality multipliers.
    pub y: DVector<f64>,
    /// Cone multipliers.
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iters: 200,
        }
    }
}

/// KKT residuals of a primal-dual pair `(x, (y, z))`.
///
/// * primal: `sqrt(|Ax - b|^2 + dist(h - Gx, K)^2) / max(1, |(b, h)|)`
/// * dual: `sqrt(|c + A'y + G'z|^2 + dist(z, K)^2) / max(1, |c|)`
/// * gap: `|c'x + b'y + h'z| / max(1, |c'x|)`
pub fn kkt_residuals(
    p: &ConicProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<KktResiduals> {
    p.check_dimensions()?;
    let dims = [
        ("primal vector", p.num_vars(), x.len()),
        ("equality multipliers", p.num_eq(), y.len()),
        ("cone multipliers", p.num_slack(), z.len()),
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
    let req = &p.a * x - &p.b;
    let s = &p.h - &p.g * x;
    let rc = &p.c + p.a.tr_mul(y) + p.g.tr_mul(z);
    let mut s_dist2 = 0.0;
    let mut z_dist2 = 0.0;
    let mut off = 0;
    for k in &p.cones {
        let d = k.dim();
        s_dist2 += k.distance(&s.as_slice()[off..off + d]).powi(2);
        z_dist2 += k.distance(&z.as_slice()[off..off + d]).powi(2);
        off += d;
    }
    let bh = (p.b.norm_squared() + p.h.norm_squared()).sqrt();
    let pcost = p.c.dot(x);
    Ok(KktResiduals {
        primal: (req.norm_squared() + s_dist2).sqrt() / bh.max(1.0),
        dual: (rc.norm_squared() + z_dist2).sqrt() / p.c.norm().max(1.0),
        gap: (pcost + p.b.dot(y) + p.h.dot(z)).abs() / pcost.abs().max(1.0),
    })
}

/// Solves a conic program.
///
/// Returns `Err` only for malformed input; infeasibility, unboundedness and
/// non-convergence are reported through [`ConicSolution::status`].
pub fn solve(p: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    p.check_dimensions()?;
    let reduced = match presolve::presolve(p) {
        presolve::Presolved::Reduced(r) => r,
        presolve::Presolved::Infeasible { y, z } => {
            let residuals = KktResiduals {
                primal: f64::INFINITY,
                dual: (p.a.tr_mul(&y) + p.g.tr_mul(&z)).norm(),
                gap: 0.0,
            };
            return Ok(ConicSolution {
                status: SolveStatus::Infeasible,
                x: DVector::zeros(p.num_vars()),
                y,
                z,
                s: DVector::zeros(p.num_slack()),
                objective: f64::INFINITY,
                residuals,
                iterations: 0,
            });
        }
    };
    let inner = ipm::solve_hsde(&reduced.problem, settings);
    let mut sol = reduced.restore(p, inner);
    if sol.status == SolveStatus::Optimal {
        sol.residuals = kkt_residuals(p, &sol.x, &sol.y, &sol.z)?;
    }
    if sol.status == SolveStatus::Optimal && reduced.has_free_cost_column() {
        // a column absent from every constraint with nonzero cost: feasible and unbounded
        sol.status = SolveStatus::Unbounded;
        sol.objective = f64::NEG_INFINITY;
        sol.x = reduced.free_direction(p);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soc_min_x() -> ConicProblem {
        // min x  s.t.  (x, 1, 1) in SOC(3)
        ConicProblem::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 1.0]),
            vec![Cone::SecondOrder(3)],
        )
        .unwrap()
    }

    #[test]
    fn min_x_over_cone_is_sqrt2() {
        let sol = solve(&soc_min_x(), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 2f64.sqrt()).abs() < 1e-7, "{}", sol.x[0]);
        assert!(sol.residuals.max() <= 1e-8);
    }

    #[test]
    fn fixed_point_outside_cone_is_infeasible() {
        // min 0  s.t.  x = 1,  (x, 2) in SOC(2)
        let p = ConicProblem::new(
            DVector::from_vec(vec![0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
            DMatrix::from_column_slice(2, 1, &[-1.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            vec![Cone::SecondOrder(2)],
        )
        .unwrap();
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        let ray = p.a.tr_mul(&sol.y) + p.g.tr_mul(&sol.z);
        assert!(ray.norm() <= 1e-8);
        assert!((p.b.dot(&sol.y) + p.h.dot(&sol.z) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn residuals_at_analytic_optimum() {
        let p = soc_min_x();
        let r = 0.5f64.sqrt();
        let x = DVector::from_vec(vec![2f64.sqrt()]);
        let z = DVector::from_vec(vec![1.0, -r, -r]);
        let res = kkt_residuals(&p, &x, &DVector::zeros(0), &z).unwrap();
        assert!(res.max() <= 1e-12, "{res:?}");
    }

    #[test]
    fn residuals_track_perturbation() {
        let p = soc_min_x();
        let r = 0.5f64.sqrt();
        let x = DVector::from_vec(vec![2f64.sqrt() - 1e-3]);
        let z = DVector::from_vec(vec![1.0, -r, -r]);
        let res = kkt_residuals(&p, &x, &DVector::zeros(0), &z).unwrap();
        assert!(res.primal > 1e-4 && res.primal < 1e-2, "{res:?}");
    }

    #[test]
    fn empty_problem_has_zero_residuals() {
        let p = ConicProblem::new(
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
            vec![],
        )
        .unwrap();
        let e = DVector::zeros(0);
        let res = kkt_residuals(&p, &e, &e, &e).unwrap();
        assert_eq!(res, KktResiduals::default());
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
    }

    #[test]
    fn residuals_reject_bad_dimensions() {
        let p = soc_min_x();
        let err = kkt_residuals(&p, &DVector::zeros(2), &DVector::zeros(0), &DVector::zeros(3));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn inconsistent_duplicate_rows_are_infeasible() {
        // x1 + x2 = 1 and 2x1 + 2x2 = 3, x >= 0
        let p = ConicProblem::new(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_vec(vec![1.0, 3.0]),
            -DMatrix::identity(2, 2),
            DVector::zeros(2),
            vec![Cone::NonNegative(2)],
        )
        .unwrap();
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn consistent_duplicate_rows_are_dropped() {
        // min x1 + 2 x2  s.t.  x1 + x2 = 1 (twice), x >= 0  ->  x = (1, 0)
        let p = ConicProblem::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            -DMatrix::identity(2, 2),
            DVector::zeros(2),
            vec![Cone::NonNegative(2)],
        )
        .unwrap();
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7 && sol.x[1].abs() < 1e-7);
        assert!(sol.residuals.max() <= 1e-8, "{:?}", sol.residuals);
    }

    #[test]
    fn unbounded_lp_is_reported() {
        // min -x  s.t.  x >= 0
        let p = ConicProblem::new(
            DVector::from_vec(vec![-1.0]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DVector::zeros(1),
            vec![Cone::NonNegative(1)],
        )
        .unwrap();
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn free_column_with_cost_is_unbounded() {
        // min x1 + x2  s.t.  x1 >= 1 ; x2 appears nowhere
        let p = ConicProblem::new(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            DVector::from_vec(vec![-1.0]),
            vec![Cone::NonNegative(1)],
        )
        .unwrap();
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }
}
