//! Structural cleanup before the interior-point iterations: empty columns,
//! empty orthant rows and linearly dependent equality rows are removed so the
//! reduced KKT system stays nonsingular.

use nalgebra::{DMatrix, DVector};

use super::cone::Cone;
use super::{ConicProblem, ConicSolution, SolveStatus};

const DEPENDENCY_TOL: f64 = 1e-10;

pub(crate) enum Presolved {
    Reduced(Reduced),
    /// Farkas certificate on the original problem, `b'y + h'z = -1`.
    Infeasible { y: DVector<f64>, z: DVector<f64> },
}

pub(crate) struct Reduced {
    pub problem: ConicProblem,
    cols: Vec<usize>,
    eq_rows: Vec<usize>,
    slack_rows: Vec<usize>,
    free_cost_cols: Vec<usize>,
}

pub(crate) fn presolve(p: &ConicProblem) -> Presolved {
    let n = p.num_vars();

    let mut cols = Vec::with_capacity(n);
    let mut free_cost_cols = Vec::new();
    for j in 0..n {
        let empty = p.a.column(j).iter().all(|v| *v == 0.0) && p.g.column(j).iter().all(|v| *v == 0.0);
        if !empty {
            cols.push(j);
        } else if p.c[j] != 0.0 {
            free_cost_cols.push(j);
        }
    }

    // empty orthant rows: either trivially satisfied or a certificate
    let mut slack_rows = Vec::with_capacity(p.num_slack());
    let mut cones = Vec::with_capacity(p.cones.len());
    let mut off = 0;
    for k in &p.cones {
        let d = k.dim();
        match k {
            Cone::NonNegative(_) => {
                let mut kept = 0;
                for i in off..off + d {
                    if p.g.row(i).iter().all(|v| *v == 0.0) {
                        if p.h[i] < 0.0 {
                            let mut z = DVector::zeros(p.num_slack());
                            z[i] = -1.0 / p.h[i];
                            return Presolved::Infeasible {
                                y: DVector::zeros(p.num_eq()),
                                z,
                            };
                        }
                    } else {
                        slack_rows.push(i);
                        kept += 1;
                    }
                }
                if kept > 0 {
                    cones.push(Cone::NonNegative(kept));
                }
            }
            Cone::SecondOrder(_) => {
                slack_rows.extend(off..off + d);
                cones.push(*k);
            }
        }
        off += d;
    }

    let eq_rows = match independent_rows(&p.a, &p.b) {
        Ok(rows) => rows,
        Err(y) => {
            return Presolved::Infeasible {
                y,
                z: DVector::zeros(p.num_slack()),
            }
        }
    };

    let problem = ConicProblem {
        c: DVector::from_iterator(cols.len(), cols.iter().map(|&j| p.c[j])),
        a: DMatrix::from_fn(eq_rows.len(), cols.len(), |i, j| p.a[(eq_rows[i], cols[j])]),
        b: DVector::from_iterator(eq_rows.len(), eq_rows.iter().map(|&i| p.b[i])),
        g: DMatrix::from_fn(slack_rows.len(), cols.len(), |i, j| p.g[(slack_rows[i], cols[j])]),
        h: DVector::from_iterator(slack_rows.len(), slack_rows.iter().map(|&i| p.h[i])),
        cones,
    };
    Presolved::Reduced(Reduced {
        problem,
        cols,
        eq_rows,
        slack_rows,
        free_cost_cols,
    })
}

/// Greedy Gram-Schmidt over the rows of `a`. Returns the indices of a maximal
/// independent subset, or a certificate `y` with `A'y = 0`, `b'y = -1` when a
/// dependent row is inconsistent.
fn independent_rows(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<usize>, DVector<f64>> {
    let m = a.nrows();
    let mut kept: Vec<usize> = Vec::new();
    // orthonormal basis (rows) and the upper-triangular factor A_kept' = Q R
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut r = DMatrix::<f64>::zeros(m.max(1), m.max(1));
    let b_scale = 1.0 + b.amax();
    for i in 0..m {
        let row: DVector<f64> = a.row(i).transpose();
        let row_norm = row.norm();
        let mut v = row.clone();
        let mut coef = DVector::<f64>::zeros(q.len());
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (j, qj) in q.iter().enumerate() {
                let c = qj.dot(&v);
                coef[j] += c;
                v.axpy(-c, qj, 1.0);
            }
        }
        let resid = v.norm();
        if resid > DEPENDENCY_TOL * row_norm.max(1.0) && row_norm > 0.0 {
            let col = q.len();
            for j in 0..col {
                r[(j, col)] = coef[j];
            }
            r[(col, col)] = resid;
            q.push(v / resid);
            kept.push(i);
            continue;
        }
        // row i = sum_j coef_j q_j = A_kept' alpha with R alpha = coef
        let k = q.len();
        let mut alpha = DVector::<f64>::zeros(k);
        for jj in (0..k).rev() {
            let mut acc = coef[jj];
            for t in jj + 1..k {
                acc -= r[(jj, t)] * alpha[t];
            }
            alpha[jj] = acc / r[(jj, jj)];
        }
        let implied: f64 = kept.iter().zip(alpha.iter()).map(|(&t, al)| al * b[t]).sum();
        let delta = implied - b[i];
        if delta.abs() > 1e-9 * b_scale * (1.0 + alpha.amax()) {
            let mut y = DVector::<f64>::zeros(m);
            for (&t, al) in kept.iter().zip(alpha.iter()) {
                y[t] = *al;
            }
            y[i] = -1.0;
            y *= -1.0 / delta;
            return Err(y);
        }
    }
    Ok(kept)
}

impl Reduced {
    pub fn has_free_cost_column(&self) -> bool {
        !self.free_cost_cols.is_empty()
    }

    pub fn free_direction(&self, p: &ConicProblem) -> DVector<f64> {
        let mut x = DVector::zeros(p.num_vars());
        if let Some(&j) = self.free_cost_cols.first() {
            x[j] = -1.0 / p.c[j];
        }
        x
    }

    /// Maps a solution of the reduced problem back onto the original indices.
    pub fn restore(&self, p: &ConicProblem, inner: ConicSolution) -> ConicSolution {
        let mut x = DVector::zeros(p.num_vars());
        for (k, &j) in self.cols.iter().enumerate() {
            x[j] = inner.x[k];
        }
        let mut y = DVector::zeros(p.num_eq());
        for (k, &i) in self.eq_rows.iter().enumerate() {
            y[i] = inner.y[k];
        }
        let mut z = DVector::zeros(p.num_slack());
        for (k, &i) in self.slack_rows.iter().enumerate() {
            z[i] = inner.z[k];
        }
        let s = match inner.status {
            SolveStatus::Unbounded => -(&p.g * &x),
            _ => &p.h - &p.g * &x,
        };
        ConicSolution {
            x,
            y,
            z,
            s,
            ..inner
        }
    }
}
