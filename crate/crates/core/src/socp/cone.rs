//! Cone algebra for the nonnegative orthant and the second-order cone.
//!
//! Every routine works on one cone block at a time; callers slice the stacked
//! slack/dual vectors with [`Cone::dim`] offsets.

use serde::{Deserialize, Serialize};

/// One block of the cone product a slack vector lives in.
///
/// `SecondOrder(d)` is `{(t, u) : t >= ||u||_2}` with `u` of length `d - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    NonNegative(usize),
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNegative(d) | Cone::SecondOrder(d) => d,
        }
    }

    /// Barrier degree of the block.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::NonNegative(d) => d,
            Cone::SecondOrder(d) => usize::from(d > 0),
        }
    }

    /// Largest `a` such that `x - a e` is in the cone, where `e` is the identity.
    /// Positive iff `x` is strictly interior.
    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        match self {
            Cone::NonNegative(_) => x.iter().copied().fold(f64::INFINITY, f64::min),
            Cone::SecondOrder(_) => {
                if x.is_empty() {
                    return f64::INFINITY;
                }
                x[0] - norm(&x[1..])
            }
        }
    }

    pub fn add_identity(&self, x: &mut [f64], alpha: f64) {
        match self {
            Cone::NonNegative(_) => x.iter_mut().for_each(|v| *v += alpha),
            Cone::SecondOrder(_) => {
                if let Some(v) = x.first_mut() {
                    *v += alpha;
                }
            }
        }
    }

    /// Euclidean projection of `x` onto the cone.
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Cone::NonNegative(_) => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v.max(0.0);
                }
            }
            Cone::SecondOrder(_) => {
                if x.is_empty() {
                    return;
                }
                let t = x[0];
                let un = norm(&x[1..]);
                if un <= t {
                    out.copy_from_slice(x);
                } else if un <= -t {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    let scale = 0.5 * (t + un);
                    out[0] = scale;
                    for i in 1..x.len() {
                        out[i] = scale * x[i] / un;
                    }
                }
            }
        }
    }

    /// Euclidean distance from `x` to the cone.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut p = vec![0.0; x.len()];
        self.project(x, &mut p);
        x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    /// Jordan product `u o v`.
    pub fn jordan_product(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Cone::NonNegative(_) => {
                for ((o, a), b) in out.iter_mut().zip(u).zip(v) {
                    *o = a * b;
                }
            }
            Cone::SecondOrder(_) => {
                if u.is_empty() {
                    return;
                }
                out[0] = dot(u, v);
                for i in 1..u.len() {
                    out[i] = u[0] * v[i] + v[0] * u[i];
                }
            }
        }
    }

    /// Solves `u o x = v` for `x`. `u` must be strictly interior.
    pub fn jordan_divide(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Cone::NonNegative(_) => {
                for ((o, a), b) in out.iter_mut().zip(u).zip(v) {
                    *o = b / a;
                }
            }
            Cone::SecondOrder(_) => {
                if u.is_empty() {
                    return;
                }
                let u0 = u[0];
                let u1v1 = dot(&u[1..], &v[1..]);
                let det = soc_det(u);
                let x0 = (u0 * v[0] - u1v1) / det;
                out[0] = x0;
                for i in 1..u.len() {
                    out[i] = (v[i] - x0 * u[i]) / u0;
                }
            }
        }
    }

    /// Largest step `a` in `(0, inf]` with `x + a d` still in the cone;
    /// `x` must be interior.
    pub fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        match self {
            Cone::NonNegative(_) => x
                .iter()
                .zip(d)
                .filter(|(_, di)| **di < 0.0)
                .map(|(xi, di)| -xi / di)
                .fold(f64::INFINITY, f64::min),
            Cone::SecondOrder(_) => {
                if x.is_empty() {
                    return f64::INFINITY;
                }
                soc_max_step(x, d)
            }
        }
    }
}

/// `x0^2 - |x1|^2`, computed as a product of two factors.
pub(crate) fn soc_det(x: &[f64]) -> f64 {
    let un = norm(&x[1..]);
    (x[0] - un) * (x[0] + un)
}

fn soc_max_step(x: &[f64], d: &[f64]) -> f64 {
    // f(a) = (x0 + a d0)^2 - |x1 + a d1|^2; the feasible step set is [0, first root].
    let qa = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let qb = 2.0 * (x[0] * d[0] - dot(&x[1..], &d[1..]));
    let qc = soc_det(x).max(0.0);
    let mut best = f64::INFINITY;
    let scale = qa.abs().max(qb.abs()).max(qc);
    if scale == 0.0 {
        return best;
    }
    if qa.abs() <= 1e-14 * scale {
        if qb < 0.0 {
            best = -qc / qb;
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            let r1 = q / qa;
            let r2 = if q != 0.0 { qc / q } else { f64::INFINITY };
            for r in [r1, r2] {
                if r > 0.0 && r < best {
                    best = r;
                }
            }
        }
    }
    // the root must lie on the t >= 0 branch; otherwise the ray exits through t = 0
    if d[0] < 0.0 {
        best = best.min(-x[0] / d[0]);
    }
    best
}

/// Nesterov-Todd scaling for one cone block: `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) enum NtScaling {
    NonNegative {
        /// `sqrt(s / z)` elementwise; W is the diagonal of these values.
        d: Vec<f64>,
    },
    SecondOrder {
        eta: f64,
        /// Normalized scaling point with `w0^2 - |w1|^2 = 1`.
        w: Vec<f64>,
    },
}

impl NtScaling {
    pub fn new(cone: &Cone, s: &[f64], z: &[f64]) -> Self {
        match cone {
            Cone::NonNegative(_) => NtScaling::NonNegative {
                d: s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect(),
            },
            Cone::SecondOrder(_) => {
                let sn = soc_det(s).max(f64::MIN_POSITIVE).sqrt();
                let zn = soc_det(z).max(f64::MIN_POSITIVE).sqrt();
                let sbar: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).max(0.0).sqrt();
                let mut w = vec![0.0; s.len()];
                w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for i in 1..s.len() {
                    w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                }
                NtScaling::SecondOrder {
                    eta: (sn / zn).sqrt(),
                    w,
                }
            }
        }
    }

    /// `out = W v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            NtScaling::NonNegative { d } => {
                for ((o, di), vi) in out.iter_mut().zip(d).zip(v) {
                    *o = di * vi;
                }
            }
            NtScaling::SecondOrder { eta, w } => soc_scale(*eta, w, v, out, 1.0),
        }
    }

    /// `out = W^{-1} v`.
    pub fn apply_inverse(&self, v: &[f64], out: &mut [f64]) {
        match self {
            NtScaling::NonNegative { d } => {
                for ((o, di), vi) in out.iter_mut().zip(d).zip(v) {
                    *o = vi / di;
                }
            }
            NtScaling::SecondOrder { eta, w } => soc_scale(1.0 / eta, w, v, out, -1.0),
        }
    }
}

// W = eta [[w0, w1'], [w1, I + w1 w1'/(1+w0)]]; the inverse flips the sign of w1
fn soc_scale(eta: f64, w: &[f64], v: &[f64], out: &mut [f64], sign: f64) {
    let w0 = w[0];
    let w1v1 = dot(&w[1..], &v[1..]);
    out[0] = eta * (w0 * v[0] + sign * w1v1);
    let coef = sign * v[0] + w1v1 / (1.0 + w0);
    for i in 1..v.len() {
        out[i] = eta * (v[i] + coef * w[i]);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nt_scaling_maps_s_and_z_to_same_point() {
        let cone = Cone::SecondOrder(4);
        let s = [3.0, 0.5, -1.0, 0.7];
        let z = [2.0, -0.3, 0.4, 1.1];
        let nt = NtScaling::new(&cone, &s, &z);
        let mut wz = [0.0; 4];
        let mut winv_s = [0.0; 4];
        nt.apply(&z, &mut wz);
        nt.apply_inverse(&s, &mut winv_s);
        for i in 0..4 {
            assert!((wz[i] - winv_s[i]).abs() < 1e-12, "{wz:?} vs {winv_s:?}");
        }
        let mut back = [0.0; 4];
        nt.apply_inverse(&wz, &mut back);
        for i in 0..4 {
            assert!((back[i] - z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_divide_inverts_product() {
        let cone = Cone::SecondOrder(3);
        let u = [2.0, 0.3, -0.9];
        let x = [0.4, 1.5, -2.0];
        let mut p = [0.0; 3];
        cone.jordan_product(&u, &x, &mut p);
        let mut back = [0.0; 3];
        cone.jordan_divide(&u, &p, &mut back);
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let cone = Cone::SecondOrder(2);
        // (1, 0) + a (0, 1) leaves the cone at a = 1
        let a = cone.max_step(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((a - 1.0).abs() < 1e-12);
        // moving inward never leaves
        assert!(cone.max_step(&[1.0, 0.0], &[1.0, 0.5]).is_infinite());
        let a = cone.max_step(&[2.0, 1.0], &[-1.0, 0.0]);
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_to_soc() {
        let cone = Cone::SecondOrder(2);
        assert_eq!(cone.distance(&[1.0, 0.5]), 0.0);
        assert!((cone.distance(&[-1.0, 0.0]) - 1.0).abs() < 1e-12);
        // (0, 1) projects onto (0.5, 0.5)
        assert!((cone.distance(&[0.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((Cone::NonNegative(2).distance(&[-3.0, 4.0]) - 3.0).abs() < 1e-12);
    }
}
