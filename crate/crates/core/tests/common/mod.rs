//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use hybrid_cran::socp::{Cone, ConicProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A conic program together with a primal-dual optimum it was built around.
pub struct Constructed {
    pub problem: ConicProblem,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub optimum: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Slack and multiplier blocks that are complementary by construction: for
/// each block one of them is zero, or both lie on opposite boundary rays.
fn complementary_block(rng: &mut ChaCha8Rng, cone: Cone) -> (Vec<f64>, Vec<f64>) {
    match cone {
        Cone::NonNegative(d) => (0..d)
            .map(|_| {
                let v = rng.random_range(0.1..2.0);
                if rng.random_bool(0.5) {
                    (v, 0.0)
                } else {
                    (0.0, v)
                }
            })
            .unzip(),
        Cone::SecondOrder(d) => {
            let interior = |rng: &mut ChaCha8Rng| {
                let u = unit(rng, d - 1);
                let r = rng.random_range(0.0..0.8);
                let t = rng.random_range(0.5..2.0);
                let mut v = vec![t];
                v.extend(u.iter().map(|x| x * r * t));
                v
            };
            match rng.random_range(0..3) {
                0 => (interior(rng), vec![0.0; d]),
                1 => (vec![0.0; d], interior(rng)),
                _ => {
                    let u = unit(rng, d - 1);
                    let (a, b) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
                    let mut s = vec![a];
                    s.extend(u.iter().map(|x| a * x));
                    let mut z = vec![b];
                    z.extend(u.iter().map(|x| -b * x));
                    (s, z)
                }
            }
        }
    }
}

/// Random SOCP with known optimum: pick `x*`, complementary `(s*, z*)` and
/// `y*`, then set `h = G x* + s*`, `b = A x*` and `c = -A'y* - G'z*`.
pub fn constructed_socp(seed: u64) -> Constructed {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=12);
    let p = rng.random_range(0..=n / 3);
    let mut cones = Vec::new();
    let mut rows = 0;
    // enough slack rows that the program is bounded through the inequalities
    while rows < n + 2 || cones.is_empty() {
        let cone = if rng.random_bool(0.35) {
            Cone::NonNegative(rng.random_range(1..=4))
        } else {
            Cone::SecondOrder(rng.random_range(2..=6))
        };
        rows += cone.dim();
        cones.push(cone);
    }
    let g = DMatrix::from_fn(rows, n, |_, _| normal(&mut rng));
    let a = DMatrix::from_fn(p, n, |_, _| normal(&mut rng));
    let x = DVector::from_fn(n, |_, _| normal(&mut rng));
    let y = DVector::from_fn(p, |_, _| normal(&mut rng));
    let (mut s, mut z) = (Vec::with_capacity(rows), Vec::with_capacity(rows));
    for &k in &cones {
        let (sb, zb) = complementary_block(&mut rng, k);
        s.extend(sb);
        z.extend(zb);
    }
    let (s, z) = (DVector::from_vec(s), DVector::from_vec(z));
    let h = &g * &x + &s;
    let b = &a * &x;
    let c = -(a.tr_mul(&y) + g.tr_mul(&z));
    let optimum = c.dot(&x);
    Constructed {
        problem: ConicProblem::new(c, a, b, g, h, cones).expect("consistent dimensions"),
        x,
        y,
        z,
        optimum,
    }
}

fn soc_distance(v: &[f64]) -> f64 {
    let t = v[0];
    let u = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if u <= t {
        0.0
    } else if u <= -t {
        (t * t + u * u).sqrt()
    } else {
        // distance to the projection ((t + u) / 2)(1, u / |u|)
        (u - t) / std::f64::consts::SQRT_2
    }
}

fn cone_distance(cones: &[Cone], v: &DVector<f64>) -> f64 {
    let mut off = 0;
    let mut d2 = 0.0;
    for k in cones {
        let blk = &v.as_slice()[off..off + k.dim()];
        d2 += match k {
            Cone::NonNegative(_) => blk.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>(),
            Cone::SecondOrder(_) => soc_distance(blk).powi(2),
        };
        off += k.dim();
    }
    d2.sqrt()
}

/// Largest of the normalized primal, dual and gap residuals, evaluated
/// directly from the problem data.
pub fn kkt_max(p: &ConicProblem, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let req = &p.a * x - &p.b;
    let s = &p.h - &p.g * x;
    let primal = (req.norm_squared() + cone_distance(&p.cones, &s).powi(2)).sqrt()
        / (p.b.norm_squared() + p.h.norm_squared()).sqrt().max(1.0);
    let rd = &p.c + p.a.tr_mul(y) + p.g.tr_mul(z);
    let dual = (rd.norm_squared() + cone_distance(&p.cones, z).powi(2)).sqrt() / p.c.norm().max(1.0);
    let pc = p.c.dot(x);
    let gap = (pc + p.b.dot(y) + p.h.dot(z)).abs() / pc.abs().max(1.0);
    primal.max(dual).max(gap)
}
