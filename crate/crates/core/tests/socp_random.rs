mod common;

use common::{constructed_socp, kkt_max};
use hybrid_cran::socp::{solve, SolveStatus, SolverSettings};

#[test]
fn constructed_optima_are_recovered() {
    let settings = SolverSettings::default();
    for seed in 0..200 {
        let inst = constructed_socp(seed);
        let sol = solve(&inst.problem, &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        let kkt = kkt_max(&inst.problem, &sol.x, &sol.y, &sol.z);
        assert!(kkt <= 1e-7, "seed {seed}: KKT residual {kkt:e}");
        let rel = (sol.objective - inst.optimum).abs() / inst.optimum.abs().max(1.0);
        assert!(rel <= 1e-6, "seed {seed}: objective {} vs {}", sol.objective, inst.optimum);
    }
}

#[test]
fn generator_optimum_passes_independent_kkt_check() {
    for seed in 0..50 {
        let inst = constructed_socp(seed);
        let kkt = kkt_max(&inst.problem, &inst.x, &inst.y, &inst.z);
        assert!(kkt < 1e-12, "seed {seed}: {kkt:e}");
        assert!((inst.problem.c.dot(&inst.x) - inst.optimum).abs() < 1e-12);
    }
}
