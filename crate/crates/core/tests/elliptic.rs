use std::f64::consts::PI;
use std::sync::Arc;

use pqflow_core::elliptic::*;
use pqflow_core::operators::*;
use pqflow_core::{Mesh, ProblemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(n: usize) -> Arc<Mesh> {
    Arc::new(Mesh::interval(0.0, 1.0, n).unwrap())
}

fn cfg() -> EllipticConfig {
    EllipticConfig::default()
}

#[test]
fn linear_s_eps_recovers_sine() {
    let params = ProblemParams::coincident(2.0, 2.0, 0.5, 0.0).unwrap();
    let mut errs = vec![];
    for n in [32, 64] {
        let mesh = line(n);
        let h = Field::from_fn_dirichlet(mesh.clone(), |x| (1.0 + 2.0 * PI * PI) * (PI * x[0]).sin());
        let u = solve_s_eps(&h, 1.0, 1e-3, &params, &cfg()).unwrap();
        let exact = Field::from_fn_dirichlet(mesh, |x| (PI * x[0]).sin());
        errs.push(u.max_abs_diff(&exact).unwrap());
    }
    assert!(errs[0] < 5e-3);
    let order = (errs[0] / errs[1]).log2();
    assert!((order - 2.0).abs() < 0.2, "order {order}");
}

#[test]
fn singular_term_forces_positivity() {
    let params = ProblemParams::new(2.5, 1.5, 0.7, 1.0).unwrap();
    let mesh = line(64);
    let h = Field::zeros(mesh);
    let u = solve_s_eps(&h, 1.0, 1e-4, &params, &cfg()).unwrap();
    assert!(u.is_positive_interior());
}

#[test]
fn smaller_eps_gives_larger_solution() {
    let params = ProblemParams::new(2.0, 1.5, 1.2, 1.0).unwrap();
    let mesh = line(64);
    let h = Field::constant(mesh, 0.3);
    let a = solve_s_eps(&h, 0.5, 1e-2, &params, &cfg()).unwrap();
    let b = solve_s_eps(&h, 0.5, 1e-4, &params, &cfg()).unwrap();
    assert!(comparison_check(&a, &b).unwrap().holds);
    assert!(b.max() > a.max());
}

#[test]
fn continuation_gaps_contract() {
    let params = ProblemParams::coincident(2.0, 2.0, 0.5, 1.0).unwrap();
    let mesh = line(128);
    let sol = solve_s_lambda(&Field::zeros(mesh), 1.0, &params, &cfg()).unwrap();
    assert!(sol.u.is_positive_interior());
    let gaps = &sol.report.eps_gaps;
    assert!(!gaps.is_empty());
    for w in gaps.windows(2) {
        assert!(w[1] < 0.5 * w[0] || w[1] < 1e-12, "{gaps:?}");
    }
}

#[test]
fn unique_from_random_warm_starts() {
    let params = ProblemParams::new(3.0, 1.5, 0.8, 1.0).unwrap();
    let mesh = line(64);
    let h = Field::constant(mesh.clone(), 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sols = vec![];
    for _ in 0..2 {
        let w = Field::from_fn_dirichlet(mesh.clone(), |_| rng.gen_range(0.1..2.0));
        sols.push(solve_s_lambda_from(&h, 0.7, &params, &cfg(), Some(&w)).unwrap().u);
    }
    assert!(sols[0].max_abs_diff(&sols[1]).unwrap() < 1e-8);
}

#[test]
fn supercritical_flag() {
    let params = ProblemParams::new(2.0, 1.5, 3.5, 1.0).unwrap();
    let mesh = line(32);
    let sol = solve_s_lambda(&Field::zeros(mesh), 1.0, &params, &cfg()).unwrap();
    assert!(sol.report.supercritical);
    assert!(sol.u.is_positive_interior());
}

#[test]
fn linear_torsion_closed_form() {
    let params = ProblemParams::coincident(2.0, 2.0, 0.5, 0.0).unwrap();
    let mesh = line(16);
    let rho = 3.0;
    let u = solve_torsion(&mesh, rho, &params, &cfg()).unwrap();
    // -2u'' = ρ; the 3-point scheme is exact on quadratics
    let exact = Field::from_fn(mesh, |x| rho * x[0] * (1.0 - x[0]) / 4.0);
    assert!(u.max_abs_diff(&exact).unwrap() < 1e-10);
}

#[test]
fn torsion_monotone_in_rho_and_decays() {
    let params = ProblemParams::new(3.0, 1.8, 0.5, 1.0).unwrap();
    let mesh = line(64);
    let rhos = [1.0, 0.1, 0.01, 0.001];
    let sols: Vec<Field> = rhos.iter().map(|&r| solve_torsion(&mesh, r, &params, &cfg()).unwrap()).collect();
    for w in sols.windows(2) {
        assert!(comparison_check(&w[1], &w[0]).unwrap().holds);
        assert!(w[1].max() < w[0].max());
    }
    assert!(sols[3].max() < 0.05 * sols[0].max());
}

#[test]
fn barrier_reduces_to_pure_singular_problem() {
    let params = ProblemParams::new(2.5, 1.5, 0.6, 1.0).unwrap();
    let mesh = line(64);
    let a = solve_barrier_m(&mesh, 1.0, 0.0, 0.0, &params, &cfg()).unwrap().u;
    let prob = StationaryProblem::new(mesh.clone(), &params).singular(1.0, 1e-8);
    let b = continuation(&prob, None, &cfg()).unwrap().u;
    assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
}

#[test]
fn barrier_grows_with_m_on_central_third() {
    let params = ProblemParams::new(2.5, 1.5, 1.5, 1.0).unwrap();
    let mesh = line(64);
    let mids = mesh.central_third();
    let mins: Vec<f64> = [1.0, 10.0, 100.0]
        .iter()
        .map(|&m| {
            let u = solve_barrier_m(&mesh, m, 0.0, 0.0, &params, &cfg()).unwrap().u;
            mids.iter().map(|&k| u.values()[k]).fold(f64::INFINITY, f64::min)
        })
        .collect();
    assert!(mins[0] < mins[1] && mins[1] < mins[2], "{mins:?}");
}

#[test]
fn barrier_dominates_bounded_data() {
    let params = ProblemParams::new(2.0, 1.5, 0.5, 1.0).unwrap();
    let mesh = line(64);
    let big_l = 2.0;
    let sup = solve_barrier_m(&mesh, 1.0, 0.0, big_l, &params, &cfg()).unwrap().u;
    // stationary data h = λ g with |g| <= L, large λ
    let g = Field::from_fn(mesh.clone(), |x| big_l * (7.0 * x[0]).cos());
    let lambda = 50.0;
    let h = g.scaled(lambda);
    let u = solve_s_lambda(&h, lambda, &params, &cfg()).unwrap().u;
    assert!(comparison_check(&u, &sup).unwrap().holds);
}

#[test]
fn scaled_profile_unit_m_and_collapse() {
    let params = ProblemParams::new(2.5, 1.5, 1.5, 1.0).unwrap();
    let mesh = line(128);
    let w1 = scaled_profile(&mesh, 1.0, &params, &cfg()).unwrap();
    let b1 = solve_barrier_m(&mesh, 1.0, 0.0, 0.0, &params, &cfg()).unwrap().u;
    assert_eq!(w1, b1);
    let w: Vec<Field> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&m| scaled_profile(&mesh, m, &params, &cfg()).unwrap())
        .collect();
    let d1 = w[0].max_abs_diff(&w[1]).unwrap();
    let d2 = w[1].max_abs_diff(&w[2]).unwrap();
    assert!(d2 < d1);
    let r10 = limit_residual(&w[0], &params).unwrap();
    let r1000 = limit_residual(&w[2], &params).unwrap();
    assert!(r1000 < r10, "{r10} {r1000}");
}

#[test]
fn ordered_data_ordered_solutions() {
    let params = ProblemParams::new(2.2, 1.4, 0.9, 0.5).unwrap();
    let mesh = line(64);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..4 {
        let h1 = Field::from_fn(mesh.clone(), |_| rng.gen_range(-0.5..0.5));
        let h2 = h1.with_values(h1.values().iter().map(|v| v + rng.gen_range(0.0..0.5)).collect());
        let u1 = solve_s_lambda(&h1, 0.3, &params, &cfg()).unwrap().u;
        let u2 = solve_s_lambda(&h2, 0.3, &params, &cfg()).unwrap().u;
        assert!(comparison_check(&u1, &u2).unwrap().holds);
        assert!(comparison_check(&u1, &u1).unwrap().holds);
    }
}

#[test]
fn residual_below_tolerance() {
    let params = ProblemParams::new(3.0, 2.0, 1.5, 2.0).unwrap();
    let mesh = line(128);
    let h = Field::constant(mesh.clone(), 1.0);
    let c = cfg();
    let sol = solve_s_lambda(&h, 0.2, &params, &c).unwrap();
    let prob = s_lambda_problem(&h, 0.2, c.eps_min(), &params);
    let r = prob.residual(sol.u.values());
    assert!(r.max <= c.newton_tol * (1.0 + r.scale));
}

#[test]
fn converged_solve_minimizes_functional() {
    let params = ProblemParams::new(2.5, 1.5, 0.5, 1.0).unwrap();
    let mesh = line(64);
    let h = Field::constant(mesh.clone(), 0.5);
    let c = cfg();
    let sol = solve_s_lambda(&h, 0.5, &params, &c).unwrap();
    let prob = s_lambda_problem(&h, 0.5, c.eps_min(), &params);
    let base = prob.energy(sol.u.values());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut v = sol.u.values().to_vec();
        for &k in mesh.interior() {
            v[k] = (v[k] + 1e-3 * rng.gen_range(-1.0..1.0)).max(0.0);
        }
        assert!(prob.energy(&v) >= base - 1e-14 * base.abs());
    }
}

#[test]
fn two_dimensional_solve() {
    let params = ProblemParams::new(2.5, 1.5, 0.5, 1.0).unwrap();
    let mesh = Arc::new(Mesh::rect(0.0, 1.0, 0.0, 1.0, 12, 12).unwrap());
    let sol = solve_s_lambda(&Field::constant(mesh.clone(), 0.1), 1.0, &params, &cfg()).unwrap();
    assert!(sol.u.is_positive_interior());
    // symmetric under x <-> y
    let n = 13;
    for j in 0..n {
        for i in 0..n {
            let a = sol.u.values()[j * n + i];
            let b = sol.u.values()[i * n + j];
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn steady_state_sandwich_and_monotone() {
    let params = ProblemParams::new(2.2, 1.8, 0.5, 1.0).unwrap();
    let mesh = line(64);
    let f = Nonlinearity::saturated(1.0, params.q);
    let ss = solve_steady_state(&mesh, &f, &params, &cfg()).unwrap();
    assert!(comparison_check(&ss.sub, &ss.u).unwrap().holds);
    assert!(comparison_check(&ss.u, &ss.sup).unwrap().holds);
    assert!(ss.u.is_positive_interior());
    // fixed point residual of the limit equation
    let rhs = f.eval_nodes(&mesh, ss.u.values(), 0.0);
    let prob = StationaryProblem::new(mesh.clone(), &params).singular(1.0, 1e-8).rhs(rhs);
    let r = prob.residual(ss.u.values());
    assert!(r.max < 1e-6 * (1.0 + r.scale), "{} {}", r.max, r.scale);
}

#[test]
fn steady_state_without_reaction_is_pure_barrier() {
    let params = ProblemParams::new(2.2, 1.8, 1.3, 1.0).unwrap();
    let mesh = line(64);
    let ss = solve_steady_state(&mesh, &Nonlinearity::None, &params, &cfg()).unwrap();
    let m = solve_barrier_m(&mesh, 1.0, 0.0, 0.0, &params, &cfg()).unwrap().u;
    assert!(ss.u.max_abs_diff(&m).unwrap() < 1e-7);
}

#[test]
fn config_validation() {
    let mut c = cfg();
    assert!(c.validate().is_ok());
    c.eps_schedule = vec![1e-2, 1e-1];
    assert!(c.validate().is_err());
    let c = EllipticConfig { newton_tol: 0.0, ..cfg() };
    assert!(c.validate().is_err());
}

// Negative data and small λ push the regularized root below zero at coarse ε.
#[test]
fn small_lambda_negative_data_converges() {
    let params = ProblemParams::new(2.5, 1.5, 0.5, 1.0).unwrap();
    let mesh = line(32);
    let h = Field::from_fn_dirichlet(mesh.clone(), |_| -0.5);
    for lambda in [1e-3, 1e-2, 3e-2] {
        let sol = solve_s_lambda(&h, lambda, &params, &cfg()).unwrap();
        // pointwise balance u + 0.5 = λ u^{-1/2}, diffusion negligible mid-domain
        let (mut lo, mut hi) = (1e-14f64, 1.0f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if mid + 0.5 - lambda / mid.sqrt() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mid = sol.u.values()[16];
        assert!(mid > 0.0, "lambda {lambda}: u(1/2) = {mid}");
        assert!((mid / lo - 1.0).abs() < 0.05, "lambda {lambda}: {mid} vs {lo}");
    }
}
