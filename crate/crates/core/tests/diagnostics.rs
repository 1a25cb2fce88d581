use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;

use pqflow_core::diagnostics::*;
use pqflow_core::elliptic::{solve_barrier_m, solve_steady_state, EllipticConfig};
use pqflow_core::operators::{energy_j, nehari_i, Field, Forcing, Nonlinearity};
use pqflow_core::parabolic::{run_g, run_p, run_superhomog, ParabolicConfig, RunStatus};
use pqflow_core::{phi_delta, Mesh, ProblemParams};

fn interval(n: usize) -> Arc<Mesh> {
    Arc::new(Mesh::interval(0.0, 1.0, n).unwrap())
}

fn sine(mesh: &Arc<Mesh>) -> Field {
    Field::from_fn_dirichlet(mesh.clone(), |x| (PI * x[0]).sin())
}

#[test]
fn shell_fit_of_the_profile_itself() {
    for (mesh, delta) in [(interval(64), 0.5), (interval(64), 1.0), (interval(64), 2.0)] {
        let pr = ProblemParams::new(3.0, 2.0, delta, 1.0).unwrap();
        let a = mesh.profile_constant();
        let u = Field::new(
            mesh.clone(),
            mesh.dist().iter().map(|&d| phi_delta(d, delta, 3.0, a).unwrap()).collect(),
        )
        .unwrap();
        let fit = conical_shell_fit(&u, &pr).unwrap();
        assert!((fit.c1 - 1.0).abs() <= 1e-12 && (fit.c2 - 1.0).abs() <= 1e-12);
    }
    let mesh = interval(64);
    let pr = ProblemParams::new(3.0, 2.0, 0.5, 1.0).unwrap();
    let u = Field::new(mesh.clone(), mesh.dist().iter().map(|d| 3.0 * d).collect()).unwrap();
    let fit = conical_shell_fit(&u, &pr).unwrap();
    assert_relative_eq!(fit.c1, 3.0, max_relative = 1e-12);
    assert_relative_eq!(fit.c2, 3.0, max_relative = 1e-12);
    assert_relative_eq!(fit.fitted_exponent, 1.0, max_relative = 1e-12);
    assert!(conical_shell_fit(&sine(&interval(4)), &pr).is_err());
}

#[test]
fn strong_singularity_boundary_exponent() {
    let pr = ProblemParams::new(3.0, 2.0, 2.0, 1.0).unwrap();
    let u = solve_barrier_m(&interval(512), 1.0, 0.0, 0.0, &pr, &EllipticConfig::default()).unwrap().u;
    let fit = conical_shell_fit(&u, &pr).unwrap();
    assert!((fit.fitted_exponent - 0.75).abs() < 0.075, "{}", fit.fitted_exponent);
    assert!(fit.c1 > 0.0 && fit.c2.is_finite());
}

#[test]
fn stationary_ledger() {
    let mesh = interval(64);
    let pr = ProblemParams::new(2.2, 1.8, 0.5, 1.0).unwrap();
    let f = Nonlinearity::saturated(1.0, pr.q);
    let ss = solve_steady_state(&mesh, &f, &pr, &EllipticConfig::default()).unwrap();
    let tr = run_p(&ss.u, &f, 1.0, 10, &pr, &ParabolicConfig::default()).unwrap();
    let l = build_blowup_ledger(&tr, &pr, &f).unwrap();
    let i_inf = nehari_i(&ss.u, &pr, &f).unwrap();
    let j_inf = energy_j(&ss.u, &pr, &f).unwrap();
    for k in 0..l.times.len() {
        assert!((l.mpp[k] + i_inf).abs() < 1e-7 * (1.0 + i_inf.abs()));
        assert!((l.j[k] - j_inf).abs() < 1e-7 * (1.0 + j_inf.abs()));
        assert!(l.energy_audit[k] < 1e-7);
    }
    assert!(!l.blown_up);
}

#[test]
fn heat_ledger_decays_at_the_mode_rate() {
    let mesh = interval(256);
    let heat = ProblemParams::coincident(2.0, 2.0, 0.5, 0.0).unwrap();
    let tr = run_g(&sine(&mesh), &Forcing::Const(0.0), 0.05, 400, &heat, &ParabolicConfig::default()).unwrap();
    let l = build_blowup_ledger(&tr, &heat, &Nonlinearity::None).unwrap();
    let n = l.times.len() - 1;
    let rate = -(l.mp[n] / l.mp[n / 2]).ln() / (l.times[n] - l.times[n / 2]);
    // ‖u(t)‖² = e^{-4π²t}/2
    assert_relative_eq!(rate, 4.0 * PI * PI, max_relative = 0.02);
    assert_relative_eq!(l.mp[0], 0.25, max_relative = 1e-6);
    assert!(l.mp.iter().all(|&v| v >= 0.0));
    assert!(l.m.windows(2).all(|w| w[1] >= w[0]));
}

fn blowup_setup(n: usize) -> (ProblemParams, Nonlinearity, Field) {
    let pr = ProblemParams::new(2.0, 1.5, 1.5, 1.0).unwrap();
    let f = Nonlinearity::power(4.0, 1.0);
    let mut u0 = sine(&interval(n));
    while energy_j(&u0, &pr, &f).unwrap() > 0.0 {
        u0 = u0.scaled(1.25);
    }
    (pr, f, u0)
}

#[test]
fn blowup_premises_and_observation() {
    let (pr, f, u0) = blowup_setup(64);
    let small = sine(u0.mesh()).scaled(0.5);
    let v = check_blowup_conditions(&small, &pr, &f, &BlowupInputs::default(), None).unwrap();
    assert!(!v.premises_hold);
    assert_eq!(v.condition_checked, BlowupCase::CaseIiDeltaGt1);

    let v = check_blowup_conditions(&u0, &pr, &f, &BlowupInputs::default(), None).unwrap();
    assert!(v.premises_hold);
    let tr = run_superhomog(&u0, &f, 0.05, 200, &pr, &ParabolicConfig::default()).unwrap();
    assert!(matches!(tr.status, RunStatus::BlownUp { .. }));
    let l = build_blowup_ledger(&tr, &pr, &f).unwrap();
    let v = check_blowup_conditions(&u0, &pr, &f, &BlowupInputs::default(), Some(&l)).unwrap();
    let obs = v.observed.unwrap();
    assert!(obs.blown_up && obs.mpp_positive_after_first && obs.concavity_holds_on_tail);
    assert_eq!(obs.route, ConcavityRoute::Power);
    // ledger consistency: M' grows while M'' > 0
    for k in 1..l.times.len() {
        if l.mpp[k] > 0.0 && l.mpp[k - 1] > 0.0 {
            assert!(l.mp[k] >= l.mp[k - 1] * (1.0 - 1e-12));
        }
    }
}

#[test]
fn extrapolated_time_is_consistent_on_refinement() {
    let (pr, f, u0) = blowup_setup(128);
    let tr = run_superhomog(&u0, &f, 0.05, 400, &pr, &ParabolicConfig::default()).unwrap();
    let l = build_blowup_ledger(&tr, &pr, &f).unwrap();
    let obs = check_blowup_conditions(&u0, &pr, &f, &BlowupInputs::default(), Some(&l))
        .unwrap()
        .observed
        .unwrap();
    let (t_star, escape) = (obs.t_star.unwrap(), obs.escape_time.unwrap());
    assert!(t_star / escape < 3.0 && escape / t_star < 3.0, "{t_star} {escape}");
}

#[test]
fn sigma_route_for_large_p() {
    let pr = ProblemParams::new(3.0, 2.0, 1.5, 1.0).unwrap();
    let f = Nonlinearity::power(4.0, 1.0);
    let mut u0 = sine(&interval(64));
    while energy_j(&u0, &pr, &f).unwrap() > 0.0 {
        u0 = u0.scaled(1.25);
    }
    let tr = run_superhomog(&u0, &f, 0.05, 200, &pr, &ParabolicConfig::default()).unwrap();
    let l = build_blowup_ledger(&tr, &pr, &f).unwrap();
    assert_eq!(l.concavity_sigma, Some(default_sigma(3.0)));
    let v = check_blowup_conditions(&u0, &pr, &f, &BlowupInputs::default(), Some(&l)).unwrap();
    let obs = v.observed.unwrap();
    assert_eq!(obs.route, ConcavityRoute::Sigma);
    assert!(obs.blown_up && obs.mpp_positive_after_first && obs.concavity_holds_on_tail);
    let bad = BlowupInputs { sigma: Some(1.6), ..Default::default() };
    assert!(check_blowup_conditions(&u0, &pr, &f, &bad, Some(&l)).is_err());
}

#[test]
fn small_singularity_case_needs_its_constants() {
    let pr = ProblemParams::new(2.5, 2.0, 0.5, 0.01).unwrap();
    let f = Nonlinearity::power(4.0, 1.0);
    let u0 = sine(&interval(64)).scaled(5.0);
    let err = check_blowup_conditions(&u0, &pr, &f, &BlowupInputs::default(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let inputs = BlowupInputs { theta_hat: Some(0.0), c_star: Some(1.0), lambda_star: Some(1.0), sigma: None };
    let v = check_blowup_conditions(&u0, &pr, &f, &inputs, None).unwrap();
    assert_eq!(v.condition_checked, BlowupCase::CaseIDeltaLe1);
    assert!(v.theta_star.unwrap() > 0.0);
    assert_eq!(v.premises.nehari_negative, Some(v.premises.i0 < 0.0));
}

fn unit_l2(mesh: &Arc<Mesh>) -> Field {
    let s = sine(mesh);
    let n = s.l2();
    s.scaled(1.0 / n)
}

#[test]
fn threshold_formula_value() {
    let pr = ProblemParams::new(2.5, 2.0, 0.5, 1.0).unwrap();
    let f = Nonlinearity::power(4.0, 1.0);
    let u0 = unit_l2(&interval(64));
    let v = theta_star(&u0, &pr, &f, 1.0, 1.0).unwrap();
    let expected = (4.0 * 0.5 * 0.5 * 2f64.powf(-0.75) / (2.5 * 2.0 * 3.5)).min(1.0);
    assert_relative_eq!(v, expected, max_relative = 1e-12);
    let big = theta_star(&u0.scaled(2.0), &pr, &f, 1.0, 1e6).unwrap();
    let base = theta_star(&u0, &pr, &f, 1.0, 1e6).unwrap();
    assert_relative_eq!(big / base, 2f64.powf(1.5), max_relative = 1e-12);
    let strong = ProblemParams::new(2.5, 2.0, 1.5, 1.0).unwrap();
    assert!(theta_star(&u0, &strong, &f, 1.0, 1.0).is_err());
    let log_case = ProblemParams::new(2.5, 2.0, 1.0, 1.0).unwrap();
    assert!(theta_star(&u0, &log_case, &f, 1.0, 1e6).unwrap() > 0.0);
}

proptest! {
    #[test]
    fn threshold_is_monotone(scale in 0.1f64..10.0, p in 2.2f64..4.0, q in 1.1f64..2.0, delta in 0.05f64..0.95) {
        let f = Nonlinearity::power(4.5, 1.0);
        let u0 = unit_l2(&interval(16)).scaled(scale);
        let pr = ProblemParams::new(p, q, delta, 1.0).unwrap();
        let wider = ProblemParams::new(p + 0.5, q, delta, 1.0).unwrap();
        let a = theta_star(&u0, &pr, &f, 1.0, 1e12).unwrap();
        let b = theta_star(&u0.scaled(1.1), &pr, &f, 1.0, 1e12).unwrap();
        prop_assert!(b > a);
        // (p-q)/p is increasing in p
        let c = theta_star(&u0, &wider, &f, 1.0, 1e12).unwrap();
        prop_assert!(c > a);
    }
}

#[test]
fn power_route_constant_holds_on_fields() {
    // c_r (r-p)/r ∫|u|^r >= C_r (‖u‖²/2)^{r/2}
    let mesh = interval(64);
    let (r, p) = (4.0, 2.0);
    let c = power_route_constant(r, 1.0, p, mesh.measure());
    for u in [sine(&mesh), Field::from_fn_dirichlet(mesh.clone(), |x| x[0] * (1.0 - x[0]))] {
        let w = mesh.quad_weights();
        let lr: f64 = u.values().iter().zip(w).map(|(v, w)| w * v.abs().powf(r)).sum();
        assert!((r - p) / r * lr >= c * (0.5 * u.l2_sq()).powf(r / 2.0) * (1.0 - 1e-12));
    }
}

#[test]
fn stabilization_cases() {
    let mesh = interval(64);
    let pr = ProblemParams::new(2.2, 1.8, 0.5, 1.0).unwrap();
    let f = Nonlinearity::saturated(1.0, pr.q);
    let ss = solve_steady_state(&mesh, &f, &pr, &EllipticConfig::default()).unwrap();
    let pc = ParabolicConfig::default();
    let still = run_p(&ss.u, &f, 1.0, 10, &pr, &pc).unwrap();
    let rep = stabilization_report(&still, &ss.u).unwrap();
    assert!(rep.errors.iter().all(|&e| e < 1e-8));
    assert!(rep.converged);
    let from_below = run_p(&ss.sub, &f, 10.0, 100, &pr, &pc).unwrap();
    let rep = stabilization_report(&from_below, &ss.u).unwrap();
    assert!(rep.errors.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12));
    let generic = run_p(&sine(&mesh), &f, 20.0, 200, &pr, &pc).unwrap();
    assert!(stabilization_report(&generic, &ss.u).unwrap().converged);
    let short = run_p(&sine(&mesh), &f, 0.1, 5, &pr, &pc).unwrap();
    assert!(!stabilization_report(&short, &ss.u).unwrap().converged);
}

#[test]
fn integrability_probe_on_singular_solutions() {
    let pr = ProblemParams::new(2.0, 1.5, 1.5, 1.0).unwrap();
    let meshes: Vec<_> = [128, 256, 512].iter().map(|&n| interval(n)).collect();
    let fam = singular_family(&meshes, &pr, &EllipticConfig::default()).unwrap();
    let rows = sobolev_probe(&fam, &[1.0, 3.0, 8.0]).unwrap();
    assert_eq!(rows[0].trend, Trend::Stable);
    assert_eq!(rows[1].trend, Trend::Stable);
    assert_eq!(rows[2].trend, Trend::Growing);
    assert!(singular_family(&meshes, &ProblemParams::new(2.0, 1.5, 0.5, 1.0).unwrap(), &EllipticConfig::default()).is_err());
}

#[test]
fn integrability_probe_on_an_exact_power() {
    // u = x^τ: ∫|u'|^m is finite iff m < 1/(1-τ) = 4
    let tau: f64 = 0.75;
    let fam: Vec<Field> = [512, 1024, 2048, 4096]
        .iter()
        .map(|&n| Field::from_fn(interval(n), |x| x[0].powf(tau)))
        .collect();
    let rows = sobolev_probe(&fam, &[2.0, 3.0, 6.0, 8.0]).unwrap();
    let trends: Vec<Trend> = rows.iter().map(|r| r.trend).collect();
    assert_eq!(trends, vec![Trend::Stable, Trend::Stable, Trend::Growing, Trend::Growing]);
    // below the threshold the limit is τ^m/(1-(1-τ)m)
    let exact = tau.powi(2) / (1.0 - 2.0 * (1.0 - tau));
    assert!((rows[0].integrals[3] - exact).abs() < 0.05 * exact);
    assert_eq!(classify(&[0.01, -0.02]), Trend::Stable);
    assert_eq!(classify(&[0.3, 0.5]), Trend::Growing);
    assert_eq!(classify(&[0.05, 0.5]), Trend::Indeterminate);
}
