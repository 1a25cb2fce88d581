use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;

use pqflow_core::elliptic::{solve_barrier_m, EllipticConfig};
use pqflow_core::operators::*;
use pqflow_core::{phi_delta, Mesh, ProblemParams};

fn interval(n: usize) -> Arc<Mesh> {
    Arc::new(Mesh::interval(0.0, 1.0, n).unwrap())
}

fn square(n: usize) -> Arc<Mesh> {
    Arc::new(Mesh::rect(0.0, 1.0, 0.0, 1.0, n, n).unwrap())
}

fn field_from(mesh: &Arc<Mesh>, vals: &[f64]) -> Field {
    let mut f = Field::new(mesh.clone(), vals.to_vec()).unwrap();
    f.zero_boundary();
    f
}

// Independent edge quadrature of |∇u|^{p-2}∇u·∇v, written from the stencil
// definition: 1D edges, 2D four corner samples per cell.
fn edge_pairing(mesh: &Mesh, u: &[f64], v: &[f64], p: f64) -> f64 {
    let eta2 = mesh.grad_regularization().powi(2);
    let kernel = |sq: f64| (sq + eta2).powf(0.5 * (p - 2.0));
    if mesh.dim() == 1 {
        let h = mesh.spacing()[0];
        (0..mesh.len() - 1)
            .map(|i| {
                let du = (u[i + 1] - u[i]) / h;
                let dv = (v[i + 1] - v[i]) / h;
                h * kernel(du * du) * du * dv
            })
            .sum()
    } else {
        let [nx, ny] = mesh.cells();
        let [hx, hy] = mesh.spacing();
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut acc = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                for (row, col) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let gx = |w: &[f64]| (w[id(i + 1, j + row)] - w[id(i, j + row)]) / hx;
                    let gy = |w: &[f64]| (w[id(i + col, j + 1)] - w[id(i + col, j)]) / hy;
                    let (ux, uy, vx, vy) = (gx(u), gy(u), gx(v), gy(v));
                    acc += 0.25 * hx * hy * kernel(ux * ux + uy * uy) * (ux * vx + uy * vy);
                }
            }
        }
        acc
    }
}

fn quad_pairing(a: &Field, b: &Field) -> f64 {
    let w = a.mesh().quad_weights();
    a.values().iter().zip(b.values()).zip(w).map(|((x, y), w)| w * x * y).sum()
}

fn ibp_gap(mesh: &Arc<Mesh>, u: &[f64], v: &[f64], p: f64) -> f64 {
    let u = field_from(mesh, u);
    let v = field_from(mesh, v);
    let lhs = quad_pairing(&apply_p_laplacian(&u, p), &v);
    let rhs = edge_pairing(mesh, u.values(), v.values(), p);
    (lhs - rhs).abs() / rhs.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integration_by_parts_1d(
        u in prop::collection::vec(-1.0f64..1.0, 65),
        v in prop::collection::vec(-1.0f64..1.0, 65),
        p in 1.2f64..4.0,
    ) {
        prop_assert!(ibp_gap(&interval(64), &u, &v, p) <= 1e-12);
    }

    #[test]
    fn integration_by_parts_2d(
        u in prop::collection::vec(-1.0f64..1.0, 289),
        v in prop::collection::vec(-1.0f64..1.0, 289),
        p in 1.2f64..4.0,
    ) {
        prop_assert!(ibp_gap(&square(16), &u, &v, p) <= 1e-12);
    }

    #[test]
    fn operator_is_monotone(
        u in prop::collection::vec(-2.0f64..2.0, 33),
        v in prop::collection::vec(-2.0f64..2.0, 33),
        p in 1.1f64..5.0,
    ) {
        let mesh = interval(32);
        let (u, v) = (field_from(&mesh, &u), field_from(&mesh, &v));
        let du = apply_p_laplacian(&u, p).sub(&apply_p_laplacian(&v, p)).unwrap();
        let s = quad_pairing(&du, &u.sub(&v).unwrap());
        prop_assert!(s >= -1e-12 * (1.0 + du.linf()));
    }

    #[test]
    fn energy_gradient_matches_finite_differences(
        u in prop::collection::vec(0.1f64..1.0, 81),
        w in prop::collection::vec(-1.0f64..1.0, 81),
        p in 2.0f64..4.0,
        dq in 0.1f64..0.9,
    ) {
        let params = ProblemParams::new(p, p - dq, 0.5, 0.0).unwrap();
        let mesh = square(8);
        let (u, w) = (field_from(&mesh, &u), field_from(&mesh, &w));
        let h = 1e-6;
        let j = |s: f64| {
            let x = u.zip_map(&w, |a, b| a + s * b).unwrap();
            energy_j(&x, &params, &Nonlinearity::None).unwrap()
        };
        let fd = (j(h) - j(-h)) / (2.0 * h);
        let exact = quad_pairing(&apply_pq_laplacian(&u, &params), &w);
        prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3), "fd {fd} exact {exact}");
    }

    #[test]
    fn profile_is_increasing(p in 1.1f64..5.0, delta in 0.1f64..3.0, s0 in 0.01f64..1.0) {
        let a = 10.0;
        let s1 = s0 * 1.5;
        prop_assert!(phi_delta(s1, delta, p, a).unwrap() > phi_delta(s0, delta, p, a).unwrap());
    }

    #[test]
    fn distance_is_one_lipschitz(nx in 2usize..12, ny in 2usize..12, w in 0.5f64..3.0) {
        let mesh = Mesh::rect(0.0, w, 0.0, 1.0, nx, ny).unwrap();
        let [hx, hy] = mesh.spacing();
        let d = mesh.dist();
        for j in 0..=ny {
            for i in 0..=nx {
                let k = j * (nx + 1) + i;
                if i < nx {
                    prop_assert!((d[k + 1] - d[k]).abs() <= hx + 1e-12);
                }
                if j < ny {
                    prop_assert!((d[k + nx + 1] - d[k]).abs() <= hy + 1e-12);
                }
            }
        }
    }
}

#[test]
fn mesh_examples() {
    let m = Mesh::interval(-1.0, 1.0, 8).unwrap();
    assert_eq!(m.dist()[4], 1.0);
    let sq = Mesh::rect(0.0, 1.0, 0.0, 1.0, 4, 4).unwrap();
    assert_eq!(sq.dist()[sq.nearest_node(&[0.5, 0.5])], 0.5);
    assert_eq!(sq.dist()[sq.nearest_node(&[0.25, 0.5])], 0.25);
    let r = Mesh::rect(0.0, 2.0, 0.0, 1.0, 4, 4).unwrap();
    assert_eq!(r.dist()[r.nearest_node(&[1.0, 0.5])], 0.5);
    for mesh in [m, sq, r] {
        let total: f64 = mesh.quad_weights().iter().sum();
        assert_relative_eq!(total, mesh.measure(), max_relative = 1e-12);
        assert!(mesh.interior().iter().all(|&k| mesh.dist()[k] > 0.0));
        assert!((0..mesh.len()).filter(|&k| mesh.is_boundary(k)).all(|k| mesh.dist()[k] == 0.0));
    }
}

#[test]
fn refinement_doubles_cells() {
    let spec = Mesh::interval(0.0, 1.0, 10).unwrap().spec();
    let fine = spec.refined(2).build().unwrap();
    assert_eq!(fine.cells()[0], 20);
    assert_relative_eq!(fine.h_max(), 0.05, max_relative = 1e-12);
}

#[test]
fn profile_branches() {
    assert_relative_eq!(phi_delta(0.01, 2.0, 3.0, 10.0).unwrap(), 0.01f64.powf(0.75));
    assert_eq!(phi_delta(0.5, 0.5, 2.0, 10.0).unwrap(), 0.5);
    for d in [0.5, 1.0, 2.0] {
        assert_eq!(phi_delta(0.0, d, 2.0, 10.0).unwrap(), 0.0);
    }
    assert!(phi_delta(2.0, 1.0, 2.0, 1.0).is_err());
}

#[test]
fn params_derived_quantities() {
    for delta in [0.3, 1.0, 1.7] {
        let pr = ProblemParams::new(3.0, 2.0, delta, 1.0).unwrap();
        assert!(pr.delta_crit() > 2.0);
        match delta.partial_cmp(&1.0).unwrap() {
            std::cmp::Ordering::Less => assert!(pr.tau() > 1.0),
            std::cmp::Ordering::Equal => assert_eq!(pr.tau(), 1.0),
            std::cmp::Ordering::Greater => assert!(pr.tau() < 1.0),
        }
    }
    let pr = ProblemParams::new(2.0, 1.5, 1.5, 1.0).unwrap();
    assert_relative_eq!(pr.m_crit(), 5.0);
    assert!(ProblemParams::new(2.0, 1.5, 0.5, 1.0).unwrap().m_crit().is_infinite());
    assert!(ProblemParams::new(2.0, 2.0, 0.5, 1.0).is_err());
    assert!(ProblemParams::new(2.0, 0.9, 0.5, 1.0).is_err());
    assert!(ProblemParams::new(2.0, 1.5, 0.0, 1.0).is_err());
}

// -Δ_s(x^τ) = τ^{s-1}(1-τ)(s-1) x^{τ(s-1)-s}, from differentiating τ^{s-1} x^{(τ-1)(s-1)}.
fn power_profile_term(tau: f64, s: f64, x: f64) -> f64 {
    tau.powf(s - 1.0) * (1.0 - tau) * (s - 1.0) * x.powf(tau * (s - 1.0) - s)
}

#[test]
fn pq_operator_on_power_profile() {
    let mesh = interval(2048);
    let params = ProblemParams::new(3.0, 1.5, 2.0, 1.0).unwrap();
    let tau = params.tau();
    let u = Field::from_fn(mesh.clone(), |x| x[0].powf(tau));
    let lap = apply_pq_laplacian(&u, &params);
    for &k in mesh.interior() {
        let x = mesh.coords(k)[0];
        if mesh.dist()[k] > 0.1 {
            let exact = power_profile_term(tau, params.p, x) + power_profile_term(tau, params.q, x);
            assert_relative_eq!(lap.values()[k], exact, max_relative = 1e-4);
        }
    }
    // the p-term alone is c u^{-δ}
    let x = 0.3;
    let c = tau.powf(2.0) * (1.0 - tau) * 2.0;
    assert_relative_eq!(power_profile_term(tau, 3.0, x), c * x.powf(tau).powf(-2.0), max_relative = 1e-12);
}

#[test]
fn coincident_exponents_and_constants() {
    let mesh = interval(64);
    let u = Field::from_fn_dirichlet(mesh.clone(), |x| (PI * x[0]).sin());
    let two = ProblemParams::coincident(2.0, 2.0, 0.5, 1.0).unwrap();
    let a = apply_pq_laplacian(&u, &two);
    let b = apply_p_laplacian(&u, 2.0).scaled(2.0);
    assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    let c = Field::constant(mesh, 3.0);
    assert!(apply_p_laplacian(&c, 3.5).linf() == 0.0);
}

#[test]
fn energy_and_nehari_closed_forms() {
    let mesh = interval(512);
    let u = Field::from_fn_dirichlet(mesh.clone(), |x| (PI * x[0]).sin());
    let heat = ProblemParams::coincident(2.0, 2.0, 0.5, 0.0).unwrap();
    let j = energy_j(&u, &heat, &Nonlinearity::None).unwrap();
    assert_relative_eq!(j, PI * PI / 2.0, max_relative = 1e-5);
    // f(u) = u: I = π² - 1/2
    let i = nehari_i(&u, &heat, &Nonlinearity::power(2.0, 1.0)).unwrap();
    assert_relative_eq!(i, PI * PI - 0.5, max_relative = 1e-5);
    let pr = ProblemParams::new(2.5, 1.5, 0.5, 1.0).unwrap();
    assert!(energy_j(&Field::zeros(mesh.clone()), &pr, &Nonlinearity::None).unwrap().abs() < 1e-20);
    let i0 = nehari_i(&u, &ProblemParams::new(2.5, 1.5, 0.5, 0.0).unwrap(), &Nonlinearity::None).unwrap();
    assert!(i0 >= 0.0);
}

#[test]
fn nehari_grows_along_rays_for_strong_singularity() {
    let mesh = interval(128);
    let pr = ProblemParams::new(2.5, 1.5, 1.5, 1.0).unwrap();
    let u = Field::from_fn_dirichlet(mesh.clone(), |x| (PI * x[0]).sin());
    let vals: Vec<f64> = (0..20)
        .map(|k| nehari_i(&u.scaled(2f64.powi(k)), &pr, &Nonlinearity::None).unwrap())
        .collect();
    assert!(vals[10..].windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn singular_energy_is_stable_under_refinement() {
    let pr = ProblemParams::new(3.0, 2.0, 2.0, 1.0).unwrap();
    let cfg = EllipticConfig::default();
    let j: Vec<f64> = [256, 512]
        .iter()
        .map(|&n| {
            let u = solve_barrier_m(&interval(n), 1.0, 0.0, 0.0, &pr, &cfg).unwrap().u;
            energy_j(&u, &pr, &Nonlinearity::None).unwrap()
        })
        .collect();
    assert!(j.iter().all(|v| v.is_finite()));
    assert!((j[1] - j[0]).abs() < 0.05 * j[0].abs(), "{j:?}");
}

#[test]
fn singular_integrals_skip_the_boundary() {
    let mesh = interval(8);
    let u = Field::from_fn_dirichlet(mesh.clone(), |_| 1.0);
    assert_relative_eq!(singular_mass(&u, 2.0).unwrap(), 7.0 / 8.0);
    assert_relative_eq!(singular_potential(&u, 1.0).unwrap(), 0.0);
    assert!(singular_mass(&Field::zeros(mesh.clone()), 1.5).is_err());
    assert_eq!(singular_mass(&Field::zeros(mesh), 0.5).unwrap(), 0.0);
}

#[test]
fn gradient_integrals() {
    let mesh = interval(256);
    let lin = Field::from_fn(mesh.clone(), |x| x[0]);
    for m in [1.0, 2.0, 3.7] {
        assert_relative_eq!(grad_integral(&lin, m).unwrap(), 1.0, max_relative = 1e-12);
    }
    let s = Field::from_fn_dirichlet(mesh, |x| (PI * x[0]).sin());
    assert_relative_eq!(grad_integral(&s, 2.0).unwrap(), PI * PI / 2.0, max_relative = 1e-4);
    assert!(grad_integral(&s, 0.5).is_err());
}

#[test]
fn gradient_integral_of_power_follows_the_threshold() {
    // ∫_0^1 |τ x^{τ-1}|^m is finite iff (1-τ)m < 1
    let tau: f64 = 0.8;
    let vals = |m: f64| -> Vec<f64> {
        [256, 512, 1024]
            .iter()
            .map(|&n| grad_integral(&Field::from_fn(interval(n), |x| x[0].powf(tau)), m).unwrap())
            .collect()
    };
    let below = vals(3.0);
    let exact = tau.powi(3) / (1.0 - 3.0 * (1.0 - tau));
    assert!((below[2] - exact).abs() < (below[0] - exact).abs());
    let above = vals(8.0);
    assert!(above.windows(2).all(|w| w[1] > 1.25 * w[0]));
}

#[test]
fn growth_condition_examples() {
    let grid = log_grid(1e-4, 1e4, 161);
    let q = 1.5;
    let sat = Nonlinearity::saturated(1.0, q);
    assert!(check_growth_conditions(&sat, q, &grid).subhomogeneous());
    let cubic = Nonlinearity::power(4.0, 1.0);
    assert!(check_growth_conditions(&cubic, q, &grid).f3);
    let sq = Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a: 1.0, k: q, c: 0.0 });
    let rep = check_growth_conditions(&sq, q, &grid);
    assert!(!rep.f2);
    assert!(rep.first_violation.is_some());
}
