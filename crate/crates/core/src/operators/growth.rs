use serde::Serialize;

use super::nonlinearity::Nonlinearity;

/// First sample where a growth condition failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthViolation {
    pub condition: &'static str,
    pub s: f64,
    pub detail: String,
}

/// Sampled check of the structural conditions on `f`.
///
/// * `f1`: `f(s)/s^(q-1)` has a finite nonnegative limit at infinity.
/// * `f2`: `f(s)/s^(q-1)` is nonincreasing on the grid.
/// * `lower_bound`: `f >= -L` with a finite `L`.
/// * `f3`: `c_r s^r <= r F(s) <= s f(s)` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub f1: bool,
    pub f2: bool,
    pub lower_bound: bool,
    pub f3: bool,
    pub first_violation: Option<GrowthViolation>,
}

impl GrowthReport {
    /// The subhomogeneous package: f1, f2 and a lower bound.
    pub fn subhomogeneous(&self) -> bool {
        self.f1 && self.f2 && self.lower_bound
    }
}

const X0: [f64; 2] = [0.5, 0.5];

fn rel_tol(a: f64, b: f64) -> f64 {
    1e-12 * (1.0 + a.abs().max(b.abs()))
}

pub fn check_growth_conditions(f: &Nonlinearity, q: f64, s_grid: &[f64]) -> GrowthReport {
    let mut first: Option<GrowthViolation> = None;
    let note = |v: GrowthViolation, first: &mut Option<GrowthViolation>| {
        if first.is_none() {
            *first = Some(v);
        }
    };
    let val = |s: f64| f.value(&X0, s, 0.0);

    let alpha = f.alpha_f(q);
    let mut f1 = alpha.is_finite() && alpha >= 0.0;
    if !f1 {
        note(
            GrowthViolation { condition: "f1", s: f64::INFINITY, detail: format!("limit ratio {alpha}") },
            &mut first,
        );
    }
    let ratios: Vec<f64> = s_grid.iter().map(|&s| val(s) / s.powf(q - 1.0)).collect();
    if ratios.iter().any(|r| !r.is_finite()) {
        f1 = false;
    }

    let mut f2 = true;
    for w in 1..ratios.len() {
        if ratios[w] > ratios[w - 1] + rel_tol(ratios[w], ratios[w - 1]) {
            f2 = false;
            note(
                GrowthViolation {
                    condition: "f2",
                    s: s_grid[w],
                    detail: format!("ratio rose from {} to {}", ratios[w - 1], ratios[w]),
                },
                &mut first,
            );
            break;
        }
    }

    let big_l = f.lower_bound();
    let mut lower_bound = big_l.is_finite();
    if lower_bound {
        if let Some(&s) = s_grid.iter().find(|&&s| val(s) < -big_l - rel_tol(val(s), big_l)) {
            lower_bound = false;
            note(
                GrowthViolation { condition: "lower_bound", s, detail: format!("f = {} < -{}", val(s), big_l) },
                &mut first,
            );
        }
    } else {
        note(
            GrowthViolation { condition: "lower_bound", s: f64::NAN, detail: "f is unbounded below".into() },
            &mut first,
        );
    }

    let f3 = match f.power_growth() {
        None => false,
        Some((r, c_r)) => {
            let mut ok = r > q;
            for &s in s_grid {
                let rf = r * f.primitive(&X0, s, 0.0);
                let sf = s * val(s);
                let low = c_r * s.abs().powf(r);
                if low > rf + rel_tol(low, rf) || rf > sf + rel_tol(rf, sf) {
                    ok = false;
                    note(
                        GrowthViolation {
                            condition: "f3",
                            s,
                            detail: format!("c_r s^r = {low}, r F = {rf}, s f = {sf}"),
                        },
                        &mut first,
                    );
                    break;
                }
            }
            ok
        }
    };

    GrowthReport { f1, f2, lower_bound, f3, first_violation: first }
}

/// Geometric grid on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
