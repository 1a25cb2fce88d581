//! Reaction terms `f(x, u)` and frozen forcings `g(x, t)`.

use std::fmt;
use std::sync::Arc;

use crate::mesh::Mesh;

pub type ForcingFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// A forcing that does not depend on the solution.
#[derive(Clone)]
pub enum Forcing {
    Const(f64),
    /// `amplitude * sin(omega * t)`, uniform in space.
    TimeSine { amplitude: f64, omega: f64 },
    Custom(ForcingFn),
}

impl Forcing {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Forcing::Const(c) => *c,
            Forcing::TimeSine { amplitude, omega } => amplitude * (omega * t).sin(),
            Forcing::Custom(g) => g(x, t),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        matches!(self, Forcing::Const(_))
    }

    /// `sup |g|` over the mesh nodes and `[0, horizon]`; sampled for custom forcings.
    pub fn sup_norm(&self, mesh: &Mesh, horizon: f64) -> f64 {
        match self {
            Forcing::Const(c) => c.abs(),
            Forcing::TimeSine { amplitude, omega } => {
                if omega.abs() * horizon >= std::f64::consts::FRAC_PI_2 {
                    amplitude.abs()
                } else {
                    (amplitude * (omega * horizon).sin()).abs()
                }
            }
            Forcing::Custom(g) => {
                let mut m: f64 = 0.0;
                for i in 0..=64 {
                    let t = horizon * i as f64 / 64.0;
                    for k in 0..mesh.len() {
                        m = m.max(g(mesh.coords(k), t).abs());
                    }
                }
                m
            }
        }
    }
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Const(c) => write!(f, "Const({c})"),
            Forcing::TimeSine { amplitude, omega } => {
                write!(f, "TimeSine {{ amplitude: {amplitude}, omega: {omega} }}")
            }
            Forcing::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Reactions growing at most like `s^(q-1)` at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubhomogFamily {
    /// `f(s) = c`.
    Constant { c: f64 },
    /// `f(s) = a * min(s^exponent, 1)`.
    Saturated { a: f64, exponent: f64 },
    /// `f(s) = a * s^k + c`.
    PowerConst { a: f64, k: f64, c: f64 },
}

/// `f(s) = c |s|^(r-2) s`, with primitive `c |s|^r / r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub r: f64,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub enum Nonlinearity {
    None,
    Frozen(Forcing),
    Subhomog(SubhomogFamily),
    Superhomog(PowerLaw),
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::None
    }
}

impl SubhomogFamily {
    fn value(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match *self {
            SubhomogFamily::Constant { c } => c,
            SubhomogFamily::Saturated { a, exponent } => a * s.powf(exponent).min(1.0),
            SubhomogFamily::PowerConst { a, k, c } => a * s.powf(k) + c,
        }
    }

    fn primitive(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.value(0.0) * s;
        }
        match *self {
            SubhomogFamily::Constant { c } => c * s,
            SubhomogFamily::Saturated { a, exponent } => {
                let e1 = exponent + 1.0;
                if s <= 1.0 {
                    a * s.powf(e1) / e1
                } else {
                    a * (1.0 / e1 + s - 1.0)
                }
            }
            SubhomogFamily::PowerConst { a, k, c } => a * s.powf(k + 1.0) / (k + 1.0) + c * s,
        }
    }
}

impl Nonlinearity {
    pub fn saturated(a: f64, q: f64) -> Nonlinearity {
        Nonlinearity::Subhomog(SubhomogFamily::Saturated { a, exponent: q - 1.0 })
    }

    pub fn power(r: f64, c: f64) -> Nonlinearity {
        Nonlinearity::Superhomog(PowerLaw { r, c })
    }

    pub fn constant(c: f64) -> Nonlinearity {
        Nonlinearity::Frozen(Forcing::Const(c))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Nonlinearity::None => "none",
            Nonlinearity::Frozen(_) => "frozen",
            Nonlinearity::Subhomog(_) => "subhomog",
            Nonlinearity::Superhomog(_) => "superhomog",
        }
    }

    /// Whether the term depends on the solution.
    pub fn depends_on_solution(&self) -> bool {
        matches!(self, Nonlinearity::Subhomog(_) | Nonlinearity::Superhomog(_))
    }

    /// `f(x, s)` at time `t`.
    pub fn value(&self, x: &[f64], s: f64, t: f64) -> f64 {
        match self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Frozen(g) => g.eval(x, t),
            Nonlinearity::Subhomog(fam) => fam.value(s),
            Nonlinearity::Superhomog(PowerLaw { r, c }) => c * s.abs().powf(r - 2.0) * s,
        }
    }

    /// `F(x, s) = ∫_0^s f(x, σ) dσ` at time `t`.
    pub fn primitive(&self, x: &[f64], s: f64, t: f64) -> f64 {
        match self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Frozen(g) => g.eval(x, t) * s,
            Nonlinearity::Subhomog(fam) => fam.primitive(s),
            Nonlinearity::Superhomog(PowerLaw { r, c }) => c * s.abs().powf(*r) / r,
        }
    }

    /// `lim_{s→∞} f(s)/s^(q-1)`.
    pub fn alpha_f(&self, q: f64) -> f64 {
        match *self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Frozen(_) => 0.0,
            Nonlinearity::Subhomog(SubhomogFamily::Constant { .. }) => 0.0,
            Nonlinearity::Subhomog(SubhomogFamily::Saturated { .. }) => 0.0,
            Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a, k, .. }) => {
                if k < q - 1.0 {
                    0.0
                } else if k == q - 1.0 {
                    a
                } else {
                    a.signum() * f64::INFINITY
                }
            }
            Nonlinearity::Superhomog(PowerLaw { r, c }) => {
                if r - 1.0 > q - 1.0 {
                    c.signum() * f64::INFINITY
                } else {
                    c
                }
            }
        }
    }

    /// `L >= 0` with `f(x, s) >= -L` for all `s >= 0` (infinite when unbounded below).
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Frozen(Forcing::Const(c)) => (-c).max(0.0),
            Nonlinearity::Frozen(Forcing::TimeSine { amplitude, .. }) => amplitude.abs(),
            Nonlinearity::Frozen(Forcing::Custom(_)) => f64::INFINITY,
            Nonlinearity::Subhomog(SubhomogFamily::Constant { c }) => (-c).max(0.0),
            Nonlinearity::Subhomog(SubhomogFamily::Saturated { a, .. }) => (-a).max(0.0),
            Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a, c, .. }) => {
                if a < 0.0 {
                    f64::INFINITY
                } else {
                    (-c).max(0.0)
                }
            }
            Nonlinearity::Superhomog(PowerLaw { c, .. }) => {
                if c >= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Smallest `K >= 0` making `s ↦ f(s) + K s` nondecreasing on `s >= 0`.
    pub fn monotonicity_modulus(&self) -> f64 {
        match *self {
            Nonlinearity::None | Nonlinearity::Frozen(_) => 0.0,
            Nonlinearity::Subhomog(SubhomogFamily::Constant { .. }) => 0.0,
            Nonlinearity::Subhomog(SubhomogFamily::Saturated { a, .. }) => {
                if a >= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a, k, .. }) => {
                if a >= 0.0 || k == 0.0 {
                    0.0
                } else if k == 1.0 {
                    -a
                } else {
                    f64::INFINITY
                }
            }
            Nonlinearity::Superhomog(PowerLaw { c, .. }) => {
                if c >= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Lipschitz constant of `f` on `[-radius, radius]` (on `[0, radius]` for
    /// the subhomogeneous families, which are extended by `f(0)` below zero).
    pub fn lipschitz_on(&self, radius: f64) -> f64 {
        match *self {
            Nonlinearity::None | Nonlinearity::Frozen(_) => 0.0,
            Nonlinearity::Subhomog(SubhomogFamily::Constant { .. }) => 0.0,
            Nonlinearity::Subhomog(SubhomogFamily::Saturated { a, exponent }) => {
                if exponent >= 1.0 {
                    a.abs() * exponent
                } else {
                    f64::INFINITY
                }
            }
            Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a, k, .. }) => {
                if k == 0.0 || a == 0.0 {
                    0.0
                } else if k >= 1.0 {
                    a.abs() * k * radius.powf(k - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Nonlinearity::Superhomog(PowerLaw { r, c }) => c.abs() * (r - 1.0) * radius.powf(r - 2.0),
        }
    }

    /// `(m, b)` with `f(s) <= m s^(q-1) + b` for all `s >= 0`, if such a bound exists.
    pub fn upper_growth(&self, q: f64) -> Option<(f64, f64)> {
        match *self {
            Nonlinearity::None => Some((0.0, 0.0)),
            Nonlinearity::Frozen(Forcing::Const(c)) => Some((0.0, c.max(0.0))),
            Nonlinearity::Frozen(Forcing::TimeSine { amplitude, .. }) => Some((0.0, amplitude.abs())),
            Nonlinearity::Frozen(Forcing::Custom(_)) => None,
            Nonlinearity::Subhomog(SubhomogFamily::Constant { c }) => Some((0.0, c.max(0.0))),
            Nonlinearity::Subhomog(SubhomogFamily::Saturated { a, .. }) => Some((0.0, a.max(0.0))),
            Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a, k, c }) => {
                if a <= 0.0 {
                    Some((0.0, c.max(0.0)))
                } else if k == q - 1.0 {
                    Some((a, c.max(0.0)))
                } else if k < q - 1.0 {
                    // s^k <= 1 + s^(q-1)
                    Some((a, a + c.max(0.0)))
                } else {
                    None
                }
            }
            Nonlinearity::Superhomog(_) => None,
        }
    }

    /// `(r, c_r)` of the power-type lower bound `c_r |s|^r <= r F(s) <= s f(s)`.
    pub fn power_growth(&self) -> Option<(f64, f64)> {
        match *self {
            Nonlinearity::Superhomog(PowerLaw { r, c }) => Some((r, c)),
            _ => None,
        }
    }

    /// Evaluate `f(x, u(x))` at every node.
    pub fn eval_nodes(&self, mesh: &Mesh, u: &[f64], t: f64) -> Vec<f64> {
        (0..mesh.len()).map(|k| self.value(mesh.coords(k), u[k], t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num_primitive(f: &Nonlinearity, s: f64) -> f64 {
        // composite Simpson in t = sqrt(sigma), smooth for the fractional powers
        let n = 4000;
        let h = s.sqrt() / n as f64;
        let g = |t: f64| 2.0 * t * f.value(&[0.0], t * t, 0.0);
        let mut acc = g(0.0) + g(s.sqrt());
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn primitives_match_quadrature() {
        let cases = [
            Nonlinearity::saturated(1.5, 1.8),
            Nonlinearity::Subhomog(SubhomogFamily::PowerConst { a: 2.0, k: 0.5, c: 0.3 }),
            Nonlinearity::Subhomog(SubhomogFamily::Constant { c: 0.7 }),
            Nonlinearity::power(4.0, 1.0),
            Nonlinearity::power(3.5, 0.5),
        ];
        for f in &cases {
            for s in [0.3, 1.0, 2.5] {
                let exact = f.primitive(&[0.0], s, 0.0);
                let num = num_primitive(f, s);
                assert!((exact - num).abs() < 1e-6 * (1.0 + exact.abs()), "{f:?} s={s}: {exact} vs {num}");
            }
        }
    }

    #[test]
    fn growth_data() {
        let f = Nonlinearity::saturated(1.0, 1.8);
        assert_eq!(f.alpha_f(1.8), 0.0);
        assert_eq!(f.lower_bound(), 0.0);
        assert_eq!(f.monotonicity_modulus(), 0.0);
        assert_eq!(f.upper_growth(1.8), Some((0.0, 1.0)));
        let g = Nonlinearity::power(4.0, 1.0);
        assert_eq!(g.power_growth(), Some((4.0, 1.0)));
        assert_eq!(g.lipschitz_on(2.0), 12.0);
        assert!(g.upper_growth(1.5).is_none());
    }

    #[test]
    fn frozen_forcing_is_solution_independent() {
        let f = Nonlinearity::Frozen(Forcing::TimeSine { amplitude: 2.0, omega: 1.0 });
        assert_eq!(f.value(&[0.3], 5.0, 0.0), 0.0);
        assert!((f.value(&[0.3], 5.0, 1.0) - 2.0 * 1f64.sin()).abs() < 1e-15);
        assert!(!f.depends_on_solution());
    }
}
