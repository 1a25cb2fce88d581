//! Discrete (p,q)-Laplacian and the scalar functionals built on it.
//!
//! Everything is derived from the gradient samples of the mesh. With
//! `E_p(u) = Σ_s w_s ψ_p(|G_s u|^2)` and nodal quadrature weights `m_k`,
//! the discrete operator is `(-Δ_p u)_k = (∂E_p/∂u_k) / m_k` at interior
//! nodes, so summation by parts against boundary-vanishing fields is exact.
//! `ψ_p(σ) = ((σ + η²)^{p/2} - η^p) / p` with the mesh regularization `η`.

use crate::error::{Error, Result};
use crate::linalg::BandedSpd;
use crate::mesh::Mesh;

use super::field::Field;
use super::nonlinearity::Nonlinearity;
use super::params::ProblemParams;

/// Adds `coef * ∂E_p/∂u` (not divided by the nodal weights) into `grad`.
pub(crate) fn accumulate_flux(mesh: &Mesh, u: &[f64], p: f64, coef: f64, eta: f64, grad: &mut [f64]) {
    if coef == 0.0 {
        return;
    }
    let eta2 = eta * eta;
    let mut g = [0.0; 2];
    for s in mesh.grad_samples() {
        let sq = s.gradient(u, &mut g);
        let a = coef * s.weight * (sq + eta2).powf(0.5 * (p - 2.0));
        for (c, d) in s.comps.iter().enumerate() {
            let flux = a * g[c] * d.inv_h;
            grad[d.plus] += flux;
            grad[d.minus] -= flux;
        }
    }
}

/// Adds `|coef|` times the absolute flux contributions at each node, the
/// magnitude of the summands before they cancel in [`accumulate_flux`].
pub(crate) fn accumulate_flux_magnitude(mesh: &Mesh, u: &[f64], p: f64, coef: f64, eta: f64, out: &mut [f64]) {
    if coef == 0.0 {
        return;
    }
    let eta2 = eta * eta;
    let mut g = [0.0; 2];
    for s in mesh.grad_samples() {
        let sq = s.gradient(u, &mut g);
        let a = coef.abs() * s.weight * (sq + eta2).powf(0.5 * (p - 2.0));
        for (c, d) in s.comps.iter().enumerate() {
            let flux = (a * g[c] * d.inv_h).abs();
            out[d.plus] += flux;
            out[d.minus] += flux;
        }
    }
}

/// `Σ_s w_s ψ_p(|G_s u|^2)`, the regularized `(1/p) ∫ |∇u|^p`.
pub(crate) fn regularized_energy(mesh: &Mesh, u: &[f64], p: f64, eta: f64) -> f64 {
    let eta2 = eta * eta;
    let eta_p = eta.powf(p);
    let mut g = [0.0; 2];
    mesh.grad_samples()
        .iter()
        .map(|s| {
            let sq = s.gradient(u, &mut g);
            s.weight * ((sq + eta2).powf(0.5 * p) - eta_p) / p
        })
        .sum()
}

/// `Σ_s w_s (|G|^2 + η^2)^{(p-2)/2} |G|^2`, i.e. `⟨-Δ_p u, u⟩` for boundary-vanishing `u`.
pub(crate) fn flux_pairing(mesh: &Mesh, u: &[f64], p: f64, eta: f64) -> f64 {
    let eta2 = eta * eta;
    let mut g = [0.0; 2];
    mesh.grad_samples()
        .iter()
        .map(|s| {
            let sq = s.gradient(u, &mut g);
            s.weight * (sq + eta2).powf(0.5 * (p - 2.0)) * sq
        })
        .sum()
}

/// Adds `coef * ∇²E_p(u)` restricted to the interior unknowns.
///
/// With `exact = false` and `p < 2` the curvature along the gradient is
/// dropped, which gives a majorant of the Hessian.
pub(crate) fn accumulate_hessian(
    mesh: &Mesh,
    u: &[f64],
    p: f64,
    coef: f64,
    eta: f64,
    exact: bool,
    mat: &mut BandedSpd,
) {
    if coef == 0.0 {
        return;
    }
    let eta2 = eta * eta;
    let mut g = [0.0; 2];
    for s in mesh.grad_samples() {
        let sq = s.gradient(u, &mut g);
        let base = sq + eta2;
        let a = coef * s.weight * base.powf(0.5 * (p - 2.0));
        let b = if p < 2.0 && !exact { 0.0 } else { coef * s.weight * (p - 2.0) * base.powf(0.5 * (p - 4.0)) };
        // ∂G_c/∂u_k is +inv_h at plus, -inv_h at minus
        let mut touched: [(usize, [f64; 2]); 4] = [(usize::MAX, [0.0; 2]); 4];
        let mut count = 0;
        for (c, d) in s.comps.iter().enumerate() {
            for (node, sign) in [(d.plus, 1.0), (d.minus, -1.0)] {
                let slot = match touched[..count].iter().position(|t| t.0 == node) {
                    Some(i) => i,
                    None => {
                        touched[count] = (node, [0.0; 2]);
                        count += 1;
                        count - 1
                    }
                };
                touched[slot].1[c] += sign * d.inv_h;
            }
        }
        for i in 0..count {
            let (ni, di) = touched[i];
            let Some(ui) = mesh.unknown_of(ni) else { continue };
            let gdi = g[0] * di[0] + g[1] * di[1];
            for &(nj, dj) in &touched[..count] {
                let Some(uj) = mesh.unknown_of(nj) else { continue };
                if uj > ui {
                    continue;
                }
                let gdj = g[0] * dj[0] + g[1] * dj[1];
                let v = a * (di[0] * dj[0] + di[1] * dj[1]) + b * gdi * gdj;
                mat.add(ui, uj, v);
            }
        }
    }
}

fn divide_by_weights(mesh: &Mesh, grad: &mut [f64]) {
    for (k, g) in grad.iter_mut().enumerate() {
        if mesh.is_boundary(k) {
            *g = 0.0;
        } else {
            *g /= mesh.quad_weights()[k];
        }
    }
}

/// Discrete `-Δ_p u`; zero on boundary nodes.
pub fn apply_p_laplacian(u: &Field, p: f64) -> Field {
    let mesh = u.mesh();
    let mut out = vec![0.0; mesh.len()];
    accumulate_flux(mesh, u.values(), p, 1.0, mesh.grad_regularization(), &mut out);
    divide_by_weights(mesh, &mut out);
    u.with_values(out)
}

/// Discrete `-Δ_p u - Δ_q u`; zero on boundary nodes.
pub fn apply_pq_laplacian(u: &Field, params: &ProblemParams) -> Field {
    let mesh = u.mesh();
    let eta = mesh.grad_regularization();
    let mut out = vec![0.0; mesh.len()];
    accumulate_flux(mesh, u.values(), params.p, 1.0, eta, &mut out);
    accumulate_flux(mesh, u.values(), params.q, 1.0, eta, &mut out);
    divide_by_weights(mesh, &mut out);
    u.with_values(out)
}

/// `∫ |∇u|^m` by the gradient-sample quadrature.
pub fn grad_integral(u: &Field, m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("gradient exponent must be >= 1, got {m}")));
    }
    let mut g = [0.0; 2];
    Ok(u.mesh()
        .grad_samples()
        .iter()
        .map(|s| s.weight * s.gradient(u.values(), &mut g).powf(0.5 * m))
        .sum())
}

/// `∫ u^{1-δ}/(1-δ)` (or `∫ ln u` when `δ = 1`) over interior nodes.
///
/// Boundary nodes are left out: their limit contributes nothing for `δ < 1`
/// and is not defined otherwise.
pub fn singular_potential(u: &Field, delta: f64) -> Result<f64> {
    let mesh = u.mesh();
    let w = mesh.quad_weights();
    let mut acc = 0.0;
    for &k in mesh.interior() {
        let v = u.values()[k];
        let term = if delta < 1.0 {
            v.abs().powf(1.0 - delta) / (1.0 - delta)
        } else if v <= 0.0 {
            return Err(Error::NonFinite(format!(
                "singular integral: u = {v} at interior node {k} with delta = {delta}"
            )));
        } else if delta == 1.0 {
            v.ln()
        } else {
            v.powf(1.0 - delta) / (1.0 - delta)
        };
        acc += w[k] * term;
    }
    if acc.is_finite() {
        Ok(acc)
    } else {
        Err(Error::NonFinite("singular integral".into()))
    }
}

/// `∫ |u|^{1-δ}` over interior nodes.
pub fn singular_mass(u: &Field, delta: f64) -> Result<f64> {
    let mesh = u.mesh();
    let w = mesh.quad_weights();
    let mut acc = 0.0;
    for &k in mesh.interior() {
        let v = u.values()[k].abs();
        if delta >= 1.0 && v == 0.0 {
            return Err(Error::NonFinite(format!("singular integral: u = 0 at interior node {k}")));
        }
        acc += w[k] * v.powf(1.0 - delta);
    }
    if acc.is_finite() {
        Ok(acc)
    } else {
        Err(Error::NonFinite("singular integral".into()))
    }
}

fn reaction_integrals(u: &Field, f: &Nonlinearity, t: f64) -> (f64, f64) {
    if matches!(f, Nonlinearity::None) {
        return (0.0, 0.0);
    }
    let mesh = u.mesh();
    let w = mesh.quad_weights();
    let mut prim = 0.0;
    let mut pair = 0.0;
    for k in 0..mesh.len() {
        let x = mesh.coords(k);
        let v = u.values()[k];
        prim += w[k] * f.primitive(x, v, t);
        pair += w[k] * f.value(x, v, t) * v;
    }
    (prim, pair)
}

/// `J(u) = (1/p)∫|∇u|^p + (1/q)∫|∇u|^q - ϑ∫u^{1-δ}/(1-δ) - ∫F(u)`, frozen forcings at `t = 0`.
pub fn energy_j(u: &Field, params: &ProblemParams, f: &Nonlinearity) -> Result<f64> {
    energy_j_at(u, params, f, 0.0)
}

pub fn energy_j_at(u: &Field, params: &ProblemParams, f: &Nonlinearity, t: f64) -> Result<f64> {
    let mesh = u.mesh();
    let eta = mesh.grad_regularization();
    let ep = regularized_energy(mesh, u.values(), params.p, eta);
    let eq = regularized_energy(mesh, u.values(), params.q, eta);
    let sing = if params.theta == 0.0 {
        0.0
    } else {
        params.theta * singular_potential(u, params.delta)?
    };
    let (prim, _) = reaction_integrals(u, f, t);
    let j = ep + eq - sing - prim;
    if j.is_finite() {
        Ok(j)
    } else {
        Err(Error::NonFinite("energy".into()))
    }
}

/// `I(u) = ∫|∇u|^p + ∫|∇u|^q - ϑ∫|u|^{1-δ} - ∫f(u)u`, frozen forcings at `t = 0`.
pub fn nehari_i(u: &Field, params: &ProblemParams, f: &Nonlinearity) -> Result<f64> {
    nehari_i_at(u, params, f, 0.0)
}

pub fn nehari_i_at(u: &Field, params: &ProblemParams, f: &Nonlinearity, t: f64) -> Result<f64> {
    let mesh = u.mesh();
    let eta = mesh.grad_regularization();
    let gp = flux_pairing(mesh, u.values(), params.p, eta);
    let gq = flux_pairing(mesh, u.values(), params.q, eta);
    let sing = if params.theta == 0.0 {
        0.0
    } else {
        params.theta * singular_mass(u, params.delta)?
    };
    let (_, pair) = reaction_integrals(u, f, t);
    let i = gp + gq - sing - pair;
    if i.is_finite() {
        Ok(i)
    } else {
        Err(Error::NonFinite("Nehari functional".into()))
    }
}
