//! Structured grids on intervals and rectangles.
//!
//! A [`Mesh`] carries everything the discrete operators need: node
//! coordinates, the interior/boundary split, the exact distance to the
//! boundary, trapezoidal quadrature weights and the list of gradient
//! samples used by every gradient-based integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One finite-difference component of a sampled gradient:
/// `(u[plus] - u[minus]) * inv_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Difference {
    pub plus: usize,
    pub minus: usize,
    pub inv_h: f64,
}

/// A gradient sample with its quadrature weight.
///
/// In 1D there is one sample per cell edge. In 2D each cell carries four
/// corner samples, each combining the two cell edges meeting at that corner
/// (the average of the two right-triangle splittings of the cell).
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub weight: f64,
    pub comps: Vec<Difference>,
}

impl GradSample {
    #[inline]
    pub fn gradient(&self, u: &[f64], out: &mut [f64; 2]) -> f64 {
        let mut sq = 0.0;
        for (c, d) in self.comps.iter().enumerate() {
            let g = (u[d.plus] - u[d.minus]) * d.inv_h;
            out[c] = g;
            sq += g * g;
        }
        sq
    }
}

/// Geometry descriptor, enough to rebuild a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Interval { a: f64, b: f64, n: usize },
    Rect { ax: f64, bx: f64, ay: f64, by: f64, nx: usize, ny: usize },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            MeshSpec::Interval { a, b, n } => Mesh::interval(a, b, n),
            MeshSpec::Rect { ax, bx, ay, by, nx, ny } => Mesh::rect(ax, bx, ay, by, nx, ny),
        }
    }

    /// Same geometry with every axis subdivided `factor` times finer.
    pub fn refined(&self, factor: usize) -> MeshSpec {
        match *self {
            MeshSpec::Interval { a, b, n } => MeshSpec::Interval { a, b, n: n * factor },
            MeshSpec::Rect { ax, bx, ay, by, nx, ny } => MeshSpec::Rect {
                ax,
                bx,
                ay,
                by,
                nx: nx * factor,
                ny: ny * factor,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    spec: MeshSpec,
    dim: usize,
    /// Cells per axis.
    cells: [usize; 2],
    spacing: [f64; 2],
    nodes: Vec<[f64; 2]>,
    boundary: Vec<bool>,
    dist: Vec<f64>,
    weights: Vec<f64>,
    samples: Vec<GradSample>,
    /// Node index of each unknown (interior node).
    interior: Vec<usize>,
    /// Unknown index of each node, `usize::MAX` on the boundary.
    unknown_of: Vec<usize>,
    bandwidth: usize,
}

impl Mesh {
    /// `n` equal cells on `[a, b]`.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Mesh> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidMesh(format!("need a < b, got a={a}, b={b}")));
        }
        if n < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 cells so an interior node exists, got n={n}"
            )));
        }
        let h = (b - a) / n as f64;
        let nodes: Vec<[f64; 2]> = (0..=n)
            .map(|i| {
                let x = if i == n { b } else { a + i as f64 * h };
                [x, 0.0]
            })
            .collect();
        let boundary: Vec<bool> = (0..=n).map(|i| i == 0 || i == n).collect();
        let dist = nodes
            .iter()
            .zip(&boundary)
            .map(|(x, &bd)| if bd { 0.0 } else { (x[0] - a).min(b - x[0]) })
            .collect();
        let weights = (0..=n)
            .map(|i| if i == 0 || i == n { 0.5 * h } else { h })
            .collect();
        let samples = (0..n)
            .map(|i| GradSample {
                weight: h,
                comps: vec![Difference { plus: i + 1, minus: i, inv_h: 1.0 / h }],
            })
            .collect();
        Ok(Mesh::finish(
            MeshSpec::Interval { a, b, n },
            1,
            [n, 0],
            [h, 0.0],
            nodes,
            boundary,
            dist,
            weights,
            samples,
            1,
        ))
    }

    /// Tensor grid with `nx` by `ny` cells on `[ax, bx] x [ay, by]`.
    pub fn rect(ax: f64, bx: f64, ay: f64, by: f64, nx: usize, ny: usize) -> Result<Mesh> {
        if !(ax.is_finite() && bx.is_finite() && ay.is_finite() && by.is_finite())
            || ax >= bx
            || ay >= by
        {
            return Err(Error::InvalidMesh(format!(
                "need ax < bx and ay < by, got [{ax}, {bx}] x [{ay}, {by}]"
            )));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 cells per axis, got nx={nx}, ny={ny}"
            )));
        }
        let hx = (bx - ax) / nx as f64;
        let hy = (by - ay) / ny as f64;
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut boundary = Vec::with_capacity(nodes.capacity());
        let mut dist = Vec::with_capacity(nodes.capacity());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for j in 0..=ny {
            let y = if j == ny { by } else { ay + j as f64 * hy };
            for i in 0..=nx {
                let x = if i == nx { bx } else { ax + i as f64 * hx };
                let bd = i == 0 || i == nx || j == 0 || j == ny;
                nodes.push([x, y]);
                boundary.push(bd);
                dist.push(if bd {
                    0.0
                } else {
                    (x - ax).min(bx - x).min(y - ay).min(by - y)
                });
                let wx = if i == 0 || i == nx { 0.5 * hx } else { hx };
                let wy = if j == 0 || j == ny { 0.5 * hy } else { hy };
                weights.push(wx * wy);
            }
        }
        let w = 0.25 * hx * hy;
        let mut samples = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let bottom = Difference { plus: id(i + 1, j), minus: id(i, j), inv_h: 1.0 / hx };
                let top = Difference { plus: id(i + 1, j + 1), minus: id(i, j + 1), inv_h: 1.0 / hx };
                let left = Difference { plus: id(i, j + 1), minus: id(i, j), inv_h: 1.0 / hy };
                let right = Difference { plus: id(i + 1, j + 1), minus: id(i + 1, j), inv_h: 1.0 / hy };
                for (gx, gy) in [(bottom, left), (bottom, right), (top, left), (top, right)] {
                    samples.push(GradSample { weight: w, comps: vec![gx, gy] });
                }
            }
        }
        Ok(Mesh::finish(
            MeshSpec::Rect { ax, bx, ay, by, nx, ny },
            2,
            [nx, ny],
            [hx, hy],
            nodes,
            boundary,
            dist,
            weights,
            samples,
            // corner samples couple (i, j) with (i + 1, j + 1): offset nx in unknown numbering
            nx,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        spec: MeshSpec,
        dim: usize,
        cells: [usize; 2],
        spacing: [f64; 2],
        nodes: Vec<[f64; 2]>,
        boundary: Vec<bool>,
        dist: Vec<f64>,
        weights: Vec<f64>,
        samples: Vec<GradSample>,
        bandwidth: usize,
    ) -> Mesh {
        let mut interior = Vec::new();
        let mut unknown_of = vec![usize::MAX; nodes.len()];
        for (k, &bd) in boundary.iter().enumerate() {
            if !bd {
                unknown_of[k] = interior.len();
                interior.push(k);
            }
        }
        Mesh {
            spec,
            dim,
            cells,
            spacing,
            nodes,
            boundary,
            dist,
            weights,
            samples,
            interior,
            unknown_of,
            bandwidth,
        }
    }

    pub fn spec(&self) -> MeshSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of cells along each axis (second entry is 0 in 1D).
    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    /// Spacing per axis (second entry is 0 in 1D).
    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn h_max(&self) -> f64 {
        self.spacing[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.spacing[..self.dim].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn coords(&self, k: usize) -> &[f64] {
        &self.nodes[k][..self.dim]
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        self.boundary.iter().map(|b| !b).collect()
    }

    /// Distance to the boundary at every node.
    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grad_samples(&self) -> &[GradSample] {
        &self.samples
    }

    /// Node indices of the interior nodes, in unknown order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        let u = self.unknown_of[node];
        (u != usize::MAX).then_some(u)
    }

    /// Half-bandwidth of any operator matrix assembled over the unknowns.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        match self.spec {
            MeshSpec::Interval { a, b, .. } => b - a,
            MeshSpec::Rect { ax, bx, ay, by, .. } => (bx - ax) * (by - ay),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.spec {
            MeshSpec::Interval { a, b, .. } => b - a,
            MeshSpec::Rect { ax, bx, ay, by, .. } => (bx - ax).hypot(by - ay),
        }
    }

    /// Default constant inside the logarithmic branch of the boundary profile.
    pub fn profile_constant(&self) -> f64 {
        4.0 * self.diameter()
    }

    /// Regularization of `|grad u|` used where the flux is singular or degenerate.
    pub fn grad_regularization(&self) -> f64 {
        1e-8 / self.h_min()
    }

    /// Coordinates normalized to `[0, 1]` per axis.
    pub fn unit_coords(&self, k: usize) -> [f64; 2] {
        let x = self.nodes[k];
        match self.spec {
            MeshSpec::Interval { a, b, .. } => [(x[0] - a) / (b - a), 0.0],
            MeshSpec::Rect { ax, bx, ay, by, .. } => [(x[0] - ax) / (bx - ax), (x[1] - ay) / (by - ay)],
        }
    }

    /// Index of the node nearest to `x` (first coordinates only in 1D).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, n) in self.nodes.iter().enumerate() {
            let d: f64 = (0..self.dim).map(|c| (n[c] - x[c]).powi(2)).sum();
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    /// Nodes lying in the central third of the domain along every axis.
    pub fn central_third(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let s = self.unit_coords(k);
                (0..self.dim).all(|c| s[c] >= 1.0 / 3.0 - 1e-12 && s[c] <= 2.0 / 3.0 + 1e-12)
            })
            .collect()
    }

    /// Map each node of `coarse` to the node of `self` with the same coordinates.
    /// `self` must be an integer refinement of `coarse` on the same geometry.
    pub fn injection_from(&self, coarse: &Mesh) -> Result<Vec<usize>> {
        let factor = |a: usize, b: usize| (b > 0 && a % b == 0).then(|| a / b);
        let same_geometry = match (self.spec, coarse.spec) {
            (MeshSpec::Interval { a, b, .. }, MeshSpec::Interval { a: a2, b: b2, .. }) => a == a2 && b == b2,
            (
                MeshSpec::Rect { ax, bx, ay, by, .. },
                MeshSpec::Rect { ax: ax2, bx: bx2, ay: ay2, by: by2, .. },
            ) => ax == ax2 && bx == bx2 && ay == ay2 && by == by2,
            _ => false,
        };
        if !same_geometry {
            return Err(Error::MeshMismatch);
        }
        let fx = factor(self.cells[0], coarse.cells[0]).ok_or(Error::MeshMismatch)?;
        let fy = if self.dim == 2 {
            factor(self.cells[1], coarse.cells[1]).ok_or(Error::MeshMismatch)?
        } else {
            1
        };
        let nx_f = self.cells[0] + 1;
        let nx_c = coarse.cells[0] + 1;
        Ok((0..coarse.len())
            .map(|k| {
                let (i, j) = (k % nx_c, k / nx_c);
                j * fy * nx_f + i * fx
            })
            .collect())
    }
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Mesh) -> bool {
        self.spec == other.spec
    }
}

/// Boundary profile `phi_delta(s)`: `s` for `delta < 1`,
/// `s * ln(A/s)^(1/p)` for `delta = 1`, `s^(p/(p-1+delta))` for `delta > 1`.
pub fn phi_delta(s: f64, delta: f64, p: f64, a: f64) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("profile argument must be >= 0, got {s}")));
    }
    if !(p > 1.0) || !(delta > 0.0) {
        return Err(Error::Domain(format!("need p > 1 and delta > 0, got p={p}, delta={delta}")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    if delta < 1.0 {
        Ok(s)
    } else if delta == 1.0 {
        if a <= s {
            return Err(Error::Domain(format!(
                "logarithmic profile needs A > s, got A={a}, s={s}"
            )));
        }
        Ok(s * (a / s).ln().powf(1.0 / p))
    } else {
        Ok(s.powf(p / (p - 1.0 + delta)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_nodes_and_distance() {
        let m = Mesh::interval(0.0, 1.0, 4).unwrap();
        let xs: Vec<f64> = m.nodes().iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.dist(), &[0.0, 0.25, 0.5, 0.25, 0.0]);
        assert_eq!(m.interior(), &[1, 2, 3]);
    }

    #[test]
    fn interval_size_guard() {
        assert!(Mesh::interval(0.0, 1.0, 2).is_ok());
        assert!(Mesh::interval(0.0, 1.0, 1).is_err());
        assert!(Mesh::interval(1.0, 1.0, 8).is_err());
        assert!(Mesh::interval(2.0, 1.0, 8).is_err());
    }

    #[test]
    fn symmetric_interval_center_distance() {
        let m = Mesh::interval(-1.0, 1.0, 8).unwrap();
        let c = m.nearest_node(&[0.0]);
        assert_eq!(m.dist()[c], 1.0);
    }

    #[test]
    fn rect_distances() {
        let m = Mesh::rect(0.0, 1.0, 0.0, 1.0, 4, 4).unwrap();
        assert_eq!(m.dist()[m.nearest_node(&[0.5, 0.5])], 0.5);
        assert_eq!(m.dist()[m.nearest_node(&[0.25, 0.5])], 0.25);
        let m = Mesh::rect(0.0, 2.0, 0.0, 1.0, 4, 4).unwrap();
        assert_eq!(m.dist()[m.nearest_node(&[1.0, 0.5])], 0.5);
        assert!(Mesh::rect(0.0, 1.0, 0.0, 1.0, 1, 4).is_err());
    }

    #[test]
    fn weights_sum_to_measure() {
        let m = Mesh::interval(0.0, 3.0, 7).unwrap();
        assert_relative_eq!(m.quad_weights().iter().sum::<f64>(), 3.0, epsilon = 1e-13);
        let m = Mesh::rect(0.0, 2.0, -1.0, 0.5, 5, 3).unwrap();
        assert_relative_eq!(m.quad_weights().iter().sum::<f64>(), 3.0, epsilon = 1e-13);
    }

    #[test]
    fn distance_is_one_lipschitz_and_masks_partition() {
        for m in [
            Mesh::interval(0.0, 1.0, 9).unwrap(),
            Mesh::rect(0.0, 2.0, 0.0, 1.0, 6, 5).unwrap(),
        ] {
            for k in 0..m.len() {
                assert_eq!(m.dist()[k] == 0.0, m.is_boundary(k));
            }
            for s in m.grad_samples() {
                for d in &s.comps {
                    let a = m.nodes()[d.plus];
                    let b = m.nodes()[d.minus];
                    let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                    assert!((m.dist()[d.plus] - m.dist()[d.minus]).abs() <= len + 1e-15);
                }
            }
        }
    }

    #[test]
    fn refinement_doubles_cells() {
        let spec = MeshSpec::Interval { a: 0.0, b: 1.0, n: 8 };
        let coarse = spec.build().unwrap();
        let fine = spec.refined(2).build().unwrap();
        assert_eq!(fine.cells()[0], 2 * coarse.cells()[0]);
        assert_relative_eq!(fine.h_max(), coarse.h_max() / 2.0);
        let inj = fine.injection_from(&coarse).unwrap();
        for (k, &kf) in inj.iter().enumerate() {
            assert_eq!(coarse.nodes()[k], fine.nodes()[kf]);
        }
        let spec = MeshSpec::Rect { ax: 0.0, bx: 1.0, ay: 0.0, by: 2.0, nx: 3, ny: 4 };
        let coarse = spec.build().unwrap();
        let fine = spec.refined(2).build().unwrap();
        for (k, &kf) in fine.injection_from(&coarse).unwrap().iter().enumerate() {
            assert!((coarse.nodes()[k][0] - fine.nodes()[kf][0]).abs() < 1e-14);
            assert!((coarse.nodes()[k][1] - fine.nodes()[kf][1]).abs() < 1e-14);
        }
    }

    #[test]
    fn profile_branches() {
        assert_relative_eq!(phi_delta(0.01, 2.0, 3.0, 10.0).unwrap(), 0.01f64.powf(0.75));
        assert_eq!(phi_delta(0.5, 0.5, 2.0, 10.0).unwrap(), 0.5);
        for delta in [0.5, 1.0, 2.0] {
            assert_eq!(phi_delta(0.0, delta, 3.0, 10.0).unwrap(), 0.0);
        }
        assert!(phi_delta(2.0, 1.0, 2.0, 2.0).is_err());
        assert!(phi_delta(-1.0, 0.5, 2.0, 2.0).is_err());
    }

    #[test]
    fn profile_strictly_increasing_below_a_over_e() {
        let a = 4.0;
        for delta in [0.3, 1.0, 1.7, 3.0] {
            for p in [1.5, 2.0, 4.0] {
                let mut prev = -1.0;
                for i in 0..=400 {
                    let s = i as f64 / 400.0 * a / std::f64::consts::E;
                    let v = phi_delta(s, delta, p, a).unwrap();
                    assert!(v > prev, "delta={delta} p={p} s={s}");
                    prev = v;
                }
            }
        }
    }
}
