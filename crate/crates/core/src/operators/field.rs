use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Nodal values on a shared mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Field> {
        if values.len() != mesh.len() {
            return Err(Error::InvalidMesh(format!(
                "field has {} values for a mesh with {} nodes",
                values.len(),
                mesh.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(Field { mesh, values })
    }

    pub(crate) fn from_raw(mesh: Arc<Mesh>, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), mesh.len());
        Field { mesh, values }
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Field {
        let n = mesh.len();
        Field { mesh, values: vec![0.0; n] }
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Field {
        let n = mesh.len();
        Field { mesh, values: vec![c; n] }
    }

    /// Evaluate `f` at every node coordinate.
    pub fn from_fn(mesh: Arc<Mesh>, mut f: impl FnMut(&[f64]) -> f64) -> Field {
        let values = (0..mesh.len()).map(|k| f(mesh.coords(k))).collect();
        Field { mesh, values }
    }

    /// Evaluate `f` at interior nodes; boundary nodes are set to zero.
    pub fn from_fn_dirichlet(mesh: Arc<Mesh>, mut f: impl FnMut(&[f64]) -> f64) -> Field {
        let values = (0..mesh.len())
            .map(|k| if mesh.is_boundary(k) { 0.0 } else { f(mesh.coords(k)) })
            .collect();
        Field { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Field {
        Field::from_raw(self.mesh.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn same_mesh(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.same_mesh(other)?;
        Ok(self.with_values(
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∫ u^2` by the mesh quadrature.
    pub fn l2_sq(&self) -> f64 {
        self.values.iter().zip(self.mesh.quad_weights()).map(|(v, w)| w * v * v).sum()
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.mesh.quad_weights()).map(|(v, w)| w * v).sum()
    }

    /// Quadrature inner product `∫ u v`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.same_mesh(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.mesh.quad_weights())
            .map(|((a, b), w)| w * a * b)
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.same_mesh(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Zero on the boundary and strictly positive on every interior node.
    pub fn is_positive_interior(&self) -> bool {
        self.values.iter().enumerate().all(|(k, &v)| {
            if self.mesh.is_boundary(k) {
                v == 0.0
            } else {
                v > 0.0
            }
        })
    }

    pub fn vanishes_on_boundary(&self) -> bool {
        self.mesh.boundary_mask().iter().zip(&self.values).all(|(&b, &v)| !b || v == 0.0)
    }

    pub fn zero_boundary(&mut self) {
        for (v, &b) in self.values.iter_mut().zip(self.mesh.boundary_mask()) {
            if b {
                *v = 0.0;
            }
        }
    }

    pub fn min_interior(&self) -> f64 {
        self.mesh
            .interior()
            .iter()
            .map(|&k| self.values[k])
            .fold(f64::INFINITY, f64::min)
    }
}
