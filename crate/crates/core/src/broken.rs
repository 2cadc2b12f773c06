use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{p1_gradient, P1Function};
use crate::mesh::{barycentric, NestedMeshes, Vector};

/// Piecewise linear function on the fine grid that may jump across coarse
/// edges: one vector of nodal values per coarse element, ordered like the
/// element's cover nodes.
#[derive(Debug, Clone)]
pub struct BrokenFunction {
    pub meshes: NestedMeshes,
    pub values: Vec<Vec<f64>>,
}

impl BrokenFunction {
    pub fn zeros(meshes: &NestedMeshes) -> Self {
        let values = meshes.map.elements.iter().map(|c| vec![0.0; c.nodes.len()]).collect();
        Self { meshes: meshes.clone(), values }
    }

    /// Restriction of a continuous fine-grid function.
    pub fn from_fine(meshes: &NestedMeshes, u: &P1Function) -> Result<Self> {
        if !Arc::ptr_eq(&u.mesh, &meshes.fine) && (u.mesh.num_nodes() != meshes.fine.num_nodes() || u.mesh.fingerprint() != meshes.fine.fingerprint()) {
            return Err(Error::MeshMismatch("function does not live on the fine mesh".into()));
        }
        let values = meshes.map.elements.iter().map(|c| c.nodes.iter().map(|&g| u.values[g]).collect()).collect();
        Ok(Self { meshes: meshes.clone(), values })
    }

    /// Piecewise linear interpolation of a continuous coarse-grid function.
    pub fn from_coarse(meshes: &NestedMeshes, u: &P1Function) -> Result<Self> {
        if !Arc::ptr_eq(&u.mesh, &meshes.coarse) && (u.mesh.num_nodes() != meshes.coarse.num_nodes() || u.mesh.fingerprint() != meshes.coarse.fingerprint()) {
            return Err(Error::MeshMismatch("function does not live on the coarse mesh".into()));
        }
        let values = (0..meshes.num_elements())
            .map(|k| {
                let tri = meshes.coarse.triangles[k];
                Self::linear_on(meshes, k, tri.map(|v| u.values[v]))
            })
            .collect();
        Ok(Self { meshes: meshes.clone(), values })
    }

    /// Values at the fine nodes of K of the linear function with vertex values `c`.
    pub fn linear_on(meshes: &NestedMeshes, k: usize, c: [f64; 3]) -> Vec<f64> {
        let v = meshes.coarse.vertices(k);
        meshes
            .cover(k)
            .nodes
            .iter()
            .map(|&g| {
                let l = barycentric(&v, meshes.fine.nodes[g]);
                l[0] * c[0] + l[1] * c[1] + l[2] * c[2]
            })
            .collect()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        Self { meshes: self.meshes.clone(), values }
    }

    pub fn scale(&self, s: f64) -> Self {
        let values = self.values.iter().map(|a| a.iter().map(|x| x * s).collect()).collect();
        Self { meshes: self.meshes.clone(), values }
    }

    /// Gradient on the fine triangle `t`, which must belong to element `k`.
    pub fn gradient(&self, k: usize, t: usize) -> Vector {
        let cover = self.meshes.cover(k);
        let tri = self.meshes.fine.triangles[t];
        let vals = tri.map(|g| self.values[k][cover.local_index(g).expect("triangle inside element")]);
        p1_gradient(&self.meshes.fine.vertices(t), vals)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}
