//! Conforming coarse methods: linear FEM and the Petrov–Galerkin multiscale
//! methods, whose test space is the continuous coarse P1 space.

use std::sync::Arc;

use rayon::prelude::*;

use crate::broken::BrokenFunction;
use crate::dg::{check_coef, element_contribution, DgSpace, Scheme};
use crate::error::Result;
use crate::fem::{assemble_p1, Conductivity, P1Function, P1System};
use crate::func::ScalarFn;
use crate::linalg::{solve_sparse, SolveStats, SolverConfig, SparseSystem, TripletBuilder};
use crate::mesh::NestedMeshes;
use crate::msbasis::BasisSet;

/// Solution of a conforming coarse method.
#[derive(Debug, Clone)]
pub struct ConformingSolution {
    /// Coefficient of every coarse node, boundary nodes included.
    pub nodal: Vec<f64>,
    /// Fine-grid representation (broken for the nonconforming trial spaces).
    pub fine: BrokenFunction,
    pub stats: SolveStats,
}

/// Area-weighted mean of the fine coefficient over each coarse triangle, so
/// that the coarse stiffness matrix is integrated exactly.
pub fn coarse_average_coefficient(meshes: &NestedMeshes, coef: &[f64]) -> Vec<f64> {
    (0..meshes.num_elements())
        .into_par_iter()
        .map(|k| {
            let c = meshes.cover(k);
            let s: f64 = c.fine_tris.iter().map(|&t| coef[t] * meshes.fine.area(t)).sum();
            s / meshes.coarse.area(k)
        })
        .collect()
}

pub fn assemble_coarse_fem(meshes: &NestedMeshes, coef: &[f64], f: &ScalarFn, g: &ScalarFn) -> Result<(P1System, Vec<f64>)> {
    let space = DgSpace::linear(meshes);
    check_coef(&space, coef)?;
    let avg = coarse_average_coefficient(meshes, coef);
    Ok((assemble_p1(&meshes.coarse, Conductivity::PerTriangle(&avg), f, g)?, avg))
}

/// Linear FEM on the coarse mesh.
pub fn solve_coarse_fem(meshes: &NestedMeshes, coef: &[f64], f: &ScalarFn, g: &ScalarFn, cfg: &SolverConfig) -> Result<ConformingSolution> {
    let (sys, _) = assemble_coarse_fem(meshes, coef, f, g)?;
    let (x, stats) = solve_sparse(&sys.system, cfg)?;
    let nodal = sys.expand(&x);
    let fine = BrokenFunction::from_coarse(meshes, &P1Function::new(meshes.coarse.clone(), nodal.clone()))?;
    Ok(ConformingSolution { nodal, fine, stats })
}

/// `Σ_K ∫_K a∇u·∇φ_i = (f, φ_i)` with the multiscale trial functions of
/// `basis` glued at coarse nodes and continuous hats φ_i as test functions.
/// The classical basis gives MsPGM, the oversampled basis OMsPGM.
pub fn assemble_mspgm(basis: &Arc<BasisSet>, coef: &[f64], f: &ScalarFn, g: &ScalarFn) -> Result<P1System> {
    let space = DgSpace::new(basis.clone());
    check_coef(&space, coef)?;
    let meshes = space.meshes();
    let coarse = &meshes.coarse;
    let fvals: Vec<f64> = if f.is_zero() {
        vec![0.0; meshes.fine.num_nodes()]
    } else {
        meshes.fine.nodes.par_iter().map(|&p| f.eval(p)).collect()
    };
    let locals: Vec<_> = (0..space.num_elements())
        .into_par_iter()
        .map(|k| element_contribution(&space, coef, Scheme::PetrovGalerkin, &fvals, k))
        .collect();

    let is_boundary = coarse.boundary_nodes();
    let mut dof_of_node = vec![None; coarse.num_nodes()];
    let mut boundary_values = vec![0.0; coarse.num_nodes()];
    let mut n = 0;
    for (v, &b) in is_boundary.iter().enumerate() {
        if b {
            boundary_values[v] = g.eval(coarse.nodes[v]);
        } else {
            dof_of_node[v] = Some(n);
            n += 1;
        }
    }
    let mut b = TripletBuilder::with_capacity(n, n, 9 * coarse.num_triangles());
    let mut rhs = vec![0.0; n];
    for (k, (vol, load)) in locals.iter().enumerate() {
        let tri = coarse.triangles[k];
        for i in 0..3 {
            let Some(ri) = dof_of_node[tri[i]] else { continue };
            rhs[ri] += load[i];
            for j in 0..3 {
                match dof_of_node[tri[j]] {
                    Some(cj) => b.push(ri, cj, vol[i][j]),
                    None => rhs[ri] -= vol[i][j] * boundary_values[tri[j]],
                }
            }
        }
    }
    Ok(P1System { system: SparseSystem::new(b.build(), rhs, false), dof_of_node, boundary_values })
}

pub fn solve_mspgm(basis: &Arc<BasisSet>, coef: &[f64], f: &ScalarFn, g: &ScalarFn, cfg: &SolverConfig) -> Result<ConformingSolution> {
    let sys = assemble_mspgm(basis, coef, f, g)?;
    let (x, stats) = solve_sparse(&sys.system, cfg)?;
    let nodal = sys.expand(&x);
    let space = DgSpace::new(basis.clone());
    let fine = space.expand(&space.inject_coarse(&nodal));
    Ok(ConformingSolution { nodal, fine, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::mesh::Domain;
    use crate::msbasis::BasisSpec;

    #[test]
    fn constant_field_reduces_to_fem() {
        let nm = NestedMeshes::structured(Domain::UnitSquare, 8, 32).unwrap();
        let coef = vec![1.0; nm.fine.num_triangles()];
        let f = ScalarFn::Constant(1.0);
        let g = ScalarFn::Affine { c: 0.0, cx: 0.5, cy: 0.0 };
        let cfg = SolverConfig::default();
        let fem = solve_coarse_fem(&nm, &coef, &f, &g, &cfg).unwrap();
        for spec in [BasisSpec::Classical, BasisSpec::Oversampled { cells: 8 }] {
            let basis = Arc::new(BasisSet::build(&nm, &coef, spec).unwrap());
            let ms = solve_mspgm(&basis, &coef, &f, &g, &cfg).unwrap();
            for (a, b) in ms.nodal.iter().zip(&fem.nodal) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn averaged_coefficient_integrates_exactly() {
        let nm = NestedMeshes::structured(Domain::UnitSquare, 2, 8).unwrap();
        let coef = CoefficientField::periodic(0.25).sample_on_mesh(&nm.fine).unwrap();
        let avg = coarse_average_coefficient(&nm, &coef);
        let total: f64 = coef.iter().enumerate().map(|(t, a)| a * nm.fine.area(t)).sum();
        let coarse_total: f64 = avg.iter().enumerate().map(|(k, a)| a * nm.coarse.area(k)).sum();
        assert!((total - coarse_total).abs() < 1e-14);
    }

    #[test]
    fn mspgm_reproduces_constant_data() {
        let nm = NestedMeshes::structured(Domain::UnitSquare, 4, 16).unwrap();
        let coef = CoefficientField::periodic(0.25).sample_on_mesh(&nm.fine).unwrap();
        let basis = Arc::new(BasisSet::build(&nm, &coef, BasisSpec::Classical).unwrap());
        let g = ScalarFn::Affine { c: 1.0, cx: 0.0, cy: 0.0 };
        let sol = solve_mspgm(&basis, &coef, &ScalarFn::zero(), &g, &SolverConfig::default()).unwrap();
        assert!(sol.fine.values.iter().flatten().all(|v| (v - 1.0).abs() < 1e-9));
    }
}
