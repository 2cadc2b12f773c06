use std::sync::Arc;

use msdpg::analysis::relative_errors;
use msdpg::coefficient::CoefficientField;
use msdpg::conforming::{assemble_mspgm, solve_mspgm};
use msdpg::dg::{assemble_components, assemble_msdpgm, solve_dg, DgSpace, Penalty, Scheme};
use msdpg::fem::{reference_on_mesh, P1Function};
use msdpg::func::ScalarFn;
use msdpg::homogenization::{solve_cell_problem, solve_homogenized};
use msdpg::linalg::{solve_sparse, SolverConfig};
use msdpg::mesh::{Domain, NestedMeshes};
use msdpg::msbasis::{BasisSet, BasisSpec};

fn setup(eps: f64, coarse: usize, fine: usize) -> (NestedMeshes, Vec<f64>) {
    let meshes = NestedMeshes::structured(Domain::UnitSquare, coarse, fine).unwrap();
    let coef = CoefficientField::periodic(eps).sample_on_mesh(&meshes.fine).unwrap();
    (meshes, coef)
}

// With linear test functions and a-harmonic trial functions that agree with
// the hats on ∂K, ∫ a∇ψ_j·∇φ_i = ∫ a∇ψ_j·∇ψ_i, so the matrix is symmetric.
#[test]
fn classical_mspgm_stiffness_is_symmetric() {
    let (meshes, coef) = setup(0.125, 4, 64);
    let basis = Arc::new(BasisSet::build(&meshes, &coef, BasisSpec::Classical).unwrap());
    let sys = assemble_mspgm(&basis, &coef, &ScalarFn::Constant(1.0), &ScalarFn::zero()).unwrap();
    let m = &sys.system.matrix;
    assert!(m.max_asymmetry() < 1e-10 * m.max_abs(), "{}", m.max_asymmetry());

    let over = Arc::new(BasisSet::build(&meshes, &coef, BasisSpec::Oversampled { cells: 8 }).unwrap());
    let sys = assemble_mspgm(&over, &coef, &ScalarFn::Constant(1.0), &ScalarFn::zero()).unwrap();
    assert!(sys.system.matrix.max_asymmetry() > 1e-6 * sys.system.matrix.max_abs());
}

#[test]
fn multiscale_methods_beat_resolution_limit() {
    let (meshes, coef) = setup(0.125, 8, 64);
    let (f, g) = (ScalarFn::Constant(1.0), ScalarFn::zero());
    let cfg = SolverConfig::default();
    let (uref, _) = reference_on_mesh(meshes.fine.clone(), &coef, &f, &g, &cfg).unwrap();
    let over = Arc::new(BasisSet::build(&meshes, &coef, BasisSpec::Oversampled { cells: 8 }).unwrap());
    let oms = solve_mspgm(&over, &coef, &f, &g, &cfg).unwrap();
    let e_oms = relative_errors(&oms.fine, &uref, &coef).unwrap().energy;

    let space = DgSpace::new(over);
    let pen = Penalty::new(-1.0, 20.0, 1.0 / 8.0).unwrap();
    let sys = assemble_msdpgm(&space, &coef, &f, &pen, &g).unwrap();
    let (x, _) = solve_sparse(&sys, &cfg).unwrap();
    let e_dpg = relative_errors(&space.expand(&x), &uref, &coef).unwrap().energy;
    assert!(e_oms < 0.5 && e_dpg < 0.5, "{e_oms} {e_dpg}");
    assert!(e_dpg <= 1.2 * e_oms, "{e_oms} {e_dpg}");
}

#[test]
fn penalty_drives_msdpgm_to_conforming_solution() {
    let (meshes, coef) = setup(0.125, 4, 32);
    let (f, g) = (ScalarFn::Constant(1.0), ScalarFn::zero());
    let cfg = SolverConfig::default();
    let over = Arc::new(BasisSet::build(&meshes, &coef, BasisSpec::Oversampled { cells: 4 }).unwrap());
    let oms = solve_mspgm(&over, &coef, &f, &g, &cfg).unwrap();
    let space = DgSpace::new(over);
    let comps = assemble_components(&space, &coef, Scheme::PetrovGalerkin, &f, &g).unwrap();
    let gaps: Vec<f64> = [1e1, 1e2, 1e4]
        .iter()
        .map(|&gamma0| {
            let (x, _) = solve_dg(&comps, &space, &Penalty::new(-1.0, gamma0, 0.25).unwrap(), &cfg).unwrap();
            space.expand(&x).sub(&oms.fine).max_abs()
        })
        .collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1] && gaps[2] < 1e-3 * oms.fine.max_abs(), "{gaps:?}");
}

// ‖u_ε − u₀‖_{L²} = O(ε): halving ε shrinks the homogenization error.
#[test]
fn homogenization_error_shrinks_with_eps() {
    let cfg = SolverConfig::with_tol(1e-12);
    let (f, g) = (ScalarFn::Constant(1.0), ScalarFn::zero());
    let cell = solve_cell_problem(&CoefficientField::periodic(1.0), 64, &cfg).unwrap();
    let u0 = solve_homogenized(Domain::UnitSquare, cell.a_star, &f, &g, 128, &cfg).unwrap();
    let errs: Vec<f64> = [0.25, 0.125, 0.0625]
        .iter()
        .map(|&eps| {
            let coef = CoefficientField::periodic(eps).sample_on_mesh(&u0.mesh).unwrap();
            let (ue, _) = reference_on_mesh(u0.mesh.clone(), &coef, &f, &g, &cfg).unwrap();
            let d = P1Function::new(ue.mesh.clone(), ue.values.iter().zip(&u0.values).map(|(a, b)| a - b).collect());
            l2_sq(&d).sqrt()
        })
        .collect();
    assert!(errs[1] < 0.75 * errs[0] && errs[2] < 0.75 * errs[1], "{errs:?}");
}

fn l2_sq(u: &P1Function) -> f64 {
    let m = &u.mesh;
    (0..m.num_triangles())
        .map(|t| {
            let v = m.triangles[t].map(|i| u.values[i]);
            let s: f64 = v.iter().sum();
            let q: f64 = v.iter().map(|x| x * x).sum();
            m.area(t) * (s * s + q) / 12.0
        })
        .sum()
}
