//! Periodic homogenization: cell problems, the effective tensor, the
//! homogenized solution and its first-order corrector.

use std::sync::Arc;

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::{solve_p1, Conductivity, P1Function};
use crate::func::ScalarFn;
use crate::linalg::{solve_sparse, SolverConfig, SparseSystem, TripletBuilder};
use crate::mesh::{build_structured_mesh, Domain, Point, TriMesh, Vector};

/// Correctors χ¹, χ² on the unit cell and the effective tensor.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub mesh: Arc<TriMesh>,
    pub n: usize,
    /// Zero-mean periodic correctors; values on opposite faces coincide.
    pub chi: [P1Function; 2],
    pub a_star: [[f64; 2]; 2],
}

impl CellSolution {
    /// χʲ at `y`, reduced modulo the unit cell.
    pub fn chi_at(&self, j: usize, y: Point) -> f64 {
        let p = Point::new(y.x.rem_euclid(1.0), y.y.rem_euclid(1.0));
        self.chi[j].eval(p).expect("point reduced into the unit cell")
    }

    /// ∫_Y χʲ.
    pub fn mean(&self, j: usize) -> f64 {
        integral(&self.chi[j])
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let a = self.a_star;
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 - disc, tr / 2.0 + disc)
    }
}

fn integral(u: &P1Function) -> f64 {
    let m = &u.mesh;
    (0..m.num_triangles()).map(|t| m.area(t) / 3.0 * m.triangles[t].iter().map(|&v| u.values[v]).sum::<f64>()).sum()
}

/// Solve `−∇·(a(e_j + ∇χʲ)) = 0` on Y with periodic boundary conditions.
/// Periodicity is imposed by identifying nodes on opposite faces; one node
/// is pinned and the mean subtracted afterwards.
pub fn solve_cell_problem(field: &CoefficientField, n_cell: usize, cfg: &SolverConfig) -> Result<CellSolution> {
    if n_cell < 2 {
        return Err(Error::Config("cell mesh needs at least 2 cells per side".into()));
    }
    let mesh = Arc::new(build_structured_mesh(Domain::UnitSquare, n_cell));
    let coef = field.sample_on_mesh(&mesh)?;
    let lat = mesh.lattice.as_ref().expect("structured mesh");
    // periodic master of each node, then one unknown per master except master 0
    let mut master = vec![0usize; mesh.num_nodes()];
    for j in 0..=n_cell {
        for i in 0..=n_cell {
            master[lat.node(i, j).unwrap()] = (i % n_cell) + n_cell * (j % n_cell);
        }
    }
    let dof = |v: usize| master[v].checked_sub(1);
    let nd = n_cell * n_cell - 1;

    let mut b = TripletBuilder::with_capacity(nd, nd, 9 * mesh.num_triangles());
    let mut rhs = [vec![0.0; nd], vec![0.0; nd]];
    for t in 0..mesh.num_triangles() {
        let g = mesh.bary_grads(t);
        let aa = coef[t] * mesh.area(t);
        let tri = mesh.triangles[t];
        for r in 0..3 {
            let Some(i) = dof(tri[r]) else { continue };
            rhs[0][i] -= aa * g[r].x;
            rhs[1][i] -= aa * g[r].y;
            for c in 0..3 {
                if let Some(k) = dof(tri[c]) {
                    b.push(i, k, aa * g[c].dot(&g[r]));
                }
            }
        }
    }
    let matrix = b.build();
    let [r0, r1] = rhs;
    let s0 = SparseSystem::new(matrix.clone(), r0, true);
    let s1 = SparseSystem::new(matrix, r1, true);
    let (x0, x1) = rayon::join(|| solve_sparse(&s0, cfg), || solve_sparse(&s1, cfg));
    let chi = [x0?.0, x1?.0].map(|x| {
        let values: Vec<f64> = (0..mesh.num_nodes()).map(|v| dof(v).map_or(0.0, |d| x[d])).collect();
        let mut u = P1Function::new(mesh.clone(), values);
        let mean = integral(&u);
        u.values.iter_mut().for_each(|v| *v -= mean);
        u
    });

    let mut a_star = [[0.0; 2]; 2];
    for t in 0..mesh.num_triangles() {
        let aa = coef[t] * mesh.area(t);
        for k in 0..2 {
            let gk = chi[k].gradient(t);
            for i in 0..2 {
                let delta = if i == k { 1.0 } else { 0.0 };
                a_star[i][k] += aa * (delta + gk[i]);
            }
        }
    }
    Ok(CellSolution { mesh, n: n_cell, chi, a_star })
}

/// Conforming P1 solve of the homogenized problem with constant tensor `a*`.
pub fn solve_homogenized(domain: Domain, a_star: [[f64; 2]; 2], f: &ScalarFn, g: &ScalarFn, n: usize, cfg: &SolverConfig) -> Result<P1Function> {
    let mesh = Arc::new(build_structured_mesh(domain, n));
    Ok(solve_p1(mesh, Conductivity::Tensor(a_star), f, g, cfg)?.0)
}

/// Nodal gradient of a P1 function, averaged over the adjacent triangles
/// with area weights.
pub fn nodal_gradients(u: &P1Function) -> Vec<Vector> {
    let m = &u.mesh;
    let mut acc = vec![Vector::zeros(); m.num_nodes()];
    let mut w = vec![0.0; m.num_nodes()];
    for t in 0..m.num_triangles() {
        let a = m.area(t);
        let g = u.gradient(t);
        for &v in &m.triangles[t] {
            acc[v] += g * a;
            w[v] += a;
        }
    }
    acc.iter().zip(&w).map(|(g, &a)| g / a).collect()
}

/// `u₁ = u₀ + ε Σ_j χʲ(x/ε) ∂u₀/∂x_j` at the nodes of u₀'s mesh.
pub fn corrector_u1(u0: &P1Function, cell: &CellSolution, eps: f64) -> P1Function {
    let grads = nodal_gradients(u0);
    let values = u0
        .mesh
        .nodes
        .iter()
        .zip(&u0.values)
        .zip(&grads)
        .map(|((&x, &u), g)| {
            let y = Point::from(x.coords / eps);
            u + eps * (cell.chi_at(0, y) * g.x + cell.chi_at(1, y) * g.y)
        })
        .collect();
    P1Function::new(u0.mesh.clone(), values)
}
