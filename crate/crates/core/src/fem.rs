//! Conforming P1 elements: global assembly with Dirichlet elimination, the
//! fine reference solver and local Dirichlet solves on oversampling patches.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::func::ScalarFn;
use crate::linalg::{solve_sparse, BandedLu, SolveStats, SolverConfig, SparseSystem, TripletBuilder};
use crate::mesh::{barycentric, bary_grads, build_structured_mesh, Domain, Point, TriMesh, Vector};

/// Continuous piecewise linear function given by its nodal values.
#[derive(Debug, Clone)]
pub struct P1Function {
    pub mesh: Arc<TriMesh>,
    pub values: Vec<f64>,
}

impl P1Function {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>) -> Self {
        assert_eq!(mesh.num_nodes(), values.len(), "one value per node");
        Self { mesh, values }
    }

    pub fn interpolate(mesh: Arc<TriMesh>, f: &ScalarFn) -> Self {
        let values = mesh.nodes.iter().map(|&p| f.eval(p)).collect();
        Self { mesh, values }
    }

    pub fn gradient(&self, t: usize) -> Vector {
        let g = self.mesh.bary_grads(t);
        let tri = self.mesh.triangles[t];
        g[0] * self.values[tri[0]] + g[1] * self.values[tri[1]] + g[2] * self.values[tri[2]]
    }

    /// Point evaluation; needs a structured mesh. Returns `None` outside.
    pub fn eval(&self, p: Point) -> Option<f64> {
        let t = locate(&self.mesh, p)?;
        let lam = barycentric(&self.mesh.vertices(t), p);
        let tri = self.mesh.triangles[t];
        Some((0..3).map(|k| lam[k] * self.values[tri[k]]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Triangle of a structured mesh containing `p` (closed, ties broken towards
/// the lower cell index).
pub fn locate(mesh: &TriMesh, p: Point) -> Option<usize> {
    let lat = mesh.lattice.as_ref()?;
    let o = lat.domain.origin();
    let (fx, fy) = ((p.x - o.x) / mesh.h, (p.y - o.y) / mesh.h);
    let tol = 1e-9;
    if fx < -tol || fy < -tol || fx > lat.cells_x as f64 + tol || fy > lat.cells_y as f64 + tol {
        return None;
    }
    let clampi = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
    let (i, j) = (clampi(fx, lat.cells_x), clampi(fy, lat.cells_y));
    let candidates = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))];
    for (ci, cj) in candidates {
        if let Some([lr, ul]) = lat.cell_triangles(ci, cj) {
            let (lx, ly) = (fx - ci as f64, fy - cj as f64);
            if lx < -tol || ly < -tol || lx > 1.0 + tol || ly > 1.0 + tol {
                continue;
            }
            return Some(if ly <= lx { lr } else { ul });
        }
    }
    None
}

/// Diffusion coefficient for assembly.
#[derive(Debug, Clone, Copy)]
pub enum Conductivity<'a> {
    /// Scalar value per triangle.
    PerTriangle(&'a [f64]),
    /// Constant symmetric tensor.
    Tensor([[f64; 2]; 2]),
}

impl Conductivity<'_> {
    fn check(&self) -> Result<()> {
        match self {
            Conductivity::PerTriangle(a) => match a.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                Some(t) => Err(Error::NonElliptic { value: a[t], x: f64::NAN, y: f64::NAN }),
                None => Ok(()),
            },
            Conductivity::Tensor(k) => {
                let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
                if k[0][0] > 0.0 && det > 0.0 {
                    Ok(())
                } else {
                    Err(Error::NonElliptic { value: det.min(k[0][0]), x: f64::NAN, y: f64::NAN })
                }
            }
        }
    }

    fn apply(&self, t: usize, g: Vector) -> Vector {
        match self {
            Conductivity::PerTriangle(a) => g * a[t],
            Conductivity::Tensor(k) => Vector::new(k[0][0] * g.x + k[0][1] * g.y, k[1][0] * g.x + k[1][1] * g.y),
        }
    }
}

/// Element stiffness `∫_T κ∇λ_j·∇λ_i`.
pub fn local_stiffness(mesh: &TriMesh, t: usize, cond: &Conductivity) -> [[f64; 3]; 3] {
    let g = mesh.bary_grads(t);
    let area = mesh.area(t);
    let mut k = [[0.0; 3]; 3];
    for j in 0..3 {
        let kg = cond.apply(t, g[j]);
        for i in 0..3 {
            k[i][j] = area * kg.dot(&g[i]);
        }
    }
    k
}

/// Conforming system with boundary nodes eliminated.
#[derive(Debug, Clone)]
pub struct P1System {
    pub system: SparseSystem,
    /// Unknown index of each node, `None` for Dirichlet nodes.
    pub dof_of_node: Vec<Option<usize>>,
    /// Dirichlet values (zero at interior nodes).
    pub boundary_values: Vec<f64>,
}

impl P1System {
    /// Nodal values from a solution of the reduced system.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.dof_of_node
            .iter()
            .zip(&self.boundary_values)
            .map(|(d, &g)| d.map_or(g, |i| x[i]))
            .collect()
    }
}

/// Assemble `∫ κ∇u·∇v = ∫ f v` with `u = g` on ∂Ω. The load uses the
/// three-vertex rule per triangle; boundary rows and columns are eliminated.
pub fn assemble_p1(mesh: &TriMesh, cond: Conductivity, f: &ScalarFn, g: &ScalarFn) -> Result<P1System> {
    assemble_p1_with_boundary(mesh, cond, f, g, &mesh.boundary_nodes())
}

pub(crate) fn assemble_p1_with_boundary(
    mesh: &TriMesh,
    cond: Conductivity,
    f: &ScalarFn,
    g: &ScalarFn,
    is_boundary: &[bool],
) -> Result<P1System> {
    cond.check()?;
    let mut dof_of_node = vec![None; mesh.num_nodes()];
    let mut boundary_values = vec![0.0; mesh.num_nodes()];
    let mut n = 0;
    for (v, &b) in is_boundary.iter().enumerate() {
        if b {
            boundary_values[v] = g.eval(mesh.nodes[v]);
        } else {
            dof_of_node[v] = Some(n);
            n += 1;
        }
    }
    let fvals: Vec<f64> = if f.is_zero() {
        vec![0.0; mesh.num_nodes()]
    } else {
        mesh.nodes.par_iter().map(|&p| f.eval(p)).collect()
    };
    let locals: Vec<[[f64; 3]; 3]> = (0..mesh.num_triangles()).into_par_iter().map(|t| local_stiffness(mesh, t, &cond)).collect();

    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_triangles());
    let mut rhs = vec![0.0; n];
    for (t, k) in locals.iter().enumerate() {
        let tri = mesh.triangles[t];
        let w = mesh.area(t) / 3.0;
        for a in 0..3 {
            let Some(ra) = dof_of_node[tri[a]] else { continue };
            rhs[ra] += w * fvals[tri[a]];
            for c in 0..3 {
                match dof_of_node[tri[c]] {
                    Some(rc) => b.push(ra, rc, k[a][c]),
                    None => rhs[ra] -= k[a][c] * boundary_values[tri[c]],
                }
            }
        }
    }
    Ok(P1System { system: SparseSystem::new(b.build(), rhs, true), dof_of_node, boundary_values })
}

/// Assemble and solve a conforming problem.
pub fn solve_p1(
    mesh: Arc<TriMesh>,
    cond: Conductivity,
    f: &ScalarFn,
    g: &ScalarFn,
    cfg: &SolverConfig,
) -> Result<(P1Function, SolveStats)> {
    let sys = assemble_p1(&mesh, cond, f, g)?;
    let (x, stats) = solve_sparse(&sys.system, cfg)?;
    let values = sys.expand(&x);
    Ok((P1Function::new(mesh, values), stats))
}

/// Fine-grid reference solution `u_e` on an existing fine mesh.
pub fn reference_on_mesh(
    mesh: Arc<TriMesh>,
    coef: &[f64],
    f: &ScalarFn,
    g: &ScalarFn,
    cfg: &SolverConfig,
) -> Result<(P1Function, SolveStats)> {
    solve_p1(mesh, Conductivity::PerTriangle(coef), f, g, cfg)
}

/// Fine cells per oscillation period below which a reference is considered
/// under-resolved.
pub const MIN_CELLS_PER_PERIOD: f64 = 8.0;

/// Build the fine mesh, sample the coefficient at centroids and solve.
pub fn reference_solution(
    domain: Domain,
    field: &CoefficientField,
    f: &ScalarFn,
    g: &ScalarFn,
    n_fine: usize,
    cfg: &SolverConfig,
) -> Result<P1Function> {
    if let Some(eps) = field.eps() {
        if eps * (n_fine as f64) < MIN_CELLS_PER_PERIOD {
            warn!("reference under-resolved: {:.2} fine cells per period (want ≥ {MIN_CELLS_PER_PERIOD})", eps * n_fine as f64);
        }
    }
    let mesh = Arc::new(build_structured_mesh(domain, n_fine));
    let coef = field.sample_on_mesh(&mesh)?;
    Ok(reference_on_mesh(mesh, &coef, f, g, cfg)?.0)
}

/// Solutions of `R` local Dirichlet problems sharing one operator.
#[derive(Debug, Clone)]
pub struct LocalSolution<const R: usize> {
    /// Global node ids of the subdomain, ascending.
    pub nodes: Vec<usize>,
    pub boundary: Vec<bool>,
    pub values: Vec<[f64; R]>,
}

impl<const R: usize> LocalSolution<R> {
    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.nodes.binary_search(&global).ok()
    }
}

/// Discrete a-harmonic extensions on the union of the triangles `tris`.
///
/// Boundary nodes of the subdomain are those on edges used by a single
/// triangle of the set; `g` gives the `R` Dirichlet data at a boundary point.
/// The interior operator is factorized once by banded LU, which keeps the
/// solutions exact up to rounding (a discrete maximum principle holds on
/// right-triangle meshes with per-triangle scalar coefficients).
pub fn solve_local_dirichlet<const R: usize>(
    mesh: &TriMesh,
    tris: &[usize],
    coef: &[f64],
    g: impl Fn(Point) -> [f64; R],
) -> Result<LocalSolution<R>> {
    let mut nodes: Vec<usize> = tris.iter().flat_map(|&t| mesh.triangles[t]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let local = |v: usize| nodes.binary_search(&v).unwrap();

    let mut edge_ids: Vec<usize> = tris.iter().flat_map(|&t| mesh.triangle_edges[t]).collect();
    edge_ids.sort_unstable();
    let mut boundary = vec![false; nodes.len()];
    let mut i = 0;
    while i < edge_ids.len() {
        let mut j = i + 1;
        while j < edge_ids.len() && edge_ids[j] == edge_ids[i] {
            j += 1;
        }
        if j - i == 1 {
            for v in mesh.edges[edge_ids[i]].nodes {
                boundary[local(v)] = true;
            }
        }
        i = j;
    }

    let mut dof = vec![usize::MAX; nodes.len()];
    let mut n = 0;
    let mut values = vec![[0.0; R]; nodes.len()];
    for (l, &v) in nodes.iter().enumerate() {
        if boundary[l] {
            values[l] = g(mesh.nodes[v]);
        } else {
            dof[l] = n;
            n += 1;
        }
    }
    if n == 0 {
        return Ok(LocalSolution { nodes, boundary, values });
    }
    let cond = Conductivity::PerTriangle(coef);
    let mut b = TripletBuilder::with_capacity(n, n, 9 * tris.len());
    let mut rhs = vec![vec![0.0; n]; R];
    for &t in tris {
        let k = local_stiffness(mesh, t, &cond);
        let tl = mesh.triangles[t].map(local);
        for a in 0..3 {
            let ra = dof[tl[a]];
            if ra == usize::MAX {
                continue;
            }
            for c in 0..3 {
                let rc = dof[tl[c]];
                if rc != usize::MAX {
                    b.push(ra, rc, k[a][c]);
                } else {
                    for r in 0..R {
                        rhs[r][ra] -= k[a][c] * values[tl[c]][r];
                    }
                }
            }
        }
    }
    let lu = BandedLu::factor(&b.build())?;
    for (r, rhs_r) in rhs.iter().enumerate() {
        let x = lu.solve(rhs_r);
        for (l, &d) in dof.iter().enumerate() {
            if d != usize::MAX {
                values[l][r] = x[d];
            }
        }
    }
    Ok(LocalSolution { nodes, boundary, values })
}

/// Element gradients of nodal data on the triangle with vertices `v`.
pub fn p1_gradient(v: &[Point; 3], vals: [f64; 3]) -> Vector {
    let g = bary_grads(v);
    g[0] * vals[0] + g[1] * vals[1] + g[2] * vals[2]
}

/// `∫_T w²` for linear `w` with vertex values `w`.
pub fn p1_square_integral(area: f64, w: [f64; 3]) -> f64 {
    let s = w[0] + w[1] + w[2];
    area / 12.0 * (s * s + w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
}
