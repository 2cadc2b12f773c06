//! Discontinuous assembly over element-local bases.
//!
//! Both forms share the same edge machinery. With `T` the test trace entering
//! jumps, `U` the trial trace entering jumps and `q` the one-sided flux
//! `a∇ψ·n` (constant on each fine segment), the contributions of a coarse
//! edge split into
//!
//! * consistency: `−∫ {a∇u·n}[v]`, built from `q` of the trial and `T`,
//! * symmetry:    `∫ [u]{a∇v·n}`, built from `U` and `q` of the test,
//! * penalty:     `∫ [u][v]`, built from `U` and `T`.
//!
//! The symmetric-family form uses the multiscale traces for `T` and `U`; the
//! Petrov–Galerkin form uses the linear shadows (the Π_h images) and tests the
//! volume term against ∇φ_i.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::broken::BrokenFunction;
use crate::error::{Error, Result};
use crate::func::ScalarFn;
use crate::linalg::{solve_sparse, CsrMatrix, SolveStats, SolverConfig, SparseSystem, TripletBuilder};
use crate::mesh::{NestedMeshes, Point, SegmentSide, Vector};
use crate::msbasis::{BasisSet, BasisSpec, ElementBasis};

pub type Block = [[f64; 3]; 3];

const ZERO_BLOCK: Block = [[0.0; 3]; 3];

/// Penalty length scale ρ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RhoMode {
    /// ρ = ε, the choice of the error analysis.
    #[serde(rename = "eps")]
    Epsilon,
    /// ρ = h, the practical choice.
    #[serde(rename = "h")]
    CoarseH,
}

impl RhoMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RhoMode::Epsilon => "eps",
            RhoMode::CoarseH => "h",
        }
    }
}

impl std::str::FromStr for RhoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps" | "epsilon" => Ok(RhoMode::Epsilon),
            "h" | "coarse-h" => Ok(RhoMode::CoarseH),
            _ => Err(Error::Parse(format!("unknown rho mode `{s}` (expected eps or h)"))),
        }
    }
}

/// β, γ₀ and the ρ mode as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default = "default_rho")]
    pub rho: RhoMode,
}

fn default_beta() -> f64 {
    -1.0
}
fn default_gamma0() -> f64 {
    20.0
}
fn default_rho() -> RhoMode {
    RhoMode::CoarseH
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { beta: default_beta(), gamma0: default_gamma0(), rho: default_rho() }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if ![-1.0, 0.0, 1.0].contains(&self.beta) {
            return Err(Error::InvalidPenalty(format!("beta must be -1, 0 or 1, got {}", self.beta)));
        }
        if !(self.gamma0 > 0.0) || !self.gamma0.is_finite() {
            return Err(Error::InvalidPenalty(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        Ok(())
    }

    /// Numeric ρ for coarse mesh size `h` and oscillation period `eps`.
    pub fn resolve(&self, h: f64, eps: Option<f64>) -> Result<Penalty> {
        self.validate()?;
        let rho = match self.rho {
            RhoMode::CoarseH => h,
            RhoMode::Epsilon => eps.ok_or_else(|| Error::InvalidPenalty("rho = eps needs a field with a period".into()))?,
        };
        Penalty::new(self.beta, self.gamma0, rho)
    }
}

/// Resolved penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub beta: f64,
    pub gamma0: f64,
    pub rho: f64,
}

impl Penalty {
    pub fn new(beta: f64, gamma0: f64, rho: f64) -> Result<Self> {
        if !(gamma0 > 0.0) || !(rho > 0.0) {
            return Err(Error::InvalidPenalty(format!("need gamma0 > 0 and rho > 0, got {gamma0} and {rho}")));
        }
        Ok(Self { beta, gamma0, rho })
    }

    /// γ₀/ρ.
    pub fn sigma(&self) -> f64 {
        self.gamma0 / self.rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// The interior penalty form `a(·,·)`.
    Galerkin,
    /// The form `a_h(·,·)` with Π_h in the marked slots.
    PetrovGalerkin,
}

/// Fully discontinuous space, three unknowns per coarse element.
#[derive(Debug, Clone)]
pub struct DgSpace {
    pub basis: Arc<BasisSet>,
    /// Block slot of each coarse edge, `usize::MAX` on the boundary.
    off_index: Vec<usize>,
    interior: Vec<usize>,
}

impl DgSpace {
    pub fn new(basis: Arc<BasisSet>) -> Self {
        let coarse = &basis.meshes.coarse;
        let mut off_index = vec![usize::MAX; coarse.num_edges()];
        let mut interior = Vec::new();
        for (e, edge) in coarse.edges.iter().enumerate() {
            if edge.right.is_some() {
                off_index[e] = interior.len();
                interior.push(e);
            }
        }
        Self { basis, off_index, interior }
    }

    /// Plain discontinuous P1.
    pub fn linear(meshes: &NestedMeshes) -> Self {
        let coef = vec![1.0; meshes.fine.num_triangles()];
        Self::new(Arc::new(BasisSet::build(meshes, &coef, BasisSpec::Linear).expect("linear basis needs no solves")))
    }

    pub fn meshes(&self) -> &NestedMeshes {
        &self.basis.meshes
    }

    pub fn num_elements(&self) -> usize {
        self.basis.num_elements()
    }

    pub fn ndofs(&self) -> usize {
        3 * self.num_elements()
    }

    fn coeffs(v: &[f64], k: usize) -> [f64; 3] {
        [v[3 * k], v[3 * k + 1], v[3 * k + 2]]
    }

    /// Σ v_{K,i} ψ̄_i^K on the fine grid.
    pub fn expand(&self, v: &[f64]) -> BrokenFunction {
        assert_eq!(v.len(), self.ndofs());
        let values = self.basis.elements.iter().map(|e| e.combine(Self::coeffs(v, e.element))).collect();
        BrokenFunction { meshes: self.meshes().clone(), values }
    }

    /// Π_h v on the fine grid.
    pub fn shadow(&self, v: &[f64]) -> BrokenFunction {
        assert_eq!(v.len(), self.ndofs());
        let values = self
            .basis
            .elements
            .iter()
            .map(|e| {
                let c = Self::coeffs(v, e.element);
                e.shadows.iter().map(|s| s[0] * c[0] + s[1] * c[1] + s[2] * c[2]).collect()
            })
            .collect();
        BrokenFunction { meshes: self.meshes().clone(), values }
    }

    /// Coefficients of a continuous coarse P1 function given by nodal values.
    pub fn inject_coarse(&self, nodal: &[f64]) -> Vec<f64> {
        let coarse = &self.meshes().coarse;
        (0..self.num_elements()).flat_map(|k| coarse.triangles[k].map(|v| nodal[v])).collect()
    }
}

/// 3×3 blocks on the element adjacency pattern of a [`DgSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub diag: Vec<Block>,
    /// Per interior edge: rows K₁/columns K₂, then rows K₂/columns K₁.
    pub off: Vec<[Block; 2]>,
}

impl BlockMatrix {
    pub fn zeros(space: &DgSpace) -> Self {
        Self { diag: vec![ZERO_BLOCK; space.num_elements()], off: vec![[ZERO_BLOCK; 2]; space.interior.len()] }
    }

    pub fn combine(parts: &[(&BlockMatrix, f64)]) -> Self {
        let mut out = parts[0].0.clone();
        let scale = |b: &mut Block, w: f64| b.iter_mut().flatten().for_each(|x| *x *= w);
        out.diag.iter_mut().for_each(|b| scale(b, parts[0].1));
        out.off.iter_mut().flatten().for_each(|b| scale(b, parts[0].1));
        for &(m, w) in &parts[1..] {
            for (o, b) in out.diag.iter_mut().zip(&m.diag) {
                add_scaled(o, b, w);
            }
            for (o, b) in out.off.iter_mut().zip(&m.off) {
                add_scaled(&mut o[0], &b[0], w);
                add_scaled(&mut o[1], &b[1], w);
            }
        }
        out
    }

    pub fn to_csr(&self, space: &DgSpace) -> CsrMatrix {
        let n = space.ndofs();
        let mut b = TripletBuilder::with_capacity(n, n, 9 * (self.diag.len() + 2 * self.off.len()));
        let mut push = |rk: usize, ck: usize, blk: &Block| {
            for (i, row) in blk.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    b.push(3 * rk + i, 3 * ck + j, v);
                }
            }
        };
        for (k, blk) in self.diag.iter().enumerate() {
            push(k, k, blk);
        }
        let coarse = &space.meshes().coarse;
        for (slot, &e) in space.interior.iter().enumerate() {
            let edge = &coarse.edges[e];
            let (l, r) = (edge.left, edge.right.unwrap());
            push(l, r, &self.off[slot][0]);
            push(r, l, &self.off[slot][1]);
        }
        b.build()
    }
}

fn add_scaled(o: &mut Block, b: &Block, w: f64) {
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] += w * b[i][j];
        }
    }
}

/// Separately assembled pieces of a discontinuous system, so that penalty
/// parameters can change without reassembly.
#[derive(Debug, Clone)]
pub struct DgComponents {
    pub scheme: Scheme,
    pub volume: BlockMatrix,
    pub consistency: BlockMatrix,
    pub symmetry: BlockMatrix,
    pub penalty: BlockMatrix,
    pub load: Vec<f64>,
    /// `∫_{∂Ω} g a∇v·n`, multiplied by β.
    pub g_flux: Vec<f64>,
    /// `∫_{∂Ω} g [v]`, multiplied by γ₀/ρ.
    pub g_pen: Vec<f64>,
}

impl DgComponents {
    pub fn matrix(&self, space: &DgSpace, pen: &Penalty) -> CsrMatrix {
        BlockMatrix::combine(&[(&self.volume, 1.0), (&self.consistency, 1.0), (&self.symmetry, pen.beta), (&self.penalty, pen.sigma())])
            .to_csr(space)
    }

    pub fn rhs(&self, pen: &Penalty) -> Vec<f64> {
        let s = pen.sigma();
        (0..self.load.len()).map(|i| self.load[i] + pen.beta * self.g_flux[i] + s * self.g_pen[i]).collect()
    }

    /// Weak Dirichlet part of the right-hand side.
    pub fn dirichlet_rhs(&self, pen: &Penalty) -> Vec<f64> {
        let s = pen.sigma();
        self.g_flux.iter().zip(&self.g_pen).map(|(f, p)| pen.beta * f + s * p).collect()
    }

    pub fn system(&self, space: &DgSpace, pen: &Penalty) -> SparseSystem {
        let symmetric = self.scheme == Scheme::Galerkin && pen.beta == -1.0;
        SparseSystem::new(self.matrix(space, pen), self.rhs(pen), symmetric)
    }
}

/// Per-side data of one fine segment.
struct SideData {
    /// a∇ψ_j·n on the adjacent fine triangle.
    q: [f64; 3],
    /// Test trace at the two segment ends, per basis function.
    t: [[f64; 2]; 3],
    /// Trial trace entering jumps.
    u: [[f64; 2]; 3],
}

fn side_data(space: &DgSpace, coef: &[f64], scheme: Scheme, normal: Vector, k: usize, side: &SegmentSide) -> SideData {
    let meshes = space.meshes();
    let e: &ElementBasis = &space.basis.elements[k];
    let cover = meshes.cover(k);
    let ft = side.fine_tri;
    let tri = meshes.fine.triangles[ft];
    let loc = tri.map(|g| cover.local_index(g).unwrap());
    let grads = meshes.fine.bary_grads(ft);
    let mut q = [0.0; 3];
    for (j, qj) in q.iter_mut().enumerate() {
        let g: Vector = (0..3).map(|r| grads[r] * e.values[loc[r]][j]).sum();
        *qj = coef[ft] * g.dot(&normal);
    }
    let [la, lb] = side.local;
    let tau: [[f64; 2]; 3] = std::array::from_fn(|j| [e.values[la][j], e.values[lb][j]]);
    let phi: [[f64; 2]; 3] = std::array::from_fn(|j| [e.shadows[la][j], e.shadows[lb][j]]);
    let (t, u) = match scheme {
        Scheme::Galerkin => (tau, tau),
        Scheme::PetrovGalerkin => (phi, phi),
    };
    SideData { q, t, u }
}

/// ∫ of the product of two linear functions on a segment.
fn lin_lin(len: f64, u: [f64; 2], t: [f64; 2]) -> f64 {
    len / 6.0 * (2.0 * u[0] * t[0] + u[0] * t[1] + u[1] * t[0] + 2.0 * u[1] * t[1])
}

struct EdgeContribution {
    elements: [usize; 2],
    sides: usize,
    c: [[Block; 2]; 2],
    s: [[Block; 2]; 2],
    p: [[Block; 2]; 2],
    g_flux: [f64; 3],
    g_pen: [f64; 3],
}

fn edge_contribution(space: &DgSpace, coef: &[f64], scheme: Scheme, g: &ScalarFn, e: usize) -> EdgeContribution {
    let meshes = space.meshes();
    let edge = &meshes.coarse.edges[e];
    let n = edge.normal;
    let elements = [edge.left, edge.right.unwrap_or(usize::MAX)];
    let boundary = edge.right.is_none();
    let w = if boundary { 1.0 } else { 0.5 };
    let sign = [1.0, -1.0];
    let mut out = EdgeContribution {
        elements,
        sides: if boundary { 1 } else { 2 },
        c: [[ZERO_BLOCK; 2]; 2],
        s: [[ZERO_BLOCK; 2]; 2],
        p: [[ZERO_BLOCK; 2]; 2],
        g_flux: [0.0; 3],
        g_pen: [0.0; 3],
    };
    for seg in &meshes.map.edges[e].segments {
        let len = seg.length;
        let data: Vec<SideData> = (0..out.sides)
            .map(|s| {
                let side = seg.sides[s].as_ref().expect("segment missing an adjacent fine triangle");
                side_data(space, coef, scheme, n, elements[s], side)
            })
            .collect();
        for (ti, td) in data.iter().enumerate() {
            for (si, sd) in data.iter().enumerate() {
                for i in 0..3 {
                    let t_int = len * (td.t[i][0] + td.t[i][1]) / 2.0;
                    for j in 0..3 {
                        let u_int = len * (sd.u[j][0] + sd.u[j][1]) / 2.0;
                        out.c[ti][si][i][j] -= w * sign[ti] * sd.q[j] * t_int;
                        out.s[ti][si][i][j] += sign[si] * w * td.q[i] * u_int;
                        out.p[ti][si][i][j] += sign[si] * sign[ti] * lin_lin(len, sd.u[j], td.t[i]);
                    }
                }
            }
        }
        if boundary && !g.is_zero() {
            let (pa, pb) = (meshes.fine.nodes[seg.nodes[0]], meshes.fine.nodes[seg.nodes[1]]);
            let pm = Point::from((pa.coords + pb.coords) / 2.0);
            let (ga, gm, gb) = (g.eval(pa), g.eval(pm), g.eval(pb));
            let d = &data[0];
            // Simpson on each segment, exact for linear g against linear traces
            for i in 0..3 {
                out.g_flux[i] += d.q[i] * len / 6.0 * (ga + 4.0 * gm + gb);
                let tm = (d.t[i][0] + d.t[i][1]) / 2.0;
                out.g_pen[i] += len / 6.0 * (ga * d.t[i][0] + 4.0 * gm * tm + gb * d.t[i][1]);
            }
        }
    }
    out
}

pub(crate) fn check_coef(space: &DgSpace, coef: &[f64]) -> Result<()> {
    if coef.len() != space.meshes().fine.num_triangles() {
        return Err(Error::MeshMismatch("coefficient samples do not match the fine mesh".into()));
    }
    if let Some(t) = coef.iter().position(|a| !(*a > 0.0) || !a.is_finite()) {
        let c = space.meshes().fine.centroid(t);
        return Err(Error::NonElliptic { value: coef[t], x: c.x, y: c.y });
    }
    Ok(())
}

/// Volume block and load vector of one element.
pub(crate) fn element_contribution(space: &DgSpace, coef: &[f64], scheme: Scheme, fvals: &[f64], k: usize) -> (Block, [f64; 3]) {
    let meshes = space.meshes();
    let e = &space.basis.elements[k];
    let cover = meshes.cover(k);
    let mut vol = ZERO_BLOCK;
    let mut load = [0.0; 3];
    let mut moment = [Vector::zeros(); 3];
    let shadow_grads = e.shadow_grads();
    for (lt, &t) in cover.local_tris.iter().zip(&cover.fine_tris) {
        let area = meshes.fine.area(t);
        let grads = meshes.fine.bary_grads(t);
        let g: [Vector; 3] = std::array::from_fn(|j| (0..3).map(|r| grads[r] * e.values[lt[r]][j]).sum());
        let aa = coef[t] * area;
        match scheme {
            Scheme::Galerkin => {
                for i in 0..3 {
                    for j in 0..3 {
                        vol[i][j] += aa * g[j].dot(&g[i]);
                    }
                }
            }
            Scheme::PetrovGalerkin => {
                for j in 0..3 {
                    moment[j] += g[j] * aa;
                }
            }
        }
        let test = match scheme {
            Scheme::Galerkin => &e.values,
            Scheme::PetrovGalerkin => &e.shadows,
        };
        for (i, li) in load.iter_mut().enumerate() {
            *li += area / 3.0 * (0..3).map(|r| fvals[cover.nodes[lt[r]]] * test[lt[r]][i]).sum::<f64>();
        }
    }
    if scheme == Scheme::PetrovGalerkin {
        for i in 0..3 {
            for j in 0..3 {
                vol[i][j] = moment[j].dot(&shadow_grads[i]);
            }
        }
    }
    (vol, load)
}

/// Assemble all components of the chosen form. Element and edge terms are
/// computed in parallel and merged in index order, so the output is
/// bit-identical for any number of threads.
pub fn assemble_components(space: &DgSpace, coef: &[f64], scheme: Scheme, f: &ScalarFn, g: &ScalarFn) -> Result<DgComponents> {
    check_coef(space, coef)?;
    let meshes = space.meshes();
    let fvals: Vec<f64> = if f.is_zero() {
        vec![0.0; meshes.fine.num_nodes()]
    } else {
        meshes.fine.nodes.par_iter().map(|&p| f.eval(p)).collect()
    };
    let elems: Vec<(Block, [f64; 3])> =
        (0..space.num_elements()).into_par_iter().map(|k| element_contribution(space, coef, scheme, &fvals, k)).collect();
    let edges: Vec<EdgeContribution> =
        (0..meshes.coarse.num_edges()).into_par_iter().map(|e| edge_contribution(space, coef, scheme, g, e)).collect();

    let mut volume = BlockMatrix::zeros(space);
    let mut consistency = BlockMatrix::zeros(space);
    let mut symmetry = BlockMatrix::zeros(space);
    let mut penalty = BlockMatrix::zeros(space);
    let nd = space.ndofs();
    let mut load = vec![0.0; nd];
    let mut g_flux = vec![0.0; nd];
    let mut g_pen = vec![0.0; nd];
    for (k, (v, l)) in elems.iter().enumerate() {
        volume.diag[k] = *v;
        load[3 * k..3 * k + 3].copy_from_slice(l);
    }
    for (e, ec) in edges.iter().enumerate() {
        for ti in 0..ec.sides {
            for si in 0..ec.sides {
                let targets: [(&mut BlockMatrix, &Block); 3] = [
                    (&mut consistency, &ec.c[ti][si]),
                    (&mut symmetry, &ec.s[ti][si]),
                    (&mut penalty, &ec.p[ti][si]),
                ];
                for (m, blk) in targets {
                    let dst = if ti == si { &mut m.diag[ec.elements[ti]] } else { &mut m.off[space.off_index[e]][ti] };
                    add_scaled(dst, blk, 1.0);
                }
            }
        }
        if ec.sides == 1 {
            let k = ec.elements[0];
            for i in 0..3 {
                g_flux[3 * k + i] += ec.g_flux[i];
                g_pen[3 * k + i] += ec.g_pen[i];
            }
        }
    }
    Ok(DgComponents { scheme, volume, consistency, symmetry, penalty, load, g_flux, g_pen })
}

/// System of the interior penalty multiscale method.
pub fn assemble_msdfem(space: &DgSpace, coef: &[f64], f: &ScalarFn, pen: &Penalty, g: &ScalarFn) -> Result<SparseSystem> {
    Ok(assemble_components(space, coef, Scheme::Galerkin, f, g)?.system(space, pen))
}

/// System of the multiscale discontinuous Petrov–Galerkin method.
pub fn assemble_msdpgm(space: &DgSpace, coef: &[f64], f: &ScalarFn, pen: &Penalty, g: &ScalarFn) -> Result<SparseSystem> {
    Ok(assemble_components(space, coef, Scheme::PetrovGalerkin, f, g)?.system(space, pen))
}

/// Interior penalty DG with plain linear elements on the coarse mesh.
pub fn assemble_dfem(meshes: &NestedMeshes, coef: &[f64], f: &ScalarFn, pen: &Penalty, g: &ScalarFn) -> Result<(DgSpace, SparseSystem)> {
    let space = DgSpace::linear(meshes);
    let sys = assemble_msdfem(&space, coef, f, pen, g)?;
    Ok((space, sys))
}

/// Boundary contribution `β∫ g a∇v·n + (γ₀/ρ)∫ g [v]` (test trace per scheme).
pub fn weak_dirichlet_rhs(space: &DgSpace, coef: &[f64], scheme: Scheme, g: &ScalarFn, pen: &Penalty) -> Result<Vec<f64>> {
    let comps = assemble_components(space, coef, scheme, &ScalarFn::zero(), g)?;
    Ok(comps.dirichlet_rhs(pen))
}

/// Solve a discontinuous system; returns the coefficient vector.
pub fn solve_dg(comps: &DgComponents, space: &DgSpace, pen: &Penalty, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)> {
    solve_sparse(&comps.system(space, pen), cfg)
}
