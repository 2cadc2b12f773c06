//! Multiscale basis functions: oversampled (local solves on S(K) combined
//! through the change-of-basis constants), classical (local solves on K) and
//! plain linear hats, all stored as nodal values on the fine nodes of K.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{p1_gradient, solve_local_dirichlet};
use crate::mesh::{barycentric, bary_grads, build_oversampling_patch, build_patch_with_cells, NestedMeshes, PatchSpec, Point, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// Linear hats φ_i^K.
    Linear,
    /// Local solves on K with linear boundary data.
    Classical,
    /// Local solves on an oversampling patch S(K).
    Oversampled,
}

/// Geometry of the patch a basis was computed on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchInfo {
    pub factor: f64,
    pub cells: usize,
    pub dtilde: f64,
    pub d_k: f64,
    pub translated: bool,
    pub shrunk: bool,
}

impl From<&PatchSpec> for PatchInfo {
    fn from(p: &PatchSpec) -> Self {
        Self { factor: p.factor, cells: p.cells, dtilde: p.dtilde, d_k: p.d_k, translated: p.translated, shrunk: p.shrunk }
    }
}

/// The three shape functions of one coarse element.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub element: usize,
    pub kind: BasisKind,
    pub vertices: [Point; 3],
    /// ψ̄_i^K at the fine nodes of K, in the order of the element cover.
    pub values: Vec<[f64; 3]>,
    /// Linear shadows φ_i^K at the same nodes.
    pub shadows: Vec<[f64; 3]>,
    /// Change-of-basis constants c_ij.
    pub c: [[f64; 3]; 3],
    pub patch: Option<PatchInfo>,
}

/// A linear function on one element in the φ_i^K basis.
#[derive(Debug, Clone, Copy)]
pub struct LinearOnElement {
    pub vertices: [Point; 3],
    pub coeffs: [f64; 3],
}

impl LinearOnElement {
    pub fn eval(&self, p: Point) -> f64 {
        let l = barycentric(&self.vertices, p);
        (0..3).map(|i| l[i] * self.coeffs[i]).sum()
    }

    pub fn gradient(&self) -> Vector {
        p1_gradient(&self.vertices, self.coeffs)
    }
}

impl ElementBasis {
    /// Gradients of φ_i^K.
    pub fn shadow_grads(&self) -> [Vector; 3] {
        bary_grads(&self.vertices)
    }

    /// Π_K: the linear function with the same coefficient vector.
    pub fn project_pi(&self, coeffs: [f64; 3]) -> LinearOnElement {
        LinearOnElement { vertices: self.vertices, coeffs }
    }

    /// Nodal values of Σ c_i ψ̄_i^K.
    pub fn combine(&self, coeffs: [f64; 3]) -> Vec<f64> {
        self.values.iter().map(|v| v[0] * coeffs[0] + v[1] * coeffs[1] + v[2] * coeffs[2]).collect()
    }

    /// Max over fine nodes of |Σ_i ψ̄_i − 1|.
    pub fn partition_of_unity_defect(&self) -> f64 {
        self.values.iter().map(|v| (v[0] + v[1] + v[2] - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Which basis to build on every element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisSpec {
    Linear,
    Classical,
    /// Oversampled with (h_S − h)/3 equal to this many fine cells.
    Oversampled { cells: usize },
}

impl BasisSpec {
    /// Oversampled basis whose patch legs are `factor` times those of K.
    pub fn from_factor(meshes: &NestedMeshes, factor: f64) -> Result<Self> {
        if !(factor >= 1.0) {
            return Err(Error::InvalidFactor(factor));
        }
        let m = meshes.map.ratio as f64;
        Ok(Self::Oversampled { cells: ((factor - 1.0) * m / 3.0).round() as usize })
    }

    pub fn kind(&self) -> BasisKind {
        match self {
            Self::Linear => BasisKind::Linear,
            Self::Classical => BasisKind::Classical,
            Self::Oversampled { .. } => BasisKind::Oversampled,
        }
    }
}

/// Shadows of the coarse hats at the fine nodes of element `k`.
fn shadows_on(meshes: &NestedMeshes, k: usize) -> ([Point; 3], Vec<[f64; 3]>) {
    let v = meshes.coarse.vertices(k);
    let s = meshes.cover(k).nodes.iter().map(|&n| barycentric(&v, meshes.fine.nodes[n])).collect();
    (v, s)
}

pub fn linear_basis(meshes: &NestedMeshes, k: usize) -> ElementBasis {
    let (vertices, shadows) = shadows_on(meshes, k);
    ElementBasis {
        element: k,
        kind: BasisKind::Linear,
        vertices,
        values: shadows.clone(),
        shadows,
        c: identity3(),
        patch: None,
    }
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// Oversampled basis of element `patch.element` on the given patch. A patch
/// with zero separation is K itself and yields the classical basis.
pub fn compute_oversampling_basis(meshes: &NestedMeshes, coef: &[f64], patch: &PatchSpec) -> Result<ElementBasis> {
    let k = patch.element;
    let s = patch.vertices;
    let local = solve_local_dirichlet(&meshes.fine, &patch.fine_tris, coef, |p| barycentric(&s, p))?;
    let (vertices, shadows) = shadows_on(meshes, k);

    let classical = patch.is_classical();
    let c = if classical {
        identity3()
    } else {
        // P[k][j] = φ_j^S(x_k^K); φ_i^K = Σ_j c_ij φ_j^S gives C Pᵀ = I
        let p = Matrix3::from_fn(|r, j| barycentric(&s, vertices[r])[j]);
        let inv = p.try_inverse().filter(|m| m.iter().all(|v| v.is_finite())).ok_or(Error::SingularBasis { element: k })?;
        let mut c = [[0.0; 3]; 3];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, cij) in row.iter_mut().enumerate() {
                *cij = inv[(j, i)];
            }
        }
        c
    };

    let cover = meshes.cover(k);
    let mut values = Vec::with_capacity(cover.nodes.len());
    for &g in &cover.nodes {
        let psi = local.values[local.local_index(g).expect("K lies inside its patch")];
        values.push(std::array::from_fn(|i| c[i][0] * psi[0] + c[i][1] * psi[1] + c[i][2] * psi[2]));
    }
    Ok(ElementBasis {
        element: k,
        kind: if classical { BasisKind::Classical } else { BasisKind::Oversampled },
        vertices,
        values,
        shadows,
        c,
        patch: Some(PatchInfo::from(patch)),
    })
}

/// Classical basis: local solves on K with boundary data φ_i^K.
pub fn compute_classical_basis(meshes: &NestedMeshes, coef: &[f64], k: usize) -> Result<ElementBasis> {
    let patch = build_patch_with_cells(meshes, k, 0)?;
    compute_oversampling_basis(meshes, coef, &patch)
}

/// Bases of all elements.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub meshes: NestedMeshes,
    pub spec: BasisSpec,
    pub elements: Vec<ElementBasis>,
}

impl BasisSet {
    /// Build every element's basis in parallel; the result does not depend on
    /// the number of threads.
    pub fn build(meshes: &NestedMeshes, coef: &[f64], spec: BasisSpec) -> Result<Self> {
        if coef.len() != meshes.fine.num_triangles() {
            return Err(Error::MeshMismatch("coefficient samples do not match the fine mesh".into()));
        }
        let elements = (0..meshes.num_elements())
            .into_par_iter()
            .map(|k| match spec {
                BasisSpec::Linear => Ok(linear_basis(meshes, k)),
                BasisSpec::Classical => compute_classical_basis(meshes, coef, k),
                BasisSpec::Oversampled { cells } => {
                    let patch = build_patch_with_cells(meshes, k, cells)?;
                    compute_oversampling_basis(meshes, coef, &patch)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { meshes: meshes.clone(), spec, elements })
    }

    /// Oversampled basis from a patch factor.
    pub fn oversampled(meshes: &NestedMeshes, coef: &[f64], factor: f64) -> Result<Self> {
        // validate through the patch builder's contract
        build_oversampling_patch(meshes, 0, factor)?;
        Self::build(meshes, coef, BasisSpec::from_factor(meshes, factor)?)
    }

    pub fn kind(&self) -> BasisKind {
        self.spec.kind()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Smallest effective (h_S − h)/3 over all elements (0 for non-oversampled).
    pub fn dtilde_min(&self) -> f64 {
        self.elements.iter().map(|e| e.patch.map_or(0.0, |p| p.dtilde)).fold(f64::INFINITY, f64::min)
    }

    /// Smallest dist(∂S(K), K) over all elements.
    pub fn d_min(&self) -> f64 {
        self.elements.iter().map(|e| e.patch.map_or(0.0, |p| p.d_k)).fold(f64::INFINITY, f64::min)
    }

    /// Largest partition-of-unity defect over all elements.
    pub fn partition_of_unity_defect(&self) -> f64 {
        self.elements.iter().map(ElementBasis::partition_of_unity_defect).fold(0.0, f64::max)
    }

    /// ‖∇v‖_{L²(K)} / ‖∇Π_K v‖_{L²(K)} for v = Σ c_i ψ̄_i^K.
    pub fn gradient_ratio(&self, k: usize, coeffs: [f64; 3]) -> f64 {
        let e = &self.elements[k];
        let cover = self.meshes.cover(k);
        let vals = e.combine(coeffs);
        let mut num = 0.0;
        let mut area_k = 0.0;
        for (lt, &t) in cover.local_tris.iter().zip(&cover.fine_tris) {
            let g = p1_gradient(&self.meshes.fine.vertices(t), lt.map(|l| vals[l]));
            let a = self.meshes.fine.area(t);
            num += a * g.norm_squared();
            area_k += a;
        }
        let den = area_k * e.project_pi(coeffs).gradient().norm_squared();
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::mesh::Domain;

    fn setup(cn: usize, fnn: usize, field: &CoefficientField) -> (NestedMeshes, Vec<f64>) {
        let nm = NestedMeshes::structured(Domain::UnitSquare, cn, fnn).unwrap();
        let coef = field.sample_on_mesh(&nm.fine).unwrap();
        (nm, coef)
    }

    #[test]
    fn constant_field_gives_hats() {
        let (nm, coef) = setup(4, 32, &CoefficientField::constant(2.5));
        for spec in [BasisSpec::Classical, BasisSpec::Oversampled { cells: 8 }] {
            let b = BasisSet::build(&nm, &coef, spec).unwrap();
            for e in &b.elements {
                for (v, s) in e.values.iter().zip(&e.shadows) {
                    for i in 0..3 {
                        assert!((v[i] - s[i]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_and_column_sums() {
        let (nm, coef) = setup(4, 40, &CoefficientField::periodic(0.2));
        let b = BasisSet::build(&nm, &coef, BasisSpec::Oversampled { cells: 10 }).unwrap();
        assert!(b.partition_of_unity_defect() < 1e-11);
        for e in &b.elements {
            for j in 0..3 {
                let s: f64 = (0..3).map(|i| e.c[i][j]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let c = BasisSet::build(&nm, &coef, BasisSpec::Classical).unwrap();
        assert!(c.partition_of_unity_defect() < 1e-11);
    }

    #[test]
    fn classical_basis_interpolates_and_is_bounded() {
        let (nm, coef) = setup(4, 40, &CoefficientField::periodic(0.2));
        let b = BasisSet::build(&nm, &coef, BasisSpec::Classical).unwrap();
        for e in &b.elements {
            assert_eq!(e.c, identity3());
            let cover = nm.cover(e.element);
            for (r, x) in nm.coarse.triangles[e.element].iter().enumerate() {
                let p = nm.coarse.nodes[*x];
                let l = cover.nodes.iter().position(|&g| (nm.fine.nodes[g] - p).norm() < 1e-12).unwrap();
                for i in 0..3 {
                    assert!((e.values[l][i] - if i == r { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
            for v in &e.values {
                assert!(v.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            }
        }
    }

    #[test]
    fn projection_of_ones_is_one() {
        let (nm, coef) = setup(2, 20, &CoefficientField::periodic(0.2));
        let b = BasisSet::build(&nm, &coef, BasisSpec::Oversampled { cells: 5 }).unwrap();
        let lin = b.elements[3].project_pi([1.0, 1.0, 1.0]);
        assert!((lin.eval(Point::new(0.3, 0.8)) - 1.0).abs() < 1e-14);
        assert!(lin.gradient().norm() < 1e-14);
    }

    #[test]
    fn projection_is_identity_for_constant_field() {
        let (nm, coef) = setup(2, 16, &CoefficientField::constant(1.0));
        let b = BasisSet::build(&nm, &coef, BasisSpec::Oversampled { cells: 4 }).unwrap();
        let e = &b.elements[5];
        let coeffs = [0.3, -1.2, 2.0];
        let lin = e.project_pi(coeffs);
        let vals = e.combine(coeffs);
        for (&g, v) in nm.cover(5).nodes.iter().zip(vals) {
            assert!((lin.eval(nm.fine.nodes[g]) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_stability_ratio_is_moderate() {
        use rand::{Rng, SeedableRng};
        let (nm, coef) = setup(8, 80, &CoefficientField::periodic(0.1));
        let b = BasisSet::build(&nm, &coef, BasisSpec::Oversampled { cells: 10 }).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k = rng.random_range(0..b.num_elements());
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let r = b.gradient_ratio(k, c);
            assert!(r > 0.1 && r < 10.0, "ratio {r}");
        }
    }

    #[test]
    fn refinement_self_consistency() {
        // same patch geometry on fine grids 1/64 and 1/128 (and 1/256); the
        // basis values at shared nodes converge at second order
        let field = CoefficientField::periodic(0.25);
        let basis_at = |fnn: usize| {
            let (nm, coef) = setup(4, fnn, &field);
            let cells = fnn / 4; // d̃ = h
            let b = BasisSet::build(&nm, &coef, BasisSpec::Oversampled { cells }).unwrap();
            (nm, b)
        };
        let (n1, b1) = basis_at(64);
        let (n2, b2) = basis_at(128);
        let (n3, b3) = basis_at(256);
        let k = 10;
        let compare = |na: &NestedMeshes, ba: &BasisSet, nb: &NestedMeshes, bb: &BasisSet| {
            let ca = na.cover(k);
            let cb = nb.cover(k);
            let mut s = 0.0;
            for (la, &ga) in ca.nodes.iter().enumerate() {
                let p = na.fine.nodes[ga];
                let lb = cb.nodes.iter().position(|&g| (nb.fine.nodes[g] - p).norm() < 1e-12).unwrap();
                for i in 0..3 {
                    s += (ba.elements[k].values[la][i] - bb.elements[k].values[lb][i]).powi(2);
                }
            }
            (s / ca.nodes.len() as f64).sqrt()
        };
        let d12 = compare(&n1, &b1, &n2, &b2);
        let d13 = compare(&n1, &b1, &n3, &b3);
        assert!((d12 / d13 - 0.8).abs() < 0.1, "{d12} {d13}");
    }

    #[test]
    fn serial_and_parallel_builds_agree() {
        let (nm, coef) = setup(4, 24, &CoefficientField::periodic(0.25));
        let par = BasisSet::build(&nm, &coef, BasisSpec::Oversampled { cells: 6 }).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| BasisSet::build(&nm, &coef, BasisSpec::Oversampled { cells: 6 }).unwrap());
        for (a, b) in par.elements.iter().zip(&ser.elements) {
            assert_eq!(a.values, b.values);
        }
    }
}
