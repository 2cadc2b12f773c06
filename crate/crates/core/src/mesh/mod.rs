//! Structured triangulations of the unit square and the L-shaped domain,
//! coarse/fine nesting maps and oversampling patches.
//!
//! Every square cell is cut by its lower-left to upper-right diagonal into a
//! lower-right and an upper-left triangle, both stored counter-clockwise.

mod nested;
mod patch;

pub use nested::{CoarseFineMap, ElementCover, EdgeTiling, NestedMeshes, Segment, SegmentSide};
pub use patch::{build_oversampling_patch, build_patch_with_cells, PatchSpec};

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

/// Computational domain, a union of closed unit squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// `(0,1)²`
    UnitSquare,
    /// `(−1,1)²` without the closed fourth quadrant `[0,1]×[−1,0]`.
    LShape,
}

impl Domain {
    pub fn origin(self) -> Point {
        match self {
            Domain::UnitSquare => Point::new(0.0, 0.0),
            Domain::LShape => Point::new(-1.0, -1.0),
        }
    }

    /// Bounding box size in unit squares.
    pub fn units(self) -> (usize, usize) {
        match self {
            Domain::UnitSquare => (1, 1),
            Domain::LShape => (2, 2),
        }
    }

    pub fn unit_included(self, ui: usize, uj: usize) -> bool {
        match self {
            Domain::UnitSquare => ui == 0 && uj == 0,
            Domain::LShape => ui < 2 && uj < 2 && !(ui == 1 && uj == 0),
        }
    }

    pub fn area(self) -> f64 {
        match self {
            Domain::UnitSquare => 1.0,
            Domain::LShape => 3.0,
        }
    }

    /// Membership in the closed domain.
    pub fn contains(self, p: Point) -> bool {
        let o = self.origin();
        let (ux, uy) = self.units();
        let (x, y) = (p.x - o.x, p.y - o.y);
        let eps = 1e-12;
        if x < -eps || y < -eps || x > ux as f64 + eps || y > uy as f64 + eps {
            return false;
        }
        // a point belongs to the closure if any unit square touching it is included
        let cand = |v: f64, max: usize| -> Vec<usize> {
            let f = v.floor();
            let mut c = Vec::new();
            for k in [f - 1.0, f] {
                if k >= 0.0 && (k as usize) < max && v >= k - eps && v <= k + 1.0 + eps {
                    c.push(k as usize);
                }
            }
            c
        };
        for ui in cand(x, ux) {
            for uj in cand(y, uy) {
                if self.unit_included(ui, uj) {
                    return true;
                }
            }
        }
        false
    }

    /// Polar angle measured from the positive x₁-axis into the domain, in
    /// `[0, 2π)`; on the L-shape it ranges over `[0, 3π/2]`.
    pub fn polar_angle(p: Point) -> f64 {
        let t = p.y.atan2(p.x);
        if t < 0.0 {
            t + 2.0 * std::f64::consts::PI
        } else {
            t
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "unit-square" | "square" => Ok(Domain::UnitSquare),
            "l-shape" | "lshape" => Ok(Domain::LShape),
            other => Err(crate::Error::Config(format!("unknown domain `{other}`"))),
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::UnitSquare => "unit-square",
            Domain::LShape => "l-shape",
        })
    }
}

/// Which half of a lattice cell a triangle occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Half {
    LowerRight,
    UpperLeft,
}

/// Lattice bookkeeping of a structured mesh.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub domain: Domain,
    /// Cells per unit length.
    pub n: usize,
    pub cells_x: usize,
    pub cells_y: usize,
    node_index: Vec<usize>,
    cell_tris: Vec<[usize; 2]>,
    tri_cell: Vec<(usize, usize, Half)>,
}

const ABSENT: usize = usize::MAX;

impl Lattice {
    pub fn node(&self, i: usize, j: usize) -> Option<usize> {
        if i > self.cells_x || j > self.cells_y {
            return None;
        }
        let v = self.node_index[j * (self.cells_x + 1) + i];
        (v != ABSENT).then_some(v)
    }

    pub fn cell_triangles(&self, i: usize, j: usize) -> Option<[usize; 2]> {
        if i >= self.cells_x || j >= self.cells_y {
            return None;
        }
        let v = self.cell_tris[j * self.cells_x + i];
        (v[0] != ABSENT).then_some(v)
    }

    pub fn triangle_cell(&self, t: usize) -> (usize, usize, Half) {
        self.tri_cell[t]
    }

    pub fn cell_included(&self, i: usize, j: usize) -> bool {
        self.domain.unit_included(i / self.n, j / self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Endpoints in counter-clockwise order as seen from `left`.
    pub nodes: [usize; 2],
    /// K₁ᵉ, the lower-indexed adjacent element.
    pub left: usize,
    /// K₂ᵉ; `None` on the boundary.
    pub right: Option<usize>,
    /// Unit normal pointing from `left` into `right`, or outward on ∂Ω.
    pub normal: Vector,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Edges of each triangle; entry `k` joins local vertices `k` and `k+1`.
    pub triangle_edges: Vec<[usize; 3]>,
    /// Cell width.
    pub h: f64,
    pub lattice: Option<Lattice>,
}

impl TriMesh {
    /// Build from raw nodes and counter-clockwise triangles.
    pub fn from_triangles(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, h: f64) -> Self {
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 1);
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    let d = nodes[b] - nodes[a];
                    let len = d.norm();
                    edges.push(Edge {
                        nodes: [a, b],
                        left: t,
                        right: None,
                        normal: Vector::new(d.y / len, -d.x / len),
                        length: len,
                    });
                    edges.len() - 1
                });
                if edges[e].left != t {
                    debug_assert!(edges[e].right.is_none(), "edge shared by more than two triangles");
                    edges[e].right = Some(t);
                }
                te[k] = e;
            }
            triangle_edges.push(te);
        }
        Self { nodes, triangles, edges, triangle_edges, h, lattice: None }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices(t);
        Point::from((a.coords + b.coords + c.coords) / 3.0)
    }

    /// Gradients of the three barycentric coordinates of triangle `t`.
    pub fn bary_grads(&self, t: usize) -> [Vector; 3] {
        bary_grads(&self.vertices(t))
    }

    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut b = vec![false; self.nodes.len()];
        for e in self.edges.iter().filter(|e| e.is_boundary()) {
            b[e.nodes[0]] = true;
            b[e.nodes[1]] = true;
        }
        b
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Hash of the geometry and connectivity, used to tag solution dumps.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &self.nodes {
            h.update(p.x.to_le_bytes());
            h.update(p.y.to_le_bytes());
        }
        for t in &self.triangles {
            for v in t {
                h.update((*v as u64).to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Plain-text dump: header `nodes T E`, then node coordinates, triangle
    /// index triples and edge records `a b left right nx ny boundary`
    /// (`right = -1` on the boundary).
    pub fn to_dump_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.nodes.len(), self.triangles.len(), self.edges.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.17e} {:.17e}", p.x, p.y);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.edges {
            let right = e.right.map_or(-1i64, |r| r as i64);
            let _ = writeln!(
                s,
                "{} {} {} {} {:.17e} {:.17e} {}",
                e.nodes[0],
                e.nodes[1],
                e.left,
                right,
                e.normal.x,
                e.normal.y,
                u8::from(e.is_boundary())
            );
        }
        s
    }
}

pub fn bary_grads(v: &[Point; 3]) -> [Vector; 3] {
    let [a, b, c] = *v;
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    // ∇λ_i = rot(opposite edge) / (2|T|)
    [
        Vector::new(b.y - c.y, c.x - b.x) / det,
        Vector::new(c.y - a.y, a.x - c.x) / det,
        Vector::new(a.y - b.y, b.x - a.x) / det,
    ]
}

/// Barycentric coordinates of `p` with respect to `v`.
pub fn barycentric(v: &[Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = *v;
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let l1 = ((b.x - p.x) * (c.y - p.y) - (c.x - p.x) * (b.y - p.y)) / det;
    let l2 = ((c.x - p.x) * (a.y - p.y) - (a.x - p.x) * (c.y - p.y)) / det;
    [l1, l2, 1.0 - l1 - l2]
}

/// Structured mesh with `n` cells per unit length.
pub fn build_structured_mesh(domain: Domain, n: usize) -> TriMesh {
    assert!(n >= 1, "need at least one cell per unit length");
    let (ux, uy) = domain.units();
    let (cx, cy) = (ux * n, uy * n);
    let h = 1.0 / n as f64;
    let o = domain.origin();
    let included = |i: usize, j: usize| domain.unit_included(i / n, j / n);

    let mut node_index = vec![ABSENT; (cx + 1) * (cy + 1)];
    let mut nodes = Vec::new();
    for j in 0..=cy {
        for i in 0..=cx {
            let touches = [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)]
                .iter()
                .any(|&(ci, cj)| ci < cx && cj < cy && included(ci, cj));
            if touches {
                node_index[j * (cx + 1) + i] = nodes.len();
                nodes.push(Point::new(o.x + i as f64 * h, o.y + j as f64 * h));
            }
        }
    }
    let mut triangles = Vec::new();
    let mut cell_tris = vec![[ABSENT; 2]; cx * cy];
    let mut tri_cell = Vec::new();
    let id = |i: usize, j: usize| node_index[j * (cx + 1) + i];
    for j in 0..cy {
        for i in 0..cx {
            if !included(i, j) {
                continue;
            }
            let (ll, lr, ur, ul) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let t = triangles.len();
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
            cell_tris[j * cx + i] = [t, t + 1];
            tri_cell.push((i, j, Half::LowerRight));
            tri_cell.push((i, j, Half::UpperLeft));
        }
    }
    let mut mesh = TriMesh::from_triangles(nodes, triangles, h);
    mesh.lattice = Some(Lattice { domain, n, cells_x: cx, cells_y: cy, node_index, cell_tris, tri_cell });
    mesh
}
