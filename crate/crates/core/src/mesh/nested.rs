use std::collections::HashMap;
use std::sync::Arc;

use super::{Half, Point, TriMesh};
use crate::error::{Error, Result};

/// Fine triangles and fine nodes covered by one coarse element.
#[derive(Debug, Clone)]
pub struct ElementCover {
    pub fine_tris: Vec<usize>,
    /// Global fine node ids, ascending.
    pub nodes: Vec<usize>,
    /// Vertices of each entry of `fine_tris` as indices into `nodes`.
    pub local_tris: Vec<[usize; 3]>,
}

impl ElementCover {
    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.nodes.binary_search(&global).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSide {
    pub fine_tri: usize,
    /// Segment endpoints as indices into the side element's cover nodes.
    pub local: [usize; 2],
}

/// A fine edge lying on a coarse edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Global fine nodes, ordered along the coarse edge direction.
    pub nodes: [usize; 2],
    pub length: f64,
    /// Side 0 is K₁ᵉ of the coarse edge, side 1 is K₂ᵉ.
    pub sides: [Option<SegmentSide>; 2],
}

#[derive(Debug, Clone, Default)]
pub struct EdgeTiling {
    pub segments: Vec<Segment>,
}

/// Containment of fine triangles in coarse elements and tiling of coarse
/// edges by fine edges, for nested structured meshes.
#[derive(Debug, Clone)]
pub struct CoarseFineMap {
    pub ratio: usize,
    pub fine_parent: Vec<usize>,
    pub elements: Vec<ElementCover>,
    pub edges: Vec<EdgeTiling>,
}

impl CoarseFineMap {
    pub fn build(coarse: &TriMesh, fine: &TriMesh) -> Result<Self> {
        let (cl, fl) = match (&coarse.lattice, &fine.lattice) {
            (Some(c), Some(f)) => (c, f),
            _ => return Err(Error::MeshMismatch("coarse/fine maps need structured meshes".into())),
        };
        if cl.domain != fl.domain {
            return Err(Error::MeshMismatch("meshes cover different domains".into()));
        }
        if fl.n % cl.n != 0 {
            return Err(Error::NonNested { coarse: cl.n, fine: fl.n });
        }
        let m = fl.n / cl.n;

        let mut fine_parent = vec![0usize; fine.num_triangles()];
        let mut members: Vec<Vec<usize>> = vec![Vec::with_capacity(m * m); coarse.num_triangles()];
        for (t, parent) in fine_parent.iter_mut().enumerate() {
            let (fi, fj, half) = fl.triangle_cell(t);
            let (ci, cj) = (fi / m, fj / m);
            let (li, lj) = (fi % m, fj % m);
            let in_lower = match half {
                Half::LowerRight => lj <= li,
                Half::UpperLeft => lj < li,
            };
            let ct = cl.cell_triangles(ci, cj).ok_or_else(|| Error::MeshMismatch("fine cell outside coarse mesh".into()))?;
            *parent = if in_lower { ct[0] } else { ct[1] };
            members[*parent].push(t);
        }

        let elements: Vec<ElementCover> = members
            .into_iter()
            .map(|fine_tris| {
                let mut nodes: Vec<usize> = fine_tris.iter().flat_map(|&t| fine.triangles[t]).collect();
                nodes.sort_unstable();
                nodes.dedup();
                let local_tris = fine_tris
                    .iter()
                    .map(|&t| fine.triangles[t].map(|v| nodes.binary_search(&v).unwrap()))
                    .collect();
                ElementCover { fine_tris, nodes, local_tris }
            })
            .collect();

        let mut pair_edge: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, edge) in coarse.edges.iter().enumerate() {
            if let Some(r) = edge.right {
                pair_edge.insert((edge.left, r), e);
            }
        }
        let mut edges = vec![EdgeTiling::default(); coarse.num_edges()];
        let mut params: Vec<Vec<f64>> = vec![Vec::new(); coarse.num_edges()];
        for fe in &fine.edges {
            let ka = fine_parent[fe.left];
            let kb = fe.right.map(|r| fine_parent[r]);
            let ce = match kb {
                Some(kb) if kb == ka => continue,
                Some(kb) => *pair_edge
                    .get(&(ka.min(kb), ka.max(kb)))
                    .ok_or_else(|| Error::MeshMismatch("fine edge between non-adjacent coarse elements".into()))?,
                None => boundary_edge_containing(coarse, ka, fine.nodes[fe.nodes[0]], fine.nodes[fe.nodes[1]])
                    .ok_or_else(|| Error::MeshMismatch("fine boundary edge not on a coarse boundary edge".into()))?,
            };
            let cedge = &coarse.edges[ce];
            let a = coarse.nodes[cedge.nodes[0]];
            let dir = coarse.nodes[cedge.nodes[1]] - a;
            let tpar = |p: Point| (p - a).dot(&dir) / dir.norm_squared();
            let (p0, p1) = (fe.nodes[0], fe.nodes[1]);
            let (t0, t1) = (tpar(fine.nodes[p0]), tpar(fine.nodes[p1]));
            let ordered = if t0 <= t1 { [p0, p1] } else { [p1, p0] };
            let mut sides = [None, None];
            for ft in std::iter::once(fe.left).chain(fe.right) {
                let k = fine_parent[ft];
                let slot = if k == cedge.left { 0 } else { 1 };
                let cover = &elements[k];
                sides[slot] = Some(SegmentSide {
                    fine_tri: ft,
                    local: ordered.map(|g| cover.local_index(g).unwrap()),
                });
            }
            edges[ce].segments.push(Segment { nodes: ordered, length: fe.length, sides });
            params[ce].push(0.5 * (t0 + t1));
        }
        for (tiling, ps) in edges.iter_mut().zip(params) {
            let mut order: Vec<usize> = (0..ps.len()).collect();
            order.sort_by(|&i, &j| ps[i].total_cmp(&ps[j]));
            tiling.segments = order.into_iter().map(|i| tiling.segments[i]).collect();
        }
        Ok(Self { ratio: m, fine_parent, elements, edges })
    }
}

fn boundary_edge_containing(coarse: &TriMesh, k: usize, p: Point, q: Point) -> Option<usize> {
    coarse.triangle_edges[k].iter().copied().find(|&e| {
        let edge = &coarse.edges[e];
        if !edge.is_boundary() {
            return false;
        }
        let a = coarse.nodes[edge.nodes[0]];
        let b = coarse.nodes[edge.nodes[1]];
        let d = b - a;
        let tol = 1e-9 * d.norm();
        let on = |x: Point| {
            let r = x - a;
            (d.x * r.y - d.y * r.x).abs() / d.norm() <= tol
                && r.dot(&d) >= -tol * d.norm()
                && r.dot(&d) <= d.norm_squared() + tol * d.norm()
        };
        on(p) && on(q)
    })
}

/// A coarse mesh, a fine mesh refining it, and the map between them.
#[derive(Debug, Clone)]
pub struct NestedMeshes {
    pub coarse: Arc<TriMesh>,
    pub fine: Arc<TriMesh>,
    pub map: Arc<CoarseFineMap>,
}

impl NestedMeshes {
    pub fn new(coarse: Arc<TriMesh>, fine: Arc<TriMesh>) -> Result<Self> {
        let map = Arc::new(CoarseFineMap::build(&coarse, &fine)?);
        Ok(Self { coarse, fine, map })
    }

    pub fn structured(domain: super::Domain, coarse_n: usize, fine_n: usize) -> Result<Self> {
        if fine_n % coarse_n != 0 {
            return Err(Error::NonNested { coarse: coarse_n, fine: fine_n });
        }
        Self::new(
            Arc::new(super::build_structured_mesh(domain, coarse_n)),
            Arc::new(super::build_structured_mesh(domain, fine_n)),
        )
    }

    pub fn domain(&self) -> super::Domain {
        self.coarse.lattice.as_ref().expect("structured").domain
    }

    pub fn num_elements(&self) -> usize {
        self.coarse.num_triangles()
    }

    pub fn cover(&self, k: usize) -> &ElementCover {
        &self.map.elements[k]
    }
}
