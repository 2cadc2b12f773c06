use super::{Half, NestedMeshes, Point};
use crate::error::{Error, Result};

/// Oversampling macro-triangle S(K) and its fine submesh.
#[derive(Debug, Clone)]
pub struct PatchSpec {
    pub element: usize,
    /// Vertices of S(K), corresponding one-to-one with the vertices of K.
    pub vertices: [Point; 3],
    /// Effective h_S / h_K after boundary adjustment.
    pub factor: f64,
    /// Effective (h_S − h_K)/3 measured in fine cells.
    pub cells: usize,
    /// Effective (h_S − h_K)/3.
    pub dtilde: f64,
    /// dist(∂S(K), K).
    pub d_k: f64,
    pub translated: bool,
    pub shrunk: bool,
    /// Fine triangles of S(K), ascending.
    pub fine_tris: Vec<usize>,
}

impl PatchSpec {
    pub fn is_classical(&self) -> bool {
        self.cells == 0
    }
}

/// Oversampling patch for `element` whose legs are `factor` times those of K.
///
/// The patch is the similar triangle with the same barycenter and parallel
/// edges. Its corner is snapped to the fine lattice so the patch is a union
/// of fine triangles; patches leaving the domain are translated back inside
/// by the smallest lattice shift that keeps K ⊂ S(K), and shrunk only when no
/// shift works.
pub fn build_oversampling_patch(meshes: &NestedMeshes, element: usize, factor: f64) -> Result<PatchSpec> {
    if !(factor >= 1.0) {
        return Err(Error::InvalidFactor(factor));
    }
    let m = meshes.map.ratio as f64;
    let cells = ((factor - 1.0) * m / 3.0).round() as usize;
    build_patch_with_cells(meshes, element, cells)
}

/// Same as [`build_oversampling_patch`] with the separation (h_S − h_K)/3
/// given directly in fine cells.
pub fn build_patch_with_cells(meshes: &NestedMeshes, element: usize, cells: usize) -> Result<PatchSpec> {
    let cl = meshes.coarse.lattice.as_ref().expect("structured coarse mesh");
    let fl = meshes.fine.lattice.as_ref().expect("structured fine mesh");
    let m = meshes.map.ratio as i64;
    let (ci, cj, half) = cl.triangle_cell(element);
    let (x0, y0) = (ci as i64 * m, cj as i64 * m);
    let width = fl.cells_x as i64;
    let height = fl.cells_y as i64;
    let holes: Vec<[i64; 4]> = hole_boxes(fl.domain, fl.n as i64);

    let mut k = cells as i64;
    loop {
        let leg = m + 3 * k;
        let ideal = match half {
            Half::LowerRight => (2 * k, k),
            Half::UpperLeft => (k, 2 * k),
        };
        let score = |alpha: i64, beta: i64| -> Option<i64> {
            fits(half, (x0 - alpha, y0 - beta), leg, width, height, &holes)
                .then(|| (alpha - ideal.0).pow(2) + (beta - ideal.1).pow(2))
        };
        let mut best: Option<((i64, i64), i64)> = score(ideal.0, ideal.1).map(|d| (ideal, d));
        if best.is_none() {
            // K ⊂ S(K) ⇔ 0 ≤ β ≤ α ≤ 3k (lower-right) or 0 ≤ α ≤ β ≤ 3k (upper-left)
            for alpha in 0..=3 * k {
                for beta in 0..=3 * k {
                    let ok = match half {
                        Half::LowerRight => beta <= alpha,
                        Half::UpperLeft => alpha <= beta,
                    };
                    if !ok {
                        continue;
                    }
                    if let Some(d2) = score(alpha, beta) {
                        if best.map_or(true, |(_, b)| d2 < b) {
                            best = Some(((alpha, beta), d2));
                        }
                    }
                }
            }
        }
        if let Some(((alpha, beta), d2)) = best {
            let corner = (x0 - alpha, y0 - beta);
            return Ok(assemble_patch(meshes, element, half, corner, leg, k as usize, d2 != 0, k < cells as i64));
        }
        k -= 1;
        debug_assert!(k >= 0, "K itself always fits");
    }
}

/// Removed unit squares of the bounding box in fine lattice units.
fn hole_boxes(domain: super::Domain, n: i64) -> Vec<[i64; 4]> {
    let (ux, uy) = domain.units();
    let mut out = Vec::new();
    for uj in 0..uy {
        for ui in 0..ux {
            if !domain.unit_included(ui, uj) {
                let (i, j) = (ui as i64 * n, uj as i64 * n);
                out.push([i, j, i + n, j + n]);
            }
        }
    }
    out
}

fn corners(half: Half, (a, b): (i64, i64), leg: i64) -> [(i64, i64); 3] {
    match half {
        Half::LowerRight => [(a, b), (a + leg, b), (a + leg, b + leg)],
        Half::UpperLeft => [(a, b), (a + leg, b + leg), (a, b + leg)],
    }
}

/// Closed triangle inside the closed domain: inside the bounding box and not
/// overlapping the interior of any removed square (separating axes x, y, x−y).
fn fits(half: Half, corner: (i64, i64), leg: i64, width: i64, height: i64, holes: &[[i64; 4]]) -> bool {
    let v = corners(half, corner, leg);
    if v.iter().any(|&(x, y)| x < 0 || y < 0 || x > width || y > height) {
        return false;
    }
    let range = |f: &dyn Fn((i64, i64)) -> i64| {
        let vals = v.map(f);
        (*vals.iter().min().unwrap(), *vals.iter().max().unwrap())
    };
    let (sx0, sx1) = range(&|p| p.0);
    let (sy0, sy1) = range(&|p| p.1);
    let (sd0, sd1) = range(&|p| p.0 - p.1);
    holes.iter().all(|&[hx0, hy0, hx1, hy1]| {
        let (hd0, hd1) = (hx0 - hy1, hx1 - hy0);
        sx1 <= hx0 || sx0 >= hx1 || sy1 <= hy0 || sy0 >= hy1 || sd1 <= hd0 || sd0 >= hd1
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble_patch(
    meshes: &NestedMeshes,
    element: usize,
    half: Half,
    corner: (i64, i64),
    leg: i64,
    cells: usize,
    translated: bool,
    shrunk: bool,
) -> PatchSpec {
    let fl = meshes.fine.lattice.as_ref().unwrap();
    let hf = meshes.fine.h;
    let o = fl.domain.origin();
    let to_point = |(x, y): (i64, i64)| Point::new(o.x + x as f64 * hf, o.y + y as f64 * hf);
    // S(K) corners listed in the same order as the vertices of K
    let vertices = corners(half, corner, leg).map(to_point);

    let mut fine_tris = Vec::new();
    for q in 0..leg {
        for p in 0..leg {
            let (i, j) = ((corner.0 + p) as usize, (corner.1 + q) as usize);
            let (both, diag_half) = match half {
                Half::LowerRight => (q < p, q == p),
                Half::UpperLeft => (q > p, q == p),
            };
            if !both && !diag_half {
                continue;
            }
            let tris = fl.cell_triangles(i, j).expect("patch cell inside the domain");
            if both {
                fine_tris.extend_from_slice(&tris);
            } else {
                fine_tris.push(if half == Half::LowerRight { tris[0] } else { tris[1] });
            }
        }
    }
    fine_tris.sort_unstable();

    let m = meshes.map.ratio;
    let kv = meshes.coarse.vertices(element);
    let d_k = (0..3)
        .map(|e| {
            let (a, b) = (vertices[e], vertices[(e + 1) % 3]);
            let d = b - a;
            kv.iter()
                .map(|p| ((p - a).x * d.y - (p - a).y * d.x).abs() / d.norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    PatchSpec {
        element,
        vertices,
        factor: (m + 3 * cells) as f64 / m as f64,
        cells,
        dtilde: cells as f64 * hf,
        d_k,
        translated,
        shrunk,
        fine_tris,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{barycentric, Domain};

    fn inside_triangle(v: &[Point; 3], p: Point) -> bool {
        barycentric(v, p).iter().all(|&l| l >= -1e-12)
    }

    /// Containment oracle by dense point sampling of S(K).
    fn patch_in_domain(domain: Domain, s: &[Point; 3]) -> bool {
        let n = 40;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (l1, l2) = (i as f64 / n as f64, j as f64 / n as f64);
                let p = Point::from(s[0].coords * (1.0 - l1 - l2) + s[1].coords * l1 + s[2].coords * l2);
                if !domain.contains(p) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn interior_factor_four() {
        let nm = NestedMeshes::structured(Domain::UnitSquare, 8, 32).unwrap();
        // cell (3,3) is far from the boundary
        let cl = nm.coarse.lattice.as_ref().unwrap();
        for k in cl.cell_triangles(3, 3).unwrap() {
            let p = build_oversampling_patch(&nm, k, 4.0).unwrap();
            assert!(!p.translated && !p.shrunk);
            let h = nm.coarse.h;
            assert!((p.dtilde - h).abs() < 1e-14, "d̃ = (h_S − h)/3 = h");
            let kv = nm.coarse.vertices(k);
            let bk = (kv[0].coords + kv[1].coords + kv[2].coords) / 3.0;
            let bs = (p.vertices[0].coords + p.vertices[1].coords + p.vertices[2].coords) / 3.0;
            assert!((bk - bs).norm() < 1e-14, "barycenters coincide");
            for e in 0..3 {
                let dk = kv[(e + 1) % 3] - kv[e];
                let ds = p.vertices[(e + 1) % 3] - p.vertices[e];
                assert!((dk.x * ds.y - dk.y * ds.x).abs() < 1e-14, "edges parallel");
                assert!((ds.norm() / dk.norm() - 4.0).abs() < 1e-12);
            }
            // scaling about the barycenter moves each edge by (factor − 1) times the
            // barycenter-to-edge distance: d̃ for the legs, d̃/√2 for the hypotenuse
            let expect = p.dtilde / 2f64.sqrt();
            assert!((p.d_k - expect).abs() < 1e-12);
            assert_eq!(p.fine_tris.len(), 16 * 16);
        }
    }

    #[test]
    fn factor_one_is_element() {
        let nm = NestedMeshes::structured(Domain::UnitSquare, 4, 12).unwrap();
        for k in 0..nm.num_elements() {
            let p = build_oversampling_patch(&nm, k, 1.0).unwrap();
            assert_eq!(p.fine_tris, {
                let mut v = nm.cover(k).fine_tris.clone();
                v.sort_unstable();
                v
            });
            assert_eq!(p.d_k, 0.0);
            let kv = nm.coarse.vertices(k);
            for i in 0..3 {
                assert!((kv[i] - p.vertices[i]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn factor_below_one_rejected() {
        let nm = NestedMeshes::structured(Domain::UnitSquare, 2, 4).unwrap();
        assert!(matches!(build_oversampling_patch(&nm, 0, 0.5), Err(Error::InvalidFactor(_))));
    }

    #[test]
    fn every_patch_contains_element_and_stays_in_domain() {
        for domain in [Domain::UnitSquare, Domain::LShape] {
            let nm = NestedMeshes::structured(domain, 4, 24).unwrap();
            for k in 0..nm.num_elements() {
                let p = build_oversampling_patch(&nm, k, 4.0).unwrap();
                assert!(patch_in_domain(domain, &p.vertices), "S(K) ⊂ Ω̄ for {k}");
                for v in nm.coarse.vertices(k) {
                    assert!(inside_triangle(&p.vertices, v), "K ⊂ S(K) for {k}");
                }
                let area: f64 = p.fine_tris.iter().map(|&t| nm.fine.area(t)).sum();
                let leg = (p.vertices[1] - p.vertices[0]).norm().min((p.vertices[2] - p.vertices[1]).norm());
                assert!((area - leg * leg / 2.0).abs() < 1e-12);
                for &t in &p.fine_tris {
                    assert!(inside_triangle(&p.vertices, nm.fine.centroid(t)));
                }
            }
        }
    }

    #[test]
    fn corner_element_is_translated() {
        let nm = NestedMeshes::structured(Domain::UnitSquare, 8, 32).unwrap();
        let cl = nm.coarse.lattice.as_ref().unwrap();
        let k = cl.cell_triangles(0, 0).unwrap()[0];
        let p = build_oversampling_patch(&nm, k, 4.0).unwrap();
        assert!(p.translated && !p.shrunk);
        assert!(patch_in_domain(Domain::UnitSquare, &p.vertices));
        for v in nm.coarse.vertices(k) {
            assert!(inside_triangle(&p.vertices, v));
        }
    }
}
