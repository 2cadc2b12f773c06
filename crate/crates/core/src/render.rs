//! Diagnostic heat maps: binary PGM rasters and SVG with a fixed colormap.

use std::fmt::Write as _;

use crate::mesh::{Point, TriMesh};

/// Fixed blue–white–red ramp on [0, 1].
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let lerp = |a: f64, b: f64, s: f64| (a + (b - a) * s).round() as u8;
    if t < 0.5 {
        let s = t / 0.5;
        [lerp(33.0, 247.0, s), lerp(102.0, 247.0, s), lerp(172.0, 247.0, s)]
    } else {
        let s = (t - 0.5) / 0.5;
        [lerp(247.0, 178.0, s), lerp(247.0, 24.0, s), lerp(247.0, 43.0, s)]
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        (lo, if hi > lo { hi } else { lo + 1.0 })
    } else {
        (0.0, 1.0)
    }
}

/// Binary graymap, rows from top to bottom; `None` pixels are black and the
/// data range maps to 1..=255.
pub fn pgm(width: usize, height: usize, values: &[Option<f64>]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let (lo, hi) = range(values.iter().flatten().copied());
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for row in (0..height).rev() {
        for col in 0..width {
            out.push(match values[row * width + col] {
                Some(v) => 1 + ((v - lo) / (hi - lo) * 254.0).round().clamp(0.0, 254.0) as u8,
                None => 0,
            });
        }
    }
    out
}

/// Sample `f` at pixel centers of a `px × px` raster over the square with
/// lower-left corner `origin` and side `side`. Row 0 is the bottom row.
pub fn sample_square(origin: Point, side: f64, px: usize, f: impl Fn(Point) -> Option<f64>) -> Vec<Option<f64>> {
    let d = side / px as f64;
    (0..px * px)
        .map(|k| {
            let (i, j) = (k % px, k / px);
            f(Point::new(origin.x + (i as f64 + 0.5) * d, origin.y + (j as f64 + 0.5) * d))
        })
        .collect()
}

/// SVG of the given triangles, each filled by its value.
pub fn svg_triangles(mesh: &TriMesh, tris: &[usize], values: &[f64], title: &str) -> String {
    assert_eq!(tris.len(), values.len());
    let (lo, hi) = range(values.iter().copied());
    let pts = tris.iter().flat_map(|&t| mesh.vertices(t));
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let scale = 512.0 / (x1 - x0).max(y1 - y0).max(1e-300);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}">"#,
        (x1 - x0) * scale + 20.0,
        (y1 - y0) * scale + 40.0
    )
    .unwrap();
    writeln!(s, r#"<text x="10" y="20" font-family="monospace" font-size="12">{title} [{lo:.4e}, {hi:.4e}]</text>"#).unwrap();
    for (&t, &v) in tris.iter().zip(values) {
        let c = colormap((v - lo) / (hi - lo));
        let p: Vec<String> = mesh
            .vertices(t)
            .iter()
            .map(|q| format!("{:.2},{:.2}", 10.0 + (q.x - x0) * scale, 30.0 + (y1 - q.y) * scale))
            .collect();
        writeln!(s, r#"<polygon points="{}" fill="rgb({},{},{})" stroke="none"/>"#, p.join(" "), c[0], c[1], c[2]).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// SVG of a raster produced by [`sample_square`].
pub fn svg_raster(px: usize, values: &[Option<f64>], title: &str) -> String {
    let (lo, hi) = range(values.iter().flatten().copied());
    let cell = (512 / px.max(1)).max(1);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#, px * cell + 20, px * cell + 40).unwrap();
    writeln!(s, r#"<text x="10" y="20" font-family="monospace" font-size="12">{title} [{lo:.4e}, {hi:.4e}]</text>"#).unwrap();
    for (k, v) in values.iter().enumerate() {
        let Some(v) = v else { continue };
        let (i, j) = (k % px, k / px);
        let c = colormap((v - lo) / (hi - lo));
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({},{},{})"/>"#,
            10 + i * cell,
            30 + (px - 1 - j) * cell,
            c[0],
            c[1],
            c[2]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
