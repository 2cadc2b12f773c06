//! Scalar coefficient fields a^ε(x) and their sampling on meshes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh};

/// Name of the generator behind [`generate_lognormal`], recorded in run metadata.
pub const RNG_NAME: &str = "ChaCha8Rng(seed_from_u64)";

/// Square region covered by a grid field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub origin: [f64; 2],
    pub side: f64,
}

impl GridBox {
    pub const UNIT: GridBox = GridBox { origin: [0.0, 0.0], side: 1.0 };

    /// Bounding box of a domain.
    pub fn of(domain: crate::mesh::Domain) -> Self {
        let o = domain.origin();
        let (ux, uy) = domain.units();
        GridBox { origin: [o.x, o.y], side: ux.max(uy) as f64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    pub n: usize,
    pub variance: f64,
    pub l1: f64,
    pub l2: f64,
    pub seed: u64,
}

/// Piecewise-constant field on an `n × n` cell grid, row-major from the
/// lower-left cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub n: usize,
    pub region: GridBox,
    pub values: Vec<f64>,
    pub lognormal: Option<LognormalParams>,
}

impl GridField {
    pub fn new(n: usize, region: GridBox, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n);
        Self { n, region, values, lognormal: None }
    }

    pub fn cell_of(&self, x: Point) -> (usize, usize) {
        let h = self.region.side / self.n as f64;
        let idx = |v: f64, o: f64| (((v - o) / h).floor().max(0.0) as usize).min(self.n - 1);
        (idx(x.x, self.region.origin[0]), idx(x.y, self.region.origin[1]))
    }

    pub fn eval(&self, x: Point) -> f64 {
        let (i, j) = self.cell_of(x);
        self.values[j * self.n + i]
    }

    /// Header `n σ² l₁ l₂ seed`, then one grid row per line.
    pub fn to_text(&self) -> String {
        let p = self.lognormal.unwrap_or(LognormalParams { n: self.n, variance: 0.0, l1: 0.0, l2: 0.0, seed: 0 });
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {} {} {}", self.n, p.variance, p.l1, p.l2, p.seed);
        for row in self.values.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str, region: GridBox) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| tokens.next().ok_or_else(|| Error::Parse(format!("missing {what}")));
        let perr = |e: &dyn std::fmt::Display| Error::Parse(e.to_string());
        let n: usize = next("n")?.parse().map_err(|e| perr(&e))?;
        let variance: f64 = next("variance")?.parse().map_err(|e| perr(&e))?;
        let l1: f64 = next("l1")?.parse().map_err(|e| perr(&e))?;
        let l2: f64 = next("l2")?.parse().map_err(|e| perr(&e))?;
        let seed: u64 = next("seed")?.parse().map_err(|e| perr(&e))?;
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            values.push(next("cell value")?.parse::<f64>().map_err(|e| perr(&e))?);
        }
        Ok(Self { n, region, values, lognormal: Some(LognormalParams { n, variance, l1, l2, seed }) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    /// (2+1.8 sin(2πx₁/ε))/(2+1.8 cos(2πx₂/ε)) + (2+1.8 sin(2πx₂/ε))/(2+1.8 sin(2πx₁/ε))
    AnalyticPeriodic { eps: f64 },
    Constant(f64),
    /// `mean + amplitude · sin(2π x_axis / period)`, varying along one axis only.
    Layered { mean: f64, amplitude: f64, period: f64, axis: usize },
    Grid(GridField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub kind: FieldKind,
    /// (λ, Λ) once estimated or declared.
    pub bounds: Option<(f64, f64)>,
}

impl CoefficientField {
    pub fn periodic(eps: f64) -> Self {
        Self { kind: FieldKind::AnalyticPeriodic { eps }, bounds: None }
    }

    pub fn constant(c: f64) -> Self {
        Self { kind: FieldKind::Constant(c), bounds: Some((c, c)) }
    }

    pub fn layered(mean: f64, amplitude: f64, period: f64, axis: usize) -> Self {
        assert!(axis < 2);
        Self { kind: FieldKind::Layered { mean, amplitude, period, axis }, bounds: None }
    }

    pub fn grid(g: GridField) -> Self {
        Self { kind: FieldKind::Grid(g), bounds: None }
    }

    /// Oscillation period for analytic fields.
    pub fn eps(&self) -> Option<f64> {
        match &self.kind {
            FieldKind::AnalyticPeriodic { eps } => Some(*eps),
            FieldKind::Layered { period, .. } => Some(*period),
            _ => None,
        }
    }

    /// The same field on the unit cell `Y`, for periodic kinds.
    pub fn unit_cell(&self) -> Option<Self> {
        match &self.kind {
            FieldKind::AnalyticPeriodic { .. } => Some(Self::periodic(1.0)),
            FieldKind::Layered { mean, amplitude, axis, .. } => Some(Self::layered(*mean, *amplitude, 1.0, *axis)),
            FieldKind::Constant(c) => Some(Self::constant(*c)),
            FieldKind::Grid(_) => None,
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match &self.kind {
            FieldKind::AnalyticPeriodic { eps } => {
                let (s1, c2) = ((2.0 * PI * x.x / eps).sin(), (2.0 * PI * x.y / eps).cos());
                let s2 = (2.0 * PI * x.y / eps).sin();
                (2.0 + 1.8 * s1) / (2.0 + 1.8 * c2) + (2.0 + 1.8 * s2) / (2.0 + 1.8 * s1)
            }
            FieldKind::Constant(c) => *c,
            FieldKind::Layered { mean, amplitude, period, axis } => {
                mean + amplitude * (2.0 * PI * x[*axis] / period).sin()
            }
            FieldKind::Grid(g) => g.eval(x),
        }
    }

    /// Min and max over the sample points; stored on the field.
    pub fn estimate_ellipticity(&mut self, samples: &[Point]) -> Result<(f64, f64)> {
        if samples.is_empty() {
            return Err(Error::Config("ellipticity estimate needs at least one sample".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in samples {
            let v = self.eval(p);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonElliptic { value: v, x: p.x, y: p.y });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        self.bounds = Some((lo, hi));
        Ok((lo, hi))
    }

    /// One value per triangle, taken at its centroid.
    pub fn sample_on_mesh(&self, mesh: &TriMesh) -> Result<Vec<f64>> {
        let vals: Vec<f64> = (0..mesh.num_triangles()).into_par_iter().map(|t| self.eval(mesh.centroid(t))).collect();
        if let Some((t, &v)) = vals.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            let c = mesh.centroid(t);
            return Err(Error::NonElliptic { value: v, x: c.x, y: c.y });
        }
        Ok(vals)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            FieldKind::AnalyticPeriodic { eps } => format!("periodic(eps={eps})"),
            FieldKind::Constant(c) => format!("constant({c})"),
            FieldKind::Layered { mean, amplitude, period, axis } => {
                format!("layered(mean={mean},amp={amplitude},period={period},axis={axis})")
            }
            FieldKind::Grid(g) => match g.lognormal {
                Some(p) => format!("lognormal(n={},var={},l1={},l2={},seed={})", p.n, p.variance, p.l1, p.l2, p.seed),
                None => format!("grid(n={})", g.n),
            },
        }
    }
}

/// Log-normal random field by moving ellipse average of white noise.
///
/// Standard normals are drawn on the cell grid; each cell takes the mean of
/// the noise over cells whose centers lie in the ellipse with semi-axes
/// (l₁, l₂) around its own center (truncated at the grid edge). The smoothed
/// field is shifted and scaled to zero sample mean and sample variance σ²
/// (population normalization), then exponentiated.
pub fn generate_lognormal(params: LognormalParams, region: GridBox) -> Result<CoefficientField> {
    let LognormalParams { n, variance, l1, l2, seed } = params;
    if n == 0 || !(variance >= 0.0) || !(l1 > 0.0) || !(l2 > 0.0) {
        return Err(Error::Config(format!("invalid log-normal parameters {params:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();

    let h = region.side / n as f64;
    let ri = (l1 / h).floor() as i64;
    let rj = (l2 / h).floor() as i64;
    let mut offsets = Vec::new();
    for dj in -rj..=rj {
        for di in -ri..=ri {
            let (x, y) = (di as f64 * h / l1, dj as f64 * h / l2);
            if x * x + y * y <= 1.0 + 1e-12 {
                offsets.push((di, dj));
            }
        }
    }
    if offsets.len() == 1 {
        log::warn!("correlation ellipse ({l1}, {l2}) is smaller than one grid cell ({h}); smoothing is the identity");
    }
    let ni = n as i64;
    let smooth: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|c| {
            let (i, j) = ((c % n) as i64, (c / n) as i64);
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for &(di, dj) in &offsets {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && a < ni && b < ni {
                    sum += noise[(b * ni + a) as usize];
                    cnt += 1;
                }
            }
            sum / cnt as f64
        })
        .collect();
    let mean = smooth.iter().sum::<f64>() / smooth.len() as f64;
    let var = smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / smooth.len() as f64;
    let scale = if var > 0.0 { (variance / var).sqrt() } else { 0.0 };
    let values = smooth.iter().map(|v| ((v - mean) * scale).exp()).collect();
    let mut g = GridField::new(n, region, values);
    g.lognormal = Some(params);
    let mut field = CoefficientField::grid(g);
    if let FieldKind::Grid(g) = &field.kind {
        let lo = g.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = g.values.iter().cloned().fold(0.0, f64::max);
        field.bounds = Some((lo, hi));
    }
    Ok(field)
}
