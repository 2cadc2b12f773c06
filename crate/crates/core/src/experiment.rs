//! Config-driven experiments: one fine reference, several coarse methods,
//! one CSV row per method and sweep value.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{relative_errors, ErrorReport, CSV_HEADER};
use crate::broken::BrokenFunction;
use crate::coefficient::{generate_lognormal, CoefficientField, GridBox, LognormalParams, RNG_NAME};
use crate::conforming::{solve_coarse_fem, solve_mspgm};
use crate::dg::{assemble_components, DgComponents, DgSpace, PenaltyConfig, RhoMode, Scheme};
use crate::error::{Error, Result};
use crate::fem::{reference_on_mesh, P1Function, MIN_CELLS_PER_PERIOD};
use crate::func::ScalarFn;
use crate::linalg::{solve_sparse, SolverConfig, SolverKind};
use crate::mesh::{build_structured_mesh, Domain, NestedMeshes, TriMesh};
use crate::msbasis::{BasisSet, BasisSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "FEM")]
    Fem,
    #[serde(rename = "DFEM")]
    Dfem,
    #[serde(rename = "MsPGM")]
    MsPgm,
    #[serde(rename = "OMsPGM")]
    OMsPgm,
    #[serde(rename = "MsDFEM")]
    MsDfem,
    #[serde(rename = "MsDPGM")]
    MsDpgm,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Fem, Method::Dfem, Method::MsPgm, Method::OMsPgm, Method::MsDfem, Method::MsDpgm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fem => "FEM",
            Method::Dfem => "DFEM",
            Method::MsPgm => "MsPGM",
            Method::OMsPgm => "OMsPGM",
            Method::MsDfem => "MsDFEM",
            Method::MsDpgm => "MsDPGM",
        }
    }

    pub fn is_discontinuous(self) -> bool {
        matches!(self, Method::Dfem | Method::MsDfem | Method::MsDpgm)
    }

    pub fn is_multiscale(self) -> bool {
        !matches!(self, Method::Fem | Method::Dfem)
    }

    pub fn is_oversampled(self) -> bool {
        matches!(self, Method::OMsPgm | Method::MsDfem | Method::MsDpgm)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

/// Parse a comma-separated method list.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Periodic { eps: f64 },
    Constant { value: f64 },
    Layered { mean: f64, amplitude: f64, period: f64, axis: usize },
    /// Seeded by the run's `seed`; `n` defaults to the fine resolution over
    /// the domain's bounding box.
    Lognormal { variance: f64, l1: f64, l2: f64, n: Option<usize> },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Periodic { eps: 0.05 }
    }
}

/// Oversampling patch size, given one of three equivalent ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchSize {
    /// Patch legs are this multiple of the element legs.
    Factor(f64),
    /// d̃ = δ₀ h.
    Delta0(f64),
    /// d̃ in domain units.
    Dtilde(f64),
}

impl Default for PatchSize {
    fn default() -> Self {
        PatchSize::Factor(4.0)
    }
}

impl PatchSize {
    /// d̃ in fine cells for coarse-to-fine ratio `m` and `fine_n` cells per unit.
    pub fn cells(self, m: usize, fine_n: usize) -> Result<usize> {
        let c = match self {
            PatchSize::Factor(f) if f >= 1.0 => (f - 1.0) * m as f64 / 3.0,
            PatchSize::Delta0(d) if d >= 0.0 => d * m as f64,
            PatchSize::Dtilde(d) if d >= 0.0 => d * fine_n as f64,
            _ => return Err(Error::Config(format!("invalid patch size {self:?}"))),
        };
        Ok(c.round() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DirichletSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `r^exponent sin(2θ/3)` about the reentrant corner.
    CornerSingular {
        exponent: f64,
    },
}

impl DirichletSpec {
    pub fn to_fn(self) -> ScalarFn {
        match self {
            DirichletSpec::Zero => ScalarFn::zero(),
            DirichletSpec::Constant { value } => ScalarFn::Constant(value),
            DirichletSpec::CornerSingular { exponent } => ScalarFn::CornerSingular { exponent },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Gamma0,
    H,
    Delta0,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma0" => Ok(SweepParam::Gamma0),
            "h" => Ok(SweepParam::H),
            "delta0" => Ok(SweepParam::Delta0),
            _ => Err(Error::Parse(format!("unknown sweep parameter `{s}` (expected gamma0, h or delta0)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub kind: SolverKind,
    pub direct_budget: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self { tol: d.tol, max_iter: d.max_iter, kind: d.kind, direct_budget: d.direct_budget }
    }
}

impl From<SolverSettings> for SolverConfig {
    fn from(s: SolverSettings) -> Self {
        SolverConfig { tol: s.tol, max_iter: s.max_iter, kind: s.kind, direct_budget: s.direct_budget }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: Domain,
    pub field: FieldSpec,
    pub coarse_n: usize,
    pub fine_n: usize,
    pub methods: Vec<Method>,
    pub penalty: PenaltyConfig,
    pub patch: PatchSize,
    /// Constant source term f.
    pub source: f64,
    pub dirichlet: DirichletSpec,
    pub sweep: Option<SweepSpec>,
    pub solver: SolverSettings,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Write T1/T2 into the CSV. Off by default so that output is byte-stable.
    pub record_timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: Domain::UnitSquare,
            field: FieldSpec::default(),
            coarse_n: 32,
            fine_n: 320,
            methods: Method::ALL.to_vec(),
            penalty: PenaltyConfig::default(),
            patch: PatchSize::default(),
            source: 1.0,
            dirichlet: DirichletSpec::Zero,
            sweep: None,
            solver: SolverSettings::default(),
            seed: 0,
            out: None,
            record_timings: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the serialized config, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    /// Coarse resolutions used by the run.
    pub fn coarse_levels(&self) -> Result<Vec<usize>> {
        match &self.sweep {
            Some(SweepSpec { param: SweepParam::H, values }) => values
                .iter()
                .map(|&h| {
                    let n = (1.0 / h).round();
                    if !(h > 0.0) || (n * h - 1.0).abs() > 1e-9 {
                        Err(Error::Config(format!("sweep value h = {h} is not 1/n for an integer n")))
                    } else {
                        Ok(n as usize)
                    }
                })
                .collect(),
            _ => Ok(vec![self.coarse_n]),
        }
    }

    /// Reject inconsistent configurations before any solve.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.fine_n == 0 {
            return Err(Error::Config("fine_n must be positive".into()));
        }
        for cn in self.coarse_levels()? {
            if cn == 0 || self.fine_n % cn != 0 {
                return Err(Error::NonNested { coarse: cn, fine: self.fine_n });
            }
            if self.methods.iter().any(|m| m.is_multiscale()) && self.fine_n == cn {
                return Err(Error::Config(format!(
                    "multiscale methods need a fine mesh finer than the coarse one (both have n = {cn})"
                )));
            }
        }
        match self.field {
            FieldSpec::Periodic { eps } | FieldSpec::Layered { period: eps, .. } => {
                if !(eps > 0.0) {
                    return Err(Error::Config(format!("oscillation period must be positive, got {eps}")));
                }
                if eps * (self.fine_n as f64) < MIN_CELLS_PER_PERIOD {
                    return Err(Error::Config(format!(
                        "fine mesh under-resolves the period: eps * fine_n = {} < {MIN_CELLS_PER_PERIOD}",
                        eps * self.fine_n as f64
                    )));
                }
            }
            FieldSpec::Constant { value } if !(value > 0.0) => {
                return Err(Error::Config(format!("constant coefficient must be positive, got {value}")));
            }
            FieldSpec::Lognormal { variance, l1, l2, n } => {
                if !(variance >= 0.0) || !(l1 > 0.0) || !(l2 > 0.0) || n == Some(0) {
                    return Err(Error::Config("log-normal field needs variance ≥ 0, l1, l2 > 0 and n ≥ 1".into()));
                }
            }
            _ => {}
        }
        self.penalty.validate()?;
        let dg = self.methods.iter().any(|m| m.is_discontinuous());
        if dg && self.penalty.rho == RhoMode::Epsilon && !matches!(self.field, FieldSpec::Periodic { .. } | FieldSpec::Layered { .. }) {
            return Err(Error::Config("rho = eps needs a periodic field".into()));
        }
        self.patch.cells(1, self.fine_n)?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config("sweep values must be finite and nonnegative".into()));
            }
            if s.param == SweepParam::Gamma0 {
                for &g in &s.values {
                    PenaltyConfig { gamma0: g, ..self.penalty }.validate()?;
                }
            }
        }
        if self.solver.tol <= 0.0 || self.solver.max_iter == 0 {
            return Err(Error::Config("solver tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }

    pub fn build_field(&self) -> Result<CoefficientField> {
        Ok(match self.field {
            FieldSpec::Periodic { eps } => CoefficientField::periodic(eps),
            FieldSpec::Constant { value } => CoefficientField::constant(value),
            FieldSpec::Layered { mean, amplitude, period, axis } => {
                if axis > 1 {
                    return Err(Error::Config(format!("layer axis must be 0 or 1, got {axis}")));
                }
                CoefficientField::layered(mean, amplitude, period, axis)
            }
            FieldSpec::Lognormal { variance, l1, l2, n } => {
                let (ux, uy) = self.domain.units();
                let n = n.unwrap_or(ux.max(uy) * self.fine_n);
                generate_lognormal(LognormalParams { n, variance, l1, l2, seed: self.seed }, GridBox::of(self.domain))?
            }
        })
    }

    fn eps_or_seed(&self) -> String {
        match self.field {
            FieldSpec::Periodic { eps } => format!("{eps}"),
            FieldSpec::Layered { period, .. } => format!("{period}"),
            FieldSpec::Lognormal { .. } => format!("seed={}", self.seed),
            FieldSpec::Constant { .. } => "-".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum BasisKey {
    Linear,
    Classical,
    Oversampled(usize),
}

impl BasisKey {
    fn spec(self) -> BasisSpec {
        match self {
            BasisKey::Linear => BasisSpec::Linear,
            BasisKey::Classical => BasisSpec::Classical,
            BasisKey::Oversampled(cells) => BasisSpec::Oversampled { cells },
        }
    }
}

/// A method's solution on the fine grid.
#[derive(Debug, Clone)]
pub struct MethodSolution {
    pub method: Method,
    pub fine: BrokenFunction,
    /// Coefficient vector: three per element for discontinuous methods, one
    /// per coarse node otherwise.
    pub dofs: Vec<f64>,
    pub space: Option<DgSpace>,
    /// Oversampling distance d̃ in fine cells, where applicable.
    pub cells: Option<usize>,
    pub t1: f64,
    pub t2: f64,
}

/// Parameters of one method run inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub coarse_n: usize,
    pub penalty: PenaltyConfig,
    pub patch: PatchSize,
}

/// Shared state of a run: field, fine mesh, reference and caches.
pub struct Experiment {
    pub config: RunConfig,
    pub field: CoefficientField,
    pub fine: Arc<TriMesh>,
    pub coef: Vec<f64>,
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub reference: P1Function,
    pub solver: SolverConfig,
    meshes: HashMap<usize, NestedMeshes>,
    bases: HashMap<(usize, BasisKey), Arc<BasisSet>>,
    components: HashMap<(usize, BasisKey, Scheme), (Arc<DgComponents>, f64)>,
}

/// Process-wide cache of fine reference solutions keyed by domain, field,
/// resolution, data and tolerance.
fn reference_cache() -> &'static std::sync::Mutex<HashMap<String, (Arc<TriMesh>, Vec<f64>, P1Function)>> {
    static CACHE: std::sync::OnceLock<std::sync::Mutex<HashMap<String, (Arc<TriMesh>, Vec<f64>, P1Function)>>> = std::sync::OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Drop every cached reference solution.
pub fn clear_reference_cache() {
    reference_cache().lock().unwrap().clear();
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let field = config.build_field()?;
        let solver: SolverConfig = config.solver.into();
        let f = ScalarFn::Constant(config.source);
        let g = config.dirichlet.to_fn();
        let key = format!(
            "{:?}|{}|{}|{}|{:?}|{:e}",
            config.domain,
            field.describe(),
            config.fine_n,
            config.source,
            config.dirichlet,
            solver.tol
        );
        let cached = reference_cache().lock().unwrap().get(&key).cloned();
        let (fine, coef, reference) = match cached {
            Some(c) => c,
            None => {
                let t = Instant::now();
                let fine = Arc::new(build_structured_mesh(config.domain, config.fine_n));
                let coef = field.sample_on_mesh(&fine)?;
                let (reference, stats) = reference_on_mesh(fine.clone(), &coef, &f, &g, &solver)?;
                info!(
                    "reference: {} nodes, {} iterations, {:.2}s",
                    fine.num_nodes(),
                    stats.iterations,
                    t.elapsed().as_secs_f64()
                );
                let entry = (fine, coef, reference);
                reference_cache().lock().unwrap().insert(key, entry.clone());
                entry
            }
        };
        Ok(Self {
            config,
            field,
            fine,
            coef,
            f,
            g,
            reference,
            solver,
            meshes: HashMap::new(),
            bases: HashMap::new(),
            components: HashMap::new(),
        })
    }

    pub fn meshes(&mut self, coarse_n: usize) -> Result<NestedMeshes> {
        if let Some(m) = self.meshes.get(&coarse_n) {
            return Ok(m.clone());
        }
        let coarse = Arc::new(build_structured_mesh(self.config.domain, coarse_n));
        let m = NestedMeshes::new(coarse, self.fine.clone())?;
        self.meshes.insert(coarse_n, m.clone());
        Ok(m)
    }

    fn basis(&mut self, coarse_n: usize, key: BasisKey) -> Result<Arc<BasisSet>> {
        if let Some(b) = self.bases.get(&(coarse_n, key)) {
            return Ok(b.clone());
        }
        let meshes = self.meshes(coarse_n)?;
        let t = Instant::now();
        let b = Arc::new(BasisSet::build(&meshes, &self.coef, key.spec())?);
        info!("basis {key:?} on {coarse_n}x{coarse_n}: {:.2}s", t.elapsed().as_secs_f64());
        self.bases.insert((coarse_n, key), b.clone());
        Ok(b)
    }

    fn components(&mut self, coarse_n: usize, key: BasisKey, scheme: Scheme) -> Result<(DgSpace, Arc<DgComponents>, f64)> {
        let space = DgSpace::new(self.basis(coarse_n, key)?);
        if let Some((c, t)) = self.components.get(&(coarse_n, key, scheme)) {
            return Ok((space, c.clone(), *t));
        }
        let t = Instant::now();
        let c = Arc::new(assemble_components(&space, &self.coef, scheme, &self.f, &self.g)?);
        let el = t.elapsed().as_secs_f64();
        self.components.insert((coarse_n, key, scheme), (c.clone(), el));
        Ok((space, c, el))
    }

    /// Fine cells of d̃ for the given parameters.
    pub fn patch_cells(&mut self, p: &MethodParams) -> Result<usize> {
        let m = self.meshes(p.coarse_n)?.map.ratio;
        p.patch.cells(m, self.config.fine_n)
    }

    pub fn solve(&mut self, method: Method, p: &MethodParams) -> Result<MethodSolution> {
        let cells = self.patch_cells(p)?;
        let meshes = self.meshes(p.coarse_n)?;
        let h = meshes.coarse.h;
        match method {
            Method::Fem => {
                let t = Instant::now();
                let s = solve_coarse_fem(&meshes, &self.coef, &self.f, &self.g, &self.solver)?;
                Ok(MethodSolution { method, fine: s.fine, dofs: s.nodal, space: None, cells: None, t1: 0.0, t2: t.elapsed().as_secs_f64() })
            }
            Method::MsPgm | Method::OMsPgm => {
                let key = if method == Method::MsPgm { BasisKey::Classical } else { BasisKey::Oversampled(cells) };
                let basis = self.basis(p.coarse_n, key)?;
                let t = Instant::now();
                let s = solve_mspgm(&basis, &self.coef, &self.f, &self.g, &self.solver)?;
                Ok(MethodSolution {
                    method,
                    fine: s.fine,
                    dofs: s.nodal,
                    space: None,
                    cells: (method == Method::OMsPgm).then_some(cells),
                    t1: 0.0,
                    t2: t.elapsed().as_secs_f64(),
                })
            }
            Method::Dfem | Method::MsDfem | Method::MsDpgm => {
                let (key, scheme) = match method {
                    Method::Dfem => (BasisKey::Linear, Scheme::Galerkin),
                    Method::MsDfem => (BasisKey::Oversampled(cells), Scheme::Galerkin),
                    _ => (BasisKey::Oversampled(cells), Scheme::PetrovGalerkin),
                };
                let pen = p.penalty.resolve(h, self.field.eps())?;
                let (space, comps, t_asm) = self.components(p.coarse_n, key, scheme)?;
                let t = Instant::now();
                let sys = comps.system(&space, &pen);
                let t1 = t_asm + t.elapsed().as_secs_f64();
                let t = Instant::now();
                let (x, _) = solve_sparse(&sys, &self.solver)?;
                let t2 = t.elapsed().as_secs_f64();
                Ok(MethodSolution {
                    method,
                    fine: space.expand(&x),
                    dofs: x,
                    space: Some(space),
                    cells: (method != Method::Dfem).then_some(cells),
                    t1,
                    t2,
                })
            }
        }
    }

    /// Solve and compare against the reference; failures become marked rows.
    pub fn report(&mut self, method: Method, p: &MethodParams) -> (ErrorReport, Option<MethodSolution>) {
        let h = 1.0 / p.coarse_n as f64;
        let dg = method.is_discontinuous();
        let mut row = ErrorReport {
            method: method.name().into(),
            h,
            eps_or_seed: self.config.eps_or_seed(),
            beta: dg.then_some(p.penalty.beta),
            gamma0: dg.then_some(p.penalty.gamma0),
            rho_mode: dg.then(|| p.penalty.rho.as_str().to_string()),
            factor: None,
            errors: None,
            t1: 0.0,
            t2: 0.0,
        };
        let result = self.solve(method, p).and_then(|s| {
            let e = relative_errors(&s.fine, &self.reference, &self.coef)?;
            if !(e.l2.is_finite() && e.linf.is_finite() && e.energy.is_finite()) {
                return Err(Error::Config(format!("{method} produced non-finite errors")));
            }
            Ok((s, e))
        });
        match result {
            Ok((s, e)) => {
                if let (Some(cells), Ok(m)) = (s.cells, self.meshes(p.coarse_n)) {
                    row.factor = Some(1.0 + 3.0 * cells as f64 / m.map.ratio as f64);
                }
                row.errors = Some(e);
                row.t1 = s.t1;
                row.t2 = s.t2;
                info!("{method}: L2 {:.4e} Linf {:.4e} energy {:.4e}", e.l2, e.linf, e.energy);
                (row, Some(s))
            }
            Err(err) => {
                warn!("{method} failed: {err}");
                (row, None)
            }
        }
    }

    pub fn base_params(&self) -> MethodParams {
        MethodParams { coarse_n: self.config.coarse_n, penalty: self.config.penalty, patch: self.config.patch }
    }
}

/// Rows of a run plus the CSV text.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ErrorReport>,
    pub csv: String,
}

impl RunOutput {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.is_failed()).count()
    }

    pub fn row(&self, method: Method) -> Option<&ErrorReport> {
        self.rows.iter().find(|r| r.method == method.name())
    }

    /// Write `name` into the configured output directory, if any.
    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let p = dir.join(name);
        std::fs::write(&p, &self.csv)?;
        Ok(p)
    }
}

fn render_csv(cfgs: &[&RunConfig], rows: &[ErrorReport], dtildes: &[f64]) -> String {
    let cfg = cfgs[0];
    let mut s = String::new();
    writeln!(s, "# msdpg {VERSION}").unwrap();
    let hashes: Vec<String> = cfgs.iter().map(|c| c.hash()).collect();
    writeln!(s, "# config_sha256 {}", hashes.join(" ")).unwrap();
    let seeds: Vec<String> = cfgs.iter().map(|c| c.seed.to_string()).collect();
    writeln!(s, "# seed {}", seeds.join(" ")).unwrap();
    writeln!(s, "# rng {RNG_NAME}").unwrap();
    writeln!(s, "# rho_mode {}", cfg.penalty.rho.as_str()).unwrap();
    let mut d: Vec<String> = dtildes.iter().map(|x| format!("{x}")).collect();
    d.dedup();
    writeln!(s, "# dtilde {}", if d.is_empty() { "-".into() } else { d.join(" ") }).unwrap();
    writeln!(s, "# domain {:?} fine_n {} tol {:e}", cfg.domain, cfg.fine_n, cfg.solver.tol).unwrap();
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(s, "{}", r.to_csv_row(cfg.record_timings)).unwrap();
    }
    s
}

fn collect(exp: &mut Experiment, params: &[MethodParams], rows: &mut Vec<ErrorReport>, dtildes: &mut Vec<f64>) -> Result<()> {
    let methods = exp.config.methods.clone();
    for p in params {
        for &m in &methods {
            let (row, sol) = exp.report(m, p);
            if let Some(c) = sol.and_then(|s| s.cells) {
                dtildes.push(c as f64 / exp.config.fine_n as f64);
            }
            rows.push(row);
        }
    }
    Ok(())
}

/// One row per method at the configured parameters.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutput> {
    let mut exp = Experiment::new(config.clone())?;
    let mut rows = Vec::new();
    let mut dtildes = Vec::new();
    let p = exp.base_params();
    collect(&mut exp, &[p], &mut rows, &mut dtildes)?;
    Ok(RunOutput { csv: render_csv(&[config], &rows, &dtildes), rows })
}

/// One row per sweep value per method, in sweep order, sharing the reference
/// and all caches.
pub fn run_sweep(config: &RunConfig) -> Result<RunOutput> {
    let sweep = config.sweep.clone().ok_or_else(|| Error::Config("run_sweep needs a sweep section".into()))?;
    let mut exp = Experiment::new(config.clone())?;
    let base = exp.base_params();
    let levels = config.coarse_levels()?;
    let params: Vec<MethodParams> = sweep
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| match sweep.param {
            SweepParam::Gamma0 => MethodParams { penalty: PenaltyConfig { gamma0: v, ..base.penalty }, ..base },
            SweepParam::H => MethodParams { coarse_n: levels[i], ..base },
            SweepParam::Delta0 => MethodParams { patch: PatchSize::Delta0(v), ..base },
        })
        .collect();
    let mut rows = Vec::new();
    let mut dtildes = Vec::new();
    collect(&mut exp, &params, &mut rows, &mut dtildes)?;
    Ok(RunOutput { csv: render_csv(&[config], &rows, &dtildes), rows })
}

/// L-shape runs; one block of rows per seed for random fields.
pub fn run_lshape(config: &RunConfig, seeds: &[u64]) -> Result<RunOutput> {
    if config.domain != Domain::LShape {
        return Err(Error::Config("run_lshape needs domain = \"l-shape\"".into()));
    }
    let seeds: Vec<u64> = if seeds.is_empty() || !matches!(config.field, FieldSpec::Lognormal { .. }) {
        vec![config.seed]
    } else {
        seeds.to_vec()
    };
    let cfgs: Vec<RunConfig> = seeds.iter().map(|&s| RunConfig { seed: s, ..config.clone() }).collect();
    let mut rows = Vec::new();
    let mut dtildes = Vec::new();
    for c in &cfgs {
        let mut exp = Experiment::new(c.clone())?;
        let p = exp.base_params();
        collect(&mut exp, &[p], &mut rows, &mut dtildes)?;
    }
    let refs: Vec<&RunConfig> = cfgs.iter().collect();
    Ok(RunOutput { csv: render_csv(&refs, &rows, &dtildes), rows })
}

/// Defaults of the L-shape study: corner-singular data, f = 0, h = 1/16.
pub fn lshape_defaults() -> RunConfig {
    RunConfig {
        domain: Domain::LShape,
        coarse_n: 16,
        fine_n: 160,
        source: 0.0,
        dirichlet: DirichletSpec::CornerSingular { exponent: 2.0 / 3.0 },
        methods: vec![Method::MsPgm, Method::OMsPgm, Method::MsDfem, Method::MsDpgm],
        ..RunConfig::default()
    }
}
