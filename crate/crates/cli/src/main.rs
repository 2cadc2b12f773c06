use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use msdpg::coefficient::{generate_lognormal, CoefficientField, FieldKind, GridBox, LognormalParams};
use msdpg::dg::RhoMode;
use msdpg::experiment::{
    lshape_defaults, parse_methods, run_experiment, run_lshape, run_sweep, FieldSpec, PatchSize, RunConfig, RunOutput,
    SweepParam, SweepSpec,
};
use msdpg::homogenization::solve_cell_problem;
use msdpg::linalg::SolverConfig;
use msdpg::mesh::{build_patch_with_cells, build_structured_mesh, Domain, NestedMeshes, Point};
use msdpg::msbasis::{compute_classical_basis, compute_oversampling_basis};
use msdpg::render;

/// Multiscale elliptic solvers on structured triangulations.
#[derive(Parser)]
#[command(name = "msdpg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method once against the fine reference.
    Solve(Overrides),
    /// Run a one-parameter sweep (gamma0, h or delta0).
    Sweep {
        #[command(flatten)]
        common: Overrides,
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long)]
        values: Option<String>,
    },
    /// The L-shaped domain study.
    Lshape {
        #[command(flatten)]
        common: Overrides,
        /// Use a log-normal field instead of the periodic one.
        #[arg(long)]
        random: bool,
        /// Comma-separated seeds for the random field.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Generate a log-normal field and write it with a heat map.
    RandomField {
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
        #[arg(long, default_value_t = 0.01)]
        l1: f64,
        #[arg(long, default_value_t = 0.01)]
        l2: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "unit-square")]
        domain: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve the periodic cell problems and print the effective tensor.
    CellProblem {
        /// periodic, or layered for a(y) = 2 + 1.8 sin(2πy₁)
        #[arg(long, default_value = "periodic")]
        field: String,
        #[arg(long, default_value_t = 128)]
        n_cell: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the three basis functions of one coarse element.
    DumpBasis {
        #[command(flatten)]
        common: Overrides,
        #[arg(long, default_value_t = 0)]
        element: usize,
        /// oversampled or classical
        #[arg(long, default_value = "oversampled")]
        kind: String,
    },
    /// Write a mesh in plain text.
    DumpMesh {
        #[arg(long, default_value = "unit-square")]
        domain: String,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    coarse_n: Option<usize>,
    #[arg(long)]
    fine_n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    /// eps or h
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    factor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated, e.g. MsDPGM,OMsPGM
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timings in the CSV.
    #[arg(long)]
    timings: bool,
}

impl Overrides {
    fn apply(&self, mut c: RunConfig) -> Result<RunConfig> {
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            c = RunConfig::from_toml(&text)?;
        }
        if let Some(eps) = self.eps {
            c.field = FieldSpec::Periodic { eps };
        }
        if let Some(n) = self.coarse_n {
            c.coarse_n = n;
        }
        if let Some(n) = self.fine_n {
            c.fine_n = n;
        }
        if let Some(b) = self.beta {
            c.penalty.beta = b;
        }
        if let Some(g) = self.gamma0 {
            c.penalty.gamma0 = g;
        }
        if let Some(r) = &self.rho {
            c.penalty.rho = r.parse::<RhoMode>()?;
        }
        if let Some(f) = self.factor {
            c.patch = PatchSize::Factor(f);
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(m) = &self.methods {
            c.methods = parse_methods(m)?;
        }
        if let Some(o) = &self.out {
            c.out = Some(o.clone());
        }
        c.record_timings |= self.timings;
        c.validate()?;
        Ok(c)
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad list entry `{p}`: {e}")))
        .collect()
}

fn parse_domain(s: &str) -> Result<Domain> {
    match s {
        "unit-square" | "square" => Ok(Domain::UnitSquare),
        "l-shape" | "lshape" => Ok(Domain::LShape),
        _ => bail!("unknown domain `{s}` (expected unit-square or l-shape)"),
    }
}

fn finish(out: &RunOutput, cfg: &RunConfig, name: &str) -> Result<Outcome> {
    print!("{}", out.csv);
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let p = out.write(&dir, name)?;
    info!("wrote {}", p.display());
    Ok(if out.failed() > 0 { Outcome::Partial } else { Outcome::Ok })
}

enum Outcome {
    Ok,
    Partial,
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    info!("wrote {}", p.display());
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Solve(o) => {
            let cfg = o.apply(RunConfig::default())?;
            finish(&run_experiment(&cfg)?, &cfg, "solve.csv")
        }
        Command::Sweep { common, param, values } => {
            let mut cfg = common.apply(RunConfig::default())?;
            if let Some(p) = param {
                let param: SweepParam = p.parse()?;
                let values = match values {
                    Some(v) => parse_list(&v)?,
                    None => bail!("--param needs --values"),
                };
                cfg.sweep = Some(SweepSpec { param, values });
            }
            if cfg.sweep.is_none() {
                bail!("no sweep given; use --param/--values or a [sweep] section");
            }
            cfg.validate()?;
            finish(&run_sweep(&cfg)?, &cfg, "sweep.csv")
        }
        Command::Lshape { common, random, seeds } => {
            let mut base = lshape_defaults();
            if random {
                base.field = FieldSpec::Lognormal { variance: 1.0, l1: 0.01, l2: 0.01, n: None };
                base.penalty.rho = RhoMode::CoarseH;
            }
            let cfg = common.apply(base)?;
            let seeds: Vec<u64> = match seeds {
                Some(s) => parse_list(&s)?,
                None => vec![],
            };
            finish(&run_lshape(&cfg, &seeds)?, &cfg, "lshape.csv")
        }
        Command::RandomField { n, variance, l1, l2, seed, domain, out } => {
            let domain = parse_domain(&domain)?;
            let region = GridBox::of(domain);
            let field = generate_lognormal(LognormalParams { n, variance, l1, l2, seed }, region)?;
            let FieldKind::Grid(g) = &field.kind else { unreachable!() };
            write(&out, "field.txt", g.to_text())?;
            let logs: Vec<Option<f64>> = g.values.iter().map(|v| Some(v.ln())).collect();
            write(&out, "field.pgm", render::pgm(n, n, &logs))?;
            let px = n.min(128);
            let o = Point::new(region.origin[0], region.origin[1]);
            let raster = render::sample_square(o, region.side, px, |p| domain.contains(p).then(|| field.eval(p).ln()));
            write(&out, "field.svg", render::svg_raster(px, &raster, "log a"))?;
            let (lo, hi) = field.bounds.unwrap();
            println!("n {n} variance {variance} seed {seed}: a in [{lo:.4e}, {hi:.4e}], ratio {:.4e}", hi / lo);
            Ok(Outcome::Ok)
        }
        Command::CellProblem { field, n_cell, out } => {
            let f = match field.as_str() {
                "periodic" => CoefficientField::periodic(1.0),
                "layered" => CoefficientField::layered(2.0, 1.8, 1.0, 0),
                _ => bail!("unknown cell field `{field}` (expected periodic or layered)"),
            };
            let cell = solve_cell_problem(&f, n_cell, &SolverConfig::default())?;
            let a = cell.a_star;
            println!("a* = [[{:.8}, {:.8}], [{:.8}, {:.8}]]", a[0][0], a[0][1], a[1][0], a[1][1]);
            for (j, chi) in cell.chi.iter().enumerate() {
                let mut s = String::new();
                for (p, v) in chi.mesh.nodes.iter().zip(&chi.values) {
                    s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p.x, p.y, v));
                }
                write(&out, &format!("chi{}.txt", j + 1), s)?;
                let px = n_cell.min(256);
                let r = render::sample_square(Point::origin(), 1.0, px, |p| chi.eval(p));
                write(&out, &format!("chi{}.pgm", j + 1), render::pgm(px, px, &r))?;
            }
            Ok(Outcome::Ok)
        }
        Command::DumpBasis { common, element, kind } => {
            let cfg = common.apply(RunConfig { methods: vec![msdpg::experiment::Method::OMsPgm], ..RunConfig::default() })?;
            let field = cfg.build_field()?;
            let meshes = NestedMeshes::structured(cfg.domain, cfg.coarse_n, cfg.fine_n)?;
            if element >= meshes.num_elements() {
                bail!("element {element} out of range (mesh has {})", meshes.num_elements());
            }
            let coef = field.sample_on_mesh(&meshes.fine)?;
            let e = match kind.as_str() {
                "oversampled" => {
                    let cells = cfg.patch.cells(meshes.map.ratio, cfg.fine_n)?;
                    compute_oversampling_basis(&meshes, &coef, &build_patch_with_cells(&meshes, element, cells)?)?
                }
                "classical" => compute_classical_basis(&meshes, &coef, element)?,
                _ => bail!("unknown basis kind `{kind}`"),
            };
            let cover = meshes.cover(element);
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let mut s = String::from("x y psi1 psi2 psi3\n");
            for (l, &g) in cover.nodes.iter().enumerate() {
                let p = meshes.fine.nodes[g];
                let v = e.values[l];
                s.push_str(&format!("{:.17e} {:.17e} {:.17e} {:.17e} {:.17e}\n", p.x, p.y, v[0], v[1], v[2]));
            }
            write(&dir, &format!("basis_{element}.txt"), s)?;
            for i in 0..3 {
                let vals: Vec<f64> = cover.local_tris.iter().map(|lt| lt.iter().map(|&l| e.values[l][i]).sum::<f64>() / 3.0).collect();
                let svg = render::svg_triangles(&meshes.fine, &cover.fine_tris, &vals, &format!("psi{} on element {element}", i + 1));
                write(&dir, &format!("basis_{element}_{}.svg", i + 1), svg)?;
            }
            if let Some(p) = &e.patch {
                println!("element {element}: factor {:.3}, dtilde {:.5}, d_K {:.5}, translated {}, shrunk {}", p.factor, p.dtilde, p.d_k, p.translated, p.shrunk);
            }
            println!("partition of unity defect {:.3e}", e.partition_of_unity_defect());
            Ok(Outcome::Ok)
        }
        Command::DumpMesh { domain, n, out } => {
            let m = build_structured_mesh(parse_domain(&domain)?, n);
            write(&out, &format!("mesh_{domain}_{n}.txt"), m.to_dump_string())?;
            println!("{} nodes, {} triangles, {} edges", m.num_nodes(), m.num_triangles(), m.num_edges());
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("some methods failed; see rows marked `failed`");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
