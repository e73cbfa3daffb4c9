//! Experiment configuration, the end-to-end pipeline and parameter sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::coarse::{assemble_particular, error_report, solve_coarse, CoarseSpace, ErrorReport, GfemSolution};
use crate::coefficient::{CellCoefficients, CoefficientField, SourceField};
use crate::decomposition::{Cover, PartitionOfUnity};
use crate::error::{MsgfemError, Result};
use crate::fem::mesh::StructuredMesh;
use crate::fem::solve::SolverOptions;
use crate::local::{solve_subdomain, LocalSolution};
use crate::validation::{fine_reference, FineSolution};

/// Column layout of every result CSV.
pub const CSV_HEADER: &str = "run_id,seed,n,N,ell,eps,nloc,contrast,kappa,kappa_star,coarse_dim,err_energy,err_rel,bound_thm21,t_local_s,t_coarse_s";

/// Embedded in every `run_id`.
pub const CODE_VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Right-hand side selection in the config file.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceChoice {
    Benchmark,
    Sine,
    Constant(f64),
}

impl SourceChoice {
    pub fn field(&self) -> SourceField {
        match self {
            SourceChoice::Benchmark => SourceField::benchmark(),
            SourceChoice::Sine => SourceField::SineProduct { amplitude: 1.0 },
            SourceChoice::Constant(c) => SourceField::Constant(*c),
        }
    }

    fn render(&self) -> String {
        match self {
            SourceChoice::Benchmark => "benchmark".into(),
            SourceChoice::Sine => "sine".into(),
            SourceChoice::Constant(c) => format!("constant:{c:?}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "benchmark" => Ok(SourceChoice::Benchmark),
            "sine" => Ok(SourceChoice::Sine),
            _ => match s.strip_prefix("constant:") {
                Some(v) => Ok(SourceChoice::Constant(parse_f64("source", v)?)),
                None => Err(MsgfemError::Config(format!("unknown source '{s}'"))),
            },
        }
    }
}

/// Everything a run or sweep needs. Round-trips through [`ExperimentConfig::to_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Subdomains per axis.
    pub per_axis: usize,
    pub ell: Vec<usize>,
    pub eps: Vec<f64>,
    pub nloc: Vec<usize>,
    pub seed: u64,
    pub s: f64,
    pub contrast: f64,
    /// Raster file replacing the synthetic coefficient.
    pub coefficient: Option<PathBuf>,
    pub source: SourceChoice,
    pub residual_tol: f64,
    pub cg_tol: f64,
    pub band_budget: usize,
    pub out: PathBuf,
    /// Zero means all available cores.
    pub workers: usize,
    /// Write measured timings into the CSV (breaks byte-identical reruns).
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            n: 256,
            per_axis: 8,
            ell: vec![8],
            eps: vec![0.1],
            nloc: (0..=30).collect(),
            seed: 42,
            s: 1.0 / 64.0,
            contrast: 1e4,
            coefficient: None,
            source: SourceChoice::Benchmark,
            residual_tol: solver.residual_tol,
            cg_tol: solver.cg_tol,
            band_budget: solver.band_budget,
            out: PathBuf::from("out"),
            workers: 0,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    /// Table-scale setup: `h = 10⁻³`, 10×10 subdomains, `s = 0.01`.
    pub fn full_scale() -> Self {
        Self {
            n: 1000,
            per_axis: 10,
            ell: vec![5, 10, 15, 20],
            eps: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            nloc: vec![0],
            s: 0.01,
            ..Self::default()
        }
    }

    /// Basis-sweep setup at `h = 10⁻³` with 20×20 subdomains.
    pub fn full_scale_nloc() -> Self {
        Self {
            n: 1000,
            per_axis: 20,
            ell: vec![10],
            eps: vec![1e-1, 1e-4],
            nloc: (0..=30).collect(),
            s: 0.01,
            ..Self::default()
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { residual_tol: self.residual_tol, cg_tol: self.cg_tol, band_budget: self.band_budget }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MsgfemError::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.per_axis == 0 || !self.n.is_multiple_of(self.per_axis) {
            return bad(format!("N = {} must divide n = {}", self.per_axis, self.n));
        }
        if self.per_axis > 1 && self.n / self.per_axis < 4 {
            return bad(format!("cores of {} cells are narrower than the ramp band", self.n / self.per_axis));
        }
        if self.ell.is_empty() || self.eps.is_empty() || self.nloc.is_empty() {
            return bad("ell, eps and nloc lists must be nonempty".into());
        }
        if let Some(e) = self.eps.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return bad(format!("eps must lie in (0, 1], got {e}"));
        }
        if self.coefficient.is_none() {
            if !(self.contrast >= 1.0) || !self.contrast.is_finite() {
                return bad(format!("contrast must be >= 1, got {}", self.contrast));
            }
            crate::coefficient::micro_cells(self.s)?;
        }
        if !(self.residual_tol > 0.0) || !(self.cg_tol > 0.0) {
            return bad("solver tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "N = {}", self.per_axis);
        let _ = writeln!(s, "ell = {}", join(self.ell.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "eps = {}", join(self.eps.iter().map(|v| format!("{v:?}")).collect()));
        let _ = writeln!(s, "nloc = {}", join(self.nloc.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "s = {:?}", self.s);
        let _ = writeln!(s, "contrast = {:?}", self.contrast);
        let coef = self.coefficient.as_ref().map_or("synthetic".to_string(), |p| p.display().to_string());
        let _ = writeln!(s, "coefficient = {coef}");
        let _ = writeln!(s, "source = {}", self.source.render());
        let _ = writeln!(s, "residual_tol = {:?}", self.residual_tol);
        let _ = writeln!(s, "cg_tol = {:?}", self.cg_tol);
        let _ = writeln!(s, "band_budget = {}", self.band_budget);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "record_timing = {}", self.record_timing);
        s
    }

    /// Parse `key = value` lines over the defaults; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| MsgfemError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_usize(key, value)?,
            "N" => self.per_axis = parse_usize(key, value)?,
            "ell" => self.ell = parse_list(value, |v| parse_usize(key, v))?,
            "eps" => self.eps = parse_list(value, |v| parse_f64(key, v))?,
            "nloc" => self.nloc = parse_list(value, |v| parse_usize(key, v))?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| MsgfemError::Config(format!("seed: invalid value '{value}'")))?
            }
            "s" => self.s = parse_f64(key, value)?,
            "contrast" => self.contrast = parse_f64(key, value)?,
            "coefficient" => {
                self.coefficient = if value == "synthetic" { None } else { Some(PathBuf::from(value)) }
            }
            "source" => self.source = SourceChoice::parse(value)?,
            "residual_tol" => self.residual_tol = parse_f64(key, value)?,
            "cg_tol" => self.cg_tol = parse_f64(key, value)?,
            "band_budget" => self.band_budget = parse_usize(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = parse_usize(key, value)?,
            "record_timing" => {
                self.record_timing = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(MsgfemError::Config(format!("record_timing: invalid value '{value}'"))),
                }
            }
            _ => return Err(MsgfemError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        match &self.coefficient {
            Some(path) => CoefficientField::load(path),
            None => CoefficientField::generate_multiscale(self.seed, self.s, self.contrast),
        }
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| MsgfemError::Config(format!("{key}: invalid integer '{v}'")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse().map_err(|_| MsgfemError::Config(format!("{key}: invalid number '{v}'")))
}

fn parse_list<T>(value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty()).map(f).collect()
}

/// Thread pool with `workers` threads (zero: rayon's default).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| MsgfemError::Config(format!("cannot build worker pool: {e}")))
}

/// Cover, local solves, particular function and the largest coarse space
/// for one `(ε, ℓ)`; coarse solves for any `n_loc ≤ nloc_max` reuse it.
pub struct Pipeline {
    pub mesh: StructuredMesh,
    pub eps: f64,
    pub cover: Cover,
    pub pu: PartitionOfUnity,
    pub locals: Vec<LocalSolution>,
    pub particular: Vec<f64>,
    pub space: CoarseSpace,
    pub t_local: f64,
}

/// One coarse solve and its report.
pub struct Evaluation {
    pub gfem: GfemSolution,
    pub space: CoarseSpace,
    pub report: ErrorReport,
    pub t_coarse: f64,
}

impl Pipeline {
    /// Local solves run on the current rayon pool and are collected in
    /// subdomain order.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        mesh: &StructuredMesh,
        coeff: &CellCoefficients,
        f: &SourceField,
        eps: f64,
        per_axis: usize,
        ell: usize,
        nloc_max: usize,
    ) -> Result<Self> {
        let cover = Cover::build(mesh, per_axis, ell)?;
        let pu = PartitionOfUnity::build(&cover, mesh)?;
        let start = Instant::now();
        let locals = (0..cover.len())
            .into_par_iter()
            .map(|i| solve_subdomain(mesh, coeff, eps, &cover, &pu, f, i, nloc_max))
            .collect::<Result<Vec<_>>>()?;
        let t_local = start.elapsed().as_secs_f64();
        let particular = assemble_particular(mesh, &pu, &locals);
        let space = CoarseSpace::assemble(&pu, &locals, nloc_max)?;
        Ok(Self { mesh: *mesh, eps, cover, pu, locals, particular, space, t_local })
    }

    pub fn evaluate(&self, fine: &FineSolution, nloc: usize) -> Result<Evaluation> {
        let start = Instant::now();
        let space = self.space.truncate(nloc)?;
        let gfem = solve_coarse(&self.mesh, &fine.op, &fine.load, &space, &self.particular)?;
        let t_coarse = start.elapsed().as_secs_f64();
        let report = error_report(
            &self.mesh, &fine.op, &fine.u, &gfem, &self.cover, &self.pu, &self.locals, &space,
        )?;
        Ok(Evaluation { gfem, space, report, t_coarse })
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    pub n: usize,
    pub per_axis: usize,
    pub ell: usize,
    pub eps: f64,
    pub nloc: usize,
    pub contrast: f64,
    pub report: ErrorReport,
    pub t_local: f64,
    pub t_coarse: f64,
}

impl RunRecord {
    pub fn csv_row(&self, record_timing: bool) -> String {
        let t = |v: f64| if record_timing { format!("{v:.3}") } else { "0".to_string() };
        format!(
            "{},{},{},{},{},{:e},{},{:e},{},{},{},{:e},{:e},{:e},{},{}",
            self.run_id,
            self.seed,
            self.n,
            self.per_axis,
            self.ell,
            self.eps,
            self.nloc,
            self.contrast,
            self.report.kappa,
            self.report.kappa_star,
            self.report.coarse_dim,
            self.report.err_energy,
            self.report.err_rel,
            self.report.bound_thm21,
            t(self.t_local),
            t(self.t_coarse),
        )
    }
}

/// Rows of a sweep plus the points that failed.
#[derive(Debug, Default)]
pub struct Sweep {
    pub records: Vec<RunRecord>,
    pub failures: Vec<(String, MsgfemError)>,
    pub record_timing: bool,
}

impl Sweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row(self.record_timing));
            s.push('\n');
        }
        s
    }

    /// Per-point log lines, including timings and failures.
    pub fn log(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(
                s,
                "ok {} eps={:e} ell={} nloc={} err={:e} t_local={:.3}s t_coarse={:.3}s",
                r.run_id, r.eps, r.ell, r.nloc, r.report.err_energy, r.t_local, r.t_coarse
            );
        }
        for (point, e) in &self.failures {
            let _ = writeln!(s, "failed {point}: {e}");
        }
        s
    }
}

struct Sweeper<'a> {
    cfg: &'a ExperimentConfig,
    mesh: StructuredMesh,
    coeff: CellCoefficients,
    contrast: f64,
    f: SourceField,
    sweep: Sweep,
}

impl<'a> Sweeper<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = StructuredMesh::new(cfg.n)?;
        let field = cfg.coefficient_field()?;
        let coeff = field.sample(&mesh);
        Ok(Self {
            cfg,
            mesh,
            coeff,
            contrast: field.contrast(),
            f: cfg.source.field(),
            sweep: Sweep { record_timing: cfg.record_timing, ..Sweep::default() },
        })
    }

    fn fine(&self, eps: f64) -> Result<FineSolution> {
        fine_reference(&self.mesh, &self.coeff, eps, &self.f, &self.cfg.solver())
    }

    /// Run every `nloc` for one `(ε, ℓ)`, recording failures per point.
    fn run(&mut self, fine: &Result<FineSolution>, eps: f64, ell: usize, nlocs: &[usize]) {
        let label = |nloc: usize| format!("eps={eps:e} ell={ell} nloc={nloc}");
        let fine = match fine {
            Ok(f) => f,
            Err(e) => {
                for &nloc in nlocs {
                    self.sweep.failures.push((label(nloc), MsgfemError::NoConvergence(format!("fine reference: {e}"))));
                }
                return;
            }
        };
        let nmax = nlocs.iter().copied().max().unwrap_or(0);
        let pipeline =
            match Pipeline::build(&self.mesh, &self.coeff, &self.f, eps, self.cfg.per_axis, ell, nmax) {
                Ok(p) => p,
                Err(e) => {
                    for &nloc in nlocs {
                        self.sweep.failures.push((label(nloc), clone_error(&e)));
                    }
                    return;
                }
            };
        for &nloc in nlocs {
            match pipeline.evaluate(fine, nloc) {
                Ok(ev) => {
                    let run_id = format!("{CODE_VERSION}-{:04}", self.sweep.records.len() + self.sweep.failures.len());
                    self.sweep.records.push(RunRecord {
                        run_id,
                        seed: self.cfg.seed,
                        n: self.cfg.n,
                        per_axis: self.cfg.per_axis,
                        ell,
                        eps,
                        nloc,
                        contrast: self.contrast,
                        report: ev.report,
                        t_local: pipeline.t_local,
                        t_coarse: ev.t_coarse,
                    })
                }
                Err(e) => self.sweep.failures.push((label(nloc), e)),
            }
        }
    }
}

fn clone_error(e: &MsgfemError) -> MsgfemError {
    if e.is_config() {
        MsgfemError::Config(e.to_string())
    } else {
        MsgfemError::NoConvergence(e.to_string())
    }
}

fn in_pool<T: Send>(cfg: &ExperimentConfig, job: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(worker_pool(cfg.workers)?.install(job))
}

fn finish(sweeper: Sweeper) -> Sweep {
    sweeper.sweep
}

/// First entry of every list as a single point.
pub fn run_single(cfg: &ExperimentConfig) -> Result<RunRecord> {
    in_pool(cfg, || {
        let mut s = Sweeper::new(cfg)?;
        let (eps, ell, nloc) = (cfg.eps[0], cfg.ell[0], cfg.nloc[0]);
        let fine = s.fine(eps);
        s.run(&fine, eps, ell, &[nloc]);
        let mut sweep = finish(s);
        match sweep.failures.pop() {
            Some((_, e)) => Err(e),
            None => Ok(sweep.records.remove(0)),
        }
    })?
}

/// Rows `(ε, n_loc)` at `ℓ = ell[0]`.
pub fn sweep_nloc(cfg: &ExperimentConfig) -> Result<Sweep> {
    in_pool(cfg, || {
        let mut s = Sweeper::new(cfg)?;
        for &eps in &cfg.eps {
            let fine = s.fine(eps);
            s.run(&fine, eps, cfg.ell[0], &cfg.nloc);
        }
        Ok(finish(s))
    })?
}

/// Rows `(ε, ℓ)` with no local spectral basis.
pub fn sweep_oversampling(cfg: &ExperimentConfig) -> Result<Sweep> {
    in_pool(cfg, || {
        let mut s = Sweeper::new(cfg)?;
        for &eps in &cfg.eps {
            let fine = s.fine(eps);
            for &ell in &cfg.ell {
                s.run(&fine, eps, ell, &[0]);
            }
        }
        Ok(finish(s))
    })?
}

/// Rows `ε` at `ℓ = ell[0]`, `n_loc = nloc[0]`.
pub fn sweep_eps(cfg: &ExperimentConfig) -> Result<Sweep> {
    in_pool(cfg, || {
        let mut s = Sweeper::new(cfg)?;
        for &eps in &cfg.eps {
            let fine = s.fine(eps);
            s.run(&fine, eps, cfg.ell[0], &[cfg.nloc[0]]);
        }
        Ok(finish(s))
    })?
}

/// Least-squares line `y = slope·x + intercept` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// `None` with fewer than two points or no spread in `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit { slope, intercept, r_squared })
}

/// A parsed result row, as needed for plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub eps: f64,
    pub ell: usize,
    pub nloc: usize,
    pub err_energy: f64,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        Some(h) => return Err(MsgfemError::Parse(format!("unexpected header '{h}'"))),
        None => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(MsgfemError::Parse(format!("row {}: {} fields, expected 16", k + 1, fields.len())));
        }
        let bad = |c: &str| MsgfemError::Parse(format!("row {}: invalid {c}", k + 1));
        rows.push(CsvRow {
            ell: fields[4].parse().map_err(|_| bad("ell"))?,
            eps: fields[5].parse().map_err(|_| bad("eps"))?,
            nloc: fields[6].parse().map_err(|_| bad("nloc"))?,
            err_energy: fields[11].parse().map_err(|_| bad("err_energy"))?,
        });
    }
    Ok(rows)
}

/// Write `(x, log10 err)` files and fit files per `ε` curve of a result CSV.
///
/// The curve variable is `nloc` when it varies within the `ε` group and `ell`
/// otherwise. Each `.fit` file has a `semilog` line (fit against `x`) and a
/// `cuberoot` line (fit against `x^{1/3}`), each `slope intercept r2` or `NA`.
pub fn emit_plotdata(csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = parse_csv(&fs::read_to_string(csv)?)?;
    fs::create_dir_all(out_dir)?;
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep").to_string();
    let mut written = Vec::new();
    if rows.is_empty() {
        for ext in ["dat", "fit"] {
            let p = out_dir.join(format!("{stem}.{ext}"));
            fs::write(&p, "")?;
            written.push(p);
        }
        return Ok(written);
    }
    let mut groups: Vec<(f64, Vec<&CsvRow>)> = Vec::new();
    for r in &rows {
        match groups.iter_mut().find(|(e, _)| *e == r.eps) {
            Some((_, g)) => g.push(r),
            None => groups.push((r.eps, vec![r])),
        }
    }
    for (eps, group) in groups {
        let by_nloc = group.iter().any(|r| r.nloc != group[0].nloc);
        let axis = if by_nloc { "nloc" } else { "ell" };
        let points: Vec<(f64, f64)> = group
            .iter()
            .filter(|r| r.err_energy > 0.0)
            .map(|r| (if by_nloc { r.nloc } else { r.ell } as f64, r.err_energy.log10()))
            .collect();
        let base = format!("{stem}_eps{eps:e}_{axis}");
        let mut dat = String::new();
        for (x, y) in &points {
            let _ = writeln!(dat, "{x} {y:.12e}");
        }
        let dat_path = out_dir.join(format!("{base}.dat"));
        fs::write(&dat_path, dat)?;
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let cube: Vec<f64> = xs.iter().map(|x| x.cbrt()).collect();
        let line = |name: &str, fit: Option<LinearFit>| match fit {
            Some(f) => format!("{name} {:.12e} {:.12e} {:.6}\n", f.slope, f.intercept, f.r_squared),
            None => format!("{name} NA NA NA\n"),
        };
        let fit_text = line("semilog", linear_fit(&xs, &ys)) + &line("cuberoot", linear_fit(&cube, &ys));
        let fit_path = out_dir.join(format!("{base}.fit"));
        fs::write(&fit_path, fit_text)?;
        written.push(dat_path);
        written.push(fit_path);
    }
    Ok(written)
}
