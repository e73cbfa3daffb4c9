//! Independent checks: fine reference solve, closed-form errors, the SVD
//! n-width oracle and the property suite.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::coefficient::{CellCoefficients, CoefficientField, SourceField, SplitMix64};
use crate::error::{MsgfemError, Result};
use crate::fem::assembly::{assemble_energy_scaled, assemble_load, cell_nodes, energy_norm, l2_norm};
use crate::fem::mesh::{transfer, StructuredMesh};
use crate::fem::solve::{relative_residual, solve_spd_with, BandCholesky, SolverOptions};
use crate::fem::sparse::SymmetricSparseOperator;
use crate::harness::Pipeline;
use crate::local::{HarmonicExtension, LocalProblem};

/// Largest harmonic-space dimension the dense oracle accepts.
pub const ORACLE_MAX_DIM: usize = 2000;

/// Fine-scale Galerkin solution with the operator and load it came from,
/// all indexed by global node.
#[derive(Debug, Clone)]
pub struct FineSolution {
    pub op: SymmetricSparseOperator,
    pub load: Vec<f64>,
    pub u: Vec<f64>,
    /// Relative residual over the free dofs, see [`relative_residual`].
    pub residual: f64,
}

pub fn fine_reference(
    mesh: &StructuredMesh,
    coeff: &CellCoefficients,
    eps: f64,
    f: &SourceField,
    opts: &SolverOptions,
) -> Result<FineSolution> {
    fine_reference_scaled(mesh, coeff, eps, f, opts, 1.0)
}

fn fine_reference_scaled(
    mesh: &StructuredMesh,
    coeff: &CellCoefficients,
    eps: f64,
    f: &SourceField,
    opts: &SolverOptions,
    mass_scale: f64,
) -> Result<FineSolution> {
    let full = mesh.full_box();
    let op = assemble_energy_scaled(mesh, coeff, eps, &full, mass_scale)?;
    let load = assemble_load(mesh, f, &full);
    let dofs = mesh.global_dofs();
    let reduced = op.principal(dofs.free());
    let rhs = dofs.restrict(&load);
    let x = if f.is_zero() { vec![0.0; rhs.len()] } else { solve_spd_with(&reduced, &rhs, opts)? };
    let residual = relative_residual(&reduced, &x, &rhs);
    Ok(FineSolution { op, load, u: dofs.expand(&x), residual })
}

/// Errors of the fine solution for `A ≡ 1`, `f = sin(πx) sin(πy)` against
/// `u = f / (1 + 2π²ε²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormErrors {
    pub energy: f64,
    pub nodal_max: f64,
}

pub fn closed_form_errors(n: usize, eps: f64, opts: &SolverOptions) -> Result<ClosedFormErrors> {
    let mesh = StructuredMesh::new(n)?;
    let coeff = CellCoefficients::constant(&mesh, 1.0);
    let f = SourceField::SineProduct { amplitude: 1.0 };
    let fine = fine_reference(&mesh, &coeff, eps, &f, opts)?;
    let c = 1.0 / (1.0 + 2.0 * PI * PI * eps * eps);
    let exact = |x: f64, y: f64| c * (PI * x).sin() * (PI * y).sin();
    let mut nodal_max = 0.0f64;
    for id in 0..mesh.node_count() {
        let (ix, iy) = mesh.node_coords(id);
        let (x, y) = mesh.node_point(ix, iy);
        nodal_max = nodal_max.max((fine.u[id] - exact(x, y)).abs());
    }
    // 3-point Gauss per axis
    let g = (0.6f64).sqrt() / 2.0;
    let pts = [(0.5 - g, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + g, 5.0 / 18.0)];
    let h = mesh.h();
    let mut sum = 0.0;
    for cy in 0..n {
        for cx in 0..n {
            let v = cell_nodes(cx, cy).map(|(ix, iy)| fine.u[mesh.node_id(ix, iy)]);
            for &(sy, wy) in &pts {
                for &(sx, wx) in &pts {
                    let (x, y) = ((cx as f64 + sx) * h, (cy as f64 + sy) * h);
                    let uh = (1.0 - sx) * (1.0 - sy) * v[0] + sx * (1.0 - sy) * v[1] + sx * sy * v[2] + (1.0 - sx) * sy * v[3];
                    let dx = ((1.0 - sy) * (v[1] - v[0]) + sy * (v[2] - v[3])) / h;
                    let dy = ((1.0 - sx) * (v[3] - v[0]) + sx * (v[2] - v[1])) / h;
                    let ex = c * PI * (PI * x).cos() * (PI * y).sin();
                    let ey = c * PI * (PI * x).sin() * (PI * y).cos();
                    let e = uh - exact(x, y);
                    sum += wx * wy * (eps * eps * ((dx - ex).powi(2) + (dy - ey).powi(2)) + e * e);
                }
            }
        }
    }
    Ok(ClosedFormErrors { energy: (sum * h * h).sqrt(), nodal_max })
}

/// Singular values (descending, `count` of them) of the cut-off map
/// `v ↦ I_h(χ v)` from the harmonic space with `a_{ε,ω*}` into `V_{h,0}(ω)`
/// with `a_{ε,ω}`.
///
/// The domain side is whitened by the Cholesky factor of the Schur
/// complement, the range side by the Cholesky factor of the `ω` energy
/// operator restricted to the nodes where `χ > 0` off the outer boundary.
pub fn svd_nwidth_oracle(
    local: &LocalProblem,
    ext: &HarmonicExtension,
    chi: &[f64],
    count: usize,
) -> Result<Vec<f64>> {
    let m = ext.boundary_len();
    if m > ORACLE_MAX_DIM {
        return Err(MsgfemError::OracleSize(format!("{m} boundary dofs exceed {ORACLE_MAX_DIM}")));
    }
    let omega = local.subdomain();
    let star = local.oversampling();
    let range: Vec<usize> = (0..omega.node_count())
        .filter(|&k| {
            let (ix, iy) = omega.global_node(k);
            chi[k] > 0.0 && local.dofs().index_of(star.local_node(ix, iy)).is_some()
        })
        .collect();
    let columns = local.cutoff_columns(ext, chi);
    let p = DMatrix::from_fn(range.len(), m, |r, k| columns[k][range[r]]);
    let g = local.op_omega().dense_block(&range, &range);
    let g = DMatrix::from_fn(range.len(), range.len(), |a, b| g[a][b]);
    let mut sigma = whitened_singular_values(&p, ext.schur(), &g)?;
    sigma.resize(count, 0.0);
    Ok(sigma)
}

/// Singular values of `L_Gᵀ P L_S⁻ᵀ` where `S = L_S L_Sᵀ`, `G = L_G L_Gᵀ`.
fn whitened_singular_values(p: &DMatrix<f64>, s: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>> {
    if p.nrows() == 0 || p.ncols() == 0 {
        return Ok(vec![0.0; p.ncols()]);
    }
    let ls = s
        .clone()
        .cholesky()
        .ok_or_else(|| MsgfemError::Definiteness("Schur complement is not SPD".into()))?
        .unpack();
    let lg = g
        .clone()
        .cholesky()
        .ok_or_else(|| MsgfemError::Definiteness("range Gram matrix is not SPD".into()))?
        .unpack();
    let t = ls
        .solve_lower_triangular(&p.transpose())
        .ok_or_else(|| MsgfemError::Definiteness("singular Schur factor".into()))?
        .transpose();
    let w = lg.transpose() * t;
    let mut sv: Vec<f64> = w.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Cholesky success and the smallest Rayleigh quotient over 100 seeded
/// random vectors.
pub fn spd_check(op: &SymmetricSparseOperator, seed: u64) -> (bool, f64) {
    let chol = BandCholesky::factor(op).is_ok();
    let rng = SplitMix64::new(seed);
    let n = op.dim();
    let mut min_ritz = f64::INFINITY;
    for t in 0..100u64 {
        let stream = rng.split(t);
        let v: Vec<f64> = (0..n as u64).map(|k| stream.uniform(k) - 0.5).collect();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            min_ritz = min_ritz.min(op.form(&v, &v) / vv);
        }
    }
    (chol, min_ritz)
}

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub case: String,
    pub oracle: f64,
    pub method: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

pub fn relative_deviation(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-30)
}

impl OracleReport {
    /// Passes when the relative deviation is at most `tolerance`.
    pub fn agreement(case: &str, oracle: f64, method: f64, tolerance: f64) -> Self {
        let deviation = relative_deviation(oracle, method);
        Self::new(case, oracle, method, tolerance, deviation <= tolerance)
    }

    /// Passes when `method ≤ bound · (1 + tolerance)`.
    pub fn upper_bound(case: &str, bound: f64, method: f64, tolerance: f64) -> Self {
        Self::new(case, bound, method, tolerance, method <= bound * (1.0 + tolerance))
    }

    pub fn check(case: &str, oracle: f64, method: f64, tolerance: f64, passed: bool) -> Self {
        Self::new(case, oracle, method, tolerance, passed)
    }

    pub fn failure(case: &str, e: &MsgfemError) -> Self {
        let mut r = Self::new(case, f64::NAN, f64::NAN, 0.0, false);
        r.detail = e.to_string();
        r
    }

    fn new(case: &str, oracle: f64, method: f64, tolerance: f64, passed: bool) -> Self {
        Self {
            case: case.to_string(),
            oracle,
            method,
            deviation: relative_deviation(oracle, method),
            tolerance,
            passed,
            detail: String::new(),
        }
    }
}

pub fn reports_to_csv(reports: &[OracleReport]) -> String {
    let mut s = String::from("case,oracle,method,deviation,tolerance,pass,detail\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{},{}",
            r.case,
            r.oracle,
            r.method,
            r.deviation,
            r.tolerance,
            if r.passed { "pass" } else { "fail" },
            r.detail.replace([',', '\n'], ";")
        );
    }
    s
}

/// Small problem on which [`run_property_suite`] exercises every module.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub n: usize,
    pub per_axis: usize,
    pub ell: usize,
    pub eps: f64,
    pub nloc: usize,
    pub seed: u64,
    pub s: f64,
    pub contrast: f64,
    /// Oversampling layers of the decay check, run when `ε ≤ h`.
    pub trend_ell: Vec<usize>,
    /// Scale of the reaction term in the fine operator; `-1` is the
    /// sign-flip mutation.
    pub mass_scale: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n: 32,
            per_axis: 2,
            ell: 4,
            eps: 0.1,
            nloc: 6,
            seed: 42,
            s: 1.0 / 16.0,
            contrast: 100.0,
            trend_ell: vec![1, 2, 3, 4],
            mass_scale: 1.0,
        }
    }
}

/// Run every invariant check on one configuration; failures are data.
pub fn run_property_suite(cfg: &SuiteConfig) -> Vec<OracleReport> {
    let mut out = Vec::new();
    if let Err(e) = suite_body(cfg, &mut out) {
        out.push(OracleReport::failure("suite", &e));
    }
    out
}

fn suite_body(cfg: &SuiteConfig, out: &mut Vec<OracleReport>) -> Result<()> {
    let opts = SolverOptions::default();
    let mesh = StructuredMesh::new(cfg.n)?;
    let coeff = CoefficientField::generate_multiscale(cfg.seed, cfg.s, cfg.contrast)?.sample(&mesh);
    let f = SourceField::benchmark();

    let full = mesh.full_box();
    let dofs = mesh.global_dofs();
    let fine_op = assemble_energy_scaled(&mesh, &coeff, cfg.eps, &full, cfg.mass_scale)?.principal(dofs.free());
    let (chol, ritz) = spd_check(&fine_op, cfg.seed);
    out.push(OracleReport::check("fine.spd", 0.0, ritz, 0.0, chol && ritz > 0.0));
    let fine = match fine_reference_scaled(&mesh, &coeff, cfg.eps, &f, &opts, cfg.mass_scale) {
        Ok(fine) => fine,
        Err(e) => {
            out.push(OracleReport::failure("fine.solve", &e));
            return Ok(());
        }
    };
    out.push(OracleReport::upper_bound("fine.residual", 1e-10, fine.residual, 0.0));
    let unorm = energy_norm(&fine.op, &fine.u)?;
    out.push(OracleReport::upper_bound("fine.stability", l2_norm(&mesh, &f, &full), unorm, 1e-12));

    let pipeline = Pipeline::build(&mesh, &coeff, &f, cfg.eps, cfg.per_axis, cfg.ell, cfg.nloc)?;
    out.push(OracleReport::upper_bound("pu.sum", 1e-13, pipeline.pu.sum_defect(&mesh), 0.0));

    let mut harmonic = 0.0f64;
    let mut oracle_dev = 0.0f64;
    for sol in &pipeline.locals {
        for v in &sol.basis.vectors {
            harmonic = harmonic.max(sol.local.harmonic_residual(v));
        }
        if sol.local.boundary().is_empty() {
            continue;
        }
        let ext = sol.local.build_extension()?;
        let k = ext.boundary_len().min(10);
        let sigma = svd_nwidth_oracle(&sol.local, &ext, pipeline.pu.local(sol.local.index()), k)?;
        let basis = sol.local.solve_eigenproblem(&ext, pipeline.pu.local(sol.local.index()), k)?;
        for (s, l) in sigma.iter().zip(&basis.eigenvalues) {
            oracle_dev = oracle_dev.max(relative_deviation(*s, l.max(0.0).sqrt()));
        }
    }
    out.push(OracleReport::upper_bound("local.harmonic", 1e-10, harmonic, 0.0));
    out.push(OracleReport::upper_bound("local.oracle", 1e-8, oracle_dev, 0.0));

    let ev = pipeline.evaluate(&fine, cfg.nloc)?;
    let rep = &ev.report;
    let worst_local = rep
        .local_errors
        .iter()
        .zip(&rep.local_bounds)
        .filter_map(|(e, b)| b.map(|b| if b > 0.0 { e / b } else if *e > 0.0 { f64::INFINITY } else { 0.0 }))
        .fold(0.0, f64::max);
    out.push(OracleReport::upper_bound("local.bound", 1.0, worst_local, 1e-8));
    out.push(OracleReport::upper_bound("global.bound", rep.bound_thm21, rep.err_energy, 1e-8));
    out.push(OracleReport::upper_bound("coarse.galerkin", 1e-10, rep.galerkin_orthogonality, 0.0));

    let rng = SplitMix64::new(cfg.seed).split(7);
    let mut worst = f64::INFINITY;
    if !ev.space.is_empty() {
        for t in 0..5u64 {
            let stream = rng.split(t);
            let dc: Vec<f64> = ev
                .space
                .retained()
                .iter()
                .enumerate()
                .map(|(k, &c)| rep.err_energy * (stream.uniform(k as u64) - 0.5) / ev.space.columns()[c].norm)
                .collect();
            let moved = ev.space.combine(&mesh, &ev.gfem.solution, &dc);
            let d: Vec<f64> = fine.u.iter().zip(&moved).map(|(a, b)| a - b).collect();
            worst = worst.min(energy_norm(&fine.op, &d)?);
        }
    }
    out.push(OracleReport::check(
        "coarse.best_approximation",
        rep.err_energy,
        worst,
        1e-10,
        worst >= rep.err_energy * (1.0 - 1e-10),
    ));

    let trace = (0..mesh.node_count())
        .filter(|&id| {
            let (ix, iy) = mesh.node_coords(id);
            mesh.is_boundary_node(ix, iy)
        })
        .map(|id| ev.gfem.solution[id].abs())
        .fold(0.0, f64::max);
    out.push(OracleReport::check("coarse.trace", 0.0, trace, 0.0, trace == 0.0));

    let mut leak = 0.0f64;
    for col in ev.space.columns() {
        let w = pipeline.cover.subdomain(col.subdomain);
        let global = transfer(&col.support, &col.values, &full);
        for (k, v) in global.iter().enumerate() {
            let (ix, iy) = mesh.node_coords(k);
            if !w.has_interior_node(ix, iy) && !(mesh.is_boundary_node(ix, iy) && w.contains_node(ix, iy)) {
                leak = leak.max(v.abs());
            }
        }
    }
    out.push(OracleReport::check("coarse.support", 0.0, leak, 0.0, leak == 0.0));

    if cfg.eps <= mesh.h() && cfg.trend_ell.len() >= 2 {
        let mut errs = Vec::new();
        for &ell in &cfg.trend_ell {
            let p = Pipeline::build(&mesh, &coeff, &f, cfg.eps, cfg.per_axis, ell, 0)?;
            errs.push(p.evaluate(&fine, 0)?.report.err_energy);
        }
        let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
        out.push(OracleReport::check("trend.oversampling", errs[0], errs[errs.len() - 1], 0.0, decreasing));
    }
    Ok(())
}
